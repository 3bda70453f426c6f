#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cardioquant/image.hpp"
#include "cardioquant/video.hpp"

namespace cardioquant::synth {

/// Dims the left x_frac of the frame by the given factor, imitating partial
/// obstruction of the field of view.
struct Occlusion {
    double x_frac = 0.3;
    double dim = 0.5;
};

/// A beating ellipse: both semi-axes scale by s(t) = 1 + m*sin(2*pi*f*t + phase).
struct SynthConfig {
    int width = 128;
    int height = 128;
    double fps = 20.0;
    double duration_s = 3.0;
    double center_x = 64.0;
    double center_y = 64.0;
    double a0 = 30.0;  // base semi-major axis, pixels
    double b0 = 20.0;  // base semi-minor axis, pixels
    double modulation = 0.15;  // m in [0, 1)
    double beat_freq = 2.0;    // Hz, must stay below fps/2
    double phase = 0.0;        // radians; lets tests place extrema on or off the frame grid
    double orientation = 0.0;  // radians
    double texture_contrast = 25.0;  // low-frequency sinusoidal grid amplitude
    double noise_sigma = 8.0;        // Gaussian pixel noise
    std::optional<Occlusion> occlusion;
    std::uint64_t seed = 0;
    std::string video_id = "synth";
};

struct AnalyticIndices {
    double ef_pct = 0.0;   // 100 * (1 - ((1-m)/(1+m))^2)
    double fs = 0.0;       // 2m / (1+m)
    double hr_bpm = 0.0;   // 60 * f
    std::vector<double> areas;  // exact per-frame pi*a(t)*b(t)
};

struct SynthResult {
    VideoSequence video;
    std::vector<BinaryMask> masks;  // exact pixel-center rasterization, pre-noise
    AnalyticIndices truth;
};

/// Renders the beating-ellipse video with exact masks and closed-form truth.
/// Interior mean 60 on background mean 200, plus a static sinusoidal texture
/// and per-frame seeded Gaussian noise. Masks are geometry only: noise and
/// texture never touch them.
SynthResult generate(const SynthConfig& cfg);

/// Rasterizes one ellipse mask (pixel center strictly inside or on the
/// boundary). Shared with the geometry tests.
BinaryMask ellipse_mask(int width, int height, double cx, double cy, double a, double b,
                        double orientation);

/// Parameter ranges for the randomized training set.
struct DatasetRanges {
    int width = 64;
    int height = 64;
    double a0_min = 14.0, a0_max = 24.0;
    double b0_min = 9.0, b0_max = 17.0;
    double modulation_min = 0.05, modulation_max = 0.25;
    double noise_min = 4.0, noise_max = 12.0;
    double texture_min = 10.0, texture_max = 35.0;
};

/// n frame/mask pairs sampled across randomized centers, sizes, orientations,
/// beat phases and noise levels. Deterministic per seed; every mask is
/// nonempty and fully inside the frame.
std::vector<std::pair<GrayFrame, BinaryMask>> make_training_set(const DatasetRanges& ranges, int n,
                                                                std::uint64_t seed);

/// Writes manifest + frame PGMs + mask PGMs + truth JSON into `dir`.
/// Masks follow the frame numbering with an "m_%04d.pgm" pattern.
void write_synth_video(const SynthResult& result, const std::filesystem::path& dir);

/// Writes a training set as dir/frames/img_%04d.pgm + dir/masks/img_%04d.pgm.
void write_training_set(const std::vector<std::pair<GrayFrame, BinaryMask>>& pairs,
                        const std::filesystem::path& dir);

/// Loads a training set written by write_training_set (or any directory pair
/// with matching file names under frames/ and masks/).
std::vector<std::pair<GrayFrame, BinaryMask>> load_training_set(const std::filesystem::path& dir);

}  // namespace cardioquant::synth
