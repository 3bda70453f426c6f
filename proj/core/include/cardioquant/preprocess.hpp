#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "cardioquant/image.hpp"

namespace cardioquant {

struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
};

struct PreprocessConfig {
    std::optional<Rect> roi;
    bool sharpen = false;
    bool clahe = false;
    int clahe_tiles = 8;       // grid count per axis
    double clahe_clip = 2.0;   // relative clip factor, >= 1; infinity disables clipping
};

/// Copies the roi sub-rectangle. The roi must lie fully inside the frame and
/// have positive area.
GrayFrame crop_roi(const GrayFrame& frame, const Rect& roi);

/// 3x3 kernel [[0,-1,0],[-1,5,-1],[0,-1,0]] in floating point with
/// edge-replicate padding; rounded half-up and clamped to [0,255].
GrayFrame sharpen(const GrayFrame& frame);

/// Contrast-limited adaptive histogram equalization over a tiles x tiles grid
/// with bilinear interpolation between the four surrounding tile mappings
/// (edge tiles replicate). clip is relative to the uniform bin level
/// tile_pixels/256; pass infinity for plain (unclipped) AHE.
GrayFrame clahe(const GrayFrame& frame, int tiles, double clip);

/// Stages in fixed order: crop -> sharpen -> CLAHE. Disabled stages are identity.
GrayFrame apply_pipeline(const GrayFrame& frame, const PreprocessConfig& cfg);

namespace detail {

/// Per-tile lookup table from a 256-bin histogram: clip at clip/256 of the
/// tile mass, redistribute the excess uniformly, then map through the
/// normalized CDF as round(255 * (cdf(v) - cdf_min) / (1 - cdf_min)).
/// Works on the normalized histogram so equal distributions yield equal
/// mappings regardless of tile pixel count. Exposed for oracle tests.
std::array<std::uint8_t, 256> clahe_tile_mapping(const std::array<std::uint32_t, 256>& hist,
                                                 double clip);

}  // namespace detail

}  // namespace cardioquant
