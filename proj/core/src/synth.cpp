#include "cardioquant/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "cardioquant/pgm.hpp"
#include "cardioquant/rng.hpp"

namespace cardioquant::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInteriorMean = 60.0;
constexpr double kBackgroundMean = 200.0;

// Half-extents of the axis-aligned bounding box of a rotated ellipse.
std::pair<double, double> ellipse_bbox(double a, double b, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return {std::sqrt(a * a * c * c + b * b * s * s), std::sqrt(a * a * s * s + b * b * c * c)};
}

}  // namespace

BinaryMask ellipse_mask(int width, int height, double cx, double cy, double a, double b,
                        double orientation) {
    BinaryMask m(width, height);
    const double c = std::cos(orientation), s = std::sin(orientation);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double u = dx * c + dy * s;      // along the major axis
            const double v = -dx * s + dy * c;     // along the minor axis
            if ((u * u) / (a * a) + (v * v) / (b * b) <= 1.0) m.at(x, y) = 1;
        }
    return m;
}

SynthResult generate(const SynthConfig& cfg) {
    if (cfg.width < 1 || cfg.height < 1) throw std::invalid_argument("synth: bad dimensions");
    if (!(cfg.fps > 0.0) || !(cfg.duration_s > 0.0)) throw std::invalid_argument("synth: bad fps/duration");
    if (!(cfg.modulation >= 0.0 && cfg.modulation < 1.0))
        throw std::invalid_argument("synth: modulation must be in [0, 1)");
    if (!(cfg.beat_freq < cfg.fps / 2.0))
        throw std::invalid_argument("synth: beat frequency must stay below fps/2 (Nyquist)");
    if (!(cfg.a0 >= cfg.b0 && cfg.b0 > 0.0)) throw std::invalid_argument("synth: need a0 >= b0 > 0");

    const double s_max = 1.0 + cfg.modulation;
    const auto [ext_x, ext_y] = ellipse_bbox(cfg.a0 * s_max, cfg.b0 * s_max, cfg.orientation);
    if (cfg.center_x - ext_x < 0.0 || cfg.center_x + ext_x > cfg.width - 1 ||
        cfg.center_y - ext_y < 0.0 || cfg.center_y + ext_y > cfg.height - 1)
        throw std::invalid_argument("synth: ellipse exceeds the frame at full dilation");

    const int n_frames = std::max(1, static_cast<int>(std::lround(cfg.duration_s * cfg.fps)));
    const std::size_t npx = static_cast<std::size_t>(cfg.width) * cfg.height;

    // Static low-frequency texture; phases derived from the seed.
    Rng texture_rng(mix_seed(cfg.seed, 0x7e87));
    const double lam_x = std::max(16.0, cfg.width / 4.0);
    const double lam_y = std::max(16.0, cfg.height / 4.0);
    const double ph_x = texture_rng.uniform(0.0, 2.0 * kPi);
    const double ph_y = texture_rng.uniform(0.0, 2.0 * kPi);
    std::vector<double> texture(npx);
    for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x)
            texture[static_cast<std::size_t>(y) * cfg.width + x] =
                cfg.texture_contrast * std::sin(2.0 * kPi * x / lam_x + ph_x) *
                std::sin(2.0 * kPi * y / lam_y + ph_y);

    SynthResult out;
    out.video.video_id = cfg.video_id;
    out.video.fps = cfg.fps;
    out.video.frames.reserve(n_frames);
    out.masks.reserve(n_frames);
    out.truth.areas.reserve(n_frames);

    for (int i = 0; i < n_frames; ++i) {
        const double t = i / cfg.fps;
        const double scale = 1.0 + cfg.modulation * std::sin(2.0 * kPi * cfg.beat_freq * t + cfg.phase);
        const double a = cfg.a0 * scale, b = cfg.b0 * scale;
        out.truth.areas.push_back(kPi * a * b);

        BinaryMask mask =
            ellipse_mask(cfg.width, cfg.height, cfg.center_x, cfg.center_y, a, b, cfg.orientation);

        GrayFrame frame(cfg.width, cfg.height);
        Rng noise_rng(mix_seed(cfg.seed, 0x6e00 + static_cast<std::uint64_t>(i)));
        for (std::size_t p = 0; p < npx; ++p) {
            double v = (mask.bits[p] ? kInteriorMean : kBackgroundMean) + texture[p];
            if (cfg.occlusion) {
                const int x = static_cast<int>(p % static_cast<std::size_t>(cfg.width));
                if (x < cfg.occlusion->x_frac * cfg.width) v *= cfg.occlusion->dim;
            }
            if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * noise_rng.normal();
            frame.pixels[p] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
        }

        out.video.frames.push_back(std::move(frame));
        out.masks.push_back(std::move(mask));
    }

    const double m = cfg.modulation;
    const double ratio = (1.0 - m) / (1.0 + m);
    out.truth.ef_pct = 100.0 * (1.0 - ratio * ratio);
    out.truth.fs = 2.0 * m / (1.0 + m);
    out.truth.hr_bpm = 60.0 * cfg.beat_freq;
    return out;
}

std::vector<std::pair<GrayFrame, BinaryMask>> make_training_set(const DatasetRanges& ranges, int n,
                                                                std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("make_training_set: n must be >= 1");
    if (!(ranges.a0_max >= ranges.a0_min && ranges.b0_max >= ranges.b0_min))
        throw std::invalid_argument("make_training_set: empty axis ranges");

    std::vector<std::pair<GrayFrame, BinaryMask>> pairs;
    pairs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(mix_seed(seed, 0xd5e7 + static_cast<std::uint64_t>(i)));

        SynthConfig cfg;
        cfg.width = ranges.width;
        cfg.height = ranges.height;
        cfg.a0 = rng.uniform(ranges.a0_min, ranges.a0_max);
        cfg.b0 = rng.uniform(ranges.b0_min, std::min(ranges.b0_max, cfg.a0));
        cfg.modulation = rng.uniform(ranges.modulation_min, ranges.modulation_max);
        cfg.noise_sigma = rng.uniform(ranges.noise_min, ranges.noise_max);
        cfg.texture_contrast = rng.uniform(ranges.texture_min, ranges.texture_max);
        cfg.orientation = rng.uniform(0.0, kPi);
        cfg.phase = rng.uniform(0.0, 2.0 * kPi);
        cfg.fps = 20.0;
        cfg.duration_s = 1.0 / cfg.fps;  // a single frame at the drawn phase
        cfg.beat_freq = 2.0;
        cfg.seed = rng.next_u64();

        // Center jitter constrained so the fully dilated ellipse stays inside.
        const double s_max = 1.0 + cfg.modulation;
        const auto [ext_x, ext_y] = ellipse_bbox(cfg.a0 * s_max, cfg.b0 * s_max, cfg.orientation);
        const double margin = 1.0;
        cfg.center_x = rng.uniform(ext_x + margin, ranges.width - 1 - ext_x - margin);
        cfg.center_y = rng.uniform(ext_y + margin, ranges.height - 1 - ext_y - margin);

        SynthResult one = generate(cfg);
        pairs.emplace_back(std::move(one.video.frames.front()), std::move(one.masks.front()));
    }
    return pairs;
}

void write_synth_video(const SynthResult& result, const std::filesystem::path& dir) {
    write_sequence(result.video, dir, "f_%04d.pgm");
    for (std::size_t i = 0; i < result.masks.size(); ++i)
        write_mask_pgm_file(result.masks[i], dir / format_frame_name("m_%04d.pgm", static_cast<int>(i)));

    nlohmann::json j;
    j["ef_pct"] = result.truth.ef_pct;
    j["fs"] = result.truth.fs;
    j["hr_bpm"] = result.truth.hr_bpm;
    j["areas"] = result.truth.areas;
    std::ofstream out(dir / "truth.json", std::ios::trunc);
    if (!out) throw std::runtime_error("synth: cannot write truth.json in " + dir.string());
    out << j.dump(2) << "\n";
}

void write_training_set(const std::vector<std::pair<GrayFrame, BinaryMask>>& pairs,
                        const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "frames");
    std::filesystem::create_directories(dir / "masks");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto name = format_frame_name("img_%04d.pgm", static_cast<int>(i));
        write_pgm_file(pairs[i].first, dir / "frames" / name);
        write_mask_pgm_file(pairs[i].second, dir / "masks" / name);
    }
}

std::vector<std::pair<GrayFrame, BinaryMask>> load_training_set(const std::filesystem::path& dir) {
    const auto frames_dir = dir / "frames";
    const auto masks_dir = dir / "masks";
    if (!std::filesystem::is_directory(frames_dir) || !std::filesystem::is_directory(masks_dir))
        throw std::runtime_error("dataset: expected frames/ and masks/ under " + dir.string());

    std::vector<std::filesystem::path> names;
    for (const auto& e : std::filesystem::directory_iterator(frames_dir))
        if (e.path().extension() == ".pgm") names.push_back(e.path().filename());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw std::runtime_error("dataset: no PGM frames in " + frames_dir.string());

    std::vector<std::pair<GrayFrame, BinaryMask>> pairs;
    pairs.reserve(names.size());
    for (const auto& name : names) {
        const auto mask_path = masks_dir / name;
        if (!std::filesystem::exists(mask_path))
            throw std::runtime_error("dataset: missing mask for " + name.string());
        GrayFrame f = read_pgm_file(frames_dir / name);
        BinaryMask m = read_mask_pgm_file(mask_path);
        if (f.width != m.width || f.height != m.height)
            throw std::runtime_error("dataset: frame/mask dimensions differ for " + name.string());
        pairs.emplace_back(std::move(f), std::move(m));
    }
    return pairs;
}

}  // namespace cardioquant::synth
