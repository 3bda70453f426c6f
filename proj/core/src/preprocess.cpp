#include "cardioquant/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace cardioquant {

GrayFrame crop_roi(const GrayFrame& frame, const Rect& roi) {
    if (roi.w <= 0 || roi.h <= 0) throw std::invalid_argument("crop_roi: zero-area roi");
    if (roi.x < 0 || roi.y < 0 || roi.x + roi.w > frame.width || roi.y + roi.h > frame.height)
        throw std::invalid_argument("crop_roi: roi out of bounds");

    GrayFrame out(roi.w, roi.h);
    for (int y = 0; y < roi.h; ++y) {
        const auto* src = &frame.pixels[static_cast<std::size_t>(roi.y + y) * frame.width + roi.x];
        std::copy(src, src + roi.w, &out.pixels[static_cast<std::size_t>(y) * roi.w]);
    }
    return out;
}

GrayFrame sharpen(const GrayFrame& frame) {
    if (frame.width < 3 || frame.height < 3)
        throw std::invalid_argument("sharpen: frame smaller than the 3x3 kernel");

    const int w = frame.width, h = frame.height;
    GrayFrame out(w, h);
    auto clamp_coord = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };

    for (int y = 0; y < h; ++y) {
        const int ym = clamp_coord(y - 1, h), yp = clamp_coord(y + 1, h);
        for (int x = 0; x < w; ++x) {
            const int xm = clamp_coord(x - 1, w), xp = clamp_coord(x + 1, w);
            const double v = 5.0 * frame.at(x, y) - frame.at(x, ym) - frame.at(x, yp) -
                             frame.at(xm, y) - frame.at(xp, y);
            const double rounded = std::floor(v + 0.5);  // half-up
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp(rounded, 0.0, 255.0));
        }
    }
    return out;
}

namespace detail {

std::array<std::uint8_t, 256> clahe_tile_mapping(const std::array<std::uint32_t, 256>& hist,
                                                 double clip) {
    double total = 0.0;
    for (auto c : hist) total += c;
    if (total <= 0.0) return {};  // empty tile cannot occur for valid frames

    // Normalized histogram; clip level is clip/256 of the tile mass.
    std::array<double, 256> h{};
    for (int i = 0; i < 256; ++i) h[i] = hist[i] / total;

    if (std::isfinite(clip)) {
        const double limit = clip / 256.0;
        double excess = 0.0;
        for (auto& b : h) {
            if (b > limit) {
                excess += b - limit;
                b = limit;
            }
        }
        const double add = excess / 256.0;  // single-pass uniform redistribution
        for (auto& b : h) b += add;
    }

    // cdf_min = CDF at the first non-empty bin.
    std::array<double, 256> cdf{};
    double acc = 0.0;
    double cdf_min = 0.0;
    bool seen = false;
    for (int i = 0; i < 256; ++i) {
        acc += h[i];
        cdf[i] = acc;
        if (!seen && h[i] > 0.0) {
            cdf_min = acc;
            seen = true;
        }
    }

    std::array<std::uint8_t, 256> lut{};
    const double denom = 1.0 - cdf_min;
    for (int v = 0; v < 256; ++v) {
        double mapped = 0.0;
        if (denom > 1e-12) mapped = std::floor(255.0 * (cdf[v] - cdf_min) / denom + 0.5);
        lut[v] = static_cast<std::uint8_t>(std::clamp(mapped, 0.0, 255.0));
    }
    return lut;
}

}  // namespace detail

GrayFrame clahe(const GrayFrame& frame, int tiles, double clip) {
    if (tiles < 1) throw std::invalid_argument("clahe: tiles must be >= 1");
    if (clip < 1.0) throw std::invalid_argument("clahe: clip must be >= 1.0");
    if (frame.width < tiles || frame.height < tiles)
        throw std::invalid_argument("clahe: frame smaller than the tile grid");

    const int w = frame.width, h = frame.height, t = tiles;

    // Tile boundaries (floor partition) and centers.
    std::vector<int> xs(t + 1), ys(t + 1);
    for (int i = 0; i <= t; ++i) {
        xs[i] = static_cast<int>(static_cast<long long>(i) * w / t);
        ys[i] = static_cast<int>(static_cast<long long>(i) * h / t);
    }
    std::vector<double> cx(t), cy(t);
    for (int i = 0; i < t; ++i) {
        cx[i] = 0.5 * (xs[i] + xs[i + 1] - 1);
        cy[i] = 0.5 * (ys[i] + ys[i + 1] - 1);
    }

    // Per-tile lookup tables.
    std::vector<std::array<std::uint8_t, 256>> luts(static_cast<std::size_t>(t) * t);
    for (int ty = 0; ty < t; ++ty) {
        for (int tx = 0; tx < t; ++tx) {
            std::array<std::uint32_t, 256> hist{};
            for (int y = ys[ty]; y < ys[ty + 1]; ++y)
                for (int x = xs[tx]; x < xs[tx + 1]; ++x) ++hist[frame.at(x, y)];
            luts[static_cast<std::size_t>(ty) * t + tx] = detail::clahe_tile_mapping(hist, clip);
        }
    }

    // Locates the tile pair bracketing coordinate v along one axis and the
    // interpolation weight toward the second tile; edges replicate.
    auto bracket = [](const std::vector<double>& centers, double v, int& lo, double& f) {
        const int t_ = static_cast<int>(centers.size());
        if (v <= centers[0]) {
            lo = 0;
            f = 0.0;
            return;
        }
        if (v >= centers[t_ - 1]) {
            lo = t_ - 1;
            f = 0.0;
            return;
        }
        int i = 0;
        while (v >= centers[i + 1]) ++i;
        lo = i;
        f = (v - centers[i]) / (centers[i + 1] - centers[i]);
    };

    GrayFrame out(w, h);
    for (int y = 0; y < h; ++y) {
        int ty0;
        double fy;
        bracket(cy, y, ty0, fy);
        const int ty1 = std::min(ty0 + 1, t - 1);
        for (int x = 0; x < w; ++x) {
            int tx0;
            double fx;
            bracket(cx, x, tx0, fx);
            const int tx1 = std::min(tx0 + 1, t - 1);
            const std::uint8_t v = frame.at(x, y);
            const double m00 = luts[static_cast<std::size_t>(ty0) * t + tx0][v];
            const double m01 = luts[static_cast<std::size_t>(ty0) * t + tx1][v];
            const double m10 = luts[static_cast<std::size_t>(ty1) * t + tx0][v];
            const double m11 = luts[static_cast<std::size_t>(ty1) * t + tx1][v];
            const double mapped = (1.0 - fy) * ((1.0 - fx) * m00 + fx * m01) +
                                  fy * ((1.0 - fx) * m10 + fx * m11);
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(mapped + 0.5), 0.0, 255.0));
        }
    }
    return out;
}

GrayFrame apply_pipeline(const GrayFrame& frame, const PreprocessConfig& cfg) {
    GrayFrame cur = frame;
    if (cfg.roi) cur = crop_roi(cur, *cfg.roi);
    if (cfg.sharpen) cur = sharpen(cur);
    if (cfg.clahe) cur = clahe(cur, cfg.clahe_tiles, cfg.clahe_clip);
    return cur;
}

}  // namespace cardioquant
