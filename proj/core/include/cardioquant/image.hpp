#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace cardioquant {

/// 8-bit single-channel raster, row-major, 0 = black, 255 = white.
struct GrayFrame {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    GrayFrame() = default;
    GrayFrame(int w, int h, std::uint8_t fill = 0) : width(w), height(h) {
        if (w < 1 || h < 1) throw std::invalid_argument("GrayFrame: dimensions must be >= 1");
        pixels.assign(static_cast<std::size_t>(w) * h, fill);
    }

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }

    bool operator==(const GrayFrame&) const = default;
};

/// Per-pixel ventricle membership. true/1 = foreground (ventricle).
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // 0 or 1

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false) : width(w), height(h) {
        if (w < 1 || h < 1) throw std::invalid_argument("BinaryMask: dimensions must be >= 1");
        bits.assign(static_cast<std::size_t>(w) * h, fill ? 1 : 0);
    }

    std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return bits.size(); }

    /// Number of foreground pixels.
    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : bits) n += b;
        return n;
    }

    bool operator==(const BinaryMask&) const = default;
};

/// Small-integer cluster assignment per pixel; labels in [0, k).
struct LabelMap {
    int width = 0;
    int height = 0;
    int k = 1;
    std::vector<int> labels;

    LabelMap() = default;
    LabelMap(int w, int h, int k_) : width(w), height(h), k(k_) {
        if (w < 1 || h < 1) throw std::invalid_argument("LabelMap: dimensions must be >= 1");
        if (k_ < 1) throw std::invalid_argument("LabelMap: k must be >= 1");
        labels.assign(static_cast<std::size_t>(w) * h, 0);
    }

    int& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
    int at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

/// Predicted foreground probability per pixel, values in [0, 1].
struct ProbMap {
    int width = 0;
    int height = 0;
    std::vector<float> probs;

    ProbMap() = default;
    ProbMap(int w, int h, float fill = 0.0f) : width(w), height(h) {
        if (w < 1 || h < 1) throw std::invalid_argument("ProbMap: dimensions must be >= 1");
        probs.assign(static_cast<std::size_t>(w) * h, fill);
    }

    float& at(int x, int y) { return probs[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return probs[static_cast<std::size_t>(y) * width + x]; }
};

inline bool same_dims(int w1, int h1, int w2, int h2) { return w1 == w2 && h1 == h2; }

}  // namespace cardioquant
