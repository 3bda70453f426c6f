#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "cardioquant/image.hpp"
#include "cardioquant/video.hpp"

namespace cardioquant {

/// Foreground where pixel <= t (the ventricle interior is dark in bright-field).
BinaryMask manual_threshold(const GrayFrame& frame, std::uint8_t t);

/// Otsu's threshold: t maximizing the between-class variance, ties broken by
/// the smallest t; the comparison runs in exact integer arithmetic. The mask
/// is manual_threshold(frame, t). Throws on constant frames.
std::pair<int, BinaryMask> otsu_threshold(const GrayFrame& frame);

/// Canny edges: 5x5 Gaussian blur (sigma 1.0), Sobel gradients, non-maximum
/// suppression along the quantized gradient direction, double-threshold
/// hysteresis. low/high are fractions of the maximum gradient magnitude,
/// 0 <= low < high <= 1.
BinaryMask canny_edges(const GrayFrame& frame, double low, double high);

/// Background = per-pixel temporal median over all frames (mean of the two
/// middle values for even counts); mask_i true where |frame_i - background| > tau.
/// Requires at least 3 frames.
std::vector<BinaryMask> background_subtract(const VideoSequence& seq, std::uint8_t tau);

struct KMeansResult {
    LabelMap labels;                      // sorted so cluster ids ascend with centroid intensity
    std::vector<double> centroids;        // ascending
    std::vector<double> inertia_history;  // sum of squared distances per Lloyd iteration
};

/// 1-D k-means on pixel intensities. Centroids start at evenly spaced
/// quantiles; Lloyd iterations run until assignments are stable or 100
/// iterations. Deterministic for a given (frame, k, seed).
KMeansResult kmeans_intensity_full(const GrayFrame& frame, int k, std::uint64_t seed);
LabelMap kmeans_intensity(const GrayFrame& frame, int k, std::uint64_t seed);

struct GmmResult {
    LabelMap labels;  // sorted so component ids ascend with mean intensity
    std::vector<double> means;
    std::vector<double> variances;
    std::vector<double> weights;
    std::vector<double> loglik_history;  // total log-likelihood after each EM iteration
};

/// 1-D Gaussian mixture fit by EM (scalar variances, floor 1e-4), initialized
/// from kmeans_intensity; stops when the log-likelihood improves by < 1e-5 or
/// after 100 iterations. Labels are the argmax responsibility.
GmmResult gmm_segment_full(const GrayFrame& frame, int k, std::uint64_t seed);
LabelMap gmm_segment(const GrayFrame& frame, int k, std::uint64_t seed);

}  // namespace cardioquant
