#pragma once

#include <cstddef>
#include <vector>

#include "cardioquant/image.hpp"

namespace cardioquant {

/// Mean over pixels of -(y log(p) + (1-y) log(1-p)), p clamped to
/// [1e-7, 1 - 1e-7]. Dimensions must match.
double bce_loss(const BinaryMask& truth, const ProbMap& pred);

/// 1 - (2*sum(y*p) + 1) / (sum(y) + sum(p) + 1). The +1 smoothing makes
/// empty-vs-empty a perfect score of 0.
double dice_loss(const BinaryMask& truth, const ProbMap& pred);

/// Fraction of pixels where the two masks agree.
double pixel_accuracy(const BinaryMask& truth, const BinaryMask& pred);

/// Dice / IoU carry a both-empty flag: two empty masks score 1.0 by
/// convention (perfect agreement on absence) instead of the raw 0/0.
struct OverlapScore {
    double value = 0.0;
    bool both_empty = false;
};

/// 2|A n B| / (|A| + |B|), unsmoothed.
OverlapScore dice_coefficient(const BinaryMask& a, const BinaryMask& b);

/// |A n B| / |A u B| (Jaccard index).
OverlapScore iou(const BinaryMask& a, const BinaryMask& b);

struct ErrorStats {
    double mean_abs_error = 0.0;
    double std_abs_error = 0.0;  // population standard deviation
    std::size_t n = 0;
};

/// Mean and population standard deviation of |manual_i - auto_i|.
ErrorStats error_stats(const std::vector<double>& manual, const std::vector<double>& automatic);

}  // namespace cardioquant
