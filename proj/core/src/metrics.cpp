#include "cardioquant/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cardioquant {

namespace {

void require_same_dims(int w1, int h1, int w2, int h2, const char* who) {
    if (w1 != w2 || h1 != h2) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

}  // namespace

double bce_loss(const BinaryMask& truth, const ProbMap& pred) {
    require_same_dims(truth.width, truth.height, pred.width, pred.height, "bce_loss");
    constexpr double eps = 1e-7;
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.bits.size(); ++i) {
        const double p = std::clamp(static_cast<double>(pred.probs[i]), eps, 1.0 - eps);
        const double y = truth.bits[i];
        sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    return sum / static_cast<double>(truth.bits.size());
}

double dice_loss(const BinaryMask& truth, const ProbMap& pred) {
    require_same_dims(truth.width, truth.height, pred.width, pred.height, "dice_loss");
    double inter = 0.0, sum_y = 0.0, sum_p = 0.0;
    for (std::size_t i = 0; i < truth.bits.size(); ++i) {
        const double p = pred.probs[i];
        const double y = truth.bits[i];
        inter += y * p;
        sum_y += y;
        sum_p += p;
    }
    return 1.0 - (2.0 * inter + 1.0) / (sum_y + sum_p + 1.0);
}

double pixel_accuracy(const BinaryMask& truth, const BinaryMask& pred) {
    require_same_dims(truth.width, truth.height, pred.width, pred.height, "pixel_accuracy");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < truth.bits.size(); ++i) agree += truth.bits[i] == pred.bits[i];
    return static_cast<double>(agree) / static_cast<double>(truth.bits.size());
}

OverlapScore dice_coefficient(const BinaryMask& a, const BinaryMask& b) {
    require_same_dims(a.width, a.height, b.width, b.height, "dice_coefficient");
    std::size_t inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] & b.bits[i];
        na += a.bits[i];
        nb += b.bits[i];
    }
    if (na + nb == 0) return {1.0, true};
    return {2.0 * static_cast<double>(inter) / static_cast<double>(na + nb), false};
}

OverlapScore iou(const BinaryMask& a, const BinaryMask& b) {
    require_same_dims(a.width, a.height, b.width, b.height, "iou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] & b.bits[i];
        uni += a.bits[i] | b.bits[i];
    }
    if (uni == 0) return {1.0, true};
    return {static_cast<double>(inter) / static_cast<double>(uni), false};
}

ErrorStats error_stats(const std::vector<double>& manual, const std::vector<double>& automatic) {
    if (manual.size() != automatic.size()) throw std::invalid_argument("error_stats: length mismatch");
    if (manual.empty()) throw std::invalid_argument("error_stats: empty lists");
    const std::size_t n = manual.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += std::abs(manual[i] - automatic[i]);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = std::abs(manual[i] - automatic[i]) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    return {mean, std::sqrt(var), n};
}

}  // namespace cardioquant
