#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cardioquant/metrics.hpp"
#include "cardioquant/rng.hpp"

using namespace cardioquant;

namespace {

BinaryMask random_mask(int w, int h, double p_fg, std::uint64_t seed) {
    Rng rng(seed);
    BinaryMask m(w, h);
    for (auto& b : m.bits) b = rng.uniform01() < p_fg ? 1 : 0;
    return m;
}

ProbMap mask_to_probs(const BinaryMask& m) {
    ProbMap p(m.width, m.height);
    for (std::size_t i = 0; i < m.bits.size(); ++i) p.probs[i] = static_cast<float>(m.bits[i]);
    return p;
}

BinaryMask complement(const BinaryMask& m) {
    BinaryMask out = m;
    for (auto& b : out.bits) b = b ? 0 : 1;
    return out;
}

}  // namespace

TEST_CASE("bce_loss basics") {
    const BinaryMask truth = random_mask(8, 8, 0.3, 1);
    CHECK(bce_loss(truth, mask_to_probs(truth)) <= 1e-6);  // perfect prediction, clamped logs

    BinaryMask ones(4, 4, true);
    ProbMap half(4, 4, 0.5f);
    CHECK(bce_loss(ones, half) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    // Symmetric under joint complement (probabilities on a k/256 grid so the
    // float complement is exact).
    const BinaryMask y = random_mask(10, 10, 0.4, 2);
    ProbMap p(10, 10);
    Rng rng(3);
    for (auto& v : p.probs) v = static_cast<float>(rng.below(257)) / 256.0f;
    ProbMap pc(10, 10);
    for (std::size_t i = 0; i < p.probs.size(); ++i) pc.probs[i] = 1.0f - p.probs[i];
    CHECK(bce_loss(y, p) == doctest::Approx(bce_loss(complement(y), pc)).epsilon(1e-9));

    CHECK(bce_loss(y, p) >= 0.0);
    CHECK_THROWS(bce_loss(BinaryMask(3, 3), ProbMap(4, 3)));
}

TEST_CASE("dice_loss pinned values") {
    const BinaryMask empty(4, 4);
    const ProbMap zeros(4, 4, 0.0f);
    CHECK(dice_loss(empty, zeros) == doctest::Approx(0.0));  // smoothing makes empty-vs-empty perfect

    BinaryMask one(1, 1, true);
    ProbMap hit(1, 1, 1.0f);
    CHECK(dice_loss(one, hit) == doctest::Approx(0.0));

    ProbMap miss(1, 1, 0.0f);
    CHECK(dice_loss(one, miss) == doctest::Approx(0.5));
}

TEST_CASE("dice_loss with hard predictions equals 1 - smoothed dice of the masks") {
    for (int trial = 0; trial < 20; ++trial) {
        const BinaryMask a = random_mask(12, 12, 0.35, 100 + trial);
        const BinaryMask b = random_mask(12, 12, 0.35, 200 + trial);
        std::size_t inter = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < a.bits.size(); ++i) {
            inter += a.bits[i] & b.bits[i];
            na += a.bits[i];
            nb += b.bits[i];
        }
        const double smoothed = (2.0 * inter + 1.0) / (static_cast<double>(na + nb) + 1.0);
        CHECK(dice_loss(a, mask_to_probs(b)) == doctest::Approx(1.0 - smoothed).epsilon(1e-12));
    }
}

TEST_CASE("pixel_accuracy counts agreement") {
    const BinaryMask a = random_mask(10, 10, 0.5, 300);
    CHECK(pixel_accuracy(a, a) == doctest::Approx(1.0));
    CHECK(pixel_accuracy(a, complement(a)) == doctest::Approx(0.0));

    BinaryMask truth(10, 10);
    for (int i = 0; i < 10; ++i) truth.bits[i] = 1;  // 10% foreground
    const BinaryMask none(10, 10);
    CHECK(pixel_accuracy(truth, none) == doctest::Approx(0.9));
}

TEST_CASE("dice and iou pinned values and conventions") {
    const BinaryMask a = random_mask(9, 9, 0.4, 400);
    CHECK(dice_coefficient(a, a).value == doctest::Approx(1.0));
    CHECK(iou(a, a).value == doctest::Approx(1.0));

    // |A| = |B| = 100, |A n B| = 50  ->  dice 0.5
    BinaryMask x(20, 10), y(20, 10);
    for (int i = 0; i < 100; ++i) x.bits[i] = 1;
    for (int i = 50; i < 150; ++i) y.bits[i] = 1;
    CHECK(dice_coefficient(x, y).value == doctest::Approx(0.5));

    // Disjoint nonempty -> iou 0.
    BinaryMask d1(4, 4), d2(4, 4);
    d1.bits[0] = 1;
    d2.bits[5] = 1;
    CHECK(iou(d1, d2).value == doctest::Approx(0.0));

    // Both empty -> 1.0, flagged.
    const BinaryMask e1(4, 4), e2(4, 4);
    const auto ds = dice_coefficient(e1, e2);
    CHECK(ds.value == doctest::Approx(1.0));
    CHECK(ds.both_empty);
    CHECK(iou(e1, e2).both_empty);

    // Symmetry.
    const BinaryMask b = random_mask(9, 9, 0.4, 500);
    CHECK(dice_coefficient(a, b).value == doctest::Approx(dice_coefficient(b, a).value));
    CHECK(iou(a, b).value == doctest::Approx(iou(b, a).value));
}

TEST_CASE("iou == dice/(2-dice) per pair to 1e-12 over 1000 random pairs") {
    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const BinaryMask a = random_mask(16, 16, 0.05 + 0.3 * (trial % 7) / 6.0, 10000 + trial);
        const BinaryMask b = random_mask(16, 16, 0.05 + 0.3 * (trial % 5) / 4.0, 20000 + trial);
        const auto d = dice_coefficient(a, b);
        const auto j = iou(a, b);
        if (d.both_empty) continue;
        ++checked;
        CHECK(std::abs(j.value - d.value / (2.0 - d.value)) < 1e-12);
    }
    CHECK(checked > 950);
}

TEST_CASE("error_stats mean and population std") {
    const ErrorStats zero = error_stats({50.0, 60.0}, {50.0, 60.0});
    CHECK(zero.mean_abs_error == doctest::Approx(0.0));
    CHECK(zero.std_abs_error == doctest::Approx(0.0));

    const ErrorStats s = error_stats({50.0, 60.0}, {48.0, 64.0});
    CHECK(s.mean_abs_error == doctest::Approx(3.0));
    CHECK(s.std_abs_error == doctest::Approx(1.0));
    CHECK(s.n == 2);

    CHECK_THROWS(error_stats({1.0}, {}));
    CHECK_THROWS(error_stats({}, {}));
}
