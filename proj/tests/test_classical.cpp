#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>

#include "cardioquant/classical.hpp"
#include "cardioquant/rng.hpp"
#include "cardioquant/synth.hpp"

using namespace cardioquant;

namespace {

GrayFrame random_frame(int w, int h, std::uint64_t seed) {
    Rng rng(seed);
    GrayFrame f(w, h);
    for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    return f;
}

// Independent oracle: evaluate sigma_b^2 for every threshold directly in
// floating point and take the argmax (smallest t on ties).
int otsu_oracle(const GrayFrame& f) {
    std::array<double, 256> hist{};
    for (auto p : f.pixels) hist[p] += 1.0;
    const double total = static_cast<double>(f.pixels.size());

    int best_t = -1;
    double best = -1.0;
    for (int t = 0; t < 255; ++t) {
        double w0 = 0.0, s0 = 0.0;
        for (int v = 0; v <= t; ++v) {
            w0 += hist[v];
            s0 += hist[v] * v;
        }
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        double s1 = 0.0;
        for (int v = t + 1; v < 256; ++v) s1 += hist[v] * v;
        const double mu0 = s0 / w0, mu1 = s1 / w1;
        const double sigma_b = (w0 / total) * (w1 / total) * (mu0 - mu1) * (mu0 - mu1);
        if (sigma_b > best + 1e-12) {
            best = sigma_b;
            best_t = t;
        }
    }
    return best_t;
}

}  // namespace

TEST_CASE("manual_threshold boundary behavior") {
    GrayFrame f(2, 1);
    f.pixels = {10, 200};
    const BinaryMask m = manual_threshold(f, 100);
    CHECK(m.bits == std::vector<std::uint8_t>{1, 0});

    CHECK(manual_threshold(f, 255).count() == 2);  // everything dark enough

    GrayFrame g(3, 1);
    g.pixels = {1, 5, 255};
    CHECK(manual_threshold(g, 0).count() == 0);  // min pixel is 1
}

TEST_CASE("otsu separates a two-level frame exactly") {
    GrayFrame f(4, 4);
    for (int i = 0; i < 16; ++i) f.pixels[i] = i < 8 ? 0 : 255;
    const auto [t, mask] = otsu_threshold(f);
    CHECK(t >= 0);
    CHECK(t <= 254);
    CHECK(mask.count() == 8);
    for (int i = 0; i < 16; ++i) CHECK(static_cast<bool>(mask.bits[i]) == (f.pixels[i] == 0));
    CHECK(t == otsu_oracle(f));
}

TEST_CASE("otsu rejects constant frames") { CHECK_THROWS(otsu_threshold(GrayFrame(4, 4, 9))); }

TEST_CASE("otsu equals the brute-force oracle on 100 random frames") {
    for (int trial = 0; trial < 100; ++trial) {
        const GrayFrame f = random_frame(32, 32, 1000 + trial);
        const auto [t, mask] = otsu_threshold(f);
        CHECK(t == otsu_oracle(f));
        CHECK(mask == manual_threshold(f, static_cast<std::uint8_t>(t)));
    }
}

TEST_CASE("canny of a constant frame is empty") {
    const BinaryMask e = canny_edges(GrayFrame(16, 16, 80), 0.1, 0.3);
    CHECK(e.count() == 0);
}

TEST_CASE("canny finds a 1-px band on a vertical step") {
    GrayFrame f(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) f.at(x, y) = x < 8 ? 0 : 255;
    const BinaryMask e = canny_edges(f, 0.1, 0.3);
    for (int y = 2; y < 14; ++y) {  // interior rows away from blur boundary effects
        int count = 0, pos = -1;
        for (int x = 0; x < 16; ++x)
            if (e.at(x, y)) {
                ++count;
                pos = x;
            }
        CHECK(count == 1);
        CHECK(pos >= 6);
        CHECK(pos <= 9);
    }
}

TEST_CASE("canny edge count is invariant under intensity inversion") {
    for (int trial = 0; trial < 8; ++trial) {
        GrayFrame f(32, 32, 200);
        // A few random rectangles and a disk.
        Rng rng(2000 + trial);
        for (int r = 0; r < 3; ++r) {
            const int x0 = rng.uniform_int(2, 20), y0 = rng.uniform_int(2, 20);
            const int w = rng.uniform_int(4, 10), h = rng.uniform_int(4, 10);
            for (int y = y0; y < std::min(32, y0 + h); ++y)
                for (int x = x0; x < std::min(32, x0 + w); ++x)
                    f.at(x, y) = static_cast<std::uint8_t>(40 + 20 * r);
        }
        GrayFrame inv(32, 32);
        for (std::size_t i = 0; i < f.pixels.size(); ++i)
            inv.pixels[i] = static_cast<std::uint8_t>(255 - f.pixels[i]);

        const BinaryMask a = canny_edges(f, 0.1, 0.3);
        const BinaryMask b = canny_edges(inv, 0.1, 0.3);
        CHECK(a.count() == b.count());
    }
    CHECK_THROWS(canny_edges(GrayFrame(8, 8, 0), 0.5, 0.2));
}

TEST_CASE("background_subtract of a static sequence is empty for any tau") {
    VideoSequence seq;
    seq.video_id = "static";
    seq.fps = 10.0;
    const GrayFrame f = random_frame(12, 10, 3000);
    for (int i = 0; i < 6; ++i) seq.frames.push_back(f);
    for (std::uint8_t tau : {0, 5, 50}) {
        const auto masks = background_subtract(seq, tau);
        for (const auto& m : masks) CHECK(m.count() == 0);
    }
    VideoSequence two = seq;
    two.frames.resize(2);
    CHECK_THROWS(background_subtract(two, 10));
}

TEST_CASE("background_subtract flags a transient blob only in its frame") {
    VideoSequence seq;
    seq.video_id = "blob";
    seq.fps = 10.0;
    const GrayFrame base(16, 16, 100);
    for (int i = 0; i < 7; ++i) seq.frames.push_back(base);
    for (int y = 4; y < 6; ++y)
        for (int x = 8; x < 10; ++x) seq.frames[3].at(x, y) = 250;

    const auto masks = background_subtract(seq, 30);
    for (int i = 0; i < 7; ++i) {
        if (i == 3) {
            CHECK(masks[i].count() == 4);
            CHECK(masks[i].at(8, 4) == 1);
        } else {
            CHECK(masks[i].count() == 0);
        }
    }
}

TEST_CASE("background_subtract union covers the swept wall of a beating ellipse") {
    synth::SynthConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.fps = 20.0;
    cfg.duration_s = 1.0;  // two full beats at 2 Hz
    cfg.center_x = 32.0;
    cfg.center_y = 32.0;
    cfg.a0 = 18.0;
    cfg.b0 = 12.0;
    cfg.modulation = 0.2;
    cfg.noise_sigma = 0.0;
    cfg.texture_contrast = 0.0;
    cfg.seed = 4;
    const auto synth_result = synth::generate(cfg);

    const auto masks = background_subtract(synth_result.video, 30);

    // The annulus swept by the wall: inside the largest truth mask but outside
    // the smallest one.
    std::size_t largest = 0, smallest = 0;
    for (std::size_t i = 1; i < synth_result.masks.size(); ++i) {
        if (synth_result.masks[i].count() > synth_result.masks[largest].count()) largest = i;
        if (synth_result.masks[i].count() < synth_result.masks[smallest].count()) smallest = i;
    }
    std::size_t annulus = 0, covered = 0;
    for (std::size_t p = 0; p < masks[0].bits.size(); ++p) {
        const bool in_annulus =
            synth_result.masks[largest].bits[p] && !synth_result.masks[smallest].bits[p];
        if (!in_annulus) continue;
        ++annulus;
        for (const auto& m : masks)
            if (m.bits[p]) {
                ++covered;
                break;
            }
    }
    REQUIRE(annulus > 0);
    CHECK(static_cast<double>(covered) / static_cast<double>(annulus) >= 0.95);
}

TEST_CASE("kmeans recovers two exact intensity classes") {
    GrayFrame f(8, 8);
    for (int i = 0; i < 64; ++i) f.pixels[i] = i % 3 == 0 ? 10 : 200;
    const KMeansResult r = kmeans_intensity_full(f, 2, 0);
    for (int i = 0; i < 64; ++i) CHECK(r.labels.labels[i] == (f.pixels[i] == 10 ? 0 : 1));
    CHECK(r.centroids[0] == doctest::Approx(10.0));
    CHECK(r.centroids[1] == doctest::Approx(200.0));
}

TEST_CASE("kmeans is deterministic and inertia never increases") {
    for (int trial = 0; trial < 10; ++trial) {
        const GrayFrame f = random_frame(24, 24, 4000 + trial);
        const KMeansResult a = kmeans_intensity_full(f, 3, 7);
        const KMeansResult b = kmeans_intensity_full(f, 3, 7);
        CHECK(a.labels.labels == b.labels.labels);
        for (std::size_t i = 1; i < a.inertia_history.size(); ++i)
            CHECK(a.inertia_history[i] <= a.inertia_history[i - 1] + 1e-9);
    }
}

TEST_CASE("kmeans final assignment is a fixed point") {
    for (int trial = 0; trial < 10; ++trial) {
        const GrayFrame f = random_frame(16, 16, 5000 + trial);
        const KMeansResult r = kmeans_intensity_full(f, 3, 0);
        for (std::size_t i = 0; i < f.pixels.size(); ++i) {
            const double v = f.pixels[i];
            const int assigned = r.labels.labels[i];
            double best = std::abs(v - r.centroids[assigned]);
            for (int j = 0; j < 3; ++j)
                CHECK(std::abs(v - r.centroids[j]) >= best - 1e-12);
        }
    }
    CHECK_THROWS(kmeans_intensity(GrayFrame(4, 4, 5), 2, 0));
    GrayFrame two(4, 4, 5);
    two.pixels[0] = 6;
    CHECK_THROWS(kmeans_intensity(two, 3, 0));
}

TEST_CASE("gmm separates well-separated populations like kmeans") {
    GrayFrame f(16, 16);
    Rng rng(6000);
    for (auto& p : f.pixels) {
        const double v = rng.uniform01() < 0.4 ? 30.0 + rng.normal() * 2.0 : 220.0 + rng.normal() * 2.0;
        p = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    const LabelMap km = kmeans_intensity(f, 2, 0);
    const LabelMap gm = gmm_segment(f, 2, 0);
    CHECK(km.labels == gm.labels);
}

TEST_CASE("gmm log-likelihood is non-decreasing and weights stay normalized") {
    for (int trial = 0; trial < 6; ++trial) {
        const GrayFrame f = random_frame(20, 20, 7000 + trial);
        const GmmResult r = gmm_segment_full(f, 3, 0);
        for (std::size_t i = 1; i < r.loglik_history.size(); ++i)
            CHECK(r.loglik_history[i] >= r.loglik_history[i - 1] - 1e-7);
        double wsum = 0.0;
        for (double w : r.weights) wsum += w;
        CHECK(std::abs(wsum - 1.0) < 1e-12);
    }
    CHECK_THROWS(gmm_segment(GrayFrame(4, 4, 100), 2, 0));
}
