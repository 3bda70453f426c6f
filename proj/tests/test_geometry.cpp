#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cardioquant/geometry.hpp"
#include "cardioquant/rng.hpp"
#include "cardioquant/synth.hpp"

using namespace cardioquant;

namespace {

BinaryMask random_mask(int w, int h, double p_fg, std::uint64_t seed) {
    Rng rng(seed);
    BinaryMask m(w, h);
    for (auto& b : m.bits) b = rng.uniform01() < p_fg ? 1 : 0;
    return m;
}

// Independent oracle: explicit-stack flood fill, counting components.
int flood_fill_count(const BinaryMask& m, int connectivity) {
    std::vector<std::uint8_t> seen(m.bits.size(), 0);
    static const int n4[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    static const int n8[8][2] = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                                 {1, 1},  {1, -1}, {-1, 1}, {-1, -1}};
    int count = 0;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * m.width + x;
            if (!m.bits[i] || seen[i]) continue;
            ++count;
            std::vector<std::pair<int, int>> stack{{x, y}};
            seen[i] = 1;
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                for (int d = 0; d < connectivity; ++d) {
                    const int nx = cx + (connectivity == 4 ? n4[d][0] : n8[d][0]);
                    const int ny = cy + (connectivity == 4 ? n4[d][1] : n8[d][1]);
                    if (nx < 0 || nx >= m.width || ny < 0 || ny >= m.height) continue;
                    const std::size_t ni = static_cast<std::size_t>(ny) * m.width + nx;
                    if (m.bits[ni] && !seen[ni]) {
                        seen[ni] = 1;
                        stack.emplace_back(nx, ny);
                    }
                }
            }
        }
    return count;
}

}  // namespace

TEST_CASE("connected_components basics") {
    BinaryMask sq(8, 8);
    for (int y = 2; y < 6; ++y)
        for (int x = 2; x < 6; ++x) sq.at(x, y) = 1;
    const LabelMap one = connected_components(sq, 8);
    CHECK(one.k == 2);  // background + 1 component

    // Diagonal touch: one component under 8-connectivity, two under 4.
    BinaryMask diag(4, 4);
    diag.at(1, 1) = 1;
    diag.at(2, 2) = 1;
    CHECK(connected_components(diag, 8).k == 2);
    CHECK(connected_components(diag, 4).k == 3);

    CHECK_THROWS(connected_components(sq, 6));
}

TEST_CASE("connected_components labels follow first-scan order") {
    BinaryMask m(6, 3);
    m.at(4, 0) = 1;  // encountered first (row 0)
    m.at(0, 2) = 1;  // encountered second
    const LabelMap lm = connected_components(m, 8);
    CHECK(lm.at(4, 0) == 1);
    CHECK(lm.at(0, 2) == 2);
}

TEST_CASE("component count equals the flood-fill oracle on 100 random masks") {
    for (int trial = 0; trial < 100; ++trial) {
        const BinaryMask m = random_mask(24, 20, 0.25 + 0.35 * (trial % 4) / 3.0, 800 + trial);
        for (int conn : {4, 8}) {
            const LabelMap lm = connected_components(m, conn);
            CHECK(lm.k - 1 == flood_fill_count(m, conn));
        }
    }
}

TEST_CASE("largest_component keeps the biggest area, ties to first scan") {
    BinaryMask m(12, 6);
    for (int x = 0; x < 5; ++x)
        for (int y = 0; y < 2; ++y) m.at(x, y) = 1;  // area 10
    m.at(10, 5) = 1;                                  // area 1
    const BinaryMask keep = largest_component(m);
    CHECK(keep.count() == 10);
    CHECK(keep.at(10, 5) == 0);

    // Single component passes through unchanged.
    CHECK(largest_component(keep) == keep);

    // Equal areas: the component scanned first wins.
    BinaryMask tie(8, 4);
    tie.at(6, 0) = 1;  // first in scan order
    tie.at(0, 3) = 1;
    const BinaryMask kept = largest_component(tie);
    CHECK(kept.count() == 1);
    CHECK(kept.at(6, 0) == 1);

    // Empty stays empty.
    CHECK(largest_component(BinaryMask(4, 4)).count() == 0);
}

TEST_CASE("measure_geometry of a rendered disk") {
    // Radius 20 at a half-integer center so the rim never lands exactly on
    // pixel centers; area ~ pi*r^2 ~ 1257.
    const BinaryMask disk = synth::ellipse_mask(64, 64, 32.5, 31.5, 20.0, 20.0, 0.0);
    for (auto method : {AxisMethod::moments, AxisMethod::chord}) {
        const VentricleGeometry g = measure_geometry(disk, method);
        CHECK_FALSE(g.empty);
        CHECK(g.area == doctest::Approx(1257.0).epsilon(0.01));
        CHECK(g.long_axis == doctest::Approx(40.0).epsilon(0.02));
        CHECK(g.short_axis == doctest::Approx(40.0).epsilon(0.02));
    }
}

TEST_CASE("measure_geometry of an axis-aligned 30x15 ellipse") {
    const BinaryMask e = synth::ellipse_mask(96, 64, 47.5, 31.5, 30.0, 15.0, 0.0);
    const VentricleGeometry mom = measure_geometry(e, AxisMethod::moments);
    CHECK(mom.long_axis == doctest::Approx(60.0).epsilon(0.02));
    CHECK(mom.short_axis == doctest::Approx(30.0).epsilon(0.02));
    CHECK(std::abs(std::remainder(mom.orientation, 3.14159265358979323846)) < 0.05);

    const VentricleGeometry ch = measure_geometry(e, AxisMethod::chord);
    CHECK(std::abs(ch.long_axis - 60.0) <= 1.0);
    CHECK(ch.short_axis == doctest::Approx(30.0).epsilon(0.05));
}

TEST_CASE("measure_geometry of an empty mask sets the empty flag") {
    const VentricleGeometry g = measure_geometry(BinaryMask(8, 8), AxisMethod::moments);
    CHECK(g.empty);
    CHECK(g.area == 0.0);
    CHECK(g.long_axis == 0.0);
}

TEST_CASE("area equals the exact foreground count and long >= short") {
    for (int trial = 0; trial < 30; ++trial) {
        const BinaryMask m = random_mask(20, 20, 0.4, 900 + trial);
        for (auto method : {AxisMethod::moments, AxisMethod::chord}) {
            const VentricleGeometry g = measure_geometry(m, method);
            CHECK(g.area == static_cast<double>(m.count()));
            CHECK(g.long_axis >= g.short_axis);
        }
    }
}

TEST_CASE("geometry is translation-invariant apart from the centroid") {
    const BinaryMask a = synth::ellipse_mask(64, 64, 20.5, 20.5, 12.0, 8.0, 0.4);
    const BinaryMask b = synth::ellipse_mask(64, 64, 35.5, 30.5, 12.0, 8.0, 0.4);
    for (auto method : {AxisMethod::moments, AxisMethod::chord}) {
        const VentricleGeometry ga = measure_geometry(a, method);
        const VentricleGeometry gb = measure_geometry(b, method);
        CHECK(ga.area == gb.area);
        CHECK(ga.long_axis == doctest::Approx(gb.long_axis).epsilon(1e-9));
        CHECK(ga.short_axis == doctest::Approx(gb.short_axis).epsilon(1e-9));
        CHECK(gb.centroid_x - ga.centroid_x == doctest::Approx(15.0).epsilon(1e-6));
        CHECK(gb.centroid_y - ga.centroid_y == doctest::Approx(10.0).epsilon(1e-6));
    }
}

TEST_CASE("rotating an ellipse changes moment axes by less than 3%") {
    const BinaryMask base = synth::ellipse_mask(96, 96, 48.3, 47.6, 24.0, 14.0, 0.0);
    const VentricleGeometry g0 = measure_geometry(base, AxisMethod::moments);
    const BinaryMask rot = synth::ellipse_mask(96, 96, 48.3, 47.6, 24.0, 14.0, 30.0 * 3.14159265 / 180.0);
    const VentricleGeometry g30 = measure_geometry(rot, AxisMethod::moments);
    CHECK(std::abs(g30.long_axis - g0.long_axis) / g0.long_axis < 0.03);
    CHECK(std::abs(g30.short_axis - g0.short_axis) / g0.short_axis < 0.03);
}

TEST_CASE("both methods recover analytic diameters within 5% for min axis >= 10") {
    Rng rng(77);
    for (int trial = 0; trial < 12; ++trial) {
        const double a = rng.uniform(10.0, 26.0);
        const double b = rng.uniform(10.0, a);
        const double theta = rng.uniform(0.0, 3.14159265);
        const BinaryMask m = synth::ellipse_mask(96, 96, 48.0 + rng.uniform01(),
                                                 48.0 + rng.uniform01(), a, b, theta);
        for (auto method : {AxisMethod::moments, AxisMethod::chord}) {
            const VentricleGeometry g = measure_geometry(m, method);
            CHECK(std::abs(g.long_axis - 2 * a) / (2 * a) < 0.05);
            CHECK(std::abs(g.short_axis - 2 * b) / (2 * b) < 0.05);
        }
    }
}
