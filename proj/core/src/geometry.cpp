#include "cardioquant/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cardioquant {

LabelMap connected_components(const BinaryMask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        throw std::invalid_argument("connected_components: connectivity must be 4 or 8");
    const int w = mask.width, h = mask.height;
    LabelMap out(w, h, 1);
    std::fill(out.labels.begin(), out.labels.end(), 0);

    static const int n4[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    static const int n8[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    const auto* nb = connectivity == 4 ? n4 : n8;
    const int nn = connectivity;

    int next_label = 1;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y) || out.at(x, y) != 0) continue;
            const int label = next_label++;
            out.at(x, y) = label;
            stack.emplace_back(x, y);
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                for (int i = 0; i < nn; ++i) {
                    const int nx = cx + nb[i][0], ny = cy + nb[i][1];
                    if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                    if (mask.at(nx, ny) && out.at(nx, ny) == 0) {
                        out.at(nx, ny) = label;
                        stack.emplace_back(nx, ny);
                    }
                }
            }
        }
    }
    out.k = next_label;  // labels are 0..next_label-1
    return out;
}

BinaryMask largest_component(const BinaryMask& mask) {
    const LabelMap cc = connected_components(mask, 8);
    if (cc.k == 1) return BinaryMask(mask.width, mask.height);  // no foreground

    std::vector<std::size_t> area(cc.k, 0);
    for (int l : cc.labels) ++area[l];
    int best = 1;
    for (int l = 2; l < cc.k; ++l)
        if (area[l] > area[best]) best = l;  // ties keep the smaller first-scan label

    BinaryMask out(mask.width, mask.height);
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = cc.labels[i] == best ? 1 : 0;
    return out;
}

BinaryMask contour_pixels(const BinaryMask& mask) {
    const int w = mask.width, h = mask.height;
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            const bool border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            if (border || !mask.at(x - 1, y) || !mask.at(x + 1, y) || !mask.at(x, y - 1) ||
                !mask.at(x, y + 1))
                out.at(x, y) = 1;
        }
    return out;
}

VentricleGeometry measure_geometry(const BinaryMask& mask, AxisMethod method) {
    VentricleGeometry g;
    g.method = method;

    double n = 0.0, sx = 0.0, sy = 0.0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) {
                n += 1.0;
                sx += x;
                sy += y;
            }
    if (n == 0.0) return g;  // empty flag stays set

    g.empty = false;
    g.area = n;
    g.centroid_x = sx / n;
    g.centroid_y = sy / n;

    // Central second moments of the pixel centers (needed for the orientation
    // in both methods).
    double mu20 = 0.0, mu02 = 0.0, mu11 = 0.0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) {
                const double dx = x - g.centroid_x, dy = y - g.centroid_y;
                mu20 += dx * dx;
                mu02 += dy * dy;
                mu11 += dx * dy;
            }
    mu20 /= n;
    mu02 /= n;
    mu11 /= n;

    if (method == AxisMethod::moments) {
        // Equivalent-ellipse semi-axes are 2*sqrt(eigenvalues of covariance).
        const double tr = mu20 + mu02;
        const double det = mu20 * mu02 - mu11 * mu11;
        const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
        const double l1 = tr / 2.0 + disc, l2 = std::max(0.0, tr / 2.0 - disc);
        g.long_axis = 4.0 * std::sqrt(l1);
        g.short_axis = 4.0 * std::sqrt(l2);
        g.orientation = 0.5 * std::atan2(2.0 * mu11, mu20 - mu02);
        return g;
    }

    // Chord method: farthest contour-pixel pair, then the perpendicular
    // extent over all foreground pixels.
    const BinaryMask contour = contour_pixels(mask);
    std::vector<std::pair<int, int>> pts;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (contour.at(x, y)) pts.emplace_back(x, y);

    double best_d2 = 0.0;
    std::pair<int, int> pa = pts.front(), pb = pts.front();
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            const double dx = pts[i].first - pts[j].first;
            const double dy = pts[i].second - pts[j].second;
            const double d2 = dx * dx + dy * dy;
            if (d2 > best_d2) {
                best_d2 = d2;
                pa = pts[i];
                pb = pts[j];
            }
        }
    const double long_center = std::sqrt(best_d2);
    double ux = 1.0, uy = 0.0;
    if (long_center > 0.0) {
        ux = (pb.first - pa.first) / long_center;
        uy = (pb.second - pa.second) / long_center;
    }
    g.orientation = std::atan2(uy, ux);

    // Perpendicular extent across all foreground pixels.
    const double px = -uy, py = ux;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) {
                const double s = x * px + y * py;
                if (first) {
                    lo = hi = s;
                    first = false;
                } else {
                    lo = std::min(lo, s);
                    hi = std::max(hi, s);
                }
            }

    g.long_axis = long_center;
    g.short_axis = hi - lo;
    if (g.short_axis > g.long_axis) std::swap(g.long_axis, g.short_axis);
    return g;
}

}  // namespace cardioquant
