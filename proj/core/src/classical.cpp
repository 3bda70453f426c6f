#include "cardioquant/classical.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace cardioquant {

BinaryMask manual_threshold(const GrayFrame& frame, std::uint8_t t) {
    BinaryMask m(frame.width, frame.height);
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) m.bits[i] = frame.pixels[i] <= t ? 1 : 0;
    return m;
}

std::pair<int, BinaryMask> otsu_threshold(const GrayFrame& frame) {
    std::array<std::uint64_t, 256> hist{};
    for (auto p : frame.pixels) ++hist[p];

    int distinct = 0;
    for (auto c : hist) distinct += c > 0;
    if (distinct < 2) throw std::invalid_argument("otsu_threshold: frame has fewer than 2 distinct intensities");

    // sigma_b^2(t) = w0*w1*(mu0-mu1)^2 is proportional to
    // (S0*W1 - S1*W0)^2 / (W0*W1) with integer class counts W and intensity
    // sums S. Fractions are compared cross-multiplied in 128-bit integers so
    // the argmax is exact.
    using u128 = unsigned __int128;
    std::uint64_t total_w = frame.pixels.size();
    std::uint64_t total_s = 0;
    for (int v = 0; v < 256; ++v) total_s += hist[v] * static_cast<std::uint64_t>(v);

    int best_t = -1;
    u128 best_num = 0;      // (S0*W1 - S1*W0)^2
    std::uint64_t best_den = 1;  // W0*W1
    std::uint64_t w0 = 0, s0 = 0;
    for (int t = 0; t < 255; ++t) {
        w0 += hist[t];
        s0 += hist[t] * static_cast<std::uint64_t>(t);
        const std::uint64_t w1 = total_w - w0;
        if (w0 == 0 || w1 == 0) continue;
        const std::uint64_t s1 = total_s - s0;
        const u128 a = static_cast<u128>(s0) * w1;
        const u128 b = static_cast<u128>(s1) * w0;
        const u128 diff = a > b ? a - b : b - a;
        const u128 num = diff * diff;
        const std::uint64_t den = w0 * w1;
        // num/den > best_num/best_den  <=>  num*best_den > best_num*den
        if (best_t < 0 || num * best_den > best_num * den) {
            best_t = t;
            best_num = num;
            best_den = den;
        }
    }
    return {best_t, manual_threshold(frame, static_cast<std::uint8_t>(best_t))};
}

namespace {

std::vector<double> gaussian_blur5(const GrayFrame& frame) {
    // 5x5 kernel sampled from exp(-(dx^2+dy^2)/2) (sigma = 1), normalized.
    static const std::array<double, 25> kernel = [] {
        std::array<double, 25> k{};
        double sum = 0.0;
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx) {
                const double v = std::exp(-(dx * dx + dy * dy) / 2.0);
                k[(dy + 2) * 5 + (dx + 2)] = v;
                sum += v;
            }
        for (auto& v : k) v /= sum;
        return k;
    }();

    const int w = frame.width, h = frame.height;
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    auto clampc = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx)
                    acc += kernel[(dy + 2) * 5 + (dx + 2)] *
                           frame.at(clampc(x + dx, w), clampc(y + dy, h));
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    return out;
}

}  // namespace

BinaryMask canny_edges(const GrayFrame& frame, double low, double high) {
    if (!(low >= 0.0 && low < high && high <= 1.0))
        throw std::invalid_argument("canny_edges: need 0 <= low < high <= 1");

    const int w = frame.width, h = frame.height;
    const std::vector<double> blurred = gaussian_blur5(frame);
    auto b = [&](int x, int y) {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        return blurred[static_cast<std::size_t>(y) * w + x];
    };

    std::vector<double> mag(static_cast<std::size_t>(w) * h, 0.0);
    std::vector<std::uint8_t> dir(static_cast<std::size_t>(w) * h, 0);  // 0:E-W 1:NE-SW 2:N-S 3:NW-SE
    double max_mag = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = -b(x - 1, y - 1) - 2 * b(x - 1, y) - b(x - 1, y + 1) +
                              b(x + 1, y - 1) + 2 * b(x + 1, y) + b(x + 1, y + 1);
            const double gy = -b(x - 1, y - 1) - 2 * b(x, y - 1) - b(x + 1, y - 1) +
                              b(x - 1, y + 1) + 2 * b(x, y + 1) + b(x + 1, y + 1);
            const double m = std::hypot(gx, gy);
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            mag[i] = m;
            max_mag = std::max(max_mag, m);
            double angle = std::atan2(gy, gx) * 180.0 / 3.14159265358979323846;
            if (angle < 0) angle += 180.0;
            std::uint8_t d = 0;
            if (angle < 22.5 || angle >= 157.5)
                d = 0;
            else if (angle < 67.5)
                d = 1;
            else if (angle < 112.5)
                d = 2;
            else
                d = 3;
            dir[i] = d;
        }

    BinaryMask edges(w, h);
    // Rounding residue from the blur is not signal; a constant frame must
    // yield an empty mask.
    if (max_mag <= 1e-6) return edges;

    const double lo_t = low * max_mag, hi_t = high * max_mag;
    static const int off[4][2] = {{1, 0}, {1, -1}, {0, 1}, {1, 1}};

    // Non-maximum suppression. Ties keep the first pixel along the positive
    // neighbor direction (strict > backward, >= forward) so plateaus thin to
    // one pixel.
    std::vector<std::uint8_t> strength(static_cast<std::size_t>(w) * h, 0);  // 0 none, 1 weak, 2 strong
    auto mag_at = [&](int x, int y) -> double {
        if (x < 0 || x >= w || y < 0 || y >= h) return 0.0;
        return mag[static_cast<std::size_t>(y) * w + x];
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double m = mag[i];
            if (m < lo_t) continue;
            const int dx = off[dir[i]][0], dy = off[dir[i]][1];
            const double fwd = mag_at(x + dx, y + dy);
            const double bwd = mag_at(x - dx, y - dy);
            if (m > bwd && m >= fwd) strength[i] = m >= hi_t ? 2 : 1;
        }

    // Hysteresis: keep strong pixels and weak pixels 8-connected to strong.
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (strength[static_cast<std::size_t>(y) * w + x] == 2) {
                edges.at(x, y) = 1;
                queue.emplace_back(x, y);
            }
    while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                if (strength[ni] == 1 && !edges.bits[ni]) {
                    edges.bits[ni] = 1;
                    queue.emplace_back(nx, ny);
                }
            }
    }
    return edges;
}

std::vector<BinaryMask> background_subtract(const VideoSequence& seq, std::uint8_t tau) {
    const std::size_t n = seq.frames.size();
    if (n < 3) throw std::invalid_argument("background_subtract: need at least 3 frames");
    const int w = seq.width(), h = seq.height();
    const std::size_t npx = static_cast<std::size_t>(w) * h;

    // Per-pixel temporal median from a 256-bin count.
    std::vector<double> background(npx, 0.0);
    std::vector<std::uint16_t> hist(256);
    for (std::size_t p = 0; p < npx; ++p) {
        std::fill(hist.begin(), hist.end(), 0);
        for (const auto& f : seq.frames) ++hist[f.pixels[p]];
        auto value_at_rank = [&](std::size_t rank) {  // 0-based order statistic
            std::size_t acc = 0;
            for (int v = 0; v < 256; ++v) {
                acc += hist[v];
                if (acc > rank) return v;
            }
            return 255;
        };
        if (n % 2 == 1) {
            background[p] = value_at_rank(n / 2);
        } else {
            background[p] = 0.5 * (value_at_rank(n / 2 - 1) + value_at_rank(n / 2));
        }
    }

    std::vector<BinaryMask> masks;
    masks.reserve(n);
    for (const auto& f : seq.frames) {
        BinaryMask m(w, h);
        for (std::size_t p = 0; p < npx; ++p)
            m.bits[p] = std::abs(f.pixels[p] - background[p]) > tau ? 1 : 0;
        masks.push_back(std::move(m));
    }
    return masks;
}

namespace {

std::array<std::uint32_t, 256> intensity_hist(const GrayFrame& frame) {
    std::array<std::uint32_t, 256> hist{};
    for (auto p : frame.pixels) ++hist[p];
    return hist;
}

int count_distinct(const std::array<std::uint32_t, 256>& hist) {
    int d = 0;
    for (auto c : hist) d += c > 0;
    return d;
}

}  // namespace

KMeansResult kmeans_intensity_full(const GrayFrame& frame, int k, std::uint64_t /*seed*/) {
    if (k < 2) throw std::invalid_argument("kmeans_intensity: k must be >= 2");
    const auto hist = intensity_hist(frame);
    if (count_distinct(hist) < k)
        throw std::invalid_argument("kmeans_intensity: fewer distinct intensities than k");

    const std::size_t n = frame.pixels.size();

    // Init at evenly spaced quantiles of the intensity distribution; if the
    // distribution is so skewed that quantiles collide, fall back to evenly
    // spaced positions over the sorted distinct values.
    std::vector<double> centroids(k);
    {
        std::array<std::uint64_t, 256> cum{};
        std::uint64_t acc = 0;
        for (int v = 0; v < 256; ++v) {
            acc += hist[v];
            cum[v] = acc;
        }
        for (int j = 0; j < k; ++j) {
            const double q = (j + 0.5) / k;
            const auto rank = static_cast<std::uint64_t>(q * static_cast<double>(n));
            int v = 0;
            while (v < 255 && cum[v] <= rank) ++v;
            centroids[j] = v;
        }
        const bool collided =
            std::adjacent_find(centroids.begin(), centroids.end()) != centroids.end();
        if (collided) {
            std::vector<int> distinct;
            for (int v = 0; v < 256; ++v)
                if (hist[v] > 0) distinct.push_back(v);
            for (int j = 0; j < k; ++j) {
                const auto idx = static_cast<std::size_t>(
                    (j + 0.5) / k * static_cast<double>(distinct.size() - 1) + 0.5);
                centroids[j] = distinct[std::min(idx, distinct.size() - 1)];
            }
        }
    }

    // Lloyd iterations over the 256 intensity bins.
    std::array<int, 256> assign{};
    assign.fill(-1);
    std::vector<double> inertia_history;
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        std::vector<double> sum(k, 0.0);
        std::vector<std::uint64_t> cnt(k, 0);
        for (int v = 0; v < 256; ++v) {
            if (hist[v] == 0) continue;
            int best = 0;
            double best_d = std::abs(v - centroids[0]);
            for (int j = 1; j < k; ++j) {
                const double d = std::abs(v - centroids[j]);
                if (d < best_d) {  // ties keep the lower index
                    best_d = d;
                    best = j;
                }
            }
            if (assign[v] != best) {
                assign[v] = best;
                changed = true;
            }
            inertia += hist[v] * best_d * best_d;
            sum[best] += static_cast<double>(hist[v]) * v;
            cnt[best] += hist[v];
        }
        inertia_history.push_back(inertia);
        if (!changed) break;
        for (int j = 0; j < k; ++j)
            if (cnt[j] > 0) centroids[j] = sum[j] / static_cast<double>(cnt[j]);
    }

    // Relabel so ids ascend with centroid intensity.
    std::vector<int> order(k);
    for (int j = 0; j < k; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return centroids[a] < centroids[b]; });
    std::vector<int> rank(k);
    for (int r = 0; r < k; ++r) rank[order[r]] = r;

    KMeansResult res;
    res.labels = LabelMap(frame.width, frame.height, k);
    for (std::size_t i = 0; i < n; ++i) res.labels.labels[i] = rank[assign[frame.pixels[i]]];
    res.centroids.resize(k);
    for (int r = 0; r < k; ++r) res.centroids[r] = centroids[order[r]];
    res.inertia_history = std::move(inertia_history);
    return res;
}

LabelMap kmeans_intensity(const GrayFrame& frame, int k, std::uint64_t seed) {
    return kmeans_intensity_full(frame, k, seed).labels;
}

GmmResult gmm_segment_full(const GrayFrame& frame, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("gmm_segment: k must be >= 2");
    const auto hist = intensity_hist(frame);
    if (count_distinct(hist) < k)
        throw std::invalid_argument("gmm_segment: degenerate input (fewer distinct intensities than k)");

    const double n = static_cast<double>(frame.pixels.size());
    constexpr double var_floor = 1e-4;
    constexpr double two_pi = 2.0 * 3.14159265358979323846;

    // Initialize from k-means clusters (already sorted by intensity).
    const KMeansResult km = kmeans_intensity_full(frame, k, seed);
    std::vector<double> mean = km.centroids, var(k, 0.0), weight(k, 0.0);
    {
        std::vector<double> sum(k, 0.0), sumsq(k, 0.0), cnt(k, 0.0);
        for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
            const int j = km.labels.labels[i];
            const double v = frame.pixels[i];
            sum[j] += v;
            sumsq[j] += v * v;
            cnt[j] += 1.0;
        }
        for (int j = 0; j < k; ++j) {
            weight[j] = cnt[j] / n;
            if (cnt[j] > 0) {
                mean[j] = sum[j] / cnt[j];
                var[j] = std::max(var_floor, sumsq[j] / cnt[j] - mean[j] * mean[j]);
            } else {
                var[j] = 1.0;
            }
        }
    }

    // EM over the 256 intensity bins, responsibilities in log space.
    std::vector<double> loglik_history;
    std::vector<std::vector<double>> resp(k, std::vector<double>(256, 0.0));
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 100; ++iter) {
        double ll = 0.0;
        for (int v = 0; v < 256; ++v) {
            if (hist[v] == 0) continue;
            double max_lp = -std::numeric_limits<double>::infinity();
            std::vector<double> lp(k);
            for (int j = 0; j < k; ++j) {
                const double d = v - mean[j];
                lp[j] = std::log(weight[j]) - 0.5 * std::log(two_pi * var[j]) - d * d / (2.0 * var[j]);
                max_lp = std::max(max_lp, lp[j]);
            }
            double sum_exp = 0.0;
            for (int j = 0; j < k; ++j) sum_exp += std::exp(lp[j] - max_lp);
            const double log_px = max_lp + std::log(sum_exp);
            ll += hist[v] * log_px;
            for (int j = 0; j < k; ++j) resp[j][v] = std::exp(lp[j] - log_px);
        }
        loglik_history.push_back(ll);

        // M-step.
        for (int j = 0; j < k; ++j) {
            double rsum = 0.0, msum = 0.0;
            for (int v = 0; v < 256; ++v) {
                if (hist[v] == 0) continue;
                const double r = resp[j][v] * hist[v];
                rsum += r;
                msum += r * v;
            }
            weight[j] = rsum / n;
            if (rsum > 0) {
                mean[j] = msum / rsum;
                double vsum = 0.0;
                for (int v = 0; v < 256; ++v) {
                    if (hist[v] == 0) continue;
                    const double d = v - mean[j];
                    vsum += resp[j][v] * hist[v] * d * d;
                }
                var[j] = std::max(var_floor, vsum / rsum);
            }
        }
        double wsum = 0.0;
        for (int j = 0; j < k; ++j) wsum += weight[j];
        for (int j = 0; j < k; ++j) weight[j] /= wsum;

        if (ll - prev_ll < 1e-5 && iter > 0) break;
        prev_ll = ll;
    }

    // Argmax responsibility per intensity, then relabel sorted by mean.
    std::array<int, 256> assign{};
    for (int v = 0; v < 256; ++v) {
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (resp[j][v] > resp[best][v]) best = j;
        assign[v] = best;
    }
    std::vector<int> order(k);
    for (int j = 0; j < k; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mean[a] < mean[b]; });
    std::vector<int> rank(k);
    for (int r = 0; r < k; ++r) rank[order[r]] = r;

    GmmResult res;
    res.labels = LabelMap(frame.width, frame.height, k);
    for (std::size_t i = 0; i < frame.pixels.size(); ++i)
        res.labels.labels[i] = rank[assign[frame.pixels[i]]];
    res.means.resize(k);
    res.variances.resize(k);
    res.weights.resize(k);
    for (int r = 0; r < k; ++r) {
        res.means[r] = mean[order[r]];
        res.variances[r] = var[order[r]];
        res.weights[r] = weight[order[r]];
    }
    res.loglik_history = std::move(loglik_history);
    return res;
}

LabelMap gmm_segment(const GrayFrame& frame, int k, std::uint64_t seed) {
    return gmm_segment_full(frame, k, seed).labels;
}

}  // namespace cardioquant
