#include "cardioquant/cardiac.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cardioquant/parallel.hpp"

namespace cardioquant {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kMaxMissingFraction = 0.20;
}  // namespace

double compute_fs(double d_d, double d_s) {
    if (!(d_d > 0.0)) throw std::invalid_argument("compute_fs: diastolic diameter must be positive");
    if (d_s < 0.0) throw std::invalid_argument("compute_fs: systolic diameter must be >= 0");
    if (d_s > d_d)
        throw std::invalid_argument("compute_fs: systolic diameter exceeds diastolic (mislabeled ED/ES?)");
    return (d_d - d_s) / d_d;
}

double spheroid_volume(double d_l, double d_s) {
    if (d_s < 0.0 || d_l < 0.0) throw std::invalid_argument("spheroid_volume: negative diameter");
    if (d_s > d_l) throw std::invalid_argument("spheroid_volume: short axis exceeds long axis (not prolate)");
    return kPi / 6.0 * d_l * d_s * d_s;
}

double compute_ef(double edv, double esv) {
    if (!(edv > 0.0)) throw std::invalid_argument("compute_ef: EDV must be positive");
    if (esv < 0.0) throw std::invalid_argument("compute_ef: ESV must be >= 0");
    if (esv > edv) throw std::invalid_argument("compute_ef: ESV exceeds EDV (mislabeled ED/ES?)");
    return (edv - esv) / edv * 100.0;
}

std::pair<int, int> detect_ed_es(const AreaSeries& series) {
    std::size_t valid = series.frame_count() - series.missing_count();
    if (valid < 2) throw std::invalid_argument("detect_ed_es: need at least 2 non-missing areas");
    if (series.missing_fraction() > kMaxMissingFraction)
        throw std::runtime_error("detect_ed_es: more than 20% of frames have no segmentation");

    int ed = -1, es = -1;
    for (std::size_t i = 0; i < series.areas.size(); ++i) {
        if (!series.areas[i]) continue;
        const double a = *series.areas[i];
        if (ed < 0 || a > *series.areas[ed]) ed = static_cast<int>(i);
        if (es < 0 || a < *series.areas[es]) es = static_cast<int>(i);
    }
    return {ed, es};
}

double compute_hr(const AreaSeries& series) {
    const std::size_t n = series.frame_count();
    if (n < 8) throw std::invalid_argument("compute_hr: series too short");
    if (!(series.fps > 0.0)) throw std::invalid_argument("compute_hr: fps must be positive");

    // Fill missing samples by linear interpolation (nearest valid at the ends).
    std::vector<double> x(n);
    {
        std::vector<int> valid_idx;
        for (std::size_t i = 0; i < n; ++i)
            if (series.areas[i]) valid_idx.push_back(static_cast<int>(i));
        if (valid_idx.size() < 2) throw std::invalid_argument("compute_hr: too few valid samples");
        for (std::size_t i = 0; i < n; ++i) {
            if (series.areas[i]) {
                x[i] = *series.areas[i];
                continue;
            }
            const auto it = std::lower_bound(valid_idx.begin(), valid_idx.end(), static_cast<int>(i));
            if (it == valid_idx.begin()) {
                x[i] = *series.areas[valid_idx.front()];
            } else if (it == valid_idx.end()) {
                x[i] = *series.areas[valid_idx.back()];
            } else {
                const int hi = *it, lo = *(it - 1);
                const double f = (static_cast<double>(i) - lo) / (hi - lo);
                x[i] = (1.0 - f) * *series.areas[lo] + f * *series.areas[hi];
            }
        }
    }

    // 3-point moving average with edge replication, then mean removal.
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double left = x[i == 0 ? 0 : i - 1];
        const double right = x[i + 1 >= n ? n - 1 : i + 1];
        z[i] = (left + x[i] + right) / 3.0;
    }
    double mean = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(n);
    for (double& v : z) v -= mean;

    // Unbiased autocorrelation.
    const std::size_t max_lag = n - 2;
    std::vector<double> r(max_lag + 1, 0.0);
    for (std::size_t k = 0; k <= max_lag; ++k) {
        double acc = 0.0;
        for (std::size_t t = 0; t + k < n; ++t) acc += z[t] * z[t + k];
        r[k] = acc / static_cast<double>(n - k);
    }

    // First local maximum at lag >= 2 with positive correlation; a flat-top
    // tie keeps the earliest lag.
    int peak = -1;
    for (std::size_t k = 2; k + 1 <= max_lag; ++k) {
        if (r[k] > 0.0 && r[k - 1] < r[k] && r[k] >= r[k + 1]) {
            peak = static_cast<int>(k);
            break;
        }
    }
    if (peak < 0) throw std::runtime_error("compute_hr: no autocorrelation peak (aperiodic series)");

    // Sub-lag refinement: parabola through the peak and its neighbors. The
    // true beat period is rarely an integer number of frames at low fps.
    double delta = 0.0;
    const double denom = r[peak - 1] - 2.0 * r[peak] + r[peak + 1];
    if (std::abs(denom) > 1e-30) delta = 0.5 * (r[peak - 1] - r[peak + 1]) / denom;
    delta = std::clamp(delta, -0.5, 0.5);

    const double period_frames = static_cast<double>(peak) + delta;
    return 60.0 * series.fps / period_frames;
}

AreaSeries measure_area_series(const VideoSequence& seq, const Segmenter& segment,
                               const QuantifyOptions& options,
                               std::vector<VentricleGeometry>* per_frame) {
    const std::size_t n = seq.frames.size();
    std::vector<VentricleGeometry> geos(n);
    parallel_for(n, [&](std::size_t i) {
        const GrayFrame pre = apply_pipeline(seq.frames[i], options.preprocess);
        const BinaryMask mask = largest_component(segment(pre, static_cast<int>(i)));
        geos[i] = measure_geometry(mask, options.geometry_method);
    });

    AreaSeries series;
    series.video_id = seq.video_id;
    series.fps = seq.fps;
    series.areas.reserve(n);
    for (const auto& g : geos) {
        if (g.empty)
            series.areas.push_back(std::nullopt);
        else
            series.areas.push_back(g.area);
    }
    if (per_frame) *per_frame = std::move(geos);
    return series;
}

CardiacReport quantify(const VideoSequence& seq, const Segmenter& segment,
                       const QuantifyOptions& options) {
    CardiacReport report;
    report.video_id = seq.video_id;

    AreaSeries series = measure_area_series(seq, segment, options, &report.per_frame);
    report.n_missing = series.missing_count();

    const auto [ed, es] = detect_ed_es(series);
    report.ed_frame = ed;
    report.es_frame = es;
    report.ed_area = *series.areas[ed];
    report.es_area = *series.areas[es];
    report.ef_area = compute_ef(report.ed_area, report.es_area);
    report.sv_area = report.ed_area - report.es_area;

    // Axis-based indices from both methods at the area-determined ED/ES
    // frames. Segmentation noise can invert the axis ordering between the two
    // frames even though the areas cannot; those cases floor at 0.
    auto segment_frame = [&](int idx) {
        const GrayFrame pre = apply_pipeline(seq.frames[idx], options.preprocess);
        return largest_component(segment(pre, idx));
    };
    const BinaryMask ed_mask = segment_frame(ed);
    const BinaryMask es_mask = segment_frame(es);
    const VentricleGeometry ed_mom = measure_geometry(ed_mask, AxisMethod::moments);
    const VentricleGeometry es_mom = measure_geometry(es_mask, AxisMethod::moments);
    const VentricleGeometry ed_ch = measure_geometry(ed_mask, AxisMethod::chord);
    const VentricleGeometry es_ch = measure_geometry(es_mask, AxisMethod::chord);

    auto fs_or_zero = [](double dd, double ds) { return ds > dd ? 0.0 : compute_fs(dd, ds); };
    report.fs_moments = fs_or_zero(ed_mom.short_axis, es_mom.short_axis);
    report.fs_chord = fs_or_zero(ed_ch.short_axis, es_ch.short_axis);

    const double edv = spheroid_volume(ed_mom.long_axis, ed_mom.short_axis);
    const double esv = spheroid_volume(es_mom.long_axis, es_mom.short_axis);
    if (esv > edv) {
        report.ef_volume = 0.0;
        report.sv_volume = 0.0;
    } else {
        report.ef_volume = compute_ef(edv, esv);
        report.sv_volume = edv - esv;
    }

    try {
        report.hr_bpm = compute_hr(series);
    } catch (const std::exception&) {
        report.hr_bpm = std::nullopt;  // constant or too-short series
    }
    return report;
}

}  // namespace cardioquant
