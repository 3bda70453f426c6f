#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cardioquant/geometry.hpp"
#include "cardioquant/preprocess.hpp"
#include "cardioquant/video.hpp"

namespace cardioquant {

/// Per-frame ventricle area in pixels^2; frames whose segmentation came back
/// empty are recorded as missing, not zero.
struct AreaSeries {
    std::string video_id;
    double fps = 0.0;
    std::vector<std::optional<double>> areas;

    std::size_t frame_count() const { return areas.size(); }
    std::size_t missing_count() const {
        std::size_t n = 0;
        for (const auto& a : areas) n += !a.has_value();
        return n;
    }
    double missing_fraction() const {
        return areas.empty() ? 0.0 : static_cast<double>(missing_count()) / areas.size();
    }
};

/// Eq: FS = (D_d - D_s) / D_d, diastolic and systolic short-axis diameters.
double compute_fs(double d_d, double d_s);

/// Prolate spheroid: V = (1/6) * pi * D_L * D_S^2.
double spheroid_volume(double d_l, double d_s);

/// EF% = (EDV - ESV) / EDV * 100.
double compute_ef(double edv, double esv);

/// ED = argmax area, ES = argmin area over non-missing frames, earliest frame
/// on ties. Requires >= 2 non-missing areas and missing fraction <= 20%.
std::pair<int, int> detect_ed_es(const AreaSeries& series);

/// Beats per minute from the dominant period of the area series: first local
/// maximum of the unbiased autocorrelation of the mean-removed, 3-point
/// smoothed series (lags >= 2), refined to sub-lag precision with a parabolic
/// fit; HR = 60 * fps / period. Missing frames are filled by linear
/// interpolation first. Throws if the series is too short or aperiodic.
double compute_hr(const AreaSeries& series);

struct CardiacReport {
    std::string video_id;
    int ed_frame = 0;
    int es_frame = 0;
    double ed_area = 0.0;
    double es_area = 0.0;
    double ef_area = 0.0;    // percent, from areas
    double ef_volume = 0.0;  // percent, from spheroid volumes at the ED/ES frames
    double fs_moments = 0.0;
    double fs_chord = 0.0;
    double sv_area = 0.0;    // pixels^2
    double sv_volume = 0.0;  // pixels^3
    std::optional<double> hr_bpm;  // absent when the series is aperiodic
    std::vector<VentricleGeometry> per_frame;  // measured with options.geometry_method
    std::size_t n_missing = 0;
};

/// Produces one mask per (preprocessed) frame. The frame index lets
/// file-backed segmenters locate their mask.
using Segmenter = std::function<BinaryMask(const GrayFrame& frame, int frame_index)>;

struct QuantifyOptions {
    PreprocessConfig preprocess;
    AxisMethod geometry_method = AxisMethod::moments;
};

/// Per frame: preprocess -> segment -> largest component -> geometry; then
/// ED/ES detection, EF (area and volume), FS with both axis methods, SV, HR.
CardiacReport quantify(const VideoSequence& seq, const Segmenter& segment,
                       const QuantifyOptions& options);

/// The area series underlying a report (shared by quantify and fpscheck).
AreaSeries measure_area_series(const VideoSequence& seq, const Segmenter& segment,
                               const QuantifyOptions& options,
                               std::vector<VentricleGeometry>* per_frame = nullptr);

}  // namespace cardioquant
