#pragma once

#include <filesystem>
#include <string>

#include "cardioquant/cardiac.hpp"

namespace cardioquant {

/// Fixed 6-decimal, "."-separated and locale-independent; NaN prints "nan".
std::string format_real(double v);

/// frames CSV: video_id,frame_index,area_px,long_axis_px,short_axis_px,missing_flag
/// Missing frames carry zeros and missing_flag 1. "\n" line endings.
std::string frames_csv(const CardiacReport& report);

/// summary CSV: video_id,ed_frame,es_frame,ed_area_px,es_area_px,ef_area_pct,
/// ef_volume_pct,fs_moments,fs_chord,sv_area_px2,sv_volume_px3,hr_bpm,
/// n_frames,n_missing  (one data row).
std::string summary_csv(const CardiacReport& report);

/// Writes via a temp file + rename so readers never observe a truncated file.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace cardioquant
