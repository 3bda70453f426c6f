#include "cardioquant/report_csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cardioquant {

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string frames_csv(const CardiacReport& report) {
    std::string out = "video_id,frame_index,area_px,long_axis_px,short_axis_px,missing_flag\n";
    for (std::size_t i = 0; i < report.per_frame.size(); ++i) {
        const auto& g = report.per_frame[i];
        out += report.video_id;
        out += ',';
        out += std::to_string(i);
        out += ',';
        out += std::to_string(static_cast<long long>(g.area));
        out += ',';
        out += format_real(g.long_axis);
        out += ',';
        out += format_real(g.short_axis);
        out += ',';
        out += g.empty ? '1' : '0';
        out += '\n';
    }
    return out;
}

std::string summary_csv(const CardiacReport& report) {
    std::string out =
        "video_id,ed_frame,es_frame,ed_area_px,es_area_px,ef_area_pct,ef_volume_pct,"
        "fs_moments,fs_chord,sv_area_px2,sv_volume_px3,hr_bpm,n_frames,n_missing\n";
    out += report.video_id;
    out += ',';
    out += std::to_string(report.ed_frame);
    out += ',';
    out += std::to_string(report.es_frame);
    out += ',';
    out += std::to_string(static_cast<long long>(report.ed_area));
    out += ',';
    out += std::to_string(static_cast<long long>(report.es_area));
    out += ',';
    out += format_real(report.ef_area);
    out += ',';
    out += format_real(report.ef_volume);
    out += ',';
    out += format_real(report.fs_moments);
    out += ',';
    out += format_real(report.fs_chord);
    out += ',';
    out += std::to_string(static_cast<long long>(report.sv_area));
    out += ',';
    out += format_real(report.sv_volume);
    out += ',';
    out += report.hr_bpm ? format_real(*report.hr_bpm) : "nan";
    out += ',';
    out += std::to_string(report.per_frame.size());
    out += ',';
    out += std::to_string(report.n_missing);
    out += '\n';
    return out;
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace cardioquant
