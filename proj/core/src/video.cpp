#include "cardioquant/video.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "cardioquant/pgm.hpp"

namespace cardioquant {

std::string format_frame_name(const std::string& pattern, int index) {
    // Validate: exactly one %..d conversion, no other conversions.
    int conversions = 0;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (pattern[i] != '%') continue;
        std::size_t j = i + 1;
        if (j < pattern.size() && pattern[j] == '%') {  // literal %%
            ++i;
            continue;
        }
        while (j < pattern.size() && (pattern[j] == '0' || (pattern[j] >= '1' && pattern[j] <= '9'))) ++j;
        if (j >= pattern.size() || pattern[j] != 'd')
            throw std::invalid_argument("frame pattern: only %0Nd conversions are supported");
        ++conversions;
        i = j;
    }
    if (conversions != 1)
        throw std::invalid_argument("frame pattern must contain exactly one %0Nd conversion");

    char buf[512];
    const int n = std::snprintf(buf, sizeof(buf), pattern.c_str(), index);
    if (n < 0 || n >= static_cast<int>(sizeof(buf)))
        throw std::invalid_argument("frame pattern expands too long");
    return std::string(buf, static_cast<std::size_t>(n));
}

VideoSequence load_sequence(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("manifest: cannot open " + manifest_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("manifest: invalid JSON in " + manifest_path.string() + ": " + e.what());
    }

    VideoSequence seq;
    try {
        seq.video_id = j.at("video_id").get<std::string>();
        seq.fps = j.at("fps").get<double>();
        const int width = j.at("width").get<int>();
        const int height = j.at("height").get<int>();
        const int frame_count = j.at("frame_count").get<int>();
        const std::string pattern = j.at("frame_pattern").get<std::string>();

        if (!(seq.fps > 0.0)) throw std::runtime_error("manifest: fps must be positive");
        if (frame_count < 1) throw std::runtime_error("manifest: frame_count must be >= 1");

        const auto dir = manifest_path.parent_path();
        seq.frames.reserve(static_cast<std::size_t>(frame_count));
        for (int i = 0; i < frame_count; ++i) {
            const auto frame_path = dir / format_frame_name(pattern, i);
            GrayFrame f = read_pgm_file(frame_path);
            if (f.width != width || f.height != height)
                throw std::runtime_error("manifest: frame " + frame_path.string() +
                                         " dimensions do not match manifest");
            seq.frames.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("manifest: missing or mistyped field in " + manifest_path.string() +
                                 ": " + e.what());
    }
    return seq;
}

void write_sequence(const VideoSequence& seq, const std::filesystem::path& dir,
                    const std::string& frame_pattern) {
    if (seq.frames.empty()) throw std::invalid_argument("write_sequence: empty sequence");
    if (!(seq.fps > 0.0)) throw std::invalid_argument("write_sequence: fps must be positive");
    std::filesystem::create_directories(dir);

    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        if (seq.frames[i].width != seq.width() || seq.frames[i].height != seq.height())
            throw std::invalid_argument("write_sequence: frames differ in dimensions");
        write_pgm_file(seq.frames[i], dir / format_frame_name(frame_pattern, static_cast<int>(i)));
    }

    nlohmann::json j;
    j["video_id"] = seq.video_id;
    j["fps"] = seq.fps;
    j["width"] = seq.width();
    j["height"] = seq.height();
    j["frame_count"] = static_cast<int>(seq.frames.size());
    j["frame_pattern"] = frame_pattern;

    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("manifest: cannot write in " + dir.string());
    out << j.dump(2) << "\n";
}

VideoSequence subsample_fps(const VideoSequence& seq, double target_fps) {
    if (!(target_fps > 0.0)) throw std::invalid_argument("subsample_fps: target fps must be positive");
    const double ratio = seq.fps / target_fps;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9)
        throw std::invalid_argument("subsample_fps: target fps must divide source fps to an integer stride");
    const auto stride = static_cast<std::size_t>(rounded);

    VideoSequence out;
    out.video_id = seq.video_id;
    out.fps = target_fps;
    for (std::size_t i = 0; i < seq.frames.size(); i += stride) out.frames.push_back(seq.frames[i]);
    return out;
}

}  // namespace cardioquant
