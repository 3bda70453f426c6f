#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cardioquant/image.hpp"

namespace cardioquant {

/// Ordered frames plus fps and identity metadata. All frames share dimensions.
struct VideoSequence {
    std::string video_id;
    double fps = 0.0;
    std::vector<GrayFrame> frames;

    int width() const { return frames.empty() ? 0 : frames.front().width; }
    int height() const { return frames.empty() ? 0 : frames.front().height; }
};

/// Loads a sequence described by a JSON manifest:
///   {"video_id": str, "fps": num, "width": int, "height": int,
///    "frame_count": int, "frame_pattern": "f_%04d.pgm"}
/// Frame files are binary PGM in the manifest's directory.
VideoSequence load_sequence(const std::filesystem::path& manifest_path);

/// Writes frames as PGM files plus the manifest, into `dir`.
/// `frame_pattern` must contain exactly one %0Nd conversion.
void write_sequence(const VideoSequence& seq, const std::filesystem::path& dir,
                    const std::string& frame_pattern = "f_%04d.pgm");

/// Keeps frames 0, k, 2k, ... with k = seq.fps / target_fps.
/// target_fps must divide seq.fps to an integer stride.
VideoSequence subsample_fps(const VideoSequence& seq, double target_fps);

/// Expands a printf-style %0Nd pattern for a frame index.
/// Throws if the pattern does not contain exactly one integer conversion.
std::string format_frame_name(const std::string& pattern, int index);

}  // namespace cardioquant
