#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cardioquant/image.hpp"

namespace cardioquant {

/// Decode a binary PGM ("P5", maxval <= 255). Header comments are skipped.
/// Throws std::runtime_error on malformed header, unsupported maxval, or a
/// truncated pixel payload.
GrayFrame read_pgm(const std::vector<std::uint8_t>& bytes);
GrayFrame read_pgm_file(const std::filesystem::path& path);

/// Encode as canonical "P5\n<w> <h>\n255\n" + raw pixels. Byte-deterministic.
std::vector<std::uint8_t> write_pgm(const GrayFrame& frame);
void write_pgm_file(const GrayFrame& frame, const std::filesystem::path& path);

/// Masks are stored as PGM with foreground = 255, background = 0.
BinaryMask read_mask_pgm_file(const std::filesystem::path& path);
std::vector<std::uint8_t> write_mask_pgm(const BinaryMask& mask);
void write_mask_pgm_file(const BinaryMask& mask, const std::filesystem::path& path);

}  // namespace cardioquant
