#include "cardioquant/pgm.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

namespace cardioquant {

namespace {

// Reads one whitespace-delimited unsigned integer from the PGM header,
// skipping '#' comments that run to end of line.
int parse_header_int(const std::vector<std::uint8_t>& b, std::size_t& pos, const char* what) {
    while (pos < b.size()) {
        const char c = static_cast<char>(b[pos]);
        if (c == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= b.size() || b[pos] < '0' || b[pos] > '9')
        throw std::runtime_error(std::string("pgm: malformed header, expected ") + what);
    long value = 0;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
        value = value * 10 + (b[pos] - '0');
        if (value > 1'000'000'000L) throw std::runtime_error("pgm: header value out of range");
        ++pos;
    }
    return static_cast<int>(value);
}

}  // namespace

GrayFrame read_pgm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw std::runtime_error("pgm: not a binary PGM (missing P5 magic)");
    std::size_t pos = 2;
    const int width = parse_header_int(bytes, pos, "width");
    const int height = parse_header_int(bytes, pos, "height");
    const int maxval = parse_header_int(bytes, pos, "maxval");
    if (width < 1 || height < 1) throw std::runtime_error("pgm: non-positive dimensions");
    if (maxval < 1 || maxval > 255) throw std::runtime_error("pgm: unsupported maxval (must be <= 255)");
    if (pos >= bytes.size()) throw std::runtime_error("pgm: truncated after header");
    ++pos;  // single whitespace byte separates maxval from the payload

    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (bytes.size() - pos < n) throw std::runtime_error("pgm: truncated pixel payload");

    GrayFrame frame(width, height);
    std::copy(bytes.begin() + pos, bytes.begin() + pos + n, frame.pixels.begin());
    return frame;
}

GrayFrame read_pgm_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pgm: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return read_pgm(bytes);
}

std::vector<std::uint8_t> write_pgm(const GrayFrame& frame) {
    const std::string header =
        "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), frame.pixels.begin(), frame.pixels.end());
    return out;
}

void write_pgm_file(const GrayFrame& frame, const std::filesystem::path& path) {
    const auto bytes = write_pgm(frame);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("pgm: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("pgm: short write to " + path.string());
}

BinaryMask read_mask_pgm_file(const std::filesystem::path& path) {
    const GrayFrame f = read_pgm_file(path);
    BinaryMask m(f.width, f.height);
    for (std::size_t i = 0; i < f.pixels.size(); ++i) m.bits[i] = f.pixels[i] >= 128 ? 1 : 0;
    return m;
}

std::vector<std::uint8_t> write_mask_pgm(const BinaryMask& mask) {
    GrayFrame f(mask.width, mask.height);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) f.pixels[i] = mask.bits[i] ? 255 : 0;
    return write_pgm(f);
}

void write_mask_pgm_file(const BinaryMask& mask, const std::filesystem::path& path) {
    const auto bytes = write_mask_pgm(mask);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("pgm: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("pgm: short write to " + path.string());
}

}  // namespace cardioquant
