#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cardioquant/pgm.hpp"
#include "cardioquant/rng.hpp"
#include "cardioquant/synth.hpp"
#include "cardioquant/video.hpp"

using namespace cardioquant;
namespace fs = std::filesystem;

namespace {

GrayFrame random_frame(int w, int h, std::uint64_t seed) {
    Rng rng(seed);
    GrayFrame f(w, h);
    for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    return f;
}

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("cardioquant_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("pgm decodes a minimal frame") {
    std::vector<std::uint8_t> bytes = {'P', '5', '\n', '2', ' ', '1', '\n', '2', '5', '5', '\n', 0, 255};
    const GrayFrame f = read_pgm(bytes);
    CHECK(f.width == 2);
    CHECK(f.height == 1);
    CHECK(f.pixels == std::vector<std::uint8_t>{0, 255});
}

TEST_CASE("pgm writes the canonical header") {
    GrayFrame f(1, 1);
    f.pixels[0] = 7;
    const auto bytes = write_pgm(f);
    const std::string header(bytes.begin(), bytes.begin() + 11);
    CHECK(header == "P5\n1 1\n255\n");
    CHECK(bytes.back() == 7);
    CHECK(bytes.size() == 12);
}

TEST_CASE("pgm round-trip is pixel-exact over random frames") {
    for (int i = 0; i < 25; ++i) {
        const GrayFrame f = random_frame(1 + i * 3 % 40 + 1, 1 + i * 7 % 30 + 1, 100 + i);
        CHECK(read_pgm(write_pgm(f)) == f);
    }
}

TEST_CASE("pgm write is deterministic and byte-stable under re-encode") {
    const GrayFrame f = random_frame(17, 9, 42);
    const auto a = write_pgm(f);
    const auto b = write_pgm(f);
    CHECK(a == b);
    CHECK(write_pgm(read_pgm(a)) == a);
}

TEST_CASE("pgm header comments are skipped") {
    std::vector<std::uint8_t> bytes;
    const std::string header = "P5\n# a comment\n2 1\n# another\n255\n";
    bytes.insert(bytes.end(), header.begin(), header.end());
    bytes.push_back(10);
    bytes.push_back(20);
    const GrayFrame f = read_pgm(bytes);
    CHECK(f.width == 2);
    CHECK(f.pixels[1] == 20);
}

TEST_CASE("pgm rejects malformed input") {
    CHECK_THROWS(read_pgm({'P', '6', '\n'}));
    std::vector<std::uint8_t> truncated = {'P', '5', '\n', '4', ' ', '4', '\n', '2', '5', '5', '\n', 1};
    CHECK_THROWS(read_pgm(truncated));
    std::vector<std::uint8_t> bigmax = {'P', '5', '\n', '1', ' ', '1', '\n', '6', '5', '5', '3',
                                        '5', '\n', 0, 0};
    CHECK_THROWS(read_pgm(bigmax));
}

TEST_CASE("pgm decodes a 640x404 frame") {
    // The working resolution of the recordings this pipeline targets.
    const GrayFrame f = random_frame(640, 404, 7);
    const auto bytes = write_pgm(f);
    CHECK(bytes.size() > 255 * 1000);
    const GrayFrame back = read_pgm(bytes);
    CHECK(back.width == 640);
    CHECK(back.height == 404);
}

TEST_CASE("load_sequence reads manifest-described frames in order") {
    const auto dir = temp_dir("seq");
    VideoSequence seq;
    seq.video_id = "vid1";
    seq.fps = 20.0;
    for (int i = 0; i < 3; ++i) seq.frames.push_back(random_frame(8, 6, 200 + i));
    write_sequence(seq, dir, "f_%03d.pgm");

    const VideoSequence loaded = load_sequence(dir / "manifest.json");
    CHECK(loaded.video_id == "vid1");
    CHECK(loaded.fps == 20.0);
    REQUIRE(loaded.frames.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(loaded.frames[i] == seq.frames[i]);
    fs::remove_all(dir);
}

TEST_CASE("load_sequence rejects bad manifests") {
    const auto dir = temp_dir("badseq");
    auto write_manifest = [&](const std::string& body) {
        std::ofstream out(dir / "manifest.json");
        out << body;
    };

    write_manifest(R"({"video_id":"v","fps":20,"width":4,"height":4,"frame_count":0,"frame_pattern":"f_%03d.pgm"})");
    CHECK_THROWS(load_sequence(dir / "manifest.json"));

    write_manifest(R"({"video_id":"v","fps":0,"width":4,"height":4,"frame_count":1,"frame_pattern":"f_%03d.pgm"})");
    CHECK_THROWS(load_sequence(dir / "manifest.json"));

    // Missing frame file.
    write_manifest(R"({"video_id":"v","fps":20,"width":4,"height":4,"frame_count":1,"frame_pattern":"f_%03d.pgm"})");
    CHECK_THROWS(load_sequence(dir / "manifest.json"));

    // Dimension mismatch across frames.
    write_pgm_file(GrayFrame(4, 4), dir / "f_000.pgm");
    write_pgm_file(GrayFrame(5, 4), dir / "f_001.pgm");
    write_manifest(R"({"video_id":"v","fps":20,"width":4,"height":4,"frame_count":2,"frame_pattern":"f_%03d.pgm"})");
    CHECK_THROWS(load_sequence(dir / "manifest.json"));
    fs::remove_all(dir);
}

TEST_CASE("synthetic sequence round-trips through disk pixel-exact") {
    synth::SynthConfig cfg;
    cfg.width = 48;
    cfg.height = 40;
    cfg.fps = 20.0;
    cfg.duration_s = 3.0;  // 60 frames
    cfg.center_x = 24.0;
    cfg.center_y = 20.0;
    cfg.a0 = 12.0;
    cfg.b0 = 8.0;
    cfg.seed = 11;
    const auto result = synth::generate(cfg);
    REQUIRE(result.video.frames.size() == 60);

    const auto dir = temp_dir("roundtrip");
    write_sequence(result.video, dir);
    const VideoSequence loaded = load_sequence(dir / "manifest.json");
    REQUIRE(loaded.frames.size() == result.video.frames.size());
    for (std::size_t i = 0; i < loaded.frames.size(); ++i)
        CHECK(loaded.frames[i] == result.video.frames[i]);
    fs::remove_all(dir);
}

TEST_CASE("subsample_fps keeps frame 0 and strides evenly") {
    VideoSequence seq;
    seq.video_id = "v";
    seq.fps = 60.0;
    for (int i = 0; i < 60; ++i) {
        GrayFrame f(2, 2);
        f.pixels[0] = static_cast<std::uint8_t>(i);
        seq.frames.push_back(f);
    }

    const VideoSequence five = subsample_fps(seq, 5.0);
    CHECK(five.fps == 5.0);
    REQUIRE(five.frames.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(five.frames[i].pixels[0] == i * 12);

    const VideoSequence same = subsample_fps(seq, 60.0);
    CHECK(same.frames.size() == seq.frames.size());
    CHECK(same.frames[59] == seq.frames[59]);

    CHECK_THROWS(subsample_fps(seq, 7.0));
}

TEST_CASE("subsample_fps composes: 20->10->5 equals 20->5") {
    VideoSequence seq;
    seq.video_id = "v";
    seq.fps = 20.0;
    for (int i = 0; i < 37; ++i) {
        GrayFrame f(1, 1);
        f.pixels[0] = static_cast<std::uint8_t>(i);
        seq.frames.push_back(f);
    }
    const VideoSequence direct = subsample_fps(seq, 5.0);
    const VideoSequence composed = subsample_fps(subsample_fps(seq, 10.0), 5.0);
    REQUIRE(direct.frames.size() == composed.frames.size());
    for (std::size_t i = 0; i < direct.frames.size(); ++i)
        CHECK(direct.frames[i] == composed.frames[i]);
}

TEST_CASE("subsample_fps frame count is ceil(n/k)") {
    for (int n : {1, 5, 12, 13, 24, 61}) {
        VideoSequence seq;
        seq.video_id = "v";
        seq.fps = 60.0;
        for (int i = 0; i < n; ++i) seq.frames.emplace_back(1, 1);
        const auto sub = subsample_fps(seq, 10.0);  // stride 6
        CHECK(sub.frames.size() == static_cast<std::size_t>((n + 5) / 6));
    }
}
