// cardioquant: batch cardiac-function assessment for embryonic-zebrafish
// heart videos. Subcommands: synth | train | segment | quantify | eval |
// fpscheck. Exit codes: 0 success (possibly partial batch), 1 all videos
// failed, 2 unreadable input, 3 config/model error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cardioquant/cardiac.hpp"
#include "cardioquant/classical.hpp"
#include "cardioquant/geometry.hpp"
#include "cardioquant/metrics.hpp"
#include "cardioquant/parallel.hpp"
#include "cardioquant/pgm.hpp"
#include "cardioquant/preprocess.hpp"
#include "cardioquant/report_csv.hpp"
#include "cardioquant/synth.hpp"
#include "cardioquant/unet.hpp"
#include "cardioquant/video.hpp"

namespace fs = std::filesystem;
using namespace cardioquant;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAllFailed = 1;
constexpr int kExitIo = 2;
constexpr int kExitConfig = 3;

struct RunConfig {
    PreprocessConfig preprocess;
    std::string backend;
    int threshold = 100;
    double canny_low = 0.1;
    double canny_high = 0.3;
    int bgsub_tau = 30;
    int clusters = 3;
    std::string model_path;
    std::string mask_pattern = "m_%04d.pgm";
    std::string geometry = "moments";
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

// Config file < flags. The JSON document carries the same keys as the flags;
// any missing key keeps its default.
void apply_config_file(RunConfig& cfg, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config: invalid JSON: " + std::string(e.what()));
    }
    if (j.contains("preprocess")) {
        const auto& p = j["preprocess"];
        if (p.contains("roi")) {
            const auto& r = p["roi"];
            cfg.preprocess.roi = Rect{r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(),
                                      r.at(3).get<int>()};
        }
        if (p.contains("sharpen")) cfg.preprocess.sharpen = p["sharpen"].get<bool>();
        if (p.contains("clahe")) cfg.preprocess.clahe = p["clahe"].get<bool>();
        if (p.contains("clahe_tiles")) cfg.preprocess.clahe_tiles = p["clahe_tiles"].get<int>();
        if (p.contains("clahe_clip")) cfg.preprocess.clahe_clip = p["clahe_clip"].get<double>();
    }
    if (j.contains("backend")) cfg.backend = j["backend"].get<std::string>();
    if (j.contains("threshold")) cfg.threshold = j["threshold"].get<int>();
    if (j.contains("canny_low")) cfg.canny_low = j["canny_low"].get<double>();
    if (j.contains("canny_high")) cfg.canny_high = j["canny_high"].get<double>();
    if (j.contains("bgsub_tau")) cfg.bgsub_tau = j["bgsub_tau"].get<int>();
    if (j.contains("clusters")) cfg.clusters = j["clusters"].get<int>();
    if (j.contains("model")) cfg.model_path = j["model"].get<std::string>();
    if (j.contains("mask_pattern")) cfg.mask_pattern = j["mask_pattern"].get<std::string>();
    if (j.contains("geometry")) cfg.geometry = j["geometry"].get<std::string>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
}

AxisMethod parse_geometry(const std::string& name) {
    if (name == "moments") return AxisMethod::moments;
    if (name == "chord") return AxisMethod::chord;
    throw std::runtime_error("geometry must be 'moments' or 'chord'");
}

// Mask-producing backends usable for quantification. orig_index maps the
// (possibly subsampled) frame index back to the source frame numbering so the
// truthmask backend finds its files.
Segmenter make_mask_backend(const RunConfig& cfg, const fs::path& video_dir,
                            std::vector<int> orig_index,
                            const std::shared_ptr<unet::Model<float>>& model) {
    if (cfg.backend == "truthmask") {
        const std::string pattern = cfg.mask_pattern;
        return [video_dir, pattern, orig_index = std::move(orig_index)](const GrayFrame&, int i) {
            const int src = orig_index.empty() ? i : orig_index.at(static_cast<std::size_t>(i));
            return read_mask_pgm_file(video_dir / format_frame_name(pattern, src));
        };
    }
    if (cfg.backend == "unet") {
        return [model](const GrayFrame& f, int) { return unet::predict_mask(*model, f); };
    }
    if (cfg.backend == "otsu") {
        return [](const GrayFrame& f, int) { return otsu_threshold(f).second; };
    }
    if (cfg.backend == "threshold") {
        const auto t = static_cast<std::uint8_t>(std::clamp(cfg.threshold, 0, 255));
        return [t](const GrayFrame& f, int) { return manual_threshold(f, t); };
    }
    throw std::runtime_error("backend '" + cfg.backend +
                             "' cannot be used for quantification (use truthmask|unet|otsu|threshold)");
}

std::shared_ptr<unet::Model<float>> load_backend_model(const RunConfig& cfg) {
    if (cfg.backend != "unet") return nullptr;
    if (cfg.model_path.empty()) throw std::runtime_error("backend unet requires --model");
    return std::make_shared<unet::Model<float>>(unet::load_model_file(cfg.model_path));
}

std::string history_csv(const unet::TrainResult& result) {
    std::string out = "epoch,train_loss,val_loss,val_dice,val_iou,val_pixel_acc\n";
    for (const auto& e : result.history) {
        out += std::to_string(e.epoch);
        out += ',';
        out += format_real(e.train_loss);
        out += ',';
        out += format_real(e.val_loss);
        out += ',';
        out += format_real(e.val_dice);
        out += ',';
        out += format_real(e.val_iou);
        out += ',';
        out += format_real(e.val_pixel_acc);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const synth::SynthConfig& scfg, const std::string& out_dir, int dataset_n,
              std::uint64_t seed) {
    fs::create_directories(out_dir);
    if (dataset_n > 0) {
        synth::DatasetRanges ranges;
        ranges.width = scfg.width;
        ranges.height = scfg.height;
        const auto pairs = synth::make_training_set(ranges, dataset_n, seed);
        synth::write_training_set(pairs, out_dir);
        std::cout << "wrote " << pairs.size() << " frame/mask pairs to " << out_dir << "\n";
        return kExitOk;
    }
    const auto result = synth::generate(scfg);
    synth::write_synth_video(result, out_dir);
    std::cout << "wrote " << result.video.frames.size() << " frames (" << scfg.fps << " fps) to "
              << out_dir << "; analytic EF " << format_real(result.truth.ef_pct) << "%, FS "
              << format_real(result.truth.fs) << ", HR " << format_real(result.truth.hr_bpm)
              << " bpm\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& dataset_dir, const std::string& out_model,
              const std::string& history_path, unet::UNetConfig net_cfg, unet::TrainConfig train_cfg) {
    std::vector<std::pair<GrayFrame, BinaryMask>> dataset;
    try {
        dataset = synth::load_training_set(dataset_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }

    net_cfg.input_h = dataset.front().first.height;
    net_cfg.input_w = dataset.front().first.width;
    net_cfg.seed = train_cfg.seed;

    auto model = unet::unet_init<float>(net_cfg);
    const auto result = unet::train(std::move(model), dataset, train_cfg);

    unet::save_model_file(result.model, out_model);
    const std::string hist = history_path.empty() ? out_model + ".history.csv" : history_path;
    atomic_write_file(hist, history_csv(result));

    const auto& best = result.history[static_cast<std::size_t>(result.best_epoch)];
    std::cout << "trained " << result.history.size() << " epochs on " << result.n_train
              << " samples (" << result.n_val << " validation)\n";
    std::cout << "best epoch " << result.best_epoch << ": val_dice " << format_real(best.val_dice)
              << " val_iou " << format_real(best.val_iou) << " val_pixel_acc "
              << format_real(best.val_pixel_acc) << "\n";
    std::cout << "model: " << out_model << "\nhistory: " << hist << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// segment
// ---------------------------------------------------------------------------

GrayFrame labelmap_to_gray(const LabelMap& lm) {
    GrayFrame f(lm.width, lm.height);
    const int denom = std::max(1, lm.k - 1);
    for (std::size_t i = 0; i < f.pixels.size(); ++i)
        f.pixels[i] = static_cast<std::uint8_t>(lm.labels[i] * 255 / denom);
    return f;
}

int cmd_segment(const RunConfig& cfg, const std::string& manifest) {
    VideoSequence seq;
    try {
        seq = load_sequence(manifest);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    fs::create_directories(cfg.out_dir);

    std::vector<GrayFrame> pre(seq.frames.size());
    parallel_for(seq.frames.size(), [&](std::size_t i) {
        pre[i] = apply_pipeline(seq.frames[i], cfg.preprocess);
    });

    auto write_mask = [&](std::size_t i, const BinaryMask& m) {
        write_mask_pgm_file(m, fs::path(cfg.out_dir) / format_frame_name("m_%04d.pgm",
                                                                         static_cast<int>(i)));
    };

    if (cfg.backend == "bgsub") {
        VideoSequence pseq;
        pseq.video_id = seq.video_id;
        pseq.fps = seq.fps;
        pseq.frames = pre;
        const auto masks = background_subtract(pseq, static_cast<std::uint8_t>(cfg.bgsub_tau));
        for (std::size_t i = 0; i < masks.size(); ++i) write_mask(i, masks[i]);
    } else if (cfg.backend == "kmeans" || cfg.backend == "gmm") {
        const bool km = cfg.backend == "kmeans";
        for (std::size_t i = 0; i < pre.size(); ++i) {
            const LabelMap lm = km ? kmeans_intensity(pre[i], cfg.clusters, cfg.seed)
                                   : gmm_segment(pre[i], cfg.clusters, cfg.seed);
            write_pgm_file(labelmap_to_gray(lm),
                           fs::path(cfg.out_dir) / format_frame_name("m_%04d.pgm", static_cast<int>(i)));
        }
    } else if (cfg.backend == "canny") {
        for (std::size_t i = 0; i < pre.size(); ++i)
            write_mask(i, canny_edges(pre[i], cfg.canny_low, cfg.canny_high));
    } else if (cfg.backend == "otsu" || cfg.backend == "threshold" || cfg.backend == "unet") {
        const auto model = load_backend_model(cfg);
        const auto segmenter = make_mask_backend(cfg, fs::path(manifest).parent_path(), {}, model);
        for (std::size_t i = 0; i < pre.size(); ++i)
            write_mask(i, segmenter(pre[i], static_cast<int>(i)));
    } else {
        std::cerr << "error: unknown segment backend '" << cfg.backend << "'\n";
        return kExitConfig;
    }
    std::cout << "wrote " << seq.frames.size() << " masks to " << cfg.out_dir << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// quantify
// ---------------------------------------------------------------------------

struct VideoOutcome {
    bool ok = false;
    bool io_failure = false;
    std::string message;
};

int cmd_quantify(const RunConfig& cfg, const std::vector<std::string>& manifests) {
    std::shared_ptr<unet::Model<float>> model;
    QuantifyOptions options;
    try {
        model = load_backend_model(cfg);
        options.preprocess = cfg.preprocess;
        options.geometry_method = parse_geometry(cfg.geometry);
        if (cfg.backend != "truthmask" && cfg.backend != "unet" && cfg.backend != "otsu" &&
            cfg.backend != "threshold")
            throw std::runtime_error("backend '" + cfg.backend + "' is not usable for quantify");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    fs::create_directories(cfg.out_dir);

    std::vector<VideoOutcome> outcomes(manifests.size());
    parallel_for(manifests.size(), [&](std::size_t vi) {
        auto& outcome = outcomes[vi];
        VideoSequence seq;
        try {
            seq = load_sequence(manifests[vi]);
        } catch (const std::exception& e) {
            outcome.io_failure = true;
            outcome.message = e.what();
            return;
        }
        try {
            const auto segmenter =
                make_mask_backend(cfg, fs::path(manifests[vi]).parent_path(), {}, model);
            const CardiacReport report = quantify(seq, segmenter, options);
            atomic_write_file(fs::path(cfg.out_dir) / (seq.video_id + "_frames.csv"),
                              frames_csv(report));
            atomic_write_file(fs::path(cfg.out_dir) / (seq.video_id + "_summary.csv"),
                              summary_csv(report));
            outcome.ok = true;
            outcome.message = seq.video_id + ": EF " + format_real(report.ef_area) + "% (frames " +
                              std::to_string(report.per_frame.size()) + ", missing " +
                              std::to_string(report.n_missing) + ")";
        } catch (const std::exception& e) {
            outcome.message = std::string(seq.video_id) + ": " + e.what();
        }
    });

    int n_ok = 0, n_warn = 0;
    bool all_io = true;
    for (const auto& o : outcomes) {
        if (o.ok) {
            ++n_ok;
            all_io = false;
            std::cout << o.message << "\n";
        } else {
            ++n_warn;
            if (!o.io_failure) all_io = false;
            std::cerr << "warning: " << o.message << "\n";
        }
    }
    if (n_ok > 0) {
        if (n_warn > 0) std::cerr << "warnings: " << n_warn << "\n";
        return kExitOk;
    }
    return all_io ? kExitIo : kExitAllFailed;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const std::string& pred_dir, const std::string& truth_dir, const std::string& out_path) {
    std::vector<fs::path> names;
    try {
        if (!fs::is_directory(pred_dir) || !fs::is_directory(truth_dir))
            throw std::runtime_error("eval: both arguments must be directories");
        for (const auto& e : fs::directory_iterator(pred_dir))
            if (e.path().extension() == ".pgm") names.push_back(e.path().filename());
        std::sort(names.begin(), names.end());
        if (names.empty()) throw std::runtime_error("eval: no PGM masks in " + pred_dir);
        for (const auto& n : names)
            if (!fs::exists(fs::path(truth_dir) / n))
                throw std::runtime_error("eval: missing truth mask " + n.string());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }

    std::string csv = "frame_index,pixel_accuracy,dice,iou\n";
    double sum_acc = 0.0, sum_dice = 0.0, sum_iou = 0.0;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const BinaryMask pred = read_mask_pgm_file(fs::path(pred_dir) / names[i]);
        const BinaryMask truth = read_mask_pgm_file(fs::path(truth_dir) / names[i]);
        const double acc = pixel_accuracy(truth, pred);
        const double dice = dice_coefficient(truth, pred).value;
        const double jaccard = iou(truth, pred).value;
        sum_acc += acc;
        sum_dice += dice;
        sum_iou += jaccard;
        csv += std::to_string(i);
        csv += ',';
        csv += format_real(acc);
        csv += ',';
        csv += format_real(dice);
        csv += ',';
        csv += format_real(jaccard);
        csv += '\n';
    }
    const double n = static_cast<double>(names.size());
    csv += "mean," + format_real(sum_acc / n) + "," + format_real(sum_dice / n) + "," +
           format_real(sum_iou / n) + "\n";
    atomic_write_file(out_path, csv);
    std::cout << "evaluated " << names.size() << " mask pairs; mean dice "
              << format_real(sum_dice / n) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// fpscheck
// ---------------------------------------------------------------------------

int cmd_fpscheck(const RunConfig& cfg, const std::string& manifest, const std::vector<double>& rates) {
    VideoSequence seq;
    try {
        seq = load_sequence(manifest);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }

    std::shared_ptr<unet::Model<float>> model;
    QuantifyOptions options;
    try {
        model = load_backend_model(cfg);
        options.preprocess = cfg.preprocess;
        options.geometry_method = parse_geometry(cfg.geometry);
        for (double r : rates) {
            const double k = seq.fps / r;
            if (!(r > 0.0) || std::abs(k - std::round(k)) > 1e-9)
                throw std::runtime_error("rate " + std::to_string(r) + " does not divide source fps");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    fs::create_directories(cfg.out_dir);

    const fs::path video_dir = fs::path(manifest).parent_path();
    std::string summary = "fps,ef_area_pct\n";
    for (double rate : rates) {
        const VideoSequence sub = subsample_fps(seq, rate);
        const auto stride = static_cast<int>(std::lround(seq.fps / rate));
        std::vector<int> orig_index(sub.frames.size());
        for (std::size_t i = 0; i < orig_index.size(); ++i)
            orig_index[i] = static_cast<int>(i) * stride;

        const auto segmenter = make_mask_backend(cfg, video_dir, orig_index, model);
        const CardiacReport report = quantify(sub, segmenter, options);

        std::string csv = "frame_index,time_s,area_px\n";
        for (std::size_t i = 0; i < report.per_frame.size(); ++i) {
            csv += std::to_string(i);
            csv += ',';
            csv += format_real(static_cast<double>(i) / rate);
            csv += ',';
            csv += std::to_string(static_cast<long long>(report.per_frame[i].area));
            csv += '\n';
        }
        char rate_label[32];
        std::snprintf(rate_label, sizeof(rate_label), "%g", rate);
        atomic_write_file(fs::path(cfg.out_dir) /
                              (seq.video_id + "_fps" + rate_label + ".csv"),
                          csv);
        summary += std::string(rate_label) + "," + format_real(report.ef_area) + "\n";
        std::cout << "fps " << rate_label << ": EF " << format_real(report.ef_area) << "%\n";
    }
    atomic_write_file(fs::path(cfg.out_dir) / (seq.video_id + "_fpscheck_summary.csv"), summary);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cardiac-function assessment for embryonic-zebrafish heart videos"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;

    // --- synth ---
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic beating-ventricle video");
    synth::SynthConfig scfg;
    scfg.center_x = scfg.center_y = -1.0;  // default: frame center
    std::string synth_out = "synth_out";
    int dataset_n = 0;
    double occlude_frac = -1.0, occlude_dim = 0.5;
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--width", scfg.width);
    synth_cmd->add_option("--height", scfg.height);
    synth_cmd->add_option("--fps", scfg.fps);
    synth_cmd->add_option("--duration", scfg.duration_s, "seconds");
    synth_cmd->add_option("--cx", scfg.center_x);
    synth_cmd->add_option("--cy", scfg.center_y);
    synth_cmd->add_option("--ax", scfg.a0, "base semi-major axis, px");
    synth_cmd->add_option("--bx", scfg.b0, "base semi-minor axis, px");
    synth_cmd->add_option("--m", scfg.modulation, "axis modulation fraction");
    synth_cmd->add_option("--freq", scfg.beat_freq, "beat frequency, Hz");
    synth_cmd->add_option("--phase", scfg.phase, "beat phase, radians");
    synth_cmd->add_option("--orientation", scfg.orientation, "radians");
    synth_cmd->add_option("--noise", scfg.noise_sigma);
    synth_cmd->add_option("--texture", scfg.texture_contrast);
    synth_cmd->add_option("--occlude-frac", occlude_frac, "dim the left fraction of the frame");
    synth_cmd->add_option("--occlude-dim", occlude_dim);
    synth_cmd->add_option("--seed", scfg.seed);
    synth_cmd->add_option("--video-id", scfg.video_id);
    synth_cmd->add_option("--dataset", dataset_n,
                          "emit N training frame/mask pairs instead of a video");

    // --- train ---
    auto* train_cmd = app.add_subcommand("train", "train the U-net on a frames/+masks/ dataset");
    std::string dataset_dir, out_model, history_path;
    unet::UNetConfig net_cfg;
    unet::TrainConfig train_cfg;
    std::string loss_name = "dice";
    train_cmd->add_option("--dataset", dataset_dir, "directory with frames/ and masks/")->required();
    train_cmd->add_option("--out-model", out_model)->required();
    train_cmd->add_option("--history", history_path, "history CSV path (default <model>.history.csv)");
    train_cmd->add_option("--loss", loss_name)->check(CLI::IsMember({"dice", "bce"}));
    train_cmd->add_option("--lr", train_cfg.learning_rate);
    train_cmd->add_option("--batch", train_cfg.batch_size);
    train_cmd->add_option("--epochs", train_cfg.epochs)->required();
    train_cmd->add_option("--val-fraction", train_cfg.val_fraction);
    train_cmd->add_option("--seed", train_cfg.seed);
    train_cmd->add_option("--depth", net_cfg.depth);
    train_cmd->add_option("--base", net_cfg.base_channels);
    train_cmd->add_option("--dropout", net_cfg.dropout_p);

    // --- segment ---
    auto* segment_cmd = app.add_subcommand("segment", "write per-frame masks/label maps for a video");
    std::string segment_manifest;
    segment_cmd->add_option("--manifest", segment_manifest)->required();

    // --- quantify ---
    auto* quantify_cmd = app.add_subcommand("quantify", "compute EF/FS/SV/HR and CSV reports");
    std::vector<std::string> manifests;
    quantify_cmd->add_option("manifests", manifests, "manifest JSON paths")->required();

    // --- eval ---
    auto* eval_cmd = app.add_subcommand("eval", "segmentation metrics between two mask directories");
    std::string pred_dir, truth_dir, eval_out;
    eval_cmd->add_option("--pred", pred_dir)->required();
    eval_cmd->add_option("--truth", truth_dir)->required();
    eval_cmd->add_option("--out", eval_out, "metrics CSV path")->required();

    // --- fpscheck ---
    auto* fps_cmd = app.add_subcommand("fpscheck", "area series and EF at subsampled frame rates");
    std::string fps_manifest;
    std::vector<double> fps_rates;
    fps_cmd->add_option("--manifest", fps_manifest)->required();
    fps_cmd->add_option("--fps-rates", fps_rates, "rates that divide the source fps")
        ->required()
        ->delimiter(',');

    // Shared flags on the subcommands that process videos.
    for (auto* cmd : {segment_cmd, quantify_cmd, fps_cmd}) {
        cmd->add_option("--config", config_path, "JSON config file (flags win)");
        cmd->add_option("--backend", cfg.backend, "segmentation backend");
        cmd->add_option("--model", cfg.model_path, "U-net model file (backend unet)");
        cmd->add_option("--mask-pattern", cfg.mask_pattern, "truthmask file pattern");
        cmd->add_option("--threshold", cfg.threshold, "manual threshold intensity");
        cmd->add_option("--canny-low", cfg.canny_low);
        cmd->add_option("--canny-high", cfg.canny_high);
        cmd->add_option("--tau", cfg.bgsub_tau, "background-subtraction intensity delta");
        cmd->add_option("--k", cfg.clusters, "clusters for kmeans/gmm");
        cmd->add_option("--seed", cfg.seed);
        cmd->add_option("--out", cfg.out_dir, "output directory");
        cmd->add_option("--geometry", cfg.geometry)->check(CLI::IsMember({"moments", "chord"}));
        cmd->add_option("--roi", "crop rectangle x,y,w,h")->delimiter(',')->expected(4);
        cmd->add_flag("--sharpen", cfg.preprocess.sharpen, "apply the sharpening kernel");
        cmd->add_flag("--clahe", cfg.preprocess.clahe, "apply CLAHE");
        cmd->add_option("--clahe-tiles", cfg.preprocess.clahe_tiles);
        cmd->add_option("--clahe-clip", cfg.preprocess.clahe_clip);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        // Resolve config file first, then re-apply any explicit flags on the
        // active subcommand (flags win over the file).
        CLI::App* active = app.get_subcommands().front();
        if (!config_path.empty()) {
            RunConfig file_cfg;
            apply_config_file(file_cfg, config_path);
            auto keep_flag = [&](const std::string& name) { return active->count(name) > 0; };
            RunConfig merged = file_cfg;
            if (keep_flag("--backend")) merged.backend = cfg.backend;
            if (keep_flag("--model")) merged.model_path = cfg.model_path;
            if (keep_flag("--mask-pattern")) merged.mask_pattern = cfg.mask_pattern;
            if (keep_flag("--threshold")) merged.threshold = cfg.threshold;
            if (keep_flag("--canny-low")) merged.canny_low = cfg.canny_low;
            if (keep_flag("--canny-high")) merged.canny_high = cfg.canny_high;
            if (keep_flag("--tau")) merged.bgsub_tau = cfg.bgsub_tau;
            if (keep_flag("--k")) merged.clusters = cfg.clusters;
            if (keep_flag("--seed")) merged.seed = cfg.seed;
            if (keep_flag("--out")) merged.out_dir = cfg.out_dir;
            if (keep_flag("--geometry")) merged.geometry = cfg.geometry;
            if (keep_flag("--sharpen")) merged.preprocess.sharpen = cfg.preprocess.sharpen;
            if (keep_flag("--clahe")) merged.preprocess.clahe = cfg.preprocess.clahe;
            if (keep_flag("--clahe-tiles")) merged.preprocess.clahe_tiles = cfg.preprocess.clahe_tiles;
            if (keep_flag("--clahe-clip")) merged.preprocess.clahe_clip = cfg.preprocess.clahe_clip;
            if (keep_flag("--roi")) merged.preprocess.roi = cfg.preprocess.roi;
            cfg = merged;
        }
        if (active->count("--roi") > 0) {
            const auto vals = active->get_option("--roi")->results();
            cfg.preprocess.roi = Rect{std::stoi(vals[0]), std::stoi(vals[1]), std::stoi(vals[2]),
                                      std::stoi(vals[3])};
        }

        if (*synth_cmd) {
            if (scfg.center_x < 0) scfg.center_x = scfg.width / 2.0;
            if (scfg.center_y < 0) scfg.center_y = scfg.height / 2.0;
            if (occlude_frac > 0) scfg.occlusion = synth::Occlusion{occlude_frac, occlude_dim};
            return cmd_synth(scfg, synth_out, dataset_n, scfg.seed);
        }
        if (*train_cmd) {
            train_cfg.loss = loss_name == "bce" ? unet::LossKind::bce : unet::LossKind::dice;
            return cmd_train(dataset_dir, out_model, history_path, net_cfg, train_cfg);
        }
        if (*segment_cmd) {
            if (cfg.backend.empty()) {
                std::cerr << "error: --backend is required\n";
                return kExitConfig;
            }
            return cmd_segment(cfg, segment_manifest);
        }
        if (*quantify_cmd) {
            if (cfg.backend.empty()) {
                std::cerr << "error: --backend is required\n";
                return kExitConfig;
            }
            return cmd_quantify(cfg, manifests);
        }
        if (*eval_cmd) return cmd_eval(pred_dir, truth_dir, eval_out);
        if (*fps_cmd) {
            if (cfg.backend.empty()) {
                std::cerr << "error: --backend is required\n";
                return kExitConfig;
            }
            return cmd_fpscheck(cfg, fps_manifest, fps_rates);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
