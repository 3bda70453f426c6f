#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cardioquant/image.hpp"
#include "cardioquant/tensor.hpp"

namespace cardioquant::unet {

/// Encoder/decoder sizing. Channels double per encoder level and halve per
/// decoder level; input dimensions must be divisible by 2^depth.
struct UNetConfig {
    int depth = 3;
    int base_channels = 8;
    double dropout_p = 0.1;
    int input_h = 64;
    int input_w = 64;
    std::uint64_t seed = 0;
};

template <class S>
struct ConvLayer {
    int out_ch = 0, in_ch = 0, kh = 0, kw = 0;
    std::vector<S> w;  // [out_ch][in_ch][kh][kw]
    std::vector<S> b;  // [out_ch]
    // Adam first/second moment accumulators, same layout as w/b.
    std::vector<S> m_w, v_w, m_b, v_b;

    std::size_t weight_count() const { return w.size(); }
};

/// Layer order: per encoder level two 3x3 convs; two bottleneck 3x3 convs
/// (dropout after the second); per decoder level an up-convolution after 2x
/// nearest-neighbor upsampling, then two 3x3 convs on the skip concatenation;
/// final 1x1 conv + sigmoid. All convolutions are same-padding.
template <class S>
struct Model {
    UNetConfig config;
    std::vector<ConvLayer<S>> layers;
    std::int64_t adam_step = 0;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
};

enum class LossKind { bce, dice };

/// Everything backward needs from the matching forward call.
template <class S>
struct ForwardCache {
    Tensor4<S> input;
    std::vector<Tensor4<S>> enc_act1, enc_act2;  // post-ReLU; enc_act2 feeds the skip
    std::vector<Tensor4<S>> pooled;
    std::vector<std::vector<int>> pool_argmax;  // flat input index per pooled cell
    Tensor4<S> bott_act1, bott_act2;
    std::vector<S> dropout_mask;  // empty when dropout is off
    Tensor4<S> bott_out;
    std::vector<Tensor4<S>> dec_up, dec_cat, dec_act1, dec_act2;  // deepest level first
    Tensor4<S> prob;  // sigmoid output
};

template <class S>
struct ForwardResult {
    Tensor4<S> prob;
    ForwardCache<S> cache;
};

/// Per-layer weight/bias gradients, parallel to Model::layers.
template <class S>
struct Gradients {
    std::vector<std::vector<S>> dw, db;
};

/// He-uniform weights from the seeded RNG, zero biases, zero Adam state.
template <class S>
Model<S> unet_init(const UNetConfig& cfg);

/// Dropout is active only in train mode (and only for dropout_p > 0), with a
/// mask derived from dropout_seed.
template <class S>
ForwardResult<S> forward(const Model<S>& model, const Tensor4<S>& batch, bool train_mode,
                         std::uint64_t dropout_seed);

/// BCE: mean over all pixels (probabilities clamped to [1e-7, 1-1e-7]).
/// Dice: smoothed per-sample loss 1 - (2*sum(y*p)+1)/(sum(y)+sum(p)+1),
/// averaged over the batch.
template <class S>
double loss_value(const Tensor4<S>& prob, const Tensor4<S>& truth, LossKind kind);

template <class S>
Gradients<S> backward(const Model<S>& model, const ForwardCache<S>& cache, const Tensor4<S>& truth,
                      LossKind kind);

/// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction;
/// increments the shared step counter.
template <class S>
void adam_step(Model<S>& model, const Gradients<S>& grads, double lr);

struct TrainConfig {
    LossKind loss = LossKind::dice;
    double learning_rate = 1e-3;
    int batch_size = 4;
    int epochs = 1;
    double val_fraction = 0.10;
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_dice = 0.0;
    double val_iou = 0.0;
    double val_pixel_acc = 0.0;
};

struct TrainResult {
    Model<float> model;  // weights of the best-validation-Dice epoch
    std::vector<EpochStats> history;
    int best_epoch = 0;
    std::size_t n_train = 0;
    std::size_t n_val = 0;
};

/// Validation split is taken once before training (the last val_fraction of a
/// seeded shuffle); the train split is reshuffled per epoch. Per-sample
/// passes inside a batch may run on worker threads, but gradients accumulate
/// in sample order so the result is identical for any thread count.
TrainResult train(Model<float> model, const std::vector<std::pair<GrayFrame, BinaryMask>>& dataset,
                  const TrainConfig& cfg);

/// Seeded-shuffle split used by train(); exposed so the split size rule is
/// testable: n_val = floor(n * val_fraction).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(std::size_t n,
                                                                              double val_fraction,
                                                                              std::uint64_t seed);

/// Eval-mode forward + threshold; foreground iff p > 0.5 (so an all-zero
/// model predicts background everywhere).
BinaryMask predict_mask(const Model<float>& model, const GrayFrame& frame);
ProbMap predict_probs(const Model<float>& model, const GrayFrame& frame);

/// Binary serialization: fixed header (magic, version, config) + little-endian
/// float32 blobs + trailing CRC32. Adam state is stored only once training
/// has stepped (adam_step > 0), so a fresh model costs 4 bytes per parameter.
std::vector<std::uint8_t> save_model(const Model<float>& model);
Model<float> load_model(const std::vector<std::uint8_t>& bytes);
void save_model_file(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_model_file(const std::filesystem::path& path);

/// Expected size in bytes of save_model output for this model.
std::size_t serialized_size(const Model<float>& model);

/// Normalization helpers: pixels scale to [0, 1].
template <class S>
Tensor4<S> frame_to_tensor(const GrayFrame& frame);
template <class S>
Tensor4<S> mask_to_tensor(const BinaryMask& mask);
ProbMap tensor_to_probmap(const Tensor4<float>& prob, int sample);

/// Inverted dropout as used in the bottleneck; exposed for the expectation
/// test. Returns the kept/scaled mask applied to values.
template <class S>
std::vector<S> dropout_mask(std::size_t count, double p, std::uint64_t seed);

}  // namespace cardioquant::unet
