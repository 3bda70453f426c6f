#include "cardioquant/unet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "cardioquant/metrics.hpp"
#include "cardioquant/parallel.hpp"
#include "cardioquant/rng.hpp"

namespace cardioquant::unet {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kBceEps = 1e-7;

int channels_at(const UNetConfig& cfg, int level) { return cfg.base_channels << level; }

void validate_config(const UNetConfig& cfg) {
    if (cfg.depth < 1) throw std::invalid_argument("unet: depth must be >= 1");
    if (cfg.base_channels < 1) throw std::invalid_argument("unet: base_channels must be >= 1");
    if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0))
        throw std::invalid_argument("unet: dropout_p must be in [0, 1)");
    const int div = 1 << cfg.depth;
    if (cfg.input_h < div || cfg.input_w < div || cfg.input_h % div != 0 || cfg.input_w % div != 0)
        throw std::invalid_argument("unet: input size must be divisible by 2^depth");
}

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

template <class S>
void conv_forward(const ConvLayer<S>& layer, const Tensor4<S>& in, Tensor4<S>& out) {
    const int h = in.h, w = in.w;
    const int ph = layer.kh / 2, pw = layer.kw / 2;
    out = Tensor4<S>(in.n, layer.out_ch, h, w);
    for (int ni = 0; ni < in.n; ++ni) {
        for (int oc = 0; oc < layer.out_ch; ++oc) {
            S* out_plane = out.plane(ni, oc);
            std::fill(out_plane, out_plane + static_cast<std::size_t>(h) * w, layer.b[oc]);
            for (int ic = 0; ic < layer.in_ch; ++ic) {
                const S* in_plane = in.plane(ni, ic);
                const S* wk = layer.w.data() +
                              (static_cast<std::size_t>(oc) * layer.in_ch + ic) * layer.kh * layer.kw;
                for (int ky = 0; ky < layer.kh; ++ky) {
                    const int dy = ky - ph;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    for (int kx = 0; kx < layer.kw; ++kx) {
                        const int dx = kx - pw;
                        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                        if (x0 >= x1) continue;
                        const S wv = wk[ky * layer.kw + kx];
                        for (int y = y0; y < y1; ++y) {
                            const S* src = in_plane + static_cast<std::size_t>(y + dy) * w + (x0 + dx);
                            S* dst = out_plane + static_cast<std::size_t>(y) * w + x0;
                            for (int x = 0; x < x1 - x0; ++x) dst[x] += wv * src[x];
                        }
                    }
                }
            }
        }
    }
}

template <class S>
void conv_backward(const ConvLayer<S>& layer, const Tensor4<S>& in, const Tensor4<S>& dout,
                   Tensor4<S>& din, std::vector<S>& dw, std::vector<S>& db) {
    const int h = in.h, w = in.w;
    const int ph = layer.kh / 2, pw = layer.kw / 2;
    din = Tensor4<S>(in.n, layer.in_ch, h, w);
    dw.assign(layer.w.size(), S(0));
    db.assign(layer.b.size(), S(0));

    for (int ni = 0; ni < in.n; ++ni) {
        for (int oc = 0; oc < layer.out_ch; ++oc) {
            const S* dout_plane = dout.plane(ni, oc);
            S acc = S(0);
            for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) acc += dout_plane[i];
            db[oc] += acc;
            for (int ic = 0; ic < layer.in_ch; ++ic) {
                const S* in_plane = in.plane(ni, ic);
                S* din_plane = din.plane(ni, ic);
                const std::size_t wbase =
                    (static_cast<std::size_t>(oc) * layer.in_ch + ic) * layer.kh * layer.kw;
                for (int ky = 0; ky < layer.kh; ++ky) {
                    const int dy = ky - ph;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    for (int kx = 0; kx < layer.kw; ++kx) {
                        const int dx = kx - pw;
                        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                        if (x0 >= x1) continue;
                        const S wv = layer.w[wbase + ky * layer.kw + kx];
                        S wgrad = S(0);
                        for (int y = y0; y < y1; ++y) {
                            const S* src = in_plane + static_cast<std::size_t>(y + dy) * w + (x0 + dx);
                            S* dsrc = din_plane + static_cast<std::size_t>(y + dy) * w + (x0 + dx);
                            const S* dop = dout_plane + static_cast<std::size_t>(y) * w + x0;
                            for (int x = 0; x < x1 - x0; ++x) {
                                wgrad += dop[x] * src[x];
                                dsrc[x] += wv * dop[x];
                            }
                        }
                        dw[wbase + ky * layer.kw + kx] += wgrad;
                    }
                }
            }
        }
    }
}

template <class S>
void relu_inplace(Tensor4<S>& t) {
    for (auto& v : t.v)
        if (v < S(0)) v = S(0);
}

// dx = dy where the post-activation is positive.
template <class S>
void relu_backward_inplace(Tensor4<S>& grad, const Tensor4<S>& post_act) {
    for (std::size_t i = 0; i < grad.v.size(); ++i)
        if (!(post_act.v[i] > S(0))) grad.v[i] = S(0);
}

template <class S>
void maxpool2_forward(const Tensor4<S>& in, Tensor4<S>& out, std::vector<int>& argmax) {
    const int oh = in.h / 2, ow = in.w / 2;
    out = Tensor4<S>(in.n, in.c, oh, ow);
    argmax.assign(out.size(), 0);
    std::size_t oi = 0;
    for (int ni = 0; ni < in.n; ++ni)
        for (int ci = 0; ci < in.c; ++ci) {
            const S* p = in.plane(ni, ci);
            const std::size_t plane_base = (static_cast<std::size_t>(ni) * in.c + ci) * in.h * in.w;
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x, ++oi) {
                    // Scan order fixes the tie rule: the first maximum wins.
                    int best_y = 2 * y, best_x = 2 * x;
                    S best = p[static_cast<std::size_t>(best_y) * in.w + best_x];
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const S v = p[static_cast<std::size_t>(2 * y + dy) * in.w + (2 * x + dx)];
                            if (v > best) {
                                best = v;
                                best_y = 2 * y + dy;
                                best_x = 2 * x + dx;
                            }
                        }
                    out.v[oi] = best;
                    argmax[oi] =
                        static_cast<int>(plane_base + static_cast<std::size_t>(best_y) * in.w + best_x);
                }
        }
}

template <class S>
void maxpool2_backward(const Tensor4<S>& dout, const std::vector<int>& argmax, Tensor4<S>& din) {
    for (std::size_t i = 0; i < dout.v.size(); ++i) din.v[static_cast<std::size_t>(argmax[i])] += dout.v[i];
}

template <class S>
void upsample2_forward(const Tensor4<S>& in, Tensor4<S>& out) {
    out = Tensor4<S>(in.n, in.c, in.h * 2, in.w * 2);
    for (int ni = 0; ni < in.n; ++ni)
        for (int ci = 0; ci < in.c; ++ci) {
            const S* src = in.plane(ni, ci);
            S* dst = out.plane(ni, ci);
            for (int y = 0; y < in.h; ++y)
                for (int x = 0; x < in.w; ++x) {
                    const S v = src[static_cast<std::size_t>(y) * in.w + x];
                    S* d0 = dst + static_cast<std::size_t>(2 * y) * out.w + 2 * x;
                    d0[0] = v;
                    d0[1] = v;
                    d0[out.w] = v;
                    d0[out.w + 1] = v;
                }
        }
}

template <class S>
void upsample2_backward(const Tensor4<S>& dout, Tensor4<S>& din) {
    din = Tensor4<S>(dout.n, dout.c, dout.h / 2, dout.w / 2);
    for (int ni = 0; ni < dout.n; ++ni)
        for (int ci = 0; ci < dout.c; ++ci) {
            const S* src = dout.plane(ni, ci);
            S* dst = din.plane(ni, ci);
            for (int y = 0; y < din.h; ++y)
                for (int x = 0; x < din.w; ++x) {
                    const S* s0 = src + static_cast<std::size_t>(2 * y) * dout.w + 2 * x;
                    dst[static_cast<std::size_t>(y) * din.w + x] =
                        s0[0] + s0[1] + s0[dout.w] + s0[dout.w + 1];
                }
        }
}

template <class S>
void concat_channels(const Tensor4<S>& a, const Tensor4<S>& b, Tensor4<S>& out) {
    out = Tensor4<S>(a.n, a.c + b.c, a.h, a.w);
    const std::size_t plane = static_cast<std::size_t>(a.h) * a.w;
    for (int ni = 0; ni < a.n; ++ni) {
        for (int ci = 0; ci < a.c; ++ci)
            std::copy_n(a.plane(ni, ci), plane, out.plane(ni, ci));
        for (int ci = 0; ci < b.c; ++ci)
            std::copy_n(b.plane(ni, ci), plane, out.plane(ni, a.c + ci));
    }
}

template <class S>
void split_channels(const Tensor4<S>& d, int c_first, Tensor4<S>& da, Tensor4<S>& db) {
    da = Tensor4<S>(d.n, c_first, d.h, d.w);
    db = Tensor4<S>(d.n, d.c - c_first, d.h, d.w);
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    for (int ni = 0; ni < d.n; ++ni) {
        for (int ci = 0; ci < c_first; ++ci) std::copy_n(d.plane(ni, ci), plane, da.plane(ni, ci));
        for (int ci = 0; ci < db.c; ++ci)
            std::copy_n(d.plane(ni, c_first + ci), plane, db.plane(ni, ci));
    }
}

#ifndef NDEBUG
template <class S>
void assert_finite(const Tensor4<S>& t, const char* where) {
    for (auto v : t.v)
        if (!std::isfinite(static_cast<double>(v)))
            throw std::runtime_error(std::string("unet: non-finite activation after ") + where);
}
#else
template <class S>
void assert_finite(const Tensor4<S>&, const char*) {}
#endif

// Layer index bookkeeping; the model stores a flat vector.
struct LayerIndex {
    int depth;
    int enc1(int l) const { return 2 * l; }
    int enc2(int l) const { return 2 * l + 1; }
    int bott1() const { return 2 * depth; }
    int bott2() const { return 2 * depth + 1; }
    // i counts decoder stages from the deepest (i = 0 handles level depth-1).
    int upconv(int i) const { return 2 * depth + 2 + 3 * i; }
    int dconv1(int i) const { return 2 * depth + 2 + 3 * i + 1; }
    int dconv2(int i) const { return 2 * depth + 2 + 3 * i + 2; }
    int out() const { return 5 * depth + 2; }
    int total() const { return 5 * depth + 3; }
};

}  // namespace

// ---------------------------------------------------------------------------
// init / forward / loss / backward / adam
// ---------------------------------------------------------------------------

template <class S>
Model<S> unet_init(const UNetConfig& cfg) {
    validate_config(cfg);
    const LayerIndex li{cfg.depth};

    Model<S> model;
    model.config = cfg;
    model.layers.resize(static_cast<std::size_t>(li.total()));

    auto shape = [&](int idx, int oc, int ic, int k) {
        auto& l = model.layers[static_cast<std::size_t>(idx)];
        l.out_ch = oc;
        l.in_ch = ic;
        l.kh = l.kw = k;
        l.w.assign(static_cast<std::size_t>(oc) * ic * k * k, S(0));
        l.b.assign(static_cast<std::size_t>(oc), S(0));
        l.m_w.assign(l.w.size(), S(0));
        l.v_w.assign(l.w.size(), S(0));
        l.m_b.assign(l.b.size(), S(0));
        l.v_b.assign(l.b.size(), S(0));
    };

    for (int l = 0; l < cfg.depth; ++l) {
        const int ic = l == 0 ? 1 : channels_at(cfg, l - 1);
        shape(li.enc1(l), channels_at(cfg, l), ic, 3);
        shape(li.enc2(l), channels_at(cfg, l), channels_at(cfg, l), 3);
    }
    shape(li.bott1(), channels_at(cfg, cfg.depth), channels_at(cfg, cfg.depth - 1), 3);
    shape(li.bott2(), channels_at(cfg, cfg.depth), channels_at(cfg, cfg.depth), 3);
    for (int i = 0; i < cfg.depth; ++i) {
        const int level = cfg.depth - 1 - i;
        const int in_ch = i == 0 ? channels_at(cfg, cfg.depth) : channels_at(cfg, level + 1);
        shape(li.upconv(i), channels_at(cfg, level), in_ch, 3);
        shape(li.dconv1(i), channels_at(cfg, level), 2 * channels_at(cfg, level), 3);
        shape(li.dconv2(i), channels_at(cfg, level), channels_at(cfg, level), 3);
    }
    shape(li.out(), 1, cfg.base_channels, 1);

    // He-uniform: limit = sqrt(6 / fan_in); layers are drawn in index order.
    Rng rng(cfg.seed);
    for (auto& layer : model.layers) {
        const double limit = std::sqrt(6.0 / (static_cast<double>(layer.in_ch) * layer.kh * layer.kw));
        for (auto& wv : layer.w) wv = static_cast<S>(rng.uniform(-limit, limit));
    }
    return model;
}

template <class S>
std::vector<S> dropout_mask(std::size_t count, double p, std::uint64_t seed) {
    std::vector<S> mask(count, S(1));
    if (p <= 0.0) return mask;
    Rng rng(seed);
    const S scale = static_cast<S>(1.0 / (1.0 - p));
    for (auto& m : mask) m = rng.uniform01() < 1.0 - p ? scale : S(0);
    return mask;
}

template <class S>
ForwardResult<S> forward(const Model<S>& model, const Tensor4<S>& batch, bool train_mode,
                         std::uint64_t dropout_seed) {
    const UNetConfig& cfg = model.config;
    if (batch.c != 1 || batch.h != cfg.input_h || batch.w != cfg.input_w)
        throw std::invalid_argument("unet forward: batch shape does not match config input size");
    const LayerIndex li{cfg.depth};

    ForwardCache<S> cache;
    cache.input = batch;
    cache.enc_act1.resize(cfg.depth);
    cache.enc_act2.resize(cfg.depth);
    cache.pooled.resize(cfg.depth);
    cache.pool_argmax.resize(cfg.depth);
    cache.dec_up.resize(cfg.depth);
    cache.dec_cat.resize(cfg.depth);
    cache.dec_act1.resize(cfg.depth);
    cache.dec_act2.resize(cfg.depth);

    const Tensor4<S>* cur = &cache.input;
    for (int l = 0; l < cfg.depth; ++l) {
        conv_forward(model.layers[li.enc1(l)], *cur, cache.enc_act1[l]);
        relu_inplace(cache.enc_act1[l]);
        conv_forward(model.layers[li.enc2(l)], cache.enc_act1[l], cache.enc_act2[l]);
        relu_inplace(cache.enc_act2[l]);
        assert_finite(cache.enc_act2[l], "encoder block");
        maxpool2_forward(cache.enc_act2[l], cache.pooled[l], cache.pool_argmax[l]);
        cur = &cache.pooled[l];
    }

    conv_forward(model.layers[li.bott1()], *cur, cache.bott_act1);
    relu_inplace(cache.bott_act1);
    conv_forward(model.layers[li.bott2()], cache.bott_act1, cache.bott_act2);
    relu_inplace(cache.bott_act2);
    assert_finite(cache.bott_act2, "bottleneck");

    cache.bott_out = cache.bott_act2;
    if (train_mode && cfg.dropout_p > 0.0) {
        cache.dropout_mask = dropout_mask<S>(cache.bott_out.size(), cfg.dropout_p, dropout_seed);
        for (std::size_t i = 0; i < cache.bott_out.v.size(); ++i)
            cache.bott_out.v[i] *= cache.dropout_mask[i];
    }

    cur = &cache.bott_out;
    Tensor4<S> upconv_out;
    for (int i = 0; i < cfg.depth; ++i) {
        const int level = cfg.depth - 1 - i;
        upsample2_forward(*cur, cache.dec_up[i]);
        conv_forward(model.layers[li.upconv(i)], cache.dec_up[i], upconv_out);
        concat_channels(cache.enc_act2[level], upconv_out, cache.dec_cat[i]);
        conv_forward(model.layers[li.dconv1(i)], cache.dec_cat[i], cache.dec_act1[i]);
        relu_inplace(cache.dec_act1[i]);
        conv_forward(model.layers[li.dconv2(i)], cache.dec_act1[i], cache.dec_act2[i]);
        relu_inplace(cache.dec_act2[i]);
        assert_finite(cache.dec_act2[i], "decoder block");
        cur = &cache.dec_act2[i];
    }

    Tensor4<S> logits;
    conv_forward(model.layers[li.out()], *cur, logits);
    cache.prob = Tensor4<S>(logits.n, 1, logits.h, logits.w);
    for (std::size_t i = 0; i < logits.v.size(); ++i)
        cache.prob.v[i] = S(1) / (S(1) + std::exp(-logits.v[i]));
    assert_finite(cache.prob, "sigmoid");

    ForwardResult<S> result;
    result.prob = cache.prob;
    result.cache = std::move(cache);
    return result;
}

template <class S>
double loss_value(const Tensor4<S>& prob, const Tensor4<S>& truth, LossKind kind) {
    if (!prob.same_shape(truth)) throw std::invalid_argument("loss_value: shape mismatch");
    const std::size_t per_sample = prob.size() / static_cast<std::size_t>(prob.n);
    if (kind == LossKind::bce) {
        double sum = 0.0;
        for (std::size_t i = 0; i < prob.v.size(); ++i) {
            const double p = std::clamp(static_cast<double>(prob.v[i]), kBceEps, 1.0 - kBceEps);
            const double y = static_cast<double>(truth.v[i]);
            sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        }
        return sum / static_cast<double>(prob.v.size());
    }
    double total = 0.0;
    for (int ni = 0; ni < prob.n; ++ni) {
        const S* p = prob.v.data() + static_cast<std::size_t>(ni) * per_sample;
        const S* y = truth.v.data() + static_cast<std::size_t>(ni) * per_sample;
        double inter = 0.0, sum_p = 0.0, sum_y = 0.0;
        for (std::size_t i = 0; i < per_sample; ++i) {
            inter += static_cast<double>(y[i]) * static_cast<double>(p[i]);
            sum_p += static_cast<double>(p[i]);
            sum_y += static_cast<double>(y[i]);
        }
        total += 1.0 - (2.0 * inter + 1.0) / (sum_y + sum_p + 1.0);
    }
    return total / static_cast<double>(prob.n);
}

namespace {

// dL/dz at the final (pre-sigmoid) conv output.
template <class S>
Tensor4<S> loss_grad_logits(const Tensor4<S>& prob, const Tensor4<S>& truth, LossKind kind) {
    Tensor4<S> dz(prob.n, prob.c, prob.h, prob.w);
    const std::size_t per_sample = prob.size() / static_cast<std::size_t>(prob.n);
    if (kind == LossKind::bce) {
        const double scale = 1.0 / static_cast<double>(prob.v.size());
        for (std::size_t i = 0; i < prob.v.size(); ++i)
            dz.v[i] = static_cast<S>((static_cast<double>(prob.v[i]) - static_cast<double>(truth.v[i])) *
                                     scale);
        return dz;
    }
    const double batch_scale = 1.0 / static_cast<double>(prob.n);
    for (int ni = 0; ni < prob.n; ++ni) {
        const S* p = prob.v.data() + static_cast<std::size_t>(ni) * per_sample;
        const S* y = truth.v.data() + static_cast<std::size_t>(ni) * per_sample;
        S* d = dz.v.data() + static_cast<std::size_t>(ni) * per_sample;
        double inter = 0.0, sum_p = 0.0, sum_y = 0.0;
        for (std::size_t i = 0; i < per_sample; ++i) {
            inter += static_cast<double>(y[i]) * static_cast<double>(p[i]);
            sum_p += static_cast<double>(p[i]);
            sum_y += static_cast<double>(y[i]);
        }
        const double denom = sum_y + sum_p + 1.0;
        const double num = 2.0 * inter + 1.0;
        for (std::size_t i = 0; i < per_sample; ++i) {
            const double dldp = -(2.0 * static_cast<double>(y[i]) * denom - num) / (denom * denom);
            const double pv = static_cast<double>(p[i]);
            d[i] = static_cast<S>(dldp * pv * (1.0 - pv) * batch_scale);
        }
    }
    return dz;
}

}  // namespace

template <class S>
Gradients<S> backward(const Model<S>& model, const ForwardCache<S>& cache, const Tensor4<S>& truth,
                      LossKind kind) {
    const UNetConfig& cfg = model.config;
    if (!cache.prob.same_shape(truth))
        throw std::invalid_argument("unet backward: truth shape does not match cached forward");
    const LayerIndex li{cfg.depth};

    Gradients<S> g;
    g.dw.resize(model.layers.size());
    g.db.resize(model.layers.size());

    Tensor4<S> dz = loss_grad_logits(cache.prob, truth, kind);

    // Output 1x1 conv.
    Tensor4<S> dcur;
    conv_backward(model.layers[li.out()], cache.dec_act2[cfg.depth - 1], dz, dcur,
                  g.dw[li.out()], g.db[li.out()]);

    // Decoder stages in reverse; skip gradients collect per encoder level.
    std::vector<Tensor4<S>> dskip(cfg.depth);
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const int level = cfg.depth - 1 - i;
        relu_backward_inplace(dcur, cache.dec_act2[i]);
        Tensor4<S> dact1;
        conv_backward(model.layers[li.dconv2(i)], cache.dec_act1[i], dcur, dact1,
                      g.dw[li.dconv2(i)], g.db[li.dconv2(i)]);
        relu_backward_inplace(dact1, cache.dec_act1[i]);
        Tensor4<S> dcat;
        conv_backward(model.layers[li.dconv1(i)], cache.dec_cat[i], dact1, dcat,
                      g.dw[li.dconv1(i)], g.db[li.dconv1(i)]);
        Tensor4<S> dupconv;
        split_channels(dcat, cache.enc_act2[level].c, dskip[level], dupconv);
        Tensor4<S> dup;
        conv_backward(model.layers[li.upconv(i)], cache.dec_up[i], dupconv, dup,
                      g.dw[li.upconv(i)], g.db[li.upconv(i)]);
        upsample2_backward(dup, dcur);
    }

    // Bottleneck (dropout mask reapplies on the way back).
    if (!cache.dropout_mask.empty())
        for (std::size_t i = 0; i < dcur.v.size(); ++i) dcur.v[i] *= cache.dropout_mask[i];
    relu_backward_inplace(dcur, cache.bott_act2);
    Tensor4<S> dbott1;
    conv_backward(model.layers[li.bott2()], cache.bott_act1, dcur, dbott1, g.dw[li.bott2()],
                  g.db[li.bott2()]);
    relu_backward_inplace(dbott1, cache.bott_act1);
    Tensor4<S> dpooled;
    conv_backward(model.layers[li.bott1()], cache.pooled[cfg.depth - 1], dbott1, dpooled,
                  g.dw[li.bott1()], g.db[li.bott1()]);

    // Encoder levels in reverse; pool and skip gradients join here.
    for (int l = cfg.depth - 1; l >= 0; --l) {
        Tensor4<S> dact2 = std::move(dskip[l]);
        maxpool2_backward(dpooled, cache.pool_argmax[l], dact2);
        relu_backward_inplace(dact2, cache.enc_act2[l]);
        Tensor4<S> dact1;
        conv_backward(model.layers[li.enc2(l)], cache.enc_act1[l], dact2, dact1, g.dw[li.enc2(l)],
                      g.db[li.enc2(l)]);
        relu_backward_inplace(dact1, cache.enc_act1[l]);
        const Tensor4<S>& in = l == 0 ? cache.input : cache.pooled[l - 1];
        conv_backward(model.layers[li.enc1(l)], in, dact1, dpooled, g.dw[li.enc1(l)],
                      g.db[li.enc1(l)]);
    }
    return g;
}

template <class S>
void adam_step(Model<S>& model, const Gradients<S>& grads, double lr) {
    if (grads.dw.size() != model.layers.size())
        throw std::invalid_argument("adam_step: gradient layer count mismatch");
    model.adam_step += 1;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(model.adam_step));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(model.adam_step));

    auto update = [&](std::vector<S>& w, std::vector<S>& m, std::vector<S>& v,
                      const std::vector<S>& g) {
        if (g.size() != w.size()) throw std::invalid_argument("adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = kAdamBeta1 * static_cast<double>(m[i]) + (1.0 - kAdamBeta1) * gi;
            const double vi = kAdamBeta2 * static_cast<double>(v[i]) + (1.0 - kAdamBeta2) * gi * gi;
            m[i] = static_cast<S>(mi);
            v[i] = static_cast<S>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            w[i] = static_cast<S>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + kAdamEps));
        }
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        update(model.layers[l].w, model.layers[l].m_w, model.layers[l].v_w, grads.dw[l]);
        update(model.layers[l].b, model.layers[l].m_b, model.layers[l].v_b, grads.db[l]);
    }
}

// ---------------------------------------------------------------------------
// data conversion
// ---------------------------------------------------------------------------

template <class S>
Tensor4<S> frame_to_tensor(const GrayFrame& frame) {
    Tensor4<S> t(1, 1, frame.height, frame.width);
    for (std::size_t i = 0; i < frame.pixels.size(); ++i)
        t.v[i] = static_cast<S>(frame.pixels[i] / 255.0);
    return t;
}

template <class S>
Tensor4<S> mask_to_tensor(const BinaryMask& mask) {
    Tensor4<S> t(1, 1, mask.height, mask.width);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) t.v[i] = static_cast<S>(mask.bits[i]);
    return t;
}

ProbMap tensor_to_probmap(const Tensor4<float>& prob, int sample) {
    ProbMap p(prob.w, prob.h);
    const float* src = prob.plane(sample, 0);
    std::copy_n(src, p.probs.size(), p.probs.begin());
    return p;
}

BinaryMask predict_mask(const Model<float>& model, const GrayFrame& frame) {
    if (frame.height != model.config.input_h || frame.width != model.config.input_w)
        throw std::invalid_argument("predict_mask: frame does not match model input size");
    const auto result = forward(model, frame_to_tensor<float>(frame), false, 0);
    BinaryMask mask(frame.width, frame.height);
    for (std::size_t i = 0; i < mask.bits.size(); ++i)
        mask.bits[i] = result.prob.v[i] > 0.5f ? 1 : 0;  // strict: p == 0.5 is background
    return mask;
}

ProbMap predict_probs(const Model<float>& model, const GrayFrame& frame) {
    if (frame.height != model.config.input_h || frame.width != model.config.input_w)
        throw std::invalid_argument("predict_probs: frame does not match model input size");
    const auto result = forward(model, frame_to_tensor<float>(frame), false, 0);
    return tensor_to_probmap(result.prob, 0);
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(std::size_t n,
                                                                              double val_fraction,
                                                                              std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("split_train_val: val_fraction must be in (0, 1)");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(mix_seed(seed, 0x5b117));
    rng.shuffle(idx);
    const std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n) * val_fraction);
    std::vector<std::size_t> val(idx.end() - static_cast<std::ptrdiff_t>(n_val), idx.end());
    idx.resize(n - n_val);
    return {std::move(idx), std::move(val)};
}

TrainResult train(Model<float> model, const std::vector<std::pair<GrayFrame, BinaryMask>>& dataset,
                  const TrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    for (const auto& [frame, mask] : dataset) {
        if (frame.height != model.config.input_h || frame.width != model.config.input_w ||
            mask.height != frame.height || mask.width != frame.width)
            throw std::invalid_argument("train: sample size does not match model input size");
    }

    auto [train_idx, val_idx] = split_train_val(dataset.size(), cfg.val_fraction, cfg.seed);
    if (train_idx.empty()) throw std::invalid_argument("train: validation split leaves no training data");

    TrainResult result;
    result.n_train = train_idx.size();
    result.n_val = val_idx.size();

    // Pre-converted tensors (inputs are reused every epoch).
    std::vector<Tensor4<float>> inputs(dataset.size()), truths(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        inputs[i] = frame_to_tensor<float>(dataset[i].first);
        truths[i] = mask_to_tensor<float>(dataset[i].second);
    }

    double best_dice = -1.0;
    double best_train_loss = std::numeric_limits<double>::infinity();
    result.model = model;

    struct SampleOut {
        Gradients<float> grads;
        double loss = 0.0;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, 0xe60c + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(train_idx);

        double epoch_loss = 0.0;
        std::size_t pos = 0;
        while (pos < train_idx.size()) {
            const std::size_t batch_n = std::min<std::size_t>(cfg.batch_size, train_idx.size() - pos);
            std::vector<SampleOut> outs(batch_n);
            parallel_for(batch_n, [&](std::size_t s) {
                const std::size_t di = train_idx[pos + s];
                const std::uint64_t drop_seed =
                    mix_seed(mix_seed(cfg.seed, 0xd209 + static_cast<std::uint64_t>(epoch)),
                             static_cast<std::uint64_t>(pos + s));
                auto fwd = forward(model, inputs[di], true, drop_seed);
                outs[s].loss = loss_value(fwd.prob, truths[di], cfg.loss);
                outs[s].grads = backward(model, fwd.cache, truths[di], cfg.loss);
            });

            // Accumulate in sample order so results do not depend on the
            // worker count.
            Gradients<float> acc = std::move(outs[0].grads);
            epoch_loss += outs[0].loss;
            for (std::size_t s = 1; s < batch_n; ++s) {
                for (std::size_t l = 0; l < acc.dw.size(); ++l) {
                    const auto& sw = outs[s].grads.dw[l];
                    const auto& sb = outs[s].grads.db[l];
                    for (std::size_t i = 0; i < sw.size(); ++i) acc.dw[l][i] += sw[i];
                    for (std::size_t i = 0; i < sb.size(); ++i) acc.db[l][i] += sb[i];
                }
                epoch_loss += outs[s].loss;
            }
            const float inv = 1.0f / static_cast<float>(batch_n);
            for (auto& dw : acc.dw)
                for (auto& v : dw) v *= inv;
            for (auto& db : acc.db)
                for (auto& v : db) v *= inv;

            adam_step(model, acc, cfg.learning_rate);
            pos += batch_n;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(train_idx.size());

        if (!val_idx.empty()) {
            std::vector<double> losses(val_idx.size()), dices(val_idx.size()), ious(val_idx.size()),
                accs(val_idx.size());
            parallel_for(val_idx.size(), [&](std::size_t s) {
                const std::size_t di = val_idx[s];
                auto fwd = forward(model, inputs[di], false, 0);
                losses[s] = loss_value(fwd.prob, truths[di], cfg.loss);
                BinaryMask pred(dataset[di].second.width, dataset[di].second.height);
                for (std::size_t i = 0; i < pred.bits.size(); ++i)
                    pred.bits[i] = fwd.prob.v[i] > 0.5f ? 1 : 0;
                dices[s] = dice_coefficient(dataset[di].second, pred).value;
                ious[s] = iou(dataset[di].second, pred).value;
                accs[s] = pixel_accuracy(dataset[di].second, pred);
            });
            for (std::size_t s = 0; s < val_idx.size(); ++s) {
                stats.val_loss += losses[s];
                stats.val_dice += dices[s];
                stats.val_iou += ious[s];
                stats.val_pixel_acc += accs[s];
            }
            const double nv = static_cast<double>(val_idx.size());
            stats.val_loss /= nv;
            stats.val_dice /= nv;
            stats.val_iou /= nv;
            stats.val_pixel_acc /= nv;

            if (stats.val_dice > best_dice) {
                best_dice = stats.val_dice;
                result.best_epoch = epoch;
                result.model = model;
            }
        } else {
            // No validation data (tiny datasets): keep the lowest-train-loss
            // epoch and report NaN validation metrics.
            stats.val_loss = stats.val_dice = stats.val_iou = stats.val_pixel_acc =
                std::numeric_limits<double>::quiet_NaN();
            if (stats.train_loss < best_train_loss) {
                best_train_loss = stats.train_loss;
                result.best_epoch = epoch;
                result.model = model;
            }
        }
        result.history.push_back(stats);
    }
    return result;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'Q', 'U', 'N'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = c & 1 ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put(out, bits);
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put(out, bits);
}

struct Reader {
    const std::vector<std::uint8_t>& b;
    std::size_t pos = 0;

    template <class T>
    T get() {
        if (pos + sizeof(T) > b.size()) throw std::runtime_error("model file: truncated");
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[pos + i]) << (8 * i);
        pos += sizeof(T);
        return static_cast<T>(v);
    }
    float get_f32() {
        const auto bits = get<std::uint32_t>();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double get_f64() {
        const auto bits = get<std::uint64_t>();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

}  // namespace

std::size_t serialized_size(const Model<float>& model) {
    const bool has_adam = model.adam_step > 0;
    std::size_t size = 4 + 4 + 4 * 4 + 8 + 8 + 8 + 1 + 4;  // header through n_layers
    for (const auto& l : model.layers) {
        size += 4 * 4;  // layer dims
        const std::size_t params = l.w.size() + l.b.size();
        size += 4 * params * (has_adam ? 3 : 1);
    }
    return size + 4;  // trailing CRC32
}

std::vector<std::uint8_t> save_model(const Model<float>& model) {
    const bool has_adam = model.adam_step > 0;
    std::vector<std::uint8_t> out;
    out.reserve(serialized_size(model));

    out.insert(out.end(), kMagic, kMagic + 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.config.depth));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.config.base_channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.config.input_h));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.config.input_w));
    put_f64(out, model.config.dropout_p);
    put<std::uint64_t>(out, model.config.seed);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(model.adam_step));
    out.push_back(has_adam ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.layers.size()));

    for (const auto& l : model.layers) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_ch));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_ch));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(l.kh));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(l.kw));
        for (float v : l.w) put_f32(out, v);
        for (float v : l.b) put_f32(out, v);
        if (has_adam) {
            for (float v : l.m_w) put_f32(out, v);
            for (float v : l.v_w) put_f32(out, v);
            for (float v : l.m_b) put_f32(out, v);
            for (float v : l.v_b) put_f32(out, v);
        }
    }
    put<std::uint32_t>(out, crc32(out.data(), out.size()));
    return out;
}

Model<float> load_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw std::runtime_error("model file: bad magic");
    {
        std::uint32_t stored = 0;
        for (int i = 0; i < 4; ++i)
            stored |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
        if (crc32(bytes.data(), bytes.size() - 4) != stored)
            throw std::runtime_error("model file: checksum failure");
    }

    Reader r{bytes, 4};
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw std::runtime_error("model file: unsupported version");

    UNetConfig cfg;
    cfg.depth = static_cast<int>(r.get<std::uint32_t>());
    cfg.base_channels = static_cast<int>(r.get<std::uint32_t>());
    cfg.input_h = static_cast<int>(r.get<std::uint32_t>());
    cfg.input_w = static_cast<int>(r.get<std::uint32_t>());
    cfg.dropout_p = r.get_f64();
    cfg.seed = r.get<std::uint64_t>();
    const auto adam_step = static_cast<std::int64_t>(r.get<std::uint64_t>());
    const bool has_adam = r.get<std::uint8_t>() != 0;
    const auto n_layers = r.get<std::uint32_t>();

    // Shapes must agree with what the config dictates.
    Model<float> model = unet_init<float>(cfg);
    model.adam_step = adam_step;
    if (n_layers != model.layers.size()) throw std::runtime_error("model file: layer count mismatch");

    for (auto& l : model.layers) {
        const auto oc = r.get<std::uint32_t>();
        const auto ic = r.get<std::uint32_t>();
        const auto kh = r.get<std::uint32_t>();
        const auto kw = r.get<std::uint32_t>();
        if (static_cast<int>(oc) != l.out_ch || static_cast<int>(ic) != l.in_ch ||
            static_cast<int>(kh) != l.kh || static_cast<int>(kw) != l.kw)
            throw std::runtime_error("model file: layer shape mismatch");
        for (auto& v : l.w) v = r.get_f32();
        for (auto& v : l.b) v = r.get_f32();
        if (has_adam) {
            for (auto& v : l.m_w) v = r.get_f32();
            for (auto& v : l.v_w) v = r.get_f32();
            for (auto& v : l.m_b) v = r.get_f32();
            for (auto& v : l.v_b) v = r.get_f32();
        }
    }
    if (r.pos != bytes.size() - 4) throw std::runtime_error("model file: trailing bytes");
    return model;
}

void save_model_file(const Model<float>& model, const std::filesystem::path& path) {
    const auto bytes = save_model(model);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("model file: cannot write " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("model file: short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Model<float> load_model_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("model file: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_model(bytes);
}

// ---------------------------------------------------------------------------
// explicit instantiations: float for production, double for gradient checks
// ---------------------------------------------------------------------------

template Model<float> unet_init<float>(const UNetConfig&);
template Model<double> unet_init<double>(const UNetConfig&);
template ForwardResult<float> forward<float>(const Model<float>&, const Tensor4<float>&, bool,
                                             std::uint64_t);
template ForwardResult<double> forward<double>(const Model<double>&, const Tensor4<double>&, bool,
                                               std::uint64_t);
template double loss_value<float>(const Tensor4<float>&, const Tensor4<float>&, LossKind);
template double loss_value<double>(const Tensor4<double>&, const Tensor4<double>&, LossKind);
template Gradients<float> backward<float>(const Model<float>&, const ForwardCache<float>&,
                                          const Tensor4<float>&, LossKind);
template Gradients<double> backward<double>(const Model<double>&, const ForwardCache<double>&,
                                            const Tensor4<double>&, LossKind);
template void adam_step<float>(Model<float>&, const Gradients<float>&, double);
template void adam_step<double>(Model<double>&, const Gradients<double>&, double);
template Tensor4<float> frame_to_tensor<float>(const GrayFrame&);
template Tensor4<double> frame_to_tensor<double>(const GrayFrame&);
template Tensor4<float> mask_to_tensor<float>(const BinaryMask&);
template Tensor4<double> mask_to_tensor<double>(const BinaryMask&);
template std::vector<float> dropout_mask<float>(std::size_t, double, std::uint64_t);
template std::vector<double> dropout_mask<double>(std::size_t, double, std::uint64_t);

}  // namespace cardioquant::unet
