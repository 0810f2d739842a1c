#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stprotein/attention.hpp"
#include "stprotein/errors.hpp"
#include "stprotein/graph.hpp"
#include "stprotein/types.hpp"

namespace stprotein {

struct ModelDims {
    Eigen::Index p;    // input and embedding width
    Eigen::Index f_h1; // first hidden width
    Eigen::Index f_h2; // second hidden width
};

/// All model weights. The decoder's two attention layers either alias the
/// encoder layers (tied, the default) or own independent parameters; the final
/// linear maps are always independent.
struct ModelParams {
    GatLayerParams enc_layer1; // p -> f_h1
    GatLayerParams enc_layer2; // f_h1 -> f_h2
    Matrix enc_fc_w;           // p x f_h2
    Vector enc_fc_b;           // p
    Matrix dec_fc_w;           // p x f_h2
    Vector dec_fc_b;           // p
    bool tied = true;
    std::optional<GatLayerParams> dec_layer1; // engaged only when untied
    std::optional<GatLayerParams> dec_layer2;

    /// Decoder attention layers; under tying these are the encoder's storage.
    const GatLayerParams& decoder_layer1() const { return tied ? enc_layer1 : *dec_layer1; }
    const GatLayerParams& decoder_layer2() const { return tied ? enc_layer2 : *dec_layer2; }
    GatLayerParams& decoder_layer1() { return tied ? enc_layer1 : *dec_layer1; }
    GatLayerParams& decoder_layer2() { return tied ? enc_layer2 : *dec_layer2; }

    ModelDims dims() const { return {enc_fc_w.rows(), enc_layer1.f_out(), enc_layer2.f_out()}; }
    std::size_t heads() const { return enc_layer1.heads.size(); }
};

/// Reference to one uniquely stored tensor inside a ModelParams (exactly one of
/// mat/vec is set). Tied decoder layers contribute no entries of their own.
struct TensorRef {
    std::string name;
    Matrix* mat = nullptr;
    Vector* vec = nullptr;
};

inline void append_layer_refs(const std::string& prefix, GatLayerParams& layer,
                              std::vector<TensorRef>& out) {
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
        const std::string base = prefix + "/head" + std::to_string(h);
        out.push_back({base + "/w", &layer.heads[h].w, nullptr});
        out.push_back({base + "/w_a", &layer.heads[h].w_a, nullptr});
        out.push_back({base + "/a", nullptr, &layer.heads[h].a});
    }
}

/// Enumerate every uniquely stored tensor, in a fixed order shared by the
/// optimizer and the checkpoint writer.
inline std::vector<TensorRef> tensor_refs(ModelParams& p) {
    std::vector<TensorRef> out;
    append_layer_refs("enc_layer1", p.enc_layer1, out);
    append_layer_refs("enc_layer2", p.enc_layer2, out);
    out.push_back({"enc_fc/w", &p.enc_fc_w, nullptr});
    out.push_back({"enc_fc/b", nullptr, &p.enc_fc_b});
    out.push_back({"dec_fc/w", &p.dec_fc_w, nullptr});
    out.push_back({"dec_fc/b", nullptr, &p.dec_fc_b});
    if (!p.tied) {
        append_layer_refs("dec_layer1", *p.dec_layer1, out);
        append_layer_refs("dec_layer2", *p.dec_layer2, out);
    }
    return out;
}

struct LossWeights {
    double beta1 = 5.0; // RNA reconstruction weight
    double beta2 = 3.0; // protein embedding weight
};

inline void validate_weights(const LossWeights& w) {
    if (w.beta1 < 0.0 || w.beta2 < 0.0 || (w.beta1 == 0.0 && w.beta2 == 0.0))
        throw ConfigError("loss weights must be non-negative and not both zero");
}

struct Losses {
    double total = 0.0;
    double l_rna = 0.0;
    double l_protein = 0.0;
};

struct EncodeTrace {
    LayerActivation enc1; // on x, pre-ReLU output
    LayerActivation enc2; // on h1, pre-ReLU output
    Matrix h1, h2;        // post-ReLU hidden states
    Matrix z;             // n x p embedding
};

struct DecodeTrace {
    Matrix dec1_pre, dec2_pre; // decoder attention outputs before ReLU
    Matrix d1, d2;             // post-ReLU
    std::optional<LayerActivation> dec1_act, dec2_act; // untied mode only
    Matrix x_hat;              // n x p reconstruction
};

struct ForwardTrace {
    EncodeTrace enc;
    DecodeTrace dec;
};

namespace detail {

inline Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

/// Subgradient mask matching the forward branch: 0 where pre < 0, else 1.
inline Matrix relu_mask(const Matrix& pre) {
    return (pre.array() < 0.0).select(Matrix::Zero(pre.rows(), pre.cols()),
                                      Matrix::Ones(pre.rows(), pre.cols()));
}

inline void fill_glorot(Matrix& m, double fan_in, double fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
}

inline void fill_glorot(Vector& v, double fan_in, double fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
}

inline GatLayerParams init_layer(Eigen::Index f_in, Eigen::Index f_out, std::size_t heads, Rng& rng) {
    GatLayerParams layer;
    layer.heads.resize(heads);
    for (auto& head : layer.heads) {
        head.w.resize(f_out, f_in);
        fill_glorot(head.w, static_cast<double>(f_in), static_cast<double>(f_out), rng);
        head.w_a.resize(f_out, 2 * f_in);
        fill_glorot(head.w_a, static_cast<double>(2 * f_in), static_cast<double>(f_out), rng);
        head.a.resize(f_out);
        fill_glorot(head.a, static_cast<double>(f_out), 1.0, rng);
    }
    return layer;
}

} // namespace detail

/// Deterministic parameter initialization: weights uniform within the
/// symmetric Glorot bound sqrt(6/(fan_in+fan_out)), biases zero.
inline ModelParams init_params(ModelDims dims, std::size_t heads, std::uint64_t seed, bool tied = true) {
    if (dims.p <= 0 || dims.f_h1 <= 0 || dims.f_h2 <= 0 || heads == 0)
        throw ConfigError("init_params: dimensions and head count must be positive");
    Rng rng(seed);
    ModelParams p;
    p.tied = tied;
    p.enc_layer1 = detail::init_layer(dims.p, dims.f_h1, heads, rng);
    p.enc_layer2 = detail::init_layer(dims.f_h1, dims.f_h2, heads, rng);
    p.enc_fc_w.resize(dims.p, dims.f_h2);
    detail::fill_glorot(p.enc_fc_w, static_cast<double>(dims.f_h2), static_cast<double>(dims.p), rng);
    p.enc_fc_b = Vector::Zero(dims.p);
    p.dec_fc_w.resize(dims.p, dims.f_h2);
    detail::fill_glorot(p.dec_fc_w, static_cast<double>(dims.f_h2), static_cast<double>(dims.p), rng);
    p.dec_fc_b = Vector::Zero(dims.p);
    if (!tied) {
        p.dec_layer1 = detail::init_layer(dims.p, dims.f_h1, heads, rng);
        p.dec_layer2 = detail::init_layer(dims.f_h1, dims.f_h2, heads, rng);
    }
    return p;
}

/// ModelParams-shaped container of zeros, used to accumulate gradients.
inline ModelParams zeros_like(const ModelParams& p) {
    ModelParams g = p;
    auto zero_layer = [](GatLayerParams& l) {
        for (auto& head : l.heads) {
            head.w.setZero();
            head.w_a.setZero();
            head.a.setZero();
        }
    };
    zero_layer(g.enc_layer1);
    zero_layer(g.enc_layer2);
    g.enc_fc_w.setZero();
    g.enc_fc_b.setZero();
    g.dec_fc_w.setZero();
    g.dec_fc_b.setZero();
    if (!g.tied) {
        zero_layer(*g.dec_layer1);
        zero_layer(*g.dec_layer2);
    }
    return g;
}

/// Encoder: two attention layers with ReLU, then a linear embedding head
/// (no activation), so z may be negative like its PCA-space target.
inline EncodeTrace encode(const ModelParams& params, const Matrix& x, const NeighborLists& nl) {
    EncodeTrace t;
    t.enc1 = gat_forward(params.enc_layer1, x, nl);
    t.h1 = detail::relu(t.enc1.output);
    t.enc2 = gat_forward(params.enc_layer2, t.h1, nl);
    t.h2 = detail::relu(t.enc2.output);
    t.z = (t.h2 * params.enc_fc_w.transpose()).rowwise() + params.enc_fc_b.transpose();
    if (!t.z.allFinite()) throw NonFiniteActivation("encode: non-finite embedding");
    return t;
}

inline EncodeTrace encode(const ModelParams& params, const Matrix& x, const FeatureGraph& g) {
    return encode(params, x, neighbor_lists(g));
}

/// Decoder: mirrors the encoder with attention coefficients reused from it
/// (the second encoder layer's coefficients drive the first decoder layer),
/// ReLU between layers, then the reconstruction head. Under tying the layers
/// read the encoder's weight storage; untied they run their own attention.
inline DecodeTrace decode(const ModelParams& params, const Matrix& z, const NeighborLists& nl,
                          const EncodeTrace& enc) {
    DecodeTrace t;
    if (params.tied) {
        t.dec1_pre = gat_forward_with_fixed_alpha(params.decoder_layer1(), z, nl, alphas_of(enc.enc2));
        t.d1 = detail::relu(t.dec1_pre);
        t.dec2_pre = gat_forward_with_fixed_alpha(params.decoder_layer2(), t.d1, nl, alphas_of(enc.enc1));
        t.d2 = detail::relu(t.dec2_pre);
    } else {
        t.dec1_act = gat_forward(params.decoder_layer1(), z, nl);
        t.dec1_pre = t.dec1_act->output;
        t.d1 = detail::relu(t.dec1_pre);
        t.dec2_act = gat_forward(params.decoder_layer2(), t.d1, nl);
        t.dec2_pre = t.dec2_act->output;
        t.d2 = detail::relu(t.dec2_pre);
    }
    t.x_hat = (t.d2 * params.dec_fc_w.transpose()).rowwise() + params.dec_fc_b.transpose();
    if (!t.x_hat.allFinite()) throw NonFiniteActivation("decode: non-finite reconstruction");
    return t;
}

inline DecodeTrace decode(const ModelParams& params, const Matrix& z, const FeatureGraph& g,
                          const EncodeTrace& enc) {
    return decode(params, z, neighbor_lists(g), enc);
}

inline ForwardTrace forward(const ModelParams& params, const Matrix& x, const NeighborLists& nl) {
    ForwardTrace t;
    t.enc = encode(params, x, nl);
    t.dec = decode(params, t.enc.z, nl, t.enc);
    return t;
}

/// Weighted two-task squared-error loss:
/// total = beta1 * sum_i |x_i - x_hat_i|^2 + beta2 * sum_i |y_i - z_i|^2.
inline Losses loss(const Matrix& x, const Matrix& y, const Matrix& x_hat, const Matrix& z,
                   const LossWeights& w) {
    if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols())
        throw ShapeMismatch("loss: x and x_hat shapes differ");
    if (y.rows() != z.rows() || y.cols() != z.cols())
        throw ShapeMismatch("loss: y and z shapes differ");
    Losses l;
    l.l_rna = (x - x_hat).squaredNorm();
    l.l_protein = (y - z).squaredNorm();
    l.total = w.beta1 * l.l_rna + w.beta2 * l.l_protein;
    return l;
}

/// One full-graph forward and exact backward pass. Tied attention tensors
/// accumulate both their encoder-path and decoder-path gradient contributions;
/// the reused attention coefficients are treated as constants.
inline std::pair<Losses, ModelParams> forward_backward(const ModelParams& params, const Matrix& x,
                                                       const Matrix& y, const NeighborLists& nl,
                                                       const LossWeights& w,
                                                       ForwardTrace* trace_out = nullptr) {
    validate_weights(w);
    ForwardTrace t = forward(params, x, nl);
    const Losses l = loss(x, y, t.dec.x_hat, t.enc.z, w);

    ModelParams grads = zeros_like(params);

    // Reconstruction head.
    Matrix g_xhat = 2.0 * w.beta1 * (t.dec.x_hat - x);
    grads.dec_fc_w.noalias() = g_xhat.transpose() * t.dec.d2;
    grads.dec_fc_b = g_xhat.colwise().sum();
    Matrix g_d2 = g_xhat * params.dec_fc_w;

    // Decoder attention layers.
    Matrix g_dec2_pre = g_d2.cwiseProduct(detail::relu_mask(t.dec.dec2_pre));
    GatLayerParams g_decl2, g_decl1;
    Matrix g_d1, g_z_dec;
    if (params.tied) {
        auto [gl2, gd1] = gat_fixed_alpha_backward(params.decoder_layer2(), t.dec.d1, nl,
                                                   alphas_of(t.enc.enc1), g_dec2_pre);
        g_decl2 = std::move(gl2);
        g_d1 = std::move(gd1);
    } else {
        auto [gl2, gd1] =
            gat_backward(params.decoder_layer2(), t.dec.d1, nl, *t.dec.dec2_act, g_dec2_pre);
        g_decl2 = std::move(gl2);
        g_d1 = std::move(gd1);
    }
    Matrix g_dec1_pre = g_d1.cwiseProduct(detail::relu_mask(t.dec.dec1_pre));
    if (params.tied) {
        auto [gl1, gz] = gat_fixed_alpha_backward(params.decoder_layer1(), t.enc.z, nl,
                                                  alphas_of(t.enc.enc2), g_dec1_pre);
        g_decl1 = std::move(gl1);
        g_z_dec = std::move(gz);
    } else {
        auto [gl1, gz] = gat_backward(params.decoder_layer1(), t.enc.z, nl, *t.dec.dec1_act, g_dec1_pre);
        g_decl1 = std::move(gl1);
        g_z_dec = std::move(gz);
    }

    // Embedding head: protein loss plus everything that flowed back through
    // the decoder.
    Matrix g_z = 2.0 * w.beta2 * (t.enc.z - y) + g_z_dec;
    grads.enc_fc_w.noalias() = g_z.transpose() * t.enc.h2;
    grads.enc_fc_b = g_z.colwise().sum();
    Matrix g_h2 = g_z * params.enc_fc_w;

    // Encoder attention layers.
    Matrix g_enc2_pre = g_h2.cwiseProduct(detail::relu_mask(t.enc.enc2.output));
    auto [g_encl2, g_h1] = gat_backward(params.enc_layer2, t.enc.h1, nl, t.enc.enc2, g_enc2_pre);
    Matrix g_enc1_pre = g_h1.cwiseProduct(detail::relu_mask(t.enc.enc1.output));
    auto [g_encl1, g_x] = gat_backward(params.enc_layer1, x, nl, t.enc.enc1, g_enc1_pre);
    (void)g_x;

    auto add_layer = [](GatLayerParams& dst, const GatLayerParams& src) {
        for (std::size_t h = 0; h < dst.heads.size(); ++h) {
            dst.heads[h].w += src.heads[h].w;
            dst.heads[h].w_a += src.heads[h].w_a;
            dst.heads[h].a += src.heads[h].a;
        }
    };
    add_layer(grads.enc_layer1, g_encl1);
    add_layer(grads.enc_layer2, g_encl2);
    if (params.tied) {
        add_layer(grads.enc_layer1, g_decl1);
        add_layer(grads.enc_layer2, g_decl2);
    } else {
        add_layer(*grads.dec_layer1, g_decl1);
        add_layer(*grads.dec_layer2, g_decl2);
    }

    if (trace_out) *trace_out = std::move(t);
    return {l, std::move(grads)};
}

} // namespace stprotein
