#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "stprotein/autoencoder.hpp"
#include "stprotein/csv.hpp"
#include "stprotein/errors.hpp"
#include "stprotein/graph.hpp"
#include "stprotein/preprocess.hpp"

namespace stprotein {

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 1e-4;
    std::size_t epochs = 12000;
    double beta1_loss = 5.0; // RNA reconstruction weight
    double beta2_loss = 3.0; // protein embedding weight
    double adam_b1 = 0.9;
    double adam_b2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t heads = 1;
    Eigen::Index f_h1 = 64;
    Eigen::Index f_h2 = 64;
    std::size_t k_neighbors = 3;
    GraphKind graph_kind = GraphKind::knn;
    double radius = 2.0;
    bool tied = true;
    std::uint64_t seed = 0;
    std::size_t log_every = 100;
    std::size_t patience = 0; // 0 disables early stopping
};

inline void validate(const TrainConfig& cfg) {
    if (cfg.lr <= 0.0) throw ConfigError("lr must be > 0");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (cfg.heads == 0) throw ConfigError("heads must be >= 1");
    if (cfg.f_h1 <= 0 || cfg.f_h2 <= 0) throw ConfigError("hidden widths must be positive");
    validate_weights(LossWeights{cfg.beta1_loss, cfg.beta2_loss});
}

struct TrainLogRow {
    std::size_t epoch = 0; // 1-based
    double total = 0.0;
    double l_rna = 0.0;
    double l_protein = 0.0;
    double seconds = 0.0; // wall-clock time of this epoch
};

using TrainLog = std::vector<TrainLogRow>;

inline void save_trainlog_csv(const std::string& path, const TrainLog& log) {
    std::string out = "epoch,total,l_rna,l_protein,seconds\n";
    for (const auto& row : log) {
        out += std::to_string(row.epoch) + ',' + csv::format_double(row.total) + ',' +
               csv::format_double(row.l_rna) + ',' + csv::format_double(row.l_protein) + ',' +
               csv::format_double(row.seconds) + '\n';
    }
    csv::write_file_atomic(path, out);
}

/// First/second moment buffers, one pair per uniquely stored tensor (tied
/// tensors are stepped exactly once with their summed gradient).
struct AdamState {
    std::vector<Matrix> m_mat, v_mat;
    std::vector<Vector> m_vec, v_vec;

    static AdamState for_params(ModelParams& params) {
        AdamState s;
        for (const auto& ref : tensor_refs(params)) {
            if (ref.mat) {
                s.m_mat.push_back(Matrix::Zero(ref.mat->rows(), ref.mat->cols()));
                s.v_mat.push_back(Matrix::Zero(ref.mat->rows(), ref.mat->cols()));
            } else {
                s.m_vec.push_back(Vector::Zero(ref.vec->size()));
                s.v_vec.push_back(Vector::Zero(ref.vec->size()));
            }
        }
        return s;
    }
};

/// One Adam step with decoupled weight decay: params shrink by lr*wd first,
/// then receive the bias-corrected moment update. Rejects non-finite gradients
/// without touching params.
inline void adam_step(ModelParams& params, ModelParams& grads, AdamState& state, std::size_t t,
                      const TrainConfig& cfg) {
    if (t < 1) throw ConfigError("adam_step: t starts at 1");
    auto prefs = tensor_refs(params);
    auto grefs = tensor_refs(grads);
    if (prefs.size() != grefs.size()) throw ShapeMismatch("adam_step: grads do not match params");

    for (const auto& gref : grefs) {
        const bool finite = gref.mat ? gref.mat->allFinite() : gref.vec->allFinite();
        if (!finite) throw NonFiniteGradient("adam_step: non-finite gradient in " + gref.name);
    }

    const double bc1 = 1.0 - std::pow(cfg.adam_b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.adam_b2, static_cast<double>(t));
    const double decay = 1.0 - cfg.lr * cfg.weight_decay;

    std::size_t im = 0, iv = 0;
    for (std::size_t i = 0; i < prefs.size(); ++i) {
        if (prefs[i].mat) {
            Matrix& p = *prefs[i].mat;
            const Matrix& g = *grefs[i].mat;
            Matrix& m = state.m_mat[im];
            Matrix& v = state.v_mat[im];
            ++im;
            p *= decay;
            m = cfg.adam_b1 * m + (1.0 - cfg.adam_b1) * g;
            v = cfg.adam_b2 * v + (1.0 - cfg.adam_b2) * g.array().square().matrix();
            p.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_eps);
        } else {
            Vector& p = *prefs[i].vec;
            const Vector& g = *grefs[i].vec;
            Vector& m = state.m_vec[iv];
            Vector& v = state.v_vec[iv];
            ++iv;
            p *= decay;
            m = cfg.adam_b1 * m + (1.0 - cfg.adam_b1) * g;
            v = cfg.adam_b2 * v + (1.0 - cfg.adam_b2) * g.array().square().matrix();
            p.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_eps);
        }
    }
}

/// Full-batch training: every epoch runs one whole-graph forward/backward and
/// one Adam step. Deterministic per (data, config, seed). The optional callback
/// sees every completed epoch's log row.
inline std::pair<ModelParams, TrainLog> train(const ProcessedDataset& ds, const FeatureGraph& g,
                                              const TrainConfig& cfg,
                                              const std::function<void(const TrainLogRow&)>& on_epoch = {}) {
    validate(cfg);
    if (!ds.y) throw ProteinMissing("train: dataset has no protein target");
    const LossWeights w{cfg.beta1_loss, cfg.beta2_loss};
    const NeighborLists nl = neighbor_lists(g);

    ModelParams params = init_params({ds.x.cols(), cfg.f_h1, cfg.f_h2}, cfg.heads, cfg.seed, cfg.tied);
    AdamState state = AdamState::for_params(params);
    TrainLog log;
    log.reserve(cfg.epochs);

    double best_total = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        auto [losses, grads] = forward_backward(params, ds.x, *ds.y, nl, w);
        adam_step(params, grads, state, epoch, cfg);
        const auto stop = std::chrono::steady_clock::now();
        TrainLogRow row{epoch, losses.total, losses.l_rna, losses.l_protein,
                        std::chrono::duration<double>(stop - start).count()};
        log.push_back(row);
        if (on_epoch) on_epoch(row);
        if (cfg.patience > 0) {
            if (losses.total < best_total * (1.0 - 1e-6)) {
                best_total = losses.total;
                best_epoch = epoch;
            } else if (epoch - best_epoch >= cfg.patience) {
                break;
            }
        }
    }
    return {std::move(params), std::move(log)};
}

/// Predict CLR-space protein expression for an RNA-only dataset: push RNA
/// through the stored pipeline, rebuild the feature graph the way training
/// built it (KNN over the embedding, or the spatial radius graph), encode, and
/// rotate the embedding back to CLR space. `z_out` receives the raw embedding.
inline Matrix predict(const ModelParams& params, const PreprocessState& rna_pipeline,
                      const PreprocessState& protein_pipeline, const SpatialOmicsDataset& ds_new,
                      const TrainConfig& cfg, Matrix* z_out = nullptr) {
    const Matrix x_new = apply_rna_pipeline(rna_pipeline, ds_new);
    const FeatureGraph g_new = cfg.graph_kind == GraphKind::knn
                                   ? build_knn_graph(x_new, cfg.k_neighbors)
                                   : build_spatial_graph(ds_new.coords, cfg.radius);
    const EncodeTrace t = encode(params, x_new, g_new);
    if (z_out) *z_out = t.z;
    return invert_protein_pipeline(protein_pipeline, t.z);
}

} // namespace stprotein
