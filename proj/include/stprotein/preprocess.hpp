#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stprotein/dataset.hpp"
#include "stprotein/errors.hpp"
#include "stprotein/types.hpp"

namespace stprotein {

enum class TransformKind { rna_lognorm_pca, protein_clr_pca };

inline std::string to_string(TransformKind k) {
    return k == TransformKind::rna_lognorm_pca ? "rna_lognorm_pca" : "protein_clr_pca";
}

inline TransformKind transform_kind_from_string(const std::string& s) {
    if (s == "rna_lognorm_pca") return TransformKind::rna_lognorm_pca;
    if (s == "protein_clr_pca") return TransformKind::protein_clr_pca;
    throw ManifestError("unknown transform kind '" + s + "'");
}

/// Frozen normalization + projection pipeline. Applying the state to the matrix
/// it was fitted on regenerates the training-time output exactly.
struct PreprocessState {
    std::vector<std::string> selected_gene_names; // column order of the PCA input
    Vector per_spot_scale;                        // training-time S / rowsum_i factors
    double scale_factor = 0.0;                    // S, reused when applying to new data
    Vector pca_mean;                              // length D
    Matrix pca_components;                        // D x P, orthonormal columns
    TransformKind transform_kind = TransformKind::rna_lognorm_pca;
};

/// Model-ready training pair: x is the RNA PCA score matrix, y the protein
/// target in PCA-rotated CLR space.
struct ProcessedDataset {
    Matrix x;
    std::optional<Matrix> y;
    PreprocessState rna_pipeline;
    std::optional<PreprocessState> protein_pipeline;
    std::vector<std::string> spot_ids;
    std::vector<std::string> protein_names;
};

/// Ranking of genes by variance standardized against a binned mean-variance
/// trend, descending; constant genes sort last.
struct HvgRanking {
    std::vector<std::size_t> gene_index;
    std::vector<double> standardized_variance;
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    if (v.size() % 2 == 1) return v[m];
    return 0.5 * (v[m - 1] + v[m]);
}

} // namespace detail

/// Library-size normalization followed by log1p:
/// out[i,j] = ln(1 + counts[i,j] * S / rowsum_i), S = median of row sums.
/// `scale_override` replaces S when reapplying a stored pipeline.
inline Matrix lognorm_rna(const Matrix& counts, double* scale_out = nullptr,
                          std::optional<double> scale_override = std::nullopt) {
    const Eigen::Index n = counts.rows();
    std::vector<double> rowsums(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double rs = counts.row(i).sum();
        if (rs <= 0.0) throw EmptyRow("lognorm_rna: spot " + std::to_string(i) + " has all-zero counts");
        rowsums[static_cast<std::size_t>(i)] = rs;
    }
    const double s = scale_override ? *scale_override : detail::median(rowsums);
    if (scale_out) *scale_out = s;
    Matrix out(n, counts.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double f = s / rowsums[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < counts.cols(); ++j)
            out(i, j) = std::log1p(counts(i, j) * f);
    }
    return out;
}

/// Rank genes by standardized variance: genes are placed into 20 equal-occupancy
/// bins by log1p of mean expression (equal means share a bin), and each gene's
/// score is the z-score of ln(variance) within its bin. Constant genes score
/// -infinity. Ties rank by ascending gene index.
inline HvgRanking select_hvg(const Matrix& lognorm, std::size_t n_top = 4000) {
    const auto g = static_cast<std::size_t>(lognorm.cols());
    if (g < 2) throw ShapeMismatch("select_hvg: need at least 2 genes");
    const auto n = static_cast<double>(lognorm.rows());

    std::vector<double> mean(g), var(g);
    for (std::size_t j = 0; j < g; ++j) {
        const auto col = lognorm.col(static_cast<Eigen::Index>(j));
        mean[j] = col.mean();
        var[j] = (col.array() - mean[j]).square().sum() / n;
    }

    // Equal-occupancy binning on the sorted key log1p(mean); a run of equal keys
    // stays in the run's first bin so identical-mean genes are standardized together.
    constexpr std::size_t n_bins = 20;
    std::vector<std::size_t> order(g);
    for (std::size_t j = 0; j < g; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ka = std::log1p(mean[a]), kb = std::log1p(mean[b]);
        if (ka != kb) return ka < kb;
        return a < b;
    });
    std::vector<std::size_t> bin(g, 0);
    for (std::size_t p = 0; p < g; ++p) {
        const std::size_t j = order[p];
        std::size_t b = p * n_bins / g;
        if (p > 0 && std::log1p(mean[order[p - 1]]) == std::log1p(mean[j])) b = bin[order[p - 1]];
        bin[j] = b;
    }

    // Within-bin z-score of ln(var) over the positive-variance genes.
    const double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<double> score(g, neg_inf);
    for (std::size_t b = 0; b < n_bins; ++b) {
        std::vector<std::size_t> members;
        for (std::size_t j = 0; j < g; ++j)
            if (bin[j] == b && var[j] > 0.0) members.push_back(j);
        if (members.empty()) continue;
        double m = 0.0;
        for (auto j : members) m += std::log(var[j]);
        m /= static_cast<double>(members.size());
        double sd = 0.0;
        for (auto j : members) sd += (std::log(var[j]) - m) * (std::log(var[j]) - m);
        sd = std::sqrt(sd / static_cast<double>(members.size()));
        for (auto j : members) score[j] = sd > 0.0 ? (std::log(var[j]) - m) / sd : 0.0;
    }

    std::vector<std::size_t> rank(g);
    for (std::size_t j = 0; j < g; ++j) rank[j] = j;
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return a < b;
    });

    HvgRanking out;
    const std::size_t keep = std::min(n_top, g);
    out.gene_index.assign(rank.begin(), rank.begin() + static_cast<std::ptrdiff_t>(keep));
    out.standardized_variance.reserve(keep);
    for (std::size_t p = 0; p < keep; ++p) out.standardized_variance.push_back(score[rank[p]]);
    return out;
}

/// PCA by exact eigendecomposition of the sample covariance. Components carry a
/// fixed sign (largest-magnitude loading positive, ties to the lowest row);
/// scores are the centered data projected onto them.
inline std::pair<PreprocessState, Matrix> fit_pca(const Matrix& x, std::size_t n_components) {
    const auto n = static_cast<std::size_t>(x.rows());
    const auto d = static_cast<std::size_t>(x.cols());
    if (n_components > std::min(n, d))
        throw ShapeMismatch("fit_pca: " + std::to_string(n_components) + " components from " +
                            std::to_string(n) + "x" + std::to_string(d) + " data");

    PreprocessState st;
    st.pca_mean = x.colwise().mean();
    Matrix centered = x.rowwise() - st.pca_mean.transpose();
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    Matrix cov = centered.transpose() * centered / denom;

    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success) throw RankDeficient("fit_pca: eigensolver failed to converge");

    // Eigen returns eigenvalues ascending; take the top n_components in
    // descending order.
    st.pca_components.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n_components));
    for (std::size_t c = 0; c < n_components; ++c) {
        Vector v = solver.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - c));
        Eigen::Index arg = 0;
        for (Eigen::Index i = 1; i < v.size(); ++i)
            if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
        if (v[arg] < 0.0) v = -v;
        st.pca_components.col(static_cast<Eigen::Index>(c)) = v;
    }
    Matrix scores = centered * st.pca_components;
    return {std::move(st), std::move(scores)};
}

/// Centered log ratio with a +1 pseudo-count:
/// out[i,j] = ln(counts[i,j]+1) - mean_j ln(counts[i,j]+1). Rows sum to zero.
inline Matrix clr_protein(const Matrix& counts) {
    Matrix logs = (counts.array() + 1.0).log().matrix();
    Vector row_means = logs.rowwise().mean();
    return logs.colwise() - row_means;
}

/// Fit both pipelines on a paired dataset: x = PCA of HVG-restricted lognorm RNA
/// truncated to P components, y = full-rank PCA of CLR protein.
inline ProcessedDataset preprocess_training_pair(const SpatialOmicsDataset& ds, std::size_t n_hvg = 4000) {
    if (!ds.has_protein) throw ProteinMissing("preprocess_training_pair: dataset has no protein table");
    const auto p = static_cast<std::size_t>(ds.protein_counts.cols());
    if (n_hvg < p)
        throw ConfigError("preprocess_training_pair: n_hvg=" + std::to_string(n_hvg) +
                          " is below the protein dimension " + std::to_string(p));

    ProcessedDataset out;
    out.spot_ids = ds.spot_ids;
    out.protein_names = ds.protein_names;

    double s = 0.0;
    Matrix ln = lognorm_rna(ds.rna_counts, &s);
    const HvgRanking hvg = select_hvg(ln, n_hvg);

    Matrix restricted(ln.rows(), static_cast<Eigen::Index>(hvg.gene_index.size()));
    out.rna_pipeline.selected_gene_names.reserve(hvg.gene_index.size());
    for (std::size_t c = 0; c < hvg.gene_index.size(); ++c) {
        restricted.col(static_cast<Eigen::Index>(c)) = ln.col(static_cast<Eigen::Index>(hvg.gene_index[c]));
        out.rna_pipeline.selected_gene_names.push_back(ds.gene_names[hvg.gene_index[c]]);
    }

    auto [rna_state, x] = fit_pca(restricted, p);
    out.rna_pipeline.pca_mean = std::move(rna_state.pca_mean);
    out.rna_pipeline.pca_components = std::move(rna_state.pca_components);
    out.rna_pipeline.scale_factor = s;
    out.rna_pipeline.transform_kind = TransformKind::rna_lognorm_pca;
    out.rna_pipeline.per_spot_scale.resize(ds.rna_counts.rows());
    for (Eigen::Index i = 0; i < ds.rna_counts.rows(); ++i)
        out.rna_pipeline.per_spot_scale[i] = s / ds.rna_counts.row(i).sum();
    out.x = std::move(x);

    Matrix clr = clr_protein(ds.protein_counts);
    auto [prot_state, y] = fit_pca(clr, p);
    PreprocessState prot;
    prot.selected_gene_names = ds.protein_names;
    prot.scale_factor = 0.0;
    prot.pca_mean = std::move(prot_state.pca_mean);
    prot.pca_components = std::move(prot_state.pca_components);
    prot.transform_kind = TransformKind::protein_clr_pca;
    out.protein_pipeline = std::move(prot);
    out.y = std::move(y);
    return out;
}

/// Push a new RNA dataset through a stored pipeline: lognorm with the stored
/// scale factor, name-keyed restriction to the stored gene list, stored
/// centering, stored projection. No refitting.
inline Matrix apply_rna_pipeline(const PreprocessState& state, const SpatialOmicsDataset& ds) {
    if (state.transform_kind != TransformKind::rna_lognorm_pca)
        throw ConfigError("apply_rna_pipeline: state is not an RNA pipeline");
    std::unordered_map<std::string, std::size_t> col_of;
    col_of.reserve(ds.gene_names.size());
    for (std::size_t j = 0; j < ds.gene_names.size(); ++j) col_of.emplace(ds.gene_names[j], j);

    std::vector<std::size_t> cols;
    cols.reserve(state.selected_gene_names.size());
    std::string missing;
    for (const auto& name : state.selected_gene_names) {
        auto it = col_of.find(name);
        if (it == col_of.end()) {
            if (!missing.empty()) missing += ", ";
            missing += name;
        } else {
            cols.push_back(it->second);
        }
    }
    if (!missing.empty()) throw GeneMissing("apply_rna_pipeline: dataset lacks genes: " + missing);

    Matrix ln = lognorm_rna(ds.rna_counts, nullptr, state.scale_factor);
    Matrix restricted(ln.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
        restricted.col(static_cast<Eigen::Index>(c)) = ln.col(static_cast<Eigen::Index>(cols[c]));
    Matrix centered = restricted.rowwise() - state.pca_mean.transpose();
    return centered * state.pca_components;
}

/// Invert a full-rank protein PCA: y_hat * components^T + mean recovers
/// CLR-space expression.
inline Matrix invert_protein_pipeline(const PreprocessState& state, const Matrix& y_hat) {
    if (state.transform_kind != TransformKind::protein_clr_pca)
        throw ConfigError("invert_protein_pipeline: state is not a protein pipeline");
    if (y_hat.cols() != state.pca_components.cols())
        throw ShapeMismatch("invert_protein_pipeline: " + std::to_string(y_hat.cols()) +
                            " columns vs " + std::to_string(state.pca_components.cols()) +
                            " components");
    Matrix out = y_hat * state.pca_components.transpose();
    return out.rowwise() + state.pca_mean.transpose();
}

} // namespace stprotein
