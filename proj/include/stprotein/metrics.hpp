#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stprotein/errors.hpp"
#include "stprotein/types.hpp"

namespace stprotein {

/// Joint label-count table. Rows index ground-truth classes, columns index
/// predicted clusters; every metric in this module reads from it or from the
/// pair counts it induces.
struct ContingencyTable {
    std::vector<std::vector<std::int64_t>> counts; // R x C
    std::vector<std::int64_t> row_marginals;       // truth class sizes
    std::vector<std::int64_t> col_marginals;       // predicted cluster sizes
    std::int64_t n = 0;
};

/// Counts over unordered spot pairs: tp = together in both partitions,
/// fp = together only in the prediction, fn = together only in the truth.
struct PairCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;
};

/// One run's scores. Optional fields stay empty when the corresponding task
/// (matrix comparison or label comparison) was not requested.
struct EvalReport {
    std::optional<double> rmse;
    std::optional<double> nmi;
    std::optional<double> ami;
    std::optional<double> fmi;
    std::optional<double> ari;
    std::optional<double> v_measure;
    std::optional<double> f1;
    std::optional<double> jaccard;
};

namespace detail {

/// Map arbitrary label values to dense indices in first-appearance order.
template <typename L>
std::vector<std::size_t> dense_labels(const std::vector<L>& labels, std::size_t& n_distinct) {
    std::unordered_map<L, std::size_t> index;
    std::vector<std::size_t> out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
        auto [it, fresh] = index.emplace(l, index.size());
        (void)fresh;
        out.push_back(it->second);
    }
    n_distinct = index.size();
    return out;
}

inline std::int64_t choose2(std::int64_t m) { return m * (m - 1) / 2; }

} // namespace detail

/// Root-mean-square error over all matrix entries.
inline double rmse(const Matrix& y_true, const Matrix& y_pred) {
    if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols())
        throw ShapeMismatch("rmse: shapes " + std::to_string(y_true.rows()) + "x" +
                            std::to_string(y_true.cols()) + " vs " + std::to_string(y_pred.rows()) +
                            "x" + std::to_string(y_pred.cols()));
    const auto n = static_cast<double>(y_true.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y_true.rows(); ++i)
        for (Eigen::Index j = 0; j < y_true.cols(); ++j) {
            const double d = y_true(i, j) - y_pred(i, j);
            acc += d * d;
        }
    return std::sqrt(acc / n);
}

template <typename L>
ContingencyTable contingency(const std::vector<L>& labels_true, const std::vector<L>& labels_pred) {
    if (labels_true.size() != labels_pred.size())
        throw LengthMismatch("contingency: " + std::to_string(labels_true.size()) + " vs " +
                             std::to_string(labels_pred.size()) + " labels");
    std::size_t r = 0, c = 0;
    const auto ti = detail::dense_labels(labels_true, r);
    const auto pi = detail::dense_labels(labels_pred, c);
    ContingencyTable t;
    t.counts.assign(r, std::vector<std::int64_t>(c, 0));
    t.row_marginals.assign(r, 0);
    t.col_marginals.assign(c, 0);
    t.n = static_cast<std::int64_t>(labels_true.size());
    for (std::size_t i = 0; i < ti.size(); ++i) {
        ++t.counts[ti[i]][pi[i]];
        ++t.row_marginals[ti[i]];
        ++t.col_marginals[pi[i]];
    }
    return t;
}

/// Shannon entropy (nats) of a marginal count vector.
inline double entropy(const std::vector<std::int64_t>& marginals, std::int64_t n) {
    double h = 0.0;
    for (auto m : marginals) {
        if (m <= 0) continue;
        const double p = static_cast<double>(m) / static_cast<double>(n);
        h -= p * std::log(p);
    }
    return h;
}

/// Mutual information (nats) of the joint table.
inline double mutual_information(const ContingencyTable& t) {
    double mi = 0.0;
    const auto n = static_cast<double>(t.n);
    for (std::size_t i = 0; i < t.counts.size(); ++i)
        for (std::size_t j = 0; j < t.counts[i].size(); ++j) {
            const auto nij = t.counts[i][j];
            if (nij <= 0) continue;
            const double pij = static_cast<double>(nij) / n;
            mi += pij * std::log(n * static_cast<double>(nij) /
                                 (static_cast<double>(t.row_marginals[i]) *
                                  static_cast<double>(t.col_marginals[j])));
        }
    return mi;
}

/// Normalized mutual information: MI / sqrt(H(truth)·H(pred)).
/// Conventions: 1 when both partitions are single-cluster, 0 when exactly one
/// entropy is zero.
inline double nmi(const ContingencyTable& t) {
    const double hx = entropy(t.row_marginals, t.n);
    const double hy = entropy(t.col_marginals, t.n);
    if (hx == 0.0 && hy == 0.0) return 1.0;
    if (hx == 0.0 || hy == 0.0) return 0.0;
    return mutual_information(t) / std::sqrt(hx * hy);
}

/// Expected mutual information of two partitions with the given marginals under
/// the hypergeometric (random permutation) model.
inline double expected_mutual_information(const ContingencyTable& t) {
    const std::int64_t n = t.n;
    std::int64_t max_m = n;
    std::vector<double> logfact(static_cast<std::size_t>(max_m) + 1, 0.0);
    for (std::int64_t i = 2; i <= max_m; ++i)
        logfact[static_cast<std::size_t>(i)] =
            logfact[static_cast<std::size_t>(i - 1)] + std::log(static_cast<double>(i));
    auto lf = [&](std::int64_t m) { return logfact[static_cast<std::size_t>(m)]; };

    double emi = 0.0;
    const double dn = static_cast<double>(n);
    for (auto a : t.row_marginals) {
        if (a <= 0) continue;
        for (auto b : t.col_marginals) {
            if (b <= 0) continue;
            const std::int64_t lo = std::max<std::int64_t>(1, a + b - n);
            const std::int64_t hi = std::min(a, b);
            for (std::int64_t nij = lo; nij <= hi; ++nij) {
                const double term = (static_cast<double>(nij) / dn) *
                                    std::log(dn * static_cast<double>(nij) /
                                             (static_cast<double>(a) * static_cast<double>(b)));
                const double logp = lf(a) + lf(b) + lf(n - a) + lf(n - b) - lf(n) - lf(nij) -
                                    lf(a - nij) - lf(b - nij) - lf(n - a - b + nij);
                emi += term * std::exp(logp);
            }
        }
    }
    return emi;
}

/// Adjusted mutual information: (MI − E[MI]) / ((H(truth)+H(pred))/2 − E[MI]).
/// Both partitions single-cluster → 1.
inline double ami(const ContingencyTable& t) {
    const double hx = entropy(t.row_marginals, t.n);
    const double hy = entropy(t.col_marginals, t.n);
    if (hx == 0.0 && hy == 0.0) return 1.0;
    const double mi = mutual_information(t);
    const double emi = expected_mutual_information(t);
    double denom = 0.5 * (hx + hy) - emi;
    // Keep the sign but bound the denominator away from zero, so near-degenerate
    // tables yield a large-magnitude but finite score instead of dividing by ~0.
    const double eps = 2.220446049250313e-16;
    denom = denom >= 0.0 ? std::max(denom, eps) : std::min(denom, -eps);
    return (mi - emi) / denom;
}

/// Pair counts from the contingency table via marginal combinatorics.
inline PairCounts pair_counts(const ContingencyTable& t) {
    if (t.n < 2) throw LengthMismatch("pair_counts: need at least 2 items");
    PairCounts pc;
    std::int64_t together_true = 0, together_pred = 0;
    for (auto a : t.row_marginals) together_true += detail::choose2(a);
    for (auto b : t.col_marginals) together_pred += detail::choose2(b);
    for (const auto& row : t.counts)
        for (auto nij : row) pc.tp += detail::choose2(nij);
    pc.fn = together_true - pc.tp;
    pc.fp = together_pred - pc.tp;
    pc.tn = detail::choose2(t.n) - pc.tp - pc.fp - pc.fn;
    return pc;
}

template <typename L>
PairCounts pair_counts(const std::vector<L>& labels_true, const std::vector<L>& labels_pred) {
    return pair_counts(contingency(labels_true, labels_pred));
}

/// Fowlkes–Mallows index: tp / sqrt((tp+fp)(tp+fn)); 0 when tp = 0 and a factor
/// is empty.
inline double fmi(const PairCounts& pc) {
    const double d = static_cast<double>(pc.tp + pc.fp) * static_cast<double>(pc.tp + pc.fn);
    if (d <= 0.0) return 0.0;
    return static_cast<double>(pc.tp) / std::sqrt(d);
}

/// Rand index: (tp+tn) / all pairs.
inline double ri(const PairCounts& pc) {
    const double total = static_cast<double>(pc.tp + pc.fp + pc.fn + pc.tn);
    return (static_cast<double>(pc.tp) + static_cast<double>(pc.tn)) / total;
}

/// Adjusted Rand index in the marginal-adjusted form; the 0/0 case (both
/// partitions all-singleton or both single-cluster) scores 1.
inline double ari(const ContingencyTable& t) {
    double index = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& row : t.counts)
        for (auto nij : row) index += static_cast<double>(detail::choose2(nij));
    for (auto a : t.row_marginals) sum_a += static_cast<double>(detail::choose2(a));
    for (auto b : t.col_marginals) sum_b += static_cast<double>(detail::choose2(b));
    const double total = static_cast<double>(detail::choose2(t.n));
    const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

/// Pair-level F1: 2tp / (2tp+fp+fn); 0 when no pair is together anywhere.
inline double pair_f1(const PairCounts& pc) {
    const double d = static_cast<double>(2 * pc.tp + pc.fp + pc.fn);
    if (d <= 0.0) return 0.0;
    return 2.0 * static_cast<double>(pc.tp) / d;
}

/// Pair-level Jaccard: tp / (tp+fp+fn); 0 when no pair is together anywhere.
inline double pair_jaccard(const PairCounts& pc) {
    const double d = static_cast<double>(pc.tp + pc.fp + pc.fn);
    if (d <= 0.0) return 0.0;
    return static_cast<double>(pc.tp) / d;
}

/// Homogeneity 1 − H(truth|pred)/H(truth) and completeness 1 − H(pred|truth)/H(pred),
/// with the zero-entropy side scoring 1.
inline std::pair<double, double> homogeneity_completeness(const ContingencyTable& t) {
    const double hx = entropy(t.row_marginals, t.n);
    const double hy = entropy(t.col_marginals, t.n);
    const double mi = mutual_information(t);
    const double h_x_given_y = hx - mi;
    const double h_y_given_x = hy - mi;
    const double hom = hx == 0.0 ? 1.0 : 1.0 - h_x_given_y / hx;
    const double com = hy == 0.0 ? 1.0 : 1.0 - h_y_given_x / hy;
    return {hom, com};
}

/// Harmonic mean of homogeneity and completeness; 0 when both are 0.
inline double v_measure(const ContingencyTable& t) {
    const auto [hom, com] = homogeneity_completeness(t);
    if (hom + com == 0.0) return 0.0;
    return 2.0 * hom * com / (hom + com);
}

/// Compute every metric applicable to the supplied inputs. Matrix pair drives
/// rmse; label pair drives the seven clustering scores.
using LabelPair = std::pair<std::vector<std::string>, std::vector<std::string>>;

inline EvalReport evaluate(const std::optional<std::pair<Matrix, Matrix>>& matrices,
                           const std::optional<LabelPair>& labels) {
    if (!matrices && !labels) throw NothingToEvaluate("evaluate: no matrices and no labels supplied");
    EvalReport r;
    if (matrices) r.rmse = rmse(matrices->first, matrices->second);
    if (labels) {
        const auto t = contingency(labels->first, labels->second);
        const auto pc = pair_counts(t);
        r.nmi = nmi(t);
        r.ami = ami(t);
        r.fmi = fmi(pc);
        r.ari = ari(t);
        r.v_measure = v_measure(t);
        r.f1 = pair_f1(pc);
        r.jaccard = pair_jaccard(pc);
    }
    return r;
}

} // namespace stprotein
