#pragma once

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "stprotein/csv.hpp"
#include "stprotein/errors.hpp"
#include "stprotein/types.hpp"

namespace stprotein {

/// Gaussian mixture with full covariances, fit by EM.
struct GmmModel {
    std::size_t k = 0;
    Vector weights;                   // length K, sums to 1
    Matrix means;                     // K x P
    std::vector<Matrix> covariances;  // K matrices, P x P, SPD after ridge
    std::vector<double> log_likelihood_trace; // one entry per EM iteration
};

namespace detail {

/// Cholesky factor of an SPD matrix; failure marks the component degenerate.
inline Eigen::LLT<Matrix> spd_factor(const Matrix& cov) {
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success)
        throw DegenerateCluster("covariance not positive definite after ridge");
    return llt;
}

/// log N(x; mu, cov) for every row of z, given the covariance's factor.
inline Vector gaussian_log_density(const Matrix& z, const Vector& mu, const Eigen::LLT<Matrix>& llt) {
    const auto p = static_cast<double>(z.cols());
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < z.cols(); ++i)
        log_det += 2.0 * std::log(llt.matrixL()(i, i));
    const double norm = -0.5 * (p * std::log(2.0 * 3.14159265358979323846) + log_det);
    Vector out(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Vector d = (z.row(i).transpose() - mu);
        llt.matrixL().solveInPlace(d);
        out[i] = norm - 0.5 * d.squaredNorm();
    }
    return out;
}

/// k-means++ seeding followed by a fixed number of Lloyd iterations; empty
/// clusters keep their previous center.
inline Matrix kmeans_centers(const Matrix& z, std::size_t k, Rng& rng, int iters = 10) {
    const auto n = static_cast<std::size_t>(z.rows());
    Matrix centers(static_cast<Eigen::Index>(k), z.cols());
    centers.row(0) = z.row(static_cast<Eigen::Index>(rng.below(n)));
    Vector d2 = Vector::Constant(z.rows(), std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < k; ++c) {
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            d2[i] = std::min(d2[i], (z.row(i) - centers.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
        const double total = d2.sum();
        if (total <= 0.0) {
            centers.row(static_cast<Eigen::Index>(c)) = z.row(static_cast<Eigen::Index>(rng.below(n)));
            continue;
        }
        double u = rng.uniform() * total;
        Eigen::Index pick = z.rows() - 1;
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            u -= d2[i];
            if (u <= 0.0) {
                pick = i;
                break;
            }
        }
        centers.row(static_cast<Eigen::Index>(c)) = z.row(pick);
    }

    std::vector<Eigen::Index> assign(n, 0);
    for (int it = 0; it < iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            Eigen::Index arg = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double d = (z.row(static_cast<Eigen::Index>(i)) -
                                  centers.row(static_cast<Eigen::Index>(c)))
                                     .squaredNorm();
                if (d < best) {
                    best = d;
                    arg = static_cast<Eigen::Index>(c);
                }
            }
            assign[i] = arg;
        }
        Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(k), z.cols());
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(assign[i]) += z.row(static_cast<Eigen::Index>(i));
            ++counts[static_cast<std::size_t>(assign[i])];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c] > 0)
                centers.row(static_cast<Eigen::Index>(c)) =
                    sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
    }
    return centers;
}

inline void add_ridge(Matrix& cov) {
    const double ridge = 1e-6 * cov.trace() / static_cast<double>(cov.rows());
    cov.diagonal().array() += ridge;
}

/// One complete EM run from a seeded initialization.
inline GmmModel fit_gmm_once(const Matrix& z, std::size_t k, std::uint64_t seed) {
    const auto n = z.rows();
    const auto p = z.cols();
    Rng rng(seed);

    GmmModel model;
    model.k = k;
    model.weights = Vector::Constant(static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k));
    model.means = kmeans_centers(z, k, rng);
    Vector global_mean = z.colwise().mean();
    Matrix centered = z.rowwise() - global_mean.transpose();
    Matrix global_cov = centered.transpose() * centered / static_cast<double>(n);
    add_ridge(global_cov);
    model.covariances.assign(k, global_cov);

    Matrix log_resp(n, static_cast<Eigen::Index>(k));
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 300; ++iter) {
        // E step: responsibilities and the observed-data log-likelihood.
        for (std::size_t c = 0; c < k; ++c) {
            const auto llt = spd_factor(model.covariances[c]);
            log_resp.col(static_cast<Eigen::Index>(c)) =
                gaussian_log_density(z, model.means.row(static_cast<Eigen::Index>(c)), llt).array() +
                std::log(model.weights[static_cast<Eigen::Index>(c)]);
        }
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double mx = log_resp.row(i).maxCoeff();
            const double lse = mx + std::log((log_resp.row(i).array() - mx).exp().sum());
            ll += lse;
            log_resp.row(i).array() -= lse;
        }
        model.log_likelihood_trace.push_back(ll);

        // M step.
        Matrix resp = log_resp.array().exp();
        for (std::size_t c = 0; c < k; ++c) {
            const auto ce = static_cast<Eigen::Index>(c);
            const double nk = resp.col(ce).sum();
            if (nk < 1.0)
                throw DegenerateCluster("component " + std::to_string(c) +
                                        " holds fewer than one expected member");
            model.weights[ce] = nk / static_cast<double>(n);
            model.means.row(ce) = (resp.col(ce).transpose() * z) / nk;
            Matrix diff = z.rowwise() - model.means.row(ce);
            Matrix cov = diff.transpose() * (diff.array().colwise() * resp.col(ce).array()).matrix() / nk;
            add_ridge(cov);
            model.covariances[c] = cov;
        }

        if (std::abs(ll - prev_ll) < 1e-6 * std::abs(prev_ll)) break;
        prev_ll = ll;
    }
    return model;
}

} // namespace detail

/// Fit a full-covariance Gaussian mixture by EM: k-means++ plus 10 k-means
/// iterations initialize each of 5 restarts (seeds derived from `seed`); every
/// M step adds a 1e-6 * trace/P ridge; a restart converges when the relative
/// log-likelihood change drops below 1e-6 or after 300 iterations. The restart
/// with the best final log-likelihood wins, ties to the earliest.
inline GmmModel fit_gmm(const Matrix& z, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ConfigError("fit_gmm: need at least one component");
    if (static_cast<Eigen::Index>(k) > z.rows())
        throw ConfigError("fit_gmm: K=" + std::to_string(k) + " exceeds sample count " +
                          std::to_string(z.rows()));
    if (!z.allFinite()) throw ParseError("fit_gmm: non-finite input");

    Rng master(seed);
    std::vector<std::uint64_t> restart_seeds;
    for (int r = 0; r < 5; ++r) restart_seeds.push_back(master.raw());

    GmmModel best;
    bool have_best = false;
    double best_ll = -std::numeric_limits<double>::infinity();
    DegenerateCluster last_error("fit_gmm: no restart attempted");
    for (int r = 0; r < 5; ++r) {
        try {
            GmmModel m = detail::fit_gmm_once(z, k, restart_seeds[static_cast<std::size_t>(r)]);
            const double ll = m.log_likelihood_trace.back();
            if (!have_best || ll > best_ll) {
                best = std::move(m);
                best_ll = ll;
                have_best = true;
            }
        } catch (const DegenerateCluster& e) {
            last_error = e;
        }
    }
    if (!have_best) throw last_error;
    return best;
}

/// Hard assignment: argmax posterior responsibility per row, ties to the
/// smaller component index.
inline std::vector<int> assign(const GmmModel& model, const Matrix& z) {
    if (z.cols() != model.means.cols())
        throw ShapeMismatch("assign: data has " + std::to_string(z.cols()) +
                            " features, model expects " + std::to_string(model.means.cols()));
    Matrix scores(z.rows(), static_cast<Eigen::Index>(model.k));
    for (std::size_t c = 0; c < model.k; ++c) {
        const auto llt = detail::spd_factor(model.covariances[c]);
        scores.col(static_cast<Eigen::Index>(c)) =
            detail::gaussian_log_density(z, model.means.row(static_cast<Eigen::Index>(c)), llt)
                .array() +
            std::log(model.weights[static_cast<Eigen::Index>(c)]);
    }
    std::vector<int> labels(static_cast<std::size_t>(z.rows()), 0);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        int arg = 0;
        for (Eigen::Index c = 1; c < scores.cols(); ++c)
            if (scores(i, c) > scores(i, arg)) arg = static_cast<int>(c);
        labels[static_cast<std::size_t>(i)] = arg;
    }
    return labels;
}

/// Labels CSV `spot_id,label`.
inline void save_labels_csv(const std::string& path, const std::vector<std::string>& spot_ids,
                            const std::vector<int>& labels) {
    if (spot_ids.size() != labels.size())
        throw LengthMismatch("save_labels_csv: " + std::to_string(spot_ids.size()) + " ids vs " +
                             std::to_string(labels.size()) + " labels");
    std::string out = "spot_id,label\n";
    for (std::size_t i = 0; i < spot_ids.size(); ++i)
        out += csv::escape(spot_ids[i]) + "," + std::to_string(labels[i]) + "\n";
    csv::write_file_atomic(path, out);
}

/// Read a labels CSV `spot_id,label`; label values stay strings so arbitrary
/// annotation names compare correctly.
inline std::pair<std::vector<std::string>, std::vector<std::string>> load_labels_csv(
    const std::string& path) {
    const auto rows = csv::parse(csv::read_file(path));
    if (rows.empty() || rows[0].size() != 2 || rows[0][0] != "spot_id" || rows[0][1] != "label")
        throw ParseError(path + ": expected header spot_id,label");
    std::vector<std::string> ids, labels;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != 2) throw ParseError(path + ": row " + std::to_string(r + 1) + " malformed");
        ids.push_back(rows[r][0]);
        labels.push_back(rows[r][1]);
    }
    if (ids.empty()) throw ParseError(path + ": no data rows");
    return {std::move(ids), std::move(labels)};
}

} // namespace stprotein
