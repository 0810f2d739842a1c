#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "stprotein/dataset.hpp"
#include "stprotein/errors.hpp"
#include "stprotein/types.hpp"

namespace stprotein {

/// Synthetic paired dataset plus its generating ground truth: domain labels and
/// the exact protein mixing matrix (protein = rna * mixing^T before noise).
struct SynthResult {
    SpatialOmicsDataset ds;
    std::vector<int> labels;
    Matrix mixing; // P x G
};

/// Generate a desk-scale paired dataset: spots on a jittered grid, K Voronoi
/// spatial domains, a small marker-gene panel per domain boosted 4x, per-spot
/// depth, and protein counts that are a sparse non-negative linear readout of
/// one domain's panel plus a thin background spread, with optional Gaussian
/// noise (sigma scales each protein's mean signal). noise = 0 makes protein
/// exactly linear in RNA.
inline SynthResult synth_dataset(std::size_t n, std::size_t g, std::size_t p, std::size_t k,
                                 double noise, std::uint64_t seed) {
    if (n < 4 || g < 2 || p < 1 || k < 1 || k > n || k > g)
        throw ConfigError("synth_dataset: need n >= 4, g >= 2, p >= 1, 1 <= k <= min(n, g)");
    if (noise < 0.0) throw ConfigError("synth_dataset: noise must be >= 0");
    Rng rng(seed);

    SynthResult out;
    auto& ds = out.ds;
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    ds.coords.resize(static_cast<Eigen::Index>(n), 2);
    ds.spot_ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "spot_%05zu", i);
        ds.spot_ids.emplace_back(buf);
        ds.coords(static_cast<Eigen::Index>(i), 0) =
            static_cast<double>(i % side) + rng.uniform(-0.1, 0.1);
        ds.coords(static_cast<Eigen::Index>(i), 1) =
            static_cast<double>(i / side) + rng.uniform(-0.1, 0.1);
    }

    // Voronoi domains seeded at k random spots; redraw until none is empty.
    out.labels.assign(n, 0);
    for (int attempt = 0;; ++attempt) {
        if (attempt >= 100) throw DegenerateCluster("synth_dataset: could not place non-empty domains");
        std::vector<std::size_t> centers;
        while (centers.size() < k) {
            const std::size_t c = rng.below(n);
            bool dup = false;
            for (auto existing : centers) dup = dup || existing == c;
            if (!dup) centers.push_back(c);
        }
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double d = (ds.coords.row(static_cast<Eigen::Index>(i)) -
                                  ds.coords.row(static_cast<Eigen::Index>(centers[c])))
                                     .squaredNorm();
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            out.labels[i] = static_cast<int>(arg);
            ++count[arg];
        }
        bool ok = true;
        for (auto c : count) ok = ok && c > 0;
        if (ok) break;
    }

    // RNA: per-gene base level, per-spot depth, mild log-normal jitter.
    // Genes [d*m, (d+1)*m) are domain d's marker panel, boosted 4x there; the
    // rest of the genome is domain-flat. Keeping the panels small keeps the
    // RNA PCA scores near the protein target's scale, so neither loss term
    // swamps the other at the default weights.
    constexpr double kBoost = 4.0;
    const std::size_t m = std::max<std::size_t>(1, std::min<std::size_t>(10, g / (2 * k)));
    std::vector<double> base(g);
    for (std::size_t j = 0; j < g; ++j) base[j] = rng.uniform(0.5, 2.0);
    std::vector<double> depth(n);
    for (std::size_t i = 0; i < n; ++i) depth[i] = rng.uniform(0.8, 1.2);

    ds.rna_counts.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(g));
    ds.gene_names.reserve(g);
    for (std::size_t j = 0; j < g; ++j) ds.gene_names.push_back("gene_" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
        const auto domain = static_cast<std::size_t>(out.labels[i]);
        for (std::size_t j = 0; j < g; ++j) {
            const bool boosted = j < m * k && j / m == domain;
            const double level = base[j] * (boosted ? kBoost : 1.0) * depth[i] *
                                 std::exp(0.1 * rng.normal());
            ds.rna_counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = level;
        }
    }

    // Protein: protein q reads domain (q mod k)'s marker panel with strong
    // weights plus up to 20 background genes with weak ones, so its clean
    // signal tracks that domain far above the noise floor. Rows of the mixing
    // matrix are scaled so every protein's mean clean signal is 10.
    const std::size_t n_background = std::min<std::size_t>(20, g - m * k);
    out.mixing = Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(g));
    for (std::size_t q = 0; q < p; ++q) {
        const auto qe = static_cast<Eigen::Index>(q);
        const std::size_t dom = q % k;
        for (std::size_t j = dom * m; j < (dom + 1) * m; ++j)
            out.mixing(qe, static_cast<Eigen::Index>(j)) = rng.uniform(1.0, 1.5);
        std::size_t placed = 0;
        while (placed < n_background) {
            const std::size_t j = rng.below(g);
            if (j < m * k || out.mixing(qe, static_cast<Eigen::Index>(j)) != 0.0) continue;
            out.mixing(qe, static_cast<Eigen::Index>(j)) = rng.uniform(0.1, 0.3);
            ++placed;
        }
    }
    Matrix clean = ds.rna_counts * out.mixing.transpose(); // N x P
    for (std::size_t q = 0; q < p; ++q) {
        const auto qe = static_cast<Eigen::Index>(q);
        const double mean = clean.col(qe).mean();
        out.mixing.row(qe) *= 10.0 / mean;
        clean.col(qe) *= 10.0 / mean;
    }

    ds.has_protein = true;
    ds.protein_names.reserve(p);
    for (std::size_t q = 0; q < p; ++q) ds.protein_names.push_back("prot_" + std::to_string(q));
    ds.protein_counts.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t q = 0; q < p; ++q) {
            const double v = clean(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) +
                             noise * 10.0 * rng.normal();
            ds.protein_counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) =
                std::max(0.0, v);
        }
    return out;
}

/// Write the generated dataset as the four standard CSVs (rna, coords, protein,
/// labels) into `dir`.
inline void save_synth(const std::string& dir, const SynthResult& synth) {
    const auto& ds = synth.ds;
    NamedMatrix rna{ds.spot_ids, ds.gene_names, ds.rna_counts};
    save_matrix_csv(dir + "/rna.csv", rna);
    NamedMatrix coords{ds.spot_ids, {"x", "y"}, ds.coords};
    save_matrix_csv(dir + "/coords.csv", coords);
    NamedMatrix prot{ds.spot_ids, ds.protein_names, ds.protein_counts};
    save_matrix_csv(dir + "/protein.csv", prot);
    std::string labels = "spot_id,label\n";
    for (std::size_t i = 0; i < ds.spot_ids.size(); ++i)
        labels += ds.spot_ids[i] + "," + std::to_string(synth.labels[i]) + "\n";
    csv::write_file_atomic(dir + "/labels.csv", labels);
}

} // namespace stprotein
