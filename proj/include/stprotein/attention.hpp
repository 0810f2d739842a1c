#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "stprotein/errors.hpp"
#include "stprotein/graph.hpp"
#include "stprotein/types.hpp"

namespace stprotein {

/// LeakyReLU negative slope used by every attention score in the model.
inline constexpr double kLeakySlope = 0.2;

/// One attention head: value projection w (F_out x F_in), score projection w_a
/// (F_out x 2 F_in, left half applied to the destination node, right half to
/// the source), and score vector a (F_out).
struct GatHeadParams {
    Matrix w;
    Matrix w_a;
    Vector a;
};

/// One graph-attention layer; heads are averaged, so every head shares F_out.
struct GatLayerParams {
    std::vector<GatHeadParams> heads;

    Eigen::Index f_in() const { return heads.at(0).w.cols(); }
    Eigen::Index f_out() const { return heads.at(0).w.rows(); }
};

/// Per-head forward intermediates, retained so the backward pass reuses the
/// exact forward branches instead of recomputing them.
/// Edges are indexed in CSR order: for each destination node, its in-neighbors
/// ascending. mask holds the LeakyReLU slope factor per edge coordinate
/// (kLeakySlope where the pre-activation was negative, 1 elsewhere).
struct HeadActivation {
    Matrix l;    // N x F_out, destination-side scores
    Matrix r;    // N x F_out, source-side scores
    Matrix z;    // N x F_out, value projections
    Matrix mask; // E x F_out
    Vector e;    // E, pre-softmax scores
    Vector alpha; // E, attention coefficients
};

struct LayerActivation {
    std::vector<HeadActivation> heads;
    Matrix output; // N x F_out, head-averaged
};

namespace detail {

inline void check_layer_shapes(const GatLayerParams& params, const Matrix& h,
                               const NeighborLists& nl) {
    if (params.heads.empty()) throw ShapeMismatch("gat: layer has no heads");
    const Eigen::Index f_in = params.heads[0].w.cols();
    const Eigen::Index f_out = params.heads[0].w.rows();
    for (const auto& head : params.heads) {
        if (head.w.rows() != f_out || head.w.cols() != f_in ||
            head.w_a.rows() != f_out || head.w_a.cols() != 2 * f_in || head.a.size() != f_out)
            throw ShapeMismatch("gat: inconsistent head shapes");
    }
    if (h.cols() != f_in)
        throw ShapeMismatch("gat: input has " + std::to_string(h.cols()) + " features, layer expects " +
                            std::to_string(f_in));
    if (static_cast<std::size_t>(h.rows()) + 1 != nl.offsets.size())
        throw ShapeMismatch("gat: neighbor lists cover " + std::to_string(nl.offsets.size() - 1) +
                            " nodes, input has " + std::to_string(h.rows()));
}

} // namespace detail

/// Attention forward pass. Per head: score each edge (j -> i) as
/// a . LeakyReLU(A_l h_i + A_r h_j), softmax the scores over each node's
/// in-neighbors (max-subtracted), aggregate alpha-weighted value projections,
/// then average the heads.
inline LayerActivation gat_forward(const GatLayerParams& params, const Matrix& h,
                                   const NeighborLists& nl) {
    detail::check_layer_shapes(params, h, nl);
    const Eigen::Index n = h.rows();
    const Eigen::Index f_out = params.f_out();
    const auto n_edges = static_cast<Eigen::Index>(nl.indices.size());
    const auto n_heads = static_cast<double>(params.heads.size());

    LayerActivation act;
    act.heads.reserve(params.heads.size());
    act.output = Matrix::Zero(n, f_out);

    for (const auto& head : params.heads) {
        HeadActivation ha;
        const Matrix a_l = head.w_a.leftCols(head.w.cols());
        const Matrix a_r = head.w_a.rightCols(head.w.cols());
        ha.l.noalias() = h * a_l.transpose();
        ha.r.noalias() = h * a_r.transpose();
        ha.z.noalias() = h * head.w.transpose();
        ha.mask.resize(n_edges, f_out);
        ha.e.resize(n_edges);
        ha.alpha.resize(n_edges);

        for (Eigen::Index i = 0; i < n; ++i) {
            const auto begin = nl.offsets[static_cast<std::size_t>(i)];
            const auto end = nl.offsets[static_cast<std::size_t>(i) + 1];
            for (std::size_t p = begin; p < end; ++p) {
                const auto j = static_cast<Eigen::Index>(nl.indices[p]);
                double score = 0.0;
                for (Eigen::Index f = 0; f < f_out; ++f) {
                    const double s = ha.l(i, f) + ha.r(j, f);
                    const double slope = s < 0.0 ? kLeakySlope : 1.0;
                    ha.mask(static_cast<Eigen::Index>(p), f) = slope;
                    score += head.a[f] * slope * s;
                }
                ha.e[static_cast<Eigen::Index>(p)] = score;
            }
            double max_e = -std::numeric_limits<double>::infinity();
            for (std::size_t p = begin; p < end; ++p)
                max_e = std::max(max_e, ha.e[static_cast<Eigen::Index>(p)]);
            double denom = 0.0;
            for (std::size_t p = begin; p < end; ++p)
                denom += std::exp(ha.e[static_cast<Eigen::Index>(p)] - max_e);
            for (std::size_t p = begin; p < end; ++p) {
                const auto pe = static_cast<Eigen::Index>(p);
                ha.alpha[pe] = std::exp(ha.e[pe] - max_e) / denom;
                const auto j = static_cast<Eigen::Index>(nl.indices[p]);
                act.output.row(i) += ha.alpha[pe] / n_heads * ha.z.row(j);
            }
        }
        act.heads.push_back(std::move(ha));
    }
    if (!act.output.allFinite()) throw NonFiniteActivation("gat_forward: non-finite output");
    return act;
}

/// Exact reverse-mode gradients through gat_forward. The LeakyReLU branch is
/// taken from the stored forward mask, and the softmax Jacobian is applied per
/// node. Returns parameter gradients (same shapes as params) and grad wrt h.
inline std::pair<GatLayerParams, Matrix> gat_backward(const GatLayerParams& params, const Matrix& h,
                                                      const NeighborLists& nl,
                                                      const LayerActivation& act,
                                                      const Matrix& grad_output) {
    detail::check_layer_shapes(params, h, nl);
    const Eigen::Index n = h.rows();
    const Eigen::Index f_out = params.f_out();
    const Eigen::Index f_in = params.f_in();
    if (grad_output.rows() != n || grad_output.cols() != f_out)
        throw ShapeMismatch("gat_backward: grad_output shape mismatch");
    if (act.heads.size() != params.heads.size())
        throw ShapeMismatch("gat_backward: activation has " + std::to_string(act.heads.size()) +
                            " heads, params " + std::to_string(params.heads.size()));

    const auto n_heads = static_cast<double>(params.heads.size());
    GatLayerParams grads;
    grads.heads.reserve(params.heads.size());
    Matrix grad_h = Matrix::Zero(n, f_in);

    for (std::size_t hd = 0; hd < params.heads.size(); ++hd) {
        const auto& head = params.heads[hd];
        const auto& ha = act.heads[hd];
        const Matrix a_l = head.w_a.leftCols(f_in);
        const Matrix a_r = head.w_a.rightCols(f_in);

        Matrix g_z = Matrix::Zero(n, f_out);
        Matrix g_l = Matrix::Zero(n, f_out);
        Matrix g_r = Matrix::Zero(n, f_out);
        Vector g_a = Vector::Zero(f_out);

        for (Eigen::Index i = 0; i < n; ++i) {
            const auto begin = nl.offsets[static_cast<std::size_t>(i)];
            const auto end = nl.offsets[static_cast<std::size_t>(i) + 1];

            // Aggregation: g_alpha per edge, g_z per source node. The softmax
            // Jacobian needs the alpha-weighted sum of every g_alpha at this
            // node, so g_alpha is recomputed in the second pass.
            double alpha_dot = 0.0;
            for (std::size_t p = begin; p < end; ++p) {
                const auto pe = static_cast<Eigen::Index>(p);
                const auto j = static_cast<Eigen::Index>(nl.indices[p]);
                const double g_alpha = grad_output.row(i).dot(ha.z.row(j)) / n_heads;
                alpha_dot += ha.alpha[pe] * g_alpha;
                g_z.row(j) += ha.alpha[pe] / n_heads * grad_output.row(i);
            }
            for (std::size_t p = begin; p < end; ++p) {
                const auto pe = static_cast<Eigen::Index>(p);
                const auto j = static_cast<Eigen::Index>(nl.indices[p]);
                const double g_alpha = grad_output.row(i).dot(ha.z.row(j)) / n_heads;
                const double g_e = ha.alpha[pe] * (g_alpha - alpha_dot);
                for (Eigen::Index f = 0; f < f_out; ++f) {
                    const double s = ha.l(i, f) + ha.r(j, f);
                    const double t = ha.mask(pe, f) * s;
                    g_a[f] += g_e * t;
                    const double g_s = g_e * head.a[f] * ha.mask(pe, f);
                    g_l(i, f) += g_s;
                    g_r(j, f) += g_s;
                }
            }
        }

        GatHeadParams hg;
        hg.w.noalias() = g_z.transpose() * h;
        hg.w_a.resize(f_out, 2 * f_in);
        hg.w_a.leftCols(f_in).noalias() = g_l.transpose() * h;
        hg.w_a.rightCols(f_in).noalias() = g_r.transpose() * h;
        hg.a = g_a;
        grads.heads.push_back(std::move(hg));

        grad_h.noalias() += g_z * head.w;
        grad_h.noalias() += g_l * a_l;
        grad_h.noalias() += g_r * a_r;
    }
    return {std::move(grads), std::move(grad_h)};
}

/// Extract the per-head attention coefficients of an activation.
inline std::vector<Vector> alphas_of(const LayerActivation& act) {
    std::vector<Vector> out;
    out.reserve(act.heads.size());
    for (const auto& ha : act.heads) out.push_back(ha.alpha);
    return out;
}

/// Aggregation with externally supplied attention coefficients: skips scoring
/// and softmax, computes the alpha-weighted value aggregation and head average.
/// The supplied alphas are constants; no gradient flows into them.
inline Matrix gat_forward_with_fixed_alpha(const GatLayerParams& params, const Matrix& h,
                                           const NeighborLists& nl,
                                           const std::vector<Vector>& alpha) {
    detail::check_layer_shapes(params, h, nl);
    if (alpha.size() != params.heads.size())
        throw AlphaMismatch("fixed-alpha forward: " + std::to_string(alpha.size()) +
                            " alpha vectors for " + std::to_string(params.heads.size()) + " heads");
    const Eigen::Index n = h.rows();
    const Eigen::Index f_out = params.f_out();
    const auto n_heads = static_cast<double>(params.heads.size());
    Matrix output = Matrix::Zero(n, f_out);

    for (std::size_t hd = 0; hd < params.heads.size(); ++hd) {
        if (static_cast<std::size_t>(alpha[hd].size()) != nl.indices.size())
            throw AlphaMismatch("fixed-alpha forward: " + std::to_string(alpha[hd].size()) +
                                " coefficients for " + std::to_string(nl.indices.size()) + " edges");
        const Matrix z = h * params.heads[hd].w.transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto begin = nl.offsets[static_cast<std::size_t>(i)];
            const auto end = nl.offsets[static_cast<std::size_t>(i) + 1];
            for (std::size_t p = begin; p < end; ++p) {
                const auto j = static_cast<Eigen::Index>(nl.indices[p]);
                output.row(i) += alpha[hd][static_cast<Eigen::Index>(p)] / n_heads * z.row(j);
            }
        }
    }
    if (!output.allFinite()) throw NonFiniteActivation("fixed-alpha forward: non-finite output");
    return output;
}

/// Backward of gat_forward_with_fixed_alpha: gradients reach only w and h (the
/// coefficients are constants, so w_a and a receive zero).
inline std::pair<GatLayerParams, Matrix> gat_fixed_alpha_backward(const GatLayerParams& params,
                                                                  const Matrix& h,
                                                                  const NeighborLists& nl,
                                                                  const std::vector<Vector>& alpha,
                                                                  const Matrix& grad_output) {
    detail::check_layer_shapes(params, h, nl);
    if (alpha.size() != params.heads.size())
        throw AlphaMismatch("fixed-alpha backward: alpha head count mismatch");
    const Eigen::Index n = h.rows();
    const Eigen::Index f_out = params.f_out();
    const Eigen::Index f_in = params.f_in();
    if (grad_output.rows() != n || grad_output.cols() != f_out)
        throw ShapeMismatch("fixed-alpha backward: grad_output shape mismatch");

    const auto n_heads = static_cast<double>(params.heads.size());
    GatLayerParams grads;
    grads.heads.reserve(params.heads.size());
    Matrix grad_h = Matrix::Zero(n, f_in);

    for (std::size_t hd = 0; hd < params.heads.size(); ++hd) {
        const auto& head = params.heads[hd];
        if (static_cast<std::size_t>(alpha[hd].size()) != nl.indices.size())
            throw AlphaMismatch("fixed-alpha backward: alpha edge count mismatch");
        Matrix g_z = Matrix::Zero(n, f_out);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto begin = nl.offsets[static_cast<std::size_t>(i)];
            const auto end = nl.offsets[static_cast<std::size_t>(i) + 1];
            for (std::size_t p = begin; p < end; ++p) {
                const auto j = static_cast<Eigen::Index>(nl.indices[p]);
                g_z.row(j) += alpha[hd][static_cast<Eigen::Index>(p)] / n_heads * grad_output.row(i);
            }
        }
        GatHeadParams hg;
        hg.w.noalias() = g_z.transpose() * h;
        hg.w_a = Matrix::Zero(f_out, 2 * f_in);
        hg.a = Vector::Zero(f_out);
        grads.heads.push_back(std::move(hg));
        grad_h.noalias() += g_z * head.w;
    }
    return {std::move(grads), std::move(grad_h)};
}

} // namespace stprotein
