#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "linalg.hpp"
#include "optim.hpp"

namespace spgahoc {

/// Pairwise structural Hamming distance. Each unordered pair {i,j} whose edge state differs
/// (absent, i→j, j→i, or both) costs 1, so a reversed edge counts once.
inline std::size_t shd(const BoolAdjacency& est, const BoolAdjacency& truth) {
    if (est.size() != truth.size())
        throw std::invalid_argument("shd: dimension mismatch " + std::to_string(est.size()) + " vs " +
                                    std::to_string(truth.size()));
    std::size_t count = 0;
    const Index d = est.size();
    for (Index i = 0; i < d; ++i)
        for (Index j = i + 1; j < d; ++j)
            if (est(i, j) != truth(i, j) || est(j, i) != truth(j, i)) ++count;
    return count;
}

struct StructuralScore {
    std::size_t shd = 0;
    double tpr = 0.0;
    double fdr = 0.0;
    std::size_t nnz = 0;
    std::size_t exact_zero_count = 0;
    std::size_t true_positives = 0;
    std::size_t predicted_edges = 0;
    std::size_t true_edges = 0;
    double sparsity = 0.0;  // exact_zero_count / (d² − d)
    bool support_match = false;
    bool sign_consistent = false;
};

/// nnz and exact zeros come from the raw matrix; shd/tpr/fdr from entries with |w| > tau.
inline StructuralScore structural_score(const Matrix& w_est, const Matrix& w_true, double tau = 0.0) {
    require_square(w_est, "structural_score");
    require_same_shape(w_est, w_true, "structural_score");
    const Index d = w_est.rows();
    StructuralScore s;
    const BoolAdjacency est = threshold_support(w_est, tau);
    const BoolAdjacency truth = support(w_true);
    s.shd = shd(est, truth);
    s.nnz = static_cast<std::size_t>(count_nonzero(w_est));
    s.exact_zero_count = static_cast<std::size_t>(d * d - d) - s.nnz;
    s.sparsity = d > 1 ? static_cast<double>(s.exact_zero_count) / static_cast<double>(d * d - d) : 1.0;
    bool signs = true;
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) {
            if (i == j) continue;
            if (est(i, j)) ++s.predicted_edges;
            if (truth(i, j)) ++s.true_edges;
            if (est(i, j) && truth(i, j)) {
                ++s.true_positives;
                if ((w_est(i, j) > 0.0) != (w_true(i, j) > 0.0)) signs = false;
            }
        }
    s.tpr = static_cast<double>(s.true_positives) / static_cast<double>(std::max<std::size_t>(s.true_edges, 1));
    s.fdr = static_cast<double>(s.predicted_edges - s.true_positives) /
            static_cast<double>(std::max<std::size_t>(s.predicted_edges, 1));
    s.support_match = est == truth;
    s.sign_consistent = s.support_match && signs;
    return s;
}

struct ColumnAssumption {
    Index column = 0;
    std::size_t parents = 0;
    double irrepresentable_norm = 0.0;  // ‖Σ_{S^c S} Σ_{SS}⁻¹‖_∞
    double lambda_min = 0.0;            // smallest eigenvalue of Σ_{SS}
    bool singular = false;
};

struct AssumptionReport {
    double gamma_hat = 1.0;
    double kappa_hat = std::numeric_limits<double>::infinity();  // stays +inf when no column has parents
    bool beta_min_ok = false;
    bool beta_min_vacuous = false;
    bool stability_ok = false;  // λ₁ ≥ stability threshold (origin is stationary)
    double stability_threshold = 0.0;
    std::size_t columns_checked = 0;
    std::vector<ColumnAssumption> columns;
    bool any_singular = false;
};

/// Per-column irrepresentability and restricted eigenvalue estimates from Σ = XᵀX/n.
inline AssumptionReport check_irrepresentable_gram(const Matrix& sigma, const BoolAdjacency& truth) {
    require_square(sigma, "check_irrepresentable");
    if (sigma.rows() != truth.size()) throw std::invalid_argument("check_irrepresentable: dimension mismatch");
    const Index d = sigma.rows();
    AssumptionReport rep;
    double worst = 0.0;
    for (Index j = 0; j < d; ++j) {
        std::vector<Index> s, sc;
        for (Index k = 0; k < d; ++k) {
            if (k == j) continue;
            (truth(k, j) ? s : sc).push_back(k);
        }
        if (s.empty()) continue;
        ColumnAssumption col;
        col.column = j;
        col.parents = s.size();
        const auto ns = static_cast<Index>(s.size());
        Matrix sss(ns, ns);
        for (Index a = 0; a < ns; ++a)
            for (Index b = 0; b < ns; ++b) sss(a, b) = sigma(s[static_cast<std::size_t>(a)], s[static_cast<std::size_t>(b)]);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(sss, Eigen::EigenvaluesOnly);
        col.lambda_min = eig.eigenvalues().minCoeff();
        const double scale = std::max(1.0, sss.cwiseAbs().maxCoeff());
        if (!(col.lambda_min > 1e-12 * scale)) {
            col.singular = true;
            rep.any_singular = true;
            col.irrepresentable_norm = std::numeric_limits<double>::infinity();
        } else if (!sc.empty()) {
            Matrix cross(static_cast<Index>(sc.size()), ns);
            for (Index a = 0; a < cross.rows(); ++a)
                for (Index b = 0; b < ns; ++b)
                    cross(a, b) = sigma(sc[static_cast<std::size_t>(a)], s[static_cast<std::size_t>(b)]);
            // Σ_{S^c S} Σ_{SS}⁻¹ = (Σ_{SS}⁻¹ Σ_{S S^c})ᵀ since Σ_{SS} is symmetric.
            const Matrix prod = sss.llt().solve(cross.transpose()).transpose();
            col.irrepresentable_norm = prod.cwiseAbs().rowwise().sum().maxCoeff();
        }
        worst = std::max(worst, col.irrepresentable_norm);
        rep.kappa_hat = std::min(rep.kappa_hat, std::max(0.0, col.lambda_min));
        rep.columns.push_back(col);
        ++rep.columns_checked;
    }
    rep.gamma_hat = 1.0 - worst;
    return rep;
}

inline AssumptionReport check_irrepresentable(const Matrix& x, const BoolAdjacency& truth) {
    if (x.rows() < 1) throw std::invalid_argument("check_irrepresentable: empty data");
    return check_irrepresentable_gram((x.transpose() * x) / static_cast<double>(x.rows()), truth);
}

struct BetaMinResult {
    bool ok = false;
    bool vacuous = false;
    double min_weight = 0.0;
    double bound = 0.0;  // 4λ₁/κ̂
};

/// min over the true support of |W*_ij| ≥ 4λ₁/κ̂. An empty support passes vacuously.
inline BetaMinResult check_beta_min_detail(const Matrix& w_true, double lambda1, double kappa_hat) {
    if (!(kappa_hat > 0.0)) throw std::invalid_argument("check_beta_min: kappa_hat must be positive");
    if (!(lambda1 >= 0.0)) throw std::invalid_argument("check_beta_min: lambda1 must be >= 0");
    require_square(w_true, "check_beta_min");
    BetaMinResult r;
    r.bound = 4.0 * lambda1 / kappa_hat;
    r.min_weight = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < w_true.rows(); ++i)
        for (Index j = 0; j < w_true.cols(); ++j)
            if (i != j && w_true(i, j) != 0.0) r.min_weight = std::min(r.min_weight, std::abs(w_true(i, j)));
    if (!std::isfinite(r.min_weight)) {
        r.vacuous = true;
        r.ok = true;
        r.min_weight = 0.0;
        return r;
    }
    r.ok = r.min_weight >= r.bound;
    return r;
}

inline bool check_beta_min(const Matrix& w_true, double lambda1, double kappa_hat) {
    return check_beta_min_detail(w_true, lambda1, kappa_hat).ok;
}

/// Full assumption report for a dataset, ground truth and λ₁.
inline AssumptionReport check_assumptions(const Matrix& x, const Matrix& w_true, double lambda1) {
    AssumptionReport rep = check_irrepresentable(x, support(w_true));
    rep.stability_threshold = stability_threshold(x);
    rep.stability_ok = lambda1 >= rep.stability_threshold;
    if (rep.kappa_hat > 0.0) {
        const auto b = check_beta_min_detail(w_true, lambda1, std::isfinite(rep.kappa_hat) ? rep.kappa_hat : 1.0);
        rep.beta_min_ok = b.ok;
        rep.beta_min_vacuous = b.vacuous;
    }
    return rep;
}

}  // namespace spgahoc
