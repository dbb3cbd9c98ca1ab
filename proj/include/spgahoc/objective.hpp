#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "constraints.hpp"
#include "linalg.hpp"

namespace spgahoc {

struct AlmParams {
    double mu = 0.0;
    double rho = 1.0;

    void validate() const {
        if (!(mu >= 0.0) || !std::isfinite(mu)) throw std::invalid_argument("AlmParams: mu must be >= 0");
        if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("AlmParams: rho must be > 0");
    }
};

struct ObjectiveEval {
    double total = 0.0;
    double fit = 0.0;
    double h = 0.0;
    Matrix grad;  // smooth part only; the ℓ1 term is handled by the prox
    bool finite = true;
};

/// (1/2n)‖X − XW‖² and −(1/n)Xᵀ(X − XW), computed directly from X.
inline std::pair<double, Matrix> loss_fit(const Matrix& w, const Matrix& x) {
    require_square(w, "loss_fit");
    if (x.cols() != w.rows() || x.rows() < 1)
        throw std::invalid_argument("loss_fit: X has " + std::to_string(x.cols()) + " columns but W is " +
                                    std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    const double n = static_cast<double>(x.rows());
    const Matrix r = x - x * w;
    Matrix g = -(x.transpose() * r) / n;
    g.diagonal().setZero();
    return {0.5 * r.squaredNorm() / n, std::move(g)};
}

/// Same loss through the Gram matrix Σ = XᵀX/n; cost per evaluation is O(d³) instead of O(n d²).
class LeastSquaresLoss {
  public:
    explicit LeastSquaresLoss(const Matrix& x) {
        if (x.rows() < 1 || x.cols() < 1) throw std::invalid_argument("LeastSquaresLoss: empty data");
        require_finite(x, "LeastSquaresLoss");
        gram_ = (x.transpose() * x) / static_cast<double>(x.rows());
    }

    Index dim() const { return gram_.rows(); }
    const Matrix& gram() const { return gram_; }

    double value(const Matrix& w) const {
        check(w);
        const Matrix r = Matrix::Identity(dim(), dim()) - w;
        return 0.5 * r.cwiseProduct(gram_ * r).sum();
    }

    std::pair<double, Matrix> value_grad(const Matrix& w) const {
        check(w);
        const Matrix r = Matrix::Identity(dim(), dim()) - w;
        Matrix sr = gram_ * r;
        const double v = 0.5 * r.cwiseProduct(sr).sum();
        sr *= -1.0;
        sr.diagonal().setZero();
        return {v, std::move(sr)};
    }

  private:
    void check(const Matrix& w) const {
        if (w.rows() != dim() || w.cols() != dim())
            throw std::invalid_argument("LeastSquaresLoss: W must be " + std::to_string(dim()) + "x" +
                                        std::to_string(dim()));
    }
    Matrix gram_;
};

/// max over i≠j of |(XᵀX/n)_ij|: the smallest λ₁ for which W = 0 is stationary.
inline double stability_threshold(const Matrix& x) {
    if (x.rows() < 1) throw std::invalid_argument("stability_threshold: empty data");
    Matrix g = (x.transpose() * x) / static_cast<double>(x.rows());
    g.diagonal().setZero();
    return g.cwiseAbs().maxCoeff();
}

/// L̃ = fit + μh + (ρ/2)h² and its gradient. Non-smooth kinds need subgradient_mode.
inline ObjectiveEval alm_eval(const Matrix& w, const LeastSquaresLoss& loss, const ConstraintSpec& spec,
                              const AlmParams& params, bool subgradient_mode = false, bool want_grad = true) {
    params.validate();
    if (!is_smooth(spec.kind) && !subgradient_mode)
        throw std::invalid_argument(std::string("alm_eval: constraint ") + std::string(to_string(spec.kind)) +
                                    " is non-smooth; enable subgradient mode to use it");
    ObjectiveEval out;
    ConstraintEval c = want_grad ? constraint_grad(spec, w) : ConstraintEval{constraint_value(spec, w), {}, true, false};
    if (!want_grad) c.finite = std::isfinite(c.value);
    out.h = c.value;
    if (want_grad) {
        auto [f, g] = loss.value_grad(w);
        out.fit = f;
        if (c.finite) out.grad = g + (params.mu + params.rho * c.value) * c.gradient;
    } else {
        out.fit = loss.value(w);
    }
    out.finite = c.finite && std::isfinite(out.fit);
    out.total = out.finite ? out.fit + params.mu * c.value + 0.5 * params.rho * c.value * c.value
                           : std::numeric_limits<double>::infinity();
    if (out.finite && !std::isfinite(out.total)) {
        out.finite = false;
        out.total = std::numeric_limits<double>::infinity();
    }
    return out;
}

inline ObjectiveEval alm_eval(const Matrix& w, const Matrix& x, const ConstraintSpec& spec, const AlmParams& params,
                              bool subgradient_mode = false) {
    return alm_eval(w, LeastSquaresLoss(x), spec, params, subgradient_mode);
}

}  // namespace spgahoc
