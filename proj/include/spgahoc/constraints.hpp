#pragma once

#include <cctype>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "linalg.hpp"

namespace spgahoc {

enum class ConstraintKind { Exp, LogDet, Aac, Ahoc, SAhoc, SmoothedAhoc };

inline std::string_view to_string(ConstraintKind k) {
    switch (k) {
        case ConstraintKind::Exp: return "Exp";
        case ConstraintKind::LogDet: return "LogDet";
        case ConstraintKind::Aac: return "Aac";
        case ConstraintKind::Ahoc: return "Ahoc";
        case ConstraintKind::SAhoc: return "SAhoc";
        case ConstraintKind::SmoothedAhoc: return "SmoothedAhoc";
    }
    return "?";
}

/// Case-insensitive; '_' and '-' are ignored, so "SmoothedAhoc", "smoothed_ahoc" and "s-ahoc" all parse.
inline std::optional<ConstraintKind> parse_constraint_kind(std::string_view s) {
    auto squash = [](std::string_view v) {
        std::string out;
        for (char c : v)
            if (c != '_' && c != '-') out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return out;
    };
    const std::string key = squash(s);
    for (auto k : {ConstraintKind::Exp, ConstraintKind::LogDet, ConstraintKind::Aac, ConstraintKind::Ahoc,
                   ConstraintKind::SAhoc, ConstraintKind::SmoothedAhoc}) {
        if (squash(to_string(k)) == key) return k;
    }
    return std::nullopt;
}

/// True for kinds whose value is differentiable everywhere on its domain.
inline bool is_smooth(ConstraintKind k) { return k != ConstraintKind::Ahoc && k != ConstraintKind::SAhoc; }

/// Kinds using the hybrid |W|/W² core (their exact value is zero only on DAG supports).
inline bool uses_hoc_core(ConstraintKind k) {
    return k == ConstraintKind::Ahoc || k == ConstraintKind::SAhoc || k == ConstraintKind::SmoothedAhoc;
}

struct ConstraintSpec {
    ConstraintKind kind = ConstraintKind::SmoothedAhoc;
    double alpha = 0.5;
    double epsilon = 1e-8;
    double delta = 1e-7;
    double s = 1.0;

    void validate() const {
        if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("ConstraintSpec: alpha must lie in [0,1)");
        if (!(epsilon > 0.0) || !std::isfinite(epsilon))
            throw std::invalid_argument("ConstraintSpec: epsilon must be positive");
        if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("ConstraintSpec: delta must be positive");
        if (!(s >= 1.0) || !std::isfinite(s)) throw std::invalid_argument("ConstraintSpec: s must be >= 1");
    }

    /// Parameter names that have no effect for this kind.
    std::vector<std::string> ignored_parameters() const {
        std::vector<std::string> out;
        const bool hoc = uses_hoc_core(kind);
        if (!hoc) out.emplace_back("alpha");
        if (!(kind == ConstraintKind::Aac || kind == ConstraintKind::Ahoc || kind == ConstraintKind::SmoothedAhoc))
            out.emplace_back("epsilon");
        if (kind != ConstraintKind::SmoothedAhoc) out.emplace_back("delta");
        if (kind != ConstraintKind::LogDet) out.emplace_back("s");
        return out;
    }

    /// The same spec with smoothing removed (SmoothedAhoc -> Ahoc); others unchanged.
    ConstraintSpec unsmoothed() const {
        ConstraintSpec u = *this;
        if (kind == ConstraintKind::SmoothedAhoc) u.kind = ConstraintKind::Ahoc;
        return u;
    }
};

struct ConstraintEval {
    double value = 0.0;
    Matrix gradient;
    bool finite = true;
    // Set when a non-smooth kind is evaluated where some off-diagonal W_ij == 0.
    bool nonsmooth_point = false;
};

inline void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in [0,1)");
}

/// M = α W∘W + (1−α)|W|.
inline Matrix hoc_core(const Matrix& w, double alpha) {
    check_alpha(alpha);
    return (alpha * w.array().square() + (1.0 - alpha) * w.array().abs()).matrix();
}

/// M̃ = α W∘W + (1−α)√(W∘W + δ²), applied to every entry (diagonal included).
inline Matrix smooth_hoc_core(const Matrix& w, double alpha, double delta) {
    check_alpha(alpha);
    if (!(delta > 0.0)) throw std::invalid_argument("smooth_hoc_core: delta must be positive");
    return (alpha * w.array().square() + (1.0 - alpha) * (w.array().square() + delta * delta).sqrt()).matrix();
}

/// M/(‖M‖_F + ε).
inline Matrix asn_normalize(const Matrix& m, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("asn_normalize: epsilon must be positive");
    return m / (m.norm() + epsilon);
}

namespace detail {

inline double sign0(double x) { return (x > 0.0) - (x < 0.0); }

struct Core {
    Matrix m;
    Matrix dm;  // elementwise dM_ij/dW_ij
};

inline Core make_core(const ConstraintSpec& spec, const Matrix& w) {
    const auto a = spec.alpha;
    switch (spec.kind) {
        case ConstraintKind::Exp:
        case ConstraintKind::LogDet:
        case ConstraintKind::Aac:
            return {w.array().square().matrix(), (2.0 * w.array()).matrix()};
        case ConstraintKind::Ahoc:
        case ConstraintKind::SAhoc:
            return {hoc_core(w, a), (2.0 * a * w.array() + (1.0 - a) * w.array().unaryExpr(&sign0)).matrix()};
        case ConstraintKind::SmoothedAhoc: {
            const Eigen::ArrayXXd r = (w.array().square() + spec.delta * spec.delta).sqrt();
            return {(a * w.array().square() + (1.0 - a) * r).matrix(),
                    (2.0 * a * w.array() + (1.0 - a) * w.array() / r).matrix()};
        }
    }
    throw std::logic_error("unknown constraint kind");
}

inline double denominator_epsilon(const ConstraintSpec& spec) {
    return spec.kind == ConstraintKind::SAhoc ? 1.0 : spec.epsilon;
}

inline bool has_zero_offdiag(const Matrix& w) {
    for (Index i = 0; i < w.rows(); ++i)
        for (Index j = 0; j < w.cols(); ++j)
            if (i != j && w(i, j) == 0.0) return true;
    return false;
}

inline ConstraintEval evaluate(const ConstraintSpec& spec, const Matrix& w, bool want_grad) {
    spec.validate();
    require_adjacency(w, "constraint");
    const Index d = w.rows();
    const double dd = static_cast<double>(d);
    ConstraintEval out;
    if (!is_smooth(spec.kind)) out.nonsmooth_point = has_zero_offdiag(w);

    Core core = make_core(spec, w);
    Matrix g_m;  // dh/dM

    if (spec.kind == ConstraintKind::LogDet) {
        const Matrix b = spec.s * Matrix::Identity(d, d) - core.m;
        Eigen::PartialPivLU<Matrix> lu(b);
        const Matrix inv = lu.inverse();
        const double det = lu.determinant();
        // sI − A must be a nonsingular M-matrix: positive determinant and a nonnegative inverse.
        const double tol = 1e-12 * inv.cwiseAbs().maxCoeff();
        if (!(det > 0.0) || !inv.allFinite() || (inv.array() < -tol).any()) {
            out.value = std::numeric_limits<double>::infinity();
            out.finite = false;
            if (want_grad) out.gradient = Matrix::Constant(d, d, std::numeric_limits<double>::quiet_NaN());
            return out;
        }
        // log det via LU diagonal for accuracy; sign already known to be positive.
        double logdet = 0.0;
        for (Index i = 0; i < d; ++i) logdet += std::log(std::abs(lu.matrixLU()(i, i)));
        out.value = -logdet + dd * std::log(spec.s);
        if (want_grad) g_m = inv.transpose();
    } else if (spec.kind == ConstraintKind::Exp) {
        auto e = mat_exp_checked(core.m);
        if (!e.finite) {
            out.value = std::numeric_limits<double>::infinity();
            out.finite = false;
            if (want_grad) out.gradient = Matrix::Constant(d, d, std::numeric_limits<double>::quiet_NaN());
            return out;
        }
        out.value = e.value.trace() - dd;
        if (want_grad) g_m = e.value.transpose();
    } else {
        const double norm = core.m.norm();
        const double denom = norm + denominator_epsilon(spec);
        const Matrix e = mat_exp(core.m / denom);
        out.value = e.trace() - dd;
        if (want_grad) {
            const Matrix gn = e.transpose();
            g_m = gn / denom;
            if (norm > 0.0) g_m -= (core.m.cwiseProduct(gn).sum() / (denom * denom * norm)) * core.m;
        }
    }

    if (want_grad) {
        out.gradient = g_m.cwiseProduct(core.dm);
        out.gradient.diagonal().setZero();
        out.finite = std::isfinite(out.value) && out.gradient.allFinite();
    } else {
        out.finite = std::isfinite(out.value);
    }
    // Round-off can leave a tiny negative value on a DAG; the trace form is nonnegative.
    if (spec.kind != ConstraintKind::LogDet && out.value < 0.0 && out.value > -1e-12 * dd) out.value = 0.0;
    return out;
}

}  // namespace detail

inline double constraint_value(const ConstraintSpec& spec, const Matrix& w) {
    return detail::evaluate(spec, w, false).value;
}

inline ConstraintEval constraint_grad(const ConstraintSpec& spec, const Matrix& w) {
    return detail::evaluate(spec, w, true);
}

}  // namespace spgahoc
