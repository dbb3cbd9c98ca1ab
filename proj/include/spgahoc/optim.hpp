#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "constraints.hpp"
#include "linalg.hpp"
#include "objective.hpp"
#include "rng.hpp"

namespace spgahoc {

struct OptimConfig {
    double lambda1 = 0.1;
    double eta_init = 1.0;
    double ls_shrink = 0.5;
    int ls_max = 100;
    double inner_tol = 1e-6;
    int inner_max = 5000;
    double mu0 = 0.0;
    double rho0 = 1.0;
    double rho_growth = 10.0;
    double h_progress = 0.25;
    double h_tol = 1e-8;
    int outer_max = 100;
    // The outer loop gives up once ρ would exceed this; past ~1e16 the penalty swamps the fit in double precision.
    double rho_max = 1e16;
    // Allows the non-smooth Ahoc/SAhoc kinds, using the sign(0)=0 subgradient.
    bool subgradient_mode = false;
    bool record_trace = true;

    void validate() const {
        auto fail = [](const char* m) { throw std::invalid_argument(std::string("OptimConfig: ") + m); };
        if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) fail("lambda1 must be >= 0");
        if (!(eta_init > 0.0) || !std::isfinite(eta_init)) fail("eta_init must be > 0");
        if (!(ls_shrink > 0.0 && ls_shrink < 1.0)) fail("ls_shrink must lie in (0,1)");
        if (ls_max <= 0) fail("ls_max must be positive");
        if (!(inner_tol > 0.0)) fail("inner_tol must be > 0");
        if (inner_max <= 0) fail("inner_max must be positive");
        if (!(mu0 >= 0.0)) fail("mu0 must be >= 0");
        if (!(rho0 > 0.0)) fail("rho0 must be > 0");
        if (!(rho_growth > 1.0)) fail("rho_growth must be > 1");
        if (!(h_progress > 0.0 && h_progress < 1.0)) fail("h_progress must lie in (0,1)");
        if (!(h_tol >= 0.0)) fail("h_tol must be >= 0");
        if (outer_max <= 0) fail("outer_max must be positive");
        if (!(rho_max >= rho0)) fail("rho_max must be >= rho0");
    }
};

struct AdamParams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int steps = 5000;  // per outer iteration
    std::uint64_t seed = 0;
    double init_scale = 0.0;  // 0 starts from W = 0

    void validate() const {
        if (!(lr > 0.0)) throw std::invalid_argument("AdamParams: lr must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("AdamParams: betas must lie in [0,1)");
        if (steps <= 0) throw std::invalid_argument("AdamParams: steps must be positive");
        if (!(init_scale >= 0.0)) throw std::invalid_argument("AdamParams: init_scale must be >= 0");
    }
};

enum class Status { Converged, LsFail, NonFinite, MaxIter };

inline std::string_view to_string(Status s) {
    switch (s) {
        case Status::Converged: return "Converged";
        case Status::LsFail: return "LsFail";
        case Status::NonFinite: return "NonFinite";
        case Status::MaxIter: return "MaxIter";
    }
    return "?";
}

struct IterRecord {
    int outer = 0;
    int inner = 0;
    double total = 0.0;      // smooth objective plus λ₁‖W‖₁
    double fit = 0.0;
    double h = 0.0;          // constraint value of the optimized (possibly smoothed) kind
    double w_norm = 0.0;
    Index nnz = 0;
    double eta = 0.0;
    double grad_map_norm = 0.0;
    std::uint64_t pattern = 0;  // hash of the sign pattern of W
};

using IterTrace = std::vector<IterRecord>;

struct RunReport {
    Matrix w;
    double h_smoothed = 0.0;
    double h_exact = 0.0;
    bool exact_dag = false;
    Status status = Status::MaxIter;
    std::string converged_by;  // "exact_dag", "h_tol" or empty
    std::string stop_reason;
    IterTrace trace;
    int outer_iterations = 0;
    long inner_iterations = 0;
    double final_mu = 0.0;
    double final_rho = 0.0;
    double wall_seconds = 0.0;
    ConstraintSpec spec;
    OptimConfig config;
    std::vector<std::uint64_t> seeds;
};

/// Count of off-diagonal entries that are not the floating-point zero.
inline Index count_nonzero(const Matrix& w) {
    Index c = 0;
    for (Index i = 0; i < w.rows(); ++i)
        for (Index j = 0; j < w.cols(); ++j)
            if (i != j && w(i, j) != 0.0) ++c;
    return c;
}

/// FNV-1a over the sign pattern.
inline std::uint64_t sign_pattern_hash(const Matrix& w) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Index j = 0; j < w.cols(); ++j)
        for (Index i = 0; i < w.rows(); ++i) {
            const std::uint64_t s = w(i, j) > 0.0 ? 1 : (w(i, j) < 0.0 ? 2 : 0);
            h = (h ^ s) * 0x100000001b3ULL;
        }
    return h;
}

inline double l1_norm(const Matrix& w) { return w.cwiseAbs().sum(); }

/// Soft threshold sign(v)·max(|v| − t, 0); entries with |v| ≤ t and the diagonal become exactly 0.
inline Matrix prox_l1(const Matrix& v, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("prox_l1: threshold must be >= 0");
    Matrix out(v.rows(), v.cols());
    for (Index j = 0; j < v.cols(); ++j)
        for (Index i = 0; i < v.rows(); ++i) {
            const double a = std::abs(v(i, j)) - t;
            out(i, j) = (a > 0.0) ? std::copysign(a, v(i, j)) : 0.0;
        }
    if (v.rows() == v.cols()) out.diagonal().setZero();
    return out;
}

/// Entries with |w| > tau.
inline BoolAdjacency threshold_support(const Matrix& w, double tau) {
    if (!(tau >= 0.0)) throw std::invalid_argument("threshold_support: tau must be >= 0");
    require_square(w, "threshold_support");
    BoolAdjacency b(w.rows());
    for (Index i = 0; i < w.rows(); ++i)
        for (Index j = 0; j < w.cols(); ++j)
            if (i != j && std::abs(w(i, j)) > tau) b.set(i, j);
    return b;
}

enum class StepStatus { Ok, LsFail, NonFinite };

struct StepResult {
    Matrix w;
    ObjectiveEval eval;  // at w (with gradient)
    double eta = 0.0;
    int ls_evals = 0;
    double grad_map_norm = 0.0;
    StepStatus status = StepStatus::Ok;
};

/// One proximal gradient step with backtracking on the quadratic upper model.
/// `at_w` must be alm_eval at w (with gradient).
inline StepResult spg_step(const Matrix& w, const ObjectiveEval& at_w, const LeastSquaresLoss& loss,
                           const ConstraintSpec& spec, const AlmParams& alm, const OptimConfig& cfg,
                           double eta_start) {
    if (!(eta_start > 0.0)) throw std::invalid_argument("spg_step: eta_start must be > 0");
    StepResult out;
    if (!at_w.finite) {
        out.w = w;
        out.eval = at_w;
        out.status = StepStatus::NonFinite;
        return out;
    }
    const double composite0 = at_w.total + cfg.lambda1 * l1_norm(w);
    double eta = eta_start;
    bool saw_finite = false;
    for (int ls = 0; ls < cfg.ls_max; ++ls) {
        Matrix cand = prox_l1(w - eta * at_w.grad, cfg.lambda1 * eta);
        ++out.ls_evals;
        ObjectiveEval ev = alm_eval(cand, loss, spec, alm, cfg.subgradient_mode);
        if (ev.finite) {
            saw_finite = true;
            const Matrix diff = cand - w;
            const double model = at_w.total + at_w.grad.cwiseProduct(diff).sum() + diff.squaredNorm() / (2.0 * eta);
            const double composite = ev.total + cfg.lambda1 * l1_norm(cand);
            // Second test guards against round-off letting the composite objective creep upward.
            if (ev.total <= model && composite <= composite0) {
                out.grad_map_norm = diff.norm() / eta;
                out.w = std::move(cand);
                out.eval = std::move(ev);
                out.eta = eta;
                return out;
            }
        }
        eta *= cfg.ls_shrink;
    }
    out.w = w;
    out.eval = at_w;
    out.eta = eta;
    out.status = saw_finite ? StepStatus::LsFail : StepStatus::NonFinite;
    return out;
}

inline StepResult spg_step(const Matrix& w, const LeastSquaresLoss& loss, const ConstraintSpec& spec,
                           const AlmParams& alm, const OptimConfig& cfg, double eta_start) {
    return spg_step(w, alm_eval(w, loss, spec, alm, cfg.subgradient_mode), loss, spec, alm, cfg, eta_start);
}

struct InnerResult {
    Matrix w;
    IterTrace trace;
    Status status = Status::MaxIter;  // Converged here means the gradient mapping met inner_tol
    int iterations = 0;
    double last_eta = 0.0;
};

inline IterRecord make_record(int outer, int inner, const Matrix& w, const ObjectiveEval& ev, double lambda1,
                              double eta, double gm) {
    IterRecord r;
    r.outer = outer;
    r.inner = inner;
    r.fit = ev.fit;
    r.h = ev.h;
    r.total = ev.total + lambda1 * l1_norm(w);
    r.w_norm = w.norm();
    r.nnz = count_nonzero(w);
    r.eta = eta;
    r.grad_map_norm = gm;
    r.pattern = sign_pattern_hash(w);
    return r;
}

/// Proximal gradient iterations on L̃ + λ₁‖W‖₁ until ‖G_η(W)‖_F ≤ inner_tol or inner_max.
inline InnerResult spg_inner(const Matrix& w0, const LeastSquaresLoss& loss, const ConstraintSpec& spec,
                             const AlmParams& alm, const OptimConfig& cfg, int outer_index = 0,
                             double eta_start = 0.0) {
    InnerResult out;
    out.w = w0;
    ObjectiveEval ev = alm_eval(out.w, loss, spec, alm, cfg.subgradient_mode);
    double eta = eta_start > 0.0 ? std::min(eta_start, cfg.eta_init) : cfg.eta_init;
    for (int k = 1; k <= cfg.inner_max; ++k) {
        StepResult st = spg_step(out.w, ev, loss, spec, alm, cfg, eta);
        out.iterations = k;
        if (st.status != StepStatus::Ok) {
            out.status = st.status == StepStatus::LsFail ? Status::LsFail : Status::NonFinite;
            return out;
        }
        out.w = std::move(st.w);
        ev = std::move(st.eval);
        out.last_eta = st.eta;
        if (cfg.record_trace)
            out.trace.push_back(make_record(outer_index, k, out.w, ev, cfg.lambda1, st.eta, st.grad_map_norm));
        if (st.grad_map_norm <= cfg.inner_tol) {
            out.status = Status::Converged;
            return out;
        }
        eta = std::min(2.0 * st.eta, cfg.eta_init);
    }
    out.status = Status::MaxIter;
    return out;
}

namespace detail {

// Exact-h bookkeeping shared by both drivers. Returns true when the run may stop as converged.
inline bool check_feasible(const ConstraintSpec& spec, const OptimConfig& cfg, RunReport& rep) {
    rep.h_smoothed = constraint_value(spec, rep.w);
    rep.h_exact = constraint_value(spec.unsmoothed(), rep.w);
    rep.exact_dag = is_dag_support(support(rep.w));
    // On a DAG support the unsmoothed value is zero in exact arithmetic; drop the round-off.
    if (rep.exact_dag && std::isfinite(rep.h_exact)) rep.h_exact = 0.0;
    if (std::isfinite(rep.h_exact) && rep.h_exact <= cfg.h_tol) {
        rep.converged_by = rep.h_exact == 0.0 ? "exact_dag" : "h_tol";
        return true;
    }
    return false;
}

template <typename InnerFn>
RunReport alm_drive(const Matrix& w_init, const ConstraintSpec& spec, const OptimConfig& cfg, InnerFn&& inner) {
    const auto t0 = std::chrono::steady_clock::now();
    RunReport rep;
    rep.spec = spec;
    rep.config = cfg;
    rep.w = w_init;
    AlmParams alm{cfg.mu0, cfg.rho0};
    double h_prev = std::numeric_limits<double>::infinity();
    rep.status = Status::MaxIter;
    rep.stop_reason = "outer_max reached";
    for (int t = 0; t < cfg.outer_max; ++t) {
        auto res = inner(rep.w, alm, t);
        rep.w = std::move(res.w);
        rep.inner_iterations += res.iterations;
        rep.outer_iterations = t + 1;
        for (auto& r : res.trace) rep.trace.push_back(r);
        if (res.status == Status::LsFail || res.status == Status::NonFinite) {
            check_feasible(spec, cfg, rep);
            rep.status = res.status;
            rep.stop_reason = res.status == Status::LsFail ? "line search exhausted" : "non-finite objective";
            break;
        }
        if (check_feasible(spec, cfg, rep)) {
            rep.status = Status::Converged;
            rep.stop_reason = "constraint satisfied";
            break;
        }
        const double hs = rep.h_smoothed;
        if (!std::isfinite(hs)) {
            rep.status = Status::NonFinite;
            rep.stop_reason = "non-finite constraint";
            break;
        }
        alm.mu += alm.rho * hs;
        if (hs > cfg.h_progress * h_prev) {
            if (alm.rho * cfg.rho_growth > cfg.rho_max) {
                rep.status = Status::MaxIter;
                rep.stop_reason = "rho_max reached";
                break;
            }
            alm.rho *= cfg.rho_growth;
        }
        h_prev = hs;
    }
    if (rep.outer_iterations == 0) check_feasible(spec, cfg, rep);
    rep.final_mu = alm.mu;
    rep.final_rho = alm.rho;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace detail

/// Augmented Lagrangian outer loop around spg_inner.
inline RunReport alm_outer(const LeastSquaresLoss& loss, const ConstraintSpec& spec, const OptimConfig& cfg,
                           const Matrix& w_init) {
    spec.validate();
    cfg.validate();
    require_adjacency(w_init, "alm_outer");
    if (w_init.rows() != loss.dim()) throw std::invalid_argument("alm_outer: W_init dimension mismatch");
    if (!is_smooth(spec.kind) && !cfg.subgradient_mode)
        throw std::invalid_argument("alm_outer: non-smooth constraint requires subgradient_mode");
    // The penalty changes between outer iterations, so each inner loop restarts from eta_init.
    return detail::alm_drive(w_init, spec, cfg, [&](const Matrix& w, const AlmParams& alm, int t) {
        return spg_inner(w, loss, spec, alm, cfg, t);
    });
}

inline RunReport alm_outer(const Matrix& x, const ConstraintSpec& spec, const OptimConfig& cfg) {
    LeastSquaresLoss loss(x);
    return alm_outer(loss, spec, cfg, Matrix::Zero(loss.dim(), loss.dim()));
}

/// Adam on L̃ + λ₁‖W‖₁ (ℓ1 via its sign subgradient) inside the same outer loop. Output is generically dense.
inline RunReport adam_baseline(const LeastSquaresLoss& loss, const ConstraintSpec& spec, const OptimConfig& cfg,
                               const AdamParams& ap) {
    spec.validate();
    cfg.validate();
    ap.validate();
    const Index d = loss.dim();
    Matrix w0 = Matrix::Zero(d, d);
    if (ap.init_scale > 0.0) {
        Rng rng(ap.seed, Stream::Init);
        for (Index j = 0; j < d; ++j)
            for (Index i = 0; i < d; ++i)
                if (i != j) w0(i, j) = ap.init_scale * rng.normal();
    }
    OptimConfig c = cfg;
    c.subgradient_mode = true;  // ℓ1 and the non-smooth kinds both use sign(0) = 0
    auto rep = detail::alm_drive(w0, spec, c, [&](const Matrix& w_start, const AlmParams& alm, int t) {
        InnerResult r;
        r.w = w_start;
        Matrix m = Matrix::Zero(d, d), v = Matrix::Zero(d, d);
        double b1t = 1.0, b2t = 1.0;
        for (int k = 1; k <= ap.steps; ++k) {
            ObjectiveEval ev = alm_eval(r.w, loss, spec, alm, true);
            r.iterations = k;
            if (!ev.finite) {
                r.status = Status::NonFinite;
                return r;
            }
            Matrix g = ev.grad + c.lambda1 * r.w.unaryExpr([](double x) { return double((x > 0.0) - (x < 0.0)); });
            g.diagonal().setZero();
            m = ap.beta1 * m + (1.0 - ap.beta1) * g;
            v = ap.beta2 * v + (1.0 - ap.beta2) * g.cwiseProduct(g);
            b1t *= ap.beta1;
            b2t *= ap.beta2;
            if (c.record_trace) r.trace.push_back(make_record(t, k, r.w, ev, c.lambda1, ap.lr, g.norm()));
            const Matrix step = (m / (1.0 - b1t)).array() / ((v / (1.0 - b2t)).array().sqrt() + ap.eps);
            r.w -= ap.lr * step;
            r.w.diagonal().setZero();
        }
        if (!r.w.allFinite()) r.status = Status::NonFinite;
        return r;
    });
    rep.seeds.push_back(ap.seed);
    rep.config = cfg;
    return rep;
}

}  // namespace spgahoc
