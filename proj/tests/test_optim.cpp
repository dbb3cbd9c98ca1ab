#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "spgahoc/metrics.hpp"
#include "spgahoc/optim.hpp"
#include "spgahoc/sem.hpp"

using namespace spgahoc;

namespace {

Matrix gaussian(Rng& rng, Index r, Index c) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) m(i, j) = rng.normal();
    return m;
}

Matrix er_data(Index d, Index e, Index n, std::uint64_t seed, Matrix* truth = nullptr) {
    GraphSpec g;
    g.d = d;
    g.num_edges = e;
    g.seed = seed;
    const Matrix w = sample_er_dag(g);
    if (truth) *truth = w;
    return simulate_sem(w, n, 1.0, seed).x;
}

double composite(const Matrix& w, const LeastSquaresLoss& loss, const ConstraintSpec& s, const AlmParams& p,
                 double lambda1) {
    return alm_eval(w, loss, s, p, false, false).total + lambda1 * l1_norm(w);
}

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

}  // namespace

TEST(ProxL1, Examples) {
    Matrix v(2, 2);
    v << 9.0, 1.5, -0.4, 9.0;
    const Matrix p = prox_l1(v, 0.5);
    EXPECT_EQ(p(0, 1), 1.0);
    EXPECT_EQ(p(1, 0), 0.0);
    EXPECT_FALSE(std::signbit(p(1, 0)));
    EXPECT_EQ(p(0, 0), 0.0);
    const Matrix id = prox_l1(v, 0.0);
    EXPECT_EQ(id(0, 1), 1.5);
    EXPECT_EQ(id(1, 0), -0.4);
    EXPECT_EQ(id.diagonal().cwiseAbs().sum(), 0.0);
    Matrix band(2, 2);
    band << 0, 0.5, -0.5, 0;
    EXPECT_EQ(prox_l1(band, 0.5), Matrix::Zero(2, 2));
    EXPECT_THROW(prox_l1(v, -1e-12), std::invalid_argument);
}

TEST(ProxL1, Nonexpansive) {
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        const Matrix u = gaussian(rng, 5, 5), v = gaussian(rng, 5, 5);
        const double s = rng.uniform(0.0, 2.0);
        EXPECT_LE((prox_l1(u, s) - prox_l1(v, s)).norm(), (u - v).norm() + 1e-15);
    }
}

TEST(ThresholdSupport, Examples) {
    Matrix w = Matrix::Zero(3, 3);
    w(0, 1) = 0.29;
    w(1, 2) = -0.31;
    const auto b = threshold_support(w, 0.3);
    EXPECT_FALSE(b(0, 1));
    EXPECT_TRUE(b(1, 2));
    EXPECT_EQ(threshold_support(w, 0.0), support(w));
    EXPECT_EQ(threshold_support(w, 1e9).edge_count(), 0u);
    EXPECT_THROW(threshold_support(w, -1.0), std::invalid_argument);
}

TEST(OptimConfigTest, Validation) {
    OptimConfig c;
    EXPECT_NO_THROW(c.validate());
    c.ls_shrink = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.rho_growth = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.inner_max = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.lambda1 = -0.1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

// The first step from 0 stays at exactly 0 iff λ₁ reaches the stability threshold.
TEST(SpgStep, StabilityDichotomy) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const Matrix x = er_data(8, 8, 200, seed);
        const LeastSquaresLoss loss(x);
        const double thr = stability_threshold(x);
        OptimConfig cfg;
        cfg.lambda1 = 1.01 * thr;
        const auto above = spg_step(Matrix::Zero(8, 8), loss, ConstraintSpec{}, AlmParams{}, cfg, 1.0);
        EXPECT_EQ(above.status, StepStatus::Ok);
        EXPECT_EQ(count_nonzero(above.w), 0);
        cfg.lambda1 = 0.99 * thr;
        const auto below = spg_step(Matrix::Zero(8, 8), loss, ConstraintSpec{}, AlmParams{}, cfg, 1.0);
        EXPECT_GT(count_nonzero(below.w), 0);
    }
}

TEST(SpgStep, StrictDescentFromRandomStart) {
    Rng rng(2);
    for (int t = 0; t < 10; ++t) {
        const Matrix x = gaussian(rng, 50, 6);
        const LeastSquaresLoss loss(x);
        Matrix w = 0.3 * gaussian(rng, 6, 6);
        w.diagonal().setZero();
        OptimConfig cfg;
        cfg.lambda1 = 0.05;
        const AlmParams p{0.5, 2.0};
        const auto st = spg_step(w, loss, ConstraintSpec{}, p, cfg, 1.0);
        ASSERT_EQ(st.status, StepStatus::Ok);
        EXPECT_LT(composite(st.w, loss, ConstraintSpec{}, p, 0.05), composite(w, loss, ConstraintSpec{}, p, 0.05));
        EXPECT_LE(st.eta, 1.0);
        EXPECT_GE(st.ls_evals, 1);
    }
}

TEST(SpgStep, FixedPointIsUnchanged) {
    const Matrix x = er_data(6, 6, 100, 3);
    const LeastSquaresLoss loss(x);
    OptimConfig cfg;
    cfg.lambda1 = 2.0 * stability_threshold(x);
    const auto st = spg_step(Matrix::Zero(6, 6), loss, ConstraintSpec{}, AlmParams{1.0, 5.0}, cfg, 0.7);
    EXPECT_EQ(st.w, Matrix::Zero(6, 6));
    EXPECT_EQ(st.grad_map_norm, 0.0);
    EXPECT_EQ(st.eta, 0.7);
}

TEST(SpgStep, RejectsNonFiniteCandidatesAndShrinks) {
    // LogDet near its domain boundary: a full step leaves the domain, the line search must pull back.
    Matrix w = Matrix::Zero(2, 2);
    w(0, 1) = w(1, 0) = 0.99;
    Matrix x(4, 2);
    x << 1, 1, 1, 1.1, -1, -0.9, -1, -1;
    const LeastSquaresLoss loss(x);
    ConstraintSpec s;
    s.kind = ConstraintKind::LogDet;
    OptimConfig cfg;
    cfg.lambda1 = 0.0;
    const AlmParams p{0.0, 1e-6};
    const auto st = spg_step(w, loss, s, p, cfg, 100.0);
    ASSERT_EQ(st.status, StepStatus::Ok);
    EXPECT_TRUE(st.eval.finite);
    EXPECT_LT(st.eta, 100.0);
}

TEST(SpgStep, ExhaustedLineSearchIsReported) {
    Rng rng(4);
    const Matrix x = gaussian(rng, 30, 4);
    const LeastSquaresLoss loss(x);
    Matrix w = gaussian(rng, 4, 4);
    w.diagonal().setZero();
    OptimConfig cfg;
    cfg.ls_max = 1;
    const auto st = spg_step(w, loss, ConstraintSpec{}, AlmParams{0.0, 1e3}, cfg, 1e6);
    EXPECT_NE(st.status, StepStatus::Ok);
    EXPECT_EQ(st.w, w);
}

TEST(SpgInner, StationaryStartStopsImmediately) {
    const Matrix x = er_data(6, 6, 100, 5);
    const LeastSquaresLoss loss(x);
    OptimConfig cfg;
    cfg.lambda1 = 1.5 * stability_threshold(x);
    const auto r = spg_inner(Matrix::Zero(6, 6), loss, ConstraintSpec{}, AlmParams{}, cfg);
    EXPECT_EQ(r.status, Status::Converged);
    EXPECT_LE(r.iterations, 1);
    EXPECT_EQ(r.w, Matrix::Zero(6, 6));
}

TEST(SpgInner, TraceIsMonotoneAndConsistent) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Matrix truth;
        const Matrix x = er_data(8, 10, 300, seed, &truth);
        const LeastSquaresLoss loss(x);
        OptimConfig cfg;
        cfg.lambda1 = 0.1;
        cfg.inner_max = 400;
        cfg.eta_init = 0.8;
        const AlmParams p{0.3, 3.0};
        const auto r = spg_inner(Matrix::Zero(8, 8), loss, ConstraintSpec{}, p, cfg, 2);
        ASSERT_EQ(static_cast<int>(r.trace.size()), r.iterations);
        double prev = composite(Matrix::Zero(8, 8), loss, ConstraintSpec{}, p, 0.1);
        for (const auto& rec : r.trace) {
            EXPECT_LE(rec.total, prev) << "seed " << seed << " k=" << rec.inner;
            EXPECT_LE(rec.eta, cfg.eta_init);
            EXPECT_EQ(rec.outer, 2);
            prev = rec.total;
        }
        EXPECT_EQ(r.trace.back().nnz, count_nonzero(r.w));
        EXPECT_DOUBLE_EQ(r.trace.back().total, composite(r.w, loss, ConstraintSpec{}, p, 0.1));
    }
}

TEST(SpgInner, GradientMappingDecaysAtLeastLikeOneOverK) {
    const Matrix x = er_data(10, 10, 1000, 1);
    const LeastSquaresLoss loss(x);
    OptimConfig cfg;
    cfg.lambda1 = 0.1;
    cfg.inner_tol = 1e-300;
    cfg.inner_max = 1500;
    const auto r = spg_inner(Matrix::Zero(10, 10), loss, ConstraintSpec{}, AlmParams{0.0, 1.0}, cfg);
    std::vector<double> ks, mins;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& rec : r.trace) {
        best = std::min(best, rec.grad_map_norm * rec.grad_map_norm);
        if (best < 1e-28) break;
        if (rec.inner >= 10) {
            ks.push_back(rec.inner);
            mins.push_back(best);
        }
    }
    ASSERT_GT(ks.size(), 20u);
    EXPECT_LE(loglog_slope(ks, mins), -0.8);
}

// Near entries pinned at zero the smoothed core has curvature of order 1/δ, which caps the step size.
TEST(SpgInner, AcceptedStepScalesWithDelta) {
    Matrix w0 = Matrix::Zero(3, 3);
    w0(0, 1) = 0.8;
    w0(1, 2) = 0.7;
    const Matrix x = simulate_sem(w0, 500, 1.0, 2).x;
    const LeastSquaresLoss loss(x);
    std::vector<double> deltas, etas;
    for (double delta : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
        ConstraintSpec s;
        s.delta = delta;
        OptimConfig cfg;
        cfg.lambda1 = 0.0;
        cfg.inner_max = 21;
        cfg.inner_tol = 1e-300;
        const auto r = spg_inner(w0, loss, s, AlmParams{100.0, 1.0}, cfg);
        std::vector<double> acc;
        for (const auto& rec : r.trace) acc.push_back(rec.eta);
        ASSERT_FALSE(acc.empty());
        std::nth_element(acc.begin(), acc.begin() + static_cast<long>(acc.size() / 2), acc.end());
        deltas.push_back(delta);
        etas.push_back(acc[acc.size() / 2]);
    }
    const double slope = loglog_slope(deltas, etas);
    EXPECT_GE(slope, 0.5);
    EXPECT_LE(slope, 1.5);
}

TEST(AlmOuter, EmptyGraphStaysAtOrigin) {
    Rng rng(6);
    const Matrix x = gaussian(rng, 200, 6);
    OptimConfig cfg;
    cfg.lambda1 = 2.0 * stability_threshold(x);
    const auto rep = alm_outer(x, ConstraintSpec{}, cfg);
    EXPECT_EQ(rep.status, Status::Converged);
    EXPECT_EQ(rep.w, Matrix::Zero(6, 6));
    EXPECT_EQ(rep.h_exact, 0.0);
    EXPECT_TRUE(rep.exact_dag);
    EXPECT_EQ(rep.converged_by, "exact_dag");
    EXPECT_EQ(rep.outer_iterations, 1);
}

TEST(AlmOuter, ConvergedRunsRecordHowTheyConverged) {
    Matrix w = Matrix::Zero(6, 6);
    for (Index i = 0; i + 1 < 6; ++i) w(i, i + 1) = (i % 2 ? -0.9 : 0.8);
    const Matrix x = simulate_sem(w, 2000, 1.0, 7).x;
    for (auto k : {ConstraintKind::Exp, ConstraintKind::Aac}) {
        ConstraintSpec s;
        s.kind = k;
        OptimConfig cfg;
        cfg.lambda1 = 0.1;
        const auto rep = alm_outer(x, s, cfg);
        ASSERT_EQ(rep.status, Status::Converged) << to_string(k) << " " << rep.stop_reason;
        if (rep.converged_by == "exact_dag") {
            EXPECT_TRUE(rep.exact_dag);
            EXPECT_EQ(rep.h_exact, 0.0);
        } else {
            EXPECT_EQ(rep.converged_by, "h_tol");
            EXPECT_LE(rep.h_exact, cfg.h_tol);
        }
        // Thresholding the converged estimate recovers the chain.
        EXPECT_EQ(structural_score(rep.w, w, 0.3).shd, 0u) << to_string(k);
        double sup = 0.0;
        for (const auto& r : rep.trace) sup = std::max(sup, r.w_norm);
        EXPECT_TRUE(std::isfinite(sup));
        EXPECT_EQ(static_cast<long>(rep.trace.size()), rep.inner_iterations);
    }
}

TEST(AlmOuter, PenaltyScheduleIsBounded) {
    const Matrix x = er_data(6, 8, 200, 8);
    OptimConfig cfg;
    cfg.lambda1 = 0.05;
    cfg.outer_max = 4;
    cfg.inner_max = 50;
    const auto rep = alm_outer(x, ConstraintSpec{}, cfg);
    EXPECT_LE(rep.outer_iterations, 4);
    EXPECT_GE(rep.final_rho, cfg.rho0);
    EXPECT_LE(rep.final_rho, cfg.rho0 * std::pow(cfg.rho_growth, 4));
    EXPECT_GE(rep.final_mu, 0.0);
    EXPECT_TRUE(std::isfinite(rep.h_smoothed));
}

TEST(AlmOuter, NonSmoothKindNeedsSubgradientMode) {
    const Matrix x = er_data(5, 5, 100, 9);
    ConstraintSpec s;
    s.kind = ConstraintKind::Ahoc;
    OptimConfig cfg;
    cfg.outer_max = 3;
    cfg.inner_max = 100;
    EXPECT_THROW(alm_outer(x, s, cfg), std::invalid_argument);
    cfg.subgradient_mode = true;
    RunReport rep;
    EXPECT_NO_THROW(rep = alm_outer(x, s, cfg));
    EXPECT_FALSE(rep.stop_reason.empty());
}

TEST(AlmOuter, RejectsBadInitialPoint) {
    const Matrix x = er_data(4, 3, 50, 10);
    LeastSquaresLoss loss(x);
    EXPECT_THROW(alm_outer(loss, ConstraintSpec{}, OptimConfig{}, Matrix::Identity(4, 4)), std::invalid_argument);
    EXPECT_THROW(alm_outer(loss, ConstraintSpec{}, OptimConfig{}, Matrix::Zero(3, 3)), std::invalid_argument);
}

TEST(AdamBaseline, DenseOutputOnEmptyGraph) {
    Rng rng(11);
    const Matrix x = gaussian(rng, 300, 5);
    const LeastSquaresLoss loss(x);
    ConstraintSpec s;
    s.kind = ConstraintKind::Exp;
    OptimConfig cfg;
    cfg.lambda1 = 0.01;
    cfg.outer_max = 3;
    AdamParams ap;
    ap.steps = 300;
    const auto rep = adam_baseline(loss, s, cfg, ap);
    EXPECT_LT(rep.w.cwiseAbs().maxCoeff(), 0.2);
    EXPECT_GT(count_nonzero(rep.w), 15);
    EXPECT_EQ(rep.w.diagonal().cwiseAbs().sum(), 0.0);
}

TEST(AdamBaseline, DeterministicGivenSeed) {
    const Matrix x = er_data(5, 5, 200, 12);
    const LeastSquaresLoss loss(x);
    ConstraintSpec s;
    s.kind = ConstraintKind::Exp;
    OptimConfig cfg;
    cfg.outer_max = 2;
    AdamParams ap;
    ap.steps = 200;
    ap.init_scale = 0.1;
    ap.seed = 3;
    const auto a = adam_baseline(loss, s, cfg, ap), b = adam_baseline(loss, s, cfg, ap);
    EXPECT_EQ(a.w, b.w);
    ASSERT_EQ(a.seeds.size(), 1u);
    EXPECT_EQ(a.seeds[0], 3u);
    ap.seed = 4;
    EXPECT_NE(adam_baseline(loss, s, cfg, ap).w, a.w);
}
