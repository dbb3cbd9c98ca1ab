#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spgahoc {

/// Dense row/column-agnostic double matrix used for W, W∘W, HOC cores and data.
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline void require_square(const Matrix& m, const char* what) {
    if (m.rows() <= 0 || m.rows() != m.cols()) {
        throw std::invalid_argument(std::string(what) + ": expected a non-empty square matrix, got " +
                                    std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
    }
}

inline void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) {
        throw std::invalid_argument(std::string(what) + ": matrix contains NaN or Inf entries");
    }
}

/// Square matrix with zero diagonal and finite entries; the shape every W must have.
inline void require_adjacency(const Matrix& w, const char* what) {
    require_square(w, what);
    require_finite(w, what);
    for (Index i = 0; i < w.rows(); ++i) {
        if (w(i, i) != 0.0) {
            throw std::invalid_argument(std::string(what) + ": diagonal entry (" + std::to_string(i) + "," +
                                        std::to_string(i) + ") must be exactly zero");
        }
    }
}

inline double frobenius_norm(const Matrix& m) { return m.norm(); }

inline double frobenius_inner(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "frobenius_inner");
    return a.cwiseProduct(b).sum();
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    return a.cwiseProduct(b);
}

/// Boolean d×d edge grid; edge (i,j) means i→j. The diagonal is always false.
class BoolAdjacency {
  public:
    BoolAdjacency() = default;
    explicit BoolAdjacency(Index d) : d_(d), edges_(static_cast<std::size_t>(d * d), 0) {
        if (d <= 0) throw std::invalid_argument("BoolAdjacency: dimension must be positive");
    }

    Index size() const { return d_; }

    bool operator()(Index i, Index j) const { return edges_[offset(i, j)] != 0; }

    void set(Index i, Index j, bool value = true) {
        if (i == j && value) throw std::invalid_argument("BoolAdjacency: self-loops are not allowed");
        edges_[offset(i, j)] = value ? 1 : 0;
    }

    std::size_t edge_count() const {
        std::size_t c = 0;
        for (auto e : edges_) c += e;
        return c;
    }

    friend bool operator==(const BoolAdjacency&, const BoolAdjacency&) = default;

  private:
    std::size_t offset(Index i, Index j) const {
        if (i < 0 || j < 0 || i >= d_ || j >= d_) throw std::out_of_range("BoolAdjacency: index out of range");
        return static_cast<std::size_t>(i * d_ + j);
    }

    Index d_ = 0;
    std::vector<unsigned char> edges_;
};

/// Support of a square matrix: entries that are not the floating-point zero.
/// Diagonal entries are ignored.
inline BoolAdjacency support(const Matrix& w) {
    require_square(w, "support");
    BoolAdjacency s(w.rows());
    for (Index i = 0; i < w.rows(); ++i)
        for (Index j = 0; j < w.cols(); ++j)
            if (i != j && w(i, j) != 0.0) s.set(i, j);
    return s;
}

/// Kahn elimination: true iff the graph has no directed cycle.
inline bool is_dag_support(const BoolAdjacency& b) {
    const Index d = b.size();
    std::vector<Index> indegree(static_cast<std::size_t>(d), 0);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            if (b(i, j)) ++indegree[static_cast<std::size_t>(j)];
    std::vector<Index> ready;
    for (Index j = 0; j < d; ++j)
        if (indegree[static_cast<std::size_t>(j)] == 0) ready.push_back(j);
    Index removed = 0;
    while (!ready.empty()) {
        const Index i = ready.back();
        ready.pop_back();
        ++removed;
        for (Index j = 0; j < d; ++j) {
            if (b(i, j) && --indegree[static_cast<std::size_t>(j)] == 0) ready.push_back(j);
        }
    }
    return removed == d;
}

/// Topological order of a DAG support (sources first). Throws if cyclic.
inline std::vector<Index> topological_order(const BoolAdjacency& b) {
    const Index d = b.size();
    std::vector<Index> indegree(static_cast<std::size_t>(d), 0);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            if (b(i, j)) ++indegree[static_cast<std::size_t>(j)];
    std::vector<Index> order;
    std::vector<Index> ready;
    for (Index j = d - 1; j >= 0; --j)
        if (indegree[static_cast<std::size_t>(j)] == 0) ready.push_back(j);
    while (!ready.empty()) {
        const Index i = ready.back();
        ready.pop_back();
        order.push_back(i);
        for (Index j = d - 1; j >= 0; --j) {
            if (b(i, j) && --indegree[static_cast<std::size_t>(j)] == 0) ready.push_back(j);
        }
    }
    if (static_cast<Index>(order.size()) != d) throw std::invalid_argument("topological_order: graph has a cycle");
    return order;
}

struct MatExpResult {
    Matrix value;
    bool finite = true;
    int squarings = 0;
    int pade_order = 0;
};

namespace detail {

// Higham (2005) scaling-and-squaring constants.
inline constexpr std::array<double, 4> kPade3 = {120.0, 60.0, 12.0, 1.0};
inline constexpr std::array<double, 6> kPade5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
inline constexpr std::array<double, 8> kPade7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                                 25200.0,    1512.0,    56.0,      1.0};
inline constexpr std::array<double, 10> kPade9 = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0,
                                                  30270240.0,    2162160.0,    110880.0,     3960.0,
                                                  90.0,          1.0};
inline constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0, 129060195264000.0,
    10559470521600.0,    670442572800.0,      33522128640.0,      1323241920.0,       40840800.0,
    960960.0,            16380.0,             182.0,              1.0};
inline constexpr std::array<double, 5> kTheta = {1.495585217958292e-2, 2.539398330063230e-1,
                                                 9.504178996162932e-1, 2.097847961257068e0,
                                                 5.371920351148152e0};

template <std::size_t N>
void pade_low_order(const Matrix& a, const std::array<double, N>& b, Matrix& u, Matrix& v) {
    const Index d = a.rows();
    const Matrix ident = Matrix::Identity(d, d);
    const Matrix a2 = a * a;
    Matrix odd = b[1] * ident;
    Matrix even = b[0] * ident;
    Matrix power = ident;
    for (std::size_t k = 2; k < N; k += 2) {
        power = power * a2;
        even += b[k] * power;
        if (k + 1 < N) odd += b[k + 1] * power;
    }
    u = a * odd;
    v = even;
}

inline void pade13(const Matrix& a, Matrix& u, Matrix& v) {
    const auto& b = kPade13;
    const Index d = a.rows();
    const Matrix ident = Matrix::Identity(d, d);
    const Matrix a2 = a * a;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a4 * a2;
    const Matrix inner_u = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2);
    u = a * (inner_u + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
    v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;
}

}  // namespace detail

/// Matrix exponential by scaling and squaring with a diagonal Padé approximant
/// (orders 3..13, selected by the 1-norm). Overflow is reported via `finite`.
inline MatExpResult mat_exp_checked(const Matrix& m) {
    require_square(m, "mat_exp");
    require_finite(m, "mat_exp");
    MatExpResult out;
    const Index d = m.rows();
    const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();

    Matrix u, v;
    int squarings = 0;
    if (norm1 <= detail::kTheta[0]) {
        detail::pade_low_order(m, detail::kPade3, u, v);
        out.pade_order = 3;
    } else if (norm1 <= detail::kTheta[1]) {
        detail::pade_low_order(m, detail::kPade5, u, v);
        out.pade_order = 5;
    } else if (norm1 <= detail::kTheta[2]) {
        detail::pade_low_order(m, detail::kPade7, u, v);
        out.pade_order = 7;
    } else if (norm1 <= detail::kTheta[3]) {
        detail::pade_low_order(m, detail::kPade9, u, v);
        out.pade_order = 9;
    } else {
        squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / detail::kTheta[4]))));
        const Matrix scaled = m / std::ldexp(1.0, squarings);
        detail::pade13(scaled, u, v);
        out.pade_order = 13;
    }

    Matrix r = (v - u).partialPivLu().solve(v + u);
    for (int k = 0; k < squarings; ++k) {
        if (!r.allFinite()) break;
        r = r * r;
    }
    out.squarings = squarings;
    out.finite = r.allFinite();
    out.value = std::move(r);
    if (out.value.rows() != d) out.finite = false;
    return out;
}

/// Matrix exponential; throws std::overflow_error when the result is not finite.
inline Matrix mat_exp(const Matrix& m) {
    auto r = mat_exp_checked(m);
    if (!r.finite) throw std::overflow_error("mat_exp: result overflowed to non-finite entries");
    return std::move(r.value);
}

struct SpectralRadiusResult {
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
};

struct PowerIterationOptions {
    double shift_scale = 1e-12;
    double tolerance = 1e-10;
    int max_iterations = 10000;
};

/// Perron root of a nonnegative matrix by power iteration on A + σI, σ = shift_scale·‖A‖_F.
/// The estimate is the growth ‖(A + σI)x‖/‖x‖. Periodic matrices make that ratio oscillate, so a
/// run that never settles reports the geometric mean over a window of 840 = lcm(1..8) steps.
inline SpectralRadiusResult spectral_radius(const Matrix& a, const PowerIterationOptions& opt = {}) {
    require_square(a, "spectral_radius");
    require_finite(a, "spectral_radius");
    if ((a.array() < 0.0).any()) throw std::invalid_argument("spectral_radius: matrix has negative entries");

    SpectralRadiusResult out;
    const Index d = a.rows();
    const double scale = a.norm();
    if (scale == 0.0) {
        out.converged = true;
        return out;
    }
    const double sigma = opt.shift_scale * scale;
    constexpr int kWindow = 840;
    std::vector<double> log_ratio;
    log_ratio.reserve(static_cast<std::size_t>(std::min(opt.max_iterations, 20000)));
    Eigen::VectorXd x = Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
    double prev = -1.0;
    double est = 0.0;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        Eigen::VectorXd y = a * x + sigma * x;
        est = y.norm();
        log_ratio.push_back(std::log(est));
        out.iterations = it;
        x = y / est;
        if (prev >= 0.0 && std::abs(est - prev) <= opt.tolerance * est) {
            out.converged = true;
            break;
        }
        prev = est;
    }
    if (!out.converged && static_cast<int>(log_ratio.size()) >= kWindow) {
        double acc = 0.0;
        for (std::size_t k = log_ratio.size() - kWindow; k < log_ratio.size(); ++k) acc += log_ratio[k];
        est = std::exp(acc / kWindow);
    }
    out.value = std::max(0.0, est - sigma);
    return out;
}

}  // namespace spgahoc
