#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "linalg.hpp"
#include "rng.hpp"

namespace spgahoc {

// Shortest text that parses back to the same double; locale independent.
inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct GraphSpec {
    Index d = 10;
    Index num_edges = 10;
    double weight_low = 0.5;
    double weight_high = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (d <= 0) throw std::invalid_argument("GraphSpec: d must be positive");
        const Index cap = d * (d - 1) / 2;
        if (num_edges < 0 || num_edges > cap)
            throw std::invalid_argument("GraphSpec: num_edges " + std::to_string(num_edges) + " exceeds capacity " +
                                        std::to_string(cap) + " for d=" + std::to_string(d));
        if (!(weight_low > 0.0) || !(weight_high >= weight_low) || !std::isfinite(weight_high))
            throw std::invalid_argument("GraphSpec: need 0 < weight_low <= weight_high");
    }
};

struct Dataset {
    Matrix x;
    std::optional<Matrix> w_true;
    std::string provenance;
    bool near_cyclic = false;

    Index n() const { return x.rows(); }
    Index d() const { return x.cols(); }
};

class CsvError : public std::runtime_error {
  public:
    CsvError(const std::string& path, std::size_t line, std::size_t column, const std::string& msg)
        : std::runtime_error(path + ":" + std::to_string(line) + (column ? ":" + std::to_string(column) : "") +
                             ": " + msg),
          line_(line),
          column_(column) {}
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

  private:
    std::size_t line_;
    std::size_t column_;
};

/// Random DAG with exactly num_edges edges: a random topological order, then a uniform
/// subset of the order-consistent pairs, then weights ±U[low, high].
inline Matrix sample_er_dag(const GraphSpec& spec) {
    spec.validate();
    const Index d = spec.d;
    Rng graph(spec.seed, Stream::Graph);
    Rng weights(spec.seed, Stream::Weights);

    std::vector<Index> order(static_cast<std::size_t>(d));
    for (Index i = 0; i < d; ++i) order[static_cast<std::size_t>(i)] = i;
    for (Index i = d - 1; i > 0; --i) {
        const auto j = static_cast<Index>(graph.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    // Floyd's sampling of num_edges distinct indices from [0, cap).
    const auto cap = static_cast<std::uint64_t>(d * (d - 1) / 2);
    const auto e = static_cast<std::uint64_t>(spec.num_edges);
    std::set<std::uint64_t> chosen;
    for (std::uint64_t j = cap - e; j < cap; ++j) {
        const std::uint64_t t = graph.below(j + 1);
        if (!chosen.insert(t).second) chosen.insert(j);
    }

    Matrix w = Matrix::Zero(d, d);
    // Pair index k enumerates (a,b), a<b, row by row over topological positions.
    std::uint64_t k = 0;
    auto it = chosen.begin();
    for (Index a = 0; a < d && it != chosen.end(); ++a) {
        for (Index b = a + 1; b < d && it != chosen.end(); ++b, ++k) {
            if (*it != k) continue;
            ++it;
            const double mag = weights.uniform(spec.weight_low, spec.weight_high);
            const double sgn = weights.coin() ? 1.0 : -1.0;
            w(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]) = sgn * mag;
        }
    }
    return w;
}

/// Rows x solve x = xW + z with z ~ N(0, noise_std² I); W_ij is the weight of edge i→j.
/// A cyclic W is accepted only with near_cyclic set and ρ(W∘W) < 1.
inline Dataset simulate_sem(const Matrix& w_true, Index n, double noise_std, std::uint64_t seed,
                            bool near_cyclic = false) {
    require_adjacency(w_true, "simulate_sem");
    if (n < 1) throw std::invalid_argument("simulate_sem: n must be at least 1");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
        throw std::invalid_argument("simulate_sem: noise_std must be nonnegative");
    const Index d = w_true.rows();
    const BoolAdjacency supp = support(w_true);
    const bool dag = is_dag_support(supp);
    if (!dag) {
        if (!near_cyclic) throw std::invalid_argument("simulate_sem: W has a directed cycle (set near_cyclic)");
        const auto rho = spectral_radius(w_true.cwiseProduct(w_true));
        if (!(rho.value < 1.0))
            throw std::invalid_argument("simulate_sem: spectral radius of W∘W must be < 1 for a cyclic W");
    }

    Rng noise(seed, Stream::Noise);
    Matrix z(n, d);
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < d; ++c) z(r, c) = noise_std * noise.normal();

    Dataset ds;
    ds.near_cyclic = !dag;
    ds.w_true = w_true;
    if (dag) {
        ds.x = z;
        for (Index j : topological_order(supp)) {
            for (Index i = 0; i < d; ++i)
                if (w_true(i, j) != 0.0) ds.x.col(j) += w_true(i, j) * ds.x.col(i);
        }
    } else {
        const Matrix ident = Matrix::Identity(d, d);
        // X (I − W) = Z  ⇔  (I − W)ᵀ Xᵀ = Zᵀ
        ds.x = (ident - w_true).transpose().partialPivLu().solve(z.transpose()).transpose();
    }
    ds.provenance = "simulate_sem n=" + std::to_string(n) + " d=" + std::to_string(d) +
                    " noise_std=" + format_double(noise_std) + " seed=" + std::to_string(seed);
    return ds;
}

/// 3-cycle 0→1→2→0 with equal weights √0.999996, so ρ(W∘W) = 0.999996.
inline Matrix near_cyclic_instance(double rho = 0.999996) {
    if (!(rho > 0.0)) throw std::invalid_argument("near_cyclic_instance: rho must be positive");
    const double w = std::sqrt(rho);
    Matrix m = Matrix::Zero(3, 3);
    m(0, 1) = w;
    m(1, 2) = w;
    m(2, 0) = w;
    return m;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

inline bool parse_double(std::string_view cell, double& out) {
    if (cell.empty()) return false;
    if (cell.front() == '+') cell.remove_prefix(1);
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), out);
    return res.ec == std::errc() && res.ptr == cell.data() + cell.size() && std::isfinite(out);
}

}  // namespace detail

/// Reads a rectangular numeric CSV. Errors carry 1-based line and column numbers.
inline Matrix read_numeric_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw CsvError(path, 0, 0, "cannot open file");
    std::string line;
    std::size_t lineno = 0;
    std::vector<double> values;
    std::size_t cols = 0;
    Index rows = 0;
    bool header_pending = has_header;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        const auto cells = detail::split_commas(line);
        if (header_pending) {
            header_pending = false;
            cols = cells.size();
            continue;
        }
        if (cols == 0) cols = cells.size();
        if (cells.size() != cols)
            throw CsvError(path, lineno, 0,
                           "ragged row: expected " + std::to_string(cols) + " cells, found " +
                               std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = 0.0;
            if (!detail::parse_double(cells[c], v))
                throw CsvError(path, lineno, c + 1, "non-numeric cell '" + std::string(cells[c]) + "'");
            values.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw CsvError(path, lineno, 0, "no data rows");
    Matrix m(rows, static_cast<Index>(cols));
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < static_cast<Index>(cols); ++c)
            m(r, c) = values[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)];
    return m;
}

inline Dataset load_dataset_csv(const std::string& path, bool has_header = false, bool center = true) {
    Dataset ds;
    ds.x = read_numeric_csv(path, has_header);
    if (center) ds.x.rowwise() -= ds.x.colwise().mean();
    ds.provenance = "csv " + path + (center ? " centered" : "");
    return ds;
}

/// Ground-truth adjacency: d×d reals, no header, zero diagonal.
inline Matrix load_adjacency_csv(const std::string& path) {
    Matrix w = read_numeric_csv(path, false);
    if (w.rows() != w.cols())
        throw CsvError(path, 0, 0,
                       "adjacency must be square, got " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    for (Index i = 0; i < w.rows(); ++i)
        if (w(i, i) != 0.0)
            throw CsvError(path, static_cast<std::size_t>(i) + 1, static_cast<std::size_t>(i) + 1,
                           "diagonal entry must be zero");
    return w;
}

inline void write_matrix_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& header = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    if (!header.empty()) out << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace spgahoc
