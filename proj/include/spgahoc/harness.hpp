#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "spgahoc.hpp"

namespace spgahoc {

using json = nlohmann::json;

enum class Experiment {
    GradVsRho,
    GradVsMagnitude,
    L1Synergy,
    SparseBenchmark,
    NearCyclic,
    DeltaSensitivity,
    LambdaTrajectory,
    Scalability,
    FitCsv
};

inline const std::vector<std::pair<Experiment, std::string>>& experiment_names() {
    static const std::vector<std::pair<Experiment, std::string>> names = {
        {Experiment::GradVsRho, "GradVsRho"},
        {Experiment::GradVsMagnitude, "GradVsMagnitude"},
        {Experiment::L1Synergy, "L1Synergy"},
        {Experiment::SparseBenchmark, "SparseBenchmark"},
        {Experiment::NearCyclic, "NearCyclic"},
        {Experiment::DeltaSensitivity, "DeltaSensitivity"},
        {Experiment::LambdaTrajectory, "LambdaTrajectory"},
        {Experiment::Scalability, "Scalability"},
        {Experiment::FitCsv, "FitCsv"},
    };
    return names;
}

inline std::string to_string(Experiment e) {
    for (const auto& [k, v] : experiment_names())
        if (k == e) return v;
    return "?";
}

/// Schema violation; `path()` is a JSON-pointer-like location such as "$.optim.lambda1".
class ConfigError : public std::runtime_error {
  public:
    ConfigError(std::string path, const std::string& msg)
        : std::runtime_error(path + ": " + msg), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

  private:
    std::string path_;
};

enum class Driver { Spg, Adam };

struct MethodSpec {
    std::string name;
    Driver driver = Driver::Spg;
    ConstraintSpec constraint;
    bool subgradient_mode = false;
    std::optional<double> tau;  // scoring threshold; SPG defaults to 0 (raw exact zeros)
    json optim_overrides = json::object();
    json adam_overrides = json::object();
};

struct DataSource {
    Index n = 1000;
    double noise_std = 1.0;
    std::string csv;
    bool has_header = false;
    bool center = true;
    std::string truth_csv;
};

struct SweepGrid {
    std::vector<double> t;
    std::vector<double> rho;
    std::vector<double> delta;
    std::vector<double> lambda1;
    std::vector<Index> d;
};

struct ExperimentConfig {
    int schema_version = 1;
    Experiment experiment = Experiment::SparseBenchmark;
    std::string output_dir = "out";
    std::vector<std::uint64_t> seeds{0};
    GraphSpec graph;
    DataSource data;
    std::vector<ConstraintSpec> constraints;
    std::vector<MethodSpec> methods;
    OptimConfig optim;
    AdamParams adam;
    SweepGrid grid;
    std::string direction = "support";  // GradVsMagnitude/L1Synergy sign pattern: "support" or "dense"
    double tau = 0.3;
    int workers = 0;  // 0: SPGAHOC_WORKERS or 1
    bool write_matrices = true;
    bool write_traces = false;
    json echo;
};

namespace detail {

// Strict object reader: remembers which keys were consumed so leftovers can be rejected.
class ObjReader {
  public:
    ObjReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    std::string sub(const std::string& key) const { return path_ + "." + key; }

    const json* get(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        const json* v = get(key);
        if (!v) return;
        out = convert<T>(*v, sub(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(sub(it.key()), "unknown key");
    }

    template <typename T>
    static T convert(const json& v, const std::string& path) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(path, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(path, "expected a number");
            return v.get<double>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(path, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_integer() && v.get<std::int64_t>() < 0)
                    throw ConfigError(path, "expected a nonnegative integer");
            }
            return v.get<T>();
        } else {
            if (!v.is_array()) throw ConfigError(path, "expected an array");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i)
                out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
            return out;
        }
    }

  private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline ConstraintSpec parse_constraint(const json& j, const std::string& path) {
    ConstraintSpec c;
    if (j.is_string()) {
        auto k = parse_constraint_kind(j.get<std::string>());
        if (!k) throw ConfigError(path, "unknown constraint kind '" + j.get<std::string>() + "'");
        c.kind = *k;
        return c;
    }
    ObjReader r(j, path);
    std::string kind = "SmoothedAhoc";
    r.read("kind", kind);
    auto k = parse_constraint_kind(kind);
    if (!k) throw ConfigError(r.sub("kind"), "unknown constraint kind '" + kind + "'");
    c.kind = *k;
    r.read("alpha", c.alpha);
    r.read("epsilon", c.epsilon);
    r.read("delta", c.delta);
    r.read("s", c.s);
    r.finish();
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
    return c;
}

inline void apply_optim(const json& j, const std::string& path, OptimConfig& o) {
    ObjReader r(j, path);
    r.read("lambda1", o.lambda1);
    r.read("eta_init", o.eta_init);
    r.read("ls_shrink", o.ls_shrink);
    r.read("ls_max", o.ls_max);
    r.read("inner_tol", o.inner_tol);
    r.read("inner_max", o.inner_max);
    r.read("mu0", o.mu0);
    r.read("rho0", o.rho0);
    r.read("rho_growth", o.rho_growth);
    r.read("h_progress", o.h_progress);
    r.read("h_tol", o.h_tol);
    r.read("outer_max", o.outer_max);
    r.read("rho_max", o.rho_max);
    r.read("subgradient_mode", o.subgradient_mode);
    r.read("record_trace", o.record_trace);
    r.finish();
    try {
        o.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
}

inline void apply_adam(const json& j, const std::string& path, AdamParams& a) {
    ObjReader r(j, path);
    r.read("lr", a.lr);
    r.read("beta1", a.beta1);
    r.read("beta2", a.beta2);
    r.read("eps", a.eps);
    r.read("steps", a.steps);
    r.read("seed", a.seed);
    r.read("init_scale", a.init_scale);
    r.finish();
    try {
        a.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
}

inline MethodSpec parse_method(const json& j, const std::string& path) {
    ObjReader r(j, path);
    MethodSpec m;
    r.read("name", m.name);
    if (m.name.empty()) throw ConfigError(r.sub("name"), "method name is required");
    std::string driver = "spg";
    r.read("driver", driver);
    if (driver == "spg")
        m.driver = Driver::Spg;
    else if (driver == "adam")
        m.driver = Driver::Adam;
    else
        throw ConfigError(r.sub("driver"), "expected \"spg\" or \"adam\"");
    if (const json* c = r.get("constraint")) m.constraint = parse_constraint(*c, r.sub("constraint"));
    r.read("subgradient_mode", m.subgradient_mode);
    if (const json* t = r.get("tau")) {
        m.tau = ObjReader::convert<double>(*t, r.sub("tau"));
        if (!(*m.tau >= 0.0)) throw ConfigError(r.sub("tau"), "tau must be >= 0");
    }
    if (const json* o = r.get("optim")) {
        if (!o->is_object()) throw ConfigError(r.sub("optim"), "expected an object");
        m.optim_overrides = *o;
    }
    if (const json* a = r.get("adam")) {
        if (!a->is_object()) throw ConfigError(r.sub("adam"), "expected an object");
        m.adam_overrides = *a;
    }
    r.finish();
    if (!is_smooth(m.constraint.kind) && m.driver == Driver::Spg && !m.subgradient_mode)
        throw ConfigError(path, "non-smooth constraint " + std::string(to_string(m.constraint.kind)) +
                                    " needs \"subgradient_mode\": true");
    return m;
}

inline std::vector<double> log_grid(double lo, double hi, int points) {
    std::vector<double> g;
    if (points == 1) return {lo};
    for (int i = 0; i < points; ++i)
        g.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (points - 1)));
    return g;
}

inline bool is_sweep_over(Experiment e, const char* grid) {
    const std::string g = grid;
    switch (e) {
        case Experiment::GradVsRho: return g == "rho";
        case Experiment::GradVsMagnitude:
        case Experiment::L1Synergy: return g == "t";
        case Experiment::DeltaSensitivity: return g == "delta";
        case Experiment::LambdaTrajectory: return g == "lambda1";
        case Experiment::Scalability: return g == "d";
        default: return false;
    }
}

}  // namespace detail

/// Default methods when a config lists none.
inline std::vector<MethodSpec> default_methods(Experiment e) {
    MethodSpec spg;
    spg.name = "SPG-AHOC";
    spg.driver = Driver::Spg;
    spg.constraint.kind = ConstraintKind::SmoothedAhoc;
    if (e == Experiment::SparseBenchmark || e == Experiment::Scalability) {
        MethodSpec adam;
        adam.name = "EXP-Adam";
        adam.driver = Driver::Adam;
        adam.constraint.kind = ConstraintKind::Exp;
        return {spg, adam};
    }
    return {spg};
}

inline std::vector<ConstraintSpec> default_constraints(Experiment e) {
    auto mk = [](ConstraintKind k) {
        ConstraintSpec c;
        c.kind = k;
        return c;
    };
    switch (e) {
        case Experiment::GradVsRho:
            return {mk(ConstraintKind::LogDet), mk(ConstraintKind::Aac), mk(ConstraintKind::SmoothedAhoc)};
        case Experiment::GradVsMagnitude: return {mk(ConstraintKind::Exp), mk(ConstraintKind::Aac)};
        case Experiment::L1Synergy: {
            ConstraintSpec s = mk(ConstraintKind::SmoothedAhoc);
            s.delta = 1e-8;
            return {mk(ConstraintKind::Ahoc), mk(ConstraintKind::SAhoc), s};
        }
        default: return {};
    }
}

inline ExperimentConfig parse_config(const json& root) {
    ExperimentConfig cfg;
    detail::ObjReader r(root, "$");
    if (!root.contains("schema_version")) throw ConfigError("$.schema_version", "missing required key");
    r.read("schema_version", cfg.schema_version);
    if (cfg.schema_version != 1)
        throw ConfigError("$.schema_version", "unsupported schema version " + std::to_string(cfg.schema_version));

    const json* ex = r.get("experiment");
    if (!ex) throw ConfigError("$.experiment", "missing required key");
    const auto exname = detail::ObjReader::convert<std::string>(*ex, "$.experiment");
    bool found = false;
    for (const auto& [k, v] : experiment_names())
        if (v == exname) {
            cfg.experiment = k;
            found = true;
        }
    if (!found) throw ConfigError("$.experiment", "unknown experiment '" + exname + "'");

    r.read("output_dir", cfg.output_dir);
    r.read("seeds", cfg.seeds);
    if (cfg.seeds.empty()) throw ConfigError("$.seeds", "at least one seed is required");
    r.read("direction", cfg.direction);
    if (cfg.direction != "support" && cfg.direction != "dense")
        throw ConfigError("$.direction", "expected \"support\" or \"dense\"");
    r.read("tau", cfg.tau);
    if (!(cfg.tau >= 0.0)) throw ConfigError("$.tau", "tau must be >= 0");
    r.read("workers", cfg.workers);
    if (cfg.workers < 0) throw ConfigError("$.workers", "workers must be >= 0");
    r.read("write_matrices", cfg.write_matrices);
    r.read("write_traces", cfg.write_traces);
    cfg.write_traces = cfg.write_traces || cfg.experiment == Experiment::LambdaTrajectory ||
                       cfg.experiment == Experiment::NearCyclic;

    if (const json* g = r.get("graph")) {
        detail::ObjReader gr(*g, "$.graph");
        gr.read("d", cfg.graph.d);
        gr.read("num_edges", cfg.graph.num_edges);
        gr.read("weight_low", cfg.graph.weight_low);
        gr.read("weight_high", cfg.graph.weight_high);
        gr.finish();
        try {
            cfg.graph.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError("$.graph", e.what());
        }
    }
    if (const json* d = r.get("data")) {
        detail::ObjReader dr(*d, "$.data");
        dr.read("n", cfg.data.n);
        dr.read("noise_std", cfg.data.noise_std);
        dr.read("csv", cfg.data.csv);
        dr.read("has_header", cfg.data.has_header);
        dr.read("center", cfg.data.center);
        dr.read("truth_csv", cfg.data.truth_csv);
        dr.finish();
        if (cfg.data.n < 1) throw ConfigError("$.data.n", "n must be >= 1");
        if (!(cfg.data.noise_std >= 0.0)) throw ConfigError("$.data.noise_std", "noise_std must be >= 0");
    }
    if (cfg.experiment == Experiment::FitCsv && cfg.data.csv.empty())
        throw ConfigError("$.data.csv", "FitCsv needs a data file");

    if (const json* o = r.get("optim")) detail::apply_optim(*o, "$.optim", cfg.optim);
    if (const json* a = r.get("adam")) detail::apply_adam(*a, "$.adam", cfg.adam);

    if (const json* cs = r.get("constraints")) {
        if (!cs->is_array()) throw ConfigError("$.constraints", "expected an array");
        for (std::size_t i = 0; i < cs->size(); ++i)
            cfg.constraints.push_back(detail::parse_constraint((*cs)[i], "$.constraints[" + std::to_string(i) + "]"));
    }
    if (cfg.constraints.empty()) cfg.constraints = default_constraints(cfg.experiment);

    if (const json* ms = r.get("methods")) {
        if (!ms->is_array()) throw ConfigError("$.methods", "expected an array");
        std::set<std::string> names;
        for (std::size_t i = 0; i < ms->size(); ++i) {
            const std::string p = "$.methods[" + std::to_string(i) + "]";
            auto m = detail::parse_method((*ms)[i], p);
            if (!names.insert(m.name).second) throw ConfigError(p + ".name", "duplicate method name");
            // Overrides are validated now so errors surface before any run starts.
            OptimConfig o = cfg.optim;
            detail::apply_optim(m.optim_overrides, p + ".optim", o);
            AdamParams a = cfg.adam;
            detail::apply_adam(m.adam_overrides, p + ".adam", a);
            cfg.methods.push_back(std::move(m));
        }
    }
    if (cfg.methods.empty()) cfg.methods = default_methods(cfg.experiment);

    struct GridDefaults {
        int t_points = 25, rho_points = 20;
        double t_min = 1e-6, t_max = 1.0, rho_min = 0.5, rho_max = 0.9999;
    } gd;
    if (const json* g = r.get("grid")) {
        detail::ObjReader gr(*g, "$.grid");
        gr.read("t", cfg.grid.t);
        gr.read("rho", cfg.grid.rho);
        gr.read("delta", cfg.grid.delta);
        gr.read("lambda1", cfg.grid.lambda1);
        gr.read("d", cfg.grid.d);
        gr.read("t_points", gd.t_points);
        gr.read("t_min", gd.t_min);
        gr.read("t_max", gd.t_max);
        gr.read("rho_points", gd.rho_points);
        gr.read("rho_min", gd.rho_min);
        gr.read("rho_max", gd.rho_max);
        gr.finish();
        if (gd.t_points < 1 || gd.rho_points < 1) throw ConfigError("$.grid", "point counts must be >= 1");
        if (!(gd.t_min > 0.0 && gd.t_max >= gd.t_min)) throw ConfigError("$.grid", "need 0 < t_min <= t_max");
        if (!(gd.rho_min > 0.0 && gd.rho_max >= gd.rho_min)) throw ConfigError("$.grid", "need 0 < rho_min <= rho_max");
    }
    if (cfg.grid.t.empty()) cfg.grid.t = detail::log_grid(gd.t_min, gd.t_max, gd.t_points);
    if (cfg.grid.rho.empty()) cfg.grid.rho = detail::log_grid(gd.rho_min, gd.rho_max, gd.rho_points);
    for (std::size_t i = 0; i < cfg.grid.rho.size(); ++i)
        if (!(cfg.grid.rho[i] > 0.0 && cfg.grid.rho[i] < 1.0))
            throw ConfigError("$.grid.rho[" + std::to_string(i) + "]", "rho must lie in (0,1)");
    for (std::size_t i = 0; i < cfg.grid.t.size(); ++i)
        if (!(cfg.grid.t[i] > 0.0)) throw ConfigError("$.grid.t[" + std::to_string(i) + "]", "t must be > 0");
    for (std::size_t i = 0; i < cfg.grid.delta.size(); ++i)
        if (!(cfg.grid.delta[i] > 0.0))
            throw ConfigError("$.grid.delta[" + std::to_string(i) + "]", "delta must be > 0");
    for (std::size_t i = 0; i < cfg.grid.lambda1.size(); ++i)
        if (!(cfg.grid.lambda1[i] >= 0.0))
            throw ConfigError("$.grid.lambda1[" + std::to_string(i) + "]", "lambda1 must be >= 0");
    for (std::size_t i = 0; i < cfg.grid.d.size(); ++i)
        if (cfg.grid.d[i] < 2) throw ConfigError("$.grid.d[" + std::to_string(i) + "]", "d must be >= 2");
    if (detail::is_sweep_over(cfg.experiment, "delta") && cfg.grid.delta.empty())
        throw ConfigError("$.grid.delta", "DeltaSensitivity needs a nonempty delta grid");
    if (detail::is_sweep_over(cfg.experiment, "lambda1") && cfg.grid.lambda1.empty())
        throw ConfigError("$.grid.lambda1", "LambdaTrajectory needs a nonempty lambda1 grid");
    if (detail::is_sweep_over(cfg.experiment, "d") && cfg.grid.d.empty())
        throw ConfigError("$.grid.d", "Scalability needs a nonempty d grid");
    r.finish();
    cfg.echo = root;
    return cfg;
}

inline json load_config_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open config file");
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path, std::string("JSON parse error: ") + e.what());
    }
}

/// Sets `a.b.c = value` on a JSON tree; numeric segments index arrays. The value is parsed
/// as JSON when possible and taken as a string otherwise.
inline void apply_override(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set " + assignment, "expected key.path=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &root;
    std::string path = "$";
    std::stringstream ss(key);
    std::string seg;
    std::vector<std::string> segs;
    while (std::getline(ss, seg, '.')) {
        if (seg.empty()) throw ConfigError("--set " + assignment, "empty path segment");
        segs.push_back(seg);
    }
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const bool last = i + 1 == segs.size();
        const std::string& s = segs[i];
        if (node->is_array()) {
            std::size_t idx = 0;
            try {
                std::size_t used = 0;
                idx = std::stoul(s, &used);
                if (used != s.size()) throw std::invalid_argument("x");
            } catch (const std::exception&) {
                throw ConfigError(path, "array index expected, got '" + s + "'");
            }
            if (idx >= node->size()) throw ConfigError(path + "[" + s + "]", "index out of range");
            path += "[" + s + "]";
            node = &(*node)[idx];
        } else {
            if (node->is_null()) *node = json::object();
            if (!node->is_object()) throw ConfigError(path, "cannot descend into a scalar");
            path += "." + s;
            node = &(*node)[s];
        }
        if (last) *node = value;
    }
}

// ---------------------------------------------------------------------------------------------
// Output helpers

class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : path_(path) {
        out_.open(path, std::ios::binary);
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        row(header);
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
        if (!out_) throw std::runtime_error("write failed for " + path_.string());
    }

  private:
    std::filesystem::path path_;
    std::ofstream out_;
};

inline std::string fmt(double v) { return format_double(v); }

inline std::string constraint_param_string(const ConstraintSpec& c) {
    switch (c.kind) {
        case ConstraintKind::Exp: return "none";
        case ConstraintKind::LogDet: return "s=" + fmt(c.s);
        case ConstraintKind::Aac: return "epsilon=" + fmt(c.epsilon);
        case ConstraintKind::Ahoc: return "alpha=" + fmt(c.alpha) + ";epsilon=" + fmt(c.epsilon);
        case ConstraintKind::SAhoc: return "alpha=" + fmt(c.alpha) + ";epsilon=1";
        case ConstraintKind::SmoothedAhoc:
            return "alpha=" + fmt(c.alpha) + ";epsilon=" + fmt(c.epsilon) + ";delta=" + fmt(c.delta);
    }
    return "";
}

inline std::string utc_timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline int resolve_workers(int configured) {
    if (configured > 0) return configured;
    if (const char* env = std::getenv("SPGAHOC_WORKERS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return v;
        } catch (const std::exception&) {
        }
    }
    return 1;
}

/// Runs jobs[i] for every i on up to `workers` threads. Results land at their own index,
/// so output order never depends on scheduling.
template <typename R>
std::vector<R> run_indexed(const std::vector<std::function<R()>>& jobs, int workers) {
    std::vector<R> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) results[i] = jobs[i]();
    };
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
    if (n == 1) {
        work();
        return results;
    }
    std::vector<std::thread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    return results;
}

// ---------------------------------------------------------------------------------------------
// Results

struct RunRow {
    std::string method;
    Index d = 0;
    std::uint64_t seed = 0;
    double lambda1 = 0.0;
    double delta = 0.0;
    std::string param;  // grid label, e.g. "delta=1e-07"
    bool scored = false;
    StructuralScore score;
    Index nnz = 0;
    double final_h_exact = 0.0;
    double final_h_smoothed = 0.0;
    std::string status;
    std::string stop_reason;
    double wall_seconds = 0.0;
    double stability_threshold = 0.0;
    int outer_iterations = 0;
    long inner_iterations = 0;
    IterTrace trace;
    Matrix w;
    std::string error;
};

struct GradRow {
    std::string constraint;
    std::string param;
    double t_or_rho = 0.0;
    double grad_norm = 0.0;
    double h_value = 0.0;
    bool finite = true;
};

struct ReportBundle {
    std::filesystem::path output_dir;
    std::vector<std::string> files;
    std::vector<RunRow> runs;
    std::vector<GradRow> grads;
    json summary;
    bool had_errors = false;
};

inline const std::vector<std::string>& benchmark_columns() {
    static const std::vector<std::string> cols = {
        "method", "d",   "seed", "lambda1", "delta",         "shd",              "nnz",    "exact_zero_count",
        "sparsity", "tpr", "fdr",  "final_h_exact", "final_h_smoothed", "status"};
    return cols;
}

namespace detail {

struct Problem {
    Matrix x;
    std::optional<Matrix> truth;
    std::uint64_t seed = 0;
};

inline Problem synthetic_problem(const ExperimentConfig& cfg, std::uint64_t seed, Index d_override = 0) {
    GraphSpec g = cfg.graph;
    g.seed = seed;
    if (d_override > 0) {
        // Scalability keeps the configured edges-per-node ratio.
        const double ratio = static_cast<double>(cfg.graph.num_edges) / static_cast<double>(cfg.graph.d);
        g.d = d_override;
        g.num_edges = std::min<Index>(static_cast<Index>(std::llround(ratio * static_cast<double>(d_override))),
                                      d_override * (d_override - 1) / 2);
    }
    const Matrix w = sample_er_dag(g);
    Dataset ds = simulate_sem(w, cfg.data.n, cfg.data.noise_std, seed);
    return {std::move(ds.x), w, seed};
}

inline Problem near_cyclic_problem(const ExperimentConfig& cfg, std::uint64_t seed) {
    const Matrix w = near_cyclic_instance();
    Dataset ds = simulate_sem(w, cfg.data.n, cfg.data.noise_std, seed, true);
    return {std::move(ds.x), w, seed};
}

inline Problem csv_problem(const ExperimentConfig& cfg, std::uint64_t seed) {
    Dataset ds = load_dataset_csv(cfg.data.csv, cfg.data.has_header, cfg.data.center);
    Problem p{std::move(ds.x), std::nullopt, seed};
    if (!cfg.data.truth_csv.empty()) {
        p.truth = load_adjacency_csv(cfg.data.truth_csv);
        if (p.truth->rows() != p.x.cols())
            throw std::runtime_error("truth adjacency is " + std::to_string(p.truth->rows()) + "x" +
                                     std::to_string(p.truth->cols()) + " but the data has " +
                                     std::to_string(p.x.cols()) + " columns");
    }
    return p;
}

inline RunRow run_method(const ExperimentConfig& cfg, const MethodSpec& m, const Problem& prob,
                         std::optional<double> lambda1, std::optional<double> delta, const std::string& param) {
    RunRow row;
    row.method = m.name;
    row.d = prob.x.cols();
    row.seed = prob.seed;
    row.param = param;
    try {
        OptimConfig o = cfg.optim;
        apply_optim(m.optim_overrides, "$.methods", o);
        if (lambda1) o.lambda1 = *lambda1;
        o.subgradient_mode = o.subgradient_mode || m.subgradient_mode;
        ConstraintSpec c = m.constraint;
        if (delta) c.delta = *delta;
        row.lambda1 = o.lambda1;
        row.delta = c.delta;
        LeastSquaresLoss loss(prob.x);
        row.stability_threshold = stability_threshold(prob.x);
        RunReport rep;
        if (m.driver == Driver::Spg) {
            rep = alm_outer(loss, c, o, Matrix::Zero(row.d, row.d));
        } else {
            AdamParams a = cfg.adam;
            apply_adam(m.adam_overrides, "$.methods", a);
            a.seed = prob.seed;
            rep = adam_baseline(loss, c, o, a);
        }
        row.status = std::string(to_string(rep.status));
        row.stop_reason = rep.stop_reason;
        row.final_h_exact = rep.h_exact;
        row.final_h_smoothed = rep.h_smoothed;
        row.wall_seconds = rep.wall_seconds;
        row.outer_iterations = rep.outer_iterations;
        row.inner_iterations = rep.inner_iterations;
        row.nnz = count_nonzero(rep.w);
        if (prob.truth) {
            const double tau = m.tau.value_or(m.driver == Driver::Spg ? 0.0 : cfg.tau);
            row.score = structural_score(rep.w, *prob.truth, tau);
            row.scored = true;
        } else {
            row.score.nnz = static_cast<std::size_t>(row.nnz);
            row.score.exact_zero_count = static_cast<std::size_t>(row.d * row.d - row.d - row.nnz);
            row.score.sparsity = row.d > 1 ? static_cast<double>(row.score.exact_zero_count) /
                                                 static_cast<double>(row.d * row.d - row.d)
                                           : 1.0;
        }
        if (cfg.write_traces) row.trace = std::move(rep.trace);
        row.w = std::move(rep.w);
    } catch (const std::exception& e) {
        row.status = "Error";
        row.error = e.what();
    }
    return row;
}

inline std::vector<std::string> benchmark_cells(const RunRow& r) {
    const std::string na = "NA";
    return {r.method,
            std::to_string(r.d),
            std::to_string(r.seed),
            fmt(r.lambda1),
            fmt(r.delta),
            r.scored ? std::to_string(r.score.shd) : na,
            std::to_string(r.score.nnz),
            std::to_string(r.score.exact_zero_count),
            fmt(r.score.sparsity),
            r.scored ? fmt(r.score.tpr) : na,
            r.scored ? fmt(r.score.fdr) : na,
            fmt(r.final_h_exact),
            fmt(r.final_h_smoothed),
            r.status};
}

inline json run_json(const RunRow& r) {
    json j = {{"method", r.method},
              {"d", r.d},
              {"seed", r.seed},
              {"lambda1", r.lambda1},
              {"delta", r.delta},
              {"param", r.param},
              {"nnz", r.score.nnz},
              {"exact_zero_count", r.score.exact_zero_count},
              {"sparsity", r.score.sparsity},
              {"final_h", r.final_h_exact},
              {"final_h_exact", r.final_h_exact},
              {"final_h_smoothed", r.final_h_smoothed},
              {"status", r.status},
              {"stop_reason", r.stop_reason},
              {"stability_threshold", r.stability_threshold},
              {"outer_iterations", r.outer_iterations},
              {"inner_iterations", r.inner_iterations},
              {"time", r.wall_seconds}};
    if (r.scored) {
        j["shd"] = r.score.shd;
        j["tpr"] = r.score.tpr;
        j["fdr"] = r.score.fdr;
        j["support_match"] = r.score.support_match;
        j["sign_consistent"] = r.score.sign_consistent;
    } else {
        j["shd"] = nullptr;
    }
    if (!r.error.empty()) j["error"] = r.error;
    // JSON has no Inf/NaN; keep those as strings.
    for (auto& [k, v] : j.items())
        if (v.is_number_float() && !std::isfinite(v.get<double>())) v = fmt(v.get<double>());
    return j;
}

inline std::string file_tag(std::string s) {
    for (auto& ch : s)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
    return s;
}

}  // namespace detail

/// Executes the configured protocol and writes CSV tables plus summary.json into output_dir.
inline ReportBundle run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    ReportBundle bundle;
    bundle.output_dir = cfg.output_dir;
    std::error_code ec;
    fs::create_directories(bundle.output_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + cfg.output_dir + ": " + ec.message());
    const std::string started = utc_timestamp();
    const auto t0 = std::chrono::steady_clock::now();
    const int workers = resolve_workers(cfg.workers);

    auto add_file = [&](const fs::path& p) { bundle.files.push_back(p.filename().string()); };
    json results = json::object();

    const auto grad_header =
        std::vector<std::string>{"constraint", "param", "t_or_rho", "grad_fro_norm", "h_value"};
    auto write_grad_csv = [&](const fs::path& p, const std::vector<GradRow>& rows) {
        CsvWriter w(p, grad_header);
        for (const auto& g : rows)
            w.row({g.constraint, g.param, fmt(g.t_or_rho), fmt(g.grad_norm), fmt(g.h_value)});
        add_file(p);
    };

    switch (cfg.experiment) {
        case Experiment::GradVsRho: {
            std::vector<std::function<GradRow()>> jobs;
            for (const auto& c : cfg.constraints)
                for (double rho : cfg.grid.rho)
                    jobs.emplace_back([c, rho] {
                        const Matrix w = near_cyclic_instance(rho);
                        const auto ev = constraint_grad(c, w);
                        return GradRow{std::string(to_string(c.kind)), constraint_param_string(c), rho,
                                       ev.finite ? ev.gradient.norm() : std::numeric_limits<double>::infinity(),
                                       ev.value, ev.finite};
                    });
            bundle.grads = run_indexed(jobs, workers);
            write_grad_csv(bundle.output_dir / "grad_vs_rho.csv", bundle.grads);
            json per = json::object();
            for (const auto& g : bundle.grads) {
                auto& e = per[g.constraint];
                const double v = g.finite ? g.grad_norm : std::numeric_limits<double>::max();
                e["max_grad_norm"] = e.is_null() ? v : std::max(e["max_grad_norm"].get<double>(), v);
                if (!g.finite) e["non_finite"] = true;
            }
            results["constraints"] = per;
            break;
        }
        case Experiment::GradVsMagnitude:
        case Experiment::L1Synergy: {
            json per_seed = json::array();
            for (auto seed : cfg.seeds) {
                GraphSpec g = cfg.graph;
                g.seed = seed;
                Matrix u = Matrix::Zero(g.d, g.d);
                Rng dir(seed, Stream::Direction);
                if (cfg.direction == "dense") {
                    for (Index j = 0; j < g.d; ++j)
                        for (Index i = 0; i < g.d; ++i)
                            if (i != j) u(i, j) = dir.coin() ? 1.0 : -1.0;
                } else {
                    const Matrix w = sample_er_dag(g);
                    for (Index j = 0; j < g.d; ++j)
                        for (Index i = 0; i < g.d; ++i)
                            if (w(i, j) != 0.0) u(i, j) = dir.coin() ? 1.0 : -1.0;
                }
                std::vector<std::function<GradRow()>> jobs;
                for (const auto& c : cfg.constraints)
                    for (double t : cfg.grid.t)
                        jobs.emplace_back([c, t, &u] {
                            const auto ev = constraint_grad(c, Matrix(t * u));
                            return GradRow{std::string(to_string(c.kind)), constraint_param_string(c), t,
                                           ev.gradient.norm(), ev.value, ev.finite};
                        });
                auto rows = run_indexed(jobs, workers);
                const std::string name = (cfg.experiment == Experiment::L1Synergy ? "l1_synergy_seed" : "grad_vs_t_seed") +
                                         std::to_string(seed) + ".csv";
                write_grad_csv(bundle.output_dir / name, rows);
                json s = {{"seed", seed}, {"nnz_direction", count_nonzero(u)}, {"file", name}};
                for (const auto& c : cfg.constraints) {
                    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
                    for (const auto& r : rows)
                        if (r.constraint == to_string(c.kind) && r.param == constraint_param_string(c)) {
                            lo = std::min(lo, r.grad_norm);
                            hi = std::max(hi, r.grad_norm);
                        }
                    s["constraints"][std::string(to_string(c.kind))] = {{"min_grad_norm", lo}, {"max_grad_norm", hi}};
                }
                per_seed.push_back(s);
                for (auto& r : rows) bundle.grads.push_back(std::move(r));
            }
            results["seeds"] = per_seed;
            break;
        }
        case Experiment::SparseBenchmark:
        case Experiment::NearCyclic:
        case Experiment::DeltaSensitivity:
        case Experiment::LambdaTrajectory:
        case Experiment::Scalability:
        case Experiment::FitCsv: {
            struct Item {
                std::uint64_t seed;
                Index d;
                std::optional<double> lambda1, delta;
                std::string param;
            };
            std::vector<Item> items;
            for (auto seed : cfg.seeds) {
                if (cfg.experiment == Experiment::DeltaSensitivity) {
                    for (double dl : cfg.grid.delta) items.push_back({seed, 0, std::nullopt, dl, "delta=" + fmt(dl)});
                } else if (cfg.experiment == Experiment::LambdaTrajectory) {
                    for (double l : cfg.grid.lambda1) items.push_back({seed, 0, l, std::nullopt, "lambda1=" + fmt(l)});
                } else if (cfg.experiment == Experiment::Scalability) {
                    for (Index d : cfg.grid.d) items.push_back({seed, d, std::nullopt, std::nullopt, "d=" + std::to_string(d)});
                } else {
                    items.push_back({seed, 0, std::nullopt, std::nullopt, ""});
                }
            }
            // Problems are built once per (seed, d) and shared read-only by every method run.
            std::map<std::pair<std::uint64_t, Index>, std::shared_ptr<const detail::Problem>> problems;
            for (const auto& it : items) {
                auto key = std::make_pair(it.seed, it.d);
                if (problems.count(key)) continue;
                detail::Problem p;
                if (cfg.experiment == Experiment::FitCsv)
                    p = detail::csv_problem(cfg, it.seed);
                else if (cfg.experiment == Experiment::NearCyclic)
                    p = detail::near_cyclic_problem(cfg, it.seed);
                else
                    p = detail::synthetic_problem(cfg, it.seed, it.d);
                problems[key] = std::make_shared<const detail::Problem>(std::move(p));
            }
            std::vector<std::function<RunRow()>> jobs;
            for (const auto& it : items)
                for (const auto& m : cfg.methods) {
                    auto prob = problems.at({it.seed, it.d});
                    jobs.emplace_back([&cfg, m, prob, it] {
                        return detail::run_method(cfg, m, *prob, it.lambda1, it.delta, it.param);
                    });
                }
            bundle.runs = run_indexed(jobs, workers);

            {
                const fs::path p = bundle.output_dir / "summary.csv";
                CsvWriter w(p, benchmark_columns());
                for (const auto& r : bundle.runs) w.row(detail::benchmark_cells(r));
                add_file(p);
            }
            if (cfg.write_traces) {
                const fs::path p = bundle.output_dir / "trace.csv";
                CsvWriter w(p, {"method", "seed", "param", "outer", "inner", "total", "fit", "h", "w_norm", "nnz",
                                "eta", "grad_map_norm"});
                for (const auto& r : bundle.runs)
                    for (const auto& t : r.trace)
                        w.row({r.method, std::to_string(r.seed), r.param, std::to_string(t.outer),
                               std::to_string(t.inner), fmt(t.total), fmt(t.fit), fmt(t.h), fmt(t.w_norm),
                               std::to_string(t.nnz), fmt(t.eta), fmt(t.grad_map_norm)});
                add_file(p);
            }
            if (cfg.write_matrices) {
                for (const auto& r : bundle.runs) {
                    if (r.w.size() == 0) continue;
                    std::string name = "W_" + detail::file_tag(r.method) + "_seed" + std::to_string(r.seed);
                    if (!r.param.empty()) name += "_" + detail::file_tag(r.param);
                    const fs::path p = bundle.output_dir / (name + ".csv");
                    write_matrix_csv(p.string(), r.w);
                    add_file(p);
                }
            }
            json runs = json::array();
            std::map<std::string, std::vector<const RunRow*>> by_method;
            for (const auto& r : bundle.runs) {
                runs.push_back(detail::run_json(r));
                by_method[r.method].push_back(&r);
                if (!r.error.empty()) bundle.had_errors = true;
            }
            results["runs"] = runs;
            json methods = json::object();
            for (const auto& [name, rows] : by_method) {
                std::vector<double> shds;
                std::size_t converged = 0;
                for (auto* r : rows) {
                    if (r->scored) shds.push_back(static_cast<double>(r->score.shd));
                    if (r->status == "Converged") ++converged;
                }
                json m = {{"runs", rows.size()}, {"converged", converged}};
                if (!shds.empty()) {
                    std::sort(shds.begin(), shds.end());
                    const std::size_t k = shds.size();
                    m["median_shd"] = k % 2 ? shds[k / 2] : 0.5 * (shds[k / 2 - 1] + shds[k / 2]);
                }
                methods[name] = m;
            }
            results["methods"] = methods;
            break;
        }
    }

    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bundle.summary = {{"experiment", to_string(cfg.experiment)},
                      {"results", results},
                      {"manifest",
                       {{"tool", "spgahoc"},
                        {"version", kVersion},
                        {"schema_version", cfg.schema_version},
                        {"started_at", started},
                        {"finished_at", utc_timestamp()},
                        {"wall_seconds", elapsed},
                        {"workers", workers},
                        {"seeds", cfg.seeds},
                        {"files", bundle.files},
                        {"config", cfg.echo}}}};
    {
        std::ofstream out(bundle.output_dir / "summary.json", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write summary.json");
        out << bundle.summary.dump(2) << '\n';
    }
    return bundle;
}

}  // namespace spgahoc
