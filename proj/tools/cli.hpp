#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oqs/oqs.hpp"

namespace oqs::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kVersion = "oqs 0.1.0";

inline const std::vector<std::string>& solver_names() {
    static const std::vector<std::string> names{"sln",   "sln-pair", "hierarchy1", "hierarchy2",
                                                "convolved", "tcl2", "lindblad",   "oracle"};
    return names;
}

struct RunConfig {
    SystemModel model;
    BathSpectrum bath;
    TimeGrid grid;
    std::string solver{"hierarchy2"};
    std::size_t trajectories{1000};
    std::uint64_t seed{0};
    std::string output{"out"};
    std::size_t stride{1};
    unsigned threads{1};
    bool validate_noise{false};
    std::size_t noise_points{16};
    TractabilityThresholds thresholds;
    real lindblad_gamma{-1.0};
    OracleConfig oracle;
    json source;  // the config as read, with overrides applied
};

// ---- parsing ---------------------------------------------------------------

namespace detail {

inline const json& require(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError("missing key '" + where + key + "'");
    return j.at(key);
}

inline real as_real(const json& v, const std::string& key) {
    if (v.is_number()) return v.get<real>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "+inf" || s == "infinity") return kInf;
    }
    throw ConfigError("key '" + key + "' must be a number");
}

inline std::size_t as_count(const json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("key '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

inline cplx as_complex(const json& v, const std::string& key) {
    if (v.is_number()) return {v.get<real>(), 0.0};
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) return {v[0].get<real>(), v[1].get<real>()};
    throw ConfigError("key '" + key + "': matrix entries must be [re, im] pairs or numbers");
}

}  // namespace detail

/// Square complex matrix from rows of [re, im] pairs.
inline Matrix parse_matrix(const json& v, const std::string& key) {
    if (!v.is_array() || v.empty()) throw ConfigError("key '" + key + "' must be a non-empty array of rows");
    const auto n = static_cast<Eigen::Index>(v.size());
    Matrix m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = v[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
            throw ConfigError("key '" + key + "' must be a square matrix");
        for (Eigen::Index c = 0; c < n; ++c) m(r, c) = detail::as_complex(row[static_cast<std::size_t>(c)], key);
    }
    return m;
}

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
        rows.push_back(row);
    }
    return rows;
}

inline BathSpectrum parse_bath(const json& b, real t_max) {
    using detail::as_real;
    if (!b.is_object()) throw ConfigError("key 'bath' must be an object");
    SpectralDensityParams p;
    p.beta = b.contains("beta") && !b.at("beta").is_null() ? as_real(b.at("beta"), "bath.beta") : kInf;
    if (b.contains("modes")) {
        p.family = SpectralFamily::custom;
        const auto& modes = b.at("modes");
        if (!modes.is_array()) throw ConfigError("key 'bath.modes' must be an array");
        for (const auto& m : modes)
            p.table.push_back({as_real(detail::require(m, "omega", "bath.modes[]."), "bath.modes[].omega"),
                               as_real(detail::require(m, "g_hat", "bath.modes[]."), "bath.modes[].g_hat")});
    } else {
        const auto family = detail::require(b, "family", "bath.").get<std::string>();
        if (family == "ohmic")
            p.family = SpectralFamily::ohmic;
        else if (family == "super_ohmic")
            p.family = SpectralFamily::super_ohmic;
        else
            throw ConfigError("key 'bath.family' must be ohmic or super_ohmic (or give bath.modes)");
        p.eta = as_real(detail::require(b, "eta", "bath."), "bath.eta");
        if (b.contains("s")) p.s = as_real(b.at("s"), "bath.s");
        p.omega_c = as_real(detail::require(b, "omega_c", "bath."), "bath.omega_c");
        p.n_modes = detail::as_count(detail::require(b, "n_modes", "bath."), "bath.n_modes");
        p.omega_max = as_real(detail::require(b, "omega_max", "bath."), "bath.omega_max");
    }
    return discretize_spectral_density(p, t_max);
}

inline TimeGrid parse_grid(const json& g) {
    const real dt = detail::as_real(detail::require(g, "dt", "grid."), "grid.dt");
    const real t_max = detail::as_real(detail::require(g, "t_max", "grid."), "grid.t_max");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("key 'grid.dt' must be positive");
    if (!(t_max > 0.0) || !std::isfinite(t_max)) throw ConfigError("key 'grid.t_max' must be positive");
    const real steps = std::round(t_max / dt);
    if (steps < 1.0 || std::abs(steps * dt - t_max) > 1e-9 * t_max)
        throw ConfigError("key 'grid.t_max' must be an integer multiple of grid.dt");
    return {dt, static_cast<std::size_t>(steps)};
}

inline RunConfig parse_config(const json& j) {
    using detail::as_count;
    using detail::require;
    RunConfig c;
    c.source = j;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const auto& m = require(j, "model", "");
    c.model.H = parse_matrix(require(m, "H", "model."), "model.H");
    c.model.X = parse_matrix(require(m, "X", "model."), "model.X");
    c.model.rho0 = parse_matrix(require(m, "rho0", "model."), "model.rho0");
    c.model.validate();
    c.grid = parse_grid(require(j, "grid", ""));
    c.bath = parse_bath(require(j, "bath", ""), c.grid.t_max());

    c.solver = require(j, "solver", "").get<std::string>();
    if (std::find(solver_names().begin(), solver_names().end(), c.solver) == solver_names().end())
        throw ConfigError("key 'solver': unknown solver '" + c.solver + "'");
    if (j.contains("trajectories")) c.trajectories = as_count(j.at("trajectories"), "trajectories");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    if (j.contains("stride")) c.stride = as_count(j.at("stride"), "stride");
    if (j.contains("threads")) c.threads = static_cast<unsigned>(as_count(j.at("threads"), "threads"));
    if (j.contains("validate_noise")) c.validate_noise = j.at("validate_noise").get<bool>();
    if (j.contains("noise_points")) c.noise_points = as_count(j.at("noise_points"), "noise_points");
    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        if (t.contains("valid")) c.thresholds.valid = detail::as_real(t.at("valid"), "thresholds.valid");
        if (t.contains("invalid")) c.thresholds.invalid = detail::as_real(t.at("invalid"), "thresholds.invalid");
        if (!(c.thresholds.valid > 0.0) || !(c.thresholds.invalid > c.thresholds.valid))
            throw ConfigError("key 'thresholds': need 0 < valid < invalid");
    }
    if (j.contains("lindblad")) c.lindblad_gamma = detail::as_real(require(j.at("lindblad"), "gamma", "lindblad."), "lindblad.gamma");
    if (j.contains("oracle")) {
        const auto& o = j.at("oracle");
        if (o.contains("fock_cutoff")) c.oracle.fock_cutoff = as_count(o.at("fock_cutoff"), "oracle.fock_cutoff");
        if (o.contains("thermal")) c.oracle.thermal = o.at("thermal").get<bool>();
        if (o.contains("check_cutoff")) c.oracle.check_cutoff = o.at("check_cutoff").get<bool>();
        if (o.contains("cutoff_tolerance"))
            c.oracle.cutoff_tolerance = detail::as_real(o.at("cutoff_tolerance"), "oracle.cutoff_tolerance");
        if (o.contains("max_dimension")) c.oracle.max_dimension = as_count(o.at("max_dimension"), "oracle.max_dimension");
    }

    // solver-specific requirements
    if (c.solver == "lindblad" && c.lindblad_gamma < 0.0) throw ConfigError("missing key 'lindblad.gamma' (>= 0)");
    if ((c.solver == "sln" || c.solver == "sln-pair") && c.trajectories < 1)
        throw ConfigError("key 'trajectories' must be >= 1");
    if (c.solver.rfind("hierarchy", 0) == 0 && (c.stride < 1 || c.grid.n % c.stride != 0))
        throw ConfigError("key 'stride' must divide the number of steps");
    if (c.threads < 1) throw ConfigError("key 'threads' must be >= 1");
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

struct Overrides {
    std::optional<std::string> solver, output;
    std::optional<std::size_t> trajectories, stride;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    bool validate_noise{false};
};

/// Applies command-line overrides to the raw config and re-parses it, so the
/// resolved config stored in summary.json reproduces the run.
inline RunConfig apply_overrides(json j, const Overrides& o) {
    if (o.solver) j["solver"] = *o.solver;
    if (o.output) j["output"] = *o.output;
    if (o.trajectories) j["trajectories"] = *o.trajectories;
    if (o.stride) j["stride"] = *o.stride;
    if (o.seed) j["seed"] = *o.seed;
    if (o.threads) j["threads"] = *o.threads;
    if (o.validate_noise) j["validate_noise"] = true;
    return parse_config(j);
}

// ---- series files -------------------------------------------------------------

inline std::string format_real(real x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Columns: t, then for each entry in row-major order its real and imaginary part.
inline void write_series(const fs::path& path, const TimeGrid& grid, const std::vector<Matrix>& rho) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const auto N = rho.empty() ? 0 : rho.front().rows();
    out << "t";
    for (Eigen::Index r = 0; r < N; ++r)
        for (Eigen::Index c = 0; c < N; ++c) out << ",re_" << r << c << ",im_" << r << c;
    out << '\n';
    for (std::size_t k = 0; k < rho.size(); ++k) {
        out << format_real(grid.t(k));
        for (Eigen::Index r = 0; r < N; ++r)
            for (Eigen::Index c = 0; c < N; ++c)
                out << ',' << format_real(rho[k](r, c).real()) << ',' << format_real(rho[k](r, c).imag());
        out << '\n';
    }
}

struct SeriesTable {
    std::vector<real> t;
    std::vector<Matrix> rho;
};

inline SeriesTable read_series(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    const auto entries = (columns - 1) / 2;
    const auto N = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<real>(entries))));
    if (columns < 3 || (columns - 1) % 2 != 0 || static_cast<std::size_t>(N * N) != entries)
        throw std::runtime_error(path.string() + ": header is not a density-matrix series");
    SeriesTable s;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<real> v;
        while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
        if (v.size() != columns) throw std::runtime_error(path.string() + ": ragged row");
        s.t.push_back(v[0]);
        Matrix m(N, N);
        for (Eigen::Index r = 0; r < N; ++r)
            for (Eigen::Index c = 0; c < N; ++c) {
                const auto i = static_cast<std::size_t>(1 + 2 * (r * N + c));
                m(r, c) = {v[i], v[i + 1]};
            }
        s.rho.push_back(std::move(m));
    }
    return s;
}

// ---- comparison -------------------------------------------------------------

struct CompareReport {
    real max_distance{0.0};
    real l2_distance{0.0};          // sqrt(sum_t ||A - B||_F^2 dt)
    real population_max{0.0};
    real coherence_max{0.0};
    real rms_distance{0.0};         // over real and imaginary parts of every entry
    std::optional<real> pooled_se;  // sqrt(mean SE^2), when standard errors are given
    std::size_t samples{0};

    json to_json() const {
        json j{{"max_distance", max_distance},       {"l2_distance", l2_distance},
               {"population_max", population_max},   {"coherence_max", coherence_max},
               {"rms_distance", rms_distance},       {"samples", samples}};
        if (pooled_se) {
            j["pooled_se"] = *pooled_se;
            j["distance_over_pooled_se"] = rms_distance / *pooled_se;
        }
        return j;
    }
};

/// `se`, when given, holds standard errors of A (or of A - B) in the same layout.
inline CompareReport compare_series(const SeriesTable& a, const SeriesTable& b, const SeriesTable* se = nullptr) {
    if (a.t.size() != b.t.size()) throw std::invalid_argument("compare: series have different lengths");
    for (std::size_t k = 0; k < a.t.size(); ++k)
        if (std::abs(a.t[k] - b.t[k]) > 1e-9 * std::max<real>(1.0, std::abs(a.t[k])))
            throw std::invalid_argument("compare: time grids differ");
    if (!a.rho.empty() && a.rho.front().rows() != b.rho.front().rows())
        throw std::invalid_argument("compare: dimensions differ");
    if (se && se->rho.size() != a.rho.size()) throw std::invalid_argument("compare: standard-error series length differs");

    CompareReport r;
    real sq = 0.0, se_sq = 0.0, l2 = 0.0;
    for (std::size_t k = 0; k < a.t.size(); ++k) {
        const Matrix d = a.rho[k] - b.rho[k];
        const real w = k + 1 < a.t.size() ? a.t[k + 1] - a.t[k] : (k > 0 ? a.t[k] - a.t[k - 1] : 1.0);
        l2 += d.squaredNorm() * w;
        for (Eigen::Index i = 0; i < d.rows(); ++i)
            for (Eigen::Index j = 0; j < d.cols(); ++j) {
                const real e = std::abs(d(i, j));
                r.max_distance = std::max(r.max_distance, e);
                (i == j ? r.population_max : r.coherence_max) =
                    std::max(i == j ? r.population_max : r.coherence_max, e);
                sq += d(i, j).real() * d(i, j).real() + d(i, j).imag() * d(i, j).imag();
                r.samples += 2;
                if (se) {
                    const cplx s = se->rho[k](i, j);
                    se_sq += s.real() * s.real() + s.imag() * s.imag();
                }
            }
    }
    r.l2_distance = std::sqrt(l2);
    if (r.samples > 0) r.rms_distance = std::sqrt(sq / static_cast<real>(r.samples));
    if (se && r.samples > 0) r.pooled_se = std::sqrt(se_sq / static_cast<real>(r.samples));
    return r;
}

inline SeriesTable to_table(const DensityMatrixSeries& s) {
    SeriesTable t;
    for (std::size_t k = 0; k < s.rho.size(); ++k) t.t.push_back(s.grid.t(k));
    t.rho = s.rho;
    return t;
}

// ---- run ----------------------------------------------------------------------

enum ExitCode : int { kOk = 0, kConfigError = 1, kUnhealthy = 2, kSolverError = 3 };

struct RunOutcome {
    int exit_code{kOk};
    json summary;
};

inline json error_json(const std::string& kind, const std::string& message) {
    return json{{"error", kind}, {"message", message}};
}

inline json deviations(const std::vector<Matrix>& rho) {
    real tr = 0.0, herm = 0.0;
    for (const auto& r : rho) {
        tr = std::max(tr, std::abs(r.trace() - cplx(1.0)));
        herm = std::max(herm, max_abs(r - r.adjoint()));
    }
    return json{{"trace_max", tr}, {"hermiticity_max", herm}};
}

inline void write_noise_stats(const fs::path& path, const StatisticsReport& r) {
    std::ofstream out(path);
    out << "moment,t,t_prime,empirical_re,empirical_im,target_re,target_im,se_re,se_im\n";
    auto dump = [&](const char* name, const MomentStats& m) {
        for (std::size_t a = 0; a < r.times.size(); ++a)
            for (std::size_t b = 0; b < r.times.size(); ++b) {
                const auto i = static_cast<Eigen::Index>(a), j = static_cast<Eigen::Index>(b);
                out << name << ',' << format_real(r.times[a]) << ',' << format_real(r.times[b]) << ','
                    << format_real(m.empirical(i, j).real()) << ',' << format_real(m.empirical(i, j).imag()) << ','
                    << format_real(m.target(i, j).real()) << ',' << format_real(m.target(i, j).imag()) << ','
                    << format_real(m.se(i, j).real()) << ',' << format_real(m.se(i, j).imag()) << '\n';
            }
    };
    dump("xi_xi", r.xi_xi);
    dump("xi_nu", r.xi_nu);
    dump("nu_nu", r.nu_nu);
}

/// Runs the configured solver, writes the artifacts into cfg.output and returns
/// the summary written to summary.json.
inline RunOutcome run(const RunConfig& cfg) {
    using clock = std::chrono::steady_clock;
    const fs::path dir(cfg.output);
    fs::create_directories(dir);
    RunOutcome out;
    json& s = out.summary;
    s["version"] = kVersion;
    s["solver"] = cfg.solver;
    s["seed"] = cfg.seed;
    s["config"] = cfg.source;
    s["config"]["solver"] = cfg.solver;
    s["config"]["seed"] = cfg.seed;
    json warnings = json::array();
    bool healthy = true;
    const auto start = clock::now();

    try {
        const auto& g = cfg.grid;
        if (cfg.solver == "sln" || cfg.solver == "sln-pair") {
            EnsembleOptions opt;
            opt.threads = cfg.threads;
            const auto form = cfg.solver == "sln" ? TrajectoryForm::density : TrajectoryForm::pair;
            const auto st = ensemble_average(cfg.model, cfg.bath, cfg.trajectories, cfg.seed, g, form, opt);
            write_series(dir / "series.csv", g, st.mean.rho);
            write_series(dir / "stderr.csv", g, st.mean.stderr_);
            s["trajectories"] = st.trajectories;
            s["divergent"] = st.divergent;
            s["median_stderr"] = st.median_stderr();
            s["deviations"] = {{"trace_max", *std::max_element(st.trace_dev.begin(), st.trace_dev.end())},
                               {"hermiticity_max", *std::max_element(st.hermiticity_dev.begin(), st.hermiticity_dev.end())}};
            for (const auto& w : st.warnings) warnings.push_back(w);
            healthy = healthy && st.healthy;
            if (cfg.validate_noise) {
                auto factors = std::make_shared<const NoiseFactors>(cfg.bath, g.t_max(), 0.5 * g.dt);
                std::vector<real> times;
                const std::size_t points = std::max<std::size_t>(2, std::min(cfg.noise_points, g.size()));
                for (std::size_t i = 0; i < points; ++i)
                    times.push_back(g.t((i * g.n) / (points - 1)));
                const auto rep = validate_statistics(factors, cfg.bath, cfg.seed, std::max<std::size_t>(100, cfg.trajectories),
                                                     times);
                write_noise_stats(dir / "noise-stats.csv", rep);
                s["noise_validation"] = {{"paths", rep.paths},
                                         {"passed", rep.passed()},
                                         {"flagged", rep.xi_xi.flagged + rep.xi_nu.flagged + rep.nu_nu.flagged},
                                         {"max_sigma", std::max({rep.xi_xi.max_sigma, rep.xi_nu.max_sigma, rep.nu_nu.max_sigma})}};
                if (!rep.passed()) {
                    healthy = false;
                    warnings.push_back("noise statistics deviate by more than 5 standard errors");
                }
            }
        } else if (cfg.solver == "hierarchy1" || cfg.solver == "hierarchy2") {
            HierarchyConfig hc;
            hc.grid = g;
            hc.stride = cfg.stride;
            hc.truncation = cfg.solver == "hierarchy1" ? Truncation::class1 : Truncation::class1_class2;
            const auto res = solve(cfg.model, build_kernels(cfg.bath, g), hc);
            write_series(dir / "series.csv", g, res.series.rho);
            {
                std::ofstream w(dir / "weights.csv");
                w << "t,W1,W2,ratio\n";
                for (std::size_t k = 0; k < g.size(); ++k)
                    w << format_real(g.t(k)) << ',' << format_real(res.weights.W1[k]) << ','
                      << format_real(res.weights.W2[k]) << ','
                      << (std::isnan(res.weights.ratio[k]) ? std::string("nan") : format_real(res.weights.ratio[k]))
                      << '\n';
            }
            s["deviations"] = deviations(res.series.rho);
            s["deviations"]["min_eigenvalue"] = *std::min_element(res.min_eigenvalue.begin(), res.min_eigenvalue.end());
            for (const auto& w : res.warnings) warnings.push_back(w);
            healthy = healthy && !res.trace_flag;
            if (hc.truncation == Truncation::class1_class2) {
                const auto rep = tractability_report(res.weights, cfg.thresholds);
                s["verdict"] = to_string(rep.verdict);
                s["max_ratio"] = rep.max_ratio;
                s["t_at_max_ratio"] = rep.t_at_max;
                s["truncation_error"] = rep.truncation_error;
                s["undefined_ratios"] = rep.undefined_ratios;
            }
        } else {
            DensityMatrixSeries series;
            if (cfg.solver == "convolved") {
                series = solve_convolved(cfg.model, cfg.bath, g);
            } else if (cfg.solver == "tcl2") {
                series = solve_tcl2(cfg.model, cfg.bath, g);
            } else if (cfg.solver == "lindblad") {
                series = solve_lindblad(cfg.model, cfg.lindblad_gamma, g);
            } else {
                const auto res = exact_oracle(cfg.model, cfg.bath, g, cfg.oracle);
                series = res.series;
                s["oracle"] = {{"norm_dev", res.norm_dev},
                               {"cutoff_change", res.cutoff_change},
                               {"cutoff_converged", res.cutoff_converged}};
                if (!res.cutoff_converged) {
                    healthy = false;
                    warnings.push_back("oracle: Fock cutoff not converged");
                }
            }
            write_series(dir / "series.csv", g, series.rho);
            s["deviations"] = deviations(series.rho);
        }
    } catch (const SolverError& e) {
        s["healthy"] = false;
        s["errors"] = json::array({error_json("solver", e.what())});
        s["errors"][0]["step"] = e.step();
        out.exit_code = kSolverError;
    } catch (const ConfigError& e) {
        s["healthy"] = false;
        s["errors"] = json::array({error_json("config", e.what())});
        out.exit_code = kConfigError;
    } catch (const DomainError& e) {
        s["healthy"] = false;
        s["errors"] = json::array({error_json("domain", e.what())});
        out.exit_code = kConfigError;
    }

    s["timings"] = {{"solve_seconds", std::chrono::duration<double>(clock::now() - start).count()}};
    s["warnings"] = warnings;
    if (out.exit_code == kOk) {
        s["healthy"] = healthy;
        s["errors"] = json::array();
        if (!healthy) {
            out.exit_code = kUnhealthy;
            s["errors"].push_back(error_json("unhealthy", "run flagged; see warnings"));
        }
    }
    std::ofstream(dir / "summary.json") << s.dump(2) << '\n';
    return out;
}

}  // namespace oqs::cli
