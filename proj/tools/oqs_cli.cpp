#include <iostream>

#include "CLI11.hpp"
#include "cli.hpp"

using namespace oqs::cli;

namespace {

int do_run(const std::string& config_path, const Overrides& o) {
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << error_json("config", "cannot read config '" + config_path + "'").dump() << '\n';
        return kConfigError;
    }
    RunConfig cfg;
    try {
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw oqs::ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        cfg = apply_overrides(std::move(j), o);
    } catch (const std::exception& e) {
        std::cerr << error_json("config", e.what()).dump() << '\n';
        return kConfigError;
    }
    const auto outcome = run(cfg);
    const auto& s = outcome.summary;
    if (outcome.exit_code != kOk) {
        std::cerr << json{{"exit_code", outcome.exit_code}, {"errors", s["errors"]}}.dump() << '\n';
    }
    for (const auto& w : s["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
    std::cout << "wrote " << cfg.output << "/summary.json (solver " << cfg.solver << ", healthy "
              << (s.value("healthy", false) ? "true" : "false") << ")\n";
    return outcome.exit_code;
}

int do_compare(const std::string& a, const std::string& b, const std::string& se_path) {
    try {
        const auto A = read_series(a), B = read_series(b);
        std::optional<SeriesTable> se;
        if (!se_path.empty()) se = read_series(se_path);
        const auto rep = compare_series(A, B, se ? &*se : nullptr);
        std::cout << rep.to_json().dump(2) << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << error_json("compare", e.what()).dump() << '\n';
        return kConfigError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open quantum system dynamics: stochastic and hierarchy solvers"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    auto* run_cmd = app.add_subcommand("run", "run a solver from a JSON config");
    std::string config;
    Overrides o;
    std::string solver, output;
    std::size_t trajectories = 0, stride = 0;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    run_cmd->add_option("--config", config, "config file")->required();
    auto* solver_opt = run_cmd->add_option("--solver", solver, "solver (overrides config)")
                           ->check(CLI::IsMember(solver_names()));
    auto* traj_opt = run_cmd->add_option("--trajectories", trajectories, "ensemble size")->check(CLI::PositiveNumber);
    auto* seed_opt = run_cmd->add_option("--seed", seed, "master seed");
    auto* out_opt = run_cmd->add_option("--output", output, "output directory");
    run_cmd->add_flag("--validate-noise", o.validate_noise, "write noise-stats.csv");
    auto* threads_opt = run_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    auto* stride_opt = run_cmd->add_option("--stride", stride, "class-2 quadrature stride")->check(CLI::PositiveNumber);

    auto* cmp_cmd = app.add_subcommand("compare", "distances between two series.csv files");
    std::string a, b, se;
    cmp_cmd->add_option("A", a, "first series")->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("B", b, "second series")->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("--stderr", se, "standard errors of A (stderr.csv of an sln run)")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    if (*run_cmd) {
        if (*solver_opt) o.solver = solver;
        if (*traj_opt) o.trajectories = trajectories;
        if (*seed_opt) o.seed = seed;
        if (*out_opt) o.output = output;
        if (*threads_opt) o.threads = threads;
        if (*stride_opt) o.stride = stride;
        return do_run(config, o);
    }
    return do_compare(a, b, se);
}
