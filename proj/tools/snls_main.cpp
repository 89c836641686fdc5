#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "snls/errors.hpp"
#include "snls/harness/config.hpp"
#include "snls/harness/record.hpp"
#include "snls/harness/run.hpp"
#include "snls/version.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_numerical = 2;

void print_config(const snls::harness::ExperimentConfig& config) {
    for (const auto& [k, v] : snls::harness::echo(config)) std::cout << "  " << k << " = " << v << '\n';
}

} // namespace

int main(int argc, char** argv) {
    using namespace snls::harness;

    CLI::App app{"Structure-preserving integrators for the stochastic NLS lattice"};
    app.set_version_flag("--version", std::string(snls::version));
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;

    auto* run_cmd = app.add_subcommand("run", "run one experiment and write its CSV");
    run_cmd->add_option("config", config_path, "config file")->required();
    run_cmd->add_option("--out", out_path, "CSV path (overrides the config's output key)");
    run_cmd->add_option("--seed", seed, "base seed");
    run_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    auto* list_cmd = app.add_subcommand("list-experiments", "list experiment kinds");

    auto* verify_cmd = app.add_subcommand("verify", "parse and validate a config without running it");
    verify_cmd->add_option("config", config_path, "config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_config;
    }

    if (*list_cmd) {
        for (const auto& info : experiments) std::cout << info.name << "\t" << info.summary << '\n';
        return exit_ok;
    }

    ExperimentConfig config;
    try {
        config = load_config(config_path);
    } catch (const snls::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const snls::InputError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    }

    if (*verify_cmd) {
        std::cout << config_path << ": ok\n";
        print_config(config);
        return exit_ok;
    }

    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    if (!out_path.empty()) config.output = out_path;

    RunRecord rec;
    try {
        rec = run(config);
    } catch (const snls::InputError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    }
    // stdout carries the CSV when no output path is set
    std::ostream& log = config.output.empty() ? std::cerr : std::cout;
    log << rec.summary;
    for (const auto& note : rec.notes) log << "note: " << note << '\n';

    if (!config.output.empty()) {
        try {
            emit_csv(rec, config.output);
        } catch (const IoError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return exit_numerical;
        }
        std::cout << "wrote " << rec.rows.size() << " rows to " << config.output << " in " << rec.wall_seconds
                  << " s\n";
    } else {
        std::cout << to_csv(rec);
    }
    if (rec.failed) {
        std::cerr << "numerical failure: " << rec.failure << '\n';
        return exit_numerical;
    }
    return exit_ok;
}
