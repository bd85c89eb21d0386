#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Frame-based MEC scheduling simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", mec::cli::kToolVersion);

    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out_dir;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"simulate", "run policies over the sweep and write metrics.csv, pmfs.csv"},
        {"value", "print the baseline value of the configured states"},
        {"learn", "run the online estimators and/or SGD on p_r"},
        {"bound-check", "paired Monte Carlo of baseline vs improved policy"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--seed", seed, "base seed");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--set", overrides, "override a config key, KEY=VALUE (dotted path)")->take_all();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mec::cli::kExitConfig;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    return mec::cli::run_command(command, config_path, overrides, seed, workers, out_dir, std::cout);
}
