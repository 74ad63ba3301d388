#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pointnorm.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Point-level normalization forecasting lab"};
    app.require_subcommand(1);

    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<unsigned> threads;

    auto* run = app.add_subcommand("run", "Train and evaluate the configured experiment for each seed");
    run->add_option("--config", config, "Experiment config file")->required();
    run->add_option("--seed", seed, "Run this seed instead of the config's seed list");
    run->add_option("--out", out, "Output root directory");
    run->add_option("--threads", threads, "Worker threads (above 1 waives bit-determinism)");

    auto* synth = app.add_subcommand("synth", "Write the configured synthetic series as CSV");
    synth->add_option("--config", config, "Experiment config file")->required();
    synth->add_option("--out", out, "Output CSV path");

    bool corrupt = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the configured pipeline");
    gradcheck->add_option("--config", config, "Experiment config file")->required();
    gradcheck->add_flag("--corrupt-gradient", corrupt, "Plant a fault in the analytic gradient (debug)");

    std::string method;
    std::uint64_t d = 0, l = 0, h = 0, slice = 0;
    auto* paramcount = app.add_subcommand("paramcount", "Trainable parameter count of a normalization method");
    paramcount->add_option("method", method, "revin | dish-ts | san | nst | ld | lcd-linear | lcd-as")->required();
    paramcount->add_option("D", d, "Features")->required();
    paramcount->add_option("L", l, "Lookback")->required();
    paramcount->add_option("H", h, "Horizon")->required();
    paramcount->add_option("P", slice, "Slice length (san)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : pointnorm::kExitConfig;
    }

    if (*run) return pointnorm::cmd_run(config, {seed, out, threads}, std::cerr);
    if (*synth) return pointnorm::cmd_synth(config, out, std::cerr);
    if (*gradcheck) return pointnorm::cmd_gradcheck(config, corrupt, std::cout);
    if (*paramcount) return pointnorm::cmd_paramcount(method, d, l, h, slice, std::cout, std::cerr);
    return pointnorm::kExitConfig;
}
