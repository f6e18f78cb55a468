#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "retsim/harness.hpp"
#include "retsim/version.hpp"

namespace {

using retsim::config::ExperimentConfig;
using retsim::harness::CmdOptions;

ExperimentConfig load(const std::string& config_path) {
    if (config_path.empty()) return retsim::config::default_config();
    return retsim::config::load_config_file(config_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(retsim::kToolName) +
                 " - deterministic subretinal-injection motion-compensation "
                 "simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(retsim::kVersion));

    std::string config_path;
    CmdOptions opt;
    std::uint64_t seed_value = 0;
    bool seed_given = false;

    app.add_option("--config", config_path, "Experiment config (JSON); defaults when omitted")
        ->type_name("PATH");
    app.add_option("--out", opt.out_dir, "Output directory")->type_name("DIR");
    auto* seed_opt = app.add_option("--seed", seed_value, "Override the config seed");
    app.add_flag("--verbose", opt.verbose, "Progress on stderr");

    auto* gen = app.add_subcommand("generate", "Write per-condition phantom traces and sample logs");
    auto* train = app.add_subcommand("train", "Train per-condition and pooled models from traces");
    auto* eval = app.add_subcommand("evaluate", "Score predictors on held-out segments");
    eval->add_option("--model", opt.model, "Restrict to one predictor (lstm|fft|hold)");
    auto* run = app.add_subcommand("run", "Execute the five-phase closed-loop procedure");
    run->add_option("--seeds", opt.seeds, "Number of batch runs");
    run->add_option("--model", opt.model, "Predictor (lstm|fft|hold)");
    run->add_option("--condition", opt.condition, "Condition AMPxBPM, e.g. 0.1x8");
    auto* report = app.add_subcommand("report", "Merge output directories into the result tables");
    std::vector<std::string> report_inputs;
    report->add_option("inputs", report_inputs, "Directories produced by the other commands")
        ->required();

    CLI11_PARSE(app, argc, argv);
    seed_given = seed_opt->count() > 0;
    if (seed_given) opt.seed_override = seed_value;

    try {
        const ExperimentConfig cfg = load(config_path);
        if (gen->parsed()) return retsim::harness::cmd_generate(cfg, opt);
        if (train->parsed()) return retsim::harness::cmd_train(cfg, opt);
        if (eval->parsed()) return retsim::harness::cmd_evaluate(cfg, opt);
        if (run->parsed()) return retsim::harness::cmd_run(cfg, opt);
        if (report->parsed()) return retsim::harness::cmd_report(report_inputs, opt);
    } catch (const retsim::harness::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return retsim::harness::kIoError;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid: %s\n", e.what());
        return retsim::harness::kValidationError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return retsim::harness::kValidationError;
    }
    return retsim::harness::kValidationError;
}
