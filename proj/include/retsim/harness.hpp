#pragma once

#include <optional>
#include <string>
#include <vector>

#include "retsim/config.hpp"

namespace retsim::harness {

// Exit codes shared by the CLI.
inline constexpr int kOk = 0;
inline constexpr int kValidationError = 1;
inline constexpr int kProcedureAbort = 2;
inline constexpr int kIoError = 3;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CmdOptions {
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed_override;
    int seeds = 1;
    std::string model;      // "", "lstm", "fft", "hold"
    std::string condition;  // "", or "AMPxBPM"
    bool verbose = false;
};

// One observed ILM stream derived from a ground-truth trace through the
// noise channel (needle out of frame), with the truth kept for scoring.
struct SeriesData {
    std::vector<double> t_s;
    std::vector<double> obs_mm;
    std::vector<double> truth_mm;
};

std::uint64_t condition_seed(const config::ExperimentConfig& cfg,
                             std::size_t i, std::size_t j);

SeriesData derive_observed(const config::ExperimentConfig& cfg,
                           const motion::MotionTrace& trace,
                           std::uint64_t cond_seed);

struct GridRow {
    double amp_mm = 0.0;
    double rate_bpm = 0.0;
    std::string model;
    double rmse_um = 0.0;
    double maxae_um = 0.0;
};

// Held-out-tail evaluation curves for one condition.
struct EvalSeries {
    std::vector<double> t_s;
    std::vector<double> truth_mm;
    std::vector<double> lstm_mm;  // empty when no model given
    std::vector<double> fft_mm;
    std::vector<double> hold_mm;
};

EvalSeries evaluate_tail(const config::ExperimentConfig& cfg,
                         const lstm::LstmModel* model, const SeriesData& series);

// Subcommands; all deterministic in (config, seeds).
int cmd_generate(const config::ExperimentConfig& cfg, const CmdOptions& opt);
int cmd_train(const config::ExperimentConfig& cfg, const CmdOptions& opt);
int cmd_evaluate(const config::ExperimentConfig& cfg, const CmdOptions& opt);
int cmd_run(const config::ExperimentConfig& cfg, const CmdOptions& opt);
int cmd_report(const std::vector<std::string>& in_dirs, const CmdOptions& opt);

}  // namespace retsim::harness
