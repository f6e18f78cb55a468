#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retsim/lstm.hpp"
#include "retsim/procedure.hpp"

namespace retsim::config {

// The 3 x 3 condition grid plus how the phantom's unpredictable jitter scales
// across it. Jitter grows with driving acceleration (amplitude x rate^2),
// which is what makes faster, larger motion genuinely harder to predict:
//   noise_sd(A, bpm) = jitter_base_mm * (A / 0.1) * (bpm / 8)^2
struct GridConfig {
    std::vector<double> amplitudes_mm = {0.05, 0.1, 0.15};
    std::vector<double> rates_bpm = {8.0, 9.0, 10.0};
    double trace_duration_s = 600.0;
    double sample_rate_hz = 4.0;
    double jitter_base_mm = 0.008;

    double jitter_for(double amplitude_mm, double rate_bpm) const {
        const double r = rate_bpm / 8.0;
        return jitter_base_mm * (amplitude_mm / 0.1) * r * r;
    }
};

struct ExperimentConfig {
    proc::WorldConfig world;
    lstm::TrainConfig train;
    proc::ProcedureConfig procedure;
    GridConfig grid;
    std::uint64_t seed = 42;

    void validate() const;
};

ExperimentConfig default_config();

// JSON round-trip. Absent keys keep their defaults; unknown keys are an
// error so typos do not silently fall back.
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);

ExperimentConfig load_config_file(const std::string& path);

// FNV-1a over the canonical JSON form; embedded in every output artifact.
std::string config_digest(const ExperimentConfig& cfg);

// Standard provenance comment block for CSV artifacts.
std::string provenance_header(const ExperimentConfig& cfg, std::uint64_t seed);

// "0.1x8" -> (0.1, 8)
std::pair<double, double> parse_condition(const std::string& text);
std::string condition_name(double amplitude_mm, double rate_bpm);

// Profile for one grid cell: the base profile with amplitude, rate and the
// scaled jitter substituted.
motion::MotionProfile condition_profile(const ExperimentConfig& cfg,
                                        double amplitude_mm, double rate_bpm);

}  // namespace retsim::config
