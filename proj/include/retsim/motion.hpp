#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace retsim::motion {

// Departures from a pure sinusoid. An all-zero spec gives an exactly periodic
// trace; the defaults elsewhere keep these mild enough that a sine fit is a
// plausible but beatable predictor.
struct DisturbanceSpec {
    double drift_mm_per_s = 0.0;   // slow baseline drift
    double am_depth = 0.0;         // amplitude modulation, [0,1)
    double fm_depth = 0.0;         // frequency (phase) modulation, [0,1)
    double harmonic2_frac = 0.0;   // second-harmonic content, [0,1)
    double noise_sd_mm = 0.0;      // ground-truth jitter
    std::uint64_t seed = 0;

    bool all_zero() const {
        return drift_mm_per_s == 0.0 && am_depth == 0.0 && fm_depth == 0.0 &&
               harmonic2_frac == 0.0 && noise_sd_mm == 0.0;
    }
};

// Axial phantom motion. Depth axis: +z points deeper into the eye, so the ILM
// sits at smaller z than the RPE. All lengths in mm, time in seconds.
struct MotionProfile {
    double amplitude_mm = 0.1;        // half peak-to-peak
    double rate_bpm = 8.0;
    double phase0_rad = 0.0;
    double baseline_ilm_mm = 2.2;
    double retina_thickness_mm = 0.25;
    DisturbanceSpec disturbance;

    void validate() const;  // throws std::invalid_argument
};

struct LayerDepths {
    double ilm_mm = 0.0;
    double rpe_mm = 0.0;
};

struct MotionTrace {
    std::vector<double> t_s;
    std::vector<double> ilm_mm;
    std::vector<double> rpe_mm;

    std::size_t size() const { return t_s.size(); }
};

double bpm_to_hz(double rate_bpm);

// Continuous-time ground truth; pure in (profile, t), jitter keyed on the
// bit pattern of t so any sampling grid sees the same phantom.
LayerDepths ground_truth_at(const MotionProfile& profile, double t_s);

MotionTrace generate_trace(const MotionProfile& profile, double duration_s,
                           double rate_hz);

// CSV with header `t_s,ilm_mm,rpe_mm`, 9 significant digits. Lines starting
// with '#' are provenance comments and are skipped on read.
std::string trace_to_csv(const MotionTrace& trace,
                         const std::string& provenance = "");
MotionTrace trace_from_csv(const std::string& text);

}  // namespace retsim::motion
