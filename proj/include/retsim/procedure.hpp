#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retsim/controller.hpp"
#include "retsim/motion.hpp"
#include "retsim/observation.hpp"
#include "retsim/predictor.hpp"
#include "retsim/registration.hpp"

namespace retsim::proc {

enum class Phase {
    MotionEstimation = 1,
    NeedleRegistration = 2,
    SanityCheck = 3,
    MotionSync = 4,
    Insertion = 5,
    Completed = 6,
    Aborted = 7,
};

const char* phase_name(Phase p);

// Workflow edges: 1->2->3->4->5->Completed, the sanity-fail restart back-edge
// 3->1, and any running phase ->Aborted.
bool transition_allowed(Phase from, Phase to);

struct ProcedureConfig {
    double prep_offset_mm = 0.5;         // prep plane above the ILM
    double sync_offset_mm = 0.6758;      // phase-4 plane above the ILM
    double insertion_offset_mm = 0.10137;  // phase-5 plane above the RPE
    double e_max_mm = 0.05;              // phase-3 prediction-error threshold
    int settle_window = 40;              // samples for e and rolling metrics
    int registration_samples = 15;
    double injection_duration_s = 20.0;
    double min_sync_duration_s = 15.0;
    double max_sync_duration_s = 40.0;
    double ramp_rate_mm_s = 0.05;        // phase-5 insertion ramp
    double safety_bound_mm = 0.3;        // tracking-error abort threshold
    double staleness_bound_s = 1.0;
    double approach_tol_mm = 0.005;
    double approach_timeout_s = 30.0;
    int prediction_lead = 1;             // 0 holds the last measurement
    bool phase5_track_rpe = false;       // fall back to predicting the RPE channel
    bool allow_restart = false;          // simulate manual repositioning on sanity fail
    int max_restarts = 1;
    double robot_frame_offset_mm = 5.0;  // robot Z = offset - depth

    void validate(double retina_thickness_mm) const;
};

// Everything the closed loop runs against.
struct WorldConfig {
    motion::MotionProfile profile;
    obs::ImagingGeometry geometry;
    obs::ObservationNoise noise;
    control::ControllerConfig controller;
    double axis_resolution_mm = 1e-3;
    double axis_repeat_sd_mm = 3e-3;
    double obs_rate_hz = 4.0;
    double needle_start_depth_mm = 1.2;
};

struct PhaseMetrics {
    double offset_um = 0.0;
    double rmse_um = 0.0;
    double max_ae_um = 0.0;
    double mean_abs_um = 0.0;
    std::size_t n = 0;
};

struct EventRecord {
    double t_s = 0.0;
    Phase phase = Phase::MotionEstimation;
    std::string event;
    std::string detail;
};

struct TraceRow {
    double t_s = 0.0;
    double target_mm = 0.0;  // robot frame
    double needle_mm = 0.0;  // robot frame
    double v_mm_s = 0.0;
    Phase phase = Phase::MotionEstimation;
};

struct SanityResult {
    bool passed = false;
    std::vector<std::string> reasons;
};

// Pure phase-3 decision: prediction error within threshold and the needle
// detected in the upper half of the scan.
SanityResult sanity_check(double e_mm, double e_max_mm,
                          const std::optional<double>& needle_px,
                          const obs::ImagingGeometry& geometry);

struct ProcedureReport {
    Phase final_phase = Phase::Aborted;
    bool injection_success = false;
    bool aborted = false;
    std::string abort_reason;
    Phase abort_phase = Phase::Aborted;
    double e_mm = 0.0;
    bool sanity_passed = false;
    registration::RegistrationTransform registration;
    int registration_rejected = 0;
    int restarts = 0;
    PhaseMetrics sync_metrics;       // phase 4, relative to ILM + sync offset
    PhaseMetrics insertion_metrics;  // phase 5 dwell, relative to RPE + offset
    double min_rpe_margin_mm = 0.0;  // min(rpe depth - needle depth) over all ticks
    double final_v_cmd_mm_s = 0.0;
    double worst_prep_violation_mm = 0.0;  // >0 means a pre-sanity command went below the prep plane
    double duration_s = 0.0;
    std::vector<EventRecord> events;
    std::vector<TraceRow> trace;
};

ProcedureReport run_procedure(const WorldConfig& world,
                              const ProcedureConfig& cfg,
                              const predictor::OneStepPredictor& pred,
                              std::uint64_t seed);

std::string events_to_csv(const std::vector<EventRecord>& events,
                          const std::string& provenance = "");
std::string trace_to_csv(const std::vector<TraceRow>& rows,
                         const std::string& provenance = "");

}  // namespace retsim::proc
