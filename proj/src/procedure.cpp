#include "retsim/procedure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <optional>
#include <stdexcept>

#include "retsim/rng.hpp"

namespace retsim::proc {

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double median_of(std::deque<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct ErrorAccum {
    double sum_sq = 0.0, sum_abs = 0.0, max_abs = 0.0;
    std::size_t n = 0;

    void add(double e_mm) {
        const double e = e_mm * 1000.0;
        sum_sq += e * e;
        sum_abs += std::abs(e);
        max_abs = std::max(max_abs, std::abs(e));
        ++n;
    }
    double rmse_um() const { return n ? std::sqrt(sum_sq / static_cast<double>(n)) : 0.0; }
    PhaseMetrics metrics(double offset_um) const {
        PhaseMetrics m;
        m.offset_um = offset_um;
        m.rmse_um = rmse_um();
        m.max_ae_um = max_abs;
        m.mean_abs_um = n ? sum_abs / static_cast<double>(n) : 0.0;
        m.n = n;
        return m;
    }
};

}  // namespace

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::MotionEstimation: return "motion_estimation";
        case Phase::NeedleRegistration: return "needle_registration";
        case Phase::SanityCheck: return "sanity_check";
        case Phase::MotionSync: return "motion_sync";
        case Phase::Insertion: return "insertion";
        case Phase::Completed: return "completed";
        case Phase::Aborted: return "aborted";
    }
    return "?";
}

bool transition_allowed(Phase from, Phase to) {
    const bool running = from >= Phase::MotionEstimation && from <= Phase::Insertion;
    if (to == Phase::Aborted) return running;
    switch (from) {
        case Phase::MotionEstimation: return to == Phase::NeedleRegistration;
        case Phase::NeedleRegistration: return to == Phase::SanityCheck;
        case Phase::SanityCheck:
            return to == Phase::MotionSync || to == Phase::MotionEstimation;
        case Phase::MotionSync: return to == Phase::Insertion;
        case Phase::Insertion: return to == Phase::Completed;
        default: return false;
    }
}

void ProcedureConfig::validate(double retina_thickness_mm) const {
    if (!(insertion_offset_mm > 0.0) || insertion_offset_mm >= retina_thickness_mm) {
        throw std::invalid_argument(
            "insertion_offset_mm must be in (0, retina thickness)");
    }
    if (!(sync_offset_mm > 0.0)) throw std::invalid_argument("sync_offset_mm must be > 0");
    if (!(prep_offset_mm > 0.0)) throw std::invalid_argument("prep_offset_mm must be > 0");
    if (!(e_max_mm >= 0.0)) throw std::invalid_argument("e_max_mm must be >= 0");
    if (settle_window < 1) throw std::invalid_argument("settle_window must be >= 1");
    if (registration_samples < 4) {
        throw std::invalid_argument("registration_samples must be >= 4");
    }
    if (!(injection_duration_s > 0.0) || !(ramp_rate_mm_s > 0.0) ||
        !(safety_bound_mm > 0.0) || !(staleness_bound_s > 0.0) ||
        !(approach_tol_mm > 0.0) || !(approach_timeout_s > 0.0) ||
        !(min_sync_duration_s > 0.0) || max_sync_duration_s < min_sync_duration_s) {
        throw std::invalid_argument("invalid procedure timing/limits");
    }
    if (prediction_lead < 0 || prediction_lead > 1) {
        throw std::invalid_argument("prediction_lead must be 0 or 1");
    }
}

SanityResult sanity_check(double e_mm, double e_max_mm,
                          const std::optional<double>& needle_px,
                          const obs::ImagingGeometry& geometry) {
    SanityResult r;
    if (e_mm > e_max_mm) {
        r.reasons.push_back("prediction error " + fmt("%.6g", e_mm * 1000.0) +
                            " um exceeds threshold");
    }
    if (!needle_px.has_value()) {
        r.reasons.push_back("needle not detected");
    } else if (*needle_px >= geometry.image_height_px / 2.0) {
        r.reasons.push_back("needle in lower half of scan (row " +
                            fmt("%.0f", *needle_px) + ")");
    }
    r.passed = r.reasons.empty();
    return r;
}

ProcedureReport run_procedure(const WorldConfig& world,
                              const ProcedureConfig& cfg,
                              const predictor::OneStepPredictor& pred,
                              std::uint64_t seed) {
    world.profile.validate();
    world.geometry.validate();
    world.noise.validate();
    world.controller.validate();
    cfg.validate(world.profile.retina_thickness_mm);
    if (world.controller.loop_rate_hz < world.obs_rate_hz) {
        throw std::invalid_argument("control loop must run at least as fast as sampling");
    }

    motion::MotionProfile profile = world.profile;
    profile.disturbance.seed = rng::key(seed, 0x01);
    obs::ObservationNoise noise = world.noise;
    noise.seed = rng::key(seed, 0x02);

    const double frame = cfg.robot_frame_offset_mm;
    const auto robot_of = [frame](double depth) { return frame - depth; };
    const auto depth_of = [frame](double z) { return frame - z; };

    control::RobotAxis axis(robot_of(world.needle_start_depth_mm),
                            world.axis_resolution_mm, world.axis_repeat_sd_mm,
                            rng::key(seed, 0x03));

    ProcedureReport rep;
    rep.min_rpe_margin_mm = world.profile.retina_thickness_mm +
                            world.profile.baseline_ilm_mm;  // tightened below

    Phase phase = Phase::MotionEstimation;
    const double dt = 1.0 / world.controller.loop_rate_hz;
    const double obs_dt = 1.0 / world.obs_rate_hz;

    auto log = [&](double t, const std::string& ev, const std::string& detail) {
        rep.events.push_back({t, phase, ev, detail});
    };
    auto enter = [&](Phase next, double t, const std::string& detail) {
        if (!transition_allowed(phase, next)) {
            throw std::logic_error(std::string("illegal transition ") +
                                   phase_name(phase) + " -> " + phase_name(next));
        }
        phase = next;
        rep.events.push_back({t, phase, "phase_enter", detail});
    };

    // Measurement state. Histories are depth-frame mm, held on dropout.
    std::vector<double> ilm_hist, rpe_hist;
    std::deque<double> needle_ring;          // present needle rows
    std::deque<double> thickness_diffs_mm;   // rpe - ilm
    std::deque<double> residuals_mm;         // |prediction - true ilm|
    double last_ilm_valid_t = -1e300, last_needle_valid_t = -1e300;
    std::optional<double> latest_needle_px;
    bool have_pred = false;
    double pred_next_ilm_mm = 0.0;  // depth prediction for the next sample instant
    double target_basis_ilm_mm = 0.0;
    bool have_basis = false;

    std::optional<registration::RegistrationTransform> tf;

    // Maps a predicted depth through geometry + registration, the path the
    // real pipeline takes into the robot frame.
    const auto depth_to_robot = [&](double depth_mm) {
        const double row =
            (depth_mm - world.geometry.window_top_z_mm) / world.geometry.mm_per_px;
        return tf->apply(row);
    };

    std::uint64_t tick = 0, next_obs = 0;
    double phase_start_t = 0.0;
    int approach_ok_ticks = 0;

    // Phase 4 accumulators.
    ErrorAccum sync_acc;
    double sync_steady_from = 0.0;
    ErrorAccum block_acc;
    double prev_block_rmse = -1.0;
    std::uint64_t block_end_obs = 0;
    bool sync_stable = false;

    // Phase 5 state.
    double ramp_span_mm = 0.0, ramp_start_t = 0.0, thickness_est_mm = 0.0;
    bool dwelling = false;
    double dwell_start_t = 0.0;
    bool containment_violated = false;
    ErrorAccum dwell_acc;

    const double global_cap_s = 600.0;
    bool done = false;

    auto do_abort = [&](double t, const std::string& reason) {
        axis.halt();
        rep.aborted = true;
        rep.abort_reason = reason;
        rep.abort_phase = phase;
        log(t, "abort", reason);
        phase = Phase::Aborted;
        done = true;
    };

    log(0.0, "run_start", std::string("seed=") + std::to_string(seed));

    while (!done) {
        const double t = static_cast<double>(tick) * dt;
        if (t > global_cap_s) {
            do_abort(t, "global timeout");
            break;
        }

        // --- 4 Hz observation event ---
        if (t + 1e-12 >= static_cast<double>(next_obs) * obs_dt) {
            const double t_obs = static_cast<double>(next_obs) * obs_dt;
            const auto layers = motion::ground_truth_at(profile, t_obs);
            const auto s = obs::observe(layers, depth_of(axis.z_true()),
                                        world.geometry, noise, t_obs, next_obs);
            if (s.ilm_px) {
                ilm_hist.push_back(obs::px_to_mm(*s.ilm_px, world.geometry));
                last_ilm_valid_t = t_obs;
            } else if (!ilm_hist.empty()) {
                ilm_hist.push_back(ilm_hist.back());
            }
            if (s.rpe_px) {
                rpe_hist.push_back(obs::px_to_mm(*s.rpe_px, world.geometry));
            } else if (!rpe_hist.empty()) {
                rpe_hist.push_back(rpe_hist.back());
            }
            if (!ilm_hist.empty() && !rpe_hist.empty()) {
                thickness_diffs_mm.push_back(rpe_hist.back() - ilm_hist.back());
                if (thickness_diffs_mm.size() > static_cast<std::size_t>(cfg.settle_window)) {
                    thickness_diffs_mm.pop_front();
                }
            }
            latest_needle_px = s.needle_px;
            if (s.needle_px) {
                last_needle_valid_t = t_obs;
                needle_ring.push_back(*s.needle_px);
                if (needle_ring.size() > static_cast<std::size_t>(cfg.registration_samples)) {
                    needle_ring.pop_front();
                }
            }

            // Score the previous one-step prediction against the true ILM.
            if (have_pred && phase == Phase::MotionEstimation) {
                residuals_mm.push_back(std::abs(pred_next_ilm_mm - layers.ilm_mm));
                if (residuals_mm.size() > static_cast<std::size_t>(cfg.settle_window)) {
                    residuals_mm.pop_front();
                }
            }
            if (ilm_hist.size() >= pred.min_history()) {
                const auto& hist = cfg.phase5_track_rpe && phase == Phase::Insertion
                                       ? rpe_hist
                                       : ilm_hist;
                if (hist.size() >= pred.min_history()) {
                    pred_next_ilm_mm = pred.predict_next(hist, t_obs, obs_dt);
                    have_pred = true;
                    target_basis_ilm_mm =
                        cfg.prediction_lead > 0 ? pred_next_ilm_mm : hist.back();
                    have_basis = true;
                }
            }
            ++next_obs;
        }

        // --- staleness guard ---
        const bool never_seen = ilm_hist.empty() && t > cfg.staleness_bound_s;
        if (never_seen ||
            (!ilm_hist.empty() && t - last_ilm_valid_t > cfg.staleness_bound_s)) {
            do_abort(t, "stale layer observations");
            break;
        }

        // --- phase logic: choose the command target (robot frame) ---
        double target = axis.z();  // parked by default
        bool parked = true;

        switch (phase) {
            case Phase::MotionEstimation: {
                if (residuals_mm.size() >= static_cast<std::size_t>(cfg.settle_window) &&
                    needle_ring.size() >= static_cast<std::size_t>(cfg.registration_samples)) {
                    rep.e_mm = *std::max_element(residuals_mm.begin(), residuals_mm.end());
                    log(t, "error_report", fmt("%.6g", rep.e_mm * 1000.0) + " um max abs");
                    enter(Phase::NeedleRegistration, t, "");
                    phase_start_t = t;
                    approach_ok_ticks = 0;

                    std::vector<double> ring(needle_ring.begin(), needle_ring.end());
                    const auto filtered = registration::iqr_filter(ring);
                    rep.registration = registration::build_registration(
                        filtered.value_px, axis.z(), world.geometry.mm_per_px);
                    rep.registration_rejected = filtered.n_rejected;
                    tf = rep.registration;
                    log(t, "registration",
                        fmt("%.9g", tf->b_mm_per_px) + "," + fmt("%.9g", tf->p_init_px) +
                            "," + fmt("%.9g", tf->z_init_mm) + "," +
                            std::to_string(filtered.n_rejected));
                }
                break;
            }
            case Phase::NeedleRegistration: {
                if (!have_basis) break;
                target = depth_to_robot(target_basis_ilm_mm) + cfg.prep_offset_mm;
                parked = false;
                if (std::abs(axis.z() - target) <= cfg.approach_tol_mm) {
                    if (++approach_ok_ticks >= 10) {
                        enter(Phase::SanityCheck, t, "");
                    }
                } else {
                    approach_ok_ticks = 0;
                }
                if (t - phase_start_t > cfg.approach_timeout_s) {
                    do_abort(t, "prep approach timeout");
                }
                break;
            }
            case Phase::SanityCheck: {
                const bool needle_fresh =
                    t - last_needle_valid_t <= cfg.staleness_bound_s;
                const auto res = sanity_check(
                    rep.e_mm, cfg.e_max_mm,
                    needle_fresh ? latest_needle_px : std::nullopt, world.geometry);
                rep.sanity_passed = res.passed;
                if (res.passed) {
                    log(t, "sanity_pass", "");
                    enter(Phase::MotionSync, t, "");
                    phase_start_t = t;
                    sync_acc = {};
                    block_acc = {};
                    prev_block_rmse = -1.0;
                    sync_stable = false;
                    sync_steady_from =
                        t + cfg.settle_window * obs_dt;  // skip approach transient
                    block_end_obs = 0;  // scheduled on first steady sample
                } else {
                    std::string why;
                    for (const auto& r : res.reasons) {
                        if (!why.empty()) why += "; ";
                        why += r;
                    }
                    log(t, "sanity_fail", why);
                    if (cfg.allow_restart && rep.restarts < cfg.max_restarts) {
                        ++rep.restarts;
                        // Manual repositioning: place the needle back on the
                        // prep plane and restart the workflow.
                        const double prep =
                            have_basis ? depth_to_robot(target_basis_ilm_mm) +
                                             cfg.prep_offset_mm
                                       : axis.z();
                        axis = control::RobotAxis(
                            prep, world.axis_resolution_mm, world.axis_repeat_sd_mm,
                            rng::key(seed, 0x30 + rep.restarts));
                        residuals_mm.clear();
                        needle_ring.clear();
                        have_pred = false;
                        log(t, "manual_reposition", "restart " + std::to_string(rep.restarts));
                        enter(Phase::MotionEstimation, t, "restart");
                    } else {
                        do_abort(t, "sanity check failed: " + why);
                    }
                }
                break;
            }
            case Phase::MotionSync: {
                target = depth_to_robot(target_basis_ilm_mm) + cfg.sync_offset_mm;
                parked = false;
                const double elapsed = t - phase_start_t;
                const bool stable_enough =
                    elapsed >= cfg.min_sync_duration_s && sync_stable;
                if (stable_enough || elapsed >= cfg.max_sync_duration_s) {
                    rep.sync_metrics = sync_acc.metrics(cfg.sync_offset_mm * 1000.0);
                    log(t, stable_enough ? "sync_stable" : "sync_duration_cap",
                        "rmse " + fmt("%.6g", rep.sync_metrics.rmse_um) + " um");
                    enter(Phase::Insertion, t, "");
                    phase_start_t = t;
                    thickness_est_mm = thickness_diffs_mm.empty()
                                           ? world.profile.retina_thickness_mm
                                           : median_of(thickness_diffs_mm);
                    ramp_span_mm = cfg.sync_offset_mm + thickness_est_mm -
                                   cfg.insertion_offset_mm;
                    ramp_start_t = t;
                    dwelling = false;
                    containment_violated = false;
                    dwell_acc = {};
                    log(t, "insertion_ramp",
                        fmt("%.6g", ramp_span_mm) + " mm at " +
                            fmt("%.6g", cfg.ramp_rate_mm_s) + " mm/s");
                }
                break;
            }
            case Phase::Insertion: {
                const double d_rpe_pred =
                    cfg.phase5_track_rpe ? target_basis_ilm_mm
                                         : target_basis_ilm_mm + thickness_est_mm;
                const double in_plane =
                    depth_to_robot(d_rpe_pred) + cfg.insertion_offset_mm;
                const double remaining = std::max(
                    ramp_span_mm - cfg.ramp_rate_mm_s * (t - ramp_start_t), 0.0);
                target = in_plane + remaining;
                parked = false;
                if (remaining == 0.0 && !dwelling) {
                    dwelling = true;
                    dwell_start_t = t;
                    log(t, "injection_start", "");
                }
                if (dwelling && t - dwell_start_t >= cfg.injection_duration_s) {
                    rep.insertion_metrics =
                        dwell_acc.metrics(cfg.insertion_offset_mm * 1000.0);
                    rep.injection_success = !containment_violated;
                    log(t, "injection_end",
                        rep.injection_success ? "contained" : "containment violated");
                    enter(Phase::Completed, t, "");
                    axis.halt();
                    done = true;
                }
                break;
            }
            default:
                done = true;
                break;
        }
        if (done || phase == Phase::Completed || phase == Phase::Aborted) break;

        // --- command & plant step ---
        double v = 0.0;
        if (!parked) {
            // Pre-sanity commands must stay on or above the prep plane.
            if (phase <= Phase::SanityCheck && have_basis) {
                const double prep_floor =
                    depth_to_robot(target_basis_ilm_mm) + cfg.prep_offset_mm;
                rep.worst_prep_violation_mm =
                    std::max(rep.worst_prep_violation_mm, prep_floor - target);
                target = std::max(target, prep_floor);
            }
            v = control::compute_velocity(world.controller, axis.z(), target);
        }
        axis.step(v, dt);
        const double t_new = t + dt;
        rep.trace.push_back({t, target, axis.z(), v, phase});

        // --- truth-referenced bookkeeping and safety ---
        const auto truth = motion::ground_truth_at(profile, t_new);
        const double needle_depth = depth_of(axis.z_true());
        rep.min_rpe_margin_mm =
            std::min(rep.min_rpe_margin_mm, truth.rpe_mm - needle_depth);
        if (needle_depth >= truth.rpe_mm) {
            do_abort(t_new, "needle reached RPE depth");
            break;
        }
        if (phase == Phase::MotionSync) {
            const double err =
                axis.z() - (robot_of(truth.ilm_mm) + cfg.sync_offset_mm);
            if (std::abs(err) > cfg.safety_bound_mm) {
                do_abort(t_new, "tracking error exceeded safety bound");
                break;
            }
            if (t_new >= sync_steady_from) {
                sync_acc.add(err);
                block_acc.add(err);
                if (block_end_obs == 0) {
                    block_end_obs = next_obs + cfg.settle_window;
                }
                if (next_obs >= block_end_obs) {
                    const double rmse = block_acc.rmse_um();
                    if (prev_block_rmse >= 0.0 &&
                        std::abs(rmse - prev_block_rmse) <=
                            0.05 * std::max(prev_block_rmse, 1e-9)) {
                        sync_stable = true;
                    }
                    prev_block_rmse = rmse;
                    block_acc = {};
                    block_end_obs = next_obs + cfg.settle_window;
                }
            }
        } else if (phase == Phase::Insertion) {
            const double err =
                axis.z() - (robot_of(truth.rpe_mm) + cfg.insertion_offset_mm);
            if (std::abs(err) > cfg.safety_bound_mm + ramp_span_mm) {
                do_abort(t_new, "tracking error exceeded safety bound");
                break;
            }
            if (dwelling) {
                dwell_acc.add(err);
                if (needle_depth <= truth.ilm_mm) containment_violated = true;
            }
        }
        ++tick;
    }

    rep.final_phase = phase;
    rep.final_v_cmd_mm_s = axis.v_cmd();
    rep.duration_s = static_cast<double>(tick) * dt;
    if (phase == Phase::Completed) log(rep.duration_s, "complete", "");
    return rep;
}

std::string events_to_csv(const std::vector<EventRecord>& events,
                          const std::string& provenance) {
    std::string out = provenance;
    out += "t_s,phase,event,detail\n";
    char buf[64];
    for (const auto& e : events) {
        std::snprintf(buf, sizeof buf, "%.9g", e.t_s);
        out += buf;
        out += ',';
        out += phase_name(e.phase);
        out += ',';
        out += e.event;
        out += ',';
        out += e.detail;
        out += '\n';
    }
    return out;
}

std::string trace_to_csv(const std::vector<TraceRow>& rows,
                         const std::string& provenance) {
    std::string out = provenance;
    out += "t_s,target_mm,needle_mm,v_mm_s,phase\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%s\n", r.t_s,
                      r.target_mm, r.needle_mm, r.v_mm_s, phase_name(r.phase));
        out += buf;
    }
    return out;
}

}  // namespace retsim::proc
