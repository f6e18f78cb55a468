#include <stdexcept>
#include <cmath>

#include "doctest.h"
#include "retsim/motion.hpp"
#include "retsim/procedure.hpp"

using namespace retsim;

namespace {

// Test-only predictor that reads the phantom directly.
class OraclePredictor : public predictor::OneStepPredictor {
  public:
    explicit OraclePredictor(motion::MotionProfile p) : profile_(std::move(p)) {}
    std::size_t min_history() const override { return 20; }
    double predict_next(std::span<const double>, double t_last_s,
                        double dt_s) const override {
        return motion::ground_truth_at(profile_, t_last_s + dt_s).ilm_mm;
    }

  private:
    motion::MotionProfile profile_;
};

class ConstantPredictor : public predictor::OneStepPredictor {
  public:
    explicit ConstantPredictor(double v) : v_(v) {}
    std::size_t min_history() const override { return 20; }
    double predict_next(std::span<const double>, double, double) const override {
        return v_;
    }

  private:
    double v_;
};

proc::WorldConfig quiet_world() {
    proc::WorldConfig w;
    w.profile.amplitude_mm = 0.1;
    w.profile.rate_bpm = 8.0;
    w.noise.sd_px = 0.0;
    w.noise.outlier_prob = 0.0;
    w.noise.dropout_prob = 0.0;
    w.noise.occlusion_extra_sd_px = 0.0;
    w.axis_repeat_sd_mm = 0.0;
    return w;
}

}  // namespace

TEST_CASE("transition table admits exactly the workflow edges") {
    using proc::Phase;
    const Phase all[] = {Phase::MotionEstimation, Phase::NeedleRegistration,
                         Phase::SanityCheck,      Phase::MotionSync,
                         Phase::Insertion,        Phase::Completed,
                         Phase::Aborted};
    auto expected = [](Phase a, Phase b) {
        if (b == Phase::Aborted) {
            return a != Phase::Completed && a != Phase::Aborted;
        }
        if (a == Phase::MotionEstimation) return b == Phase::NeedleRegistration;
        if (a == Phase::NeedleRegistration) return b == Phase::SanityCheck;
        if (a == Phase::SanityCheck) {
            return b == Phase::MotionSync || b == Phase::MotionEstimation;
        }
        if (a == Phase::MotionSync) return b == Phase::Insertion;
        if (a == Phase::Insertion) return b == Phase::Completed;
        return false;
    };
    for (Phase a : all) {
        for (Phase b : all) {
            CHECK(proc::transition_allowed(a, b) == expected(a, b));
        }
    }
}

TEST_CASE("sanity check decisions") {
    obs::ImagingGeometry g;  // 1024 rows
    auto r = proc::sanity_check(0.0, 0.05, 100.0, g);
    CHECK(r.passed);

    r = proc::sanity_check(0.0, 0.05, 700.0, g);
    CHECK_FALSE(r.passed);
    REQUIRE(r.reasons.size() == 1);
    CHECK(r.reasons[0].find("lower half") != std::string::npos);

    r = proc::sanity_check(0.1, 0.05, 100.0, g);
    CHECK_FALSE(r.passed);
    CHECK(r.reasons[0].find("prediction error") != std::string::npos);

    r = proc::sanity_check(0.0, 0.05, std::nullopt, g);
    CHECK_FALSE(r.passed);
    CHECK(r.reasons[0].find("not detected") != std::string::npos);

    // Boundary: half the 1024-row image.
    CHECK(proc::sanity_check(0.0, 0.05, 511.0, g).passed);
    CHECK_FALSE(proc::sanity_check(0.0, 0.05, 512.0, g).passed);
}

TEST_CASE("perfect predictor on a noiseless phantom: e = 0, completes, succeeds") {
    const auto world = quiet_world();
    proc::ProcedureConfig cfg;
    const OraclePredictor oracle(world.profile);
    const auto rep = proc::run_procedure(world, cfg, oracle, 1);
    CHECK(rep.final_phase == proc::Phase::Completed);
    CHECK(rep.e_mm < 1e-12);
    CHECK(rep.sanity_passed);
    CHECK(rep.injection_success);
    CHECK_FALSE(rep.aborted);
    CHECK(rep.min_rpe_margin_mm > 0.0);
    CHECK(rep.worst_prep_violation_mm <= 0.0);
    CHECK(rep.final_v_cmd_mm_s == 0.0);  // halted on completion? axis keeps last v
}

TEST_CASE("phase order follows the workflow in a successful run") {
    const auto world = quiet_world();
    proc::ProcedureConfig cfg;
    const OraclePredictor oracle(world.profile);
    const auto rep = proc::run_procedure(world, cfg, oracle, 2);
    std::vector<proc::Phase> entries;
    for (const auto& e : rep.events) {
        if (e.event == "phase_enter") entries.push_back(e.phase);
    }
    REQUIRE(entries.size() == 5);
    CHECK(entries[0] == proc::Phase::NeedleRegistration);
    CHECK(entries[1] == proc::Phase::SanityCheck);
    CHECK(entries[2] == proc::Phase::MotionSync);
    CHECK(entries[3] == proc::Phase::Insertion);
    CHECK(entries[4] == proc::Phase::Completed);
    bool saw_start = false, saw_end = false;
    for (const auto& e : rep.events) {
        saw_start = saw_start || e.event == "injection_start";
        saw_end = saw_end || e.event == "injection_end";
    }
    CHECK(saw_start);
    CHECK(saw_end);
}

TEST_CASE("e_max = 0 stops every run at the sanity check") {
    auto world = quiet_world();
    world.noise.sd_px = 2.0;  // any noise makes e > 0
    proc::ProcedureConfig cfg;
    cfg.e_max_mm = 0.0;
    const predictor::FftPredictor fft;
    const auto rep = proc::run_procedure(world, cfg, fft, 3);
    CHECK(rep.final_phase == proc::Phase::Aborted);
    CHECK(rep.abort_phase == proc::Phase::SanityCheck);
    CHECK(rep.abort_reason.find("prediction error") != std::string::npos);
    CHECK(rep.final_v_cmd_mm_s == 0.0);
}

TEST_CASE("constant-output predictor fails the sanity check") {
    const auto world = quiet_world();  // amplitude 0.1: truth moves, prediction doesn't
    proc::ProcedureConfig cfg;         // e_max 50 um < 100 um excursions
    const ConstantPredictor constant(world.profile.baseline_ilm_mm);
    const auto rep = proc::run_procedure(world, cfg, constant, 4);
    CHECK(rep.final_phase == proc::Phase::Aborted);
    CHECK(rep.abort_phase == proc::Phase::SanityCheck);
    CHECK(rep.e_mm > cfg.e_max_mm);
    CHECK(rep.final_v_cmd_mm_s == 0.0);
}

TEST_CASE("needle detected in the lower half fails the sanity check") {
    auto world = quiet_world();
    world.geometry.window_top_z_mm = -0.5;  // same scene, window shifted up
    proc::ProcedureConfig cfg;
    const OraclePredictor oracle(world.profile);
    const auto rep = proc::run_procedure(world, cfg, oracle, 5);
    CHECK(rep.final_phase == proc::Phase::Aborted);
    CHECK(rep.abort_reason.find("lower half") != std::string::npos);

    // With restarts allowed it tries again, then still aborts.
    proc::ProcedureConfig cfg2;
    cfg2.allow_restart = true;
    cfg2.max_restarts = 1;
    const auto rep2 = proc::run_procedure(world, cfg2, oracle, 5);
    CHECK(rep2.restarts == 1);
    CHECK(rep2.final_phase == proc::Phase::Aborted);
}

TEST_CASE("no observations ever: stale abort with zero velocity") {
    auto world = quiet_world();
    world.noise.dropout_prob = 1.0;
    proc::ProcedureConfig cfg;
    const OraclePredictor oracle(world.profile);
    const auto rep = proc::run_procedure(world, cfg, oracle, 6);
    CHECK(rep.final_phase == proc::Phase::Aborted);
    CHECK(rep.abort_reason.find("stale") != std::string::npos);
    CHECK(rep.final_v_cmd_mm_s == 0.0);
    CHECK(rep.duration_s < 5.0);
}

TEST_CASE("unreachable prep plane aborts on approach timeout") {
    auto world = quiet_world();
    world.controller.v_max = 1e-4;  // effectively frozen
    proc::ProcedureConfig cfg;
    cfg.approach_timeout_s = 5.0;
    const OraclePredictor oracle(world.profile);
    const auto rep = proc::run_procedure(world, cfg, oracle, 7);
    CHECK(rep.final_phase == proc::Phase::Aborted);
    CHECK(rep.abort_reason.find("timeout") != std::string::npos);
    CHECK(rep.final_v_cmd_mm_s == 0.0);
}

TEST_CASE("tiny safety bound aborts during motion sync") {
    const auto world = quiet_world();
    proc::ProcedureConfig cfg;
    cfg.safety_bound_mm = 1e-9;
    const OraclePredictor oracle(world.profile);
    const auto rep = proc::run_procedure(world, cfg, oracle, 8);
    CHECK(rep.final_phase == proc::Phase::Aborted);
    CHECK(rep.abort_phase == proc::Phase::MotionSync);
    CHECK(rep.abort_reason.find("safety") != std::string::npos);
    CHECK(rep.final_v_cmd_mm_s == 0.0);
}

TEST_CASE("pre-sanity commands never go below the prep plane") {
    auto world = quiet_world();
    world.noise.sd_px = 3.0;
    proc::ProcedureConfig cfg;
    const predictor::FftPredictor fft;
    const auto rep = proc::run_procedure(world, cfg, fft, 9);
    CHECK(rep.worst_prep_violation_mm <= 1e-12);
}

TEST_CASE("runs are deterministic per seed") {
    auto world = quiet_world();
    world.noise.sd_px = 3.0;
    world.noise.outlier_prob = 0.01;
    proc::ProcedureConfig cfg;
    const predictor::FftPredictor fft;
    const auto a = proc::run_procedure(world, cfg, fft, 77);
    const auto b = proc::run_procedure(world, cfg, fft, 77);
    CHECK(proc::events_to_csv(a.events) == proc::events_to_csv(b.events));
    CHECK(proc::trace_to_csv(a.trace) == proc::trace_to_csv(b.trace));
    const auto c = proc::run_procedure(world, cfg, fft, 78);
    CHECK(proc::events_to_csv(a.events) != proc::events_to_csv(c.events));
}

TEST_CASE("invalid insertion offset is rejected at validation") {
    proc::ProcedureConfig cfg;
    cfg.insertion_offset_mm = 0.3;  // >= default 0.25 mm thickness
    CHECK_THROWS_AS(cfg.validate(0.25), std::invalid_argument);
    cfg.insertion_offset_mm = 0.0;
    CHECK_THROWS_AS(cfg.validate(0.25), std::invalid_argument);
}

TEST_CASE("registration record lands in the event log") {
    const auto world = quiet_world();
    proc::ProcedureConfig cfg;
    const OraclePredictor oracle(world.profile);
    const auto rep = proc::run_procedure(world, cfg, oracle, 10);
    bool found = false;
    for (const auto& e : rep.events) {
        if (e.event == "registration") {
            found = true;
            CHECK(e.detail.find(',') != std::string::npos);
        }
    }
    CHECK(found);
    CHECK(rep.registration.b_mm_per_px == world.geometry.mm_per_px);
}
