#include <stdexcept>
#include <cmath>

#include "doctest.h"
#include "retsim/controller.hpp"
#include "retsim/rng.hpp"

using namespace retsim;

namespace {

control::ControllerConfig default_cfg() { return {}; }  // k_v 10, v_max 0.5, 50 Hz

}  // namespace

TEST_CASE("compute_velocity: law and clamp") {
    const auto cfg = default_cfg();
    CHECK(control::compute_velocity(cfg, 2.0, 2.0) == 0.0);
    CHECK(control::compute_velocity(cfg, 0.0, 1.0) == 0.5);    // clamped
    CHECK(control::compute_velocity(cfg, 1.0, 0.0) == -0.5);   // clamped, signed
    CHECK(control::compute_velocity(cfg, 0.0, 0.02) ==
          doctest::Approx(0.2).epsilon(1e-15));  // linear regime
}

TEST_CASE("compute_velocity: clamp, odd symmetry, monotonicity under fuzzing") {
    const auto cfg = default_cfg();
    rng::Stream s(1);
    double prev_e = 0.0, prev_v = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double d = s.next_uniform(-10.0, 10.0);
        const double t = s.next_uniform(-10.0, 10.0);
        const double v = control::compute_velocity(cfg, d, t);
        CHECK(std::abs(v) <= cfg.v_max);
        const double vm = control::compute_velocity(cfg, t, d);  // mirrored error
        CHECK(v == -vm);
    }
    // Larger error, larger speed, below the clamp.
    for (int i = 0; i < 1000; ++i) {
        const double e = s.next_uniform(0.0, cfg.v_max / cfg.k_v);
        const double v = control::compute_velocity(cfg, 0.0, e);
        if (i > 0 && e > prev_e) CHECK(v >= prev_v);
        prev_e = e;
        prev_v = v;
    }
}

TEST_CASE("step_axis: holds at zero velocity and quantizes reads") {
    control::RobotAxis axis(1.0, 1e-3, 0.0, 4);
    axis.step(0.0, 0.01);
    CHECK(axis.z() == 1.0);
    // 0.1 mm/s for 10 ms is exactly one 1 um step.
    axis.step(0.1, 0.01);
    CHECK(axis.z() == doctest::Approx(1.001).epsilon(1e-12));
}

TEST_CASE("step_axis: reversal repeatability noise is zero-mean, sd 3 um") {
    control::RobotAxis axis(0.0, 1e-9, 3e-3, 123);
    double sum = 0.0, sum2 = 0.0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        const double before = axis.z_true();
        const double v = (i % 2 == 0) ? 1e-6 : -1e-6;
        axis.step(v, 1e-3);
        const double jump = axis.z_true() - before - v * 1e-3;
        if (i > 0) {  // every step after the first reverses direction
            sum += jump;
            sum2 += jump * jump;
        }
    }
    const double mean = sum / (n - 1);
    const double sd = std::sqrt(sum2 / (n - 1) - mean * mean);
    CHECK(std::abs(mean) < 3e-4);
    CHECK(sd == doctest::Approx(3e-3).epsilon(0.1));
}

TEST_CASE("constant target: discrete first-order decay on an ideal axis") {
    // In the linear regime the error decays by (1 - k_v dt) per tick.
    const auto cfg = default_cfg();
    control::RobotAxis axis(0.0, 1e-12, 0.0, 0);
    const control::TargetPoint target{0.0, 0.04};  // inside linear regime
    const auto res = control::track(cfg, axis, {&target, 1}, 0.5, 10.0,
                                    [](double) { return 0.04; });
    CHECK_FALSE(res.aborted);
    const double expect = 0.04 * std::pow(1.0 - 10.0 / 50.0, 25);
    CHECK(std::abs(0.04 - res.rows.back().needle_mm) ==
          doctest::Approx(expect).epsilon(1e-6));
    CHECK(std::abs(0.04 - res.rows.back().needle_mm) < 2e-3);  // < 2 um at 5/k_v
}

TEST_CASE("constant target from 0.5 mm: no overshoot beyond resolution+repeatability") {
    const auto cfg = default_cfg();
    control::RobotAxis axis(0.0, 1e-3, 0.0, 0);
    const control::TargetPoint target{0.0, 0.5};
    const auto res = control::track(cfg, axis, {&target, 1}, 3.0, 10.0,
                                    [](double) { return 0.5; });
    CHECK_FALSE(res.aborted);
    double worst_over = 0.0;
    for (const auto& r : res.rows) worst_over = std::max(worst_over, r.needle_mm - 0.5);
    CHECK(worst_over <= 1e-3 + 1e-12);  // resolution; repeatability disabled here
    // Clamp phase first: after 0.9 s + 5/k_v the error is inside 2 um + read quantization.
    CHECK(std::abs(0.5 - res.rows.back().needle_mm) < 2e-3);
    // Error is non-increasing after the first tick (zero plant noise).
    double prev = 1e300;
    for (const auto& r : res.rows) {
        const double e = std::abs(0.5 - r.needle_mm);
        CHECK(e <= prev + 1e-12);
        prev = e;
    }
}

TEST_CASE("v_max -> 0 freezes the needle") {
    auto cfg = default_cfg();
    cfg.v_max = 1e-9;
    control::RobotAxis axis(0.0, 1e-3, 0.0, 0);
    const control::TargetPoint target{0.0, 0.5};
    const auto res = control::track(cfg, axis, {&target, 1}, 2.0, 10.0);
    CHECK(std::abs(res.rows.back().needle_mm) < 1e-6);
}

TEST_CASE("sinusoidal target at 4 Hz updates tracks within the ZOH bound") {
    const auto cfg = default_cfg();
    control::RobotAxis axis(0.0, 1e-3, 3e-3, 5);
    const double amp = 0.1, f = 8.0 / 60.0;
    std::vector<control::TargetPoint> targets;
    for (int k = 0; k * 0.25 <= 30.0; ++k) {
        const double t = k * 0.25;
        targets.push_back({t, amp * std::sin(2 * M_PI * f * t)});
    }
    const auto res = control::track(cfg, axis, targets, 30.0, 1.0,
                                    [&](double t) { return amp * std::sin(2 * M_PI * f * t); });
    CHECK_FALSE(res.aborted);
    // Steady state: bounded by target speed * hold interval plus slack.
    const double bound = 2 * M_PI * f * amp * 0.25 * 1000.0;
    CHECK(res.metrics.rmse_um < bound);
    CHECK(res.metrics.max_ae_um < 2.5 * bound);
}

TEST_CASE("stale target stream halts and aborts") {
    const auto cfg = default_cfg();
    control::RobotAxis axis(0.0, 1e-3, 0.0, 0);
    std::vector<control::TargetPoint> targets = {{0.0, 0.2}, {0.25, 0.2}};
    const auto res = control::track(cfg, axis, targets, 5.0, 1.0);
    CHECK(res.aborted);
    CHECK(res.abort_reason == "target stream stale");
    CHECK(axis.v_cmd() == 0.0);
}

TEST_CASE("deterministic replay") {
    const auto cfg = default_cfg();
    std::vector<control::TargetPoint> targets;
    for (int k = 0; k <= 40; ++k) {
        targets.push_back({k * 0.25, 0.05 * std::sin(0.8 * k)});
    }
    auto run = [&]() {
        control::RobotAxis axis(0.0, 1e-3, 3e-3, 77);
        return control::track(cfg, axis, targets, 10.0, 1.0);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].needle_mm == b.rows[i].needle_mm);
        CHECK(a.rows[i].v_mm_s == b.rows[i].v_mm_s);
    }
}

TEST_CASE("config validation") {
    control::ControllerConfig cfg;
    cfg.k_v = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.v_max = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
