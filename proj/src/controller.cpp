#include "retsim/controller.hpp"

#include <cmath>
#include <stdexcept>

#include "retsim/rng.hpp"

namespace retsim::control {

void ControllerConfig::validate() const {
    if (!(k_v > 0.0) || !std::isfinite(k_v)) {
        throw std::invalid_argument("k_v must be > 0");
    }
    if (!(v_max > 0.0) || !std::isfinite(v_max)) {
        throw std::invalid_argument("v_max must be > 0");
    }
    if (!(loop_rate_hz > 0.0) || !std::isfinite(loop_rate_hz)) {
        throw std::invalid_argument("loop_rate_hz must be > 0");
    }
}

double RobotAxis::z() const {
    return std::round(z_true_ / resolution_) * resolution_;
}

void RobotAxis::step(double v_mm_s, double dt_s) {
    if (!std::isfinite(v_mm_s)) throw std::invalid_argument("velocity must be finite");
    if (!(dt_s > 0.0)) throw std::invalid_argument("dt_s must be > 0");
    v_cmd_ = v_mm_s;
    const int dir = v_mm_s > 0.0 ? 1 : (v_mm_s < 0.0 ? -1 : 0);
    if (dir != 0 && last_dir_ != 0 && dir != last_dir_ && repeat_sd_ > 0.0) {
        z_true_ += repeat_sd_ *
                   rng::gaussian(rng::key(seed_, ++reversal_count_, 0xb5u));
    }
    if (dir != 0) last_dir_ = dir;
    z_true_ += v_mm_s * dt_s;
}

double compute_velocity(const ControllerConfig& cfg, double d_current_mm,
                        double d_target_mm) {
    cfg.validate();
    if (!std::isfinite(d_current_mm) || !std::isfinite(d_target_mm)) {
        throw std::invalid_argument("distances must be finite");
    }
    const double err = d_target_mm - d_current_mm;
    if (err == 0.0) return 0.0;
    const double speed = std::min(cfg.k_v * std::abs(err), cfg.v_max);
    return err > 0.0 ? speed : -speed;
}

TrackResult track(const ControllerConfig& cfg, RobotAxis& axis,
                  std::span<const TargetPoint> targets, double duration_s,
                  double staleness_bound_s,
                  const std::function<double(double)>& true_target) {
    cfg.validate();
    if (!(duration_s > 0.0)) throw std::invalid_argument("duration_s must be > 0");

    TrackResult res;
    const double dt = 1.0 / cfg.loop_rate_hz;
    const auto n_ticks = static_cast<std::size_t>(std::floor(duration_s * cfg.loop_rate_hz + 1e-9));
    res.rows.reserve(n_ticks);

    std::size_t next_target = 0;
    bool have_target = false;
    double held_target = 0.0;
    double held_since = 0.0;

    double sum_sq = 0.0, sum_abs = 0.0, max_abs = 0.0;
    std::size_t n_err = 0;

    for (std::size_t i = 0; i < n_ticks; ++i) {
        const double t = static_cast<double>(i) * dt;
        while (next_target < targets.size() && targets[next_target].t_s <= t + 1e-12) {
            held_target = targets[next_target].z_mm;
            held_since = targets[next_target].t_s;
            have_target = true;
            ++next_target;
        }
        if (!have_target || t - held_since > staleness_bound_s) {
            axis.halt();
            res.aborted = true;
            res.abort_reason = "target stream stale";
            break;
        }
        const double v = compute_velocity(cfg, axis.z(), held_target);
        axis.step(v, dt);
        res.rows.push_back({t, held_target, axis.z(), v});
        if (true_target) {
            const double e = (axis.z() - true_target(t + dt)) * 1000.0;
            sum_sq += e * e;
            sum_abs += std::abs(e);
            if (std::abs(e) > max_abs) max_abs = std::abs(e);
            ++n_err;
        }
    }
    if (n_err > 0) {
        res.metrics.rmse_um = std::sqrt(sum_sq / static_cast<double>(n_err));
        res.metrics.mean_abs_um = sum_abs / static_cast<double>(n_err);
        res.metrics.max_ae_um = max_abs;
        res.metrics.n = n_err;
    }
    return res;
}

}  // namespace retsim::control
