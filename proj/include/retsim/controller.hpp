#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace retsim::control {

struct ControllerConfig {
    double k_v = 10.0;          // 1/s
    double v_max = 0.5;         // mm/s
    double loop_rate_hz = 50.0;

    void validate() const;
};

// 1D axis plant. The physical position moves continuously; position reads are
// quantized to the stage resolution, and a direction reversal perturbs the
// true position with the bidirectional-repeatability noise.
class RobotAxis {
  public:
    RobotAxis() = default;
    RobotAxis(double z0_mm, double resolution_mm, double repeatability_sd_mm,
              std::uint64_t seed)
        : z_true_(z0_mm), resolution_(resolution_mm),
          repeat_sd_(repeatability_sd_mm), seed_(seed) {}

    // Quantized position read (what the controller and logs see).
    double z() const;
    double z_true() const { return z_true_; }
    double v_cmd() const { return v_cmd_; }
    double resolution() const { return resolution_; }

    void step(double v_mm_s, double dt_s);
    void halt() { v_cmd_ = 0.0; }

  private:
    double z_true_ = 0.0;
    double resolution_ = 1e-3;
    double repeat_sd_ = 3e-3;
    std::uint64_t seed_ = 0;
    double v_cmd_ = 0.0;
    int last_dir_ = 0;
    std::uint64_t reversal_count_ = 0;
};

// v = sign(d_target - d_current) * min(k_v * |d_target - d_current|, v_max)
double compute_velocity(const ControllerConfig& cfg, double d_current_mm,
                        double d_target_mm);

inline void step_axis(RobotAxis& axis, double v_mm_s, double dt_s) {
    axis.step(v_mm_s, dt_s);
}

struct TargetPoint {
    double t_s = 0.0;
    double z_mm = 0.0;
};

struct TrackRow {
    double t_s = 0.0;
    double target_mm = 0.0;
    double needle_mm = 0.0;
    double v_mm_s = 0.0;
};

struct TrackMetrics {
    double rmse_um = 0.0;
    double max_ae_um = 0.0;
    double mean_abs_um = 0.0;
    std::size_t n = 0;
};

struct TrackResult {
    std::vector<TrackRow> rows;
    TrackMetrics metrics;  // vs the continuous true target when provided
    bool aborted = false;
    std::string abort_reason;
};

// Runs the proportional loop against a discretely-updated target stream,
// holding the latest target between updates. A stream gap longer than
// staleness_bound_s halts the axis and aborts. `true_target`, when set,
// supplies the continuous reference the error metrics are computed against.
TrackResult track(const ControllerConfig& cfg, RobotAxis& axis,
                  std::span<const TargetPoint> targets, double duration_s,
                  double staleness_bound_s,
                  const std::function<double(double)>& true_target = {});

}  // namespace retsim::control
