#pragma once

#include <span>
#include <vector>

namespace retsim::predictor {

// The model's fixed input size: 20 consecutive ILM z-positions.
inline constexpr std::size_t kWindowLen = 20;

struct SequenceWindow {
    std::vector<double> values;  // mm, oldest first, exactly kWindowLen long
    double t_last_s = 0.0;

    void validate() const;  // throws on wrong length / non-finite entries
};

// z(t) = offset + amplitude * sin(2*pi*frequency*t + phase), t in absolute
// seconds of the window's own clock.
struct SineFit {
    double amplitude = 0.0;
    double frequency_hz = 0.0;
    double phase_rad = 0.0;
    double offset = 0.0;
};

struct PredictionReport {
    double rmse_um = 0.0;
    double max_ae_um = 0.0;
    std::size_t n = 0;
    std::vector<double> residuals_um;
};

// Sine-wave baseline. The dominant frequency is seeded by the magnitude peak
// of the zero-padded FFT with parabolic interpolation, then polished by a
// bracketed least-squares search; amplitude, phase and offset come from the
// linear fit at the final frequency. The sample times are t_last - (n-1-i)/rate.
SineFit fft_fit(const SequenceWindow& window, double rate_hz);

double sine_predict(const SineFit& fit, double t_next_s);

// RMSE / MaxAE over paired series (mm in, um out).
PredictionReport evaluate(std::span<const double> predictions_mm,
                          std::span<const double> truths_mm);

// Common contract for the one-step-ahead forecasters the procedure loop can
// run. history holds measurements oldest-first; the prediction is for
// t_last_s + dt_s.
class OneStepPredictor {
  public:
    virtual ~OneStepPredictor() = default;
    virtual std::size_t min_history() const = 0;
    virtual double predict_next(std::span<const double> history_mm,
                                double t_last_s, double dt_s) const = 0;
};

// Last-value hold, the ablation baseline.
class HoldPredictor : public OneStepPredictor {
  public:
    std::size_t min_history() const override { return 1; }
    double predict_next(std::span<const double> history_mm, double,
                        double) const override {
        return history_mm.back();
    }
};

class FftPredictor : public OneStepPredictor {
  public:
    std::size_t min_history() const override { return kWindowLen; }
    double predict_next(std::span<const double> history_mm, double t_last_s,
                        double dt_s) const override {
        SequenceWindow w;
        w.values.assign(history_mm.end() - kWindowLen, history_mm.end());
        w.t_last_s = t_last_s;
        const SineFit fit = fft_fit(w, 1.0 / dt_s);
        return sine_predict(fit, t_last_s + dt_s);
    }
};

}  // namespace retsim::predictor
