#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "retsim/fft.hpp"
#include "retsim/predictor.hpp"

namespace retsim::predictor {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr std::size_t kPadded = 256;

struct LinFit {
    double a = 0.0, b = 0.0, c = 0.0;  // a*sin + b*cos + c
    double sse = 0.0;
};

// Least squares of x against [sin(2*pi*f*tau), cos(2*pi*f*tau), 1].
LinFit fit_at_frequency(const std::vector<double>& x,
                        const std::vector<double>& tau, double f) {
    const std::size_t n = x.size();
    double m[3][3] = {};
    double rhs[3] = {};
    for (std::size_t i = 0; i < n; ++i) {
        const double th = kTwoPi * f * tau[i];
        const double r[3] = {std::sin(th), std::cos(th), 1.0};
        for (int p = 0; p < 3; ++p) {
            rhs[p] += r[p] * x[i];
            for (int q = 0; q < 3; ++q) m[p][q] += r[p] * r[q];
        }
    }
    // Gaussian elimination with partial pivoting on the 3x3 system.
    std::array<int, 3> piv = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int best = col;
        for (int row = col + 1; row < 3; ++row) {
            if (std::abs(m[piv[row]][col]) > std::abs(m[piv[best]][col])) best = row;
        }
        std::swap(piv[col], piv[best]);
        const double d = m[piv[col]][col];
        if (std::abs(d) < 1e-14) {
            // Degenerate frequency; fall back to a constant fit.
            LinFit flat;
            double mean = 0.0;
            for (double v : x) mean += v;
            flat.c = mean / static_cast<double>(n);
            for (double v : x) flat.sse += (v - flat.c) * (v - flat.c);
            return flat;
        }
        for (int row = col + 1; row < 3; ++row) {
            const double fct = m[piv[row]][col] / d;
            for (int q = col; q < 3; ++q) m[piv[row]][q] -= fct * m[piv[col]][q];
            rhs[piv[row]] -= fct * rhs[piv[col]];
        }
    }
    double sol[3];
    for (int col = 2; col >= 0; --col) {
        double acc = rhs[piv[col]];
        for (int q = col + 1; q < 3; ++q) acc -= m[piv[col]][q] * sol[q];
        sol[col] = acc / m[piv[col]][col];
    }
    LinFit out{sol[0], sol[1], sol[2], 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        const double th = kTwoPi * f * tau[i];
        const double e = x[i] - (out.a * std::sin(th) + out.b * std::cos(th) + out.c);
        out.sse += e * e;
    }
    return out;
}

double sse_at(const std::vector<double>& x, const std::vector<double>& tau, double f) {
    return fit_at_frequency(x, tau, f).sse;
}

}  // namespace

void SequenceWindow::validate() const {
    if (values.size() != kWindowLen) {
        throw std::invalid_argument("sequence window must hold exactly 20 values");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite window value");
    }
    if (!std::isfinite(t_last_s)) throw std::invalid_argument("non-finite t_last");
}

SineFit fft_fit(const SequenceWindow& window, double rate_hz) {
    window.validate();
    if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) {
        throw std::invalid_argument("rate_hz must be > 0");
    }
    const std::size_t n = window.values.size();
    double mean = 0.0;
    for (double v : window.values) mean += v;
    mean /= static_cast<double>(n);

    double spread = 0.0;
    for (double v : window.values) spread = std::max(spread, std::abs(v - mean));
    if (spread < 1e-13 * std::max(1.0, std::abs(mean))) {
        return {0.0, 0.0, 0.0, mean};  // constant window
    }

    std::vector<double> demeaned(n);
    for (std::size_t i = 0; i < n; ++i) demeaned[i] = window.values[i] - mean;

    const double dbin = rate_hz / static_cast<double>(kPadded);
    const auto mag = fft::padded_magnitudes(demeaned, kPadded);
    std::size_t kpk = 1;
    for (std::size_t k = 2; k < mag.size(); ++k) {
        if (mag[k] > mag[kpk]) kpk = k;
    }
    double f0 = static_cast<double>(kpk) * dbin;
    if (kpk + 1 < mag.size()) {
        const double a = mag[kpk - 1], b = mag[kpk], c = mag[kpk + 1];
        const double den = a - 2.0 * b + c;
        if (den != 0.0) {
            const double delta = std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
            f0 = (static_cast<double>(kpk) + delta) * dbin;
        }
    }

    // Window-local sample times.
    std::vector<double> tau(n);
    for (std::size_t i = 0; i < n; ++i) tau[i] = static_cast<double>(i) / rate_hz;

    // The peak of a sub-period window is biased, so polish the frequency by
    // least-squares residual: coarse scan around the seed, then golden section
    // inside the best cell.
    const double lo = std::max(f0 - 6.0 * dbin, dbin / 8.0);
    const double hi = std::min(f0 + 6.0 * dbin, rate_hz / 2.0);
    constexpr int kScan = 65;
    double best_f = f0, best_sse = sse_at(demeaned, tau, f0);
    for (int i = 0; i < kScan; ++i) {
        const double f = lo + (hi - lo) * static_cast<double>(i) / (kScan - 1);
        const double s = sse_at(demeaned, tau, f);
        if (s < best_sse) {
            best_sse = s;
            best_f = f;
        }
    }
    const double cell = (hi - lo) / (kScan - 1);
    double ga = std::max(best_f - cell, dbin / 8.0);
    double gb = best_f + cell;
    constexpr double kInvPhi = 0.61803398874989484820;
    double gc = gb - kInvPhi * (gb - ga);
    double gd = ga + kInvPhi * (gb - ga);
    double sc = sse_at(demeaned, tau, gc);
    double sd = sse_at(demeaned, tau, gd);
    for (int it = 0; it < 120; ++it) {
        if (sc < sd) {
            gb = gd;
            gd = gc;
            sd = sc;
            gc = gb - kInvPhi * (gb - ga);
            sc = sse_at(demeaned, tau, gc);
        } else {
            ga = gc;
            gc = gd;
            sc = sd;
            gd = ga + kInvPhi * (gb - ga);
            sd = sse_at(demeaned, tau, gd);
        }
    }
    const double f = 0.5 * (ga + gb);

    const LinFit fit = fit_at_frequency(demeaned, tau, f);
    const double amplitude = std::hypot(fit.a, fit.b);
    const double phase_local = std::atan2(fit.b, fit.a);
    // Shift the phase so the model runs on the caller's clock, where the
    // window's first sample sits at t_last - (n-1)/rate.
    const double t0 = window.t_last_s - static_cast<double>(n - 1) / rate_hz;
    double phase = phase_local - kTwoPi * f * t0;
    phase = std::remainder(phase, kTwoPi);
    return {amplitude, f, phase, mean + fit.c};
}

double sine_predict(const SineFit& fit, double t_next_s) {
    return fit.offset +
           fit.amplitude * std::sin(kTwoPi * fit.frequency_hz * t_next_s + fit.phase_rad);
}

PredictionReport evaluate(std::span<const double> predictions_mm,
                          std::span<const double> truths_mm) {
    if (predictions_mm.empty() || predictions_mm.size() != truths_mm.size()) {
        throw std::invalid_argument("evaluate needs equal, nonzero-length series");
    }
    PredictionReport rep;
    rep.n = predictions_mm.size();
    rep.residuals_um.reserve(rep.n);
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < rep.n; ++i) {
        const double r = (predictions_mm[i] - truths_mm[i]) * 1000.0;
        rep.residuals_um.push_back(r);
        sum_sq += r * r;
        rep.max_ae_um = std::max(rep.max_ae_um, std::abs(r));
    }
    rep.rmse_um = std::sqrt(sum_sq / static_cast<double>(rep.n));
    return rep;
}

}  // namespace retsim::predictor
