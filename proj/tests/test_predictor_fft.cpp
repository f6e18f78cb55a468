#include <stdexcept>
#include <cmath>

#include "doctest.h"
#include "retsim/predictor.hpp"
#include "retsim/rng.hpp"

using namespace retsim;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

predictor::SequenceWindow make_window(double amp, double f_hz, double phase,
                                      double offset, double rate_hz) {
    predictor::SequenceWindow w;
    for (std::size_t i = 0; i < predictor::kWindowLen; ++i) {
        const double t = static_cast<double>(i) / rate_hz;
        w.values.push_back(offset + amp * std::sin(kTwoPi * f_hz * t + phase));
    }
    w.t_last_s = static_cast<double>(predictor::kWindowLen - 1) / rate_hz;
    return w;
}

}  // namespace

TEST_CASE("constant window degenerates to amplitude 0, frequency 0") {
    predictor::SequenceWindow w;
    w.values.assign(predictor::kWindowLen, 2.2);
    w.t_last_s = 4.75;
    const auto fit = predictor::fft_fit(w, 4.0);
    CHECK(fit.amplitude == 0.0);
    CHECK(fit.frequency_hz == 0.0);
    CHECK(fit.offset == doctest::Approx(2.2).epsilon(1e-15));
    CHECK(predictor::sine_predict(fit, 5.0) == doctest::Approx(2.2).epsilon(1e-15));
}

TEST_CASE("on-bin sine recovered to machine precision") {
    // 1.0 Hz at 4 Hz sampling: exactly 5 cycles in the 20-sample window and
    // exactly bin 64 of the padded spectrum.
    rng::Stream s(2);
    for (int trial = 0; trial < 25; ++trial) {
        const double phase = s.next_uniform(0.0, kTwoPi);
        const double amp = 0.1;
        const auto w = make_window(amp, 1.0, phase, 2.2, 4.0);
        const auto fit = predictor::fft_fit(w, 4.0);
        const double t_next = 5.0;
        const double truth = 2.2 + amp * std::sin(kTwoPi * 1.0 * t_next + phase);
        CHECK(std::abs(predictor::sine_predict(fit, t_next) - truth) < 1e-6 * amp);
        CHECK(fit.frequency_hz == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("8 bpm: frequency locks within 0.01 Hz on clean data") {
    const double f_true = 8.0 / 60.0;
    rng::Stream s(3);
    for (int trial = 0; trial < 25; ++trial) {
        const double phase = s.next_uniform(0.0, kTwoPi);
        const auto w = make_window(0.05, f_true, phase, 2.2, 4.0);
        const auto fit = predictor::fft_fit(w, 4.0);
        CHECK(std::abs(fit.frequency_hz - f_true) < 0.01);
    }
}

TEST_CASE("9 and 10 bpm: clean sub-period windows recovered almost exactly") {
    rng::Stream s(4);
    for (double bpm : {9.0, 10.0}) {
        const double f_true = bpm / 60.0;
        for (int trial = 0; trial < 10; ++trial) {
            const double phase = s.next_uniform(0.0, kTwoPi);
            const auto w = make_window(0.1, f_true, phase, 2.0, 4.0);
            const auto fit = predictor::fft_fit(w, 4.0);
            const double pred = predictor::sine_predict(fit, 5.0);
            const double truth = 2.0 + 0.1 * std::sin(kTwoPi * f_true * 5.0 + phase);
            CHECK(std::abs(pred - truth) < 1e-6 * 0.1);
        }
    }
}

TEST_CASE("sine_predict with zero amplitude is the offset") {
    predictor::SineFit fit{0.0, 0.3, 1.0, 2.5};
    for (double t : {0.0, 1.0, 100.0}) {
        CHECK(predictor::sine_predict(fit, t) == 2.5);
    }
}

TEST_CASE("pure-sine window: next step matches analytic continuation") {
    const auto w = make_window(0.08, 0.21, 0.9, 1.9, 4.0);
    const auto fit = predictor::fft_fit(w, 4.0);
    const double truth = 1.9 + 0.08 * std::sin(kTwoPi * 0.21 * 5.0 + 0.9);
    CHECK(std::abs(predictor::sine_predict(fit, 5.0) - truth) < 1e-6);
}

TEST_CASE("drifting baseline: systematic error grows with drift") {
    // The sine model cannot represent a ramp; prediction error on drifting
    // windows is systematically larger and trails the drift direction.
    const double f = 8.0 / 60.0;
    auto mean_err = [&](double drift) {
        double sum = 0.0;
        int n = 0;
        for (int k = 0; k < 40; ++k) {
            predictor::SequenceWindow w;
            const double t0 = 0.25 * k;
            for (std::size_t i = 0; i < predictor::kWindowLen; ++i) {
                const double t = t0 + 0.25 * static_cast<double>(i);
                w.values.push_back(2.2 + drift * t + 0.1 * std::sin(kTwoPi * f * t));
            }
            w.t_last_s = t0 + 4.75;
            const auto fit = predictor::fft_fit(w, 4.0);
            const double t_next = t0 + 5.0;
            const double truth = 2.2 + drift * t_next + 0.1 * std::sin(kTwoPi * f * t_next);
            sum += predictor::sine_predict(fit, t_next) - truth;
            ++n;
        }
        return sum / n;
    };
    const double e0 = mean_err(0.0);
    const double e_pos = mean_err(0.004);
    CHECK(std::abs(e_pos) > std::abs(e0) + 1e-4);
    CHECK(e_pos < 0.0);  // predictions trail an upward drift
}

TEST_CASE("window validation") {
    predictor::SequenceWindow w;
    w.values.assign(19, 1.0);
    CHECK_THROWS_AS(predictor::fft_fit(w, 4.0), std::invalid_argument);
    w.values.assign(20, 1.0);
    w.values[3] = std::nan("");
    CHECK_THROWS_AS(predictor::fft_fit(w, 4.0), std::invalid_argument);
    w.values.assign(20, 1.0);
    CHECK_THROWS_AS(predictor::fft_fit(w, 0.0), std::invalid_argument);
}
