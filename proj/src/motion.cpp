#include "retsim/motion.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "retsim/rng.hpp"

namespace retsim::motion {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Modulation envelopes run at slow, incommensurate fractions of the main
// frequency so disturbed traces are not themselves periodic.
constexpr double kAmRateFrac = 0.13;
constexpr double kFmRateFrac = 0.079;

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw std::invalid_argument(std::string(what) + " must be finite");
    }
}

}  // namespace

void MotionProfile::validate() const {
    require_finite(amplitude_mm, "amplitude_mm");
    require_finite(rate_bpm, "rate_bpm");
    require_finite(phase0_rad, "phase0_rad");
    require_finite(baseline_ilm_mm, "baseline_ilm_mm");
    require_finite(retina_thickness_mm, "retina_thickness_mm");
    if (amplitude_mm < 0.0) throw std::invalid_argument("amplitude_mm must be >= 0");
    if (rate_bpm <= 0.0) throw std::invalid_argument("rate_bpm must be > 0");
    if (retina_thickness_mm <= 0.0) {
        throw std::invalid_argument("retina_thickness_mm must be > 0");
    }
    const auto& d = disturbance;
    require_finite(d.drift_mm_per_s, "drift_mm_per_s");
    if (d.am_depth < 0.0 || d.am_depth >= 1.0) throw std::invalid_argument("am_depth must be in [0,1)");
    if (d.fm_depth < 0.0 || d.fm_depth >= 1.0) throw std::invalid_argument("fm_depth must be in [0,1)");
    if (d.harmonic2_frac < 0.0 || d.harmonic2_frac >= 1.0) {
        throw std::invalid_argument("harmonic2_frac must be in [0,1)");
    }
    if (d.noise_sd_mm < 0.0) throw std::invalid_argument("noise_sd_mm must be >= 0");
}

double bpm_to_hz(double rate_bpm) {
    if (!std::isfinite(rate_bpm) || rate_bpm <= 0.0) {
        throw std::invalid_argument("rate_bpm must be positive and finite");
    }
    return rate_bpm / 60.0;
}

LayerDepths ground_truth_at(const MotionProfile& profile, double t_s) {
    profile.validate();
    if (!std::isfinite(t_s) || t_s < 0.0) {
        throw std::invalid_argument("t_s must be >= 0 and finite");
    }
    const auto& d = profile.disturbance;
    const double f = bpm_to_hz(profile.rate_bpm);

    double phase = kTwoPi * f * t_s + profile.phase0_rad;
    if (d.fm_depth != 0.0) {
        phase += M_PI * d.fm_depth * std::sin(kTwoPi * kFmRateFrac * f * t_s);
    }
    double envelope = 1.0;
    if (d.am_depth != 0.0) {
        envelope += d.am_depth * std::sin(kTwoPi * kAmRateFrac * f * t_s);
    }

    double ilm = profile.baseline_ilm_mm +
                 profile.amplitude_mm * envelope * std::sin(phase) +
                 d.drift_mm_per_s * t_s;
    if (d.harmonic2_frac != 0.0) {
        ilm += profile.amplitude_mm * d.harmonic2_frac * std::sin(2.0 * phase);
    }
    if (d.noise_sd_mm != 0.0) {
        // Keyed on the bit pattern of t: white in t, identical on re-evaluation.
        const std::uint64_t k =
            rng::key(d.seed, std::bit_cast<std::uint64_t>(t_s), 0x6a09e667);
        ilm += d.noise_sd_mm * rng::gaussian(k);
    }
    return {ilm, ilm + profile.retina_thickness_mm};
}

MotionTrace generate_trace(const MotionProfile& profile, double duration_s,
                           double rate_hz) {
    profile.validate();
    if (!std::isfinite(duration_s) || duration_s <= 0.0) {
        throw std::invalid_argument("duration_s must be > 0 and finite");
    }
    if (!std::isfinite(rate_hz) || rate_hz <= 0.0) {
        throw std::invalid_argument("rate_hz must be > 0 and finite");
    }
    const auto n = static_cast<std::size_t>(
        std::floor(duration_s * rate_hz + 1e-9)) + 1;
    MotionTrace trace;
    trace.t_s.reserve(n);
    trace.ilm_mm.reserve(n);
    trace.rpe_mm.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate_hz;
        const LayerDepths gt = ground_truth_at(profile, t);
        trace.t_s.push_back(t);
        trace.ilm_mm.push_back(gt.ilm_mm);
        trace.rpe_mm.push_back(gt.rpe_mm);
    }
    return trace;
}

std::string trace_to_csv(const MotionTrace& trace, const std::string& provenance) {
    std::string out = provenance;
    out += "t_s,ilm_mm,rpe_mm\n";
    char buf[128];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", trace.t_s[i],
                      trace.ilm_mm[i], trace.rpe_mm[i]);
        out += buf;
    }
    return out;
}

MotionTrace trace_from_csv(const std::string& text) {
    MotionTrace trace;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "t_s,ilm_mm,rpe_mm") {
                throw std::invalid_argument("bad trace header: " + line);
            }
            header_seen = true;
            continue;
        }
        double t, ilm, rpe;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &ilm, &rpe) != 3) {
            throw std::invalid_argument("bad trace row: " + line);
        }
        trace.t_s.push_back(t);
        trace.ilm_mm.push_back(ilm);
        trace.rpe_mm.push_back(rpe);
    }
    if (!header_seen) throw std::invalid_argument("empty trace file");
    return trace;
}

}  // namespace retsim::motion
