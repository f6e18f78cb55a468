#include "retsim/registration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace retsim::registration {

namespace {

// Linear-interpolation quantile on sorted data (the numpy default).
double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median_sorted(const std::vector<double>& sorted) {
    const std::size_t n = sorted.size();
    return n % 2 == 1 ? sorted[n / 2]
                      : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

}  // namespace

FilteredPosition iqr_filter(std::span<const double> samples_px) {
    if (samples_px.size() < 4) {
        throw std::invalid_argument("iqr_filter needs at least 4 samples");
    }
    std::vector<double> sorted(samples_px.begin(), samples_px.end());
    for (double v : sorted) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite sample");
    }
    std::sort(sorted.begin(), sorted.end());

    const double q1 = quantile_sorted(sorted, 0.25);
    const double q3 = quantile_sorted(sorted, 0.75);
    const double iqr = q3 - q1;
    const double lo = q1 - 1.5 * iqr;
    const double hi = q3 + 1.5 * iqr;

    std::vector<double> kept;
    kept.reserve(sorted.size());
    for (double v : sorted) {
        if (v >= lo && v <= hi) kept.push_back(v);
    }
    // The median lies inside the fence by construction, so kept is never empty.
    FilteredPosition out;
    out.value_px = median_sorted(kept);
    out.n_used = static_cast<int>(kept.size());
    out.n_rejected = static_cast<int>(sorted.size() - kept.size());
    return out;
}

RegistrationTransform build_registration(double p_filtered_px,
                                         double robot_z_now_mm,
                                         double b_mm_per_px) {
    if (!std::isfinite(p_filtered_px) || !std::isfinite(robot_z_now_mm)) {
        throw std::invalid_argument("registration inputs must be finite");
    }
    if (!(b_mm_per_px > 0.0)) {
        throw std::invalid_argument("b_mm_per_px must be > 0");
    }
    return {b_mm_per_px, p_filtered_px, robot_z_now_mm};
}

}  // namespace retsim::registration
