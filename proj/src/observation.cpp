#include "retsim/observation.hpp"

#include <cmath>
#include <stdexcept>

#include "retsim/rng.hpp"

namespace retsim::obs {

namespace {

enum Channel : std::uint64_t { kIlm = 1, kRpe = 2, kNeedle = 3 };
enum Purpose : std::uint64_t { kGauss = 1, kOutlierHit = 2, kOutlierSign = 3, kDrop = 4 };

struct ChannelDraw {
    std::optional<double> px;
    bool outlier = false;
};

ChannelDraw sample_channel(double true_z, double extra_sd,
                           const ImagingGeometry& g, const ObservationNoise& n,
                           std::uint64_t t_index, Channel ch) {
    const auto k = [&](Purpose p) { return rng::key(n.seed, t_index, ch, p); };
    if (n.dropout_prob > 0.0 && rng::unit(k(kDrop)) < n.dropout_prob) {
        return {};
    }
    double px = std::round((true_z - g.window_top_z_mm) / g.mm_per_px);
    const double sd = std::hypot(n.sd_px, extra_sd);
    if (sd > 0.0) px += sd * rng::gaussian(k(kGauss));
    bool outlier = false;
    if (n.outlier_prob > 0.0 && rng::unit(k(kOutlierHit)) < n.outlier_prob) {
        outlier = true;
        px += (rng::unit(k(kOutlierSign)) < 0.5 ? -1.0 : 1.0) * n.outlier_scale_px;
    }
    px = std::round(px);
    if (px < 0.0) px = 0.0;
    if (px > g.image_height_px - 1) px = g.image_height_px - 1;
    return {px, outlier};
}

}  // namespace

void ImagingGeometry::validate() const {
    if (image_height_px <= 0) throw std::invalid_argument("image_height_px must be > 0");
    if (!(mm_per_px > 0.0) || !std::isfinite(mm_per_px)) {
        throw std::invalid_argument("mm_per_px must be > 0");
    }
    if (!std::isfinite(window_top_z_mm)) {
        throw std::invalid_argument("window_top_z_mm must be finite");
    }
}

void ObservationNoise::validate() const {
    auto prob = [](double p, const char* what) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument(std::string(what) + " must be in [0,1]");
        }
    };
    prob(outlier_prob, "outlier_prob");
    prob(dropout_prob, "dropout_prob");
    if (sd_px < 0.0 || occlusion_extra_sd_px < 0.0 || outlier_scale_px < 0.0) {
        throw std::invalid_argument("noise magnitudes must be >= 0");
    }
}

double px_to_mm(double p, const ImagingGeometry& g) {
    return g.window_top_z_mm + p * g.mm_per_px;
}

double mm_to_px(double z_mm, const ImagingGeometry& g) {
    return std::round((z_mm - g.window_top_z_mm) / g.mm_per_px);
}

DepthSample observe(const motion::LayerDepths& layers, double needle_z_mm,
                    const ImagingGeometry& geometry,
                    const ObservationNoise& noise, double t_s,
                    std::uint64_t t_index) {
    geometry.validate();
    noise.validate();
    if (!std::isfinite(needle_z_mm)) {
        throw std::invalid_argument("needle_z_mm must be finite");
    }

    // Needle at or below the ILM partially shadows the layers.
    const double extra =
        needle_z_mm >= layers.ilm_mm ? noise.occlusion_extra_sd_px : 0.0;

    DepthSample s;
    s.t_s = t_s;
    const auto ilm = sample_channel(layers.ilm_mm, extra, geometry, noise, t_index, kIlm);
    const auto rpe = sample_channel(layers.rpe_mm, extra, geometry, noise, t_index, kRpe);
    s.ilm_px = ilm.px;
    s.rpe_px = rpe.px;
    s.is_outlier = ilm.outlier || rpe.outlier;

    const double bottom =
        geometry.window_top_z_mm + geometry.field_depth_mm();
    if (needle_z_mm >= geometry.window_top_z_mm && needle_z_mm < bottom) {
        const auto ndl = sample_channel(needle_z_mm, 0.0, geometry, noise, t_index, kNeedle);
        s.needle_px = ndl.px;
        s.is_outlier = s.is_outlier || ndl.outlier;
    }
    return s;
}

}  // namespace retsim::obs
