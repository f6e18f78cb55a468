#pragma once

#include <cstdint>
#include <optional>

#include "retsim/motion.hpp"

namespace retsim::obs {

// Axial window of the depth scan. Pixel row 0 sits at window_top_z_mm and
// rows grow with depth: z = window_top_z_mm + p * mm_per_px.
struct ImagingGeometry {
    int image_height_px = 1024;
    double mm_per_px = 3.379 / 1024.0;
    double window_top_z_mm = 0.9;

    void validate() const;
    double field_depth_mm() const { return mm_per_px * image_height_px; }
};

struct ObservationNoise {
    double sd_px = 3.0;
    double outlier_prob = 0.0;
    double outlier_scale_px = 50.0;
    double occlusion_extra_sd_px = 6.0;  // added to layer channels once the needle is in the retina
    double dropout_prob = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// One segmented measurement at the scan rate. Missing channels are nullopt.
// is_outlier is diagnostic ground truth; the pipeline never reads it.
struct DepthSample {
    double t_s = 0.0;
    std::optional<double> ilm_px;
    std::optional<double> rpe_px;
    std::optional<double> needle_px;
    bool is_outlier = false;
};

double px_to_mm(double p, const ImagingGeometry& g);
double mm_to_px(double z_mm, const ImagingGeometry& g);

// Projects phantom state + needle depth through the noise channel.
// t_index seeds the per-sample draws; channels are independent streams.
DepthSample observe(const motion::LayerDepths& layers, double needle_z_mm,
                    const ImagingGeometry& geometry,
                    const ObservationNoise& noise, double t_s,
                    std::uint64_t t_index);

}  // namespace retsim::obs
