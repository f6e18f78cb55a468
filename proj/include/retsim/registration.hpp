#pragma once

#include <span>

namespace retsim::registration {

struct FilteredPosition {
    double value_px = 0.0;
    int n_used = 0;
    int n_rejected = 0;
};

// 1D affine map from image pixel rows to the robot coordinate:
//   Z(p) = -b * p + (z_init + b * p_init)
// Increasing pixel row (deeper in the image) maps to decreasing robot Z; the
// sign lives here and nowhere else.
struct RegistrationTransform {
    double b_mm_per_px = 3.379 / 1024.0;
    double p_init_px = 0.0;
    double z_init_mm = 0.0;

    double apply(double p) const {
        return -b_mm_per_px * p + (z_init_mm + b_mm_per_px * p_init_px);
    }
    double inverse(double z_mm) const {
        return (z_init_mm + b_mm_per_px * p_init_px - z_mm) / b_mm_per_px;
    }
};

// IQR outlier rejection (1.5 fence, linear-interpolation quartiles) followed
// by the median of the survivors. Needs >= 4 samples.
FilteredPosition iqr_filter(std::span<const double> samples_px);

RegistrationTransform build_registration(double p_filtered_px,
                                         double robot_z_now_mm,
                                         double b_mm_per_px);

}  // namespace retsim::registration
