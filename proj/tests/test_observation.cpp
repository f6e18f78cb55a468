#include <stdexcept>
#include <cmath>

#include "doctest.h"
#include "retsim/observation.hpp"
#include "retsim/rng.hpp"

using namespace retsim;

namespace {

obs::ImagingGeometry default_geom() { return {}; }

obs::ObservationNoise quiet() {
    obs::ObservationNoise n;
    n.sd_px = 0.0;
    n.outlier_prob = 0.0;
    n.occlusion_extra_sd_px = 0.0;
    n.dropout_prob = 0.0;
    return n;
}

}  // namespace

TEST_CASE("pixel/mm mapping") {
    const auto g = default_geom();
    CHECK(obs::px_to_mm(0.0, g) == g.window_top_z_mm);
    CHECK(obs::px_to_mm(1024.0, g) ==
          doctest::Approx(g.window_top_z_mm + 3.379).epsilon(1e-12));
    // Round-trip within half a pixel.
    rng::Stream s(3);
    for (int i = 0; i < 500; ++i) {
        const double z = s.next_uniform(g.window_top_z_mm,
                                        g.window_top_z_mm + g.field_depth_mm());
        const double back = obs::px_to_mm(obs::mm_to_px(z, g), g);
        CHECK(std::abs(back - z) <= g.mm_per_px / 2 + 1e-12);
    }
}

TEST_CASE("zero noise: needle at window top maps to row 0") {
    const auto g = default_geom();
    const motion::LayerDepths layers{2.2, 2.45};
    const auto s = obs::observe(layers, g.window_top_z_mm, g, quiet(), 0.0, 0);
    REQUIRE(s.needle_px.has_value());
    CHECK(*s.needle_px == 0.0);
}

TEST_CASE("zero noise: mid-window layer lands on row 512") {
    const auto g = default_geom();
    const motion::LayerDepths layers{g.window_top_z_mm + 3.379 / 2.0, 4.0};
    const auto s = obs::observe(layers, g.window_top_z_mm - 0.5, g, quiet(), 0.0, 0);
    REQUIRE(s.ilm_px.has_value());
    CHECK(*s.ilm_px == 512.0);
}

TEST_CASE("zero noise equals quantized projection of ground truth") {
    const auto g = default_geom();
    rng::Stream s(17);
    for (int i = 0; i < 300; ++i) {
        const double ilm = s.next_uniform(1.5, 2.8);
        const motion::LayerDepths layers{ilm, ilm + 0.25};
        const auto d = obs::observe(layers, 1.0, g, quiet(), 0.0,
                                    static_cast<std::uint64_t>(i));
        REQUIRE(d.ilm_px.has_value());
        REQUIRE(d.rpe_px.has_value());
        CHECK(*d.ilm_px == std::round((ilm - g.window_top_z_mm) / g.mm_per_px));
        CHECK(*d.rpe_px == std::round((ilm + 0.25 - g.window_top_z_mm) / g.mm_per_px));
        CHECK_FALSE(d.is_outlier);
    }
}

TEST_CASE("needle outside the imaging window goes missing") {
    const auto g = default_geom();
    const motion::LayerDepths layers{2.2, 2.45};
    CHECK_FALSE(obs::observe(layers, g.window_top_z_mm - 0.01, g, quiet(), 0.0, 0)
                    .needle_px.has_value());
    CHECK_FALSE(obs::observe(layers, g.window_top_z_mm + g.field_depth_mm() + 0.01,
                             g, quiet(), 0.0, 0)
                    .needle_px.has_value());
    CHECK(obs::observe(layers, 2.0, g, quiet(), 0.0, 0).needle_px.has_value());
}

TEST_CASE("pixel rows stay in bounds and samples are deterministic") {
    const auto g = default_geom();
    obs::ObservationNoise n;
    n.sd_px = 30.0;
    n.outlier_prob = 0.2;
    n.outlier_scale_px = 400.0;
    n.seed = 21;
    const motion::LayerDepths layers{0.95, 4.2};
    for (std::uint64_t i = 0; i < 2000; ++i) {
        const auto a = obs::observe(layers, 2.0, g, n, 0.25 * i, i);
        const auto b = obs::observe(layers, 2.0, g, n, 0.25 * i, i);
        REQUIRE(a.ilm_px.has_value());
        CHECK(*a.ilm_px == *b.ilm_px);
        CHECK(*a.ilm_px >= 0.0);
        CHECK(*a.ilm_px < 1024.0);
        REQUIRE(a.rpe_px.has_value());
        CHECK(*a.rpe_px >= 0.0);
        CHECK(*a.rpe_px < 1024.0);
    }
}

TEST_CASE("empirical outlier frequency matches outlier_prob") {
    const auto g = default_geom();
    obs::ObservationNoise n = quiet();
    n.outlier_prob = 0.01;
    n.outlier_scale_px = 50.0;
    n.seed = 5;
    const motion::LayerDepths layers{2.2, 2.45};
    const int trials = 20000;
    int hits = 0;
    for (int i = 0; i < trials; ++i) {
        const auto s = obs::observe(layers, 1.0, g, n, 0.25 * i,
                                    static_cast<std::uint64_t>(i));
        // Ground-truth flag counts impulses on either layer channel.
        if (s.is_outlier) ++hits;
    }
    // Two channels draw independently: expected rate 1-(1-p)^2.
    const double p2 = 1.0 - std::pow(1.0 - n.outlier_prob, 2.0);
    const double sd = std::sqrt(p2 * (1 - p2) * trials);
    CHECK(std::abs(hits - trials * p2) <= 3.0 * sd);
}

TEST_CASE("dropout produces missing samples at the configured rate") {
    const auto g = default_geom();
    obs::ObservationNoise n = quiet();
    n.dropout_prob = 0.05;
    n.seed = 8;
    const motion::LayerDepths layers{2.2, 2.45};
    const int trials = 20000;
    int missing = 0;
    for (int i = 0; i < trials; ++i) {
        const auto s = obs::observe(layers, 1.0, g, n, 0.25 * i,
                                    static_cast<std::uint64_t>(i));
        if (!s.ilm_px) ++missing;
    }
    const double sd = std::sqrt(0.05 * 0.95 * trials);
    CHECK(std::abs(missing - trials * 0.05) <= 3.0 * sd);
}

TEST_CASE("layer ordering preserved in expectation under plain noise") {
    const auto g = default_geom();
    obs::ObservationNoise n = quiet();
    n.sd_px = 3.0;
    n.seed = 31;
    const motion::LayerDepths layers{2.2, 2.45};
    double ilm_sum = 0.0, rpe_sum = 0.0;
    const int trials = 5000;
    for (int i = 0; i < trials; ++i) {
        const auto s = obs::observe(layers, 1.0, g, n, 0.25 * i,
                                    static_cast<std::uint64_t>(i));
        ilm_sum += *s.ilm_px;
        rpe_sum += *s.rpe_px;
    }
    CHECK(ilm_sum / trials < rpe_sum / trials);
}

TEST_CASE("occlusion noise kicks in once the needle passes the ILM") {
    const auto g = default_geom();
    obs::ObservationNoise n = quiet();
    n.sd_px = 1.0;
    n.occlusion_extra_sd_px = 20.0;
    n.seed = 77;
    const motion::LayerDepths layers{2.2, 2.45};
    auto spread = [&](double needle_z) {
        double m = 0.0, m2 = 0.0;
        const int trials = 4000;
        for (int i = 0; i < trials; ++i) {
            const auto s = obs::observe(layers, needle_z, g, n, 0.25 * i,
                                        static_cast<std::uint64_t>(i));
            m += *s.ilm_px;
            m2 += *s.ilm_px * *s.ilm_px;
        }
        m /= trials;
        return std::sqrt(m2 / trials - m * m);
    };
    const double sd_above = spread(2.0);   // needle above ILM
    const double sd_inside = spread(2.3);  // needle inside retina
    CHECK(sd_inside > 3.0 * sd_above);
}

TEST_CASE("validation rejects bad noise configs") {
    obs::ObservationNoise n;
    n.outlier_prob = 1.5;
    CHECK_THROWS_AS(n.validate(), std::invalid_argument);
    n = {};
    n.sd_px = -1.0;
    CHECK_THROWS_AS(n.validate(), std::invalid_argument);
    obs::ImagingGeometry g;
    g.mm_per_px = 0.0;
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}
