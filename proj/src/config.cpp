#include "retsim/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "retsim/version.hpp"

namespace retsim::config {

using nlohmann::json;

namespace {

// Applies present keys onto defaults and rejects unknown ones.
class Section {
  public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw std::invalid_argument(path_ + " must be a JSON object");
        }
        for (const auto& [k, v] : j_.items()) remaining_.insert(k);
    }
    ~Section() = default;

    template <typename T>
    void get(const char* key, T& into) {
        if (auto it = j_.find(key); it != j_.end()) {
            try {
                into = it->get<T>();
            } catch (const json::exception& e) {
                throw std::invalid_argument(path_ + "." + key + ": " + e.what());
            }
            remaining_.erase(key);
        }
    }
    json sub(const char* key) {
        remaining_.erase(key);
        auto it = j_.find(key);
        return it == j_.end() ? json::object() : *it;
    }
    void finish() const {
        if (!remaining_.empty()) {
            throw std::invalid_argument("unknown key " + path_ + "." +
                                        *remaining_.begin());
        }
    }

  private:
    const json& j_;
    std::string path_;
    std::set<std::string> remaining_;
};

json disturbance_to_json(const motion::DisturbanceSpec& d) {
    return {{"drift_mm_per_s", d.drift_mm_per_s}, {"am_depth", d.am_depth},
            {"fm_depth", d.fm_depth},             {"harmonic2_frac", d.harmonic2_frac},
            {"noise_sd_mm", d.noise_sd_mm},       {"seed", d.seed}};
}

void disturbance_from_json(const json& j, motion::DisturbanceSpec& d,
                           const std::string& path) {
    Section s(j, path);
    s.get("drift_mm_per_s", d.drift_mm_per_s);
    s.get("am_depth", d.am_depth);
    s.get("fm_depth", d.fm_depth);
    s.get("harmonic2_frac", d.harmonic2_frac);
    s.get("noise_sd_mm", d.noise_sd_mm);
    s.get("seed", d.seed);
    s.finish();
}

}  // namespace

void ExperimentConfig::validate() const {
    world.profile.validate();
    world.geometry.validate();
    world.noise.validate();
    world.controller.validate();
    train.validate();
    procedure.validate(world.profile.retina_thickness_mm);
    if (grid.amplitudes_mm.empty() || grid.rates_bpm.empty()) {
        throw std::invalid_argument("grid must list amplitudes and rates");
    }
    if (!(grid.trace_duration_s > 0.0) || !(grid.sample_rate_hz > 0.0)) {
        throw std::invalid_argument("grid durations/rates must be > 0");
    }
    if (grid.jitter_base_mm < 0.0) {
        throw std::invalid_argument("jitter_base_mm must be >= 0");
    }
}

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.world.profile.amplitude_mm = 0.1;
    cfg.world.profile.rate_bpm = 8.0;
    cfg.world.profile.disturbance.am_depth = 0.1;
    cfg.world.profile.disturbance.drift_mm_per_s = 0.002;
    cfg.world.profile.disturbance.noise_sd_mm = cfg.grid.jitter_base_mm;
    cfg.world.noise.outlier_prob = 0.01;
    cfg.world.noise.dropout_prob = 0.002;
    return cfg;
}

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config parse error: ") + e.what());
    }
    ExperimentConfig cfg = default_config();
    Section root(j, "config");

    {
        Section s(root.sub("motion"), "motion");
        auto& p = cfg.world.profile;
        s.get("amplitude_mm", p.amplitude_mm);
        s.get("rate_bpm", p.rate_bpm);
        s.get("phase0_rad", p.phase0_rad);
        s.get("baseline_ilm_mm", p.baseline_ilm_mm);
        s.get("retina_thickness_mm", p.retina_thickness_mm);
        disturbance_from_json(s.sub("disturbance"), p.disturbance, "motion.disturbance");
        s.finish();
    }
    {
        Section s(root.sub("geometry"), "geometry");
        auto& g = cfg.world.geometry;
        s.get("image_height_px", g.image_height_px);
        s.get("mm_per_px", g.mm_per_px);
        s.get("window_top_z_mm", g.window_top_z_mm);
        s.finish();
    }
    {
        Section s(root.sub("noise"), "noise");
        auto& n = cfg.world.noise;
        s.get("sd_px", n.sd_px);
        s.get("outlier_prob", n.outlier_prob);
        s.get("outlier_scale_px", n.outlier_scale_px);
        s.get("occlusion_extra_sd_px", n.occlusion_extra_sd_px);
        s.get("dropout_prob", n.dropout_prob);
        s.get("seed", n.seed);
        s.finish();
    }
    {
        Section s(root.sub("controller"), "controller");
        auto& c = cfg.world.controller;
        s.get("k_v", c.k_v);
        s.get("v_max", c.v_max);
        s.get("loop_rate_hz", c.loop_rate_hz);
        s.finish();
    }
    {
        Section s(root.sub("robot"), "robot");
        s.get("axis_resolution_mm", cfg.world.axis_resolution_mm);
        s.get("axis_repeat_sd_mm", cfg.world.axis_repeat_sd_mm);
        s.get("needle_start_depth_mm", cfg.world.needle_start_depth_mm);
        s.finish();
    }
    {
        Section s(root.sub("sampling"), "sampling");
        s.get("obs_rate_hz", cfg.world.obs_rate_hz);
        s.finish();
    }
    {
        Section s(root.sub("train"), "train");
        auto& t = cfg.train;
        s.get("epochs", t.epochs);
        s.get("learning_rate", t.learning_rate);
        s.get("beta1", t.beta1);
        s.get("beta2", t.beta2);
        s.get("epsilon", t.epsilon);
        s.get("hidden_size", t.hidden_size);
        s.get("window_len", t.window_len);
        s.get("batch_size", t.batch_size);
        s.get("stride", t.stride);
        s.get("train_frac", t.train_frac);
        s.get("seed", t.seed);
        s.finish();
    }
    {
        Section s(root.sub("procedure"), "procedure");
        auto& p = cfg.procedure;
        s.get("prep_offset_mm", p.prep_offset_mm);
        s.get("sync_offset_mm", p.sync_offset_mm);
        s.get("insertion_offset_mm", p.insertion_offset_mm);
        s.get("e_max_mm", p.e_max_mm);
        s.get("settle_window", p.settle_window);
        s.get("registration_samples", p.registration_samples);
        s.get("injection_duration_s", p.injection_duration_s);
        s.get("min_sync_duration_s", p.min_sync_duration_s);
        s.get("max_sync_duration_s", p.max_sync_duration_s);
        s.get("ramp_rate_mm_s", p.ramp_rate_mm_s);
        s.get("safety_bound_mm", p.safety_bound_mm);
        s.get("staleness_bound_s", p.staleness_bound_s);
        s.get("approach_tol_mm", p.approach_tol_mm);
        s.get("approach_timeout_s", p.approach_timeout_s);
        s.get("prediction_lead", p.prediction_lead);
        s.get("phase5_track_rpe", p.phase5_track_rpe);
        s.get("allow_restart", p.allow_restart);
        s.get("max_restarts", p.max_restarts);
        s.get("robot_frame_offset_mm", p.robot_frame_offset_mm);
        s.finish();
    }
    {
        Section s(root.sub("grid"), "grid");
        auto& g = cfg.grid;
        s.get("amplitudes_mm", g.amplitudes_mm);
        s.get("rates_bpm", g.rates_bpm);
        s.get("trace_duration_s", g.trace_duration_s);
        s.get("sample_rate_hz", g.sample_rate_hz);
        s.get("jitter_base_mm", g.jitter_base_mm);
        s.finish();
    }
    {
        Section s(root.sub("run"), "run");
        s.get("seed", cfg.seed);
        s.finish();
    }
    root.finish();
    cfg.validate();
    return cfg;
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
    const auto& w = cfg.world;
    json j = {
        {"motion",
         {{"amplitude_mm", w.profile.amplitude_mm},
          {"rate_bpm", w.profile.rate_bpm},
          {"phase0_rad", w.profile.phase0_rad},
          {"baseline_ilm_mm", w.profile.baseline_ilm_mm},
          {"retina_thickness_mm", w.profile.retina_thickness_mm},
          {"disturbance", disturbance_to_json(w.profile.disturbance)}}},
        {"geometry",
         {{"image_height_px", w.geometry.image_height_px},
          {"mm_per_px", w.geometry.mm_per_px},
          {"window_top_z_mm", w.geometry.window_top_z_mm}}},
        {"noise",
         {{"sd_px", w.noise.sd_px},
          {"outlier_prob", w.noise.outlier_prob},
          {"outlier_scale_px", w.noise.outlier_scale_px},
          {"occlusion_extra_sd_px", w.noise.occlusion_extra_sd_px},
          {"dropout_prob", w.noise.dropout_prob},
          {"seed", w.noise.seed}}},
        {"controller",
         {{"k_v", w.controller.k_v},
          {"v_max", w.controller.v_max},
          {"loop_rate_hz", w.controller.loop_rate_hz}}},
        {"robot",
         {{"axis_resolution_mm", w.axis_resolution_mm},
          {"axis_repeat_sd_mm", w.axis_repeat_sd_mm},
          {"needle_start_depth_mm", w.needle_start_depth_mm}}},
        {"sampling", {{"obs_rate_hz", w.obs_rate_hz}}},
        {"train",
         {{"epochs", cfg.train.epochs},
          {"learning_rate", cfg.train.learning_rate},
          {"beta1", cfg.train.beta1},
          {"beta2", cfg.train.beta2},
          {"epsilon", cfg.train.epsilon},
          {"hidden_size", cfg.train.hidden_size},
          {"window_len", cfg.train.window_len},
          {"batch_size", cfg.train.batch_size},
          {"stride", cfg.train.stride},
          {"train_frac", cfg.train.train_frac},
          {"seed", cfg.train.seed}}},
        {"procedure",
         {{"prep_offset_mm", cfg.procedure.prep_offset_mm},
          {"sync_offset_mm", cfg.procedure.sync_offset_mm},
          {"insertion_offset_mm", cfg.procedure.insertion_offset_mm},
          {"e_max_mm", cfg.procedure.e_max_mm},
          {"settle_window", cfg.procedure.settle_window},
          {"registration_samples", cfg.procedure.registration_samples},
          {"injection_duration_s", cfg.procedure.injection_duration_s},
          {"min_sync_duration_s", cfg.procedure.min_sync_duration_s},
          {"max_sync_duration_s", cfg.procedure.max_sync_duration_s},
          {"ramp_rate_mm_s", cfg.procedure.ramp_rate_mm_s},
          {"safety_bound_mm", cfg.procedure.safety_bound_mm},
          {"staleness_bound_s", cfg.procedure.staleness_bound_s},
          {"approach_tol_mm", cfg.procedure.approach_tol_mm},
          {"approach_timeout_s", cfg.procedure.approach_timeout_s},
          {"prediction_lead", cfg.procedure.prediction_lead},
          {"phase5_track_rpe", cfg.procedure.phase5_track_rpe},
          {"allow_restart", cfg.procedure.allow_restart},
          {"max_restarts", cfg.procedure.max_restarts},
          {"robot_frame_offset_mm", cfg.procedure.robot_frame_offset_mm}}},
        {"grid",
         {{"amplitudes_mm", cfg.grid.amplitudes_mm},
          {"rates_bpm", cfg.grid.rates_bpm},
          {"trace_duration_s", cfg.grid.trace_duration_s},
          {"sample_rate_hz", cfg.grid.sample_rate_hz},
          {"jitter_base_mm", cfg.grid.jitter_base_mm}}},
        {"run", {{"seed", cfg.seed}}},
    };
    return j.dump(2) + "\n";
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

std::string config_digest(const ExperimentConfig& cfg) {
    const std::string canonical = config_to_json_text(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string provenance_header(const ExperimentConfig& cfg, std::uint64_t seed) {
    std::string out;
    out += std::string("# ") + kToolName + " " + kVersion + "\n";
    out += "# config_digest=" + config_digest(cfg) + "\n";
    out += "# seed=" + std::to_string(seed) + "\n";
    return out;
}

std::pair<double, double> parse_condition(const std::string& text) {
    const auto x = text.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= text.size()) {
        throw std::invalid_argument("condition must look like AMPxBPM, e.g. 0.1x8");
    }
    try {
        const double amp = std::stod(text.substr(0, x));
        const double bpm = std::stod(text.substr(x + 1));
        if (!(amp > 0.0) || !(bpm > 0.0)) throw std::invalid_argument("");
        return {amp, bpm};
    } catch (const std::exception&) {
        throw std::invalid_argument("cannot parse condition: " + text);
    }
}

std::string condition_name(double amplitude_mm, double rate_bpm) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%gx%g", amplitude_mm, rate_bpm);
    return buf;
}

motion::MotionProfile condition_profile(const ExperimentConfig& cfg,
                                        double amplitude_mm, double rate_bpm) {
    motion::MotionProfile p = cfg.world.profile;
    p.amplitude_mm = amplitude_mm;
    p.rate_bpm = rate_bpm;
    p.disturbance.noise_sd_mm = cfg.grid.jitter_for(amplitude_mm, rate_bpm);
    return p;
}

}  // namespace retsim::config
