#include "retsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <atomic>
#include <memory>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "retsim/procedure.hpp"
#include "retsim/rng.hpp"
#include "retsim/version.hpp"

namespace retsim::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v, const char* f = "%.9g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Condition {
    std::size_t i = 0, j = 0;
    double amp_mm = 0.0;
    double rate_bpm = 0.0;
    std::string name;
};

std::vector<Condition> grid_conditions(const config::ExperimentConfig& cfg) {
    std::vector<Condition> out;
    for (std::size_t i = 0; i < cfg.grid.amplitudes_mm.size(); ++i) {
        for (std::size_t j = 0; j < cfg.grid.rates_bpm.size(); ++j) {
            const double a = cfg.grid.amplitudes_mm[i];
            const double r = cfg.grid.rates_bpm[j];
            out.push_back({i, j, a, r, config::condition_name(a, r)});
        }
    }
    return out;
}

config::ExperimentConfig with_seed(config::ExperimentConfig cfg,
                                   const CmdOptions& opt) {
    if (opt.seed_override) cfg.seed = *opt.seed_override;
    return cfg;
}

motion::MotionTrace load_trace(const fs::path& dir, const std::string& cond) {
    const fs::path p = dir / "traces" / ("cond_" + cond + ".csv");
    if (!fs::exists(p)) {
        throw IoError("missing trace " + p.string() + " (run generate first)");
    }
    return motion::trace_from_csv(read_file(p));
}

std::string samples_csv(const config::ExperimentConfig& cfg,
                        const motion::MotionTrace& trace,
                        std::uint64_t cond_seed, const std::string& provenance) {
    obs::ObservationNoise noise = cfg.world.noise;
    noise.seed = rng::key(cond_seed, 0x0b);
    std::string out = provenance;
    out += "t_s,ilm_px,rpe_px,needle_px,valid_mask\n";
    const double far_above = cfg.world.geometry.window_top_z_mm - 1.0;
    for (std::size_t k = 0; k < trace.size(); ++k) {
        const motion::LayerDepths layers{trace.ilm_mm[k], trace.rpe_mm[k]};
        const auto s = obs::observe(layers, far_above, cfg.world.geometry, noise,
                                    trace.t_s[k], k);
        const int mask = (s.ilm_px ? 1 : 0) | (s.rpe_px ? 2 : 0) | (s.needle_px ? 4 : 0);
        out += num(trace.t_s[k]);
        out += ',';
        out += s.ilm_px ? num(*s.ilm_px) : "nan";
        out += ',';
        out += s.rpe_px ? num(*s.rpe_px) : "nan";
        out += ',';
        out += s.needle_px ? num(*s.needle_px) : "nan";
        out += ',';
        out += std::to_string(mask);
        out += '\n';
    }
    return out;
}

struct WindowSplit {
    std::size_t n_windows = 0;
    std::size_t n_train = 0;  // first windows, chronological
};

WindowSplit split_for(const config::ExperimentConfig& cfg, std::size_t n_samples) {
    WindowSplit s;
    const auto w = static_cast<std::size_t>(cfg.train.window_len);
    if (n_samples < w + 2) return s;
    s.n_windows = n_samples - w;
    s.n_train = static_cast<std::size_t>(
        std::floor(cfg.train.train_frac * static_cast<double>(s.n_windows)));
    return s;
}

json run_summary_json(const config::ExperimentConfig& cfg,
                      const proc::ProcedureReport& rep, std::uint64_t seed) {
    json j;
    j["tool"] = std::string(kToolName) + " " + kVersion;
    j["config_digest"] = config::config_digest(cfg);
    j["seed"] = seed;
    j["final_phase"] = proc::phase_name(rep.final_phase);
    j["aborted"] = rep.aborted;
    j["abort_reason"] = rep.abort_reason;
    j["injection_success"] = rep.injection_success;
    j["e_um"] = rep.e_mm * 1000.0;
    j["registration_rejected"] = rep.registration_rejected;
    j["restarts"] = rep.restarts;
    j["min_rpe_margin_um"] = rep.min_rpe_margin_mm * 1000.0;
    j["final_v_cmd_mm_s"] = rep.final_v_cmd_mm_s;
    j["duration_s"] = rep.duration_s;
    auto metrics = [](const proc::PhaseMetrics& m) {
        return json{{"offset_um", m.offset_um},
                    {"rmse_um", m.rmse_um},
                    {"maxae_um", m.max_ae_um},
                    {"mean_abs_um", m.mean_abs_um},
                    {"n", m.n}};
    };
    j["above_ilm"] = metrics(rep.sync_metrics);
    j["inside_retina"] = metrics(rep.insertion_metrics);
    return j;
}

}  // namespace

std::uint64_t condition_seed(const config::ExperimentConfig& cfg,
                             std::size_t i, std::size_t j) {
    return rng::key(cfg.seed, 0xc0 + i, j);
}

SeriesData derive_observed(const config::ExperimentConfig& cfg,
                           const motion::MotionTrace& trace,
                           std::uint64_t cond_seed) {
    obs::ObservationNoise noise = cfg.world.noise;
    noise.seed = rng::key(cond_seed, 0x0b);
    SeriesData out;
    out.t_s = trace.t_s;
    out.truth_mm = trace.ilm_mm;
    out.obs_mm.reserve(trace.size());
    const double far_above = cfg.world.geometry.window_top_z_mm - 1.0;
    for (std::size_t k = 0; k < trace.size(); ++k) {
        const motion::LayerDepths layers{trace.ilm_mm[k], trace.rpe_mm[k]};
        const auto s = obs::observe(layers, far_above, cfg.world.geometry, noise,
                                    trace.t_s[k], k);
        double v;
        if (s.ilm_px) {
            v = obs::px_to_mm(*s.ilm_px, cfg.world.geometry);
        } else if (!out.obs_mm.empty()) {
            v = out.obs_mm.back();  // hold last valid
        } else {
            v = obs::px_to_mm(obs::mm_to_px(layers.ilm_mm, cfg.world.geometry),
                              cfg.world.geometry);
        }
        out.obs_mm.push_back(v);
    }
    return out;
}

EvalSeries evaluate_tail(const config::ExperimentConfig& cfg,
                         const lstm::LstmModel* model, const SeriesData& series) {
    const auto w = static_cast<std::size_t>(cfg.train.window_len);
    const auto split = split_for(cfg, series.obs_mm.size());
    if (split.n_windows == 0) throw std::invalid_argument("series too short to evaluate");
    const double rate = cfg.grid.sample_rate_hz;

    EvalSeries ev;
    predictor::FftPredictor fft;
    predictor::HoldPredictor hold;
    for (std::size_t k = split.n_train; k < split.n_windows; ++k) {
        const std::span<const double> window(series.obs_mm.data() + k, w);
        const double t_last = series.t_s[k + w - 1];
        ev.t_s.push_back(series.t_s[k + w]);
        ev.truth_mm.push_back(series.truth_mm[k + w]);
        if (model) ev.lstm_mm.push_back(lstm::lstm_forward(*model, window));
        ev.fft_mm.push_back(fft.predict_next(window, t_last, 1.0 / rate));
        ev.hold_mm.push_back(hold.predict_next(window, t_last, 1.0 / rate));
    }
    return ev;
}

int cmd_generate(const config::ExperimentConfig& cfg0, const CmdOptions& opt) {
    const auto cfg = with_seed(cfg0, opt);
    cfg.validate();
    const fs::path out(opt.out_dir);
    const std::string prov = config::provenance_header(cfg, cfg.seed);

    json manifest;
    manifest["tool"] = std::string(kToolName) + " " + kVersion;
    manifest["config_digest"] = config::config_digest(cfg);
    manifest["seed"] = cfg.seed;
    manifest["trace_duration_s"] = cfg.grid.trace_duration_s;
    manifest["sample_rate_hz"] = cfg.grid.sample_rate_hz;
    manifest["conditions"] = json::array();

    for (const auto& c : grid_conditions(cfg)) {
        const std::uint64_t cse = condition_seed(cfg, c.i, c.j);
        motion::MotionProfile profile = config::condition_profile(cfg, c.amp_mm, c.rate_bpm);
        profile.disturbance.seed = rng::key(cse, 0x0a);
        const auto trace = motion::generate_trace(profile, cfg.grid.trace_duration_s,
                                                  cfg.grid.sample_rate_hz);
        write_file(out / "traces" / ("cond_" + c.name + ".csv"),
                   motion::trace_to_csv(trace, prov));
        write_file(out / "samples" / ("cond_" + c.name + ".csv"),
                   samples_csv(cfg, trace, cse, prov));
        manifest["conditions"].push_back(c.name);
        if (opt.verbose) {
            std::fprintf(stderr, "generated %s: %zu samples\n", c.name.c_str(),
                         trace.size());
        }
    }
    write_file(out / "manifest.json", manifest.dump(2) + "\n");
    write_file(out / "config.json", config::config_to_json_text(cfg));
    return kOk;
}

int cmd_train(const config::ExperimentConfig& cfg0, const CmdOptions& opt) {
    const auto cfg = with_seed(cfg0, opt);
    cfg.validate();
    const fs::path out(opt.out_dir);
    const auto conds = grid_conditions(cfg);

    struct Job {
        Condition cond;
        std::uint64_t cse;
        SeriesData series;
    };
    std::vector<Job> jobs;
    for (const auto& c : conds) {
        const std::uint64_t cse = condition_seed(cfg, c.i, c.j);
        jobs.push_back({c, cse, derive_observed(cfg, load_trace(out, c.name), cse)});
    }

    const unsigned workers =
        std::max(1u, std::min(std::thread::hardware_concurrency(),
                              static_cast<unsigned>(jobs.size())));
    std::vector<lstm::TrainResult> results(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= jobs.size()) return;
            lstm::TrainConfig tc = cfg.train;
            tc.seed = rng::key(jobs[k].cse, 0x11);
            try {
                results[k] = lstm::lstm_train({jobs[k].series.obs_mm}, tc);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    const std::string digest = config::config_digest(cfg);
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        auto& result = results[k];
        result.model.config_digest = digest;
        write_file(out / "models" / ("lstm_" + jobs[k].cond.name + ".model"),
                   lstm::model_to_text(result.model));
        if (opt.verbose) {
            std::fprintf(stderr, "trained %s: final val mse %.3g\n",
                         jobs[k].cond.name.c_str(), result.model.final_val_mse);
        }
    }

    // Pooled model across all conditions for the closed-loop run; coarser
    // stride keeps its cost near the per-condition ones.
    std::vector<std::vector<double>> all_series;
    for (const auto& j : jobs) all_series.push_back(j.series.obs_mm);
    lstm::TrainConfig tc = cfg.train;
    tc.seed = rng::key(cfg.seed, 0x12);
    tc.stride = std::max<int>(cfg.train.stride, static_cast<int>(jobs.size() / 2));
    auto pooled = lstm::lstm_train(all_series, tc);
    pooled.model.config_digest = digest;
    write_file(out / "models" / "lstm_pooled.model",
               lstm::model_to_text(pooled.model));
    return kOk;
}

int cmd_evaluate(const config::ExperimentConfig& cfg0, const CmdOptions& opt) {
    const auto cfg = with_seed(cfg0, opt);
    cfg.validate();
    const fs::path out(opt.out_dir);
    const std::string prov = config::provenance_header(cfg, cfg.seed);

    const bool want_lstm = opt.model.empty() || opt.model == "lstm";
    const bool want_fft = opt.model.empty() || opt.model == "fft";
    const bool want_hold = opt.model == "hold";

    std::string grid_csv = prov + "amp_mm,rate_bpm,model,rmse_um,maxae_um\n";
    std::string cmp_csv =
        prov + "amp_mm,rate_bpm,lstm_rmse_um,fft_rmse_um,lstm_maxae_um,fft_maxae_um\n";

    for (const auto& c : grid_conditions(cfg)) {
        const std::uint64_t cse = condition_seed(cfg, c.i, c.j);
        const auto series = derive_observed(cfg, load_trace(out, c.name), cse);

        lstm::LstmModel model;
        const lstm::LstmModel* model_ptr = nullptr;
        if (want_lstm) {
            const fs::path mp = out / "models" / ("lstm_" + c.name + ".model");
            if (!fs::exists(mp)) {
                throw IoError("missing model " + mp.string() + " (run train first)");
            }
            model = lstm::model_from_text(read_file(mp));
            model_ptr = &model;
        }
        const auto ev = evaluate_tail(cfg, model_ptr, series);

        auto add_row = [&](const std::string& name, const std::vector<double>& pred) {
            const auto rep = predictor::evaluate(pred, ev.truth_mm);
            grid_csv += num(c.amp_mm) + "," + num(c.rate_bpm) + "," + name + "," +
                        num(rep.rmse_um, "%.6g") + "," + num(rep.max_ae_um, "%.6g") + "\n";
            return rep;
        };
        predictor::PredictionReport lrep, frep;
        if (want_lstm) lrep = add_row("lstm", ev.lstm_mm);
        if (want_fft) frep = add_row("fft", ev.fft_mm);
        if (want_hold) add_row("hold", ev.hold_mm);
        if (want_lstm && want_fft) {
            cmp_csv += num(c.amp_mm) + "," + num(c.rate_bpm) + "," +
                       num(lrep.rmse_um, "%.6g") + "," + num(frep.rmse_um, "%.6g") + "," +
                       num(lrep.max_ae_um, "%.6g") + "," + num(frep.max_ae_um, "%.6g") + "\n";
        }

        std::string plot = prov + "t_s,truth_mm,lstm_mm,fft_mm,hold_mm\n";
        for (std::size_t k = 0; k < ev.t_s.size(); ++k) {
            plot += num(ev.t_s[k]);
            plot += ',';
            plot += num(ev.truth_mm[k]);
            plot += ',';
            plot += want_lstm ? num(ev.lstm_mm[k]) : "nan";
            plot += ',';
            plot += num(ev.fft_mm[k]);
            plot += ',';
            plot += num(ev.hold_mm[k]);
            plot += '\n';
        }
        write_file(out / "plots" / ("pred_" + c.name + ".csv"), plot);
        if (opt.verbose) std::fprintf(stderr, "evaluated %s\n", c.name.c_str());
    }
    write_file(out / "reports" / "grid_report.csv", grid_csv);
    if (want_lstm && want_fft) {
        write_file(out / "reports" / "comparison.csv", cmp_csv);
    }
    return kOk;
}

int cmd_run(const config::ExperimentConfig& cfg0, const CmdOptions& opt) {
    const auto cfg = with_seed(cfg0, opt);
    cfg.validate();
    if (opt.seeds < 1) throw std::invalid_argument("--seeds must be >= 1");
    const fs::path out(opt.out_dir);
    const std::string prov = config::provenance_header(cfg, cfg.seed);

    double amp = cfg.world.profile.amplitude_mm;
    double bpm = cfg.world.profile.rate_bpm;
    if (!opt.condition.empty()) {
        std::tie(amp, bpm) = config::parse_condition(opt.condition);
    }
    const std::string cond = config::condition_name(amp, bpm);

    proc::WorldConfig world = cfg.world;
    world.profile = config::condition_profile(cfg, amp, bpm);

    const std::string model_kind = opt.model.empty() ? "lstm" : opt.model;
    lstm::LstmModel model;
    std::unique_ptr<predictor::OneStepPredictor> pred;
    if (model_kind == "lstm") {
        fs::path mp = out / "models" / "lstm_pooled.model";
        if (!fs::exists(mp)) mp = out / "models" / ("lstm_" + cond + ".model");
        if (!fs::exists(mp)) {
            throw IoError("no model found under " + (out / "models").string() +
                          " (run train, or pass --model fft|hold)");
        }
        model = lstm::model_from_text(read_file(mp));
        pred = std::make_unique<lstm::LstmPredictor>(model);
    } else if (model_kind == "fft") {
        pred = std::make_unique<predictor::FftPredictor>();
    } else if (model_kind == "hold") {
        pred = std::make_unique<predictor::HoldPredictor>();
    } else {
        throw std::invalid_argument("unknown model kind: " + model_kind);
    }

    std::string precision_csv =
        prov +
        "seed,phase,offset_um,rmse_um,maxae_um,mean_abs_um,completed,injection_success\n";
    int n_completed = 0, n_success = 0;
    bool any_abort = false;

    for (int k = 0; k < opt.seeds; ++k) {
        const std::uint64_t run_seed = rng::key(cfg.seed, 0x40, static_cast<std::uint64_t>(k));
        const auto rep = proc::run_procedure(world, cfg.procedure, *pred, run_seed);
        const fs::path rd = out / "runs" / cond / ("seed_" + std::to_string(k));
        write_file(rd / "events.csv", proc::events_to_csv(rep.events, prov));
        write_file(rd / "trace.csv", proc::trace_to_csv(rep.trace, prov));
        write_file(rd / "summary.json", run_summary_json(cfg, rep, run_seed).dump(2) + "\n");

        const bool completed = rep.final_phase == proc::Phase::Completed;
        any_abort = any_abort || rep.aborted;
        n_completed += completed ? 1 : 0;
        n_success += rep.injection_success ? 1 : 0;
        auto row = [&](const char* phase, const proc::PhaseMetrics& m) {
            precision_csv += std::to_string(k) + "," + phase + "," +
                             num(m.offset_um, "%.6g") + "," + num(m.rmse_um, "%.6g") +
                             "," + num(m.max_ae_um, "%.6g") + "," +
                             num(m.mean_abs_um, "%.6g") + "," +
                             (completed ? "1" : "0") + "," +
                             (rep.injection_success ? "1" : "0") + "\n";
        };
        row("above_ilm", rep.sync_metrics);
        row("inside_retina", rep.insertion_metrics);
        if (opt.verbose) {
            const std::string note =
                rep.aborted ? " (" + rep.abort_reason + ")" : std::string();
            std::fprintf(stderr, "run seed %d: %s%s\n", k,
                         proc::phase_name(rep.final_phase), note.c_str());
        }
    }

    write_file(out / "reports" / "control_precision.csv", precision_csv);
    json summary;
    summary["tool"] = std::string(kToolName) + " " + kVersion;
    summary["config_digest"] = config::config_digest(cfg);
    summary["condition"] = cond;
    summary["model"] = model_kind;
    summary["n_runs"] = opt.seeds;
    summary["n_completed"] = n_completed;
    summary["n_success"] = n_success;
    summary["success_fraction"] =
        static_cast<double>(n_success) / static_cast<double>(opt.seeds);
    write_file(out / "reports" / "batch_summary.json", summary.dump(2) + "\n");

    return any_abort ? kProcedureAbort : kOk;
}

int cmd_report(const std::vector<std::string>& in_dirs, const CmdOptions& opt) {
    if (in_dirs.empty()) throw std::invalid_argument("report needs at least one run directory");
    const fs::path out(opt.out_dir);

    std::string digest;
    for (const auto& d : in_dirs) {
        const fs::path cj = fs::path(d) / "config.json";
        std::string dg;
        if (fs::exists(cj)) {
            dg = config::config_digest(config::config_from_json_text(read_file(cj)));
        } else {
            const fs::path mf = fs::path(d) / "manifest.json";
            if (!fs::exists(mf)) throw IoError("no config.json or manifest.json in " + d);
            dg = json::parse(read_file(mf)).value("config_digest", "");
        }
        if (digest.empty()) digest = dg;
        if (dg != digest) {
            throw std::invalid_argument("mixed config digests across inputs: " + digest +
                                        " vs " + dg + " (" + d + ")");
        }
    }

    // Merge grid reports into the two prediction tables.
    std::string table1 = "amp_mm,rate_bpm,rmse_um,maxae_um\n";
    std::string table2;
    std::string bestworst;
    bool have_grid = false;
    for (const auto& d : in_dirs) {
        const fs::path gp = fs::path(d) / "reports" / "grid_report.csv";
        if (!fs::exists(gp)) continue;
        have_grid = true;
        std::istringstream in(read_file(gp));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#' || line.rfind("amp_mm", 0) == 0) continue;
            // amp,rate,model,rmse,maxae
            std::istringstream ls(line);
            std::string amp, rate, mdl, rmse, maxae;
            std::getline(ls, amp, ',');
            std::getline(ls, rate, ',');
            std::getline(ls, mdl, ',');
            std::getline(ls, rmse, ',');
            std::getline(ls, maxae, ',');
            if (mdl == "lstm") {
                table1 += amp + "," + rate + "," + rmse + "," + maxae + "\n";
            }
        }
        const fs::path cp = fs::path(d) / "reports" / "comparison.csv";
        if (fs::exists(cp)) {
            std::istringstream cin(read_file(cp));
            while (std::getline(cin, line)) {
                if (line.empty() || line[0] == '#') continue;
                if (line.rfind("amp_mm", 0) == 0) {
                    if (table2.empty()) table2 = line + "\n";
                    continue;
                }
                table2 += line + "\n";
                // Best and worst grid corners, the published comparison rows.
                if (line.rfind("0.05,8,", 0) == 0 || line.rfind("0.15,10,", 0) == 0) {
                    bestworst += line + "\n";
                }
            }
        }
    }

    // Merge control-precision rows.
    std::string control = "seed,phase,offset_um,rmse_um,maxae_um,mean_abs_um,completed,injection_success\n";
    bool have_control = false;
    int n_runs = 0, n_completed = 0, n_success = 0;
    for (const auto& d : in_dirs) {
        const fs::path cp = fs::path(d) / "reports" / "control_precision.csv";
        if (!fs::exists(cp)) continue;
        have_control = true;
        std::istringstream in(read_file(cp));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#' || line.rfind("seed,", 0) == 0) continue;
            control += line + "\n";
        }
        const fs::path bs = fs::path(d) / "reports" / "batch_summary.json";
        if (fs::exists(bs)) {
            const json j = json::parse(read_file(bs));
            n_runs += j.value("n_runs", 0);
            n_completed += j.value("n_completed", 0);
            n_success += j.value("n_success", 0);
        }
    }

    if (!have_grid && !have_control) {
        throw std::invalid_argument("inputs contain no grid or run reports");
    }

    const std::string prov_line =
        std::string("# ") + kToolName + " " + kVersion + "\n# config_digest=" + digest + "\n";
    if (have_grid) {
        write_file(out / "table1_lstm_grid.csv", prov_line + table1);
        if (!table2.empty()) {
            write_file(out / "table2_comparison.csv", prov_line + table2);
            std::string hdr =
                "amp_mm,rate_bpm,lstm_rmse_um,fft_rmse_um,lstm_maxae_um,fft_maxae_um\n";
            write_file(out / "table2_bestworst.csv", prov_line + hdr + bestworst);
        }
    }
    if (have_control) {
        write_file(out / "control_precision.csv", prov_line + control);
        json s;
        s["n_runs"] = n_runs;
        s["n_completed"] = n_completed;
        s["n_success"] = n_success;
        s["success_fraction"] =
            n_runs ? static_cast<double>(n_success) / n_runs : 0.0;
        write_file(out / "success_summary.json", s.dump(2) + "\n");
    }

    // Copy plot-ready CSVs next to the tables.
    for (const auto& d : in_dirs) {
        const fs::path plots = fs::path(d) / "plots";
        if (fs::exists(plots)) {
            for (const auto& e : fs::directory_iterator(plots)) {
                write_file(out / "plots" / e.path().filename(), read_file(e.path()));
            }
        }
        const fs::path runs = fs::path(d) / "runs";
        if (fs::exists(runs)) {
            for (const auto& e : fs::recursive_directory_iterator(runs)) {
                if (e.path().filename() == "trace.csv") {
                    const auto rel = fs::relative(e.path(), runs);
                    std::string flat = rel.string();
                    std::replace(flat.begin(), flat.end(), '/', '_');
                    write_file(out / "plots" / ("run_" + flat), read_file(e.path()));
                }
            }
        }
    }
    return kOk;
}

}  // namespace retsim::harness
