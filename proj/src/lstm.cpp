#include "retsim/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "retsim/rng.hpp"

namespace retsim::lstm {

namespace {

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& x) {
    return 1.0 / (1.0 + (-x).exp());
}

double window_anchor(std::span<const double> w) {
    std::vector<double> tmp(w.begin(), w.end());
    std::sort(tmp.begin(), tmp.end());
    const std::size_t n = tmp.size();
    return n % 2 == 1 ? tmp[n / 2] : 0.5 * (tmp[n / 2 - 1] + tmp[n / 2]);
}

struct StepCache {
    Eigen::ArrayXXd i, f, g, o;  // H x N, post-activation
    Eigen::ArrayXXd c_prev;      // cell state entering the step
    Eigen::ArrayXXd tanh_c;      // tanh of the new cell state
    Eigen::ArrayXXd h_prev;
};

}  // namespace

void TrainConfig::validate() const {
    if (epochs <= 0) throw std::invalid_argument("epochs must be > 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (hidden_size <= 0) throw std::invalid_argument("hidden_size must be > 0");
    if (window_len <= 0) throw std::invalid_argument("window_len must be > 0");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be > 0");
    if (stride <= 0) throw std::invalid_argument("stride must be > 0");
    if (!(train_frac > 0.0 && train_frac <= 1.0)) {
        throw std::invalid_argument("train_frac must be in (0,1]");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("adam betas must be in (0,1)");
    }
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
}

bool LstmModel::finite() const {
    return w_x.allFinite() && w_h.allFinite() && bias.allFinite() &&
           fc_w.allFinite() && std::isfinite(fc_b) && std::isfinite(norm_scale);
}

void LstmModel::validate() const {
    if (hidden_size <= 0 || window_len <= 0) {
        throw std::invalid_argument("model dimensions must be positive");
    }
    const int h4 = 4 * hidden_size;
    if (w_x.rows() != h4 || w_x.cols() != 1 || w_h.rows() != h4 ||
        w_h.cols() != hidden_size || bias.size() != h4 ||
        fc_w.cols() != hidden_size) {
        throw std::invalid_argument("model parameter shapes are inconsistent");
    }
    if (!finite()) throw std::invalid_argument("model parameters must be finite");
    if (!(norm_scale > 0.0)) throw std::invalid_argument("norm_scale must be > 0");
}

LstmModel make_model(int hidden_size, int window_len, std::uint64_t seed) {
    LstmModel m;
    m.hidden_size = hidden_size;
    m.window_len = window_len;
    m.seed = seed;
    const int h4 = 4 * hidden_size;
    m.w_x.resize(h4, 1);
    m.w_h.resize(h4, hidden_size);
    m.bias.resize(h4);
    m.fc_w.resize(hidden_size);
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    rng::Stream s(rng::key(seed, 0x15f3u));
    auto fill = [&](double* p, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) p[i] = s.next_uniform(-k, k);
    };
    fill(m.w_x.data(), m.w_x.size());
    fill(m.w_h.data(), m.w_h.size());
    fill(m.bias.data(), m.bias.size());
    fill(m.fc_w.data(), m.fc_w.size());
    m.fc_b = s.next_uniform(-k, k);
    return m;
}

double lstm_forward(const LstmModel& model, std::span<const double> window_mm) {
    model.validate();
    if (static_cast<int>(window_mm.size()) != model.window_len) {
        throw std::invalid_argument("window length does not match the model");
    }
    for (double v : window_mm) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite input");
    }
    const double anchor = window_anchor(window_mm);
    const int h = model.hidden_size;
    Eigen::VectorXd hid = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd cell = Eigen::VectorXd::Zero(h);
    for (double v : window_mm) {
        const double x = (v - anchor) / model.norm_scale;
        Eigen::VectorXd gates = model.w_x * x + model.w_h * hid + model.bias;
        const auto ig = sigmoid(gates.segment(0, h).array());
        const auto fg = sigmoid(gates.segment(h, h).array());
        const auto gg = gates.segment(2 * h, h).array().tanh();
        const auto og = sigmoid(gates.segment(3 * h, h).array());
        cell = (fg * cell.array() + ig * gg).matrix();
        hid = (og * cell.array().tanh()).matrix();
    }
    const double y_norm = model.fc_w.dot(hid) + model.fc_b;
    return anchor + model.norm_scale * y_norm;
}

double loss_and_gradients(const LstmModel& model, const Eigen::MatrixXd& x_norm,
                          const Eigen::VectorXd& y_norm, Gradients* grads) {
    const int h = model.hidden_size;
    const int steps = static_cast<int>(x_norm.rows());
    const auto n = x_norm.cols();
    if (y_norm.size() != n) throw std::invalid_argument("batch size mismatch");

    std::vector<StepCache> cache;
    if (grads) cache.resize(steps);
    Eigen::ArrayXXd hid = Eigen::ArrayXXd::Zero(h, n);
    Eigen::ArrayXXd cell = Eigen::ArrayXXd::Zero(h, n);
    for (int t = 0; t < steps; ++t) {
        Eigen::MatrixXd gates = model.w_x * x_norm.row(t) +
                                model.w_h * hid.matrix();
        gates.colwise() += model.bias;
        Eigen::ArrayXXd ig = sigmoid(gates.topRows(h).array());
        Eigen::ArrayXXd fg = sigmoid(gates.middleRows(h, h).array());
        Eigen::ArrayXXd gg = gates.middleRows(2 * h, h).array().tanh();
        Eigen::ArrayXXd og = sigmoid(gates.bottomRows(h).array());
        Eigen::ArrayXXd c_new = fg * cell + ig * gg;
        Eigen::ArrayXXd tc = c_new.tanh();
        if (grads) {
            cache[t] = {std::move(ig), std::move(fg), std::move(gg),
                        std::move(og), cell, tc, hid};
            cell = std::move(c_new);
            hid = cache[t].o * tc;
        } else {
            cell = std::move(c_new);
            hid = og * tc;
        }
    }
    const Eigen::VectorXd pred =
        (model.fc_w * hid.matrix()).transpose() +
        Eigen::VectorXd::Constant(n, model.fc_b);
    const Eigen::VectorXd err = pred - y_norm;
    const double loss = err.squaredNorm() / static_cast<double>(n);

    if (!grads) return loss;

    grads->w_x = Eigen::MatrixXd::Zero(4 * h, 1);
    grads->w_h = Eigen::MatrixXd::Zero(4 * h, h);
    grads->bias = Eigen::VectorXd::Zero(4 * h);
    grads->fc_w = Eigen::RowVectorXd::Zero(h);
    grads->fc_b = 0.0;

    const Eigen::VectorXd dpred = 2.0 * err / static_cast<double>(n);
    grads->fc_w = (hid.matrix() * dpred).transpose();
    grads->fc_b = dpred.sum();

    Eigen::ArrayXXd dh = (model.fc_w.transpose() * dpred.transpose()).array();
    Eigen::ArrayXXd dc = Eigen::ArrayXXd::Zero(h, n);
    Eigen::MatrixXd dgates(4 * h, n);
    for (int t = steps - 1; t >= 0; --t) {
        const StepCache& s = cache[t];
        const Eigen::ArrayXXd d_o = dh * s.tanh_c;
        dc += dh * s.o * (1.0 - s.tanh_c.square());
        const Eigen::ArrayXXd d_i = dc * s.g;
        const Eigen::ArrayXXd d_g = dc * s.i;
        const Eigen::ArrayXXd d_f = dc * s.c_prev;
        dgates.topRows(h) = (d_i * s.i * (1.0 - s.i)).matrix();
        dgates.middleRows(h, h) = (d_f * s.f * (1.0 - s.f)).matrix();
        dgates.middleRows(2 * h, h) = (d_g * (1.0 - s.g.square())).matrix();
        dgates.bottomRows(h) = (d_o * s.o * (1.0 - s.o)).matrix();

        grads->w_x += dgates * x_norm.row(t).transpose();
        grads->w_h += dgates * s.h_prev.matrix().transpose();
        grads->bias += dgates.rowwise().sum();

        dh = (model.w_h.transpose() * dgates).array();
        dc *= s.f;
    }
    return loss;
}

Eigen::VectorXd pack_params(const LstmModel& m) {
    const Eigen::Index total =
        m.w_x.size() + m.w_h.size() + m.bias.size() + m.fc_w.size() + 1;
    Eigen::VectorXd flat(total);
    Eigen::Index at = 0;
    auto put = [&](const double* p, Eigen::Index sz) {
        std::copy(p, p + sz, flat.data() + at);
        at += sz;
    };
    put(m.w_x.data(), m.w_x.size());
    put(m.w_h.data(), m.w_h.size());
    put(m.bias.data(), m.bias.size());
    put(m.fc_w.data(), m.fc_w.size());
    flat[at] = m.fc_b;
    return flat;
}

void unpack_params(LstmModel& m, const Eigen::VectorXd& flat) {
    Eigen::Index at = 0;
    auto get = [&](double* p, Eigen::Index sz) {
        std::copy(flat.data() + at, flat.data() + at + sz, p);
        at += sz;
    };
    get(m.w_x.data(), m.w_x.size());
    get(m.w_h.data(), m.w_h.size());
    get(m.bias.data(), m.bias.size());
    get(m.fc_w.data(), m.fc_w.size());
    m.fc_b = flat[at];
}

Eigen::VectorXd pack_grads(const Gradients& g) {
    const Eigen::Index total =
        g.w_x.size() + g.w_h.size() + g.bias.size() + g.fc_w.size() + 1;
    Eigen::VectorXd flat(total);
    Eigen::Index at = 0;
    auto put = [&](const double* p, Eigen::Index sz) {
        std::copy(p, p + sz, flat.data() + at);
        at += sz;
    };
    put(g.w_x.data(), g.w_x.size());
    put(g.w_h.data(), g.w_h.size());
    put(g.bias.data(), g.bias.size());
    put(g.fc_w.data(), g.fc_w.size());
    flat[at] = g.fc_b;
    return flat;
}

TrainResult lstm_train(const std::vector<std::vector<double>>& series_mm,
                       const TrainConfig& cfg) {
    cfg.validate();
    const int w = cfg.window_len;

    struct Window {
        const double* begin;
        double target;
    };
    std::vector<Window> train_windows, val_windows;
    for (const auto& s : series_mm) {
        if (static_cast<int>(s.size()) < w + 2) continue;
        for (double v : s) {
            if (!std::isfinite(v)) throw std::invalid_argument("non-finite series value");
        }
        const std::size_t n_win = (s.size() - w - 1) / cfg.stride + 1;
        const auto n_train = static_cast<std::size_t>(
            std::floor(cfg.train_frac * static_cast<double>(n_win)));
        for (std::size_t k = 0; k < n_win; ++k) {
            const std::size_t j = k * cfg.stride;
            Window win{s.data() + j, s[j + w]};
            (k < n_train ? train_windows : val_windows).push_back(win);
        }
    }
    if (train_windows.empty()) {
        throw std::invalid_argument("not enough data: need a series longer than window_len + 1");
    }

    // Anchor scale from training windows only.
    double sum_sq = 0.0;
    std::size_t count = 0;
    std::vector<double> anchors(train_windows.size());
    for (std::size_t k = 0; k < train_windows.size(); ++k) {
        const auto& win = train_windows[k];
        anchors[k] = window_anchor({win.begin, static_cast<std::size_t>(w)});
        for (int i = 0; i < w; ++i) {
            const double d = win.begin[i] - anchors[k];
            sum_sq += d * d;
            ++count;
        }
    }
    double scale = std::sqrt(sum_sq / static_cast<double>(count));
    if (!(scale > 1e-12)) scale = 1.0;  // constant data

    LstmModel model = make_model(cfg.hidden_size, w, cfg.seed);
    model.norm_scale = scale;

    auto batch_of = [&](const std::vector<Window>& wins,
                        std::span<const std::size_t> idx, Eigen::MatrixXd& x,
                        Eigen::VectorXd& y, bool cached_anchors) {
        x.resize(w, static_cast<Eigen::Index>(idx.size()));
        y.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t c = 0; c < idx.size(); ++c) {
            const auto& win = wins[idx[c]];
            const double a = cached_anchors
                                 ? anchors[idx[c]]
                                 : window_anchor({win.begin, static_cast<std::size_t>(w)});
            for (int r = 0; r < w; ++r) {
                x(r, static_cast<Eigen::Index>(c)) = (win.begin[r] - a) / scale;
            }
            y(static_cast<Eigen::Index>(c)) = (win.target - a) / scale;
        }
    };

    // Adam state, one slot per flat parameter.
    Eigen::VectorXd params = pack_params(model);
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(params.size());
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(params.size());
    std::uint64_t adam_t = 0;

    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), 0);
    rng::Stream shuffler(rng::key(cfg.seed, 0x51u, 0xadau));

    TrainResult result;
    result.epoch_loss.reserve(cfg.epochs);
    Eigen::MatrixXd xb;
    Eigen::VectorXd yb;
    Gradients grads;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng::shuffle(order, shuffler);
        double epoch_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), at + cfg.batch_size);
            batch_of(train_windows, {order.data() + at, end - at}, xb, yb, true);
            const double loss = loss_and_gradients(model, xb, yb, &grads);
            if (!std::isfinite(loss)) {
                throw std::runtime_error(
                    "training diverged: non-finite loss at epoch " +
                    std::to_string(epoch));
            }
            epoch_sum += loss;
            ++n_batches;
            const Eigen::VectorXd gflat = pack_grads(grads);
            ++adam_t;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_t));
            m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * gflat;
            m2 = cfg.beta2 * m2.array().matrix() +
                 (1.0 - cfg.beta2) * gflat.array().square().matrix();
            params.array() -= cfg.learning_rate * (m1.array() / bc1) /
                              ((m2.array() / bc2).sqrt() + cfg.epsilon);
            unpack_params(model, params);
        }
        result.epoch_loss.push_back(epoch_sum / static_cast<double>(n_batches));
    }

    // Final full-set losses.
    std::vector<std::size_t> all_train(train_windows.size());
    std::iota(all_train.begin(), all_train.end(), 0);
    batch_of(train_windows, all_train, xb, yb, true);
    model.final_train_mse = loss_and_gradients(model, xb, yb, nullptr);
    if (!val_windows.empty()) {
        std::vector<std::size_t> all_val(val_windows.size());
        std::iota(all_val.begin(), all_val.end(), 0);
        batch_of(val_windows, all_val, xb, yb, false);
        model.final_val_mse = loss_and_gradients(model, xb, yb, nullptr);
    }
    result.model = std::move(model);
    return result;
}

std::string model_to_text(const LstmModel& m) {
    std::string out = "retsim-lstm v1\n";
    char buf[64];
    auto line = [&](const char* k, const std::string& v) {
        out += k;
        out += ' ';
        out += v;
        out += '\n';
    };
    line("hidden_size", std::to_string(m.hidden_size));
    line("window_len", std::to_string(m.window_len));
    line("seed", std::to_string(m.seed));
    line("config_digest", m.config_digest.empty() ? "-" : m.config_digest);
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    line("norm_scale", num(m.norm_scale));
    line("final_train_mse", num(m.final_train_mse));
    line("final_val_mse", num(m.final_val_mse));
    const Eigen::VectorXd flat = pack_params(m);
    out += "params " + std::to_string(flat.size()) + "\n";
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
        out += num(flat[i]);
        out += '\n';
    }
    return out;
}

LstmModel model_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "retsim-lstm v1") {
        throw std::invalid_argument("not a retsim-lstm v1 model file");
    }
    int hidden = 0, window = 0;
    std::uint64_t seed = 0;
    std::string digest;
    double norm_scale = 1.0, train_mse = 0.0, val_mse = 0.0;
    long n_params = -1;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string k;
        ls >> k;
        if (k == "hidden_size") ls >> hidden;
        else if (k == "window_len") ls >> window;
        else if (k == "seed") ls >> seed;
        else if (k == "config_digest") ls >> digest;
        else if (k == "norm_scale") ls >> norm_scale;
        else if (k == "final_train_mse") ls >> train_mse;
        else if (k == "final_val_mse") ls >> val_mse;
        else if (k == "params") {
            ls >> n_params;
            break;
        } else {
            throw std::invalid_argument("unknown model field: " + k);
        }
    }
    if (hidden <= 0 || window <= 0 || n_params < 0) {
        throw std::invalid_argument("incomplete model header");
    }
    LstmModel m = make_model(hidden, window, seed);
    m.config_digest = digest == "-" ? "" : digest;
    m.norm_scale = norm_scale;
    m.final_train_mse = train_mse;
    m.final_val_mse = val_mse;
    Eigen::VectorXd flat(n_params);
    for (long i = 0; i < n_params; ++i) {
        if (!std::getline(in, line)) throw std::invalid_argument("truncated model file");
        flat[i] = std::stod(line);
    }
    if (flat.size() != pack_params(m).size()) {
        throw std::invalid_argument("parameter count does not match shapes");
    }
    unpack_params(m, flat);
    m.validate();
    return m;
}

}  // namespace retsim::lstm
