#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "retsim/predictor.hpp"

namespace retsim::lstm {

struct TrainConfig {
    int epochs = 300;
    double learning_rate = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int hidden_size = 32;
    int window_len = 20;
    int batch_size = 64;
    int stride = 1;
    double train_frac = 0.8;  // chronological split per series
    std::uint64_t seed = 0;

    void validate() const;
};

// Single recurrent layer + fully connected head, input size 1. Gate blocks
// are stacked input/forget/cell/output in the leading dimension. Windows are
// normalized by subtracting their own median and dividing by norm_scale (the
// spread of anchored training windows), so the model is invariant to the
// absolute depth level.
struct LstmModel {
    int hidden_size = 0;
    int window_len = 20;
    Eigen::MatrixXd w_x;    // 4H x 1
    Eigen::MatrixXd w_h;    // 4H x H
    Eigen::VectorXd bias;   // 4H
    Eigen::RowVectorXd fc_w;  // 1 x H
    double fc_b = 0.0;
    double norm_scale = 1.0;
    double final_train_mse = 0.0;  // normalized units
    double final_val_mse = 0.0;
    std::uint64_t seed = 0;
    std::string config_digest;

    bool finite() const;
    void validate() const;
};

LstmModel make_model(int hidden_size, int window_len, std::uint64_t seed);

// One-step-ahead prediction from a window of window_len values (mm, oldest
// first). Pure function; rejects non-finite input.
double lstm_forward(const LstmModel& model, std::span<const double> window_mm);

struct Gradients {
    Eigen::MatrixXd w_x;
    Eigen::MatrixXd w_h;
    Eigen::VectorXd bias;
    Eigen::RowVectorXd fc_w;
    double fc_b = 0.0;
};

// MSE loss over a normalized batch (columns = windows) and its analytic
// gradients via backpropagation through time. Exposed so the tests can pit it
// against central finite differences.
double loss_and_gradients(const LstmModel& model, const Eigen::MatrixXd& x_norm,
                          const Eigen::VectorXd& y_norm, Gradients* grads);

// Flat parameter vector in a fixed order, for optimizers and gradient checks.
Eigen::VectorXd pack_params(const LstmModel& model);
void unpack_params(LstmModel& model, const Eigen::VectorXd& flat);
Eigen::VectorXd pack_grads(const Gradients& g);

struct TrainResult {
    LstmModel model;
    std::vector<double> epoch_loss;  // mean minibatch loss per epoch
};

// Trains on stride-spaced windows of the given ILM series (mm). Minibatch
// Adam, deterministic for a fixed seed. Throws if there is not enough data or
// the loss diverges.
TrainResult lstm_train(const std::vector<std::vector<double>>& series_mm,
                       const TrainConfig& cfg);

std::string model_to_text(const LstmModel& model);
LstmModel model_from_text(const std::string& text);

class LstmPredictor : public predictor::OneStepPredictor {
  public:
    explicit LstmPredictor(LstmModel model) : model_(std::move(model)) {
        model_.validate();
    }
    std::size_t min_history() const override {
        return static_cast<std::size_t>(model_.window_len);
    }
    double predict_next(std::span<const double> history_mm, double,
                        double) const override {
        return lstm_forward(model_, history_mm.subspan(
                                        history_mm.size() - min_history()));
    }
    const LstmModel& model() const { return model_; }

  private:
    LstmModel model_;
};

}  // namespace retsim::lstm
