#pragma once

// Bidirectional GRU classifier over padded (x, y, t) sequences.
//
// Cell convention, per direction, gates stacked in the order [z; r; n]:
//
//   z  = sigmoid(W_z x + U_z h + b_z)
//   r  = sigmoid(W_r x + U_r h + b_r)
//   n  = tanh(W_n x + U_n (r * h) + b_n)
//   h' = (1 - z) * h + z * n
//
// The reset gate multiplies h before the recurrent product of the
// candidate. The forward direction reads rows 0..T-1 and the backward
// direction rows T-1..0, padding included unless mask_padding is set. The
// two final states are concatenated, passed through inverted dropout during
// training, and fed to a single sigmoid unit giving p = P(class 1).

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "cursorprof/adam.hpp"
#include "cursorprof/error.hpp"
#include "cursorprof/model.hpp"
#include "cursorprof/rng.hpp"
#include "cursorprof/session.hpp"

namespace cursorprof::rnn {

inline constexpr std::size_t kInputDim = 3;

// All weights in one flat buffer so the optimizer sees a single span.
// Layout per direction d in {0 = forward, 1 = backward}:
//   W (3H x 3), U (3H x H), b (3H)
// followed by the dense layer w (2H) and its bias (1). Gradients use the
// same layout.
class Parameters {
 public:
  Parameters() = default;
  explicit Parameters(std::size_t hidden);

  std::size_t hidden() const { return hidden_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::size_t direction_size() const { return 3 * hidden_ * (kInputDim + hidden_ + 1); }
  double* w(int dir) { return values_.data() + dir_offset(dir); }
  double* u(int dir) { return w(dir) + 3 * hidden_ * kInputDim; }
  double* b(int dir) { return u(dir) + 3 * hidden_ * hidden_; }
  double* dense_w() { return values_.data() + 2 * direction_size(); }
  double& dense_b() { return values_[2 * direction_size() + 2 * hidden_]; }
  const double* w(int dir) const { return values_.data() + dir_offset(dir); }
  const double* u(int dir) const { return w(dir) + 3 * hidden_ * kInputDim; }
  const double* b(int dir) const { return u(dir) + 3 * hidden_ * hidden_; }
  const double* dense_w() const { return values_.data() + 2 * direction_size(); }
  double dense_b() const { return values_[2 * direction_size() + 2 * hidden_]; }

  void zero();
  bool operator==(const Parameters&) const = default;

 private:
  std::size_t dir_offset(int dir) const { return static_cast<std::size_t>(dir) * direction_size(); }

  std::size_t hidden_ = 0;
  std::vector<double> values_;
};

// Glorot-uniform input and dense weights, orthogonal recurrent blocks, zero
// biases.
Parameters init_parameters(std::size_t hidden, Rng& rng);

// One recurrent step of direction `dir`; writes the new state to h_out.
void gru_cell_forward(std::span<const double> x, std::span<const double> h_prev,
                      const Parameters& p, int dir, std::span<double> h_out);

// Activations kept for backpropagation.
struct ForwardCache {
  std::size_t steps = 0;   // timesteps processed per direction
  std::size_t hidden = 0;
  std::size_t rows = 0;    // sequence rows (T)
  std::vector<double> x;   // scaled input, rows x 3, in row order
  // Per direction, per processing step: the incoming state (H) and the
  // gate activations [z; r; n] (3H).
  std::array<std::vector<double>, 2> h_prev, gates;
  std::array<std::vector<std::size_t>, 2> row_of_step;
  std::vector<double> features;  // [h_fwd, h_bwd] before dropout
  std::vector<double> mask;      // dropout multipliers, empty when off
  double logit = 0.0;
  double p = 0.5;
};

struct Prediction {
  double p = 0.5;  // probability of class 1

  int label() const { return p > 0.5 ? 1 : 0; }
};

struct ForwardOptions {
  bool train_mode = false;
  // Inverted-dropout multipliers (0 or 1/(1-q)), 2H entries. Required in
  // train mode when dropout is in use; ignored otherwise.
  std::span<const double> dropout_mask;
  bool mask_padding = false;
  std::array<double, 3> input_scale{1.0, 1.0, 1.0};
};

Prediction bigru_forward(const SequenceTensor& seq, const Parameters& p,
                         const ForwardOptions& opts = {}, ForwardCache* cache = nullptr);

// Adds d(BCE)/d(theta) for one sequence to `grads` and returns the loss.
double bigru_backward(const ForwardCache& cache, const Parameters& p, int label,
                      Parameters& grads);

// Binary cross-entropy from the pre-sigmoid activation, stable for large
// |logit|.
double bce_from_logit(double logit, int label);

std::vector<double> draw_dropout_mask(std::size_t n, double rate, Rng& rng);

struct TrainConfig {
  std::size_t max_len = 100;
  std::size_t hidden = 64;
  double dropout = 0.25;
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 400;
  std::size_t early_stop_patience = 40;
  std::uint64_t seed = 0;
  double validation_fraction = 0.10;
  // Divide each input column by its root-mean-square over the real
  // (unpadded) training rows. Off feeds raw pixels and milliseconds.
  bool standardize_inputs = false;
  bool mask_padding = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LabeledSequence {
  SequenceTensor seq;
  int label = 0;
};

struct BiGruModel {
  Parameters params;
  std::size_t max_len = 100;
  std::array<double, 3> input_scale{1.0, 1.0, 1.0};
  bool mask_padding = false;

  Prediction predict(const SequenceTensor& seq) const;
  // Parallel over sequences.
  std::vector<double> predict(std::span<const SequenceTensor> seqs) const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  BiGruModel model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// Mini-batch Adam on mean BCE with early stopping on a stratified
// validation carve-out; returns the best-validation snapshot. Per-sequence
// gradients are computed in parallel and summed in batch order, so the
// result depends only on the data and cfg.seed.
TrainResult train_bigru(std::span<const LabeledSequence> train, const TrainConfig& cfg);

std::string log_to_csv(std::span<const EpochLog> log);

TrainedModel to_model(const BiGruModel& m, Task task, nlohmann::json metadata = {});
BiGruModel bigru_from(const TrainedModel& m);

}  // namespace cursorprof::rnn
