#include "cursorprof/adam.hpp"

#include <cmath>

#include "cursorprof/error.hpp"
#include "cursorprof/kernels.hpp"

namespace cursorprof::rnn {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw NumericError("adam_step: size mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double lr_t = cfg.learning_rate / (1.0 - std::pow(cfg.beta1, t));
  const double v_scale = 1.0 / (1.0 - std::pow(cfg.beta2, t));
  kernels::active().adam(params.data(), grads.data(), state.m.data(), state.v.data(),
                         params.size(), cfg.beta1, cfg.beta2, lr_t, v_scale, cfg.epsilon);
}

}  // namespace cursorprof::rnn
