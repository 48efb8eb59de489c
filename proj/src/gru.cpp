#include "cursorprof/gru.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cursorprof/kernels.hpp"
#include "cursorprof/parallel.hpp"

namespace cursorprof::rnn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One step writing gate activations [z; r; n] to `gates` (3H) and the new
// state to h_out. scratch holds H doubles.
void cell(const double* x, const double* h_prev, const Parameters& p, int dir, double* gates,
          double* h_out, double* scratch) {
  const std::size_t H = p.hidden();
  const auto& k = kernels::active();
  const double* b = p.b(dir);
  std::copy(b, b + 3 * H, gates);
  k.gemv(p.w(dir), 3 * H, kInputDim, x, gates);
  k.gemv(p.u(dir), 2 * H, H, h_prev, gates);
  double* z = gates;
  double* r = gates + H;
  double* n = gates + 2 * H;
  for (std::size_t i = 0; i < 2 * H; ++i) gates[i] = sigmoid(gates[i]);
  for (std::size_t i = 0; i < H; ++i) scratch[i] = r[i] * h_prev[i];
  k.gemv(p.u(dir) + 2 * H * H, H, H, scratch, n);
  for (std::size_t i = 0; i < H; ++i) {
    n[i] = std::tanh(n[i]);
    h_out[i] = (1.0 - z[i]) * h_prev[i] + z[i] * n[i];
  }
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace

Parameters::Parameters(std::size_t hidden)
    : hidden_(hidden), values_(2 * 3 * hidden * (kInputDim + hidden + 1) + 2 * hidden + 1, 0.0) {
  if (hidden == 0) throw ConfigError("hidden size must be positive");
}

void Parameters::zero() { std::fill(values_.begin(), values_.end(), 0.0); }

Parameters init_parameters(std::size_t hidden, Rng& rng) {
  Parameters p(hidden);
  const std::size_t H = hidden;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int dir = 0; dir < 2; ++dir) {
    const double lim_w = std::sqrt(6.0 / static_cast<double>(kInputDim + 3 * H));
    std::uniform_real_distribution<double> uw(-lim_w, lim_w);
    for (std::size_t i = 0; i < 3 * H * kInputDim; ++i) p.w(dir)[i] = uw(rng);

    // 3H x H with orthonormal columns: Gram-Schmidt on a Gaussian matrix,
    // signs fixed so the implied R has a positive diagonal.
    std::vector<double> q(3 * H * H);
    for (auto& v : q) v = normal(rng);
    for (std::size_t c = 0; c < H; ++c) {
      for (std::size_t prev = 0; prev < c; ++prev) {
        double proj = 0.0;
        for (std::size_t r = 0; r < 3 * H; ++r) proj += q[r * H + prev] * q[r * H + c];
        for (std::size_t r = 0; r < 3 * H; ++r) q[r * H + c] -= proj * q[r * H + prev];
      }
      double norm = 0.0;
      for (std::size_t r = 0; r < 3 * H; ++r) norm += q[r * H + c] * q[r * H + c];
      norm = std::sqrt(norm);
      for (std::size_t r = 0; r < 3 * H; ++r) q[r * H + c] /= norm;
    }
    std::copy(q.begin(), q.end(), p.u(dir));
  }
  const double lim_d = std::sqrt(6.0 / static_cast<double>(2 * H + 1));
  std::uniform_real_distribution<double> ud(-lim_d, lim_d);
  for (std::size_t i = 0; i < 2 * H; ++i) p.dense_w()[i] = ud(rng);
  return p;
}

void gru_cell_forward(std::span<const double> x, std::span<const double> h_prev,
                      const Parameters& p, int dir, std::span<double> h_out) {
  const std::size_t H = p.hidden();
  if (x.size() != kInputDim || h_prev.size() != H || h_out.size() != H)
    throw NumericError("gru_cell_forward: shape mismatch");
  if (dir != 0 && dir != 1) throw NumericError("direction must be 0 or 1");
  check_finite(x, "GRU input");
  check_finite(h_prev, "GRU state");
  std::vector<double> gates(3 * H), scratch(H), out(H);
  cell(x.data(), h_prev.data(), p, dir, gates.data(), out.data(), scratch.data());
  std::copy(out.begin(), out.end(), h_out.begin());
}

Prediction bigru_forward(const SequenceTensor& seq, const Parameters& p, const ForwardOptions& opts,
                         ForwardCache* cache) {
  const std::size_t H = p.hidden();
  const std::size_t T = seq.max_len;
  if (H == 0 || seq.values.size() != T * kInputDim || T == 0)
    throw NumericError("bigru_forward: sequence shape mismatch");
  const bool dropout = opts.train_mode && !opts.dropout_mask.empty();
  if (dropout && opts.dropout_mask.size() != 2 * H)
    throw NumericError("bigru_forward: dropout mask has the wrong size");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.hidden = H;
  c.rows = T;
  c.x.resize(T * kInputDim);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < kInputDim; ++j)
      c.x[i * kInputDim + j] = seq.values[i * kInputDim + j] / opts.input_scale[j];
  check_finite(c.x, "GRU input");

  const std::size_t L = opts.mask_padding ? std::clamp<std::size_t>(seq.true_length, 1, T) : T;
  c.steps = L;
  c.features.assign(2 * H, 0.0);
  std::vector<double> scratch(H), h(H), next(H);
  for (int dir = 0; dir < 2; ++dir) {
    auto& rows = c.row_of_step[dir];
    rows.resize(L);
    for (std::size_t s = 0; s < L; ++s) rows[s] = dir == 0 ? s : L - 1 - s;
    c.h_prev[dir].resize(L * H);
    c.gates[dir].resize(L * 3 * H);
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t s = 0; s < L; ++s) {
      std::copy(h.begin(), h.end(), c.h_prev[dir].begin() + static_cast<std::ptrdiff_t>(s * H));
      cell(c.x.data() + rows[s] * kInputDim, h.data(), p, dir, c.gates[dir].data() + s * 3 * H,
           next.data(), scratch.data());
      std::swap(h, next);
    }
    std::copy(h.begin(), h.end(), c.features.begin() + static_cast<std::ptrdiff_t>(dir * H));
  }

  if (dropout) {
    c.mask.assign(opts.dropout_mask.begin(), opts.dropout_mask.end());
  } else {
    c.mask.clear();
  }
  double logit = p.dense_b();
  for (std::size_t i = 0; i < 2 * H; ++i)
    logit += p.dense_w()[i] * c.features[i] * (dropout ? c.mask[i] : 1.0);
  if (!std::isfinite(logit)) throw NumericError("non-finite logit");
  c.logit = logit;
  c.p = sigmoid(logit);
  return Prediction{c.p};
}

double bce_from_logit(double logit, int label) {
  // softplus(z) - y z
  const double softplus = std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit)));
  return softplus - static_cast<double>(label) * logit;
}

double bigru_backward(const ForwardCache& c, const Parameters& p, int label, Parameters& grads) {
  const std::size_t H = p.hidden();
  if (c.hidden != H || grads.hidden() != H) throw NumericError("bigru_backward: shape mismatch");
  const auto& k = kernels::active();
  const bool dropout = !c.mask.empty();

  const double dlogit = c.p - static_cast<double>(label);
  std::vector<double> dfeat(2 * H);
  for (std::size_t i = 0; i < 2 * H; ++i) {
    const double m = dropout ? c.mask[i] : 1.0;
    grads.dense_w()[i] += dlogit * c.features[i] * m;
    dfeat[i] = dlogit * p.dense_w()[i] * m;
  }
  grads.dense_b() += dlogit;

  std::vector<double> dh(H), dhp(H), dg(3 * H), drh(H), rh(H);
  for (int dir = 0; dir < 2; ++dir) {
    std::copy(dfeat.begin() + static_cast<std::ptrdiff_t>(dir * H),
              dfeat.begin() + static_cast<std::ptrdiff_t>((dir + 1) * H), dh.begin());
    const double* U = p.u(dir);
    double* dW = grads.w(dir);
    double* dU = grads.u(dir);
    double* db = grads.b(dir);
    for (std::size_t s = c.steps; s-- > 0;) {
      const double* g = c.gates[dir].data() + s * 3 * H;
      const double* z = g;
      const double* r = g + H;
      const double* n = g + 2 * H;
      const double* hp = c.h_prev[dir].data() + s * H;
      const double* x = c.x.data() + c.row_of_step[dir][s] * kInputDim;
      for (std::size_t i = 0; i < H; ++i) {
        const double dn = dh[i] * z[i];
        const double dz = dh[i] * (n[i] - hp[i]);
        dhp[i] = dh[i] * (1.0 - z[i]);
        dg[2 * H + i] = dn * (1.0 - n[i] * n[i]);
        dg[i] = dz * z[i] * (1.0 - z[i]);
        rh[i] = r[i] * hp[i];
      }
      std::fill(drh.begin(), drh.end(), 0.0);
      k.gemv_t(U + 2 * H * H, H, H, dg.data() + 2 * H, drh.data());
      for (std::size_t i = 0; i < H; ++i) {
        dg[H + i] = drh[i] * hp[i] * r[i] * (1.0 - r[i]);
        dhp[i] += drh[i] * r[i];
      }
      k.gemv_t(U, 2 * H, H, dg.data(), dhp.data());
      k.ger(dg.data(), 3 * H, x, kInputDim, dW);
      k.ger(dg.data(), 2 * H, hp, H, dU);
      k.ger(dg.data() + 2 * H, H, rh.data(), H, dU + 2 * H * H);
      k.axpy(1.0, dg.data(), db, 3 * H);
      std::swap(dh, dhp);
    }
  }
  return bce_from_logit(c.logit, label);
}

std::vector<double> draw_dropout_mask(std::size_t n, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  std::vector<double> mask(n, 1.0);
  if (rate == 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  for (auto& m : mask) m = drop(rng) ? 0.0 : keep;
  return mask;
}

void TrainConfig::validate() const {
  if (max_len == 0 || hidden == 0 || batch_size == 0 || max_epochs == 0)
    throw ConfigError("sequence model sizes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
    throw ConfigError("Adam decay rates must lie in (0, 1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"max_len", max_len},
          {"hidden", hidden},
          {"dropout", dropout},
          {"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_epsilon", adam_epsilon},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience},
          {"seed", seed},
          {"validation_fraction", validation_fraction},
          {"standardize_inputs", standardize_inputs},
          {"mask_padding", mask_padding}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.max_len = j.value("max_len", c.max_len);
  c.hidden = j.value("hidden", c.hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.seed = j.value("seed", c.seed);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.standardize_inputs = j.value("standardize_inputs", c.standardize_inputs);
  c.mask_padding = j.value("mask_padding", c.mask_padding);
  return c;
}

Prediction BiGruModel::predict(const SequenceTensor& seq) const {
  ForwardOptions opts;
  opts.mask_padding = mask_padding;
  opts.input_scale = input_scale;
  return bigru_forward(seq, params, opts);
}

std::vector<double> BiGruModel::predict(std::span<const SequenceTensor> seqs) const {
  std::vector<double> out(seqs.size());
  parallel_for(seqs.size(), [&](std::size_t i) { out[i] = predict(seqs[i]).p; });
  return out;
}

namespace {

double mean_loss(const BiGruModel& model, std::span<const LabeledSequence> data,
                 std::span<const std::size_t> idx) {
  std::vector<double> losses(idx.size());
  ForwardOptions opts;
  opts.mask_padding = model.mask_padding;
  opts.input_scale = model.input_scale;
  parallel_for(idx.size(), [&](std::size_t i) {
    ForwardCache c;
    bigru_forward(data[idx[i]].seq, model.params, opts, &c);
    losses[i] = bce_from_logit(c.logit, data[idx[i]].label);
  });
  double s = 0.0;
  for (double l : losses) s += l;
  return idx.empty() ? 0.0 : s / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train_bigru(std::span<const LabeledSequence> train, const TrainConfig& cfg) {
  cfg.validate();
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const int y = train[i].label;
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    if (train[i].seq.max_len != cfg.max_len) throw DataError("sequence length differs from max_len");
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty())
    throw DataError("sequence model training needs both classes");

  std::vector<std::size_t> fit, val;
  Rng split_rng = make_rng(cfg.seed, stream::kValidation);
  for (auto& c : by_class) {
    std::shuffle(c.begin(), c.end(), split_rng);
    const auto k = std::min(c.size() - 1, static_cast<std::size_t>(std::llround(
                                              static_cast<double>(c.size()) * cfg.validation_fraction)));
    val.insert(val.end(), c.begin(), c.begin() + static_cast<std::ptrdiff_t>(k));
    fit.insert(fit.end(), c.begin() + static_cast<std::ptrdiff_t>(k), c.end());
  }
  std::sort(fit.begin(), fit.end());
  std::sort(val.begin(), val.end());

  BiGruModel model;
  model.max_len = cfg.max_len;
  model.mask_padding = cfg.mask_padding;
  if (cfg.standardize_inputs) {
    std::array<double, 3> ss{};
    double count = 0.0;
    for (std::size_t i : fit) {
      const auto& s = train[i].seq;
      for (std::size_t r = 0; r < s.true_length; ++r)
        for (std::size_t j = 0; j < 3; ++j) ss[j] += s.values[r * 3 + j] * s.values[r * 3 + j];
      count += static_cast<double>(s.true_length);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      const double rms = std::sqrt(ss[j] / std::max(1.0, count));
      model.input_scale[j] = rms > 0.0 ? rms : 1.0;
    }
  }
  Rng init_rng = make_rng(cfg.seed, stream::kInit);
  model.params = init_parameters(cfg.hidden, init_rng);

  const AdamConfig adam{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon};
  AdamState state(model.params.size());
  const std::size_t B = cfg.batch_size;
  std::vector<Parameters> slot_grads(B, Parameters(cfg.hidden));
  std::vector<ForwardCache> slot_cache(B);
  std::vector<double> slot_loss(B);
  std::vector<std::vector<double>> slot_mask(B);
  Parameters batch_grad(cfg.hidden);

  TrainResult result;
  BiGruModel best = model;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  const bool monitor_val = !val.empty();

  ForwardOptions opts;
  opts.train_mode = true;
  opts.mask_padding = model.mask_padding;
  opts.input_scale = model.input_scale;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order = fit;
    Rng shuffle_rng = make_rng(cfg.seed, stream::kShuffle, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Rng dropout_rng = make_rng(cfg.seed, stream::kDropout, epoch);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t count = std::min(B, order.size() - start);
      for (std::size_t s = 0; s < count; ++s)
        slot_mask[s] = draw_dropout_mask(2 * cfg.hidden, cfg.dropout, dropout_rng);
      parallel_for(count, [&](std::size_t s) {
        const LabeledSequence& ex = train[order[start + s]];
        ForwardOptions o = opts;
        o.dropout_mask = slot_mask[s];
        slot_grads[s].zero();
        bigru_forward(ex.seq, model.params, o, &slot_cache[s]);
        slot_loss[s] = bigru_backward(slot_cache[s], model.params, ex.label, slot_grads[s]);
      });
      batch_grad.zero();
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t s = 0; s < count; ++s) {
        kernels::axpy(inv, slot_grads[s].values(), batch_grad.values());
        epoch_loss += slot_loss[s];
      }
      check_finite(batch_grad.values(), "gradient");
      adam_step(model.params.values(), batch_grad.values(), state, adam);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(order.size());
    entry.val_loss = monitor_val ? mean_loss(model, train, val) : entry.train_loss;
    result.log.push_back(entry);
    if (entry.val_loss < best_loss) {
      best_loss = entry.val_loss;
      best = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  result.model = std::move(best);
  return result;
}

std::string log_to_csv(std::span<const EpochLog> log) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
  return out.str();
}

TrainedModel to_model(const BiGruModel& m, Task task, nlohmann::json metadata) {
  nlohmann::json p;
  p["hidden"] = m.params.hidden();
  p["input_dim"] = kInputDim;
  p["max_len"] = m.max_len;
  p["mask_padding"] = m.mask_padding;
  p["input_scale"] = m.input_scale;
  p["layout"] = "per direction W(3Hx3) U(3HxH) b(3H), gates [z r n]; dense w(2H) b";
  p["values"] = std::vector<double>(m.params.values().begin(), m.params.values().end());
  return {ModelKind::bigru, task, std::move(p), std::move(metadata)};
}

BiGruModel bigru_from(const TrainedModel& m) {
  if (m.kind != ModelKind::bigru) throw DataError("model is not a BiGRU");
  const auto& p = m.parameters;
  BiGruModel out;
  if (p.at("input_dim").get<std::size_t>() != kInputDim) throw DataError("unsupported input dimension");
  out.params = Parameters(p.at("hidden").get<std::size_t>());
  out.max_len = p.at("max_len").get<std::size_t>();
  out.mask_padding = p.at("mask_padding").get<bool>();
  out.input_scale = p.at("input_scale").get<std::array<double, 3>>();
  const auto values = p.at("values").get<std::vector<double>>();
  if (values.size() != out.params.size()) throw DataError("BiGRU parameter count mismatch");
  std::copy(values.begin(), values.end(), out.params.values().begin());
  return out;
}

}  // namespace cursorprof::rnn
