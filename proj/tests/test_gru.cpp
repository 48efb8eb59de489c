#include <doctest.h>

#include <cmath>
#include <random>

#include "cursorprof/gru.hpp"
#include "cursorprof/parallel.hpp"

using namespace cursorprof;
using namespace cursorprof::rnn;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Straightforward re-derivation of the forward pass, indexing the flat
// buffer directly: W is 3H x 3, U is 3H x H, rows ordered z, r, n.
double oracle_logit(const std::vector<double>& xs, std::size_t T, const Parameters& p,
                    const std::vector<double>& mask) {
  const std::size_t H = p.hidden();
  std::vector<double> feat;
  for (int dir = 0; dir < 2; ++dir) {
    const double* W = p.w(dir);
    const double* U = p.u(dir);
    const double* b = p.b(dir);
    std::vector<double> h(H, 0.0);
    for (std::size_t s = 0; s < T; ++s) {
      const std::size_t row = dir == 0 ? s : T - 1 - s;
      const double* x = &xs[row * 3];
      std::vector<double> z(H), r(H), n(H), hn(H);
      for (std::size_t i = 0; i < H; ++i) {
        double az = b[i], ar = b[H + i];
        for (std::size_t k = 0; k < 3; ++k) {
          az += W[i * 3 + k] * x[k];
          ar += W[(H + i) * 3 + k] * x[k];
        }
        for (std::size_t k = 0; k < H; ++k) {
          az += U[i * H + k] * h[k];
          ar += U[(H + i) * H + k] * h[k];
        }
        z[i] = sig(az);
        r[i] = sig(ar);
      }
      for (std::size_t i = 0; i < H; ++i) {
        double an = b[2 * H + i];
        for (std::size_t k = 0; k < 3; ++k) an += W[(2 * H + i) * 3 + k] * x[k];
        for (std::size_t k = 0; k < H; ++k) an += U[(2 * H + i) * H + k] * r[k] * h[k];
        n[i] = std::tanh(an);
        hn[i] = (1.0 - z[i]) * h[i] + z[i] * n[i];
      }
      h = hn;
    }
    feat.insert(feat.end(), h.begin(), h.end());
  }
  double logit = p.dense_b();
  for (std::size_t i = 0; i < 2 * H; ++i)
    logit += p.dense_w()[i] * feat[i] * (mask.empty() ? 1.0 : mask[i]);
  return logit;
}

SequenceTensor random_seq(std::mt19937_64& rng, std::size_t T, std::size_t len, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  SequenceTensor s;
  s.max_len = T;
  s.true_length = len;
  s.values.assign(T * 3, 0.0);
  for (std::size_t i = 0; i < len * 3; ++i) s.values[i] = g(rng);
  return s;
}

Parameters random_params(std::size_t H, std::uint64_t seed) {
  Rng rng(seed);
  Parameters p = init_parameters(H, rng);
  std::normal_distribution<double> g(0.0, 0.5);
  // nonzero biases so every path carries gradient
  for (int d = 0; d < 2; ++d)
    for (std::size_t i = 0; i < 3 * H; ++i) p.b(d)[i] = g(rng);
  p.dense_b() = g(rng);
  return p;
}

double loss_at(const SequenceTensor& seq, const Parameters& p, const ForwardOptions& opts, int y) {
  ForwardCache c;
  bigru_forward(seq, p, opts, &c);
  return bce_from_logit(c.logit, y);
}

}  // namespace

TEST_CASE("zero parameters give p = 1/2 and loss ln 2") {
  Parameters p(3);
  std::mt19937_64 rng(1);
  const auto seq = random_seq(rng, 6, 6);
  const auto pred = bigru_forward(seq, p);
  CHECK(pred.p == 0.5);
  CHECK(pred.label() == 0);
  CHECK(bce_from_logit(0.0, 1) == doctest::Approx(std::log(2.0)));
  CHECK(p.size() == 2 * 9 * (3 + 3 + 1) + 6 + 1);
}

TEST_CASE("hidden size 1 by hand") {
  Parameters p(1);
  p.w(0)[2 * 3 + 0] = 1.0;  // W_n, x component
  p.w(1)[2 * 3 + 0] = 1.0;
  p.dense_w()[0] = 1.0;
  p.dense_w()[1] = 1.0;
  SequenceTensor s;
  s.max_len = 1;
  s.true_length = 1;
  s.values = {1.0, 0.0, 0.0};
  ForwardCache c;
  bigru_forward(s, p, {}, &c);
  // z = 1/2, n = tanh 1, h = tanh(1)/2 per direction
  CHECK(c.features[0] == doctest::Approx(0.5 * std::tanh(1.0)));
  CHECK(c.logit == doctest::Approx(std::tanh(1.0)));
  CHECK(c.p == doctest::Approx(sig(std::tanh(1.0))));
}

TEST_CASE("forward pass matches an independent oracle") {
  std::mt19937_64 rng(2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = random_params(2, seed);
    const auto seq = random_seq(rng, 3, 3);
    ForwardCache c;
    bigru_forward(seq, p, {}, &c);
    CHECK(c.logit == doctest::Approx(oracle_logit(seq.values, 3, p, {})).epsilon(1e-10));
  }
}

TEST_CASE("masked padding stops at the true length") {
  std::mt19937_64 rng(3);
  const auto p = random_params(2, 5);
  auto seq = random_seq(rng, 6, 4);
  ForwardOptions opts;
  opts.mask_padding = true;
  ForwardCache c;
  bigru_forward(seq, p, opts, &c);
  const std::vector<double> head(seq.values.begin(), seq.values.begin() + 12);
  CHECK(c.logit == doctest::Approx(oracle_logit(head, 4, p, {})).epsilon(1e-10));
  // unmasked, the zero rows do change the result
  CHECK(bigru_forward(seq, p).p != doctest::Approx(c.p).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(4);
  const double h = 1e-6;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_params(4, 100 + seed);
    const std::size_t len = 2 + seed % 4;
    const auto seq = random_seq(rng, 5, len);
    const int y = static_cast<int>(seed % 2);
    ForwardOptions opts;
    opts.mask_padding = seed % 3 == 0;
    opts.input_scale = {1.0, 2.0, 0.5};
    std::vector<double> mask;
    if (seed % 2) {
      Rng mr(seed);
      mask = draw_dropout_mask(8, 0.25, mr);
      opts.train_mode = true;
      opts.dropout_mask = mask;
    }
    ForwardCache c;
    bigru_forward(seq, p, opts, &c);
    Parameters g(4);
    const double loss = bigru_backward(c, p, y, g);
    CHECK(loss == doctest::Approx(bce_from_logit(c.logit, y)));
    for (std::size_t i = 0; i < p.size(); ++i) {
      Parameters plus = p, minus = p;
      plus.values()[i] += h;
      minus.values()[i] -= h;
      const double num = (loss_at(seq, plus, opts, y) - loss_at(seq, minus, opts, y)) / (2 * h);
      const double ana = g.values()[i];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6});
      CHECK_MESSAGE(rel < 1e-4, "seed " << seed << " index " << i << " ana " << ana << " num " << num);
      ++checked;
    }
  }
  CHECK(checked == 20 * Parameters(4).size());
}

TEST_CASE("backward accumulates into the gradient buffer") {
  std::mt19937_64 rng(5);
  const auto p = random_params(3, 1);
  const auto seq = random_seq(rng, 4, 4);
  ForwardCache c;
  bigru_forward(seq, p, {}, &c);
  Parameters once(3), twice(3);
  bigru_backward(c, p, 1, once);
  bigru_backward(c, p, 1, twice);
  bigru_backward(c, p, 1, twice);
  for (std::size_t i = 0; i < once.size(); ++i)
    CHECK(twice.values()[i] == doctest::Approx(2.0 * once.values()[i]));
}

TEST_CASE("all-zero input gives zero input-weight gradients") {
  const auto p = random_params(3, 2);
  SequenceTensor seq;
  seq.max_len = 5;
  seq.true_length = 5;
  seq.values.assign(15, 0.0);
  ForwardCache c;
  bigru_forward(seq, p, {}, &c);
  Parameters g(3);
  bigru_backward(c, p, 0, g);
  for (int d = 0; d < 2; ++d)
    for (std::size_t i = 0; i < 9 * 3; ++i) CHECK(g.w(d)[i] == 0.0);
  double bias_norm = 0.0;
  for (std::size_t i = 0; i < 9; ++i) bias_norm += std::abs(g.b(0)[i]);
  CHECK(bias_norm > 0.0);
}

TEST_CASE("saturated inputs stay finite") {
  Rng rng(3);
  const auto p = init_parameters(4, rng);
  std::mt19937_64 r(6);
  const auto seq = random_seq(r, 10, 10, 1e4);  // raw pixel scale
  ForwardCache c;
  const auto pred = bigru_forward(seq, p, {}, &c);
  CHECK(std::isfinite(pred.p));
  Parameters g(4);
  const double loss = bigru_backward(c, p, 1, g);
  CHECK(std::isfinite(loss));
  for (double v : g.values()) CHECK(std::isfinite(v));
  CHECK(bce_from_logit(800.0, 0) == doctest::Approx(800.0));
  CHECK(bce_from_logit(-800.0, 0) == doctest::Approx(0.0));
  CHECK(bce_from_logit(800.0, 1) == doctest::Approx(0.0));
}

TEST_CASE("non-finite input is rejected") {
  Parameters p(2);
  SequenceTensor s;
  s.max_len = 1;
  s.true_length = 1;
  s.values = {std::nan(""), 0.0, 0.0};
  CHECK_THROWS_AS(bigru_forward(s, p), NumericError);
}

TEST_CASE("initialization scales and orthogonal recurrent blocks") {
  Rng rng(7);
  const std::size_t H = 8;
  const auto p = init_parameters(H, rng);
  const double in_limit = std::sqrt(6.0 / (3.0 + 3.0 * H));
  const double dense_limit = std::sqrt(6.0 / (2.0 * H + 1.0));
  for (int d = 0; d < 2; ++d) {
    for (std::size_t i = 0; i < 3 * H * 3; ++i) CHECK(std::abs(p.w(d)[i]) <= in_limit);
    for (std::size_t i = 0; i < 3 * H; ++i) CHECK(p.b(d)[i] == 0.0);
    const double* U = p.u(d);
    for (std::size_t a = 0; a < H; ++a)
      for (std::size_t b = 0; b < H; ++b) {
        double dot = 0.0;
        for (std::size_t r = 0; r < 3 * H; ++r) dot += U[r * H + a] * U[r * H + b];
        CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
      }
  }
  for (std::size_t i = 0; i < 2 * H; ++i) CHECK(std::abs(p.dense_w()[i]) <= dense_limit);
  CHECK(p.dense_b() == 0.0);
  Rng again(7);
  CHECK(init_parameters(H, again) == p);
}

TEST_CASE("Adam follows the bias-corrected update on w^2") {
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  std::vector<double> w = {1.0};
  AdamState st(1);
  // independent two-step trace
  double m = 0, v = 0, x = 1.0;
  std::vector<double> trace;
  for (int t = 1; t <= 2; ++t) {
    const double g = 2.0 * x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    trace.push_back(x);
  }
  for (int t = 0; t < 2; ++t) {
    const std::vector<double> g = {2.0 * w[0]};
    adam_step(w, g, st, cfg);
    CHECK(w[0] == doctest::Approx(trace[t]).epsilon(1e-14));
  }
  CHECK(trace[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(trace[1] == doctest::Approx(0.800412).epsilon(1e-5));
  CHECK(st.step == 2);
}

TEST_CASE("dropout masks are inverted and have the right rate") {
  Rng rng(8);
  const auto mask = draw_dropout_mask(100000, 0.25, rng);
  double sum = 0.0;
  std::size_t zeros = 0;
  for (double v : mask) {
    sum += v;
    if (v == 0.0)
      ++zeros;
    else
      CHECK(v == doctest::Approx(1.0 / 0.75));
  }
  CHECK(sum / 1e5 == doctest::Approx(1.0).epsilon(0.01));
  CHECK(static_cast<double>(zeros) / 1e5 == doctest::Approx(0.25).epsilon(0.02));
  Rng none(1);
  for (double v : draw_dropout_mask(10, 0.0, none)) CHECK(v == 1.0);
}

namespace {

std::vector<LabeledSequence> toy_task(std::size_t n, std::uint64_t seed) {
  // class 1 moves in larger steps
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<LabeledSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledSequence ls;
    ls.label = static_cast<int>(i % 2);
    ls.seq.max_len = 8;
    ls.seq.true_length = 8;
    double x = 0, y = 0;
    for (std::size_t k = 0; k < 8; ++k) {
      const double step = ls.label ? 3.0 : 1.0;
      x += step + 0.3 * g(rng);
      y += 0.3 * g(rng);
      ls.seq.values.insert(ls.seq.values.end(), {x, y, 150.0 * static_cast<double>(k)});
    }
    out.push_back(std::move(ls));
  }
  return out;
}

}  // namespace

TEST_CASE("training reduces loss and is deterministic across thread counts") {
  const auto data = toy_task(120, 1);
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.max_len = 8;
  cfg.max_epochs = 15;
  cfg.early_stop_patience = 15;
  cfg.learning_rate = 0.02;
  cfg.batch_size = 16;
  cfg.standardize_inputs = true;
  cfg.seed = 3;
  set_max_threads(1);
  const auto a = train_bigru(data, cfg);
  set_max_threads(4);
  const auto b = train_bigru(data, cfg);
  set_max_threads(0);
  CHECK(a.model.params == b.model.params);
  CHECK(a.best_epoch == b.best_epoch);
  REQUIRE(a.log.size() == 15);
  CHECK(a.log.back().train_loss < a.log.front().train_loss);
  CHECK(a.log[a.best_epoch - 1].val_loss < std::log(2.0));
  CHECK(a.model.input_scale[0] > 1.0);

  cfg.seed = 4;
  CHECK_FALSE(train_bigru(data, cfg).model.params == a.model.params);

  const auto csv = log_to_csv(a.log);
  CHECK(csv.rfind("epoch,train_loss,val_loss\n", 0) == 0);
}

TEST_CASE("early stopping returns the best snapshot") {
  const auto data = toy_task(60, 2);
  TrainConfig cfg;
  cfg.hidden = 3;
  cfg.max_len = 8;
  cfg.max_epochs = 50;
  cfg.early_stop_patience = 2;
  cfg.learning_rate = 0.05;
  cfg.standardize_inputs = true;
  const auto r = train_bigru(data, cfg);
  CHECK(r.log.size() <= 50);
  CHECK(r.best_epoch >= 1);
  CHECK(r.log.size() <= r.best_epoch + 2);
  double best = 1e300;
  for (const auto& e : r.log) best = std::min(best, e.val_loss);
  CHECK(r.log[r.best_epoch - 1].val_loss == best);
}

TEST_CASE("model and config round-trip through JSON") {
  const auto data = toy_task(40, 3);
  TrainConfig cfg;
  cfg.hidden = 2;
  cfg.max_len = 8;
  cfg.max_epochs = 2;
  cfg.standardize_inputs = true;
  cfg.mask_padding = true;
  const auto r = train_bigru(data, cfg);
  const auto back = bigru_from(TrainedModel::from_json(to_model(r.model, Task::age).to_json()));
  CHECK(back.params == r.model.params);
  CHECK(back.input_scale == r.model.input_scale);
  CHECK(back.mask_padding);
  std::vector<SequenceTensor> seqs;
  for (const auto& d : data) seqs.push_back(d.seq);
  CHECK(back.predict(seqs) == r.model.predict(seqs));

  const auto c2 = TrainConfig::from_json(cfg.to_json());
  CHECK(c2.to_json() == cfg.to_json());
  TrainConfig bad;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.hidden = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
