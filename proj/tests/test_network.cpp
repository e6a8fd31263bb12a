#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "nlos/error.hpp"
#include "nlos/io.hpp"
#include "nlos/network.hpp"
#include "nlos/random.hpp"
#include "support.hpp"

using namespace nlos;
using namespace nlos::network;
using dataset::FeatureWindow;

namespace {

ModelConfig small_config(Variant v = Variant::kFull) {
  ModelConfig c;
  c.lstm_hidden = 4;
  c.attn_heads = 2;
  c.attn_dim = 4;
  c.mlp_hidden = 5;
  c.N_max = 5;
  c.T = 3;
  c.variant = v;
  return c;
}

FeatureWindow random_window(const ModelConfig& c, const std::vector<std::size_t>& valid, Rng& rng,
                            double range = 2.0) {
  return testing::random_window(c.N_max, c.T, valid, rng, range);
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop LSTM cell from zero state: h = o * tanh(i * g).
std::vector<double> reference_first_step(const ModelParams& p, const std::string& prefix, const std::vector<double>& x,
                                         std::size_t H) {
  const Tensor& wi = p.at(prefix + ".w_input");
  const Tensor& b = p.at(prefix + ".bias");
  std::vector<double> gates(4 * H);
  for (std::size_t j = 0; j < 4 * H; ++j) {
    double s = b.at(0, j);
    for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * wi.at(k, j);
    gates[j] = s;
  }
  std::vector<double> h(H);
  for (std::size_t j = 0; j < H; ++j) {
    const double c = sigm(gates[j]) * std::tanh(gates[2 * H + j]);
    h[j] = sigm(gates[3 * H + j]) * std::tanh(c);
  }
  return h;
}

Var simple_loss(Tape& tape, const GraphOutput& g, const FeatureWindow& w) {
  std::vector<double> vis, err;
  for (std::size_t s : g.slots) {
    vis.push_back(w.labels_visibility[s]);
    err.push_back(w.labels_error[s] / 100.0);
  }
  const std::size_t n = g.slots.size();
  return tape.add(tape.mse_loss(g.probability, tape.constant({n, 1}, vis)),
                  tape.l1_loss(g.error_scaled, tape.constant({n, 1}, err)));
}

}  // namespace

TEST_CASE("model config validation and variant names") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.attn_dim = 30;
  CHECK_THROWS_AS(c.validate(), UsageError);
  for (Variant v : {Variant::kFull, Variant::kNoAttention, Variant::kNoBiLstm}) {
    CHECK(parse_variant(variant_name(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("transformer"), UsageError);
}

TEST_CASE("parameter initialization") {
  const ModelConfig c;
  const ModelParams p = init_params(c, 3);
  CHECK(p.at("encoder.layer0.w_input").shape() == tensor::Shape{5, 128});
  CHECK(p.at("encoder.layer1.w_input").shape() == tensor::Shape{32, 128});
  CHECK(p.at("shared_fc.weight").shape() == tensor::Shape{32, 32});
  CHECK(p.at("bilstm.init.weight").shape() == tensor::Shape{64, 64});
  CHECK(p.at("classifier.hidden0.weight").shape() == tensor::Shape{96, 64});
  CHECK(p.at("regressor.out.weight").shape() == tensor::Shape{64, 1});
  for (const auto& [name, t] : p.tensors()) {
    for (double v : t.data()) CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
  // Forget-gate bias is shifted by +1; the other gates are within the init bound.
  const Tensor& b = p.at("encoder.layer0.bias");
  const double bound = 1.0 / std::sqrt(32.0);
  for (std::size_t j = 0; j < 128; ++j) {
    if (j >= 32 && j < 64) {
      CHECK(b.at(0, j) >= 1.0 - bound - 1e-7);
    } else {
      CHECK(std::abs(b.at(0, j)) <= bound + 1e-7);
    }
  }
  const Tensor& w = p.at("classifier.hidden0.weight");
  for (double v : w.data()) CHECK(std::abs(v) <= 1.0 / std::sqrt(96.0) + 1e-7);

  const ModelParams again = init_params(c, 3);
  CHECK(std::equal(again.at("bilstm.forward.w_hidden").data().begin(), again.at("bilstm.forward.w_hidden").data().end(),
                   p.at("bilstm.forward.w_hidden").data().begin()));

  ModelConfig na = c;
  na.variant = Variant::kNoAttention;
  CHECK_FALSE(init_params(na, 1).contains("attention.w_query"));
  ModelConfig nb = c;
  nb.variant = Variant::kNoBiLstm;
  const auto pb = init_params(nb, 1);
  CHECK_FALSE(pb.contains("bilstm.backward.w_input"));
  CHECK(pb.at("classifier.hidden0.weight").shape() == tensor::Shape{64, 64});
}

TEST_CASE("encoder shares weights across satellites and starts from zero state") {
  const ModelConfig c = small_config();
  const ModelParams p = init_params(c, 5);
  Tape tape;
  const Bindings b = bind_constants(tape, p);
  Rng rng(1);
  std::vector<Var> steps;
  for (std::size_t t = 0; t < c.T; ++t) {
    std::vector<double> x(3 * 5);
    for (std::size_t f = 0; f < 5; ++f) {
      x[f] = rng.uniform(-1, 1);
      x[5 + f] = x[f];  // row 1 duplicates row 0
      x[10 + f] = rng.uniform(-1, 1);
    }
    steps.push_back(tape.constant({3, 5}, x));
  }
  const EncoderOutput enc = lstm_encode(tape, b, c, steps);
  const auto h = tape.value(enc.h_final);
  for (std::size_t j = 0; j < c.lstm_hidden; ++j) CHECK(h[j] == h[c.lstm_hidden + j]);
  CHECK(enc.sequence.size() == c.T);

  SUBCASE("T=1 equals one cell step from zero state") {
    ModelConfig one = c;
    one.T = 1;
    one.lstm_layers = 1;
    const ModelParams p1 = init_params(one, 9);
    Tape t1;
    const Bindings b1 = bind_constants(t1, p1);
    const std::vector<double> x = {0.3, -0.7, 1.1, 0.0, -2.0};
    const EncoderOutput e1 = lstm_encode(t1, b1, one, {t1.constant({1, 5}, x)});
    const auto ref = reference_first_step(p1, "encoder.layer0", x, one.lstm_hidden);
    const auto got = t1.value(e1.h_final);
    for (std::size_t j = 0; j < one.lstm_hidden; ++j) CHECK(got[j] == doctest::Approx(ref[j]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(lstm_encode(tape, b, c, {steps[0]}), UsageError);
}

TEST_CASE("shared projection: zero state maps to the bias, rows are independent") {
  const ModelConfig c = small_config();
  const ModelParams p = init_params(c, 2);
  Tape tape;
  const Bindings b = bind_constants(tape, p);
  const Projections qkv = qkv_project(tape, b, c, tape.constant({2, c.lstm_hidden}, std::vector<double>(8, 0.0)));
  const auto bias = p.at("shared_fc.bias").data();
  for (Var v : {qkv.q, qkv.k, qkv.v}) {
    const auto val = tape.value(v);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < c.attn_dim; ++j) CHECK(val[r * c.attn_dim + j] == bias[j]);
  }
  // Permuting input rows permutes K rows.
  std::vector<double> h = {1, 2, 3, 4, -1, 0.5, 0, 2};
  std::vector<double> hp = {-1, 0.5, 0, 2, 1, 2, 3, 4};
  const auto k1 = tape.value(qkv_project(tape, b, c, tape.constant({2, 4}, h)).k);
  const std::vector<double> k1v(k1.begin(), k1.end());
  const auto k2 = tape.value(qkv_project(tape, b, c, tape.constant({2, 4}, hp)).k);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(k1v[j] == k2[4 + j]);
    CHECK(k1v[4 + j] == k2[j]);
  }
}

TEST_CASE("attention: singleton, uniform keys and row sums") {
  const ModelConfig c = small_config();
  ModelParams p = init_params(c, 4);
  Rng rng(3);

  SUBCASE("single satellite attends to itself with weight 1") {
    Tape tape;
    const Bindings b = bind_constants(tape, p);
    const std::vector<double> x = {0.5, -1.0, 2.0, 0.25};
    const Var in = tape.constant({1, 4}, x);
    const AttentionOutput a = multi_head_attention(tape, b, c, {in, in, in}, {1});
    for (double w : a.weights) CHECK(w == 1.0);
    // attended = (x W_v) W_out + b_out
    const Tensor& wv = p.at("attention.w_value");
    const Tensor& wo = p.at("attention.out.weight");
    const Tensor& bo = p.at("attention.out.bias");
    std::vector<double> v(4, 0.0);
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 4; ++k) v[j] += x[k] * wv.at(k, j);
    const auto got = tape.value(a.attended);
    for (std::size_t j = 0; j < 4; ++j) {
      double ref = bo.at(0, j);
      for (std::size_t k = 0; k < 4; ++k) ref += v[k] * wo.at(k, j);
      CHECK(got[j] == doctest::Approx(ref).epsilon(1e-14));
    }
  }

  SUBCASE("uniform keys give uniform weights over unmasked context") {
    std::fill(p.at("attention.w_key").data().begin(), p.at("attention.w_key").data().end(), 0.0);
    Tape tape;
    const Bindings b = bind_constants(tape, p);
    std::vector<double> x(4 * 4);
    for (double& v : x) v = rng.uniform(-1, 1);
    const Var in = tape.constant({4, 4}, x);
    const AttentionOutput a = multi_head_attention(tape, b, c, {in, in, in}, {1, 0, 1, 1});
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t h = 0; h < c.attn_heads; ++h)
        for (std::size_t j = 0; j < 4; ++j) {
          const double w = a.weights[(i * c.attn_heads + h) * 4 + j];
          CHECK(w == doctest::Approx(j == 1 ? 0.0 : 1.0 / 3.0));
        }
  }

  SUBCASE("property: each (target, head) row sums to one, masked context gets zero") {
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 1 + rng.below(6);
      std::vector<std::uint8_t> mask(n);
      for (auto& m : mask) m = rng.uniform() < 0.6;
      mask[rng.below(n)] = 1;
      Tape tape;
      const Bindings b = bind_constants(tape, p);
      std::vector<double> x(n * 4);
      for (double& v : x) v = rng.uniform(-5, 5);
      const Var in = tape.constant({n, 4}, x);
      const AttentionOutput a = multi_head_attention(tape, b, c, {in, in, in}, mask);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t h = 0; h < c.attn_heads; ++h) {
          double sum = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double w = a.weights[(i * c.attn_heads + h) * n + j];
            if (!mask[j]) CHECK(w == 0.0);
            sum += w;
          }
          CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
  }

  SUBCASE("fully masked context is a degenerate-mask error") {
    Tape tape;
    const Bindings b = bind_constants(tape, p);
    const Var in = tape.constant({2, 4}, std::vector<double>(8, 0.1));
    CHECK_THROWS_AS(multi_head_attention(tape, b, c, {in, in, in}, {0, 0}), UsageError);
  }
}

TEST_CASE("property: attended vector of a target is invariant to permuting the other context satellites") {
  const ModelConfig c = small_config();
  const ModelParams p = init_params(c, 8);
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(4);
    std::vector<double> x(n * 4);
    for (double& v : x) v = rng.uniform(-2, 2);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::size_t> others(perm.begin() + 1, perm.end());
    rng.shuffle(others);
    std::copy(others.begin(), others.end(), perm.begin() + 1);  // target (row 0) stays first
    std::vector<double> xp(n * 4);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < 4; ++j) xp[r * 4 + j] = x[perm[r] * 4 + j];

    Tape tape;
    const Bindings b = bind_constants(tape, p);
    const Var a = tape.constant({n, 4}, x);
    const Var ap = tape.constant({n, 4}, xp);
    const auto out1 = tape.value(multi_head_attention(tape, b, c, {a, a, a}, std::vector<std::uint8_t>(n, 1)).attended);
    const std::vector<double> row0(out1.begin(), out1.begin() + 4);
    const auto out2 = tape.value(multi_head_attention(tape, b, c, {ap, ap, ap}, std::vector<std::uint8_t>(n, 1)).attended);
    for (std::size_t j = 0; j < 4; ++j) CHECK(out2[j] == doctest::Approx(row0[j]).epsilon(1e-12));
  }
}

TEST_CASE("Bi-LSTM: reversal swaps halves when both directions share weights") {
  const ModelConfig c = small_config();
  ModelParams p = init_params(c, 6);
  for (const char* part : {".w_input", ".w_hidden", ".bias"}) {
    const Tensor& fwd = p.at(std::string("bilstm.forward") + part);
    Tensor& bwd = p.at(std::string("bilstm.backward") + part);
    std::copy(fwd.data().begin(), fwd.data().end(), bwd.data().begin());
  }
  Rng rng(2);
  const std::size_t len = 4, H = c.lstm_hidden;
  std::vector<double> seq(len * c.attn_dim), rev(len * c.attn_dim);
  for (double& v : seq) v = rng.uniform(-1, 1);
  for (std::size_t r = 0; r < len; ++r)
    for (std::size_t j = 0; j < c.attn_dim; ++j) rev[r * c.attn_dim + j] = seq[(len - 1 - r) * c.attn_dim + j];
  std::vector<double> th(2 * H), tc(2 * H);
  for (double& v : th) v = rng.uniform(-1, 1);
  for (double& v : tc) v = rng.uniform(-1, 1);

  Tape tape;
  const Bindings b = bind_constants(tape, p);
  const Var h = tape.constant({2, H}, th);
  const Var cc = tape.constant({2, H}, tc);
  const auto o1 = tape.value(bilstm_head(tape, b, c, tape.constant({len, c.attn_dim}, seq), h, cc));
  const std::vector<double> out1(o1.begin(), o1.end());
  const auto out2 = tape.value(bilstm_head(tape, b, c, tape.constant({len, c.attn_dim}, rev), h, cc));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < H; ++j) {
      CHECK(out2[r * 2 * H + j] == out1[r * 2 * H + H + j]);
      CHECK(out2[r * 2 * H + H + j] == out1[r * 2 * H + j]);
    }

  SUBCASE("length-1 sequence: both directions see the same step") {
    Tape t1;
    const Bindings b1 = bind_constants(t1, p);
    const auto o = t1.value(bilstm_head(t1, b1, c, t1.constant({1, c.attn_dim}, std::vector<double>(seq.begin(), seq.begin() + 4)),
                                        t1.constant({1, H}, std::vector<double>(th.begin(), th.begin() + 4)),
                                        t1.constant({1, H}, std::vector<double>(tc.begin(), tc.begin() + 4))));
    for (std::size_t j = 0; j < H; ++j) CHECK(o[j] == o[H + j]);
  }

  SUBCASE("zero sequence: output depends only on the target state") {
    Tape t2;
    const Bindings b2 = bind_constants(t2, p);
    std::vector<double> same_h = {0.1, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4};
    std::vector<double> same_c = {-0.5, 0.0, 0.5, 1.0, -0.5, 0.0, 0.5, 1.0};
    const auto o = t2.value(bilstm_head(t2, b2, c, t2.constant({3, c.attn_dim}, std::vector<double>(12, 0.0)),
                                        t2.constant({2, H}, same_h), t2.constant({2, H}, same_c)));
    for (std::size_t j = 0; j < 2 * H; ++j) CHECK(o[j] == o[2 * H + j]);
  }
}

TEST_CASE("forward: masked slots are flagged and ignored") {
  const ModelConfig c = small_config();
  const ModelParams p = init_params(c, 10);
  Rng rng(4);
  FeatureWindow w = random_window(c, {0, 2, 3}, rng);
  const ModelOutput a = forward(w, p, c);
  CHECK(a.valid == std::vector<std::uint8_t>{1, 0, 1, 1, 0});
  CHECK(a.visibility_prob[1] == 0.0);
  CHECK(a.error_pred_m[4] == 0.0);
  // Garbage in a masked slot changes nothing.
  for (std::size_t t = 0; t < c.T; ++t) w.at(1, t, 2) = 1e6;
  const ModelOutput b = forward(w, p, c);
  CHECK(a.visibility_prob == b.visibility_prob);
  CHECK(a.error_pred_m == b.error_pred_m);
  // Attention: masked context columns are zero, rows sum to one.
  for (std::size_t s : {0u, 2u, 3u})
    for (std::size_t h = 0; h < c.attn_heads; ++h) {
      double sum = 0.0;
      for (std::size_t j = 0; j < c.N_max; ++j) {
        const double wt = a.attention_weights[(s * c.attn_heads + h) * c.N_max + j];
        if (j == 1 || j == 4) CHECK(wt == 0.0);
        sum += wt;
      }
      CHECK(sum == doctest::Approx(1.0));
    }
  CHECK_THROWS_AS(forward(dataset::empty_window(c.N_max, c.T), p, c), UsageError);
  CHECK_THROWS_AS(forward(dataset::empty_window(c.N_max, c.T + 1), p, c), UsageError);
}

TEST_CASE("property: forward outputs are finite probabilities for fuzzed inputs, all variants") {
  Rng rng(77);
  for (Variant v : {Variant::kFull, Variant::kNoAttention, Variant::kNoBiLstm}) {
    const ModelConfig c = small_config(v);
    const ModelParams p = init_params(c, 12);
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<std::size_t> valid;
      for (std::size_t s = 0; s < c.N_max; ++s)
        if (rng.uniform() < 0.6) valid.push_back(s);
      if (valid.empty()) valid.push_back(rng.below(c.N_max));
      const FeatureWindow w = random_window(c, valid, rng, 10.0);
      const ModelOutput o = forward(w, p, c);
      const ModelOutput o2 = forward(w, p, c);
      CHECK(o.visibility_prob == o2.visibility_prob);
      for (std::size_t s : valid) {
        CHECK(o.visibility_prob[s] >= 0.0);
        CHECK(o.visibility_prob[s] <= 1.0);
        CHECK(std::isfinite(o.error_pred_m[s]));
      }
    }
  }
}

TEST_CASE("duplicating a context satellite into a free slot keeps outputs valid") {
  const ModelConfig c = small_config();
  const ModelParams p = init_params(c, 13);
  Rng rng(5);
  FeatureWindow w = random_window(c, {0, 1}, rng);
  const ModelOutput before = forward(w, p, c);
  w.sat_mask[3] = 1;
  for (std::size_t t = 0; t < c.T; ++t)
    for (std::size_t f = 0; f < 5; ++f) w.at(3, t, f) = w.at(1, t, f);
  const ModelOutput after = forward(w, p, c);
  CHECK(after.attention_weights != before.attention_weights);
  for (std::size_t s : {0u, 1u, 3u}) {
    CHECK(after.visibility_prob[s] >= 0.0);
    CHECK(after.visibility_prob[s] <= 1.0);
    CHECK(std::isfinite(after.error_pred_m[s]));
  }
}

// Central differences of a double loss L resolve gradients only to about
// ulp(L) / (2 eps); below that the 1e-8 floor of the relative error cannot be
// met. Elements outside the tolerance must sit within a few of those quanta.
TEST_CASE("gradient check of the full network loss on a small instance, all variants") {
  Rng rng(31);
  const double eps = 1e-5;
  for (Variant v : {Variant::kFull, Variant::kNoAttention, Variant::kNoBiLstm}) {
    ModelConfig c = small_config(v);
    c.mlp_hidden = 8;
    ModelParams p = init_params(c, 14);
    const FeatureWindow w = random_window(c, {1, 3}, rng);
    std::map<std::string, Tensor*> ptrs;
    for (auto& [name, t] : p.tensors()) ptrs[name] = &t;
    const auto loss_fn = [&](Tape& tape) {
      const Bindings b = bind_trainable(tape, p);
      const GraphOutput g = build_graph(tape, b, c, w);
      return simple_loss(tape, g, w);
    };
    double loss = 0.0;
    {
      Tape tape;
      loss = tape.scalar(loss_fn(tape));
    }
    const double quantum = (std::nextafter(loss, 2.0 * loss) - loss) / (2.0 * eps);
    const auto report = tensor::grad_check(loss_fn, ptrs, eps, 1e-4);
    std::size_t failures = 0;
    double worst_ratio = 0.0;
    for (const auto& e : report.entries) {
      INFO(std::string(variant_name(v)), " ", e.name, "[", e.worst_index, "] ad ", io::format_double(e.analytic), " fd ",
           io::format_double(e.numeric), " quantum ", io::format_double(quantum));
      CHECK(e.max_failing_abs_error <= 8.0 * quantum);
      failures += e.failures;
      worst_ratio = std::max(worst_ratio, e.max_failing_abs_error / quantum);
    }
    MESSAGE(std::string(variant_name(v)), ": max rel ", report.max_rel_error, ", ", failures,
            " elements below the difference resolution, worst ", worst_ratio, " quanta");
  }
}

TEST_CASE("stop-gradient on the query path removes only that gradient path") {
  ModelConfig c = small_config();
  Rng rng(8);
  const FeatureWindow w = random_window(c, {0, 1, 2}, rng);
  auto grads_for = [&](bool stop) {
    ModelConfig cc = c;
    cc.stop_gradient_query = stop;
    ModelParams p = init_params(cc, 15);
    std::map<std::string, std::vector<double>> g;
    Tape tape;
    const Bindings b = bind_into(tape, p, g);
    const GraphOutput out = build_graph(tape, b, cc, w);
    tape.backward(simple_loss(tape, out, w));
    return g;
  };
  const auto g0 = grads_for(false);
  const auto g1 = grads_for(true);
  CHECK(g0.at("shared_fc.weight") != g1.at("shared_fc.weight"));
  CHECK(g0.at("classifier.out.weight") == g1.at("classifier.out.weight"));
}

TEST_CASE("no dead parameters on a random batch") {
  ModelConfig c = small_config();
  c.mlp_hidden = 16;
  ModelParams p = init_params(c, 16);
  Rng rng(9);
  std::map<std::string, std::vector<double>> g;
  for (int k = 0; k < 8; ++k) {
    const FeatureWindow w = random_window(c, {0, 1, 2, 4}, rng);
    Tape tape;
    const Bindings b = bind_into(tape, p, g);
    const GraphOutput out = build_graph(tape, b, c, w);
    tape.backward(simple_loss(tape, out, w));
  }
  for (const auto& [name, grad] : g) {
    INFO(name);
    CHECK(std::any_of(grad.begin(), grad.end(), [](double x) { return x != 0.0; }));
  }
}

TEST_CASE("checkpoint round trip is bit-exact and guarded") {
  const ModelConfig c = small_config();
  Checkpoint ck{c, init_params(c, 17), {}};
  ck.normalizer.mean = {1.5, 180.25, 44.0, 0.1, 3.0};
  ck.normalizer.stddev = {20.0, 100.0, 5.5, 4.25, 6.0};
  const std::string bytes = serialize_checkpoint(ck);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.normalizer.mean == ck.normalizer.mean);
  CHECK(back.normalizer.stddev == ck.normalizer.stddev);
  CHECK(back.config.T == c.T);
  for (const auto& [name, t] : ck.params.tensors()) {
    const auto& u = back.params.at(name);
    CHECK(u.shape() == t.shape());
    CHECK(std::equal(t.data().begin(), t.data().end(), u.data().begin()));
  }
  Rng rng(1);
  const FeatureWindow w = random_window(c, {0, 4}, rng);
  const ModelOutput o1 = forward(w, ck.params, c);
  const ModelOutput o2 = forward(w, back.params, back.config);
  CHECK(o1.visibility_prob == o2.visibility_prob);
  CHECK(o1.error_pred_m == o2.error_pred_m);
  CHECK(serialize_checkpoint(back) == bytes);

  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 10)), DataError);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), DataError);
  std::string version = bytes;
  version[8] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(version), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint("not a checkpoint at all, just text"), DataError);

  const auto dir = std::filesystem::temp_directory_path() / "nlos_ckpt_test";
  save_checkpoint(ck, dir / "model.ckpt");
  CHECK_NOTHROW(load_checkpoint(dir / "model.ckpt", Variant::kFull));
  CHECK_THROWS_AS(load_checkpoint(dir / "model.ckpt", Variant::kNoAttention), UsageError);
  std::filesystem::remove_all(dir);

  Checkpoint bad = ck;
  bad.params.at("shared_fc.bias").data()[0] = 0.1;  // not a float value
  CHECK_THROWS_AS(serialize_checkpoint(bad), NumericError);
}
