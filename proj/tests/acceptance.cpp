// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only AC-n[,AC-m...]] [--expect-fail AC-n[,AC-m...]]
//
// Exit status is 0 when every criterion outside the expected-failure list
// passes and every criterion inside it fails. An expected failure still
// prints FAIL; an unexpected pass is reported and fails the run so the list
// gets pruned.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nlos/dataset.hpp"
#include "nlos/evaluation.hpp"
#include "nlos/exclusion.hpp"
#include "nlos/geodesy.hpp"
#include "nlos/metrics.hpp"
#include "nlos/network.hpp"
#include "nlos/random.hpp"
#include "nlos/tensor.hpp"
#include "nlos/training.hpp"
#include "support.hpp"

using namespace nlos;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Standard scenario windows with LS-labeled data, for training runs.
std::vector<dataset::FeatureWindow> scenario_windows(dataset::ScenarioConfig sc) {
  const dataset::Scenario s = dataset::generate_scenario(sc);
  return dataset::build_windows(s.epochs, sc.T_window, sc.N_max);
}

// Training budget shared by the model-based criteria; the network itself uses
// the default widths.
training::TrainConfig acceptance_train_config(std::uint64_t seed) {
  training::TrainConfig t;
  t.epochs = 30;
  t.lr_milestones = {20, 26};
  t.rng_seed = seed;
  return t;
}

constexpr double kAcceptanceDurationS = 600.0;

// ---------------------------------------------------------------------------

Outcome ac1() {
  network::ModelConfig c;
  c.N_max = 4;
  c.T = 3;
  network::ModelParams p = network::init_params(c, 1);
  Rng rng(2);
  dataset::FeatureWindow w = testing::random_window(c.N_max, c.T, {0, 2}, rng, 1.5);
  w.labels_visibility[0] = 1.0;
  w.labels_visibility[2] = 0.0;
  w.labels_error[0] = 3.0;
  w.labels_error[2] = 45.0;

  std::map<std::string, tensor::Tensor*> ptrs;
  for (auto& [name, t] : p.tensors()) ptrs[name] = &t;
  const training::TrainConfig tc;
  const tensor::GradCheckReport r = tensor::grad_check(
      [&](tensor::Tape& tape) {
        const auto b = network::bind_trainable(tape, p);
        const network::GraphOutput g = network::build_graph(tape, b, c, w);
        const dataset::FeatureWindow* wp = &w;
        return training::loss_graph(tape, std::span(&g, 1), std::span(&wp, 1), tc.loss_weight_lambda,
                                    c.error_scale_m)
            .total;
      },
      ptrs, 1e-5, 1e-4);

  std::size_t elements = 0, failures = 0;
  double worst_abs = 0.0;
  std::string failing;
  for (const auto& e : r.entries) {
    elements += e.elements;
    failures += e.failures;
    if (e.failures == 0) continue;
    worst_abs = std::max(worst_abs, e.max_failing_abs_error);
    failing += fmt(" %s(%zu/%zu, |g|=%.1e)", e.name.c_str(), e.failures, e.elements, std::fabs(e.analytic));
  }
  std::string d = fmt("max rel %.3g at %s; %zu/%zu elements >= 1e-4, largest abs error among them %.2e", r.max_rel_error,
                      r.worst_param.c_str(), failures, elements, worst_abs);
  if (failures) d += ";" + failing;
  return {r.passed && r.max_rel_error < 1e-4, d};
}

Outcome ac2() {
  dataset::ScenarioConfig sc = dataset::scenario_preset("standard");
  sc.rng_seed = 3;
  std::vector<dataset::FeatureWindow> all = scenario_windows(sc);
  std::vector<dataset::FeatureWindow> win;
  for (std::size_t i = 0; i < 32; ++i) win.push_back(all[i * all.size() / 32]);
  const dataset::Normalizer norm = dataset::fit_normalizer(win);
  dataset::apply_normalizer(win, norm);

  network::ModelConfig c;
  training::TrainConfig t;
  t.epochs = 200;
  // Memorizing per-satellite noise needs per-window steps and a heavy
  // regression weight.
  t.batch_size = 1;
  t.loss_weight_lambda = 20.0;
  t.lr_milestones = {170, 190};
  const training::TrainResult r = training::train(c, network::init_params(c, 1), win, win, t);
  const metrics::MetricReport m = metrics::evaluate(metrics::predict(win, r.params, c));
  return {m.accuracy == 1.0 && m.mae_m < 0.5,
          fmt("%zu windows, %zu slots, %zu epochs: accuracy %.4f, L1 %.3f m (need 1.0 and < 0.5 m)", win.size(),
              m.samples, t.epochs, m.accuracy, m.mae_m)};
}

Outcome ac3() {
  Rng rng(303);
  int checked = 0, bad = 0;
  double worst_pos = 0.0, worst_clock = 0.0, worst_res = 0.0;
  while (checked < 100) {
    const geodesy::EcefPosition truth = testing::random_receiver(rng);
    const int n = 4 + static_cast<int>(rng.below(9));
    std::vector<geodesy::EcefPosition> sats;
    for (int i = 0; i < n; ++i) sats.push_back(testing::satellite_at(truth, rng.uniform(0, 360), rng.uniform(5, 88)));
    if (geodesy::design_condition_number(sats, truth) >= 1e6) continue;
    const double cb = rng.uniform(-3e5, 3e5);
    std::vector<double> rho;
    for (const auto& s : sats) rho.push_back(geodesy::model_pseudorange(truth, s, cb, 0, 0));
    const geodesy::EcefPosition guess{truth.x + rng.uniform(-3e3, 3e3), truth.y + rng.uniform(-3e3, 3e3),
                                      truth.z + rng.uniform(-3e3, 3e3)};
    const geodesy::LsSolution sol = geodesy::ls_position_solve(rho, sats, guess);
    const double pos = geodesy::distance(sol.position, truth);
    const double clk = std::fabs(sol.clock_bias_m - cb);
    double res = 0.0;
    for (double v : sol.residuals) res = std::max(res, std::fabs(v));
    worst_pos = std::max(worst_pos, pos);
    worst_clock = std::max(worst_clock, clk);
    worst_res = std::max(worst_res, res);
    if (!sol.converged || pos >= 1e-6 || clk >= 1e-6 || res >= 1e-6) ++bad;
    ++checked;
  }
  return {bad == 0, fmt("%d instances, %d outside tolerance; worst position %.2e m, clock %.2e m, residual %.2e m",
                        checked, bad, worst_pos, worst_clock, worst_res)};
}

Outcome ac4() {
  Rng rng(404);
  int bad = 0;
  double worst = 0.0;
  const auto rate = [](std::size_t num, std::size_t den) { return den ? static_cast<double>(num) / den : 0.0; };
  const auto f1 = [](double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; };
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    std::vector<double> probs(n), labels(n);
    std::vector<std::uint8_t> mask(n);
    const double skew = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      // Some probabilities sit exactly on the threshold.
      probs[i] = rng.uniform() < 0.05 ? 0.5 : rng.uniform();
      labels[i] = rng.uniform() < skew ? 1.0 : 0.0;
      mask[i] = rng.uniform() < 0.85 ? 1 : 0;
    }
    mask[rng.below(n)] = 1;
    const double thr = rng.uniform() < 0.5 ? 0.5 : rng.uniform(0.05, 0.95);

    std::size_t los_tp = 0, los_fp = 0, los_fn = 0, nlos_tp = 0, nlos_fp = 0, nlos_fn = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      ++total;
      const bool pred_los = probs[i] >= thr;
      const bool is_los = labels[i] == 1.0;
      if (pred_los && is_los) ++los_tp;
      if (pred_los && !is_los) ++los_fp, ++nlos_fn;
      if (!pred_los && is_los) ++los_fn, ++nlos_fp;
      if (!pred_los && !is_los) ++nlos_tp;
    }
    const double lp = rate(los_tp, los_tp + los_fp), lr = rate(los_tp, los_tp + los_fn);
    const double np = rate(nlos_tp, nlos_tp + nlos_fp), nr = rate(nlos_tp, nlos_tp + nlos_fn);
    const std::vector<double> want = {lp, lr, f1(lp, lr), np, nr, f1(np, nr), rate(los_tp + nlos_tp, total)};
    const metrics::MetricReport m = metrics::classification_metrics(probs, labels, mask, thr);
    const std::vector<double> got = {m.los.precision, m.los.recall, m.los.f1, m.nlos.precision,
                                     m.nlos.recall,   m.nlos.f1,    m.accuracy};
    bool ok = m.samples == total;
    for (std::size_t k = 0; k < want.size(); ++k) {
      const double e = std::fabs(got[k] - want[k]);
      worst = std::max(worst, e);
      ok = ok && e <= 1e-12;
    }
    if (!ok) ++bad;
  }
  return {bad == 0, fmt("1000 fuzzed sets, %d mismatches, largest difference %.1e", bad, worst)};
}

Outcome ac5() {
  const std::vector<network::Variant> variants = {network::Variant::kFull, network::Variant::kNoAttention,
                                                  network::Variant::kNoBiLstm};
  std::vector<double> f1_full, f1_noatt, rec_full, rec_nobi;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    dataset::ScenarioConfig sc = dataset::scenario_preset("standard");
    sc.duration_s = kAcceptanceDurationS;
    sc.rng_seed = seed;
    const auto windows = scenario_windows(sc);
    sc.rng_seed = seed + 1000;
    const auto test = scenario_windows(sc);
    const network::ModelConfig c;
    const evaluation::AblationReport r =
        evaluation::run_ablation(windows, test, c, acceptance_train_config(seed), seed, variants);
    const auto& full = r.rows[0].metrics.nlos;
    const auto& noatt = r.rows[1].metrics.nlos;
    const auto& nobi = r.rows[2].metrics.nlos;
    f1_full.push_back(full.f1);
    f1_noatt.push_back(noatt.f1);
    rec_full.push_back(full.recall);
    rec_nobi.push_back(nobi.recall);
    per_seed += fmt(" [seed %llu F1 %.3f/%.3f R %.3f/%.3f]", static_cast<unsigned long long>(seed), full.f1,
                    noatt.f1, full.recall, nobi.recall);
  }
  const double a = median(f1_full), b = median(f1_noatt), c = median(rec_full), d = median(rec_nobi);
  return {a >= b && c >= d, fmt("median NLOS F1 full %.3f vs no_attention %.3f; median NLOS recall full %.3f vs "
                                "no_bilstm %.3f;",
                                a, b, c, d) +
                                per_seed};
}

Outcome ac6() {
  bool ok = true;
  std::string d;
  for (std::uint64_t seed : {1, 2, 3}) {
    dataset::ScenarioConfig sc = dataset::scenario_preset("standard");
    sc.duration_s = kAcceptanceDurationS;
    sc.nlos_bias_min_m = 30.0;
    sc.rng_seed = seed;
    const auto windows = scenario_windows(sc);
    const training::FitResult fit = training::fit(windows, network::ModelConfig{}, acceptance_train_config(seed), seed);
    sc.rng_seed = seed + 2000;
    const dataset::Scenario held_out = dataset::generate_scenario(sc);
    const exclusion::ExclusionResult r = exclusion::trajectory_report(held_out.epochs, fit.checkpoint);
    const bool seed_ok = r.median_excluded_m <= r.median_all_m && r.infeasible_fraction < 0.2;
    ok = ok && seed_ok;
    d += fmt("%sseed %llu: median %.2f m excluded vs %.2f m all, infeasible %.1f%%", d.empty() ? "" : "; ",
             static_cast<unsigned long long>(seed), r.median_excluded_m, r.median_all_m,
             100.0 * r.infeasible_fraction);
  }
  return {ok, d};
}

// Agreement of relabeled observations with the generator's truth.
double label_agreement(const dataset::Scenario& s, const dataset::ScenarioConfig& sc, dataset::ResidualSource src) {
  const dataset::LabelResult lr = dataset::label_observations(
      s.epochs, [&](std::size_t pos) -> const dataset::SkyMask& { return s.mask_for(pos); },
      sc.label_residual_threshold_m, src);
  std::size_t n = 0, agree = 0;
  for (std::size_t e = 0; e < s.epochs.size(); ++e) {
    const auto& truth = s.epochs[e].observations;
    const auto& got = lr.epochs[e].observations;
    for (std::size_t k = 0; k < truth.size(); ++k) {
      if (!got[k].visibility) continue;
      ++n;
      agree += *got[k].visibility == *truth[k].visibility;
    }
  }
  return n ? static_cast<double>(agree) / n : 0.0;
}

Outcome ac7() {
  double worst = 1.0, worst_ls = 1.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    dataset::ScenarioConfig sc = dataset::scenario_preset("standard");
    sc.nlos_bias_min_m = 20.0;
    sc.nlos_bias_max_m = 100.0;
    sc.label_residual_threshold_m = 10.0;
    sc.rng_seed = seed;
    const dataset::Scenario s = dataset::generate_scenario(sc);
    worst = std::min(worst, label_agreement(s, sc, dataset::ResidualSource::kReference));
    worst_ls = std::min(worst_ls, label_agreement(s, sc, dataset::ResidualSource::kLeastSquares));
  }
  return {worst >= 0.95, fmt("lowest agreement over 10 seeds %.2f%% with reference residuals (need >= 95%%); "
                             "standalone LS residuals, for information: %.2f%%",
                             100.0 * worst, 100.0 * worst_ls)};
}

Outcome ac8() {
  std::vector<double> r;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    dataset::ScenarioConfig sc = dataset::scenario_preset("ac-like");
    sc.rng_seed = seed;
    const dataset::Scenario s = dataset::generate_scenario(sc);
    r.push_back(dataset::class_balance(s.epochs).r_nlos_percent);
  }
  const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  const bool ok = *lo >= 18.87 - 3.0 && *hi <= 18.87 + 3.0;
  return {ok, fmt("R_NLOS over 10 seeds in [%.2f, %.2f]%% (need 18.87 +/- 3)", *lo, *hi)};
}

Outcome ac9() {
  std::vector<std::string> failed;
  Rng rng(909);

  // Masked softmax rows sum to one over unmasked entries and are zero elsewhere.
  bool ok = true;
  for (int trial = 0; trial < 300 && ok; ++trial) {
    const std::size_t r = 1 + rng.below(6), c = 1 + rng.below(6);
    std::vector<std::uint8_t> mask(r * c);
    for (auto& m : mask) m = rng.uniform() < 0.6;
    for (std::size_t i = 0; i < r; ++i) mask[i * c + rng.below(c)] = 1;
    std::vector<double> x(r * c);
    for (double& v : x) v = rng.uniform(-40, 40);
    tensor::Tape t;
    const auto y = t.value(t.masked_softmax(t.constant({r, c}, x), 1, mask));
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        if (!mask[i * c + j]) ok = ok && y[i * c + j] == 0.0;
        s += y[i * c + j];
      }
      ok = ok && std::fabs(s - 1.0) < 1e-12;
    }
  }
  if (!ok) failed.push_back("masked softmax");

  // The attended vector of a target does not depend on the order of the others.
  const network::ModelConfig c;
  const network::ModelParams p = network::init_params(c, 8);
  ok = true;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(8), D = c.attn_dim;
    std::vector<double> x(n * D);
    for (double& v : x) v = rng.uniform(-2, 2);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::size_t> rest(perm.begin() + 1, perm.end());
    rng.shuffle(rest);
    std::copy(rest.begin(), rest.end(), perm.begin() + 1);
    std::vector<double> xp(n * D);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < D; ++j) xp[r * D + j] = x[perm[r] * D + j];
    tensor::Tape tape;
    const auto b = network::bind_constants(tape, p);
    const auto a = tape.constant({n, D}, x), ap = tape.constant({n, D}, xp);
    const std::vector<std::uint8_t> all(n, 1);
    const auto o1 = tape.value(network::multi_head_attention(tape, b, c, {a, a, a}, all).attended);
    const auto o2 = tape.value(network::multi_head_attention(tape, b, c, {ap, ap, ap}, all).attended);
    for (std::size_t j = 0; j < D; ++j) ok = ok && std::fabs(o1[j] - o2[j]) <= 1e-12 * std::max(1.0, std::fabs(o1[j]));
  }
  if (!ok) failed.push_back("attention permutation");

  // Garbage in masked slots changes neither outputs of valid slots nor the loss.
  ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    network::ModelConfig mc;
    mc.N_max = 6;
    mc.T = 3;
    const network::ModelParams mp = network::init_params(mc, 30 + trial);
    const dataset::FeatureWindow w = testing::random_window(mc.N_max, mc.T, {0, 2, 3}, rng);
    dataset::FeatureWindow g = w;
    for (std::size_t s : {1, 4, 5}) {
      g.labels_visibility[s] = rng.uniform();
      g.labels_error[s] = rng.uniform(-1e6, 1e6);
      for (std::size_t t = 0; t < mc.T; ++t)
        for (std::size_t f = 0; f < dataset::kNumFeatures; ++f) g.at(s, t, f) = rng.uniform(-1e6, 1e6);
    }
    const auto o1 = network::forward(w, mp, mc), o2 = network::forward(g, mp, mc);
    ok = ok && o1.visibility_prob == o2.visibility_prob && o1.error_pred_m == o2.error_pred_m;
    ok = ok && training::total_loss(o1, w, 1.0, mc.error_scale_m).total ==
                   training::total_loss(o2, g, 1.0, mc.error_scale_m).total;
  }
  if (!ok) failed.push_back("loss mask-insensitivity");

  // Azimuth in [0, 360), elevation in [-90, 90], both scale invariant.
  ok = true;
  for (int trial = 0; trial < 10000; ++trial) {
    const geodesy::EnuVector v{rng.uniform(-3e7, 3e7), rng.uniform(-3e7, 3e7), rng.uniform(-3e7, 3e7)};
    if (std::hypot(v.east, v.north) < 1e-3) continue;
    const double az = geodesy::azimuth_deg(v), el = geodesy::elevation_deg(v);
    ok = ok && az >= 0.0 && az < 360.0 && el >= -90.0 && el <= 90.0;
    const double k = rng.uniform(1e-3, 1e3);
    const geodesy::EnuVector s{v.east * k, v.north * k, v.up * k};
    const double daz = std::fabs(geodesy::azimuth_deg(s) - az);
    ok = ok && std::min(daz, 360.0 - daz) < 1e-9 && std::fabs(geodesy::elevation_deg(s) - el) < 1e-9;
  }
  if (!ok) failed.push_back("angle ranges");

  // Checkpoint round trip is bit-exact, outputs included.
  ok = true;
  for (int trial = 0; trial < 5; ++trial) {
    network::ModelConfig mc;
    mc.N_max = 5;
    mc.T = 4;
    network::Checkpoint ck{mc, network::init_params(mc, 50 + trial), {}};
    for (std::size_t f = 0; f < dataset::kNumFeatures; ++f) {
      ck.normalizer.mean[f] = rng.uniform(-100, 100);
      ck.normalizer.stddev[f] = rng.uniform(0.1, 50);
    }
    const std::string bytes = network::serialize_checkpoint(ck);
    const network::Checkpoint back = network::deserialize_checkpoint(bytes);
    ok = ok && network::serialize_checkpoint(back) == bytes && back.normalizer.mean == ck.normalizer.mean &&
         back.normalizer.stddev == ck.normalizer.stddev;
    for (const auto& [name, t] : ck.params.tensors()) {
      const auto a = back.params.at(name).data(), b = t.data();
      ok = ok && std::equal(a.begin(), a.end(), b.begin(), b.end());
    }
    const dataset::FeatureWindow w = testing::random_window(mc.N_max, mc.T, {1, 3, 4}, rng);
    const auto o1 = network::forward(w, ck.params, mc), o2 = network::forward(w, back.params, back.config);
    ok = ok && o1.visibility_prob == o2.visibility_prob && o1.error_pred_m == o2.error_pred_m;
  }
  if (!ok) failed.push_back("checkpoint round trip");

  std::string d = "masked softmax, attention permutation, loss mask-insensitivity, angle ranges, checkpoint round trip";
  if (!failed.empty()) {
    d = "failed:";
    for (const auto& f : failed) d += " " + f + ";";
  }
  return {failed.empty(), d};
}

struct Criterion {
  const char* id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::set<std::string> parse_list(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only, expect_fail;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if ((a == "--only" || a == "--expect-fail") && i + 1 < argc) {
      (a == "--only" ? only : expect_fail) = parse_list(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: acceptance [--only AC-n,...] [--expect-fail AC-n,...]\n");
      return 2;
    }
  }

  const std::vector<Criterion> criteria = {
      {"AC-1", "gradient oracle", 60, ac1},          {"AC-2", "capacity sanity", 120, ac2},
      {"AC-3", "LS solver oracle", 0, ac3},          {"AC-4", "metric oracle", 0, ac4},
      {"AC-5", "directional ablation", 1800, ac5},   {"AC-6", "exclusion consistency", 0, ac6},
      {"AC-7", "labeler fidelity", 0, ac7},          {"AC-8", "class balance", 0, ac8},
      {"AC-9", "invariant suite", 0, ac9},
  };

  int unexpected = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs >= c.budget_s) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    const bool expected_fail = expect_fail.contains(c.id);
    std::printf("%s %s %-22s %s (%.1f s)%s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                expected_fail ? (o.pass ? " [unexpected pass]" : " [expected failure]") : "");
    std::fflush(stdout);
    if (o.pass == expected_fail) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
