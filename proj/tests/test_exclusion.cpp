#include <cmath>

#include "doctest.h"
#include "nlos/error.hpp"
#include "nlos/exclusion.hpp"

using namespace nlos;
using namespace nlos::exclusion;

namespace {

dataset::Scenario scenario(const std::string& preset, std::uint64_t seed, double duration_s = 120.0) {
  dataset::ScenarioConfig c = dataset::scenario_preset(preset);
  c.rng_seed = seed;
  c.duration_s = duration_s;
  return dataset::generate_scenario(c);
}

network::Checkpoint untrained_model(std::size_t T = 3) {
  network::ModelConfig c;
  c.lstm_hidden = 4;
  c.attn_heads = 2;
  c.attn_dim = 4;
  c.mlp_hidden = 8;
  c.T = T;
  return {c, network::init_params(c, 1), {}};
}

}  // namespace

TEST_CASE("percentile interpolates linearly") {
  CHECK(percentile({3.0}, 50.0) == 3.0);
  CHECK(percentile({4.0, 1.0, 2.0, 3.0}, 50.0) == 2.5);
  CHECK(percentile({1.0, 2.0, 3.0, 4.0, 5.0}, 95.0) == doctest::Approx(4.8));
  CHECK(percentile({1.0, 2.0}, 0.0) == 1.0);
  CHECK(percentile({1.0, 2.0}, 100.0) == 2.0);
  CHECK_THROWS_AS(percentile({}, 50.0), DataError);
  CHECK_THROWS_AS(percentile({1.0}, 101.0), UsageError);
}

TEST_CASE("solve_with_exclusion: no flags, infeasible guard") {
  const auto s = scenario("standard", 3, 10.0);
  const dataset::Epoch& e = s.epochs[4];
  REQUIRE(e.observations.size() >= 6);
  const ExclusionSolve none = solve_with_exclusion(e, {}, *e.receiver_ls);
  CHECK(none.all.status == SolveStatus::kOk);
  CHECK(none.excluded.status == SolveStatus::kOk);
  CHECK(none.all.position == none.excluded.position);
  CHECK(none.all.satellites == e.observations.size());

  std::map<int, bool> flags;
  for (const auto& o : e.observations) flags[o.sat_id] = false;
  CHECK(solve_with_exclusion(e, flags, *e.receiver_ls).excluded.position == none.all.position);

  std::size_t k = 0;
  for (const auto& o : e.observations)
    if (k++ < e.observations.size() - 3) flags[o.sat_id] = true;
  const ExclusionSolve cut = solve_with_exclusion(e, flags, *e.receiver_ls);
  CHECK(cut.all.status == SolveStatus::kOk);
  CHECK(cut.excluded.status == SolveStatus::kInfeasible);
  CHECK(cut.excluded.satellites == 3);
  CHECK(cut.excluded.satellites <= cut.all.satellites);
}

TEST_CASE("oracle flags on 50 m NLOS biases beat the all-satellite solution") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    dataset::ScenarioConfig c = dataset::scenario_preset("standard");
    c.rng_seed = seed;
    c.duration_s = 300.0;
    c.nlos_bias_min_m = 50.0;
    c.nlos_bias_max_m = 50.0;
    const auto s = dataset::generate_scenario(c);
    const Classification oracle = label_flags(s.epochs);
    const ExclusionResult r = evaluate_exclusion(s.epochs, oracle);
    INFO("seed ", seed);
    CHECK(r.median_excluded_m < r.median_all_m);
    CHECK(r.ratios.r_los_percent + r.ratios.r_nlos_percent == doctest::Approx(100.0));
    for (const auto& e : r.epochs) CHECK(e.solve.excluded.satellites <= e.solve.all.satellites);
    CHECK(r.epochs.size() + r.failed == s.epochs.size());
  }
}

TEST_CASE("open sky: oracle exclusion is a no-op") {
  const auto s = scenario("open-sky", 4);
  const ExclusionResult r = evaluate_exclusion(s.epochs, label_flags(s.epochs));
  CHECK(r.ratios.nlos == 0);
  CHECK(r.median_excluded_m == r.median_all_m);
  CHECK(r.infeasible == 0);
}

TEST_CASE("classify_epochs marks history-less epochs unclassified and sums ratios") {
  const auto s = scenario("standard", 5, 40.0);
  const network::Checkpoint model = untrained_model(3);
  const Classification c = classify_epochs(model, s.epochs);
  REQUIRE(c.epochs.size() == s.epochs.size());
  CHECK_FALSE(c.epochs[0].classified);
  CHECK_FALSE(c.epochs[1].classified);
  CHECK(c.epochs[2].classified);
  CHECK(c.summary.unclassified_epochs >= 2);
  CHECK(c.summary.classified_epochs + c.summary.unclassified_epochs == s.epochs.size());
  CHECK(c.summary.los + c.summary.nlos == c.summary.observations);
  CHECK(c.summary.r_los_percent + c.summary.r_nlos_percent == doctest::Approx(100.0));
  for (const auto& f : c.epochs)
    for (const auto& [sat, flagged] : f.nlos) CHECK(flagged == (f.prob_los.at(sat) < 0.5));

  // Deterministic end to end.
  const ExclusionResult a = trajectory_report(s.epochs, model);
  const ExclusionResult b = trajectory_report(s.epochs, model);
  CHECK(a.to_csv() == b.to_csv());
  CHECK(a.to_csv().rfind("epoch_index,sats_all,sats_excluded,flagged,", 0) == 0);
  CHECK(a.summary_text().find("R_NLOS") != std::string::npos);
  const std::string svg = trajectory_svg(s.epochs, a);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("nan") == std::string::npos);

  // Every epoch the threshold flags as NLOS is dropped.
  const Classification all_nlos = classify_epochs(model, s.epochs, 1.1);
  CHECK(all_nlos.summary.los == 0);
  const ExclusionResult r = evaluate_exclusion(s.epochs, all_nlos);
  CHECK(r.infeasible == r.epochs.size());
  CHECK(r.infeasible_fraction == doctest::Approx(1.0));
  CHECK(r.median_excluded_m == r.median_all_m);
}

TEST_CASE("format_ratio_table has both ratio columns") {
  RatioSummary s;
  s.observations = 10;
  s.los = 8;
  s.nlos = 2;
  s.r_los_percent = 80.0;
  s.r_nlos_percent = 20.0;
  const std::string t = format_ratio_table(s, "ours");
  CHECK(t.find("R_LOS (%)") != std::string::npos);
  CHECK(t.find("R_NLOS (%)") != std::string::npos);
  CHECK(t.find("80.00") != std::string::npos);
}
