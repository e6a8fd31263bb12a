#include <algorithm>
#include <set>

#include "doctest.h"
#include "nlos/config.hpp"
#include "nlos/error.hpp"

using namespace nlos;
using namespace nlos::config;

TEST_CASE("config defaults validate and dump round trips") {
  const RunConfig c = build({});
  CHECK(c.preset == "standard");
  CHECK(c.model.T == c.scenario.T_window);
  CHECK(c.model.N_max == c.scenario.N_max);
  const std::string d = dump(c);
  const RunConfig back = build(parse_text(d));
  CHECK(dump(back) == d);
  CHECK(hash(back) == hash(c));

  // Every key appears once, in sorted order.
  const auto keys = known_keys();
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  CHECK(std::set<std::string>(keys.begin(), keys.end()).size() == keys.size());
  CHECK(parse_text(d).size() == keys.size());
}

TEST_CASE("config: preset first, overrides win, window keys reach the model") {
  const Assignments file = {{"scenario.duration_s", "42"}, {"preset", "ac-like"}, {"seed", "5"}};
  const RunConfig c = build(file, {{"seed", "9"}, {"window.T", "3"}});
  CHECK(c.preset == "ac-like");
  CHECK(c.scenario.duration_s == 42.0);  // not reset by the preset
  CHECK(c.scenario.n_satellites == dataset::scenario_preset("ac-like").n_satellites);
  CHECK(c.seed == 9);
  CHECK(c.scenario.rng_seed == 9);
  CHECK(c.train.rng_seed == derive_seed(9, "train"));
  CHECK(c.model.T == 3);
  CHECK(c.scenario.T_window == 3);

  const RunConfig d = build({{"train.lr_milestones", "5, 7"}, {"ablation.variants", "no_bilstm,full"}});
  CHECK(d.train.lr_milestones == std::vector<std::size_t>{5, 7});
  REQUIRE(d.ablation_variants.size() == 2);
  CHECK(d.ablation_variants[0] == network::Variant::kNoBiLstm);
  CHECK(hash(d) != hash(build({})));
}

TEST_CASE("config errors are usage errors") {
  CHECK_THROWS_AS(build({{"nope", "1"}}), UsageError);
  CHECK_THROWS_AS(build({{"train.epochs", "ten"}}), UsageError);
  CHECK_THROWS_AS(build({{"train.epochs", "-1"}}), UsageError);
  CHECK_THROWS_AS(build({{"train.epochs", "0"}}), UsageError);
  CHECK_THROWS_AS(build({{"seed", "1.5"}}), UsageError);
  CHECK_THROWS_AS(build({{"seed", "99999999999999999999"}}), UsageError);
  CHECK_THROWS_AS(build({{"preset", "moon"}}), UsageError);
  CHECK_THROWS_AS(build({{"model.variant", "tiny"}}), UsageError);
  CHECK_THROWS_AS(build({{"threshold", "1"}}), UsageError);
  CHECK_THROWS_AS(build({{"ablation.variants", "full,full"}}), UsageError);
  CHECK_THROWS_AS(build({{"model.stop_gradient_query", "maybe"}}), UsageError);
  CHECK_THROWS_AS(build({{"scenario.nlos_bias_min_m", "200"}}), UsageError);
  // Without validation only parse errors surface.
  CHECK_NOTHROW(build({{"scenario.nlos_bias_min_m", "200"}}, {}, false));

  CHECK_THROWS_AS(parse_text("a = 1\na = 2\n"), UsageError);
  CHECK_THROWS_AS(parse_text("just words\n"), UsageError);
  CHECK_THROWS_AS(parse_text(" = 3\n"), UsageError);
  CHECK_THROWS_AS(parse_file("/nonexistent/run.cfg"), UsageError);
  CHECK_THROWS_AS(parse_override("seed"), UsageError);

  const auto a = parse_text("# comment\n\n  seed = 4  \ntrain.epochs=3\n");
  REQUIRE(a.size() == 2);
  CHECK(a[0] == std::pair<std::string, std::string>{"seed", "4"});
  CHECK(parse_override("train.base_lr = 1e-3") == std::pair<std::string, std::string>{"train.base_lr", "1e-3"});
}

TEST_CASE("derived seeds differ per purpose and per seed") {
  CHECK(derive_seed(1, "init") != derive_seed(1, "train"));
  CHECK(derive_seed(1, "init") != derive_seed(2, "init"));
  CHECK(derive_seed(3, "init") == derive_seed(3, "init"));
}
