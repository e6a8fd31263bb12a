// Exercises the shared library through its C interface only.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "nlos/nlos.h"

namespace fs = std::filesystem;

namespace {

nlos_config* small_config() {
  nlos_config* c = nullptr;
  REQUIRE(nlos_config_new(&c) == NLOS_OK);
  const char* kv[][2] = {{"scenario.duration_s", "80"}, {"window.T", "3"},       {"model.lstm_hidden", "4"},
                         {"model.attn_heads", "2"},      {"model.attn_dim", "4"}, {"model.mlp_hidden", "8"},
                         {"train.epochs", "2"},          {"seed", "11"}};
  for (auto& p : kv) REQUIRE(nlos_config_set(c, p[0], p[1]) == NLOS_OK);
  return c;
}

}  // namespace

TEST_CASE("status codes and thread-local error messages") {
  CHECK(std::string(nlos_version()).size() > 0);
  nlos_config* c = nullptr;
  CHECK(nlos_config_new(nullptr) == NLOS_ERR_USAGE);
  CHECK(std::string(nlos_last_error()).find("null") != std::string::npos);
  REQUIRE(nlos_config_new(&c) == NLOS_OK);
  CHECK(std::string(nlos_last_error()).empty());

  CHECK(nlos_config_set(c, "no.such.key", "1") == NLOS_ERR_USAGE);
  CHECK(std::string(nlos_last_error()).find("no.such.key") != std::string::npos);
  CHECK(nlos_config_set(c, "train.epochs", "many") == NLOS_ERR_USAGE);
  CHECK(nlos_config_load_file(c, "/nonexistent.cfg") == NLOS_ERR_USAGE);

  // Individually valid, jointly invalid: accepted by set, rejected on use.
  CHECK(nlos_config_set(c, "scenario.nlos_bias_min_m", "500") == NLOS_OK);
  const char* text = nullptr;
  CHECK(nlos_config_dump(c, &text) == NLOS_ERR_USAGE);
  CHECK(nlos_config_set(c, "scenario.nlos_bias_max_m", "600") == NLOS_OK);
  REQUIRE(nlos_config_dump(c, &text) == NLOS_OK);
  CHECK(std::string(text).find("scenario.nlos_bias_max_m = 600\n") != std::string::npos);

  const char* v = nullptr;
  REQUIRE(nlos_config_get(c, "scenario.nlos_bias_min_m", &v) == NLOS_OK);
  CHECK(std::string(v) == "500");
  CHECK(nlos_config_get(c, "bogus", &v) == NLOS_ERR_USAGE);

  std::uint64_t h1 = 0, h2 = 0;
  REQUIRE(nlos_config_hash(c, &h1) == NLOS_OK);
  REQUIRE(nlos_config_set(c, "seed", "2") == NLOS_OK);
  REQUIRE(nlos_config_hash(c, &h2) == NLOS_OK);
  CHECK(h1 != h2);

  CHECK(nlos_config_key_count() > 40);
  CHECK(nlos_config_key(0) != nullptr);
  CHECK(nlos_config_key(nlos_config_key_count()) == nullptr);
  CHECK(nlos_command_count() == 9);
  CHECK(std::string(nlos_command_name(0)) == "gen-data");
  CHECK(nlos_command_name(9) == nullptr);
  nlos_config_free(c);
  nlos_config_free(nullptr);
}

TEST_CASE("datasets, models and commands through handles") {
  const fs::path dir = fs::temp_directory_path() / "nlos_capi_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  nlos_config* c = small_config();

  nlos_dataset* ds = nullptr;
  REQUIRE(nlos_dataset_generate(c, &ds) == NLOS_OK);
  CHECK(nlos_dataset_epoch_count(ds) == 80);
  CHECK(nlos_dataset_observation_count(ds) >= 80 * 4);
  double pct = -1.0;
  REQUIRE(nlos_dataset_nlos_percent(ds, &pct) == NLOS_OK);
  CHECK(pct > 0.0);
  CHECK(pct < 100.0);
  const std::string csv = (dir / "d.csv").string();
  REQUIRE(nlos_dataset_write(ds, csv.c_str()) == NLOS_OK);
  nlos_dataset* back = nullptr;
  REQUIRE(nlos_dataset_read(csv.c_str(), &back) == NLOS_OK);
  CHECK(nlos_dataset_observation_count(back) == nlos_dataset_observation_count(ds));
  CHECK(nlos_dataset_read((dir / "missing.csv").string().c_str(), &back) == NLOS_ERR_USAGE);

  const std::string model = (dir / "m.ckpt").string();
  const char* keys[] = {"data", "out"};
  const char* values[] = {csv.c_str(), model.c_str()};
  nlos_result* r = nullptr;
  REQUIRE(nlos_command_run("train", c, keys, values, 2, &r) == NLOS_OK);
  CHECK(!fs::exists(model));
  CHECK(nlos_result_output_count(r) == 3);
  CHECK(std::string(nlos_result_manifest(r)).find("\"command\": \"train\"") != std::string::npos);
  CHECK(std::string(nlos_result_text(r)).find("Precision") != std::string::npos);
  REQUIRE(nlos_result_commit(r) == NLOS_OK);
  CHECK(fs::exists(model));
  CHECK(fs::exists(model + ".manifest.json"));
  nlos_result_free(r);

  CHECK(nlos_command_run("fly", c, nullptr, nullptr, 0, &r) == NLOS_ERR_USAGE);
  CHECK(nlos_command_run("train", c, nullptr, nullptr, 1, &r) == NLOS_ERR_USAGE);

  nlos_model* m = nullptr;
  REQUIRE(nlos_model_load(model.c_str(), &m) == NLOS_OK);
  CHECK(nlos_model_parameter_count(m) > 0);
  std::size_t T = 0, n_max = 0;
  nlos_model_shape(m, &T, &n_max);
  CHECK(T == 3);
  CHECK(n_max == 25);
  std::size_t count = 0;
  REQUIRE(nlos_model_predict(m, back, nullptr, 0, &count) == NLOS_OK);
  CHECK(count > 0);
  std::vector<double> probs(count, -1.0);
  CHECK(nlos_model_predict(m, back, probs.data(), count - 1, &count) == NLOS_ERR_USAGE);
  REQUIRE(nlos_model_predict(m, back, probs.data(), probs.size(), &count) == NLOS_OK);
  for (double p : probs) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }

  // A corrupted checkpoint is a data error.
  const std::string bad = (dir / "bad.ckpt").string();
  nlos_dataset_write(ds, bad.c_str());
  nlos_model* m2 = nullptr;
  CHECK(nlos_model_load(bad.c_str(), &m2) == NLOS_ERR_DATA);

  nlos_model_free(m);
  nlos_dataset_free(back);
  nlos_dataset_free(ds);
  nlos_config_free(c);
  fs::remove_all(dir);
}
