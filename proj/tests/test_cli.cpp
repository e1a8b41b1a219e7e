#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "dspl/cli.hpp"
#include "dspl/config.hpp"
#include "dspl/io.hpp"

using namespace dspl;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dspl");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dspl_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small, fast run config written as JSON.
fs::path small_config(const fs::path& dir) {
  RunConfig c;
  c.data.identities = 8;
  c.data.samples_per_camera = 2;
  c.data.latent_dim = 4;
  c.data.payload_dims = {12};
  c.data.outlier_fraction = 0.1;
  c.model.desk.global_dim = 8;
  c.model.desk.local_dim = 4;
  c.model.init_std = {0.25, 0.25};
  c.train.iterations = 3;
  c.train.triplets_per_anchor = 10;
  c.train.reduction = Reduction::Mean;
  c.eval.trials = 2;
  const auto path = dir / "run.json";
  write_text_file(path, to_json(c).dump(2));
  return path;
}

}  // namespace

TEST_CASE("config json round trip") {
  RunConfig c;
  c.train.mode = TrainMode::SymOnly;
  c.train.reduction = Reduction::Mean;
  c.data.payload_dims = {14, 10, 2};
  c.eval.topk = {1, 3};
  const auto j = to_json(c);
  CHECK(to_json(run_config_from_json(j)) == j);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(run_config_from_json({{"trian", {}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"lerning_rate", 0.1}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"learning_rate", "fast"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"vartheta", 1.5}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"mode", "best"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"data", {{"train_fraction", 1.0}}}}), ConfigError);
}

TEST_CASE("toml and json describe the same config") {
  const auto c = load_run_config(fs::path(DSPL_SOURCE_DIR) / "configs" / "desk_benchmark.toml");
  CHECK(c.train.reduction == Reduction::Mean);
  CHECK(c.data.payload_dims == Dims{32});
  CHECK(c.train.loss.zeta == 0.1);
  const auto dir = scratch("toml");
  write_text_file(dir / "c.json", to_json(c).dump());
  CHECK(to_json(load_run_config(dir / "c.json")) == to_json(c));
  CHECK_THROWS_AS(toml_to_json("[train\nx = "), ConfigError);
}

TEST_CASE("usage errors exit 2") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"train"}).code == kExitUsage);
  CHECK(cli({"bogus"}).code == kExitUsage);
  CHECK(cli({"gen-data", "--config", "/nonexistent.json", "--out", "/tmp/x"}).code == kExitUsage);
  const auto dir = scratch("usage");
  CHECK(cli({"sweep", "--param", "M", "--config", small_config(dir).string()}).code == kExitUsage);
  CHECK(cli({"sweep", "--param", "rho", "--values", "1", "--config", small_config(dir).string()})
            .code == kExitUsage);
  const auto r = cli({"train", "--data", "x", "--out", "y", "--mode", "turbo"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("turbo") != std::string::npos);
}

TEST_CASE("help exits 0") { CHECK(cli({"--help"}).code == kExitOk); }

TEST_CASE("gen-data, train, eval and rank-dump end to end") {
  const auto dir = scratch("e2e");
  const auto cfg = small_config(dir).string();
  auto r = cli({"gen-data", "--config", cfg, "--out", (dir / "data").string()});
  REQUIRE(r.code == kExitOk);
  r = cli({"train", "--data", (dir / "data").string(), "--config", cfg, "--out",
           (dir / "model").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(dir / "model" / "params.dspt"));
  CHECK(fs::exists(dir / "model" / "spec.json"));
  CHECK(read_text_file(dir / "model" / "records.jsonl").find("\"h\":2") != std::string::npos);
  r = cli({"eval", "--model", (dir / "model").string(), "--data", (dir / "data").string(),
           "--protocol", "single_query", "--topk", "1,2"});
  REQUIRE(r.code == kExitOk);
  const auto metrics = nlohmann::json::parse(r.out);
  CHECK(metrics["cmc"].size() == 2);
  CHECK(metrics["protocol"] == "single_query");

  // a probe id from the test split
  const auto c = load_run_config(cfg);
  const auto split = split_zero_shot(load_dataset(dir / "data"), c.train_fraction, c.split_seed);
  const auto probe = std::to_string(split.test.samples.front().sample_id);
  r = cli({"rank-dump", "--model", (dir / "model").string(), "--data", (dir / "data").string(),
           "--probe-id", probe, "--top", "3"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.rfind("rank,sample_id", 0) == 0);
  const auto train_probe = std::to_string(split.train.samples.front().sample_id);
  CHECK(cli({"rank-dump", "--model", (dir / "model").string(), "--data", (dir / "data").string(),
             "--probe-id", train_probe})
            .code == kExitUsage);
}

TEST_CASE("mismatched data and model exit 3") {
  const auto dir = scratch("mismatch");
  const auto cfg = small_config(dir).string();
  REQUIRE(cli({"gen-data", "--config", cfg, "--out", (dir / "data").string()}).code == kExitOk);
  REQUIRE(cli({"train", "--data", (dir / "data").string(), "--config", cfg, "--out",
               (dir / "model").string()})
              .code == kExitOk);
  auto c = load_run_config(cfg);
  c.data.payload_dims = {16};
  write_text_file(dir / "other.json", to_json(c).dump());
  REQUIRE(cli({"gen-data", "--config", (dir / "other.json").string(), "--out",
               (dir / "other").string()})
              .code == kExitOk);
  CHECK(cli({"eval", "--model", (dir / "model").string(), "--data", (dir / "other").string()})
            .code == kExitIncompatible);
  CHECK(cli({"train", "--data", (dir / "missing").string(), "--out", (dir / "m2").string()}).code ==
        kExitIncompatible);
}

TEST_CASE("divergence exits 4 and keeps the records so far") {
  const auto dir = scratch("diverge");
  auto c = load_run_config(small_config(dir));
  c.train.reduction = Reduction::Sum;
  c.train.learning_rate = 1e3;
  c.train.iterations = 50;
  write_text_file(dir / "hot.json", to_json(c).dump());
  REQUIRE(cli({"gen-data", "--config", (dir / "hot.json").string(), "--out", (dir / "data").string()})
              .code == kExitOk);
  const auto r = cli({"train", "--data", (dir / "data").string(), "--config",
                      (dir / "hot.json").string(), "--out", (dir / "model").string()});
  CHECK(r.code == kExitDivergence);
  CHECK(fs::exists(dir / "model" / "records.jsonl"));
}

TEST_CASE("sweep writes one row per value") {
  const auto dir = scratch("sweep");
  const auto r = cli({"sweep", "--param", "zeta", "--values", "0,0.1", "--config",
                      small_config(dir).string(), "--out", (dir / "s.csv").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.rfind("param,value,top1,map,status\n", 0) == 0);
  CHECK(read_text_file(dir / "s.csv") == r.out);
  std::size_t lines = 0;
  for (char ch : r.out) lines += ch == '\n';
  CHECK(lines == 3);
}

TEST_CASE("config dump prints every default") {
  const auto r = cli({"config", "dump"});
  REQUIRE(r.code == kExitOk);
  CHECK(nlohmann::json::parse(r.out) == to_json(RunConfig{}));
}
