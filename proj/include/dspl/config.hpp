#ifndef DSPL_CONFIG_HPP_
#define DSPL_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dspl/data.hpp"
#include "dspl/eval.hpp"
#include "dspl/network.hpp"
#include "dspl/trainer.hpp"

namespace dspl {

struct ModelConfig {
  std::size_t parts = 4;
  std::size_t part_dim = 8;
  DeskOptions desk;
  StdSchedule init_std;
  std::uint64_t init_seed = 7;
};

struct RunConfig {
  SyntheticConfig data;
  double train_fraction = 0.5;
  std::uint64_t split_seed = 3;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::string output_dir = "runs/default";

  void validate() const;
};

/// Every key with its current value; the canonical round-trip format.
nlohmann::json to_json(const RunConfig& cfg);
/// Starts from `base` and overrides the keys present in `j`. Unknown keys,
/// wrong types and invalid values raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j, const RunConfig& base = {});
/// TOML documents are converted to the JSON layout first.
nlohmann::json toml_to_json(const std::string& text);
/// Chooses JSON or TOML by extension (.toml) and falls back to JSON.
RunConfig load_run_config(const std::filesystem::path& path);

/// Builds the desk-scale network for `input_dims` and initializes it.
NetworkModel build_model(const ModelConfig& cfg, const Dims& input_dims);

}  // namespace dspl

#endif  // DSPL_CONFIG_HPP_
