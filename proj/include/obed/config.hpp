#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "obed/experiments.hpp"
#include "obed/model.hpp"
#include "obed/optim.hpp"

namespace obed {

/// One experiment: model block, policy, budgets and output location.
///
/// Files are JSON objects:
///
///     {
///       "model":      {"type": "sir" | "source" | "lingauss", ...parameters},
///       "policy":     "badpods" | "random" | "static",
///       "horizon":    T,
///       "budgets":    {"M": .., "N": .., "batch": L', "K": ..},
///       "evaluation": {"batch": ..},
///       "optimizer":  {"learning_rate": .., "beta1": .., "beta2": .., "epsilon": ..,
///                      "schedule": "constant" | "inverse-sqrt"},
///       "jitter_scale": c,
///       "resampling": "systematic" | "multinomial",
///       "seeds":      [..] or {"first": .., "count": ..},
///       "static":     {"max_horizon": ..},
///       "checkpoints": [..],
///       "output_dir": ".."
///     }
///
/// Omitted keys take the defaults below; the model block's omitted keys take
/// the model's own defaults.
struct ExperimentConfig {
  nlohmann::json model = {{"type", "sir"}};
  PolicyTag policy = PolicyTag::Badpods;
  Eigen::Index horizon = 50;
  Budgets budgets;
  Eigen::Index eval_batch = 0;
  AdamConfig adam;
  double jitter_scale = 2.0;
  ResampleScheme resampling = ResampleScheme::Systematic;
  std::vector<std::uint64_t> seeds{0};
  Eigen::Index static_max_horizon = 200;
  std::vector<int> checkpoints;
  std::string output_dir = "results";

  /// Canonical form: the model block is expanded to every parameter.
  nlohmann::json to_json() const;
  /// Throws std::invalid_argument naming the offending field.
  static ExperimentConfig from_json(const nlohmann::json& j);

  RunSettings run_settings() const;
  StaticOptions static_options() const;
  /// Checkpoints to report, defaulting to quarters of the horizon.
  std::vector<int> report_checkpoints() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Builds a model from its parameter block.
std::unique_ptr<ModelSpec> make_model(const nlohmann::json& block);

/// Parses "3", "0-9" or "1,4,7" into a seed list.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace obed
