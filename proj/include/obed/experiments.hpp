#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "obed/model.hpp"
#include "obed/npf.hpp"
#include "obed/optim.hpp"
#include "obed/rng.hpp"

namespace obed {

struct Budgets {
  Eigen::Index M = 50;
  Eigen::Index N = 50;
  /// Outer batch L' of each optimizer gradient; 0 means M N.
  Eigen::Index batch = 0;
  Eigen::Index iterations = 100;
};

struct RunSettings {
  Eigen::Index horizon = 50;
  Budgets budgets;
  /// Outer batch of the per-step evaluation estimate, identical for every policy.
  Eigen::Index eval_batch = 0;
  AdamConfig adam;
  JitterKernel kernel;
  ResampleScheme resampling = ResampleScheme::Systematic;
};

struct StepRecord {
  int t = 0;
  Eigen::VectorXd design;
  Eigen::VectorXd observation;
  double eig = 0.0;
  double teig = 0.0;
  Eigen::VectorXd theta_mean;
  Eigen::VectorXd theta_var;
  /// Model-specific design metrics (pointing errors for the source model).
  Eigen::VectorXd diagnostics;
  double wall_seconds = 0.0;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::string policy;
  std::string model;
  std::string model_hash;
  std::string budget_hash;
  std::string trajectory_hash;
  Budgets budgets;
  Eigen::Index eval_batch = 0;
  Eigen::Index horizon = 0;
  /// Full model parameter block.
  nlohmann::json model_config;
  /// Optimizer, jitter and resampling settings of the run.
  nlohmann::json settings;
  std::vector<StepRecord> steps;

  double teig(Eigen::Index t) const;
  /// Sidecar header: everything except the per-step rows.
  nlohmann::json header() const;
};

/// Raised when a run cannot continue; carries the steps completed so far.
class RunFailure : public std::runtime_error {
 public:
  RunFailure(RunRecord partial, const std::string& what);
  const RunRecord& partial() const { return partial_; }

 private:
  RunRecord partial_;
};

/// FNV-1a of the canonical JSON text, as 16 hex digits.
std::string hash_json(const nlohmann::json& j);
/// Hash of the evaluation yardstick (M, N, evaluation batch).
std::string evaluation_budget_hash(const RunSettings& settings);

/// Streams from `seed`: "init" (filter), "truth"/t (state noise), "obs"/t,
/// "design"/t (optimizer or random draw), "eval"/t, "npf"/t. All but "design"
/// are shared across policies, so matched seeds see the same state path and
/// the same evaluation draws.
RunRecord run_sequential(const ModelSpec& model, const DesignPolicy& policy,
                         const RunSettings& settings, std::uint64_t seed);

/// TEIG_t(a) - TEIG_t(b).
double delta_teig(const RunRecord& a, const RunRecord& b, Eigen::Index t);

/// BCa interval for the mean.
std::pair<double, double> bootstrap_bca_ci(const Eigen::VectorXd& samples, double level,
                                           Eigen::Index resamples, RngStream rng);

/// Linear-interpolation quantile of unsorted data.
double quantile(std::vector<double> values, double q);

struct IntervalSummary {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct TeigRow {
  std::string policy;
  int t = 0;
  Eigen::Index seeds = 0;
  IntervalSummary teig;
};

struct DeltaRow {
  std::string a;
  std::string b;
  int t = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> deltas;
  IntervalSummary delta;
};

struct QuartileRow {
  std::string policy;
  int t = 0;
  /// "pointing_error" or "xi_<k>".
  std::string metric;
  Eigen::Index count = 0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
};

struct AggregateReport {
  std::string model_hash;
  std::string budget_hash;
  std::vector<int> checkpoints;
  std::vector<TeigRow> teig;
  std::vector<DeltaRow> delta;
  std::vector<QuartileRow> quartiles;

  nlohmann::json to_json() const;
  /// Flat table: kind, policy, baseline, t, metric, n, mean, lo, hi, q25, median, q75.
  std::string to_csv() const;
};

AggregateReport aggregate(const std::vector<RunRecord>& records, const std::vector<int>& checkpoints,
                          Eigen::Index resamples = 2000, std::uint64_t seed = 0);

/// Column names of the record CSV for the given record shape.
std::vector<std::string> record_columns(const RunRecord& record);
std::string record_to_csv(const RunRecord& record);
/// Writes <stem>.csv and <stem>.json.
void write_run_record(const RunRecord& record, const std::filesystem::path& stem);
/// Reads a record from its CSV and the sidecar next to it.
RunRecord read_run_record(const std::filesystem::path& csv_path);

}  // namespace obed
