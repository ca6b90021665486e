#include "obed/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "obed/models/lingauss.hpp"
#include "obed/models/sir.hpp"
#include "obed/models/source.hpp"

namespace obed {

namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& msg) {
  throw std::invalid_argument(field + ": " + msg);
}

void check_keys(const nlohmann::json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) field_error(where.empty() ? "config" : where, "must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) field_error(where.empty() ? k : where + "." + k, "unknown key");
  }
}

template <typename T>
void read(const nlohmann::json& j, const std::string& key, const std::string& field, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const std::exception&) {
    field_error(field, "has the wrong type");
  }
}

Eigen::Index read_count(const nlohmann::json& j, const std::string& key, const std::string& field,
                        Eigen::Index current, Eigen::Index minimum) {
  if (!j.contains(key)) return current;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) field_error(field, "must be an integer");
  const auto n = v.get<long long>();
  if (n < minimum) field_error(field, "must be >= " + std::to_string(minimum));
  return static_cast<Eigen::Index>(n);
}

}  // namespace

std::unique_ptr<ModelSpec> make_model(const nlohmann::json& block) {
  if (!block.is_object() || !block.contains("type") || !block.at("type").is_string()) {
    field_error("model.type", "must name a model (sir, source, lingauss)");
  }
  const std::string type = block.at("type").get<std::string>();
  nlohmann::json params = block;
  params.erase("type");
  try {
    if (type == "sir") {
      check_keys(params, "model", {"population", "initial_infected", "detection", "sampling_effort", "mixing",
                                   "step", "beta2", "gamma2", "prior_lower", "prior_upper", "true_param",
                                   "rate_floor"});
      return std::make_unique<SirModel>(SirConfig::from_json(params));
    }
    if (type == "source") {
      check_keys(params, "model", {"sensors", "strength", "background", "saturation", "directivity_d",
                                   "directivity_k", "noise_var", "step", "process_var", "angular_velocity",
                                   "prior_lower", "prior_upper", "true_param", "initial_state"});
      return std::make_unique<SourceModel>(SourceConfig::from_json(params));
    }
    if (type == "lingauss") {
      check_keys(params, "model", {"transition", "control_gain", "process_var", "obs_var", "prior_mean",
                                   "prior_var", "state_mean", "state_var", "true_param", "true_initial",
                                   "design_lower", "design_upper"});
      return std::make_unique<LinGaussModel>(LinGaussConfig::from_json(params));
    }
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    if (what.rfind("model", 0) == 0) throw;
    throw std::invalid_argument("model." + what);
  }
  field_error("model.type", "unknown model '" + type + "'");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    try {
      const auto dash = part.find('-');
      if (dash == std::string::npos) {
        out.push_back(std::stoull(part));
      } else {
        const auto a = std::stoull(part.substr(0, dash));
        const auto b = std::stoull(part.substr(dash + 1));
        if (b < a) throw std::invalid_argument("descending range");
        for (auto s = a; s <= b; ++s) out.push_back(s);
      }
    } catch (const std::exception&) {
      field_error("seeds", "cannot parse '" + part + "'");
    }
  }
  if (out.empty()) field_error("seeds", "must not be empty");
  return out;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"model", model},
          {"policy", to_string(policy)},
          {"horizon", horizon},
          {"budgets", {{"M", budgets.M}, {"N", budgets.N}, {"batch", budgets.batch}, {"K", budgets.iterations}}},
          {"evaluation", {{"batch", eval_batch}}},
          {"optimizer", {{"learning_rate", adam.learning_rate}, {"beta1", adam.beta1}, {"beta2", adam.beta2},
                         {"epsilon", adam.epsilon}, {"schedule", to_string(adam.schedule)}}},
          {"jitter_scale", jitter_scale},
          {"resampling", to_string(resampling)},
          {"seeds", seeds},
          {"static", {{"max_horizon", static_max_horizon}}},
          {"checkpoints", checkpoints},
          {"output_dir", output_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  check_keys(j, "", {"model", "policy", "horizon", "budgets", "evaluation", "optimizer", "jitter_scale",
                     "resampling", "seeds", "static", "checkpoints", "output_dir"});
  ExperimentConfig c;
  if (j.contains("model")) c.model = j.at("model");
  c.model = make_model(c.model)->to_json();

  if (j.contains("policy")) {
    std::string p;
    read(j, "policy", "policy", p);
    try {
      c.policy = policy_from_string(p);
    } catch (const std::exception& e) {
      field_error("policy", e.what());
    }
  }
  c.horizon = read_count(j, "horizon", "horizon", c.horizon, 0);
  if (j.contains("budgets")) {
    const auto& b = j.at("budgets");
    check_keys(b, "budgets", {"M", "N", "batch", "K"});
    c.budgets.M = read_count(b, "M", "budgets.M", c.budgets.M, 1);
    c.budgets.N = read_count(b, "N", "budgets.N", c.budgets.N, 1);
    c.budgets.batch = read_count(b, "batch", "budgets.batch", c.budgets.batch, 0);
    c.budgets.iterations = read_count(b, "K", "budgets.K", c.budgets.iterations, 1);
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_keys(e, "evaluation", {"batch"});
    c.eval_batch = read_count(e, "batch", "evaluation.batch", c.eval_batch, 0);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_keys(o, "optimizer", {"learning_rate", "beta1", "beta2", "epsilon", "schedule"});
    read(o, "learning_rate", "optimizer.learning_rate", c.adam.learning_rate);
    read(o, "beta1", "optimizer.beta1", c.adam.beta1);
    read(o, "beta2", "optimizer.beta2", c.adam.beta2);
    read(o, "epsilon", "optimizer.epsilon", c.adam.epsilon);
    if (o.contains("schedule")) {
      std::string s;
      read(o, "schedule", "optimizer.schedule", s);
      try {
        c.adam.schedule = schedule_from_string(s);
      } catch (const std::exception& e) {
        field_error("optimizer.schedule", e.what());
      }
    }
    if (!(c.adam.learning_rate > 0.0)) field_error("optimizer.learning_rate", "must be > 0");
    if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0)) field_error("optimizer.beta1", "must lie in [0, 1)");
    if (!(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0)) field_error("optimizer.beta2", "must lie in [0, 1)");
    if (!(c.adam.epsilon > 0.0)) field_error("optimizer.epsilon", "must be > 0");
  }
  read(j, "jitter_scale", "jitter_scale", c.jitter_scale);
  if (!(c.jitter_scale >= 0.0)) field_error("jitter_scale", "must be >= 0");
  if (j.contains("resampling")) {
    std::string r;
    read(j, "resampling", "resampling", r);
    if (r == "none") field_error("resampling", "must be systematic or multinomial");
    try {
      c.resampling = resample_scheme_from_string(r);
    } catch (const std::exception& e) {
      field_error("resampling", e.what());
    }
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    c.seeds.clear();
    if (s.is_array()) {
      for (const auto& v : s) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
          field_error("seeds", "entries must be nonnegative integers");
        }
        c.seeds.push_back(v.get<std::uint64_t>());
      }
    } else if (s.is_object()) {
      check_keys(s, "seeds", {"first", "count"});
      const auto first = read_count(s, "first", "seeds.first", 0, 0);
      const auto count = read_count(s, "count", "seeds.count", 1, 1);
      for (Eigen::Index i = 0; i < count; ++i) c.seeds.push_back(static_cast<std::uint64_t>(first + i));
    } else {
      field_error("seeds", "must be a list or {first, count}");
    }
    if (c.seeds.empty()) field_error("seeds", "must not be empty");
  }
  if (j.contains("static")) {
    const auto& s = j.at("static");
    check_keys(s, "static", {"max_horizon"});
    c.static_max_horizon = read_count(s, "max_horizon", "static.max_horizon", c.static_max_horizon, 1);
  }
  if (j.contains("checkpoints")) {
    read(j, "checkpoints", "checkpoints", c.checkpoints);
    for (int t : c.checkpoints) {
      if (t < 0 || t > c.horizon) field_error("checkpoints", "entries must lie in [0, horizon]");
    }
  }
  read(j, "output_dir", "output_dir", c.output_dir);
  if (c.output_dir.empty()) field_error("output_dir", "must not be empty");
  return c;
}

RunSettings ExperimentConfig::run_settings() const {
  RunSettings s;
  s.horizon = horizon;
  s.budgets = budgets;
  s.eval_batch = eval_batch;
  s.adam = adam;
  s.kernel.scale = jitter_scale;
  s.resampling = resampling;
  return s;
}

StaticOptions ExperimentConfig::static_options() const {
  StaticOptions s;
  s.horizon = horizon;
  s.M = budgets.M;
  s.N = budgets.N;
  s.max_horizon = static_max_horizon;
  s.resampling = resampling;
  s.optimize.iterations = budgets.iterations;
  s.optimize.batch = budgets.batch;
  s.optimize.adam = adam;
  return s;
}

std::vector<int> ExperimentConfig::report_checkpoints() const {
  if (!checkpoints.empty()) return checkpoints;
  std::vector<int> out;
  for (int q = 1; q <= 4; ++q) {
    const int t = static_cast<int>(horizon * q / 4);
    if (t > 0 && (out.empty() || out.back() != t)) out.push_back(t);
  }
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, true);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  return ExperimentConfig::from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace obed
