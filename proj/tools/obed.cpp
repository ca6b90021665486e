// Command-line driver: run, static, report, validate-model, selftest.

#include <CLI11.hpp>
#include <glob.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "obed/config.hpp"
#include "obed/experiments.hpp"
#include "obed/json_eigen.hpp"
#include "obed/optim.hpp"
#include "obed/selftest.hpp"

namespace fs = std::filesystem;
using namespace obed;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string config;
  std::string seeds;
  std::string out;
  std::string policy;
  int jobs = 1;
};

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig c = load_config(o.config);
  if (!o.seeds.empty()) c.seeds = parse_seed_list(o.seeds);
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.policy.empty()) c.policy = policy_from_string(o.policy);
  return c;
}

fs::path static_path(const ExperimentConfig& c, std::uint64_t seed) {
  return fs::path(c.output_dir) / "static" / ("designs-seed-" + std::to_string(seed) + ".json");
}

nlohmann::json static_to_json(const StaticResult& r, const ExperimentConfig& c, std::uint64_t seed) {
  nlohmann::json d = nlohmann::json::array(), l = nlohmann::json::array();
  for (const auto& x : r.designs) {
    d.push_back(x.values);
    l.push_back(x.latent);
  }
  return {{"seed", seed},
          {"model_hash", hash_json(c.model)},
          {"horizon", c.horizon},
          {"reparam", r.designs.empty() ? "unconstrained" : to_string(r.designs.front().reparam)},
          {"designs", d},
          {"latents", l},
          {"trace", r.trace}};
}

std::vector<DesignVector> static_from_json(const nlohmann::json& j, const ExperimentConfig& c,
                                           const fs::path& where) {
  if (j.at("model_hash").get<std::string>() != hash_json(c.model)) {
    throw std::invalid_argument(where.string() + " was computed for a different model configuration");
  }
  if (j.at("horizon").get<Eigen::Index>() != c.horizon) {
    throw std::invalid_argument(where.string() + " has a different horizon");
  }
  const Reparam r = reparam_from_string(j.at("reparam").get<std::string>());
  std::vector<DesignVector> out;
  for (const auto& l : j.at("latents")) {
    const Eigen::VectorXd z = l.get<Eigen::VectorXd>();
    const Eigen::VectorXd v = j.at("designs").at(out.size()).get<Eigen::VectorXd>();
    out.push_back(transform_design(z, r, v.size()));
  }
  return out;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("cannot write " + p.string());
}

StaticResult compute_static(const ModelSpec& model, const ExperimentConfig& c, std::uint64_t seed) {
  return static_optimize(model, JitterKernel{c.jitter_scale}, c.static_options(), RngStream(seed).split("static"));
}

std::vector<DesignVector> static_designs(const ModelSpec& model, const ExperimentConfig& c, std::uint64_t seed) {
  const fs::path p = static_path(c, seed);
  if (fs::exists(p)) {
    std::ifstream in(p);
    return static_from_json(nlohmann::json::parse(in), c, p);
  }
  const StaticResult r = compute_static(model, c, seed);
  write_json(p, static_to_json(r, c, seed));
  return r.designs;
}

// Runs fn(seed) over the seeds with at most `jobs` threads, collecting failures.
template <typename Fn>
std::map<std::uint64_t, std::string> for_each_seed(const std::vector<std::uint64_t>& seeds, int jobs, Fn fn) {
  std::map<std::uint64_t, std::string> failures;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        fn(seeds[i]);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        failures[seeds[i]] = e.what();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return failures;
}

int write_failures(const fs::path& dir, const std::string& policy,
                   const std::map<std::uint64_t, std::string>& failures) {
  if (failures.empty()) return 0;
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [seed, what] : failures) {
    j.push_back({{"seed", seed}, {"policy", policy}, {"error", what}});
    std::cerr << "seed " << seed << ": " << what << '\n';
  }
  write_json(dir / "failures.json", j);
  return kExitFailure;
}

int cmd_run(const CommonOptions& o) {
  const ExperimentConfig c = resolve(o);
  const auto model = make_model(c.model);
  const RunSettings settings = c.run_settings();
  const std::string policy = to_string(c.policy);
  const fs::path dir = fs::path(c.output_dir) / policy;
  fs::create_directories(dir);
  const auto failures = for_each_seed(c.seeds, o.jobs, [&](std::uint64_t seed) {
    DesignPolicy p;
    p.tag = c.policy;
    if (p.tag == PolicyTag::Static) p.designs = static_designs(*model, c, seed);
    const fs::path stem = dir / ("seed-" + std::to_string(seed));
    try {
      write_run_record(run_sequential(*model, p, settings, seed), stem);
    } catch (const RunFailure& f) {
      write_run_record(f.partial(), dir / ("partial-seed-" + std::to_string(seed)));
      throw;
    }
    std::cout << policy << " seed " << seed << " done\n";
  });
  return write_failures(dir, policy, failures);
}

int cmd_static(const CommonOptions& o) {
  const ExperimentConfig c = resolve(o);
  const auto model = make_model(c.model);
  const auto failures = for_each_seed(c.seeds, o.jobs, [&](std::uint64_t seed) {
    const StaticResult r = compute_static(*model, c, seed);
    write_json(static_path(c, seed), static_to_json(r, c, seed));
    std::cout << "static seed " << seed << " written to " << static_path(c, seed).string() << '\n';
  });
  return write_failures(fs::path(c.output_dir) / "static", "static", failures);
}

std::vector<std::string> expand(const std::vector<std::string>& patterns) {
  std::vector<std::string> files;
  for (const auto& p : patterns) {
    glob_t g{};
    if (::glob(p.c_str(), 0, nullptr, &g) == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) files.emplace_back(g.gl_pathv[i]);
    }
    globfree(&g);
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  return files;
}

int cmd_report(const std::vector<std::string>& patterns, const CommonOptions& o, const std::string& checkpoints) {
  const auto files = expand(patterns);
  if (files.empty()) throw std::invalid_argument("no records match the given patterns");
  std::vector<RunRecord> records;
  for (const auto& f : files) records.push_back(read_run_record(f));

  std::map<std::pair<std::string, std::string>, std::vector<std::string>> groups;
  for (std::size_t i = 0; i < files.size(); ++i) {
    groups[{records[i].model_hash, records[i].budget_hash}].push_back(files[i]);
  }
  if (groups.size() > 1) {
    auto largest = std::max_element(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
      return a.second.size() < b.second.size();
    });
    std::string msg = "incompatible records (model or evaluation budget differs from the majority):";
    for (const auto& [key, fs_] : groups) {
      if (key == largest->first) continue;
      for (const auto& f : fs_) msg += "\n  " + f;
    }
    throw std::invalid_argument(msg);
  }

  std::vector<int> cps;
  if (!checkpoints.empty()) {
    for (auto s : parse_seed_list(checkpoints)) cps.push_back(static_cast<int>(s));
  } else if (!o.config.empty()) {
    cps = load_config(o.config).report_checkpoints();
  } else {
    std::size_t h = records.front().steps.size();
    for (const auto& r : records) h = std::min(h, r.steps.size());
    for (int q = 1; q <= 4; ++q) {
      const int t = static_cast<int>(h * q / 4);
      if (t > 0 && (cps.empty() || cps.back() != t)) cps.push_back(t);
    }
  }
  const AggregateReport rep = aggregate(records, cps);
  const fs::path dir = o.out.empty() ? fs::path("report") : fs::path(o.out);
  write_json(dir / "report.json", rep.to_json());
  std::ofstream csv(dir / "report.csv", std::ios::binary);
  csv << rep.to_csv();
  if (!csv) throw std::runtime_error("cannot write report.csv");
  std::cout << "aggregated " << records.size() << " records into " << dir.string() << '\n';
  return 0;
}

int cmd_validate(const CommonOptions& o, int probes) {
  const ExperimentConfig c = load_config(o.config);
  const auto model = make_model(c.model);
  const ValidationReport r = validate_model(*model, probes, RngStream(c.seeds.front()).split("validate"));
  for (const auto& v : r.violations) std::cout << "probe " << v.probe << " [" << v.kind << "] " << v.message << '\n';
  std::cout << model->name() << ": " << r.violations.size() << " violations over " << r.probes << " probes\n";
  return r.ok() ? 0 : kExitFailure;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& c : run_selftest()) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
    ok = ok && c.passed;
  }
  return ok ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian adaptive design for partially observable state-space models"};
  app.require_subcommand(1);
  CommonOptions o;
  auto add_common = [&](CLI::App* c, bool config_required) {
    auto* opt = c->add_option("--config", o.config, "experiment configuration file");
    if (config_required) opt->required();
    c->add_option("--seeds", o.seeds, "seed list, e.g. 0-9 or 1,3,5");
    c->add_option("--jobs", o.jobs, "seeds run concurrently")->check(CLI::PositiveNumber);
    c->add_option("--out", o.out, "output directory");
    c->add_option("--policy", o.policy, "badpods, random or static");
  };
  auto* run = app.add_subcommand("run", "run the sequential experiment for each seed");
  add_common(run, true);
  auto* stat = app.add_subcommand("static", "optimize the static design sequence for each seed");
  add_common(stat, true);
  auto* report = app.add_subcommand("report", "aggregate run records");
  std::vector<std::string> patterns;
  std::string checkpoints;
  report->add_option("records", patterns, "record CSV files or glob patterns")->required();
  report->add_option("--checkpoints", checkpoints, "timesteps to report, e.g. 10,20,50");
  add_common(report, false);
  auto* validate = app.add_subcommand("validate-model", "probe a model for contract violations");
  int probes = 100;
  validate->add_option("--probes", probes, "number of random probes")->check(CLI::PositiveNumber);
  add_common(validate, true);
  auto* self = app.add_subcommand("selftest", "run the oracle and invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*run) return cmd_run(o);
    if (*stat) return cmd_static(o);
    if (*report) return cmd_report(patterns, o, checkpoints);
    if (*validate) return cmd_validate(o, probes);
    if (*self) return cmd_selftest();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
