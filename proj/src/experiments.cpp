#include "obed/experiments.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "obed/eig.hpp"

namespace obed {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double RunRecord::teig(Eigen::Index t) const {
  if (t < 0 || t > static_cast<Eigen::Index>(steps.size())) {
    throw std::invalid_argument("checkpoint " + std::to_string(t) + " is outside the horizon " +
                                std::to_string(steps.size()));
  }
  return t == 0 ? 0.0 : steps[static_cast<std::size_t>(t - 1)].teig;
}

nlohmann::json RunRecord::header() const {
  nlohmann::json wall = nlohmann::json::array();
  for (const auto& s : steps) wall.push_back(s.wall_seconds);
  return {{"seed", seed},
          {"policy", policy},
          {"model", model},
          {"model_hash", model_hash},
          {"budget_hash", budget_hash},
          {"trajectory_hash", trajectory_hash},
          {"budgets", {{"M", budgets.M}, {"N", budgets.N}, {"batch", budgets.batch}, {"K", budgets.iterations}}},
          {"evaluation", {{"batch", eval_batch}}},
          {"horizon", horizon},
          {"steps", steps.size()},
          {"columns", record_columns(*this)},
          {"model_config", model_config},
          {"settings", settings},
          {"wall_seconds", wall}};
}

RunFailure::RunFailure(RunRecord partial, const std::string& what)
    : std::runtime_error(what), partial_(std::move(partial)) {}

std::string hash_json(const nlohmann::json& j) {
  const std::string s = j.dump();
  return hex64(fnv_bytes(kFnvOffset, s.data(), s.size()));
}

std::string evaluation_budget_hash(const RunSettings& settings) {
  return hash_json({{"M", settings.budgets.M}, {"N", settings.budgets.N}, {"eval_batch", settings.eval_batch}});
}

RunRecord run_sequential(const ModelSpec& model, const DesignPolicy& policy,
                         const RunSettings& settings, std::uint64_t seed) {
  const Eigen::Index T = settings.horizon;
  if (T < 0) throw std::invalid_argument("horizon must be >= 0");
  if (policy.tag == PolicyTag::Static && static_cast<Eigen::Index>(policy.designs.size()) != T) {
    throw std::invalid_argument("static policy has " + std::to_string(policy.designs.size()) +
                                " designs for a horizon of " + std::to_string(T));
  }
  RunRecord rec;
  rec.seed = seed;
  rec.policy = to_string(policy.tag);
  rec.model = model.name();
  rec.model_config = model.to_json();
  rec.model_hash = hash_json(rec.model_config);
  rec.budget_hash = evaluation_budget_hash(settings);
  rec.budgets = settings.budgets;
  rec.eval_batch = settings.eval_batch;
  rec.horizon = T;
  rec.settings = {{"optimizer",
                   {{"learning_rate", settings.adam.learning_rate},
                    {"beta1", settings.adam.beta1},
                    {"beta2", settings.adam.beta2},
                    {"epsilon", settings.adam.epsilon},
                    {"schedule", to_string(settings.adam.schedule)}}},
                  {"jitter_scale", settings.kernel.scale},
                  {"resampling", to_string(settings.resampling)}};

  const RngStream root(seed);
  const RngStream truth = root.split("truth");
  const RngStream obs = root.split("obs");
  const RngStream design = root.split("design");
  const RngStream eval = root.split("eval");
  const RngStream filter = root.split("npf");

  const Eigen::VectorXd theta = model.true_param();
  Eigen::VectorXd x = model.true_initial_state();
  Eigen::VectorXd x_next(model.state_dim());
  Eigen::VectorXd y(model.obs_dim());
  std::uint64_t traj = fnv_bytes(kFnvOffset, theta.data(), sizeof(double) * theta.size());
  traj = fnv_bytes(traj, x.data(), sizeof(double) * x.size());

  OptimizeOptions opt;
  opt.iterations = settings.budgets.iterations;
  opt.batch = settings.budgets.batch;
  opt.adam = settings.adam;

  NestedEnsemble ens = init_ensemble(model, settings.budgets.M, settings.budgets.N, root.split("init"));
  double teig = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const auto ut = static_cast<std::uint64_t>(t);
    try {
      DesignVector xi;
      switch (policy.tag) {
        case PolicyTag::Badpods:
          xi = optimize_design(ens, model, settings.kernel, opt, design.split(ut)).design;
          break;
        case PolicyTag::Random:
          xi = random_design(model, design.split(ut));
          break;
        case PolicyTag::Static:
          xi = policy.designs[static_cast<std::size_t>(t)];
          break;
      }
      RngStream ts = truth.split(ut);
      model.sample_transition(x, theta, xi.values, ts, x_next);
      x = x_next;
      traj = fnv_bytes(traj, x.data(), sizeof(double) * x.size());
      RngStream os = obs.split(ut);
      model.sample_observation(x, theta, xi.values, os, y);
      const double eig = eig_hat(ens, xi.values, model, settings.kernel, settings.eval_batch, eval.split(ut));
      ens = npf_step(ens, y, xi.values, model, settings.kernel, filter.split(ut), settings.resampling);
      const PosteriorSummary post = posterior_summary(ens);
      teig += eig;
      StepRecord step;
      step.t = static_cast<int>(t + 1);
      step.design = xi.values;
      step.observation = y;
      step.eig = eig;
      step.teig = teig;
      step.theta_mean = post.param_mean;
      step.theta_var = post.param_cov.diagonal();
      step.diagnostics = model.design_diagnostics(xi.values, x);
      step.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      rec.steps.push_back(std::move(step));
    } catch (const std::exception& e) {
      rec.trajectory_hash = hex64(traj);
      throw RunFailure(rec, "seed " + std::to_string(seed) + " failed at t=" + std::to_string(t + 1) +
                                ": " + e.what());
    }
  }
  rec.trajectory_hash = hex64(traj);
  return rec;
}

double delta_teig(const RunRecord& a, const RunRecord& b, Eigen::Index t) {
  if (a.model_hash != b.model_hash) throw std::invalid_argument("records use different model configurations");
  if (a.steps.size() != b.steps.size()) throw std::invalid_argument("records have different horizons");
  return a.teig(t) - b.teig(t);
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

std::pair<double, double> bootstrap_bca_ci(const Eigen::VectorXd& x, double level,
                                           Eigen::Index resamples, RngStream rng) {
  const Eigen::Index n = x.size();
  if (n < 1) throw std::invalid_argument("bootstrap needs at least one sample");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0, 1)");
  if (resamples < 1) throw std::invalid_argument("bootstrap needs at least one resample");
  const double mean = x.mean();
  if (n == 1 || (x.array() == x(0)).all()) return {mean, mean};

  std::vector<double> boot(static_cast<std::size_t>(resamples));
  const auto un = static_cast<std::uint64_t>(n);
  for (auto& b : boot) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += x(static_cast<Eigen::Index>(rng() % un));
    b = s / static_cast<double>(n);
  }
  double below = 0.0;
  for (double b : boot) below += b < mean ? 1.0 : (b == mean ? 0.5 : 0.0);
  const double B = static_cast<double>(resamples);
  const double p0 = std::clamp(below / B, 0.5 / B, 1.0 - 0.5 / B);
  const boost::math::normal_distribution<double> std_normal;
  const double z0 = boost::math::quantile(std_normal, p0);

  // acceleration from the jackknife means
  const double total = x.sum();
  Eigen::VectorXd jack(n);
  for (Eigen::Index i = 0; i < n; ++i) jack(i) = (total - x(i)) / static_cast<double>(n - 1);
  const Eigen::ArrayXd d = jack.mean() - jack.array();
  const double num = d.cube().sum();
  const double den = 6.0 * std::pow(d.square().sum(), 1.5);
  const double a = den > 0.0 ? num / den : 0.0;

  const double alpha = 1.0 - level;
  auto adjusted = [&](double p) {
    const double z = boost::math::quantile(std_normal, p);
    return boost::math::cdf(std_normal, z0 + (z0 + z) / (1.0 - a * (z0 + z)));
  };
  return {quantile(boot, adjusted(alpha / 2.0)), quantile(boot, adjusted(1.0 - alpha / 2.0))};
}

namespace {

IntervalSummary summarize(const std::vector<double>& v, Eigen::Index resamples, RngStream rng) {
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  auto [lo, hi] = bootstrap_bca_ci(x, 0.95, resamples, rng);
  return {x.mean(), lo, hi};
}

int policy_rank(const std::string& p) {
  if (p == "badpods") return 0;
  if (p == "static") return 1;
  if (p == "random") return 2;
  return 3;
}

}  // namespace

AggregateReport aggregate(const std::vector<RunRecord>& records, const std::vector<int>& checkpoints,
                          Eigen::Index resamples, std::uint64_t seed) {
  if (records.empty()) throw std::invalid_argument("no records to aggregate");
  AggregateReport rep;
  rep.model_hash = records.front().model_hash;
  rep.budget_hash = records.front().budget_hash;
  rep.checkpoints = checkpoints;
  std::map<std::string, std::vector<const RunRecord*>> by_policy;
  for (const auto& r : records) {
    if (r.model_hash != rep.model_hash) {
      throw std::invalid_argument("record (policy " + r.policy + ", seed " + std::to_string(r.seed) +
                                  ") has model hash " + r.model_hash + ", expected " + rep.model_hash);
    }
    if (r.budget_hash != rep.budget_hash) {
      throw std::invalid_argument("record (policy " + r.policy + ", seed " + std::to_string(r.seed) +
                                  ") was evaluated with a different budget");
    }
    by_policy[r.policy].push_back(&r);
  }
  std::vector<std::string> policies;
  for (const auto& [p, v] : by_policy) policies.push_back(p);
  std::sort(policies.begin(), policies.end(), [](const std::string& a, const std::string& b) {
    return std::make_pair(policy_rank(a), a) < std::make_pair(policy_rank(b), b);
  });
  for (int t : checkpoints) {
    for (const auto& r : records) {
      if (t < 0 || static_cast<std::size_t>(t) > r.steps.size()) {
        throw std::invalid_argument("checkpoint " + std::to_string(t) + " is beyond the horizon " +
                                    std::to_string(r.steps.size()) + " of policy " + r.policy +
                                    ", seed " + std::to_string(r.seed));
      }
    }
  }
  const RngStream root = RngStream(seed).split("aggregate");
  std::uint64_t stream = 0;
  for (const auto& p : policies) {
    const auto& recs = by_policy[p];
    for (int t : checkpoints) {
      std::vector<double> v;
      for (const auto* r : recs) v.push_back(r->teig(t));
      rep.teig.push_back({p, t, static_cast<Eigen::Index>(v.size()), summarize(v, resamples, root.split(stream++))});

      if (t == 0) continue;
      std::vector<double> pe;
      Eigen::Index dxi = 0;
      for (const auto* r : recs) {
        const auto& s = r->steps[static_cast<std::size_t>(t - 1)];
        dxi = s.design.size();
        for (Eigen::Index j = 0; j < s.diagnostics.size(); ++j) {
          if (!std::isnan(s.diagnostics(j))) pe.push_back(s.diagnostics(j));
        }
      }
      if (!pe.empty()) {
        rep.quartiles.push_back({p, t, "pointing_error", static_cast<Eigen::Index>(pe.size()),
                                 quantile(pe, 0.25), quantile(pe, 0.5), quantile(pe, 0.75)});
      }
      for (Eigen::Index k = 0; k < dxi; ++k) {
        std::vector<double> xs;
        for (const auto* r : recs) xs.push_back(r->steps[static_cast<std::size_t>(t - 1)].design(k));
        rep.quartiles.push_back({p, t, "xi_" + std::to_string(k + 1), static_cast<Eigen::Index>(xs.size()),
                                 quantile(xs, 0.25), quantile(xs, 0.5), quantile(xs, 0.75)});
      }
    }
  }
  for (std::size_t i = 0; i < policies.size(); ++i) {
    for (std::size_t j = i + 1; j < policies.size(); ++j) {
      std::map<std::uint64_t, const RunRecord*> a, b;
      for (const auto* r : by_policy[policies[i]]) a[r->seed] = r;
      for (const auto* r : by_policy[policies[j]]) b[r->seed] = r;
      std::vector<std::uint64_t> matched;
      for (const auto& [s, r] : a) {
        auto it = b.find(s);
        if (it == b.end()) continue;
        if (it->second->trajectory_hash != r->trajectory_hash) {
          throw std::invalid_argument("seed " + std::to_string(s) + " has different ground-truth trajectories under " +
                                      policies[i] + " and " + policies[j]);
        }
        matched.push_back(s);
      }
      if (matched.empty()) continue;
      for (int t : checkpoints) {
        DeltaRow row;
        row.a = policies[i];
        row.b = policies[j];
        row.t = t;
        row.seeds = matched;
        for (auto s : matched) row.deltas.push_back(delta_teig(*a[s], *b[s], t));
        row.delta = summarize(row.deltas, resamples, root.split(stream++));
        rep.delta.push_back(std::move(row));
      }
    }
  }
  return rep;
}

nlohmann::json AggregateReport::to_json() const {
  nlohmann::json j;
  j["model_hash"] = model_hash;
  j["budget_hash"] = budget_hash;
  j["checkpoints"] = checkpoints;
  j["teig"] = nlohmann::json::array();
  for (const auto& r : teig) {
    j["teig"].push_back({{"policy", r.policy}, {"t", r.t}, {"seeds", r.seeds},
                         {"mean", r.teig.mean}, {"lo", r.teig.lo}, {"hi", r.teig.hi}});
  }
  j["delta_teig"] = nlohmann::json::array();
  for (const auto& r : delta) {
    j["delta_teig"].push_back({{"a", r.a}, {"b", r.b}, {"t", r.t}, {"seeds", r.seeds},
                               {"deltas", r.deltas}, {"mean", r.delta.mean},
                               {"lo", r.delta.lo}, {"hi", r.delta.hi}});
  }
  j["quartiles"] = nlohmann::json::array();
  for (const auto& r : quartiles) {
    j["quartiles"].push_back({{"policy", r.policy}, {"t", r.t}, {"metric", r.metric}, {"count", r.count},
                              {"q25", r.q25}, {"median", r.median}, {"q75", r.q75}});
  }
  return j;
}

std::string AggregateReport::to_csv() const {
  std::ostringstream os;
  os << "kind,policy,baseline,t,metric,n,mean,lo,hi,q25,median,q75\n";
  for (const auto& r : teig) {
    os << "teig," << r.policy << ",," << r.t << ",teig," << r.seeds << ',' << format_double(r.teig.mean)
       << ',' << format_double(r.teig.lo) << ',' << format_double(r.teig.hi) << ",,,\n";
  }
  for (const auto& r : delta) {
    os << "delta_teig," << r.a << ',' << r.b << ',' << r.t << ",delta_teig," << r.deltas.size() << ','
       << format_double(r.delta.mean) << ',' << format_double(r.delta.lo) << ','
       << format_double(r.delta.hi) << ",,,\n";
  }
  for (const auto& r : quartiles) {
    os << "quartiles," << r.policy << ",," << r.t << ',' << r.metric << ',' << r.count << ",,,,"
       << format_double(r.q25) << ',' << format_double(r.median) << ',' << format_double(r.q75) << '\n';
  }
  return os.str();
}

std::vector<std::string> record_columns(const RunRecord& record) {
  Eigen::Index dxi = 0, dy = 0, dth = 0, ddiag = 0;
  if (!record.steps.empty()) {
    const auto& s = record.steps.front();
    dxi = s.design.size();
    dy = s.observation.size();
    dth = s.theta_mean.size();
    ddiag = s.diagnostics.size();
  }
  std::vector<std::string> cols{"t"};
  for (Eigen::Index i = 0; i < dxi; ++i) cols.push_back("xi_" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < dy; ++i) cols.push_back("y_" + std::to_string(i + 1));
  cols.emplace_back("eig");
  cols.emplace_back("teig");
  for (Eigen::Index i = 0; i < dth; ++i) cols.push_back("theta_mean_" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < dth; ++i) cols.push_back("theta_var_" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < ddiag; ++i) cols.push_back("pointing_error_" + std::to_string(i + 1));
  return cols;
}

std::string record_to_csv(const RunRecord& record) {
  std::ostringstream os;
  const auto cols = record_columns(record);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& s : record.steps) {
    os << s.t;
    auto put = [&](const Eigen::VectorXd& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << format_double(v(i));
    };
    put(s.design);
    put(s.observation);
    os << ',' << format_double(s.eig) << ',' << format_double(s.teig);
    put(s.theta_mean);
    put(s.theta_var);
    put(s.diagnostics);
    os << '\n';
  }
  return os.str();
}

void write_run_record(const RunRecord& record, const std::filesystem::path& stem) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  {
    std::ofstream csv(stem.string() + ".csv", std::ios::binary);
    csv << record_to_csv(record);
    if (!csv) throw std::runtime_error("cannot write " + stem.string() + ".csv");
  }
  std::ofstream js(stem.string() + ".json", std::ios::binary);
  js << record.header().dump(2) << '\n';
  if (!js) throw std::runtime_error("cannot write " + stem.string() + ".json");
}

RunRecord read_run_record(const std::filesystem::path& csv_path) {
  std::filesystem::path side = csv_path;
  side.replace_extension(".json");
  std::ifstream hs(side);
  if (!hs) throw std::invalid_argument("missing sidecar " + side.string());
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(hs);
  } catch (const std::exception& e) {
    throw std::invalid_argument(side.string() + ": " + e.what());
  }
  RunRecord r;
  r.seed = h.at("seed").get<std::uint64_t>();
  r.policy = h.at("policy").get<std::string>();
  r.model = h.at("model").get<std::string>();
  r.model_hash = h.at("model_hash").get<std::string>();
  r.budget_hash = h.at("budget_hash").get<std::string>();
  r.trajectory_hash = h.at("trajectory_hash").get<std::string>();
  r.budgets.M = h.at("budgets").at("M").get<Eigen::Index>();
  r.budgets.N = h.at("budgets").at("N").get<Eigen::Index>();
  r.budgets.batch = h.at("budgets").at("batch").get<Eigen::Index>();
  r.budgets.iterations = h.at("budgets").at("K").get<Eigen::Index>();
  r.eval_batch = h.at("evaluation").at("batch").get<Eigen::Index>();
  r.horizon = h.at("horizon").get<Eigen::Index>();
  r.model_config = h.value("model_config", nlohmann::json::object());
  r.settings = h.value("settings", nlohmann::json::object());
  const std::vector<double> wall = h.value("wall_seconds", std::vector<double>{});

  std::ifstream in(csv_path);
  if (!in) throw std::invalid_argument("cannot open " + csv_path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  auto count_prefix = [&](const std::string& p) {
    return static_cast<Eigen::Index>(std::count_if(cols.begin(), cols.end(), [&](const std::string& c) {
      return c.rfind(p, 0) == 0;
    }));
  };
  const Eigen::Index dxi = count_prefix("xi_"), dy = count_prefix("y_"),
                     dth = count_prefix("theta_mean_"), dd = count_prefix("pointing_error_");
  const std::size_t expected = static_cast<std::size_t>(3 + dxi + dy + 2 * dth + dd);
  if (cols.empty() || cols.front() != "t" || cols.size() != expected) {
    throw std::invalid_argument(csv_path.string() + ": unexpected column layout");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) v.push_back(std::strtod(c.c_str(), nullptr));
    if (v.size() != expected) throw std::invalid_argument(csv_path.string() + ": ragged row");
    StepRecord s;
    std::size_t k = 0;
    s.t = static_cast<int>(v[k++]);
    auto take = [&](Eigen::Index n) {
      Eigen::VectorXd out(n);
      for (Eigen::Index i = 0; i < n; ++i) out(i) = v[k++];
      return out;
    };
    s.design = take(dxi);
    s.observation = take(dy);
    s.eig = v[k++];
    s.teig = v[k++];
    s.theta_mean = take(dth);
    s.theta_var = take(dth);
    s.diagnostics = take(dd);
    if (r.steps.size() < wall.size()) s.wall_seconds = wall[r.steps.size()];
    r.steps.push_back(std::move(s));
  }
  return r;
}

}  // namespace obed
