#include "imitlab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include "imitlab/bc.hpp"
#include "imitlab/dataset.hpp"
#include "imitlab/dv.hpp"
#include "imitlab/envs.hpp"
#include "imitlab/error.hpp"
#include "imitlab/matching.hpp"
#include "imitlab/rng.hpp"
#include "imitlab/stats.hpp"
#include "imitlab/summary.hpp"
#include "imitlab/valuedice.hpp"

namespace imitlab {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Defaults

constexpr const char* kDefaults = R"json({
  "thm2-reduction": {
    "instances": 20,
    "instance_seed": 7,
    "max_states": 6,
    "max_actions": 3,
    "max_horizon": 5,
    "gda": {"steps": 3000, "nu_lr": 0.1, "policy_lr": 0.1, "nu_weight_decay": 0.0,
            "init_scale": 0.1, "eval_every": 500}
  },
  "l1-uniqueness": {
    "instances": 4,
    "env": {"family": "random", "num_states": 3, "num_actions": 2, "horizon": 3,
            "grid_width": 0, "slip": 0.0, "num_initial_states": 3, "seed": 0},
    "samples": 500
  },
  "bc-scaling-det": {
    "env": {"family": "det_grid", "num_states": 36, "num_actions": 5, "horizon": 12,
            "grid_width": 6, "slip": 0.0, "num_initial_states": 18, "seed": 0},
    "m": [1, 2, 4, 8, 16, 32, 64],
    "counting_mode": "per_step",
    "slope_range": [-1.25, -0.75]
  },
  "bc-det-vs-stoch": {
    "env": {"family": "reset_cliff", "num_states": 11, "num_actions": 3, "horizon": 10,
            "grid_width": 0, "slip": 0.0, "num_initial_states": 1, "seed": 0},
    "slips": [0.0, 0.2],
    "m": [1, 4, 16],
    "counting_mode": "per_step"
  },
  "subsample-compare": {
    "env": {"family": "det_chain", "num_states": 10, "num_actions": 2, "horizon": 10,
            "grid_width": 0, "slip": 0.0, "num_initial_states": 1, "seed": 0},
    "m": 10,
    "subsample_rate": 10,
    "keep_successor": true,
    "counting_mode": "per_step",
    "gamma": 0.9,
    "gda": {"steps": 5000, "nu_lr": 0.1, "policy_lr": 0.1, "nu_weight_decay": 0.001,
            "init_scale": 0.1, "eval_every": 500},
    "threshold_fraction": 0.05
  },
  "overfit-reg": {
    "env": {"family": "det_chain", "num_states": 12, "num_actions": 2, "horizon": 12,
            "grid_width": 0, "slip": 0.0, "num_initial_states": 6, "seed": 0},
    "m": 1,
    "d_noise": 36,
    "weight_decays": [0.0, 0.0001],
    "bc": {"learning_rate": 0.1, "steps": 20000, "eval_every": 1000},
    "win_fraction": 0.8
  },
  "dv-check": {
    "pairs": 100,
    "support": 6,
    "descent_iterations": 10000,
    "descent_learning_rate": 1.0,
    "tolerance": 1e-6
  },
  "online-complete-vs-sub": {
    "env": {"family": "det_chain", "num_states": 10, "num_actions": 2, "horizon": 10,
            "grid_width": 0, "slip": 0.0, "num_initial_states": 1, "seed": 0},
    "m": 10,
    "subsample_rate": 10,
    "keep_successor": false,
    "gamma": 0.9,
    "mix": {"alpha": 0.5, "batch_size": 64, "replay_capacity": 100000,
            "env_steps_per_update": 1, "env_step_budget": 20000,
            "initial_term": "expert_states"},
    "gda": {"steps": 20000, "nu_lr": 0.1, "policy_lr": 0.1, "nu_weight_decay": 0.001,
            "init_scale": 0.1, "eval_every": 500},
    "threshold_fraction": 0.05
  }
})json";

const Json& defaults_doc() {
  static const Json doc = Json::parse(kDefaults);
  return doc;
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, int n) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n; ++i) out.push_back(first + static_cast<std::uint64_t>(i));
  return out;
}

void check_known_keys(const Json& given, const Json& known, const std::string& prefix) {
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!known.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (value.is_object() && known[key].is_object()) check_known_keys(value, known[key], path);
  }
}

// ---------------------------------------------------------------------------
// Config readers

template <typename T>
T get(const Json& cfg, const char* key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

EnvSpec env_from_json(const Json& j) {
  EnvSpec spec;
  spec.family = parse_env_family(get<std::string>(j, "family"));
  spec.num_states = get<int>(j, "num_states");
  spec.num_actions = get<int>(j, "num_actions");
  spec.horizon = get<int>(j, "horizon");
  spec.grid_width = get<int>(j, "grid_width");
  spec.slip = get<double>(j, "slip");
  spec.num_initial_states = get<int>(j, "num_initial_states");
  spec.seed = get<std::uint64_t>(j, "seed");
  return spec;
}

CountingMode counting_mode(const Json& cfg) {
  const auto name = get<std::string>(cfg, "counting_mode");
  if (name == "per_step") return CountingMode::per_step;
  if (name == "aggregated") return CountingMode::aggregated;
  throw ConfigError("counting_mode must be per_step or aggregated");
}

struct GdaSettings {
  GdaConfig cfg;
  double nu_lr, policy_lr, nu_weight_decay, init_scale;
};

GdaSettings gda_from_json(const Json& j) {
  GdaSettings g;
  g.cfg.steps = get<int>(j, "steps");
  g.cfg.eval_every = get<int>(j, "eval_every");
  g.nu_lr = get<double>(j, "nu_lr");
  g.policy_lr = get<double>(j, "policy_lr");
  g.nu_weight_decay = get<double>(j, "nu_weight_decay");
  g.init_scale = get<double>(j, "init_scale");
  return g;
}

SaddleState make_state(Dims dims, const GdaSettings& g, std::uint64_t seed) {
  SaddleState st = init_saddle_state(dims, TimeMode::per_step, g.init_scale, seed);
  st.nu_lr = g.nu_lr;
  st.policy_lr = g.policy_lr;
  st.nu_weight_decay = g.nu_weight_decay;
  return st;
}

MixConfig mix_from_json(const Json& j) {
  MixConfig m;
  m.alpha = get<double>(j, "alpha");
  m.batch_size = get<int>(j, "batch_size");
  m.replay_capacity = get<std::size_t>(j, "replay_capacity");
  m.env_steps_per_update = get<int>(j, "env_steps_per_update");
  m.env_step_budget = get<long>(j, "env_step_budget");
  const auto initial = get<std::string>(j, "initial_term");
  if (initial == "expert_states")
    m.initial_term = InitialTerm::expert_states;
  else if (initial == "exact_p0")
    m.initial_term = InitialTerm::exact_p0;
  else
    throw ConfigError("mix.initial_term must be expert_states or exact_p0");
  return m;
}

// ---------------------------------------------------------------------------
// Traces

std::string gda_trace_csv(const std::vector<GdaTraceRow>& trace) {
  std::ostringstream os;
  os << "env_steps,grad_steps,loss,value_gap,tv_to_bc,diverged\n";
  for (const auto& r : trace)
    os << r.env_steps << ',' << r.grad_steps << ',' << format_double(r.loss) << ','
       << format_double(r.value_gap) << ',' << format_double(r.tv_to_bc) << ','
       << (r.diverged ? 1 : 0) << '\n';
  return os.str();
}

std::string bc_trace_csv(const std::vector<BcTraceRow>& trace) {
  std::ostringstream os;
  os << "step,nll,reg,value_gap\n";
  for (const auto& r : trace)
    os << r.step << ',' << format_double(r.nll) << ',' << format_double(r.reg) << ','
       << format_double(r.value_gap) << '\n';
  return os.str();
}

std::string pad2(int i) { return (i < 10 ? "0" : "") + std::to_string(i); }

// ---------------------------------------------------------------------------
// Plans

struct TraceFile {
  std::string name;
  std::string content;
};

struct TaskOutput {
  std::vector<ResultRow> rows;
  std::vector<TraceFile> traces;
  std::vector<ErrorRow> errors;
};

struct Task {
  std::uint64_t seed;
  std::function<TaskOutput()> run;
};

using Verdicter = std::function<void(ExperimentReport&)>;

struct Plan {
  std::vector<Task> tasks;
  Verdicter verdict;
};

std::vector<std::uint64_t> seeds_of(const Json& cfg) {
  const auto seeds = get<std::vector<std::uint64_t>>(cfg, "seeds");
  if (seeds.empty()) throw ConfigError("seeds must be nonempty");
  return seeds;
}

/// Per-condition values in first-appearance order.
std::vector<std::pair<std::string, std::vector<double>>> group(const std::vector<ResultRow>& rows) {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == r.condition; });
    if (it == out.end()) {
      out.push_back({r.condition, {}});
      it = std::prev(out.end());
    }
    it->second.push_back(r.value);
  }
  return out;
}

std::optional<double> mean_of(const ExperimentReport& rep, const std::string& condition) {
  for (const auto& [name, xs] : group(rep.rows))
    if (name == condition) return mean(xs);
  return std::nullopt;
}

/// Runs body, turning an exception into an error row for (condition, seed).
template <typename F>
void guarded(TaskOutput& out, const std::string& condition, std::uint64_t seed, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    out.errors.push_back({condition, seed, e.what()});
  }
}

Plan plan_thm2(const Json& cfg) {
  const int instances = get<int>(cfg, "instances");
  const auto instance_seed = get<std::uint64_t>(cfg, "instance_seed");
  const int max_s = get<int>(cfg, "max_states"), max_a = get<int>(cfg, "max_actions"),
            max_h = get<int>(cfg, "max_horizon");
  if (instances < 1 || max_s < 2 || max_a < 2 || max_h < 1) throw ConfigError("thm2: bad sizes");
  const GdaSettings g = gda_from_json(cfg.at("gda"));
  Plan plan;
  for (auto seed : seeds_of(cfg)) {
    plan.tasks.push_back({seed, [=] {
      TaskOutput out;
      for (int i = 0; i < instances; ++i) {
        const std::string cond = "instance_" + pad2(i);
        guarded(out, cond, seed, [&] {
          Rng r(derive_seed(instance_seed, static_cast<std::uint64_t>(i)));
          EnvSpec spec;
          spec.family = EnvFamily::random;
          spec.num_states = 2 + r.uniform_int(max_s - 1);
          spec.num_actions = 2 + r.uniform_int(max_a - 1);
          spec.horizon = 1 + r.uniform_int(max_h);
          spec.num_initial_states = 1 + r.uniform_int(spec.num_states);
          spec.seed = derive_seed(instance_seed, 1000 + static_cast<std::uint64_t>(i));
          const TabularMDP mdp = build_env(spec);
          const Policy expert = optimal_expert(mdp);
          const Dataset ds = collect_expert(mdp, expert, 1, derive_seed(seed, static_cast<std::uint64_t>(i)));
          GdaInputs inputs{&ds, &mdp, &expert, {}, nullptr};
          GdaConfig gc = g.cfg;
          gc.seed = seed;
          const GdaOutcome res = gda_optimize(
              LossKind::gamma0, inputs,
              make_state(mdp.dims(), g, derive_seed(seed, 500 + static_cast<std::uint64_t>(i))), gc);
          const Policy bc = bc_counting(ds, mdp.dims(), CountingMode::per_step);
          out.rows.push_back({cond, seed, argmax_match_rate(res.state.policy(), bc, ds)});
          out.traces.push_back({cond + "_seed" + std::to_string(seed) + ".csv", gda_trace_csv(res.trace)});
        });
      }
      return out;
    }});
  }
  plan.verdict = [](ExperimentReport& rep) {
    double worst = 1.0;
    for (const auto& r : rep.rows) worst = std::min(worst, r.value);
    rep.details["runs"] = rep.rows.size();
    rep.details["min_argmax_match_rate"] = worst;
    rep.pass = rep.errors.empty() && !rep.rows.empty() && worst == 1.0;
  };
  return plan;
}

Plan plan_l1(const Json& cfg) {
  const int instances = get<int>(cfg, "instances");
  const int samples = get<int>(cfg, "samples");
  const EnvSpec base = env_from_json(cfg.at("env"));
  if (instances < 1) throw ConfigError("l1-uniqueness: instances must be >= 1");
  Plan plan;
  for (auto seed : seeds_of(cfg)) {
    plan.tasks.push_back({seed, [=] {
      TaskOutput out;
      double min_gap = INFINITY, min_stoch = INFINITY;
      int failures = 0;
      for (int i = 0; i < instances; ++i) {
        guarded(out, "instance_" + pad2(i), seed, [&] {
          EnvSpec spec = base;
          spec.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
          const TabularMDP mdp = build_env(spec);
          const Policy expert = optimal_expert(mdp);
          const Dataset ds = collect_expert(mdp, expert, 1, derive_seed(seed, 100 + static_cast<std::uint64_t>(i)));
          const Certificate cert = certify_unique_optimum(mdp, ds, samples, derive_seed(seed, 200 + static_cast<std::uint64_t>(i)));
          min_gap = std::min(min_gap, cert.min_gap);
          min_stoch = std::min(min_stoch, cert.min_stochastic_gap);
          failures += cert.passed() ? 0 : 1;
          out.traces.push_back({"certificate_seed" + std::to_string(seed) + "_" + pad2(i) + ".txt",
                                cert.report()});
        });
      }
      out.rows.push_back({"min_gap", seed, min_gap});
      out.rows.push_back({"min_stochastic_gap", seed, min_stoch});
      out.rows.push_back({"failures", seed, static_cast<double>(failures)});
      return out;
    }});
  }
  plan.verdict = [instances](ExperimentReport& rep) {
    double failures = 0.0, gap = INFINITY;
    for (const auto& r : rep.rows) {
      if (r.condition == "failures") failures += r.value;
      if (r.condition == "min_gap") gap = std::min(gap, r.value);
    }
    rep.details["instances"] = instances * static_cast<int>(rep.rows.size() / 3);
    rep.details["failures"] = failures;
    rep.details["min_gap"] = gap;
    rep.pass = rep.errors.empty() && !rep.rows.empty() && failures == 0.0 && gap > 0.0;
  };
  return plan;
}

Plan plan_scaling(const Json& cfg) {
  const EnvSpec spec = env_from_json(cfg.at("env"));
  const auto ms = get<std::vector<int>>(cfg, "m");
  const auto range = get<std::vector<double>>(cfg, "slope_range");
  const CountingMode mode = counting_mode(cfg);
  if (ms.size() < 2 || range.size() != 2) throw ConfigError("bc-scaling-det: need >= 2 m values");
  Plan plan;
  for (auto seed : seeds_of(cfg)) {
    plan.tasks.push_back({seed, [=] {
      TaskOutput out;
      const TabularMDP mdp = build_env(spec);
      const Policy expert = optimal_expert(mdp);
      for (int m : ms) {
        const std::string cond = "m=" + std::to_string(m);
        guarded(out, cond, seed, [&] {
          const Dataset ds = collect_expert(mdp, expert, m, derive_seed(seed, static_cast<std::uint64_t>(m)));
          out.rows.push_back({cond, seed, value_gap(mdp, expert, bc_counting(ds, mdp.dims(), mode))});
        });
      }
      return out;
    }});
  }
  plan.verdict = [ms, range](ExperimentReport& rep) {
    std::vector<double> xs, ys;
    bool positive = true;
    for (int m : ms) {
      const auto mu = mean_of(rep, "m=" + std::to_string(m));
      if (!mu) continue;
      xs.push_back(m);
      ys.push_back(*mu);
      positive = positive && *mu > 0.0;
    }
    rep.details["mean_gaps"] = ys;
    if (xs.size() < 2 || !positive) {
      rep.details["slope"] = nullptr;
      rep.pass = false;
      return;
    }
    const double slope = log_log_slope(xs, ys);
    rep.details["slope"] = slope;
    rep.details["slope_range"] = range;
    rep.pass = rep.errors.empty() && slope >= range[0] && slope <= range[1];
  };
  return plan;
}

std::string slip_condition(double slip, int m) {
  return "slip" + format_double(slip) + "_m" + std::to_string(m);
}

Plan plan_det_vs_stoch(const Json& cfg) {
  const EnvSpec base = env_from_json(cfg.at("env"));
  const auto slips = get<std::vector<double>>(cfg, "slips");
  const auto ms = get<std::vector<int>>(cfg, "m");
  const CountingMode mode = counting_mode(cfg);
  if (slips.size() < 2) throw ConfigError("bc-det-vs-stoch: need two slip values");
  Plan plan;
  for (auto seed : seeds_of(cfg)) {
    plan.tasks.push_back({seed, [=] {
      TaskOutput out;
      for (double slip : slips) {
        EnvSpec spec = base;
        spec.slip = slip;
        spec.seed = derive_seed(seed, 77);
        for (int m : ms) {
          const std::string cond = slip_condition(slip, m);
          guarded(out, cond, seed, [&] {
            const TabularMDP mdp = build_env(spec);
            const Policy expert = optimal_expert(mdp);
            const Dataset ds = collect_expert(mdp, expert, m, derive_seed(seed, static_cast<std::uint64_t>(m)));
            out.rows.push_back({cond, seed, value_gap(mdp, expert, bc_counting(ds, mdp.dims(), mode))});
          });
        }
      }
      return out;
    }});
  }
  plan.verdict = [slips, ms](ExperimentReport& rep) {
    bool ok = rep.errors.empty();
    for (int m : ms) {
      const auto det = mean_of(rep, slip_condition(slips.front(), m));
      const auto sto = mean_of(rep, slip_condition(slips.back(), m));
      const bool separated = det && sto && *sto > *det;
      rep.details["m=" + std::to_string(m)] = {{"deterministic", det.value_or(NAN)},
                                               {"stochastic", sto.value_or(NAN)},
                                               {"separated", separated}};
      ok = ok && separated;
    }
    rep.pass = ok;
  };
  return plan;
}

struct ChainSetup {
  TabularMDP mdp;
  Policy expert;
  Dataset complete;
  Dataset subsampled;
};

ChainSetup chain_setup(const Json& cfg, std::uint64_t seed) {
  EnvSpec spec = env_from_json(cfg.at("env"));
  spec.seed = derive_seed(seed, 11);
  TabularMDP mdp = build_env(spec);
  Policy expert = optimal_expert(mdp);
  Dataset complete = collect_expert(mdp, expert, get<int>(cfg, "m"), derive_seed(seed, 1));
  Dataset sub = subsample(complete, get<int>(cfg, "subsample_rate"), derive_seed(seed, 2),
                          get<bool>(cfg, "keep_successor"));
  return {std::move(mdp), std::move(expert), std::move(complete), std::move(sub)};
}

/// Shared verdict for the complete-vs-subsampled experiments.
void dichotomy_verdict(ExperimentReport& rep, const std::vector<std::string>& complete,
                       const std::vector<std::string>& subsampled, double fraction,
                       bool require_subsampled) {
  const auto v = mean_of(rep, "expert_value");
  bool ok = rep.errors.empty() && v.has_value();
  const double threshold = fraction * v.value_or(NAN);
  rep.details["threshold"] = threshold;
  for (const auto& c : complete) {
    const auto g = mean_of(rep, c);
    rep.details[c] = g.value_or(NAN);
    ok = ok && g && *g <= threshold;
  }
  for (const auto& c : subsampled) {
    const auto g = mean_of(rep, c);
    rep.details[c] = g.value_or(NAN);
    if (require_subsampled) ok = ok && g && *g >= 2.0 * threshold;
  }
  rep.pass = ok;
}

Plan plan_subsample(const Json& cfg) {
  const CountingMode mode = counting_mode(cfg);
  const GdaSettings g = gda_from_json(cfg.at("gda"));
  const double gamma = get<double>(cfg, "gamma");
  const double fraction = get<double>(cfg, "threshold_fraction");
  chain_setup(cfg, 0);  // validates the config before any task starts
  Plan plan;
  for (auto seed : seeds_of(cfg)) {
    plan.tasks.push_back({seed, [=] {
      TaskOutput out;
      const ChainSetup setup = chain_setup(cfg, seed);
      const Dims dims = setup.mdp.dims();
      out.rows.push_back({"expert_value", seed, policy_value(setup.mdp, setup.expert)});
      for (const auto& [name, ds] : {std::pair{"complete", &setup.complete},
                                     std::pair{"subsampled", &setup.subsampled}}) {
        const std::string bc_cond = std::string("bc_") + name;
        guarded(out, bc_cond, seed, [&] {
          out.rows.push_back({bc_cond, seed, value_gap(setup.mdp, setup.expert, bc_counting(*ds, dims, mode))});
        });
      }
      int diverged = 0;
      for (const auto& [name, ds] : {std::pair{"complete", &setup.complete},
                                     std::pair{"subsampled", &setup.subsampled}}) {
        const std::string vd_cond = std::string("valuedice_") + name;
        guarded(out, vd_cond, seed, [&] {
          GdaConfig gc = g.cfg;
          gc.gamma = gamma;
          gc.seed = seed;
          GdaInputs inputs{ds, &setup.mdp, &setup.expert, {}, nullptr};
          const GdaOutcome res = gda_optimize(LossKind::offline, inputs, make_state(dims, g, derive_seed(seed, 3)), gc);
          diverged += res.diverged ? 1 : 0;
          out.rows.push_back({vd_cond, seed, value_gap(setup.mdp, setup.expert, res.state.policy())});
          out.traces.push_back({vd_cond + "_seed" + std::to_string(seed) + ".csv", gda_trace_csv(res.trace)});
        });
      }
      out.rows.push_back({"diverged_runs", seed, static_cast<double>(diverged)});
      return out;
    }});
  }
  plan.verdict = [fraction](ExperimentReport& rep) {
    dichotomy_verdict(rep, {"bc_complete", "valuedice_complete"},
                      {"bc_subsampled", "valuedice_subsampled"}, fraction, true);
  };
  return plan;
}

Plan plan_overfit(const Json& cfg) {
  const EnvSpec base = env_from_json(cfg.at("env"));
  const int m = get<int>(cfg, "m");
  const int d_noise = get<int>(cfg, "d_noise");
  const auto decays = get<std::vector<double>>(cfg, "weight_decays");
  const double win_fraction = get<double>(cfg, "win_fraction");
  TrainConfig tc;
  tc.learning_rate = get<double>(cfg.at("bc"), "learning_rate");
  tc.steps = get<int>(cfg.at("bc"), "steps");
  tc.eval_every = get<int>(cfg.at("bc"), "eval_every");
  if (decays.size() != 2) throw ConfigError("overfit-reg: weight_decays needs two values");
  const auto cond = [](double lambda) { return "lambda=" + format_double(lambda); };
  Plan plan;
  for (auto seed : seeds_of(cfg)) {
    plan.tasks.push_back({seed, [=] {
      TaskOutput out;
      EnvSpec spec = base;
      spec.seed = derive_seed(seed, 21);
      const TabularMDP mdp = build_env(spec);
      const Policy expert = optimal_expert(mdp);
      const Dataset ds = collect_expert(mdp, expert, m, derive_seed(seed, 23));
      const FeatureTable features = one_hot_noise_features(spec.num_states, d_noise, derive_seed(seed, 22));
      for (double lambda : decays) {
        guarded(out, cond(lambda), seed, [&] {
          TrainConfig c = tc;
          c.weight_decay = lambda;
          c.seed = seed;
          const LinearSoftmaxPolicy p0(features, spec.num_actions, spec.horizon, TimeMode::stationary);
          const BcTrainResult res = bc_mle_train(ds, p0, c, {&mdp, &expert});
          out.rows.push_back({cond(lambda), seed, value_gap(mdp, expert, res.policy.policy(mdp.dims()))});
          out.traces.push_back({cond(lambda) + "_seed" + std::to_string(seed) + ".csv", bc_trace_csv(res.trace)});
        });
      }
      return out;
    }});
  }
  plan.verdict = [=](ExperimentReport& rep) {
    std::map<std::uint64_t, std::pair<double, double>> by_seed;
    std::map<std::uint64_t, int> seen;
    for (const auto& r : rep.rows) {
      if (r.condition == cond(decays[0])) by_seed[r.seed].first = r.value;
      if (r.condition == cond(decays[1])) by_seed[r.seed].second = r.value;
      ++seen[r.seed];
    }
    int wins = 0, complete = 0;
    for (const auto& [seed, gaps] : by_seed) {
      if (seen[seed] != 2) continue;
      ++complete;
      wins += gaps.second <= gaps.first + 1e-12 ? 1 : 0;
    }
    const int needed = static_cast<int>(std::ceil(win_fraction * static_cast<double>(complete) - 1e-9));
    rep.details["seeds"] = complete;
    rep.details["wins"] = wins;
    rep.details["needed"] = needed;
    rep.pass = rep.errors.empty() && complete > 0 && wins >= needed;
  };
  return plan;
}

Plan plan_dv(const Json& cfg) {
  const int pairs = get<int>(cfg, "pairs");
  const int support = get<int>(cfg, "support");
  const int iterations = get<int>(cfg, "descent_iterations");
  const double lr = get<double>(cfg, "descent_learning_rate");
  const double tolerance = get<double>(cfg, "tolerance");
  if (pairs < 1 || support < 1) throw ConfigError("dv-check: pairs and support must be >= 1");
  Plan plan;
  for (auto seed : seeds_of(cfg)) {
    plan.tasks.push_back({seed, [=] {
      TaskOutput out;
      Rng rng(derive_seed(seed, 31));
      auto draw = [&] {
        std::vector<double> p(static_cast<std::size_t>(support));
        double total = 0.0;
        for (double& x : p) total += (x = -std::log(rng.uniform_open_low()));
        for (double& x : p) x /= total;
        return p;
      };
      double worst = 0.0, worst_descent = 0.0, unverified = 0.0;
      for (int i = 0; i < pairs; ++i) {
        const auto p_exp = draw();
        const auto p_pi = draw();
        const double target = -kl_divergence(p_pi, p_exp);
        const DvResult r = dv_dual_value(p_exp, p_pi);
        worst = std::max(worst, std::abs(r.value - target));
        unverified += r.verified ? 0.0 : 1.0;
        worst_descent = std::max(worst_descent, std::abs(dv_dual_by_descent(p_exp, p_pi, iterations, lr) - target));
      }
      out.rows.push_back({"max_abs_error", seed, worst});
      out.rows.push_back({"max_descent_error", seed, worst_descent});
      out.rows.push_back({"unverified", seed, unverified});
      return out;
    }});
  }
  plan.verdict = [tolerance](ExperimentReport& rep) {
    double worst = 0.0, unverified = 0.0;
    for (const auto& r : rep.rows) {
      if (r.condition == "max_abs_error") worst = std::max(worst, r.value);
      if (r.condition == "unverified") unverified += r.value;
    }
    rep.details["max_abs_error"] = worst;
    rep.details["tolerance"] = tolerance;
    rep.pass = rep.errors.empty() && !rep.rows.empty() && worst <= tolerance && unverified == 0.0;
  };
  return plan;
}

Plan plan_online(const Json& cfg) {
  const GdaSettings g = gda_from_json(cfg.at("gda"));
  const MixConfig mix = mix_from_json(cfg.at("mix"));
  const double gamma = get<double>(cfg, "gamma");
  const double fraction = get<double>(cfg, "threshold_fraction");
  chain_setup(cfg, 0);
  Plan plan;
  for (auto seed : seeds_of(cfg)) {
    plan.tasks.push_back({seed, [=] {
      TaskOutput out;
      const ChainSetup setup = chain_setup(cfg, seed);
      out.rows.push_back({"expert_value", seed, policy_value(setup.mdp, setup.expert)});
      int diverged = 0;
      for (const auto& [name, ds] : {std::pair{"complete", &setup.complete},
                                     std::pair{"subsampled", &setup.subsampled}}) {
        const std::string cond = std::string("online_") + name;
        guarded(out, cond, seed, [&] {
          GdaConfig gc = g.cfg;
          gc.gamma = gamma;
          gc.seed = seed;
          const GdaOutcome res = online_train(setup.mdp, setup.expert, *ds, mix,
                                              make_state(setup.mdp.dims(), g, derive_seed(seed, 3)), gc);
          diverged += res.diverged ? 1 : 0;
          out.rows.push_back({cond, seed, value_gap(setup.mdp, setup.expert, res.state.policy())});
          out.traces.push_back({cond + "_seed" + std::to_string(seed) + ".csv", gda_trace_csv(res.trace)});
        });
      }
      out.rows.push_back({"diverged_runs", seed, static_cast<double>(diverged)});
      return out;
    }});
  }
  plan.verdict = [fraction](ExperimentReport& rep) {
    dichotomy_verdict(rep, {"online_complete"}, {"online_subsampled"}, fraction, false);
    const auto c = mean_of(rep, "online_complete");
    const auto s = mean_of(rep, "online_subsampled");
    rep.details["subsampled_worse"] = c && s && *s > *c;
  };
  return plan;
}

Plan make_plan(const std::string& name, const Json& cfg) {
  if (name == "thm2-reduction") return plan_thm2(cfg);
  if (name == "l1-uniqueness") return plan_l1(cfg);
  if (name == "bc-scaling-det") return plan_scaling(cfg);
  if (name == "bc-det-vs-stoch") return plan_det_vs_stoch(cfg);
  if (name == "subsample-compare") return plan_subsample(cfg);
  if (name == "overfit-reg") return plan_overfit(cfg);
  if (name == "dv-check") return plan_dv(cfg);
  if (name == "online-complete-vs-sub") return plan_online(cfg);
  throw ConfigError("unknown experiment '" + name + "'");
}

std::vector<TaskOutput> run_tasks(const std::vector<Task>& tasks, int threads) {
  std::vector<TaskOutput> outputs(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        outputs[i] = tasks[i].run();
      } catch (const std::exception& e) {
        outputs[i].errors.push_back({"*", tasks[i].seed, e.what()});
      }
    }
  };
  std::size_t n = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  n = std::clamp<std::size_t>(n, 1, std::max<std::size_t>(tasks.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return outputs;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out) throw ConfigError("write failed: " + path.string());
}

std::string csv_field(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [key, value] : defaults_doc().items()) out.push_back(key);
    return out;
  }();
  return names;
}

Json default_config(std::string_view experiment) {
  const std::string name(experiment);
  if (!defaults_doc().contains(name)) throw ConfigError("unknown experiment '" + name + "'");
  Json cfg;
  cfg["experiment"] = name;
  const bool many = name == "bc-scaling-det" || name == "bc-det-vs-stoch";
  cfg["seeds"] = seed_range(2021, many ? 50 : 5);
  cfg["threads"] = 0;
  cfg["out"] = "";
  for (const auto& [key, value] : defaults_doc()[name].items()) cfg[key] = value;
  return cfg;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string_view::npos ? text.npos : comma - start);
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
      throw ArgumentError("bad seed '" + std::string(item) + "'");
    out.push_back(value);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Json resolve_config(const Json& file_config, const RunOptions& options) {
  if (!file_config.is_object() || !file_config.contains("experiment") ||
      !file_config["experiment"].is_string())
    throw ConfigError("config needs a string 'experiment' key");
  const std::string name = file_config["experiment"].get<std::string>();
  Json cfg = default_config(name);
  check_known_keys(file_config, cfg, "");
  cfg.merge_patch(file_config);

  if (options.seeds) cfg["seeds"] = *options.seeds;
  for (const auto& item : options.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ArgumentError("override must be key=value: " + item);
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    std::string pointer;
    for (std::size_t start = 0;;) {
      const auto dot = key.find('.', start);
      pointer += "/" + key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    const Json::json_pointer ptr(pointer);
    if (!cfg.contains(ptr) || key == "experiment") throw ConfigError("unknown override key '" + key + "'");
    Json value;
    try {
      value = Json::parse(text);
    } catch (const nlohmann::json::exception&) {
      value = text;
    }
    cfg[ptr] = value;
  }
  if (options.out_dir) cfg["out"] = options.out_dir->string();
  if (!cfg["out"].is_string()) throw ConfigError("'out' must be a string");
  if (cfg["out"].get<std::string>().empty()) {
    const char* root = std::getenv("IMITLAB_OUT_ROOT");
    cfg["out"] = ((root && *root) ? fs::path(root) : fs::path("runs")) / name;
    cfg["out"] = cfg["out"].get<std::string>();
  }
  seeds_of(cfg);
  return cfg;
}

ExperimentReport run_experiment(const Json& config) {
  const std::string name = get<std::string>(config, "experiment");
  const Plan plan = make_plan(name, config);
  const fs::path out_dir = get<std::string>(config, "out");
  if (out_dir.empty()) throw ConfigError("output directory not set");
  std::error_code ec;
  fs::create_directories(out_dir / "traces", ec);
  if (ec) throw ConfigError("cannot create " + out_dir.string() + ": " + ec.message());

  const auto outputs = run_tasks(plan.tasks, get<int>(config, "threads"));

  ExperimentReport rep;
  rep.experiment = name;
  rep.out_dir = out_dir;
  std::ostringstream results;
  results << "condition,seed,value\n";
  for (const auto& o : outputs) {
    for (const auto& r : o.rows) {
      rep.rows.push_back(r);
      results << r.condition << ',' << r.seed << ',' << format_double(r.value) << '\n';
    }
    for (const auto& e : o.errors) rep.errors.push_back(e);
    for (const auto& t : o.traces) write_file(out_dir / "traces" / t.name, t.content);
  }
  plan.verdict(rep);
  rep.details["errors"] = rep.errors.size();

  write_file(out_dir / "config.json", config.dump(2) + "\n");
  write_file(out_dir / "results.csv", results.str());
  summarize_dir(out_dir);
  if (!rep.errors.empty()) {
    std::ostringstream errors;
    errors << "condition,seed,error\n";
    for (const auto& e : rep.errors) errors << e.condition << ',' << e.seed << ',' << csv_field(e.message) << '\n';
    write_file(out_dir / "errors.csv", errors.str());
  } else {
    fs::remove(out_dir / "errors.csv", ec);
  }
  Json verdict;
  verdict["experiment"] = name;
  verdict["verdict"] = rep.pass ? "PASS" : "FAIL";
  verdict["details"] = rep.details;
  write_file(out_dir / "verdict.json", verdict.dump(2) + "\n");
  return rep;
}

}  // namespace imitlab
