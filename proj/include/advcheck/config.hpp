#pragma once

// Experiment configuration: one JSON document per experiment.

#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "advcheck/attacks/adaptive.hpp"
#include "advcheck/attacks/boundary.hpp"
#include "advcheck/attacks/estimators.hpp"
#include "advcheck/attacks/gradient.hpp"
#include "advcheck/attacks/search.hpp"
#include "advcheck/dataset.hpp"
#include "advcheck/diagnostics.hpp"
#include "advcheck/errors.hpp"

namespace advcheck {

inline const std::vector<std::string>& known_attack_types() {
  static const std::vector<std::string> types{"fgsm",    "pgd",     "spsa",     "nes",        "zoo",
                                              "boundary", "random", "spatial", "transfer", "eot_pgd",
                                              "bpda_pgd", "min_distortion"};
  return types;
}

inline bool is_white_box(const std::string& type) {
  return type == "fgsm" || type == "pgd" || type == "eot_pgd" || type == "bpda_pgd" || type == "min_distortion";
}

inline const std::vector<std::string>& all_check_ids() {
  static const std::vector<std::string> ids{check_id::iterative_vs_single, check_id::budget_monotone,
                                            check_id::high_distortion_floor, check_id::unbounded_total,
                                            check_id::whitebox_dominance,  check_id::convergence_doubling,
                                            check_id::fixed_randomness,    check_id::ablation,
                                            check_id::per_example};
  return ids;
}

struct AttackSpec {
  std::string name;
  std::string type;
  AttackConfig cfg;
  std::size_t eot_samples = 30;
  std::string substitute = "mlp";  // transfer: model id built from the same bases
};

struct ReferenceSpec {
  std::optional<std::string> linear_path;
  std::optional<std::string> mlp_path;
  std::optional<std::string> train_dataset;  // defaults to an independent draw of `dataset`
  std::size_t hidden = 16;
  Activation activation = Activation::relu;
  TrainOptions train;
  bool train_linear = true;
};

struct SanitySpec {
  std::vector<double> grid;  // empty: epsilon * {1/6, ..., 6/6}
  std::optional<std::size_t> convergence_iterations;
  double ablation_floor = 0.9;
};

struct ExperimentConfig {
  std::string text;  // the document exactly as read
  std::filesystem::path base_dir;
  std::uint64_t seed = 0;
  std::string model;
  std::string dataset;
  std::optional<std::size_t> limit;
  std::optional<std::size_t> num_classes;
  ReferenceSpec reference;
  ThreatModel threat;
  AttackGoal goal;
  bool default_attacks = false;
  std::vector<AttackSpec> attacks;
  std::vector<std::string> diagnostics;
  SanitySpec sanity;
  std::optional<std::vector<double>> curve_grid;  // curve: attack the grid with PGD in addition to auto mode
  bool fail_on_diagnostics = true;
  std::string out_dir = "out";
};

namespace detail {

inline double json_number(const Json& j, const std::string& key) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
  }
  throw ConfigError("'" + key + "' must be a number");
}

inline std::size_t json_count(const Json& j, const std::string& key) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) throw ConfigError("'" + key + "' must be an integer");
  const auto v = j.get<long long>();
  if (v < 0) throw ConfigError("'" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

inline bool json_bool(const Json& j, const std::string& key) {
  if (!j.is_boolean()) throw ConfigError("'" + key + "' must be true or false");
  return j.get<bool>();
}

inline std::string json_string(const Json& j, const std::string& key) {
  if (!j.is_string()) throw ConfigError("'" + key + "' must be a string");
  return j.get<std::string>();
}

inline AttackSpec parse_attack(const Json& j, std::size_t index) {
  AttackSpec s;
  if (j.is_string()) {
    s.type = j.get<std::string>();
  } else if (j.is_object()) {
    if (!j.contains("type")) throw ConfigError("attack #" + std::to_string(index) + " has no 'type'");
    s.type = json_string(j.at("type"), "type");
  } else {
    throw ConfigError("attack #" + std::to_string(index) + " must be a string or an object");
  }
  const auto& types = known_attack_types();
  if (std::find(types.begin(), types.end(), s.type) == types.end())
    throw ConfigError("unknown attack type '" + s.type + "'");
  s.name = s.type;
  if (!j.is_object()) return s;
  AttackConfig& c = s.cfg;
  for (const auto& [key, v] : j.items()) {
    const std::string k = "attacks[" + std::to_string(index) + "]." + key;
    if (key == "type") continue;
    else if (key == "name") s.name = json_string(v, k);
    else if (key == "iterations") c.iterations = json_count(v, k);
    else if (key == "step_size") c.step_size = json_number(v, k);
    else if (key == "restarts") c.restarts = json_count(v, k);
    else if (key == "random_first_start") c.random_first_start = json_bool(v, k);
    else if (key == "loss") {
      try {
        c.loss = loss_kind_from_string(json_string(v, k));
      } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
      }
    }
    else if (key == "estimator_batch") c.estimator_batch = json_count(v, k);
    else if (key == "spsa_delta") c.spsa_delta = json_number(v, k);
    else if (key == "nes_sigma") c.nes_sigma = json_number(v, k);
    else if (key == "zoo_coords") c.zoo_coords = json_count(v, k);
    else if (key == "zoo_h") c.zoo_h = json_number(v, k);
    else if (key == "early_stop") c.early_stop = json_bool(v, k);
    else if (key == "eps_max") c.eps_max = json_number(v, k);
    else if (key == "eps_tol") c.eps_tol = json_number(v, k);
    else if (key == "search_depth") c.search_depth = json_count(v, k);
    else if (key == "boundary_steps") c.boundary_steps = json_count(v, k);
    else if (key == "init_trials") c.init_trials = json_count(v, k);
    else if (key == "spherical_step") c.spherical_step = json_number(v, k);
    else if (key == "source_step") c.source_step = json_number(v, k);
    else if (key == "samples") c.samples = json_count(v, k);
    else if (key == "confidence_iters") c.confidence_iters = json_count(v, k);
    else if (key == "judge_votes") c.judge_votes = json_count(v, k);
    else if (key == "eot_samples") s.eot_samples = json_count(v, k);
    else if (key == "substitute") s.substitute = json_string(v, k);
    else throw ConfigError("unknown key '" + k + "'");
  }
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("attack '") + s.name + "': " + e.what());
  }
  if (s.eot_samples == 0) throw ConfigError("attack '" + s.name + "': eot_samples must be positive");
  return s;
}

inline std::vector<double> parse_grid(const Json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("'" + key + "' must be an array of numbers");
  std::vector<double> g;
  for (const auto& v : j) g.push_back(json_number(v, key));
  for (std::size_t i = 1; i < g.size(); ++i)
    if (!(g[i] > g[i - 1])) throw ConfigError("'" + key + "' must be strictly increasing");
  return g;
}

}  // namespace detail

// Desk-scale default attack set: PGD, SPSA at a 10k query budget, and the
// boundary attack.
inline std::vector<AttackSpec> default_attack_set() {
  std::vector<AttackSpec> v;
  v.push_back({"pgd", "pgd", {}, 30, "mlp"});
  AttackSpec spsa;
  spsa.name = spsa.type = "spsa";
  spsa.cfg.iterations = 38;  // 38 * (2 * 128 + 1) queries stays within a 10k budget
  v.push_back(spsa);
  AttackSpec boundary;
  boundary.name = boundary.type = "boundary";
  v.push_back(boundary);
  return v;
}

inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> keys{"seed",   "model",       "dataset",     "limit",  "num_classes",
                                          "reference", "threat",   "goal",        "attacks", "diagnostics",
                                          "sanity", "curve",       "fail_on_diagnostics", "output", "description"};
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw ConfigError("unknown top-level key '" + k + "'");

  ExperimentConfig c;
  c.text = text;
  c.base_dir = base_dir;
  if (!j.contains("seed")) throw ConfigError("'seed' is mandatory");
  c.seed = detail::json_count(j["seed"], "seed");
  if (!j.contains("model")) throw ConfigError("'model' is mandatory");
  c.model = detail::json_string(j["model"], "model");
  if (!j.contains("dataset")) throw ConfigError("'dataset' is mandatory");
  c.dataset = detail::json_string(j["dataset"], "dataset");
  if (j.contains("limit")) c.limit = detail::json_count(j["limit"], "limit");
  if (j.contains("num_classes")) c.num_classes = detail::json_count(j["num_classes"], "num_classes");

  if (j.contains("reference")) {
    const Json& r = j["reference"];
    if (!r.is_object()) throw ConfigError("'reference' must be an object");
    for (const auto& [k, v] : r.items()) {
      const std::string key = "reference." + k;
      if (k == "linear") c.reference.linear_path = detail::json_string(v, key);
      else if (k == "mlp") c.reference.mlp_path = detail::json_string(v, key);
      else if (k == "train_dataset") c.reference.train_dataset = detail::json_string(v, key);
      else if (k == "hidden") c.reference.hidden = detail::json_count(v, key);
      else if (k == "activation") {
        try {
          c.reference.activation = activation_from_string(detail::json_string(v, key));
        } catch (const std::exception& e) {
          throw ConfigError(e.what());
        }
      }
      else if (k == "epochs") c.reference.train.epochs = detail::json_count(v, key);
      else if (k == "lr") c.reference.train.lr = detail::json_number(v, key);
      else if (k == "batch_size") c.reference.train.batch_size = detail::json_count(v, key);
      else if (k == "train_linear") c.reference.train_linear = detail::json_bool(v, key);
      else throw ConfigError("unknown key '" + key + "'");
    }
  }

  if (!j.contains("threat")) throw ConfigError("'threat' is mandatory");
  {
    const Json& t = j["threat"];
    if (!t.is_object()) throw ConfigError("'threat' must be an object");
    for (const auto& [k, v] : t.items())
      if (k != "norm" && k != "epsilon" && k != "box") throw ConfigError("unknown key 'threat." + k + "'");
    try {
      c.threat.p = norm_from_string(t.contains("norm") ? detail::json_string(t["norm"], "threat.norm") : "inf");
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
    if (!t.contains("epsilon")) throw ConfigError("'threat.epsilon' is mandatory");
    c.threat.epsilon = detail::json_number(t["epsilon"], "threat.epsilon");
    if (t.contains("box")) {
      const Json& b = t["box"];
      if (!b.is_array() || b.size() != 2) throw ConfigError("'threat.box' must be [lo, hi]");
      c.threat.box_lo = detail::json_number(b[0], "threat.box");
      c.threat.box_hi = detail::json_number(b[1], "threat.box");
    }
    try {
      c.threat.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
  }

  if (j.contains("goal")) {
    const std::string g = detail::json_string(j["goal"], "goal");
    const auto parts = split(g, ':');
    try {
      if (g == "untargeted") c.goal = AttackGoal::untargeted();
      else if (parts.size() == 2 && parts[0] == "targeted")
        c.goal = AttackGoal::targeted(static_cast<std::size_t>(parse_number(parts[1], "goal target")));
      else if (parts.size() == 3 && parts[0] == "source_target")
        c.goal = AttackGoal::source_target(static_cast<std::size_t>(parse_number(parts[1], "goal source")),
                                           static_cast<std::size_t>(parse_number(parts[2], "goal target")));
      else throw ConfigError("goal must be untargeted, targeted:T or source_target:S:T");
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
  }

  if (j.contains("attacks")) {
    if (!j["attacks"].is_array()) throw ConfigError("'attacks' must be an array");
    for (std::size_t i = 0; i < j["attacks"].size(); ++i) c.attacks.push_back(detail::parse_attack(j["attacks"][i], i));
  } else {
    c.default_attacks = true;
    c.attacks = default_attack_set();
  }
  std::set<std::string> names;
  for (const auto& a : c.attacks)
    if (!names.insert(a.name).second) throw ConfigError("duplicate attack name '" + a.name + "'");

  if (!j.contains("diagnostics") || (j["diagnostics"].is_string() && j["diagnostics"] == "all")) {
    c.diagnostics = all_check_ids();
  } else {
    if (!j["diagnostics"].is_array()) throw ConfigError("'diagnostics' must be \"all\" or an array of check ids");
    const auto& ids = all_check_ids();
    for (const auto& v : j["diagnostics"]) {
      const std::string id = detail::json_string(v, "diagnostics");
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) throw ConfigError("unknown check id '" + id + "'");
      if (std::find(c.diagnostics.begin(), c.diagnostics.end(), id) == c.diagnostics.end()) c.diagnostics.push_back(id);
    }
  }

  if (j.contains("sanity")) {
    const Json& s = j["sanity"];
    if (!s.is_object()) throw ConfigError("'sanity' must be an object");
    for (const auto& [k, v] : s.items()) {
      if (k == "grid") c.sanity.grid = detail::parse_grid(v, "sanity.grid");
      else if (k == "convergence_iterations") c.sanity.convergence_iterations = detail::json_count(v, "sanity." + k);
      else if (k == "ablation_floor") c.sanity.ablation_floor = detail::json_number(v, "sanity." + k);
      else throw ConfigError("unknown key 'sanity." + k + "'");
    }
  }
  if (c.sanity.grid.empty())
    for (int k = 1; k <= 6; ++k) c.sanity.grid.push_back(c.threat.epsilon * k / 6.0);

  if (j.contains("curve")) {
    const Json& cv = j["curve"];
    if (!cv.is_object()) throw ConfigError("'curve' must be an object");
    for (const auto& [k, v] : cv.items()) {
      if (k == "grid") c.curve_grid = detail::parse_grid(v, "curve.grid");
      else throw ConfigError("unknown key 'curve." + k + "'");
    }
  }

  if (j.contains("fail_on_diagnostics")) c.fail_on_diagnostics = detail::json_bool(j["fail_on_diagnostics"], "fail_on_diagnostics");
  if (j.contains("output")) {
    const Json& o = j["output"];
    if (!o.is_object()) throw ConfigError("'output' must be an object");
    for (const auto& [k, v] : o.items()) {
      if (k == "dir") c.out_dir = detail::json_string(v, "output.dir");
      else throw ConfigError("unknown key 'output." + k + "'");
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::filesystem::path(path).parent_path());
}

// Keeps only the named attacks (the --attacks filter); unknown names are an error.
inline void filter_attacks(ExperimentConfig& c, const std::vector<std::string>& names) {
  for (const auto& n : names)
    if (std::none_of(c.attacks.begin(), c.attacks.end(), [&](const AttackSpec& a) { return a.name == n; }))
      throw ConfigError("--attacks names unknown attack '" + n + "'");
  std::erase_if(c.attacks, [&](const AttackSpec& a) { return std::find(names.begin(), names.end(), a.name) == names.end(); });
}

// Borrowed pointer for wrapping a caller-owned model.
inline ClassifierPtr borrow(const Classifier& clf) {
  return ClassifierPtr(&clf, [](const Classifier*) {});
}

// Per-example closure for an attack spec. `grid` is the input's image shape
// when known; `substitute` resolves transfer substitutes.
inline ExampleAttack make_example_attack(const AttackSpec& spec, const AttackGoal& goal,
                                         std::optional<GridShape> grid = std::nullopt,
                                         ClassifierPtr substitute = nullptr) {
  const AttackConfig cfg = spec.cfg;
  const std::string& t = spec.type;
  if (t == "fgsm")
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      if (tm.p != Norm::linf) throw AttackInapplicable("fgsm: requires an l-infinity threat model");
      return fgsm(c, tm, goal, x, y, r, cfg);
    };
  if (t == "pgd")
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      return pgd(c, tm, goal, x, y, cfg, r);
    };
  if (t == "min_distortion")
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      return min_distortion(c, tm, goal, x, y, cfg, r);
    };
  if (t == "spsa")
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      return spsa(c, tm, goal, x, y, cfg, r);
    };
  if (t == "nes")
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      return nes(c, tm, goal, x, y, cfg, r);
    };
  if (t == "zoo")
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      return zoo_fd(c, tm, goal, x, y, cfg, r);
    };
  if (t == "boundary")
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      return boundary_attack(c, tm, goal, x, y, cfg, r);
    };
  if (t == "random")
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      return random_search(c, tm, goal, x, y, cfg, r);
    };
  if (t == "spatial")
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      return spatial_bruteforce(c, grid.value_or(GridShape{}), tm, goal, x, y, cfg, r);
    };
  if (t == "transfer")
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      if (!substitute) throw AttackInapplicable("transfer: no substitute model");
      return transfer_attack(*substitute, c, tm, goal, x, y, cfg, r);
    };
  if (t == "eot_pgd") {
    const std::size_t k = spec.eot_samples;
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      const ClassifierPtr averaged = eot_wrap(borrow(c), k);
      AttackResult res = pgd(*averaged, tm, goal, x, y, cfg, r);
      res.attack = "eot_pgd";
      res.hyperparams["eot_samples"] = k;
      verify_result(res, c, tm, goal, x, y, true, cfg.judge_votes);
      return res;
    };
  }
  if (t == "bpda_pgd")
    return [=](const Classifier& c, const ThreatModel& tm, const Vec& x, std::size_t y, Rng& r) {
      ClassifierPtr through;
      try {
        through = bpda_wrap(borrow(c));
      } catch (const ArgumentError& e) {
        throw AttackInapplicable(e.what());
      }
      AttackResult res = pgd(*through, tm, goal, x, y, cfg, r);
      res.attack = "bpda_pgd";
      res.hyperparams["surrogate"] = "identity";
      verify_result(res, c, tm, goal, x, y, true, cfg.judge_votes);
      return res;
    };
  throw ConfigError("unknown attack type '" + t + "'");
}

}  // namespace advcheck
