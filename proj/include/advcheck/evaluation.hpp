#pragma once

// Experiment orchestration and reports.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "advcheck/config.hpp"

namespace advcheck {

inline constexpr const char* kToolName = "advcheck";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSuccessConvention =
    "attack success is measured over originally-correct examples; originally-misclassified examples are excluded "
    "and counted separately; model accuracy is over all examples";

// ---------------------------------------------------------------------------
// Reference models

inline std::uint64_t stream_id(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct ReferenceModels {
  ZooBases bases;
  Json info = Json::object();
};

inline Dataset training_data(const ExperimentConfig& c, const Rng& root) {
  Rng r = root.fork(stream_id("train-data"));
  DatasetOptions opt;
  opt.num_classes = c.num_classes;
  Dataset d = load_dataset(c.reference.train_dataset.value_or(c.dataset), r, opt);
  d.box_lo = c.threat.box_lo;
  d.box_hi = c.threat.box_hi;
  return d;
}

inline std::filesystem::path resolve(const ExperimentConfig& c, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : c.base_dir / path;
}

// Loads the base parameters named in the config; trains whatever is missing
// on the training data.
inline ReferenceModels build_references(const ExperimentConfig& c, const Rng& root) {
  ReferenceModels m;
  m.bases.box_lo = c.threat.box_lo;
  m.bases.box_hi = c.threat.box_hi;
  if (c.reference.mlp_path) m.bases.mlp = load_params(resolve(c, *c.reference.mlp_path).string());
  if (c.reference.linear_path) m.bases.linear = load_params(resolve(c, *c.reference.linear_path).string());
  const bool need_mlp = !m.bases.mlp;
  const bool need_linear = !m.bases.linear && c.reference.train_linear;
  if (!need_mlp && !need_linear) return m;

  const Dataset train = training_data(c, root);
  if (train.size() == 0) throw ConfigError("training dataset is empty");
  Rng r = root.fork(stream_id("train"));
  auto fit = [&](std::size_t hidden, std::uint64_t stream) {
    Rng init = r.fork(stream);
    Rng sgd = r.fork(stream + 1);
    MlpParams p = init_mlp(train.dim(), hidden, train.num_classes, c.reference.activation, init);
    return sgd_train(p, train.inputs, train.labels, c.reference.train, sgd);
  };
  if (need_mlp) {
    m.bases.mlp = fit(c.reference.hidden, 0);
    m.info["mlp_train_accuracy"] = accuracy(*m.bases.mlp, train.inputs, train.labels);
  }
  if (need_linear) {
    m.bases.linear = fit(0, 2);
    m.info["linear_train_accuracy"] = accuracy(*m.bases.linear, train.inputs, train.labels);
  }
  m.info["train_examples"] = train.size();
  return m;
}

// ---------------------------------------------------------------------------
// Report

inline Json num(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double num_from(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw FormatError("expected a number, got '" + s + "'", 0);
  }
  return j.get<double>();
}

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::failure: return "failure";
    case Outcome::success: return "success";
    case Outcome::excluded: return "excluded";
    case Outcome::inapplicable: return "inapplicable";
  }
  return "?";
}

inline Outcome outcome_from_string(const std::string& s) {
  if (s == "failure") return Outcome::failure;
  if (s == "success") return Outcome::success;
  if (s == "excluded") return Outcome::excluded;
  if (s == "inapplicable") return Outcome::inapplicable;
  throw FormatError("unknown outcome '" + s + "'", 0);
}

struct ExampleRecord {
  Outcome outcome = Outcome::excluded;
  double distortion = std::numeric_limits<double>::quiet_NaN();
  std::size_t queries = 0;
  std::size_t verify_queries = 0;
  std::size_t iterations = 0;
  std::optional<double> final_loss;
  std::vector<std::string> flags;
};

struct AttackSummary {
  std::string name;
  std::string type;
  bool white_box = true;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  Json hyperparams = Json::object();
  std::vector<ExampleRecord> examples;
  std::vector<std::string> notes;

  AttackRun as_run() const {
    AttackRun r;
    r.attack = name;
    r.epsilon = epsilon;
    r.white_box = white_box;
    for (const auto& e : examples) r.outcomes.push_back(e.outcome);
    return r;
  }
};

inline AttackSummary summarize(const AttackRun& run, const std::string& type, std::uint64_t seed,
                               const Json& hyperparams) {
  AttackSummary s;
  s.name = run.attack;
  s.type = type;
  s.white_box = run.white_box;
  s.epsilon = run.epsilon;
  s.seed = seed;
  s.hyperparams = hyperparams;
  s.notes = run.notes;
  for (std::size_t i = 0; i < run.size(); ++i) {
    ExampleRecord e;
    e.outcome = run.outcomes[i];
    if (i < run.results.size() && (e.outcome == Outcome::success || e.outcome == Outcome::failure)) {
      const AttackResult& r = run.results[i];
      e.distortion = r.distortion;
      e.queries = r.queries;
      e.verify_queries = r.verify_queries;
      e.iterations = r.iterations;
      e.final_loss = r.final_loss;
      e.flags = r.flags;
    }
    s.examples.push_back(std::move(e));
  }
  return s;
}

struct CleanSummary {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::vector<std::size_t> misclassified;
};

struct PerExampleSummary {
  bool available = false;
  std::vector<std::string> attacks;           // rows that entered the aggregate
  std::vector<std::string> excluded_attacks;  // rows with inapplicable entries
  Aggregate aggregate;
  std::vector<std::string> warnings;
  std::optional<AdversarialRisk> risk;
};

struct RocSummary {
  std::string attack;
  RocCurve curve;
};

struct EvaluationReport {
  Json config = Json::object();
  CleanSummary clean;
  std::vector<AttackSummary> attacks;
  PerExampleSummary per_example;
  std::vector<AccuracyCurve> curves;
  std::optional<RocSummary> roc;
  std::vector<Verdict> diagnostics;
  Json meta = Json::object();

  bool has_failed_diagnostic() const {
    return std::any_of(diagnostics.begin(), diagnostics.end(), [](const Verdict& v) { return v.status == Status::fail; });
  }
};

inline Json to_json(const AttackSummary& s) {
  std::size_t queries = 0, verify = 0;
  Json examples = Json::array();
  for (std::size_t i = 0; i < s.examples.size(); ++i) {
    const auto& e = s.examples[i];
    queries += e.queries;
    verify += e.verify_queries;
    examples.push_back({{"index", i},
                        {"outcome", to_string(e.outcome)},
                        {"distortion", num(e.distortion)},
                        {"queries", e.queries},
                        {"verify_queries", e.verify_queries},
                        {"iterations", e.iterations},
                        {"final_loss", e.final_loss ? num(*e.final_loss) : Json(nullptr)},
                        {"flags", e.flags}});
  }
  const AttackRun run = s.as_run();
  return Json{{"name", s.name},
              {"type", s.type},
              {"white_box", s.white_box},
              {"epsilon", num(s.epsilon)},
              {"seed", s.seed},
              {"hyperparams", s.hyperparams},
              {"success_rate", num(run.success_rate())},
              {"model_accuracy", num(run.model_accuracy())},
              {"eligible", run.eligible()},
              {"inapplicable", run.count(Outcome::inapplicable)},
              {"queries", queries},
              {"verify_queries", verify},
              {"notes", s.notes},
              {"per_example", examples}};
}

inline AttackSummary attack_summary_from_json(const Json& j) {
  AttackSummary s;
  s.name = j.at("name").get<std::string>();
  s.type = j.at("type").get<std::string>();
  s.white_box = j.at("white_box").get<bool>();
  s.epsilon = num_from(j.at("epsilon"));
  s.seed = j.at("seed").get<std::uint64_t>();
  s.hyperparams = j.at("hyperparams");
  s.notes = j.at("notes").get<std::vector<std::string>>();
  for (const auto& e : j.at("per_example")) {
    ExampleRecord r;
    r.outcome = outcome_from_string(e.at("outcome").get<std::string>());
    r.distortion = num_from(e.at("distortion"));
    r.queries = e.at("queries").get<std::size_t>();
    r.verify_queries = e.at("verify_queries").get<std::size_t>();
    r.iterations = e.at("iterations").get<std::size_t>();
    if (!e.at("final_loss").is_null()) r.final_loss = num_from(e.at("final_loss"));
    r.flags = e.at("flags").get<std::vector<std::string>>();
    s.examples.push_back(std::move(r));
  }
  return s;
}

inline Json to_json(const AccuracyCurve& c) {
  Json pts = Json::array();
  for (const auto& p : c.points)
    pts.push_back({{"epsilon", num(p.epsilon)},
                   {"accuracy", num(p.model_accuracy)},
                   {"success", num(p.attack_success)},
                   {"n", p.n}});
  return Json{{"attack", c.attack}, {"mode", c.mode}, {"points", pts}, {"warnings", c.warnings}};
}

inline AccuracyCurve curve_from_json(const Json& j) {
  AccuracyCurve c;
  c.attack = j.at("attack").get<std::string>();
  c.mode = j.at("mode").get<std::string>();
  c.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& p : j.at("points"))
    c.points.push_back({num_from(p.at("epsilon")), num_from(p.at("accuracy")), num_from(p.at("success")),
                        p.at("n").get<std::size_t>()});
  return c;
}

inline Json to_json(const PerExampleSummary& p) {
  Json j{{"available", p.available},
         {"attacks", p.attacks},
         {"excluded_attacks", p.excluded_attacks},
         {"warnings", p.warnings},
         {"convention", kSuccessConvention}};
  if (p.available) {
    j["examples"] = p.aggregate.examples;
    j["eligible"] = p.aggregate.eligible;
    j["per_example_success"] = num(p.aggregate.per_example_success);
    j["per_example_accuracy"] = num(p.aggregate.per_example_accuracy);
    Json rows = Json::array();
    for (std::size_t k = 0; k < p.attacks.size(); ++k)
      rows.push_back({{"attack", p.attacks[k]},
                      {"success", num(p.aggregate.per_attack_success[k])},
                      {"accuracy", num(p.aggregate.per_attack_accuracy[k])}});
    j["per_attack"] = rows;
  }
  if (p.risk)
    j["risk"] = {{"worst_case_loss_mean", num(p.risk->worst_case_loss_mean)},
                 {"min_dist_mean", num(p.risk->min_dist_mean)},
                 {"min_dist_median", num(p.risk->min_dist_median)},
                 {"note", "empirical lower bounds: attacks only approximate the inner optimisation"}};
  else
    j["risk"] = nullptr;
  return j;
}

inline PerExampleSummary per_example_from_json(const Json& j) {
  PerExampleSummary p;
  p.available = j.at("available").get<bool>();
  p.attacks = j.at("attacks").get<std::vector<std::string>>();
  p.excluded_attacks = j.at("excluded_attacks").get<std::vector<std::string>>();
  p.warnings = j.at("warnings").get<std::vector<std::string>>();
  if (p.available) {
    p.aggregate.examples = j.at("examples").get<std::size_t>();
    p.aggregate.eligible = j.at("eligible").get<std::size_t>();
    p.aggregate.per_example_success = num_from(j.at("per_example_success"));
    p.aggregate.per_example_accuracy = num_from(j.at("per_example_accuracy"));
    for (const auto& row : j.at("per_attack")) {
      p.aggregate.per_attack_success.push_back(num_from(row.at("success")));
      p.aggregate.per_attack_accuracy.push_back(num_from(row.at("accuracy")));
    }
  }
  if (!j.at("risk").is_null()) {
    const Json& r = j.at("risk");
    p.risk = AdversarialRisk{num_from(r.at("worst_case_loss_mean")), num_from(r.at("min_dist_mean")),
                             num_from(r.at("min_dist_median"))};
  }
  return p;
}

inline Json to_json(const EvaluationReport& r) {
  Json j;
  j["config"] = r.config;
  j["clean"] = {{"n", r.clean.n},
                {"correct", r.clean.correct},
                {"accuracy", num(r.clean.accuracy)},
                {"misclassified", r.clean.misclassified}};
  j["attacks"] = Json::array();
  for (const auto& a : r.attacks) j["attacks"].push_back(to_json(a));
  j["per_example"] = to_json(r.per_example);
  j["curves"] = Json::array();
  for (const auto& c : r.curves) j["curves"].push_back(to_json(c));
  if (r.roc) {
    Json pts = Json::array();
    for (const auto& p : r.roc->curve.points)
      pts.push_back({{"fpr", num(p.fpr)}, {"tpr", num(p.tpr)}, {"threshold", num(p.threshold)}});
    j["roc"] = {{"attack", r.roc->attack}, {"auc", num(r.roc->curve.auc)}, {"points", pts}};
  } else {
    j["roc"] = nullptr;
  }
  j["diagnostics"] = Json::array();
  for (const auto& v : r.diagnostics) j["diagnostics"].push_back(to_json(v));
  j["meta"] = r.meta;
  return j;
}

inline EvaluationReport report_from_json(const Json& j) {
  EvaluationReport r;
  try {
    r.config = j.at("config");
    const Json& c = j.at("clean");
    r.clean.n = c.at("n").get<std::size_t>();
    r.clean.correct = c.at("correct").get<std::size_t>();
    r.clean.accuracy = num_from(c.at("accuracy"));
    r.clean.misclassified = c.at("misclassified").get<std::vector<std::size_t>>();
    for (const auto& a : j.at("attacks")) r.attacks.push_back(attack_summary_from_json(a));
    r.per_example = per_example_from_json(j.at("per_example"));
    for (const auto& cv : j.at("curves")) r.curves.push_back(curve_from_json(cv));
    if (!j.at("roc").is_null()) {
      RocSummary s;
      s.attack = j["roc"].at("attack").get<std::string>();
      s.curve.auc = num_from(j["roc"].at("auc"));
      for (const auto& p : j["roc"].at("points"))
        s.curve.points.push_back({num_from(p.at("fpr")), num_from(p.at("tpr")), num_from(p.at("threshold"))});
      r.roc = s;
    }
    for (const auto& v : j.at("diagnostics")) r.diagnostics.push_back(verdict_from_json(v));
    r.meta = j.at("meta");
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what(), 0);
  }
  return r;
}

inline EvaluationReport parse_report(const std::string& text) {
  try {
    return report_from_json(Json::parse(text));
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what(), e.byte);
  }
}

// Report without the fields that legitimately differ between identical runs.
inline Json strip_timing(Json report) {
  if (report.contains("meta") && report["meta"].is_object()) report["meta"].erase("timing");
  return report;
}

inline std::string curve_csv(const AccuracyCurve& c) {
  std::ostringstream os;
  os.precision(17);
  os << "epsilon,accuracy,success,n\n";
  for (const auto& p : c.points) os << p.epsilon << ',' << p.model_accuracy << ',' << p.attack_success << ',' << p.n << '\n';
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Writes report.json and one curve_<k>_<attack>_<mode>.csv per curve;
// returns the written paths.
inline std::vector<std::filesystem::path> emit_report(const EvaluationReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  written.push_back(dir / "report.json");
  write_text(written.back(), to_json(r).dump(2) + "\n");
  for (std::size_t k = 0; k < r.curves.size(); ++k) {
    written.push_back(dir / ("curve_" + std::to_string(k) + "_" + r.curves[k].attack + "_" + r.curves[k].mode + ".csv"));
    write_text(written.back(), curve_csv(r.curves[k]));
  }
  return written;
}

// ---------------------------------------------------------------------------
// Orchestration

enum class RunMode { evaluate, sanity, curve };

struct RunOptions {
  RunMode mode = RunMode::evaluate;
  std::size_t jobs = 1;
};

namespace detail {

inline AttackSpec reference_pgd(const ExperimentConfig& c) {
  for (const auto& a : c.attacks)
    if (a.type == "pgd") return a;
  AttackSpec s;
  s.name = s.type = "pgd";
  return s;
}

inline Json spec_echo(const AttackSpec& s, const ThreatModel& tm, const AttackGoal& goal) {
  Json j = config_echo(s.cfg, tm, goal);
  j["type"] = s.type;
  if (s.type == "eot_pgd") j["eot_samples"] = s.eot_samples;
  if (s.type == "transfer") j["substitute"] = s.substitute;
  return j;
}

inline std::vector<double> min_distances(const AttackRun& run) {
  std::vector<double> d;
  for (std::size_t i = 0; i < run.size(); ++i) {
    if (run.outcomes[i] == Outcome::success) d.push_back(run.results[i].distortion);
    if (run.outcomes[i] == Outcome::failure) d.push_back(std::numeric_limits<double>::infinity());
  }
  return d;
}

}  // namespace detail

inline EvaluationReport run_evaluation(ExperimentConfig c, const RunOptions& opt = {}) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t jobs = std::max<std::size_t>(1, opt.jobs);
  const Rng root(c.seed);

  // Data and model.
  Rng data_rng = root.fork(stream_id("data"));
  DatasetOptions dopt;
  dopt.limit = c.limit;
  dopt.num_classes = c.num_classes;
  Dataset data = load_dataset(c.dataset, data_rng, dopt);
  data.box_lo = c.threat.box_lo;
  data.box_hi = c.threat.box_hi;
  data.validate();
  const ReferenceModels refs = build_references(c, root);
  ClassifierPtr model;
  try {
    model = make_zoo_model(c.model, refs.bases);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (model->input_dim() != data.dim()) throw ConfigError("model input dimension does not match the dataset");

  if (c.default_attacks) {
    if (model->randomness()) c.attacks.push_back({"eot_pgd", "eot_pgd", {}, 30, "mlp"});
    if (model->inner() && model->preprocess(data.inputs.empty() ? Vec{} : data.inputs[0]))
      c.attacks.push_back({"bpda_pgd", "bpda_pgd", {}, 30, "mlp"});
  }
  std::vector<std::string> enabled = c.diagnostics;
  if (opt.mode == RunMode::sanity)
    std::erase_if(enabled, [](const std::string& id) { return id.rfind("sanity.", 0) != 0; });
  if (opt.mode == RunMode::curve) enabled.clear();

  EvaluationReport report;
  report.config = {{"text", c.text},
                   {"effective",
                    {{"seed", c.seed},
                     {"model", model->id()},
                     {"dataset", c.dataset},
                     {"mode", opt.mode == RunMode::evaluate ? "evaluate" : opt.mode == RunMode::sanity ? "sanity" : "curve"},
                     {"attacks", Json::array()},
                     {"diagnostics", enabled},
                     {"fail_on_diagnostics", c.fail_on_diagnostics}}}};
  for (const auto& a : c.attacks) report.config["effective"]["attacks"].push_back(a.name);

  // Clean accuracy first.
  const std::size_t votes = 25;
  const auto correct = clean_correctness(*model, data, root.fork(stream_id("clean")).seed(), votes, jobs);
  report.clean.n = data.size();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (correct[i]) ++report.clean.correct;
    else report.clean.misclassified.push_back(i);
  }
  report.clean.accuracy = data.size() ? static_cast<double>(report.clean.correct) / data.size() : 0.0;

  const ThreatModel tm = c.threat;
  std::optional<GridShape> grid;
  if (data.grid) grid = GridShape{data.grid->first, data.grid->second};
  const AttackSpec pgd_spec = detail::reference_pgd(c);
  const ExampleAttack pgd_attack = make_example_attack(pgd_spec, c.goal, grid);
  auto diag_stream = [&](const std::string& label) { return root.fork(stream_id("diag:" + label)); };

  // Attack matrix.
  std::vector<AttackRun> runs;
  if (opt.mode == RunMode::evaluate) {
    for (const auto& spec : c.attacks) {
      ClassifierPtr substitute;
      if (spec.type == "transfer") {
        try {
          substitute = make_zoo_model(spec.substitute, refs.bases);
        } catch (const ArgumentError& e) {
          throw ConfigError("attack '" + spec.name + "': " + e.what());
        }
      }
      const ExampleAttack attack = make_example_attack(spec, c.goal, grid, substitute);
      const Rng stream = root.fork(stream_id("attack:" + spec.name));
      AttackRun run = run_attack(*model, data, correct, spec.name, tm, attack, stream, jobs, is_white_box(spec.type));
      report.attacks.push_back(summarize(run, spec.type, stream.seed(), detail::spec_echo(spec, tm, c.goal)));
      runs.push_back(std::move(run));
    }

    // Per-example aggregation over complete rows.
    PerExampleSummary& pe = report.per_example;
    std::vector<AttackRun> complete;
    for (const auto& r : runs) {
      if (r.complete()) {
        complete.push_back(r);
        pe.attacks.push_back(r.attack);
      } else {
        pe.excluded_attacks.push_back(r.attack);
        pe.warnings.push_back("attack '" + r.attack + "' is inapplicable on " +
                              std::to_string(r.count(Outcome::inapplicable)) +
                              " example(s); aggregation is restricted to the remaining attacks");
      }
    }
    if (runs.empty()) pe.warnings.push_back("empty attack list: only clean accuracy is reported");
    if (!complete.empty()) {
      pe.available = true;
      pe.aggregate = aggregate_per_example(complete);
    }
  }

  // Shared work for several checks.
  std::optional<AttackRun> min_run;
  auto minimal_distortion = [&]() -> const AttackRun& {
    if (!min_run) {
      AttackSpec spec = pgd_spec;
      for (const auto& a : c.attacks)
        if (a.type == "min_distortion") spec = a;
      spec.type = "min_distortion";
      spec.cfg.eps_max = std::numeric_limits<double>::infinity();
      min_run = run_attack(*model, data, correct, "min_distortion", tm, make_example_attack(spec, c.goal, grid),
                           diag_stream("min_distortion"), jobs);
    }
    return *min_run;
  };
  std::vector<AttackRun> pgd_grid;
  auto pgd_grid_runs = [&]() -> const std::vector<AttackRun>& {
    if (pgd_grid.empty())
      for (std::size_t k = 0; k < c.sanity.grid.size(); ++k)
        pgd_grid.push_back(run_attack(*model, data, correct, pgd_spec.name, tm.with_epsilon(c.sanity.grid[k]),
                                      pgd_attack, diag_stream("grid:pgd").fork(k), jobs));
    return pgd_grid;
  };

  // Curves.
  if (opt.mode != RunMode::sanity) {
    report.curves.push_back(curve_from_min_distortion(minimal_distortion()));
    report.curves.back().attack = "min_distortion";
    if (c.curve_grid) {
      std::vector<AttackRun> rs;
      for (std::size_t k = 0; k < c.curve_grid->size(); ++k)
        rs.push_back(run_attack(*model, data, correct, pgd_spec.name, tm.with_epsilon((*c.curve_grid)[k]), pgd_attack,
                                diag_stream("curve:pgd").fork(k), jobs));
      report.curves.push_back(curve_from_grid(rs));
    }
  }
  if (opt.mode == RunMode::evaluate) {
    std::vector<double> worst;
    const AttackRun* loss_source = nullptr;
    for (const auto& r : runs)
      if (r.white_box && r.complete() && !loss_source) loss_source = &r;
    if (loss_source)
      for (std::size_t i = 0; i < loss_source->size(); ++i)
        if (loss_source->results[i].final_loss) worst.push_back(*loss_source->results[i].final_loss);
    const auto dists = detail::min_distances(minimal_distortion());
    report.per_example.risk = adversarial_risk(worst, dists);

    // ROC for models that expose an abstain score.
    Rng score_rng = diag_stream("roc");
    if (!data.inputs.empty() && model->abstain_score(data.inputs[0], &score_rng) && !runs.empty()) {
      std::vector<Vec> clean_x, adv_x;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (!correct[i] || runs[0].outcomes[i] == Outcome::inapplicable) continue;
        clean_x.push_back(data.inputs[i]);
        adv_x.push_back(runs[0].results[i].final_x);
      }
      if (auto roc = build_roc(*model, clean_x, adv_x, score_rng)) report.roc = RocSummary{runs[0].attack, *roc};
    }
  }

  // Diagnostics, in the order of the enabled list.
  for (const auto& id : enabled) {
    Verdict v;
    if (id == check_id::iterative_vs_single) {
      if (tm.p != Norm::linf) {
        v.check_id = id;
        v.status = Status::inapplicable;
        v.summary = "single-step baseline is defined for l-infinity only";
      } else {
        AttackSpec fg;
        fg.name = fg.type = "fgsm";
        fg.cfg.loss = pgd_spec.cfg.loss;
        const ExampleAttack fgsm_attack = make_example_attack(fg, c.goal, grid);
        std::vector<AttackRun> singles;
        for (std::size_t k = 0; k < c.sanity.grid.size(); ++k)
          singles.push_back(run_attack(*model, data, correct, "fgsm", tm.with_epsilon(c.sanity.grid[k]), fgsm_attack,
                                       diag_stream("grid:fgsm").fork(k), jobs));
        const auto& its = pgd_grid_runs();
        v = check_iterative_vs_single(std::span<const AttackRun>(its), std::span<const AttackRun>(singles));
      }
    } else if (id == check_id::budget_monotone) {
      const AccuracyCurve curve = curve_from_grid(pgd_grid_runs());
      v = check_budget_monotonicity(curve.points);
      v.evidence["curve"] = to_json(curve);
    } else if (id == check_id::high_distortion_floor) {
      v = check_high_distortion_floor(*model, data, tm, pgd_attack, diag_stream(id), jobs, votes);
    } else if (id == check_id::unbounded_total) {
      v = check_unbounded_reaches_total(minimal_distortion());
    } else if (id == check_id::whitebox_dominance) {
      std::vector<AttackRun> white, black;
      for (const auto& r : runs) (r.white_box ? white : black).push_back(r);
      v = check_whitebox_dominance(white, black);
      std::size_t flagged = 0, attacked = 0;
      for (const auto& r : white)
        for (std::size_t i = 0; i < r.size(); ++i)
          if (r.outcomes[i] == Outcome::success || r.outcomes[i] == Outcome::failure) {
            ++attacked;
            flagged += r.results[i].has_flag("zero_gradient");
          }
      v.evidence["zero_gradient_fraction"] = attacked ? num(static_cast<double>(flagged) / attacked) : Json(nullptr);
    } else if (id == check_id::convergence_doubling) {
      const std::size_t n = c.sanity.convergence_iterations.value_or(pgd_spec.cfg.iterations);
      const Rng stream = diag_stream(id);
      v = check_convergence_doubling(
          [&](std::size_t iterations) {
            AttackSpec s = pgd_spec;
            s.cfg.iterations = iterations;
            return run_attack(*model, data, correct, s.name, tm, make_example_attack(s, c.goal, grid), stream, jobs);
          },
          n);
    } else if (id == check_id::fixed_randomness) {
      Rng fix = diag_stream(id);
      const Rng stream = diag_stream(std::string(id) + ":attack");
      v = check_fixed_randomness(model, [&](const Classifier& m) {
        const auto ok = clean_correctness(m, data, root.fork(stream_id("clean")).seed(), votes, jobs);
        return run_attack(m, data, ok, pgd_spec.name, tm, pgd_attack, stream, jobs);
      }, fix);
    } else if (id == check_id::ablation) {
      const Rng stream = diag_stream(id);
      v = ablation_check(model, [&](const Classifier& m) {
        const auto ok = clean_correctness(m, data, root.fork(stream_id("clean")).seed(), votes, jobs);
        return run_attack(m, data, ok, pgd_spec.name, tm, pgd_attack, stream, jobs);
      }, c.sanity.ablation_floor);
    } else if (id == check_id::per_example) {
      v.check_id = id;
      const PerExampleSummary& pe = report.per_example;
      if (runs.empty()) {
        v.status = Status::inconclusive;
        v.summary = "empty attack list: only clean accuracy is reported";
      } else if (!pe.available) {
        v.status = Status::inconclusive;
        v.summary = "no attack ran on every example; per-example aggregation unavailable";
      } else {
        v.status = pe.excluded_attacks.empty() ? Status::pass : Status::inconclusive;
        v.summary = pe.excluded_attacks.empty()
                        ? "per-example aggregation over the complete attack matrix"
                        : "per-example aggregation restricted: some attacks were inapplicable";
      }
      v.evidence = {{"attacks", pe.attacks}, {"excluded_attacks", pe.excluded_attacks}, {"warnings", pe.warnings}};
      if (pe.available) {
        v.evidence["per_example_success"] = num(pe.aggregate.per_example_success);
        v.evidence["per_example_accuracy"] = num(pe.aggregate.per_example_accuracy);
      }
    }
    v.evidence["seed"] = c.seed;
    report.diagnostics.push_back(std::move(v));
  }

  // Meta.
  std::size_t total_queries = 0;
  Json per_attack = Json::object();
  for (const auto& a : report.attacks) {
    std::size_t q = 0;
    for (const auto& e : a.examples) q += e.queries + e.verify_queries;
    per_attack[a.name] = q;
    total_queries += q;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  report.meta = {{"tool", kToolName},
                 {"version", kToolVersion},
                 {"seed", c.seed},
                 {"success_convention", kSuccessConvention},
                 {"reference", refs.info},
                 {"model_randomness", model->randomness() ? Json(model->randomness()->distribution) : Json(nullptr)},
                 {"queries", {{"per_attack", per_attack}, {"total", total_queries}}},
                 {"timing", {{"wall_seconds", seconds}, {"finished_at", stamp}, {"jobs", jobs}}}};
  return report;
}

// Exit status for the CLI: 2 when diagnostics failed and the config asks
// for a hard failure.
inline int exit_status(const EvaluationReport& r, bool fail_on_diagnostics) {
  return fail_on_diagnostics && r.has_failed_diagnostic() ? 2 : 0;
}

// ---------------------------------------------------------------------------
// Single predictions

struct Classification {
  std::string model;
  std::size_t prediction = kAbstain;
  bool abstained = false;
  std::optional<std::uint64_t> noise_seed;  // set for randomized models
};

// Input file: a JSON array, or comma/whitespace separated numbers (a header
// line starting with "f0" is skipped).
inline Vec read_input_vector(const std::string& path) {
  const std::string text = detail::read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    try {
      return Json::parse(text).get<Vec>();
    } catch (const Json::exception& e) {
      throw FormatError(std::string("input is not a JSON number array: ") + e.what(), 0);
    }
  }
  Vec x;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    std::string cleaned = line;
    std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
    std::istringstream cells(cleaned);
    std::string cell;
    if (cleaned.find("f0") != std::string::npos) {
      offset += line.size() + 1;
      continue;
    }
    while (cells >> cell) {
      try {
        x.push_back(parse_number(cell, "input"));
      } catch (const ArgumentError& e) {
        throw FormatError(e.what(), offset);
      }
    }
    offset += line.size() + 1;
  }
  if (x.empty()) throw FormatError("input file holds no numbers", 0);
  return x;
}

inline ZooBases load_bases(const std::filesystem::path& dir, const std::string& model_id, double lo = 0.0,
                           double hi = 1.0) {
  ZooBases b;
  b.box_lo = lo;
  b.box_hi = hi;
  const std::string base = split(model_id, '+').front();
  if (base == "mlp") b.mlp = load_params((dir / "mlp.agmp").string());
  else if (base == "linear") b.linear = load_params((dir / "linear.agmp").string());
  return b;
}

inline Classification classify(const std::string& model_id, const ZooBases& bases, const Vec& x, std::uint64_t seed) {
  const ClassifierPtr model = make_zoo_model(model_id, bases);
  if (x.size() != model->input_dim())
    throw ArgumentError("input has " + std::to_string(x.size()) + " features, model expects " +
                        std::to_string(model->input_dim()));
  Classification c;
  c.model = model->id();
  Rng noise = Rng(seed).fork(stream_id("classify"));
  if (model->randomness()) c.noise_seed = noise.seed();
  c.prediction = model->predict(x, &noise);
  c.abstained = c.prediction == kAbstain;
  return c;
}

inline Json to_json(const Classification& c) {
  return Json{{"model", c.model},
              {"prediction", c.abstained ? Json(nullptr) : Json(c.prediction)},
              {"abstain", c.abstained},
              {"noise_seed", c.noise_seed ? Json(*c.noise_seed) : Json(nullptr)}};
}

// Trains (or loads) the reference bases named by the config and saves them
// as <dir>/mlp.agmp and <dir>/linear.agmp.
inline Json train_reference(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const Rng root(c.seed);
  const ReferenceModels refs = build_references(c, root);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  Json out = refs.info;
  if (refs.bases.mlp) {
    save_params((dir / "mlp.agmp").string(), *refs.bases.mlp);
    out["mlp"] = (dir / "mlp.agmp").string();
  }
  if (refs.bases.linear) {
    save_params((dir / "linear.agmp").string(), *refs.bases.linear);
    out["linear"] = (dir / "linear.agmp").string();
  }
  return out;
}

}  // namespace advcheck
