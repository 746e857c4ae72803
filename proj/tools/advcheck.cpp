// advcheck: command-line front end.
//
//   advcheck train-reference --config cfg.json --out models/
//   advcheck classify --model mlp+noise:0.25 --models models/ --input x.csv [--seed N]
//   advcheck evaluate --config cfg.json [--seed N] [--out DIR] [--jobs N] [--attacks a,b]
//   advcheck sanity   --config cfg.json ...
//   advcheck curve    --config cfg.json ...
//
// Exit codes: 0 completed, 2 completed with failed diagnostics, 3 configuration
// error, 1 anything else.

#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "advcheck/advcheck.hpp"

namespace {

constexpr int kExitFailedDiagnostics = 2;
constexpr int kExitConfig = 3;

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t jobs = 1;
  std::vector<std::string> attacks;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "Experiment config (JSON)")->required();
  cmd->add_option("--seed", a.seed, "Override the config seed");
  cmd->add_option("--out", a.out, "Output directory (overrides output.dir)");
  cmd->add_option("--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--attacks", a.attacks, "Run only these attacks")->delimiter(',');
}

advcheck::ExperimentConfig prepare(const CommonArgs& a) {
  advcheck::ExperimentConfig c = advcheck::load_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (!a.out.empty()) c.out_dir = a.out;
  if (!a.attacks.empty()) advcheck::filter_attacks(c, a.attacks);
  return c;
}

int run(advcheck::RunMode mode, const CommonArgs& a) {
  advcheck::ExperimentConfig c = prepare(a);
  advcheck::RunOptions opt;
  opt.mode = mode;
  opt.jobs = a.jobs;
  const advcheck::EvaluationReport report = advcheck::run_evaluation(c, opt);
  const auto written = advcheck::emit_report(report, c.out_dir);
  std::cout << "clean accuracy " << report.clean.accuracy << " (" << report.clean.correct << "/" << report.clean.n
            << ")\n";
  for (const auto& at : report.attacks) {
    const auto r = at.as_run();
    std::cout << "attack " << at.name << ": success " << r.success_rate() << " over " << r.eligible() << "\n";
  }
  for (const auto& v : report.diagnostics)
    std::cout << advcheck::to_string(v.status) << "  " << v.check_id << "  " << v.summary << "\n";
  for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
  return advcheck::exit_status(report, c.fail_on_diagnostics) ? kExitFailedDiagnostics : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness evaluation checks"};
  app.require_subcommand(1);

  CommonArgs train_args;
  auto* train = app.add_subcommand("train-reference", "Train the reference linear and MLP models");
  train->add_option("--config", train_args.config, "Experiment config (JSON)")->required();
  train->add_option("--seed", train_args.seed, "Override the config seed");
  train->add_option("--out", train_args.out, "Directory for mlp.agmp / linear.agmp")->required();

  std::string model_id, models_dir = ".", input;
  std::uint64_t classify_seed = 0;
  auto* cls = app.add_subcommand("classify", "Classify one input end to end, wrappers included");
  cls->add_option("--model", model_id, "Model id, e.g. mlp+quantize:256")->required();
  cls->add_option("--models", models_dir, "Directory holding mlp.agmp / linear.agmp");
  cls->add_option("--input", input, "Input vector (JSON array or comma-separated)")->required();
  cls->add_option("--seed", classify_seed, "Seed for randomized models");

  CommonArgs eval_args, sanity_args, curve_args;
  auto* evaluate = app.add_subcommand("evaluate", "Full evaluation: attacks, aggregation, curves, diagnostics");
  add_common(evaluate, eval_args);
  auto* sanity = app.add_subcommand("sanity", "Sanity diagnostics only");
  add_common(sanity, sanity_args);
  auto* curve = app.add_subcommand("curve", "Accuracy-versus-budget curves only");
  add_common(curve, curve_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      const auto c = prepare(train_args);
      std::cout << advcheck::train_reference(c, train_args.out).dump(2) << "\n";
      return 0;
    }
    if (*cls) {
      const advcheck::ZooBases bases = advcheck::load_bases(models_dir, model_id);
      const advcheck::Vec x = advcheck::read_input_vector(input);
      std::cout << advcheck::to_json(advcheck::classify(model_id, bases, x, classify_seed)).dump() << "\n";
      return 0;
    }
    if (*evaluate) return run(advcheck::RunMode::evaluate, eval_args);
    if (*sanity) return run(advcheck::RunMode::sanity, sanity_args);
    if (*curve) return run(advcheck::RunMode::curve, curve_args);
  } catch (const advcheck::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const advcheck::NotFoundError& e) {
    std::cerr << "not found: " << e.what() << "\n";
    return kExitConfig;
  } catch (const advcheck::FormatError& e) {
    std::cerr << "format error at byte " << e.offset() << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const advcheck::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const advcheck::ArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
