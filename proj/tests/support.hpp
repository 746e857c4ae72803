#pragma once

// Shared fixtures for the unit tests.

#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <string>

#include "advcheck/advcheck.hpp"

namespace advcheck::testing {

inline ClassifierPtr linear_model(const Vec& w, double b) { return make_reference("linear", make_linear_binary(w, b)); }

// Reference victim: relu MLP (hidden 16) on well separated 2-D Gaussians.
struct Victim {
  MlpParams params;
  Dataset train;
  Dataset test;
};

inline const Victim& gauss2_victim() {
  static const Victim v = [] {
    Victim out;
    Rng root(7);
    Rng data = root.fork(1);
    Rng held = root.fork(4);
    Rng init = root.fork(3);
    Rng sgd = root.fork(2);
    out.train = load_dataset("gauss2:400:0.05:0.4", data);
    out.test = load_dataset("gauss2:200:0.05:0.4", held);
    TrainOptions opt;
    opt.epochs = 100;
    out.params = sgd_train(init_mlp(2, 16, 2, Activation::relu, init), out.train.inputs, out.train.labels, opt, sgd);
    return out;
  }();
  return v;
}

inline ZooBases victim_bases() {
  ZooBases b;
  b.mlp = gauss2_victim().params;
  return b;
}

// Counts every call into the wrapped model.
class CountingClassifier final : public Classifier {
 public:
  explicit CountingClassifier(ClassifierPtr inner) : inner_(std::move(inner)) {}

  std::string id() const override { return inner_->id(); }
  std::size_t num_classes() const override { return inner_->num_classes(); }
  std::size_t input_dim() const override { return inner_->input_dim(); }
  std::optional<RandomnessSpec> randomness() const override { return inner_->randomness(); }

  Vec logits(const Vec& x, Rng* noise = nullptr) const override {
    ++calls_;
    return inner_->logits(x, noise);
  }
  std::size_t predict(const Vec& x, Rng* noise = nullptr) const override {
    ++calls_;
    return inner_->predict(x, noise);
  }
  std::optional<InputGradient> input_grad(const Vec& x, const LogitObjective& objective,
                                          Rng* noise = nullptr) const override {
    ++calls_;
    return inner_->input_grad(x, objective, noise);
  }

  std::size_t calls() const { return calls_; }
  void reset() { calls_ = 0; }

 private:
  ClassifierPtr inner_;
  mutable std::atomic<std::size_t> calls_{0};
};

struct CliResult {
  int code = -1;
  std::string output;
};

inline CliResult run_cli(const std::string& args) {
  CliResult r;
  const std::string cmd = std::string(ADVCHECK_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("advcheck_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace advcheck::testing
