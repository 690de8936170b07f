// ebjdat command-line front end. Talks to the library only through the C
// interface.

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ebjdat/ebjdat.h"

namespace {

struct AttackFlags {
  std::string ckpt;
  std::string data = "test";
  std::optional<double> eps;
  std::optional<int> steps;
};

void add_attack_flags(CLI::App* cmd, AttackFlags& f) {
  cmd->add_option("--ckpt", f.ckpt, "Checkpoint file")->required();
  cmd->add_option("--data", f.data, "train, test, or a CSV path")->capture_default_str();
  cmd->add_option("--eps", f.eps, "l-inf attack budget");
  cmd->add_option("--steps", f.steps, "Attack steps");
}

// EBJD_SEED overrides every seed.
std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("EBJD_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (*end != '\0' || *v == '-') {
    std::fprintf(stderr, "error: EBJD_SEED must be an unsigned integer\n");
    std::exit(EBJD_CONFIG_ERROR);
  }
  return s;
}

ebjd_attack_args to_c(const AttackFlags& f, const std::optional<std::uint64_t>& seed) {
  ebjd_attack_args a{};
  a.checkpoint = f.ckpt.c_str();
  a.data = f.data.c_str();
  a.has_eps = f.eps.has_value();
  a.eps = f.eps.value_or(0.0);
  a.has_steps = f.steps.has_value();
  a.steps = f.steps.value_or(0);
  a.has_seed = seed.has_value();
  a.seed = seed.value_or(0);
  return a;
}

int finish(ebjd_status s, char* text) {
  if (text != nullptr) {
    std::fputs(text, stdout);
    ebjd_free_string(text);
  }
  if (s != EBJD_OK) std::fprintf(stderr, "error: %s\n", ebjd_last_error());
  return static_cast<int>(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-based joint distribution adversarial training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ebjd_version()));

  std::string config, resume, out_dir;
  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("--config", config, "Run config (JSON)")->required();
  train->add_option("--resume", resume, "Continue from this checkpoint");
  train->add_option("--out", out_dir, "Output directory (overrides the config)");

  AttackFlags eval_flags;
  std::string eval_out = "eval";
  auto* eval = app.add_subcommand("eval", "Clean and PGD accuracy, energy gap");
  add_attack_flags(eval, eval_flags);
  eval->add_option("--out", eval_out, "Output directory")->capture_default_str();

  std::string s_ckpt, s_init = "uniform", s_out = "samples.csv";
  std::size_t s_n = 100;
  std::optional<int> s_steps;
  std::optional<double> s_sigma;
  auto* sample = app.add_subcommand("sample", "Draw SGLD samples");
  sample->add_option("--ckpt", s_ckpt, "Checkpoint file")->required();
  sample->add_option("--n", s_n, "Number of samples")->capture_default_str();
  sample->add_option("--init", s_init, "uniform, informative or buffer")
      ->check(CLI::IsMember({"uniform", "informative", "buffer"}))
      ->capture_default_str();
  sample->add_option("--steps", s_steps, "SGLD steps");
  sample->add_option("--sigma", s_sigma, "Noise for informative init");
  sample->add_option("--out", s_out, "Output CSV")->capture_default_str();

  AttackFlags rep_flags;
  int bins = 30;
  std::size_t n_gen = 0;
  std::string gen_init = "uniform", rep_out = "report";
  std::optional<int> gen_steps;
  auto* report = app.add_subcommand("report", "Energy histograms and diagnostics");
  add_attack_flags(report, rep_flags);
  report->add_option("--bins", bins, "Histogram bins")->capture_default_str();
  report->add_option("--n-gen", n_gen, "Generated samples (0: match data)");
  report->add_option("--gen-init", gen_init, "uniform, informative or buffer")
      ->check(CLI::IsMember({"uniform", "informative", "buffer"}))
      ->capture_default_str();
  report->add_option("--gen-steps", gen_steps, "SGLD steps for generation");
  report->add_option("--out", rep_out, "Output directory")->capture_default_str();

  AttackFlags atk_flags;
  std::string atk_out = "adv.csv";
  auto* attack = app.add_subcommand("attack", "Write PGD adversarial points");
  add_attack_flags(attack, atk_flags);
  attack->add_option("--out", atk_out, "Output CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : EBJD_CONFIG_ERROR;
  }

  const std::optional<std::uint64_t> seed = env_seed();
  char* text = nullptr;

  if (*train) {
    ebjd_train_args a{};
    a.config_path = config.c_str();
    a.resume = resume.empty() ? nullptr : resume.c_str();
    a.has_seed = seed.has_value();
    a.seed = seed.value_or(0);
    a.output_dir = out_dir.empty() ? nullptr : out_dir.c_str();
    const ebjd_status s = ebjd_train(&a, &text);
    return finish(s, text);
  }
  if (*eval) {
    const ebjd_attack_args a = to_c(eval_flags, seed);
    const ebjd_status s = ebjd_eval(&a, eval_out.c_str(), &text);
    return finish(s, text);
  }
  if (*sample) {
    ebjd_sample_args a{};
    a.checkpoint = s_ckpt.c_str();
    a.n = s_n;
    a.init = s_init.c_str();
    a.has_steps = s_steps.has_value();
    a.steps = s_steps.value_or(0);
    a.has_sigma = s_sigma.has_value();
    a.sigma = s_sigma.value_or(0.0);
    a.has_seed = seed.has_value();
    a.seed = seed.value_or(0);
    a.out_csv = s_out.c_str();
    const ebjd_status s = ebjd_sample(&a);
    if (s == EBJD_OK) std::printf("wrote %zu samples to %s\n", s_n, s_out.c_str());
    return finish(s, nullptr);
  }
  if (*report) {
    ebjd_report_args a{};
    a.attack = to_c(rep_flags, seed);
    a.bins = bins;
    a.n_gen = n_gen;
    a.gen_init = gen_init.c_str();
    a.has_gen_steps = gen_steps.has_value();
    a.gen_steps = gen_steps.value_or(0);
    a.output_dir = rep_out.c_str();
    const ebjd_status s = ebjd_report(&a, nullptr);
    if (s == EBJD_OK) std::printf("wrote %s/report.json\n", rep_out.c_str());
    return finish(s, nullptr);
  }
  const ebjd_attack_args a = to_c(atk_flags, seed);
  const ebjd_status s = ebjd_attack(&a, atk_out.c_str());
  if (s == EBJD_OK) std::printf("wrote %s\n", atk_out.c_str());
  return finish(s, nullptr);
}
