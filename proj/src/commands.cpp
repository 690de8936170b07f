#include "ebjdat/commands.hpp"

#include <fstream>

#include "ebjdat/errors.hpp"

namespace ebjdat {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void echo_config(const fs::path& dir, const std::string& command, ordered_json args,
                 const Checkpoint& ck) {
  ordered_json j;
  j["command"] = command;
  j["args"] = std::move(args);
  j["run"] = run_config_to_json(ck.config, &ck.state.model.spec());
  write_text(dir / (command + "_config.json"), j.dump(2) + "\n");
}

ordered_json attack_json(const AttackConfig& a) {
  return {{"epsilon", a.epsilon},       {"steps", a.steps},
          {"step_size", a.alpha()},     {"random_start", a.random_start},
          {"seed", a.seed}};
}

// Every training setting except the epoch budget and output location must
// match for a resume to continue the same run.
void check_resumable(const RunConfig& cfg, const RunConfig& saved) {
  RunConfig a = cfg, b = saved;
  a.train.epochs = b.train.epochs = 0;
  a.output_dir = b.output_dir = "";
  a.layer_dims = b.layer_dims = {};
  if (!(a == b)) {
    throw CheckpointError("resume checkpoint was written by a different configuration");
  }
}

Checkpoint load_for_command(const fs::path& path) { return load_checkpoint(path); }

}  // namespace

SampleInit parse_sample_init(const std::string& s) {
  if (s == "uniform") return SampleInit::kUniform;
  if (s == "informative") return SampleInit::kInformative;
  if (s == "buffer") return SampleInit::kBuffer;
  throw ConfigError("init must be 'uniform', 'informative' or 'buffer', got '" + s + "'");
}

// ---------------------------------------------------------------------------
// train

TrainOutcome run_training(const RunConfig& cfg, const std::optional<fs::path>& resume) {
  cfg.validate();
  const DataSplits splits = load_splits(cfg.data);
  const MlpSpec spec = cfg.mlp_spec(splits.train.dim(), splits.train.num_classes);

  std::optional<Trainer> trainer;
  if (resume) {
    Checkpoint ck = load_checkpoint(*resume);
    check_resumable(cfg, ck.config);
    if (!(ck.state.model.spec() == spec)) {
      throw CheckpointError("resume checkpoint has a different model shape");
    }
    trainer.emplace(cfg.train, std::move(ck.state));
  } else {
    trainer.emplace(cfg.train, spec);
  }

  const fs::path dir = cfg.output_dir;
  ensure_dir(dir);
  const std::string config_json = run_config_to_json(cfg, &spec).dump(2);
  write_text(dir / "config.json", config_json + "\n");

  auto snapshot = [&](const Trainer& t) {
    return encode_checkpoint(Checkpoint{kSchemaVersion, config_json, cfg, t.state()});
  };
  auto write_bytes = [&](const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
  };

  std::vector<std::uint8_t> last_good = snapshot(*trainer);
  const FitResult res = fit(*trainer, splits.train, [&](const Trainer& t, const EpochRecord& r) {
    last_good = snapshot(t);
    write_bytes(dir / ("checkpoint_epoch_" + std::to_string(r.epoch) + ".ebjd"), last_good);
  });

  TrainOutcome out;
  out.output_dir = dir;
  out.checkpoint = dir / "checkpoint.ebjd";
  out.aborted_epoch = res.aborted_epoch;
  out.mode = cfg.train.mode_label();
  out.epochs_completed = trainer->state().epochs.size();
  write_bytes(out.checkpoint, last_good);
  write_text(dir / "train_log.csv", training_log_csv(trainer->state().epochs));
  return out;
}

TrainOutcome cmd_train(const TrainRequest& req) {
  RunConfig cfg = load_run_config(req.config_path);
  if (req.seed) cfg.apply_seed(*req.seed);
  if (req.output_dir) cfg.output_dir = req.output_dir->string();
  return run_training(cfg, req.resume);
}

// ---------------------------------------------------------------------------
// shared resolution

Dataset resolve_dataset(const RunConfig& cfg, const std::string& data) {
  DataSplits splits = load_splits(cfg.data);
  if (data == "train") return std::move(splits.train);
  if (data == "test") return std::move(splits.test);
  if (data.empty()) throw ConfigError("data must be 'train', 'test' or a CSV path");
  return load_csv(data, cfg.data.label_column, &splits.train);
}

AttackConfig resolve_attack(const RunConfig& cfg, std::optional<double> eps,
                            std::optional<int> steps, std::optional<std::uint64_t> seed) {
  AttackConfig a = cfg.train.attack;
  // Evaluation is PGD-20 unless told otherwise; the step size always follows
  // the budget rule.
  a.step_size = 0.0;
  a.steps = steps.value_or(kEvalSteps);
  if (eps) a.epsilon = *eps;
  if (seed) a.seed = *seed;
  a.add_noise = false;
  a.validate();
  return a;
}

// ---------------------------------------------------------------------------
// eval

EvalMetrics cmd_eval(const EvalRequest& req, std::string* json) {
  const Checkpoint ck = load_for_command(req.checkpoint);
  const EnergyModel& model = ck.state.model;
  const Dataset ds = resolve_dataset(ck.config, req.data);
  const AttackConfig atk = resolve_attack(ck.config, req.eps, req.steps, req.seed);

  const Tensor adv = pgd_ce_attack(model, ds.x, ds.y, atk);
  const GapStats gap = one_to_one_energy_gap(model, ds.x, adv);
  EvalMetrics m{accuracy(model, ds.x, ds.y), accuracy(model, adv, ds.y), gap.mean, gap.variance};

  ordered_json j;
  j["acc"] = m.acc;
  j["robust_acc"] = m.robust_acc;
  j["gap_mean"] = m.gap_mean;
  j["gap_var"] = m.gap_var;
  j["n"] = ds.size();
  j["attack"] = attack_json(atk);
  const std::string text = j.dump(2) + "\n";
  if (json) *json = text;

  if (req.output_dir) {
    ensure_dir(*req.output_dir);
    write_text(*req.output_dir / "eval.json", text);
    echo_config(*req.output_dir, "eval",
                {{"checkpoint", req.checkpoint.string()}, {"data", req.data},
                 {"attack", attack_json(atk)}},
                ck);
  }
  return m;
}

// ---------------------------------------------------------------------------
// sample

Tensor generate_samples(const EnergyModel& model, const Dataset& train,
                        const ReplayBuffer& buffer, const RunConfig& cfg, std::size_t n,
                        SampleInit init, int steps, double sigma, std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample: n must be >= 1");
  if (steps < 0) throw ConfigError("sample: steps must be >= 0");
  if (sigma < 0) throw ConfigError("sample: sigma must be >= 0");
  const SamplerConfig& sc = cfg.train.sampler;
  Rng rng = Rng::keyed({seed, 0x73616d70});
  Tensor start;
  switch (init) {
    case SampleInit::kUniform:
      start = uniform_box(n, model.dim(), sc.box, rng);
      break;
    case SampleInit::kInformative:
      start = informative_init(train.x, n, sigma, rng, sc.box);
      break;
    case SampleInit::kBuffer: {
      if (buffer.dim() != model.dim()) throw DimensionError("sample: buffer dim != model dim");
      const std::size_t cap = buffer.capacity();
      std::vector<std::size_t> perm(cap);
      for (std::size_t i = 0; i < cap; ++i) perm[i] = i;
      std::vector<std::size_t> slots(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = i % cap;
        if (r == 0) {
          for (std::size_t j = cap - 1; j > 0; --j) std::swap(perm[j], perm[rng.index(j + 1)]);
        }
        slots[i] = perm[r];
      }
      start = buffer.entries().gather_rows(slots);
      break;
    }
  }
  return run_chain(model, std::move(start), sc, steps, rng);
}

Tensor cmd_sample(const SampleRequest& req) {
  const Checkpoint ck = load_for_command(req.checkpoint);
  const RunConfig& cfg = ck.config;
  const SampleInit init = parse_sample_init(req.init);
  const int steps = req.steps.value_or(cfg.train.sampler.steps);
  const double sigma = req.sigma.value_or(cfg.train.sampler.init_noise_sigma);
  const std::uint64_t seed = req.seed.value_or(cfg.train.sampler.seed);
  const DataSplits splits = load_splits(cfg.data);
  Tensor samples =
      generate_samples(ck.state.model, splits.train, ck.state.buffer, cfg, req.n, init, steps,
                       sigma, seed);

  if (req.out) {
    Dataset ds;
    ds.x = samples;
    ds.raw = splits.train.norm.invert(samples);
    ds.y = ck.state.model.predict(samples);
    ds.num_classes = splits.train.num_classes;
    ds.norm = splits.train.norm;
    const fs::path dir = req.out->parent_path();
    ensure_dir(dir);
    save_csv(ds, *req.out);
    echo_config(dir.empty() ? fs::path(".") : dir, "sample",
                {{"checkpoint", req.checkpoint.string()},
                 {"n", req.n},
                 {"init", req.init},
                 {"steps", steps},
                 {"sigma", sigma},
                 {"seed", seed},
                 {"out", req.out->string()}},
                ck);
  }
  return samples;
}

// ---------------------------------------------------------------------------
// report

EnergyReport cmd_report(const ReportRequest& req) {
  const Checkpoint ck = load_for_command(req.checkpoint);
  const RunConfig& cfg = ck.config;
  const EnergyModel& model = ck.state.model;
  const DataSplits splits = load_splits(cfg.data);
  const Dataset ds = resolve_dataset(cfg, req.data);
  const AttackConfig atk = resolve_attack(cfg, req.eps, req.steps, req.seed);
  const SampleInit init = parse_sample_init(req.gen_init);
  const int gen_steps = req.gen_steps.value_or(cfg.train.sampler.steps);
  const std::size_t n_gen = req.n_gen == 0 ? ds.size() : req.n_gen;
  const std::uint64_t gen_seed = req.seed.value_or(cfg.train.sampler.seed);

  const Tensor adv = pgd_ce_attack(model, ds.x, ds.y, atk);
  const Tensor gen = generate_samples(model, splits.train, ck.state.buffer, cfg, n_gen, init,
                                      gen_steps, cfg.train.sampler.init_noise_sigma, gen_seed);

  EnergyReport rep = energy_histograms(model, ds.x, ds.y, adv, gen, req.bins);
  rep.acc = accuracy(model, ds.x, ds.y);
  rep.robust_acc = accuracy(model, adv, ds.y);
  rep.mmd_gen = mmd_rbf(gen, splits.test.x);
  rep.config = {{"checkpoint", req.checkpoint.string()},
                {"data", req.data},
                {"bins", req.bins},
                {"attack", attack_json(atk)},
                {"gen", {{"n", n_gen}, {"init", req.gen_init}, {"steps", gen_steps},
                         {"seed", gen_seed}}},
                {"mode", cfg.train.mode_label()}};

  if (req.output_dir) {
    ensure_dir(*req.output_dir);
    report_export(rep, *req.output_dir / "report.json");
    echo_config(*req.output_dir, "report", rep.config, ck);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// attack

Dataset cmd_attack(const AttackRequest& req) {
  const Checkpoint ck = load_for_command(req.checkpoint);
  const Dataset ds = resolve_dataset(ck.config, req.data);
  const AttackConfig atk = resolve_attack(ck.config, req.eps, req.steps, req.seed);

  Dataset out = ds;
  out.x = pgd_ce_attack(ck.state.model, ds.x, ds.y, atk);
  out.raw = ds.norm.invert(out.x);
  const fs::path dir = req.out.parent_path();
  ensure_dir(dir);
  save_csv(out, req.out);
  echo_config(dir.empty() ? fs::path(".") : dir, "attack",
              {{"checkpoint", req.checkpoint.string()},
               {"data", req.data},
               {"attack", attack_json(atk)},
               {"out", req.out.string()}},
              ck);
  return out;
}

}  // namespace ebjdat
