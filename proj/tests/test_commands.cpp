#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "ebjdat/checkpoint.hpp"
#include "ebjdat/commands.hpp"
#include "ebjdat/errors.hpp"
#include "support.hpp"

using namespace ebjdat;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"({
  "seed": 2,
  "model": {"hidden": [16]},
  "train": {"epochs": 2, "batch_size": 32, "optimizer": "adam", "lr": 0.01},
  "sampler": {"buffer_size": 64, "steps": 5},
  "attack": {"steps": 2},
  "data": {"classes": 3, "n_per_class": 40, "test_per_class": 20}
})";

RunConfig config_in(const testing::TempDir& dir, const std::string& sub, int epochs = 2) {
  RunConfig c = parse_run_config(nlohmann::ordered_json::parse(kConfig));
  c.output_dir = (dir / sub).string();
  c.train.epochs = epochs;
  return c;
}

std::size_t lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("train writes checkpoints, the log and the config echo") {
  testing::TempDir dir("cmd_train");
  testing::write_file(dir / "cfg.json", kConfig);
  TrainRequest req;
  req.config_path = dir / "cfg.json";
  req.output_dir = dir / "run";
  const TrainOutcome out = cmd_train(req);
  CHECK(out.epochs_completed == 2);
  CHECK(out.mode == "EB-JDAT");
  CHECK_FALSE(out.aborted_epoch.has_value());
  CHECK(fs::exists(dir / "run" / "checkpoint.ebjd"));
  CHECK(fs::exists(dir / "run" / "checkpoint_epoch_1.ebjd"));
  CHECK(testing::read_file(dir / "run" / "checkpoint_epoch_2.ebjd") ==
        testing::read_file(out.checkpoint));
  CHECK(lines(testing::read_file(dir / "run" / "train_log.csv")) == 3);
  const auto echo = nlohmann::ordered_json::parse(testing::read_file(dir / "run" / "config.json"));
  CHECK(echo["mode"] == "EB-JDAT");
  CHECK(parse_run_config(echo).train == load_run_config(dir / "cfg.json").train);

  // Same request, same bytes.
  const std::string first = testing::read_file(out.checkpoint);
  cmd_train(req);
  CHECK(testing::read_file(out.checkpoint) == first);
}

TEST_CASE("zero epochs still yields a checkpoint") {
  testing::TempDir dir("cmd_zero");
  const TrainOutcome out = run_training(config_in(dir, "z", 0));
  CHECK(out.epochs_completed == 0);
  CHECK(fs::exists(out.checkpoint));
  CHECK(testing::read_file(dir / "z" / "train_log.csv") ==
        "epoch,l_gen,l_adv_gap,l_ce,total,clean_acc,gap_mean,gap_var,diverged\n");
  const Checkpoint ck = load_checkpoint(out.checkpoint);
  CHECK(ck.state.model.params() == init_params(ck.state.model.spec()));
}

TEST_CASE("mode label in the echo") {
  testing::TempDir dir("cmd_mode");
  RunConfig c = config_in(dir, "at", 1);
  c.train.w1 = c.train.w2 = 0;
  const TrainOutcome out = run_training(c);
  CHECK(out.mode == "AT-only");
  const auto echo = nlohmann::ordered_json::parse(testing::read_file(dir / "at" / "config.json"));
  CHECK(echo["mode"] == "AT-only");
}

TEST_CASE("resume continues the same run") {
  testing::TempDir dir("cmd_resume");
  const TrainOutcome full = run_training(config_in(dir, "full", 2));
  const TrainOutcome half = run_training(config_in(dir, "half", 1));
  RunConfig rest = config_in(dir, "rest", 2);
  const TrainOutcome resumed = run_training(rest, half.checkpoint);
  CHECK(resumed.epochs_completed == 2);
  const Checkpoint a = load_checkpoint(resumed.checkpoint), b = load_checkpoint(full.checkpoint);
  CHECK(a.state.model.params() == b.state.model.params());
  CHECK(a.state.buffer.entries() == b.state.buffer.entries());
  CHECK(a.state.rng == b.state.rng);
  CHECK(a.state.optimizer == b.state.optimizer);
  CHECK(a.state.progress == b.state.progress);
  CHECK(a.state.epochs == b.state.epochs);
  CHECK(testing::read_file(dir / "rest" / "train_log.csv") ==
        testing::read_file(dir / "full" / "train_log.csv"));

  RunConfig other = config_in(dir, "other", 2);
  other.train.lr = 0.5;
  CHECK_THROWS_AS(run_training(other, half.checkpoint), CheckpointError);
  CHECK_THROWS_AS(run_training(rest, dir / "missing.ebjd"), IoError);
}

TEST_CASE("divergence keeps the last good checkpoint") {
  testing::TempDir dir("cmd_div");
  RunConfig c = config_in(dir, "d", 3);
  c.train.divergence_threshold = 1e-12;
  const TrainOutcome out = run_training(c);
  REQUIRE(out.aborted_epoch.has_value());
  CHECK(*out.aborted_epoch == 1);
  CHECK(out.epochs_completed == 0);
  const Checkpoint ck = load_checkpoint(out.checkpoint);
  CHECK(ck.state.model.params() == init_params(ck.state.model.spec()));
}

TEST_CASE("eval, attack, sample and report on a trained checkpoint") {
  testing::TempDir dir("cmd_eval");
  const TrainOutcome run = run_training(config_in(dir, "run", 2));

  EvalRequest ev;
  ev.checkpoint = run.checkpoint;
  ev.output_dir = dir / "eval";
  std::string j1, j2;
  const EvalMetrics m = cmd_eval(ev, &j1);
  cmd_eval(ev, &j2);
  CHECK(j1 == j2);
  CHECK(testing::read_file(dir / "eval" / "eval.json") == j1);
  CHECK(fs::exists(dir / "eval" / "eval_config.json"));
  CHECK(m.robust_acc <= m.acc + 1e-12);
  const auto parsed = nlohmann::ordered_json::parse(j1);
  CHECK(parsed["n"] == 60);
  CHECK(parsed["attack"]["steps"] == 20);

  EvalRequest tiny = ev;
  tiny.output_dir.reset();
  tiny.eps = 1e-12;
  const EvalMetrics t = cmd_eval(tiny);
  CHECK(t.robust_acc == t.acc);
  EvalRequest bad = tiny;
  bad.eps = -1;
  CHECK_THROWS_AS(cmd_eval(bad), ConfigError);

  AttackRequest at;
  at.checkpoint = run.checkpoint;
  at.out = dir / "adv" / "adv.csv";
  const Dataset adv = cmd_attack(at);
  CHECK(adv.size() == 60);
  CHECK(lines(testing::read_file(at.out)) == 61);
  const Dataset clean = resolve_dataset(load_checkpoint(run.checkpoint).config, "test");
  for (std::size_t i = 0; i < adv.x.size(); ++i) {
    CHECK(std::abs(adv.x[i] - clean.x[i]) <= 0.1 + 1e-12);
  }

  SampleRequest sr;
  sr.checkpoint = run.checkpoint;
  sr.n = 25;
  sr.init = "informative";
  sr.steps = 0;
  sr.sigma = 0.0;
  sr.out = dir / "gen" / "samples.csv";
  const Tensor s = cmd_sample(sr);
  CHECK(s.rows() == 25);
  const Dataset train = resolve_dataset(load_checkpoint(run.checkpoint).config, "train");
  for (std::size_t i = 0; i < 25; ++i) {
    bool found = false;
    for (std::size_t r = 0; r < train.size() && !found; ++r) {
      found = s.at(i, 0) == train.x.at(r, 0) && s.at(i, 1) == train.x.at(r, 1);
    }
    CHECK(found);
  }
  const Dataset written = load_csv(sr.out.value(), "label");
  CHECK(written.size() == 25);
  CHECK(std::abs(written.raw.at(0, 0) - train.norm.invert(s).at(0, 0)) < 1e-12);
  CHECK(fs::exists(dir / "gen" / "sample_config.json"));
  sr.init = "buffer";
  sr.steps.reset();
  CHECK(cmd_sample(sr).rows() == 25);
  sr.init = "bogus";
  CHECK_THROWS_AS(cmd_sample(sr), ConfigError);

  ReportRequest rr;
  rr.checkpoint = run.checkpoint;
  rr.output_dir = dir / "rep";
  const EnergyReport rep = cmd_report(rr);
  CHECK(rep.e_clean.size() == 60);
  CHECK(rep.e_adv.size() == 60);
  CHECK(rep.e_gen.size() == 60);
  CHECK(rep.gap.mean == m.gap_mean);
  CHECK(rep.gap.variance == m.gap_var);
  CHECK(rep.acc == m.acc);
  CHECK(rep.config["mode"] == "EB-JDAT");
  const std::string first = testing::read_file(dir / "rep" / "report.json");
  const std::string csv = testing::read_file(dir / "rep" / "report_energies.csv");
  cmd_report(rr);
  CHECK(testing::read_file(dir / "rep" / "report.json") == first);
  CHECK(testing::read_file(dir / "rep" / "report_energies.csv") == csv);
  CHECK(fs::exists(dir / "rep" / "report_config.json"));

  const EnergyReport back = report_import(dir / "rep" / "report.json");
  CHECK(back.e_gen == rep.e_gen);
}
