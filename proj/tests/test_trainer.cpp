#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "ebjdat/data.hpp"
#include "ebjdat/errors.hpp"
#include "ebjdat/trainer.hpp"
#include "support.hpp"

using namespace ebjdat;

namespace {

MlpSpec small_spec(std::uint64_t seed = 3) {
  MlpSpec s;
  s.layer_dims = {2, 4, 2};
  s.seed = seed;
  return s;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 16;
  c.sampler.buffer_size = 64;
  c.sampler.steps = 3;
  c.attack.steps = 2;
  c.seed = 4;
  return c;
}

// Weighted objective from the plain-value loss functions.
double reference_total(const EnergyModel& m, const Tensor& x, const Labels& y, const Tensor& neg,
                       const Tensor& adv, const ObjectiveWeights& w, CeTarget t) {
  double total = 0;
  if (w.w1 > 0) total += w.w1 * loss_gen(m, x, neg);
  if (w.w2 > 0) total += w.w2 * loss_adv_gap(m, x, adv, 1.0);
  if (w.w3 > 0) total += w.w3 * loss_ce(m, x, adv, y, t);
  return total;
}

}  // namespace

TEST_CASE("objective gradients match finite differences") {
  const MlpSpec spec = small_spec();
  const EnergyModel model(spec);
  const Tensor x = testing::random_tensor({4, 2}, 10, -0.8, 0.8);
  const Tensor neg = testing::random_tensor({4, 2}, 11);
  Tensor adv = x;
  const Tensor delta = testing::random_tensor({4, 2}, 12, -0.1, 0.1);
  for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += delta[i];
  const Labels y = {0, 1, 1, 0};

  const ObjectiveWeights cases[] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}};
  for (const auto& w : cases) {
    for (CeTarget t : {CeTarget::kAdvOnly, CeTarget::kCleanPlusAdv, CeTarget::kCleanOnly}) {
      const ObjectiveResult r = compute_objective(model, x, y, neg, adv, w, t);
      CHECK(r.losses.total ==
            doctest::Approx(reference_total(model, x, y, neg, adv, w, t)).epsilon(1e-12));
      for (std::size_t p = 0; p < r.grads.size(); ++p) {
        auto f = [&](const Tensor& v) {
          Params params = model.params();
          params[p].value = v;
          return reference_total(EnergyModel(spec, params), x, y, neg, adv, w, t);
        };
        const auto num = testing::numeric_grad(f, model.params()[p].value);
        CHECK(testing::max_rel_err(r.grads[p].data(), num, 1e-6) < 1e-4);
      }
    }
  }
}

TEST_CASE("zero-weight terms are not required") {
  const EnergyModel model(small_spec());
  const Tensor x = testing::random_tensor({4, 2}, 1);
  const Labels y = {0, 1, 0, 1};
  const ObjectiveResult r = compute_objective(model, x, y, Tensor(), Tensor(), {0, 0, 1},
                                              CeTarget::kCleanOnly);
  CHECK(r.losses.l_gen == 0);
  CHECK(r.losses.l_ce == doctest::Approx(loss_ce(model, x, x, y, CeTarget::kCleanOnly)));
  CHECK_THROWS_AS(compute_objective(model, x, y, Tensor(), Tensor(), {1, 0, 0},
                                    CeTarget::kCleanOnly),
                  UsageError);
  CHECK_THROWS_AS(compute_objective(model, x, y, Tensor(), Tensor(), {0, 0, 1},
                                    CeTarget::kAdvOnly),
                  UsageError);
}

TEST_CASE("loss fixtures") {
  const EnergyModel model(small_spec());
  const Tensor a = testing::random_tensor({6, 2}, 2);
  const Tensor b = testing::random_tensor({6, 2}, 3);
  CHECK(loss_gen(model, a, a) == 0.0);
  CHECK(loss_gen(model, a, b) == doctest::Approx(-loss_gen(model, b, a)).epsilon(1e-14));
  CHECK(loss_adv_gap(model, a, a, 0.1) == 0.0);

  // Gradient of the generative term vanishes when both batches coincide.
  const ObjectiveResult r =
      compute_objective(model, a, {0, 0, 0, 0, 0, 0}, a, Tensor(), {1, 0, 0}, CeTarget::kCleanOnly);
  for (const auto& g : r.grads) {
    for (double v : g.data()) CHECK(std::abs(v) < 1e-15);
  }

  // Zero weights give equal logits, so cross-entropy is ln 2 for two classes.
  Params p = model.params();
  for (auto& t : p) std::fill(t.value.data().begin(), t.value.data().end(), 0.0);
  const EnergyModel flat(small_spec(), p);
  CHECK(loss_ce(flat, a, b, {0, 1, 1, 0, 1, 0}, CeTarget::kCleanPlusAdv) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(loss_ce(flat, a, b, {0, 1, 2, 0, 1, 0}, CeTarget::kCleanOnly), DomainError);
  CHECK_THROWS_AS(loss_adv_gap(model, a, b, 0.1), DomainError);
}

TEST_CASE("optimizer updates") {
  Params p = {{"w", Tensor::vector({1.0, -2.0})}};
  const std::vector<Tensor> g = {Tensor::vector({0.5, -1.0})};
  OptimizerState sgd;
  optimizer_update(p, g, 0.1, sgd);
  CHECK(p[0].value[0] == doctest::Approx(0.95));
  CHECK(p[0].value[1] == doctest::Approx(-1.9));
  CHECK(sgd.t == 1);

  // First Adam step moves every coordinate by lr against the gradient sign.
  Params q = {{"w", Tensor::vector({1.0, -2.0})}};
  OptimizerState adam;
  adam.kind = OptimizerKind::kAdam;
  optimizer_update(q, g, 0.01, adam);
  CHECK(q[0].value[0] == doctest::Approx(0.99).epsilon(1e-7));
  CHECK(q[0].value[1] == doctest::Approx(-1.99).epsilon(1e-7));
  // Second step by hand.
  const std::vector<Tensor> g2 = {Tensor::vector({0.25, 0.0})};
  optimizer_update(q, g2, 0.01, adam);
  const double m = 0.9 * 0.05 + 0.1 * 0.25, v = 0.999 * 0.00025 + 0.001 * 0.0625;
  const double step = 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  const double first = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8);
  CHECK(std::abs(q[0].value[0] - (first - step)) < 1e-14);
  CHECK_THROWS_AS(optimizer_update(q, {}, 0.01, adam), DimensionError);
}

TEST_CASE("mode labels") {
  TrainConfig c;
  CHECK(c.mode_label() == "EB-JDAT");
  c.w2 = 0;
  CHECK(c.mode_label() == "JEM");
  c.w1 = 0;
  CHECK(c.mode_label() == "AT-only");
  c.ce_target = CeTarget::kCleanOnly;
  CHECK(c.mode_label() == "standard");
  c.w2 = 1;
  CHECK(c.mode_label() == "adv-energy");
  c.w1 = c.w2 = c.w3 = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.w3 = 1;
  c.lr = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.lr = 0;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const Dataset ds = make_gaussian_ring(2, 40, 0.7, 0.1, 1);
  TrainConfig c = quick_config();
  c.lr = 0;
  const MlpSpec spec = small_spec();
  const FitResult r = fit(c, spec, ds);
  CHECK(r.params == init_params(spec));
  CHECK(r.log.epochs.size() == 1);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Dataset ds = make_gaussian_ring(3, 60, 0.7, 0.1, 2);
  TrainConfig c = quick_config();
  c.epochs = 2;
  MlpSpec spec = small_spec();
  spec.layer_dims = {2, 8, 3};
  const FitResult a = fit(c, spec, ds), b = fit(c, spec, ds);
  CHECK(a.params == b.params);
  CHECK(a.log.epochs == b.log.epochs);
  REQUIRE(a.log.steps.size() == b.log.steps.size());
  for (std::size_t i = 0; i < a.log.steps.size(); ++i) CHECK(a.log.steps[i] == b.log.steps[i]);
  c.seed = 5;
  CHECK_FALSE(fit(c, spec, ds).params == a.params);
}

TEST_CASE("epoch accounting") {
  const Dataset ds = make_gaussian_ring(2, 50, 0.7, 0.1, 3);
  TrainConfig c = quick_config();
  c.epochs = 0;
  const FitResult none = fit(c, small_spec(), ds);
  CHECK(none.log.epochs.empty());
  CHECK(none.params == init_params(small_spec()));

  c.epochs = 2;
  c.batch_size = 30;
  int calls = 0;
  const FitResult r = fit(c, small_spec(), ds, [&](const Trainer&, const EpochRecord& e) {
    CHECK(e.epoch == ++calls);
  });
  CHECK(calls == 2);
  CHECK(r.log.steps.size() == 2 * 4);  // ceil(100 / 30) per epoch
  CHECK(r.log.epochs[1].epoch == 2);
  CHECK(r.log.epochs[1].gap_var >= 0);
  const std::string csv = training_log_csv(r.log.epochs);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.rfind("epoch,l_gen,l_adv_gap,l_ce,total,clean_acc,gap_mean,gap_var,diverged\n", 0) == 0);
}

TEST_CASE("steps over the threshold are skipped and abort after the limit") {
  const Dataset ds = make_gaussian_ring(2, 50, 0.7, 0.1, 3);
  TrainConfig c = quick_config();
  c.epochs = 3;
  c.divergence_threshold = 1e-12;
  const FitResult r = fit(c, small_spec(), ds);
  REQUIRE(r.aborted_epoch.has_value());
  CHECK(*r.aborted_epoch == 1);
  CHECK(r.log.steps.size() == 2);  // the third raises before being logged
  for (const auto& s : r.log.steps) CHECK(s.diverged);
  CHECK(r.params == init_params(small_spec()));

  // A huge SGD step blows the energies up; abort carries the epoch.
  TrainConfig wild = quick_config();
  wild.epochs = 20;
  wild.lr = 1e8;
  wild.w1 = 1;
  wild.w2 = 0;
  const FitResult w = fit(wild, small_spec(), ds);
  REQUIRE(w.aborted_epoch.has_value());
  CHECK(*w.aborted_epoch >= 1);
  CHECK(*w.aborted_epoch <= 20);
  CHECK(w.log.epochs.size() == static_cast<std::size_t>(*w.aborted_epoch - 1));
}

TEST_CASE("training lowers the loss on a separable problem") {
  const Dataset ds = make_gaussian_ring(4, 100, 0.7, 0.08, 6);
  TrainConfig c = quick_config();
  c.epochs = 6;
  c.optimizer = OptimizerKind::kAdam;
  c.lr = 0.01;
  c.w1 = c.w2 = 0;
  c.ce_target = CeTarget::kCleanOnly;
  MlpSpec spec;
  spec.layer_dims = {2, 16, 4};
  const FitResult r = fit(c, spec, ds);
  CHECK(r.log.epochs.back().l_ce < r.log.epochs.front().l_ce);
  CHECK(r.log.epochs.back().clean_acc > 0.9);
}
