#include "ebjdat/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ebjdat/errors.hpp"

namespace ebjdat {

double AttackConfig::alpha() const {
  if (step_size > 0) return step_size;
  return std::min(2.5 * epsilon / std::max(steps, 1), 2.0 * epsilon);
}

void AttackConfig::validate() const {
  if (!(epsilon > 0)) throw ConfigError("attack.epsilon must be > 0");
  if (steps < 1) throw ConfigError("attack.steps must be >= 1");
  if (step_size < 0) throw ConfigError("attack.step_size must be > 0 (or 0 for auto)");
  if (alpha() > 2.0 * epsilon * (1 + 1e-12)) {
    throw ConfigError("attack.step_size must not exceed 2 * epsilon");
  }
  if (!(box.lo < box.hi)) throw ConfigError("attack box needs lo < hi");
}

Tensor project_linf(const Tensor& x_adv, const Tensor& x_ref, double eps, const DomainBox& box) {
  if (x_adv.shape() != x_ref.shape()) throw DimensionError("project_linf: shape mismatch");
  Tensor out = x_adv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = box.clamp(std::clamp(out[i], x_ref[i] - eps, x_ref[i] + eps));
  }
  return out;
}

namespace {

void check_ball(const Tensor& x_adv, const Tensor& x_ref, double eps) {
  if (x_adv.shape() != x_ref.shape()) throw DimensionError("adversary: shape mismatch");
  for (std::size_t i = 0; i < x_adv.size(); ++i) {
    if (std::abs(x_adv[i] - x_ref[i]) > eps + 1e-9) {
      throw DomainError("adversarial point outside the l-inf ball");
    }
  }
}

Tensor random_start(const Tensor& x, const AttackConfig& cfg, Rng& rng) {
  Tensor out = x;
  if (cfg.random_start) {
    for (double& v : out.data()) v += rng.uniform(-cfg.epsilon, cfg.epsilon);
  }
  return project_linf(out, x, cfg.epsilon, cfg.box);
}

double batch_mean(const Tensor& t) {
  return std::accumulate(t.data().begin(), t.data().end(), 0.0) / static_cast<double>(t.size());
}

}  // namespace

Tensor adv_sgld_step(const EnergyModel& model, const Tensor& x_adv, const Labels& y,
                     const Tensor& x_ref, const AttackConfig& cfg, Rng& rng) {
  check_ball(x_adv, x_ref, cfg.epsilon);
  const Tensor g = model.joint_energy_grad(x_adv, y);
  if (!g.all_finite()) throw DivergenceError("adv_sgld_step: non-finite energy gradient");
  const double alpha = cfg.alpha();
  const double noise_scale = std::sqrt(2.0 * alpha);
  Tensor out = x_adv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += alpha * g[i];
    if (cfg.add_noise) out[i] += noise_scale * rng.normal();
  }
  return project_linf(out, x_ref, cfg.epsilon, cfg.box);
}

Tensor energy_adversary(const EnergyModel& model, const Tensor& x, const Labels& y,
                        const AttackConfig& cfg, Rng& rng, std::vector<double>* step_energy) {
  cfg.validate();
  Tensor x_adv = random_start(x, cfg, rng);
  if (step_energy != nullptr) {
    step_energy->clear();
    step_energy->push_back(batch_mean(model.energy_joint(x_adv, y)));
  }
  for (int s = 0; s < cfg.steps; ++s) {
    x_adv = adv_sgld_step(model, x_adv, y, x, cfg, rng);
    if (step_energy != nullptr) step_energy->push_back(batch_mean(model.energy_joint(x_adv, y)));
  }
  return x_adv;
}

Tensor energy_adversary(const EnergyModel& model, const Tensor& x, const Labels& y,
                        const AttackConfig& cfg) {
  Rng rng(cfg.seed);
  return energy_adversary(model, x, y, cfg, rng);
}

Tensor pgd_ce_attack(const EnergyModel& model, const Tensor& x, const Labels& y,
                     const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  const double alpha = cfg.alpha();
  Tensor x_adv = random_start(x, cfg, rng);
  for (int s = 0; s < cfg.steps; ++s) {
    Graph g;
    auto bound = model.bind(g, false);
    Var xv = g.leaf(x_adv, true);
    Var f = model.logits(bound, xv);
    // Per-example CE is logsumexp(f) - f[y]; rows are independent.
    Var ce = sum(sub(logsumexp_rows(f), pick(f, y)));
    g.backward(ce);
    const Tensor grad = g.grad(xv);
    if (!grad.all_finite()) throw DivergenceError("pgd_ce_attack: non-finite gradient");
    for (std::size_t i = 0; i < x_adv.size(); ++i) {
      const double sgn = grad[i] > 0 ? 1.0 : (grad[i] < 0 ? -1.0 : 0.0);
      x_adv[i] += alpha * sgn;
    }
    x_adv = project_linf(x_adv, x, cfg.epsilon, cfg.box);
  }
  return x_adv;
}

Tensor pgd_ce_attack(const EnergyModel& model, const Tensor& x, const Labels& y,
                     const AttackConfig& cfg) {
  Rng rng(cfg.seed);
  return pgd_ce_attack(model, x, y, cfg, rng);
}

}  // namespace ebjdat
