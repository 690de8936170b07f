#ifndef EBJDAT_ADVERSARY_HPP_
#define EBJDAT_ADVERSARY_HPP_

// Inner maximisation of the energy min-max objective, and the PGD
// cross-entropy attack used for robustness evaluation.

#include <cstdint>
#include <vector>

#include "ebjdat/model.hpp"
#include "ebjdat/rng.hpp"
#include "ebjdat/sampler.hpp"

namespace ebjdat {

struct AttackConfig {
  double epsilon = 0.1;  // l-inf budget in data units
  int steps = 5;
  // 0 selects min(2.5 * epsilon / steps, 2 * epsilon).
  double step_size = 0.0;
  bool add_noise = false;
  bool random_start = true;
  std::uint64_t seed = 0;
  DomainBox box;

  double alpha() const;
  void validate() const;

  bool operator==(const AttackConfig&) const = default;
};

// Clamp into [x_ref - eps, x_ref + eps], then into the box.
Tensor project_linf(const Tensor& x_adv, const Tensor& x_ref, double eps,
                    const DomainBox& box = {});

// x~ <- project(x~ + alpha * dE(x~, y)/dx~ [+ sqrt(2 alpha) * noise]).
// Ascent on the joint energy is descent on log p((x~|x), y); the partition
// function has no x-gradient. Throws DomainError if x_adv starts outside the
// ball, DivergenceError on a non-finite gradient.
Tensor adv_sgld_step(const EnergyModel& model, const Tensor& x_adv, const Labels& y,
                     const Tensor& x_ref, const AttackConfig& cfg, Rng& rng);

// Random start in the ball (if enabled) then cfg.steps adv_sgld_steps.
// When `step_energy` is given it receives the batch-mean joint energy before
// the first step and after each step (steps + 1 values).
Tensor energy_adversary(const EnergyModel& model, const Tensor& x, const Labels& y,
                        const AttackConfig& cfg, Rng& rng,
                        std::vector<double>* step_energy = nullptr);
Tensor energy_adversary(const EnergyModel& model, const Tensor& x, const Labels& y,
                        const AttackConfig& cfg);

// Sign-gradient ascent on the cross-entropy from a random start in the ball.
Tensor pgd_ce_attack(const EnergyModel& model, const Tensor& x, const Labels& y,
                     const AttackConfig& cfg, Rng& rng);
Tensor pgd_ce_attack(const EnergyModel& model, const Tensor& x, const Labels& y,
                     const AttackConfig& cfg);

}  // namespace ebjdat

#endif  // EBJDAT_ADVERSARY_HPP_
