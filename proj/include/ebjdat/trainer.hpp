#ifndef EBJDAT_TRAINER_HPP_
#define EBJDAT_TRAINER_HPP_

// Energy-based joint distribution adversarial training.
//
// Each step draws SGLD negatives x- from the replay buffer, runs the energy
// adversary to get x~ inside the eps-ball of the batch, and minimises
//
//   total = w1 * [mean E(x) - mean E(x-)]        (data likelihood)
//         + w2 * [mean E(x~) - mean E(x)]        (adversarial energy gap)
//         + w3 * CE                              (robust classification)
//
// with x- and x~ held constant. The combined gradient is applied m_theta
// times.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ebjdat/adversary.hpp"
#include "ebjdat/data.hpp"
#include "ebjdat/model.hpp"
#include "ebjdat/rng.hpp"
#include "ebjdat/sampler.hpp"

namespace ebjdat {

enum class OptimizerKind { kSgd, kAdam };

// kCleanOnly is plain supervised training on x (the "standard" baseline).
enum class CeTarget { kAdvOnly, kCleanPlusAdv, kCleanOnly };

struct TrainConfig {
  double w1 = 1.0;
  double w2 = 1.0;
  double w3 = 1.0;
  double lr = 0.01;
  int epochs = 10;
  std::size_t batch_size = 64;
  int m_theta = 1;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  std::uint64_t seed = 0;
  SamplerConfig sampler;
  AttackConfig attack;
  CeTarget ce_target = CeTarget::kAdvOnly;
  // Steps with |total| above this (or non-finite) are skipped.
  double divergence_threshold = 1e4;
  int max_consecutive_divergent = 3;

  void validate() const;
  // "standard", "AT-only", "JEM", "adv-energy" or "EB-JDAT".
  std::string mode_label() const;

  bool operator==(const TrainConfig&) const = default;
};

struct LossBreakdown {
  double l_gen = 0.0;
  double l_adv_gap = 0.0;
  double l_ce = 0.0;
  double total = 0.0;
  bool diverged = false;
  // Sums of d, |d| and d^2 over this step's pairs, d = E(x~) - E(x).
  double gap_sum = 0.0;
  double gap_abs_sum = 0.0;
  double gap_sq_sum = 0.0;
  std::size_t gap_count = 0;

  bool operator==(const LossBreakdown&) const = default;
};

// Value and parameter gradient of the weighted objective on fixed x-, x~.
struct ObjectiveResult {
  LossBreakdown losses;
  std::vector<Tensor> grads;  // aligned with EnergyModel::params()
};

struct ObjectiveWeights {
  double w1 = 1.0, w2 = 1.0, w3 = 1.0;
};

// Terms with zero weight are not recorded, so their inputs may be empty
// tensors. Throws NonFiniteError if any recorded value is non-finite.
ObjectiveResult compute_objective(const EnergyModel& model, const Tensor& x, const Labels& y,
                                  const Tensor& x_neg, const Tensor& x_adv,
                                  const ObjectiveWeights& w, CeTarget ce_target);

// Individual terms as plain values.
double loss_gen(const EnergyModel& model, const Tensor& x_pos, const Tensor& x_neg);
// Throws DomainError when x_adv leaves the eps-ball around x.
double loss_adv_gap(const EnergyModel& model, const Tensor& x, const Tensor& x_adv, double eps);
double loss_ce(const EnergyModel& model, const Tensor& x, const Tensor& x_adv, const Labels& y,
               CeTarget mode);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kSgd;
  std::uint64_t t = 0;
  std::vector<Tensor> m;  // Adam first moments
  std::vector<Tensor> v;  // Adam second moments

  bool operator==(const OptimizerState&) const = default;
};

// Applies one update in place.
void optimizer_update(Params& params, const std::vector<Tensor>& grads, double lr,
                      OptimizerState& state);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double l_gen = 0.0;
  double l_adv_gap = 0.0;
  double l_ce = 0.0;
  double total = 0.0;
  double clean_acc = 0.0;
  double gap_mean = 0.0;
  double gap_var = 0.0;
  int diverged = 0;  // flagged steps in the epoch

  bool operator==(const EpochRecord&) const = default;
};

struct TrainingLog {
  std::vector<LossBreakdown> steps;
  std::vector<EpochRecord> epochs;
};

std::string training_log_csv(const std::vector<EpochRecord>& epochs);

struct TrainProgress {
  std::uint64_t epoch = 0;        // completed epochs
  std::uint64_t batch_index = 0;  // next batch within the current epoch
  std::uint64_t global_step = 0;
  int consecutive_divergent = 0;
  // Running sums over the current epoch (losses over non-diverged steps,
  // gaps pooled over every adversarial pair).
  double sum_l_gen = 0.0;
  double sum_l_adv_gap = 0.0;
  double sum_l_ce = 0.0;
  double sum_total = 0.0;
  std::uint64_t ok_steps = 0;
  std::uint64_t diverged_steps = 0;
  double gap_abs_sum = 0.0;
  double gap_sum = 0.0;
  double gap_sq_sum = 0.0;
  std::uint64_t gap_count = 0;

  bool operator==(const TrainProgress&) const = default;
};

// Everything needed to continue training bit-exactly.
struct TrainerState {
  EnergyModel model;
  ReplayBuffer buffer;
  Rng rng;
  OptimizerState optimizer;
  TrainProgress progress;
  std::vector<EpochRecord> epochs;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, const MlpSpec& spec);
  Trainer(TrainConfig cfg, TrainerState state);

  const TrainConfig& config() const { return cfg_; }
  const TrainerState& state() const { return state_; }
  const EnergyModel& model() const { return state_.model; }
  ReplayBuffer& buffer() { return state_.buffer; }

  // One pass of the min-max step on (x, y). `data` feeds data-plus-noise
  // sampler restarts. Throws TrainingAborted after too many consecutive
  // divergent steps.
  LossBreakdown train_step(const Tensor& x, const Labels& y, const Tensor* data = nullptr);

  // Continues the current epoch from progress.batch_index and finishes it.
  // Returns the epoch summary, also appended to state().epochs.
  EpochRecord run_epoch(const Dataset& train, std::vector<LossBreakdown>* steps = nullptr);

  // Runs at most `max_steps` batches of the current epoch (for split-run
  // tests); returns true when the epoch completed.
  bool run_steps(const Dataset& train, std::size_t max_steps,
                 std::vector<LossBreakdown>* steps = nullptr);

 private:
  EpochRecord close_epoch(const Dataset& train);

  TrainConfig cfg_;
  TrainerState state_;
};

struct FitResult {
  Params params;
  TrainingLog log;
  std::optional<int> aborted_epoch;
};

using EpochCallback = std::function<void(const Trainer&, const EpochRecord&)>;

// Runs cfg.epochs epochs from scratch.
FitResult fit(const TrainConfig& cfg, const MlpSpec& spec, const Dataset& train,
              const EpochCallback& on_epoch = {});
// Resumes `trainer` until cfg.epochs epochs are complete.
FitResult fit(Trainer& trainer, const Dataset& train, const EpochCallback& on_epoch = {});

}  // namespace ebjdat

#endif  // EBJDAT_TRAINER_HPP_
