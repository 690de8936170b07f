#ifndef EBJDAT_COMMANDS_HPP_
#define EBJDAT_COMMANDS_HPP_

// The five command-line operations as library calls. Each one writes its
// resolved settings as <command>_config.json into its output directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ebjdat/checkpoint.hpp"
#include "ebjdat/config.hpp"
#include "ebjdat/report.hpp"

namespace ebjdat {

struct TrainRequest {
  std::filesystem::path config_path;
  std::optional<std::filesystem::path> resume;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
};

struct TrainOutcome {
  std::filesystem::path output_dir;
  std::filesystem::path checkpoint;
  std::size_t epochs_completed = 0;
  std::optional<int> aborted_epoch;  // ECO
  std::string mode;
};

// Writes config.json, checkpoint_epoch_<k>.ebjd after every epoch,
// checkpoint.ebjd and train_log.csv. A divergence abort still writes the
// log and the last good checkpoint and is reported via aborted_epoch.
TrainOutcome cmd_train(const TrainRequest& req);
TrainOutcome run_training(const RunConfig& cfg,
                          const std::optional<std::filesystem::path>& resume = std::nullopt);

// `data` is "train", "test", or the path of a CSV file in raw units.
Dataset resolve_dataset(const RunConfig& cfg, const std::string& data);
// PGD for eval, attack and report: the run's epsilon and box, kEvalSteps
// steps unless overridden, no noise.
inline constexpr int kEvalSteps = 20;
AttackConfig resolve_attack(const RunConfig& cfg, std::optional<double> eps,
                            std::optional<int> steps, std::optional<std::uint64_t> seed);

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::string data = "test";
  std::optional<double> eps;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
};

struct EvalMetrics {
  double acc = 0.0;
  double robust_acc = 0.0;
  double gap_mean = 0.0;
  double gap_var = 0.0;
};

// Returns the metrics and, via `json`, the exact text written to eval.json.
EvalMetrics cmd_eval(const EvalRequest& req, std::string* json = nullptr);

struct SampleRequest {
  std::filesystem::path checkpoint;
  std::size_t n = 100;
  std::string init = "uniform";  // "uniform", "informative" or "buffer"
  std::optional<int> steps;
  std::optional<double> sigma;
  std::optional<std::uint64_t> seed;
  // CSV of samples in raw units, with the predicted class as label.
  std::optional<std::filesystem::path> out;
};

// Chain starts: uniform in the box, training rows plus N(0, sigma^2) noise,
// or entries of the saved replay buffer (drawn without replacement while
// n <= capacity).
enum class SampleInit { kUniform, kInformative, kBuffer };

// `steps` SGLD steps from the chosen starts. Returns model-space samples.
Tensor generate_samples(const EnergyModel& model, const Dataset& train,
                        const ReplayBuffer& buffer, const RunConfig& cfg, std::size_t n,
                        SampleInit init, int steps, double sigma, std::uint64_t seed);
Tensor cmd_sample(const SampleRequest& req);

struct ReportRequest {
  std::filesystem::path checkpoint;
  std::string data = "test";
  std::optional<double> eps;
  std::optional<int> steps;
  int bins = 30;
  std::size_t n_gen = 0;  // 0: same size as the clean population
  std::string gen_init = "uniform";
  std::optional<int> gen_steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
};

// Clean = the dataset, adv = PGD-CE on it, gen = the cmd_sample path;
// mmd_gen is measured against the held-out test split.
EnergyReport cmd_report(const ReportRequest& req);

struct AttackRequest {
  std::filesystem::path checkpoint;
  std::string data = "test";
  std::optional<double> eps;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "adv.csv";
};

// Writes the adversarial points (raw units, true labels) and returns them.
Dataset cmd_attack(const AttackRequest& req);

SampleInit parse_sample_init(const std::string& s);

}  // namespace ebjdat

#endif  // EBJDAT_COMMANDS_HPP_
