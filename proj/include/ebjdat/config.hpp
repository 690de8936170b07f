#ifndef EBJDAT_CONFIG_HPP_
#define EBJDAT_CONFIG_HPP_

// Run configuration as JSON. Every section is optional; unknown keys are
// rejected. The echo written next to each run materialises every default
// and parses back to the same RunConfig.
//
// Component seeds are derived from the top-level "seed":
//   model = seed, train = seed, sampler = seed + 1, attack = seed + 2.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ebjdat/adversary.hpp"
#include "ebjdat/data.hpp"
#include "ebjdat/model.hpp"
#include "ebjdat/sampler.hpp"
#include "ebjdat/trainer.hpp"
#include "json.hpp"

namespace ebjdat {

inline constexpr std::uint32_t kSchemaVersion = 1;

struct RunConfig {
  std::uint32_t schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  std::vector<std::size_t> hidden = {64, 64};
  // Optional echo of the resolved dims; checked against the data if set.
  std::vector<std::size_t> layer_dims;
  Activation activation = Activation::kSwish;
  TrainConfig train;
  DataSpec data;

  // Copies the seed into every component.
  void apply_seed(std::uint64_t s);
  // layer_dims from data dims and class count.
  MlpSpec mlp_spec(std::size_t input_dim, std::size_t num_classes) const;
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

// Throws ConfigError on malformed input, unknown keys, or bad values.
RunConfig parse_run_config(const nlohmann::ordered_json& j);
RunConfig load_run_config(const std::filesystem::path& path);
// Fully resolved echo. `spec` adds the model's layer_dims when known.
nlohmann::ordered_json run_config_to_json(const RunConfig& cfg,
                                          const MlpSpec* spec = nullptr);

// EBJD_SEED, when set to an unsigned integer.
std::optional<std::uint64_t> seed_from_env();

std::string_view optimizer_name(OptimizerKind k);
std::string_view ce_target_name(CeTarget t);
std::string_view init_mode_name(InitMode m);
std::string_view data_kind_name(DataKind k);

}  // namespace ebjdat

#endif  // EBJDAT_CONFIG_HPP_
