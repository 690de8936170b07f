#ifndef EBJDAT_REPORT_HPP_
#define EBJDAT_REPORT_HPP_

// Diagnostics: accuracy, PGD robustness, one-to-one energy gaps between clean
// and adversarial points, three-population energy histograms, and an RBF-MMD
// proxy for generation quality.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ebjdat/adversary.hpp"
#include "ebjdat/data.hpp"
#include "ebjdat/model.hpp"
#include "json.hpp"

namespace ebjdat {

// Fraction of rows whose argmax logit equals the label (ties to the smallest
// class index). Throws DimensionError on an empty set.
double accuracy(const EnergyModel& model, const Tensor& x, const Labels& y);
double accuracy(const EnergyModel& model, const Dataset& ds);
double robust_accuracy(const EnergyModel& model, const Dataset& ds, const AttackConfig& cfg);

struct GapStats {
  double mean = 0.0;         // mean |d|
  double variance = 0.0;     // population variance of d
  double signed_mean = 0.0;  // mean d
};

// d_i = e_adv[i] - e_clean[i].
GapStats gap_statistics(std::span<const double> e_clean, std::span<const double> e_adv);
GapStats one_to_one_energy_gap(const EnergyModel& model, const Tensor& x, const Tensor& x_adv);

struct Histogram {
  std::vector<double> edges;  // bins + 1 shared edges
  std::vector<std::size_t> clean, adv, gen;
};

// Edges span the pooled min/max of the three populations. Throws
// ConfigError for bins < 2, DimensionError for an empty population.
Histogram shared_histogram(std::span<const double> clean, std::span<const double> adv,
                           std::span<const double> gen, int bins);

// Sum over bins of min(p_a, p_b), with p the per-population bin fractions.
double overlap_coefficient(std::span<const std::size_t> a, std::span<const std::size_t> b);

// Median pairwise Euclidean distance over the pooled sample.
double median_bandwidth(const Tensor& a, const Tensor& b);
// Unbiased squared MMD with k(u, v) = exp(-|u - v|^2 / (2 h^2)). A
// non-positive or absent bandwidth selects the median heuristic; a zero
// median (all points identical) returns 0. Negative estimates are clamped to 0.
double mmd_rbf(const Tensor& a, const Tensor& b, std::optional<double> bandwidth = std::nullopt);

struct EnergyReport {
  // Marginal energies E(x) per population, and joint energies E(x, y) with
  // the true label (clean, adv) or the predicted label (gen).
  std::vector<double> e_clean, e_adv, e_gen;
  std::vector<double> ej_clean, ej_adv, ej_gen;
  GapStats gap;
  Histogram histogram;        // over marginal energies
  Histogram histogram_joint;  // over joint energies
  // Clean/adv overlap of the joint-energy histogram, and of the marginal one.
  double overlap_clean_adv = 0.0;
  double overlap_clean_adv_marginal = 0.0;
  double acc = 0.0;
  double robust_acc = 0.0;
  double mmd_gen = 0.0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

// Energies, gap statistics and histograms for the three populations.
// Metrics other than the overlaps are left for the caller.
EnergyReport energy_histograms(const EnergyModel& model, const Tensor& clean,
                               const Labels& clean_y, const Tensor& adv, const Tensor& gen,
                               int bins);

nlohmann::ordered_json report_to_json(const EnergyReport& report);
std::string report_json_text(const EnergyReport& report);
std::string report_energies_csv(const EnergyReport& report);
std::filesystem::path energies_csv_path(const std::filesystem::path& json_path);
// Writes <path> (JSON) and <stem>_energies.csv next to it.
void report_export(const EnergyReport& report, const std::filesystem::path& path);
// Reads back a report_export pair.
EnergyReport report_import(const std::filesystem::path& path);

}  // namespace ebjdat

#endif  // EBJDAT_REPORT_HPP_
