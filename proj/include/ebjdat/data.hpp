#ifndef EBJDAT_DATA_HPP_
#define EBJDAT_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ebjdat/tensor.hpp"

namespace ebjdat {

enum class Split { kTrain, kTest };

// Per-dimension affine map of [lo, hi] onto [-1, 1]:
//   x' = 2 (x - lo) / (hi - lo) - 1
// Dimensions with hi == lo map to 0.
struct Normalization {
  std::vector<double> lo;
  std::vector<double> hi;

  static Normalization fit(const Tensor& raw);
  // Fixed [0, 255] -> [-1, 1] map used for 8-bit pixels.
  static Normalization pixels(std::size_t dim);
  // Applies the map and clamps to [-1, 1] (test data may exceed the train
  // range).
  Tensor apply(const Tensor& raw) const;
  // Back to raw units (up to rounding).
  Tensor invert(const Tensor& x) const;

  bool operator==(const Normalization&) const = default;
};

struct Dataset {
  Tensor x;    // normalized, inside [-1, 1]^D
  Tensor raw;  // features before normalization
  Labels y;
  int num_classes = 0;
  Split split = Split::kTrain;
  Normalization norm;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }
  // Rows selected by index; keeps K, split and normalization.
  Dataset subset(std::span<const std::size_t> idx) const;
};

struct DataSplits {
  Dataset train;
  Dataset test;
};

// K isotropic Gaussian blobs at angles 2 pi k / K on a circle. Normalization
// is fitted on the returned points.
Dataset make_gaussian_ring(int num_classes, std::size_t n_per_class, double radius,
                           double sigma, std::uint64_t seed);

// Two interleaved half circles (n / 2 points each) with Gaussian noise.
Dataset make_moons(std::size_t n, double noise_sigma, std::uint64_t seed);

// Header row required. Every column except `label_column` is a feature.
// Labels are non-negative integers. With `fitted` the file is treated as a
// held-out split: its normalization and class count are reused, and labels
// >= that class count are rejected.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                 const Dataset* fitted = nullptr);
// Raw features plus a trailing "label" column, full precision.
void save_csv(const Dataset& ds, const std::filesystem::path& path);

// IDX images (magic 0x00000803) and labels (0x00000801). Pixels are mapped
// from [0, 255] to [-1, 1]; max_n == 0 loads everything.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t max_n);

// Row indices of each mini-batch of one epoch. The permutation is keyed by
// (seed, epoch); the final partial batch is kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch);

enum class DataKind { kRing, kMoons, kCsv, kIdx };

// Dataset source plus everything needed to rebuild both splits.
struct DataSpec {
  DataKind kind = DataKind::kRing;
  std::uint64_t seed = 0;
  // ring
  int classes = 8;
  std::size_t n_per_class = 500;
  std::size_t test_per_class = 250;
  double radius = 0.7;
  double sigma = 0.08;
  // moons
  std::size_t n = 2000;
  std::size_t test_n = 1000;
  double noise = 0.05;
  // csv
  std::string train_path;
  std::string test_path;
  std::string label_column = "label";
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t max_n = 0;

  bool operator==(const DataSpec&) const = default;
};

// Train split from the spec; the test split is drawn with a derived seed (or
// read from its own file) and normalized with the train record.
DataSplits load_splits(const DataSpec& spec);

struct Batch {
  Tensor x;
  Labels y;
};
std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                           std::uint64_t epoch);

}  // namespace ebjdat

#endif  // EBJDAT_DATA_HPP_
