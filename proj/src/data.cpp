#include "ebjdat/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "ebjdat/errors.hpp"
#include "ebjdat/rng.hpp"

namespace ebjdat {

// ---------------------------------------------------------------------------
// Normalization

Normalization Normalization::fit(const Tensor& raw) {
  if (raw.empty()) throw DimensionError("cannot fit normalization on empty data");
  const std::size_t d = raw.cols();
  Normalization n;
  n.lo.assign(raw.row(0).begin(), raw.row(0).end());
  n.hi = n.lo;
  for (std::size_t i = 1; i < raw.rows(); ++i) {
    auto r = raw.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      n.lo[j] = std::min(n.lo[j], r[j]);
      n.hi[j] = std::max(n.hi[j], r[j]);
    }
  }
  return n;
}

Normalization Normalization::pixels(std::size_t dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 255.0)};
}

Tensor Normalization::apply(const Tensor& raw) const {
  if (raw.cols() != lo.size()) throw DimensionError("normalization: dim mismatch");
  Tensor out = raw;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      const double span = hi[j] - lo[j];
      // The division form maps lo and hi to exactly -1 and 1.
      const double v = span > 0 ? 2.0 * ((r[j] - lo[j]) / span) - 1.0 : 0.0;
      r[j] = std::clamp(v, -1.0, 1.0);
    }
  }
  return out;
}

Tensor Normalization::invert(const Tensor& x) const {
  if (x.cols() != lo.size()) throw DimensionError("normalization: dim mismatch");
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      r[j] = lo[j] + (r[j] + 1.0) * 0.5 * (hi[j] - lo[j]);
    }
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset out;
  out.x = x.gather_rows(idx);
  out.raw = raw.gather_rows(idx);
  out.y.reserve(idx.size());
  for (std::size_t i : idx) out.y.push_back(y[i]);
  out.num_classes = num_classes;
  out.split = split;
  out.norm = norm;
  return out;
}

namespace {

Dataset finish(Tensor raw, Labels y, int k) {
  Dataset ds;
  ds.norm = Normalization::fit(raw);
  ds.x = ds.norm.apply(raw);
  ds.raw = std::move(raw);
  ds.y = std::move(y);
  ds.num_classes = k;
  return ds;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generators

Dataset make_gaussian_ring(int num_classes, std::size_t n_per_class, double radius, double sigma,
                           std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("gaussian ring needs K >= 2");
  if (!(sigma > 0)) throw ConfigError("gaussian ring needs sigma > 0");
  if (n_per_class == 0) throw ConfigError("gaussian ring needs n_per_class >= 1");
  Rng rng(seed);
  const std::size_t n = n_per_class * static_cast<std::size_t>(num_classes);
  Tensor raw({n, 2});
  Labels y(n);
  std::size_t i = 0;
  for (int k = 0; k < num_classes; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / num_classes;
    const double cx = radius * std::cos(angle), cy = radius * std::sin(angle);
    for (std::size_t p = 0; p < n_per_class; ++p, ++i) {
      raw.at(i, 0) = cx + sigma * rng.normal();
      raw.at(i, 1) = cy + sigma * rng.normal();
      y[i] = k;
    }
  }
  return finish(std::move(raw), std::move(y), num_classes);
}

Dataset make_moons(std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw ConfigError("make_moons needs an even n >= 2");
  if (noise_sigma < 0) throw ConfigError("make_moons needs noise >= 0");
  Rng rng(seed);
  const std::size_t half = n / 2;
  Tensor raw({n, 2});
  Labels y(n);
  for (std::size_t i = 0; i < half; ++i) {
    const double t = half == 1 ? 0.0 : std::numbers::pi * i / (half - 1);
    raw.at(i, 0) = std::cos(t);
    raw.at(i, 1) = std::sin(t);
    y[i] = 0;
    raw.at(half + i, 0) = 1.0 - std::cos(t);
    raw.at(half + i, 1) = 0.5 - std::sin(t);
    y[half + i] = 1;
  }
  if (noise_sigma > 0) {
    for (double& v : raw.data()) v += noise_sigma * rng.normal();
  }
  return finish(std::move(raw), std::move(y), 2);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t start = cell.find_first_not_of(' ');
    cells.push_back(start == std::string::npos ? std::string() : cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& s, std::size_t row) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(row, "row " + std::to_string(row) + ": non-numeric cell '" + s + "'");
  }
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                 const Dataset* fitted) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, path.string() + ": missing header");
  const auto header = split_line(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw ParseError(0, path.string() + ": no label column '" + label_column + "'");
  }
  const std::size_t label_idx = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t d = header.size() - 1;
  if (d == 0) throw ParseError(0, path.string() + ": no feature columns");

  std::vector<double> values;
  Labels y;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(row, "row " + std::to_string(row) + ": expected " +
                                std::to_string(header.size()) + " cells, got " +
                                std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const double v = parse_number(cells[j], row);
      if (j != label_idx) {
        values.push_back(v);
        continue;
      }
      if (v < 0 || v != std::floor(v) || v > 1e6) {
        throw ParseError(row, "row " + std::to_string(row) + ": invalid label '" + cells[j] + "'");
      }
      const int label = static_cast<int>(v);
      if (fitted != nullptr && label >= fitted->num_classes) {
        throw ParseError(row, "row " + std::to_string(row) + ": unknown label " +
                                  std::to_string(label));
      }
      y.push_back(label);
    }
  }
  if (y.empty()) throw ParseError(0, path.string() + ": no data rows");
  Tensor raw({y.size(), d}, std::move(values));
  if (fitted != nullptr) {
    if (fitted->dim() != d) throw ParseError(0, path.string() + ": feature count mismatch");
    Dataset ds;
    ds.x = fitted->norm.apply(raw);
    ds.raw = std::move(raw);
    ds.y = std::move(y);
    ds.num_classes = fitted->num_classes;
    ds.norm = fitted->norm;
    ds.split = Split::kTest;
    return ds;
  }
  const int k = std::max(2, *std::max_element(y.begin(), y.end()) + 1);
  return finish(std::move(raw), std::move(y), k);
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t j = 0; j < ds.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.raw.row(i)) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, p - buf);
      out << ',';
    }
    out << ds.y[i] << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off,
                   const std::filesystem::path& path) {
  if (off + 4 > b.size()) throw ParseError(0, path.string() + ": truncated IDX header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t max_n) {
  const auto ib = read_all(images);
  const auto lb = read_all(labels);
  if (be32(ib, 0, images) != 0x00000803u) {
    throw ParseError(0, images.string() + ": bad IDX image magic");
  }
  if (be32(lb, 0, labels) != 0x00000801u) {
    throw ParseError(0, labels.string() + ": bad IDX label magic");
  }
  const std::size_t n_img = be32(ib, 4, images);
  const std::size_t rows = be32(ib, 8, images);
  const std::size_t cols = be32(ib, 12, images);
  const std::size_t n_lab = be32(lb, 4, labels);
  if (n_img != n_lab) {
    throw ParseError(0, "IDX count mismatch: " + std::to_string(n_img) + " images vs " +
                            std::to_string(n_lab) + " labels");
  }
  if (n_img == 0 || rows == 0 || cols == 0) throw ParseError(0, "IDX file holds no images");
  const std::size_t d = rows * cols;
  if (ib.size() < 16 + n_img * d) throw ParseError(0, images.string() + ": truncated payload");
  if (lb.size() < 8 + n_lab) throw ParseError(0, labels.string() + ": truncated payload");

  const std::size_t n = max_n == 0 ? n_img : std::min(max_n, n_img);
  std::vector<double> px(n * d);
  for (std::size_t i = 0; i < n * d; ++i) px[i] = ib[16 + i];
  Labels y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = lb[8 + i];

  Dataset ds;
  ds.norm = Normalization::pixels(d);
  Tensor raw({n, d}, std::move(px));
  ds.x = ds.norm.apply(raw);
  ds.raw = std::move(raw);
  ds.num_classes = std::max(2, *std::max_element(y.begin(), y.end()) + 1);
  ds.y = std::move(y);
  return ds;
}

// ---------------------------------------------------------------------------
// Batching

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng = Rng::keyed({seed, epoch, 0x62617463u});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                     perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                           std::uint64_t epoch) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(ds.size(), batch_size, seed, epoch)) {
    Batch b;
    b.x = ds.x.gather_rows(idx);
    for (std::size_t i : idx) b.y.push_back(ds.y[i]);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace ebjdat

namespace ebjdat {

namespace {

Dataset as_test(Dataset raw_split, const Dataset& train) {
  Dataset out;
  out.x = train.norm.apply(raw_split.raw);
  out.raw = std::move(raw_split.raw);
  out.y = std::move(raw_split.y);
  out.num_classes = train.num_classes;
  out.norm = train.norm;
  out.split = Split::kTest;
  return out;
}

}  // namespace

DataSplits load_splits(const DataSpec& spec) {
  DataSplits s;
  constexpr std::uint64_t kTestSeedOffset = 0x9e3779b97f4a7c15ull;
  switch (spec.kind) {
    case DataKind::kRing:
      s.train = make_gaussian_ring(spec.classes, spec.n_per_class, spec.radius, spec.sigma,
                                   spec.seed);
      s.test = as_test(make_gaussian_ring(spec.classes, spec.test_per_class, spec.radius,
                                          spec.sigma, spec.seed ^ kTestSeedOffset),
                       s.train);
      break;
    case DataKind::kMoons:
      s.train = make_moons(spec.n, spec.noise, spec.seed);
      s.test = as_test(make_moons(spec.test_n, spec.noise, spec.seed ^ kTestSeedOffset), s.train);
      break;
    case DataKind::kCsv:
      s.train = load_csv(spec.train_path, spec.label_column);
      s.test = spec.test_path.empty() ? s.train
                                      : load_csv(spec.test_path, spec.label_column, &s.train);
      break;
    case DataKind::kIdx:
      s.train = load_idx(spec.train_images, spec.train_labels, spec.max_n);
      if (spec.test_images.empty()) {
        s.test = s.train;
      } else {
        s.test = load_idx(spec.test_images, spec.test_labels, spec.max_n);
        s.test.num_classes = std::max(s.test.num_classes, s.train.num_classes);
        s.train.num_classes = s.test.num_classes;
      }
      break;
  }
  s.train.split = Split::kTrain;
  s.test.split = Split::kTest;
  return s;
}

}  // namespace ebjdat
