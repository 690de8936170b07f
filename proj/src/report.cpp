#include "ebjdat/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ebjdat/errors.hpp"

namespace ebjdat {

double accuracy(const EnergyModel& model, const Tensor& x, const Labels& y) {
  if (y.empty() || x.empty()) throw DimensionError("accuracy: empty dataset");
  if (x.rows() != y.size()) throw DimensionError("accuracy: label count mismatch");
  const Labels pred = model.predict(x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i];
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

double accuracy(const EnergyModel& model, const Dataset& ds) {
  return accuracy(model, ds.x, ds.y);
}

double robust_accuracy(const EnergyModel& model, const Dataset& ds, const AttackConfig& cfg) {
  if (ds.size() == 0) throw DimensionError("robust_accuracy: empty dataset");
  const Tensor adv = pgd_ce_attack(model, ds.x, ds.y, cfg);
  return accuracy(model, adv, ds.y);
}

GapStats gap_statistics(std::span<const double> e_clean, std::span<const double> e_adv) {
  if (e_clean.size() != e_adv.size()) throw DimensionError("energy gap: unpaired populations");
  if (e_clean.empty()) throw DimensionError("energy gap: empty populations");
  const double n = static_cast<double>(e_clean.size());
  GapStats s;
  for (std::size_t i = 0; i < e_clean.size(); ++i) {
    const double d = e_adv[i] - e_clean[i];
    s.mean += std::abs(d);
    s.signed_mean += d;
  }
  s.mean /= n;
  s.signed_mean /= n;
  for (std::size_t i = 0; i < e_clean.size(); ++i) {
    const double c = (e_adv[i] - e_clean[i]) - s.signed_mean;
    s.variance += c * c;
  }
  s.variance /= n;
  return s;
}

GapStats one_to_one_energy_gap(const EnergyModel& model, const Tensor& x, const Tensor& x_adv) {
  if (x.shape() != x_adv.shape()) throw DimensionError("energy gap: unpaired rows");
  const Tensor ec = model.energy_marginal(x);
  const Tensor ea = model.energy_marginal(x_adv);
  return gap_statistics(ec.data(), ea.data());
}

// ---------------------------------------------------------------------------
// Histograms

namespace {

std::vector<std::size_t> bin_counts(std::span<const double> v, const std::vector<double>& edges) {
  const std::size_t bins = edges.size() - 1;
  const double lo = edges.front(), hi = edges.back();
  std::vector<std::size_t> counts(bins, 0);
  for (double e : v) {
    auto b = static_cast<std::ptrdiff_t>(std::floor((e - lo) / (hi - lo) * static_cast<double>(bins)));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  return counts;
}

}  // namespace

Histogram shared_histogram(std::span<const double> clean, std::span<const double> adv,
                           std::span<const double> gen, int bins) {
  if (bins < 2) throw ConfigError("histogram needs at least 2 bins");
  if (clean.empty() || adv.empty() || gen.empty()) {
    throw DimensionError("histogram: empty population");
  }
  double lo = clean[0], hi = clean[0];
  for (auto pop : {clean, adv, gen}) {
    for (double v : pop) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * i / bins;
  h.edges.back() = hi;
  h.clean = bin_counts(clean, h.edges);
  h.adv = bin_counts(adv, h.edges);
  h.gen = bin_counts(gen, h.edges);
  return h;
}

double overlap_coefficient(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw DimensionError("overlap: histograms differ in bins");
  double na = 0, nb = 0;
  for (auto c : a) na += static_cast<double>(c);
  for (auto c : b) nb += static_cast<double>(c);
  if (na == 0 || nb == 0) throw DimensionError("overlap: empty histogram");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += std::min(static_cast<double>(a[i]) / na, static_cast<double>(b[i]) / nb);
  }
  return s;
}

// ---------------------------------------------------------------------------
// MMD

namespace {

double sq_dist(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    s += d * d;
  }
  return s;
}

}  // namespace

double median_bandwidth(const Tensor& a, const Tensor& b) {
  std::vector<std::span<const double>> pts;
  for (std::size_t i = 0; i < a.rows(); ++i) pts.push_back(a.row(i));
  for (std::size_t i = 0; i < b.rows(); ++i) pts.push_back(b.row(i));
  std::vector<double> d;
  d.reserve(pts.size() * (pts.size() - 1) / 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) d.push_back(std::sqrt(sq_dist(pts[i], pts[j])));
  }
  if (d.empty()) return 0.0;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  const double upper = d[mid];
  if (d.size() % 2 == 1) return upper;
  const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double mmd_rbf(const Tensor& a, const Tensor& b, std::optional<double> bandwidth) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError("mmd_rbf: point sets must be matrices of equal width");
  }
  const std::size_t n = a.rows(), m = b.rows();
  if (n < 2 || m < 2) throw DimensionError("mmd_rbf: needs at least two points per set");
  double h = bandwidth.value_or(0.0);
  if (!(h > 0)) h = median_bandwidth(a, b);
  if (h == 0.0) return 0.0;
  const double inv = 1.0 / (2.0 * h * h);
  auto k = [&](std::span<const double> u, std::span<const double> v) {
    return std::exp(-sq_dist(u, v) * inv);
  };
  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) kaa += 2.0 * k(a.row(i), a.row(j));
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) kbb += 2.0 * k(b.row(i), b.row(j));
  }
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  if (n == m) {
    // Paired U-statistic: cross pairs with i == j are excluded as well, so
    // identical sets score exactly 0.
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (i != j) kab += k(a.row(i), b.row(j));
      }
    }
    return std::max(0.0, (kaa + kbb - 2.0 * kab) / (dn * (dn - 1.0)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) kab += k(a.row(i), b.row(j));
  }
  return std::max(0.0, kaa / (dn * (dn - 1.0)) + kbb / (dm * (dm - 1.0)) - 2.0 * kab / (dn * dm));
}

// ---------------------------------------------------------------------------
// Report

EnergyReport energy_histograms(const EnergyModel& model, const Tensor& clean,
                               const Labels& clean_y, const Tensor& adv, const Tensor& gen,
                               int bins) {
  if (clean.empty() || adv.empty() || gen.empty()) {
    throw DimensionError("energy report: empty population");
  }
  EnergyReport r;
  r.e_clean = model.energy_marginal(clean).values();
  r.e_adv = model.energy_marginal(adv).values();
  r.e_gen = model.energy_marginal(gen).values();
  r.ej_clean = model.energy_joint(clean, clean_y).values();
  r.ej_adv = model.energy_joint(adv, clean_y).values();
  r.ej_gen = model.energy_joint(gen, model.predict(gen)).values();
  r.gap = gap_statistics(r.e_clean, r.e_adv);
  r.histogram = shared_histogram(r.e_clean, r.e_adv, r.e_gen, bins);
  r.histogram_joint = shared_histogram(r.ej_clean, r.ej_adv, r.ej_gen, bins);
  r.overlap_clean_adv = overlap_coefficient(r.histogram_joint.clean, r.histogram_joint.adv);
  r.overlap_clean_adv_marginal = overlap_coefficient(r.histogram.clean, r.histogram.adv);
  return r;
}

namespace {

nlohmann::ordered_json histogram_json(const Histogram& h) {
  nlohmann::ordered_json j;
  j["edges"] = h.edges;
  j["clean"] = h.clean;
  j["adv"] = h.adv;
  j["gen"] = h.gen;
  return j;
}

Histogram histogram_from_json(const nlohmann::ordered_json& j) {
  Histogram h;
  h.edges = j.at("edges").get<std::vector<double>>();
  h.clean = j.at("clean").get<std::vector<std::size_t>>();
  h.adv = j.at("adv").get<std::vector<std::size_t>>();
  h.gen = j.at("gen").get<std::vector<std::size_t>>();
  return h;
}

void write_number(std::ostream& os, double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  os.write(buf, p - buf);
}

}  // namespace

nlohmann::ordered_json report_to_json(const EnergyReport& r) {
  nlohmann::ordered_json j;
  j["config"] = r.config;
  j["gap"] = {{"mean", r.gap.mean}, {"variance", r.gap.variance}, {"signed_mean", r.gap.signed_mean}};
  j["histograms"] = histogram_json(r.histogram);
  j["histograms_joint"] = histogram_json(r.histogram_joint);
  j["metrics"] = {{"acc", r.acc},
                  {"robust_acc", r.robust_acc},
                  {"mmd_gen", r.mmd_gen},
                  {"overlap_clean_adv", r.overlap_clean_adv},
                  {"overlap_clean_adv_marginal", r.overlap_clean_adv_marginal}};
  j["populations"] = {{"clean", r.e_clean.size()}, {"adv", r.e_adv.size()}, {"gen", r.e_gen.size()}};
  return j;
}

std::string report_json_text(const EnergyReport& report) {
  return report_to_json(report).dump(2) + "\n";
}

std::string report_energies_csv(const EnergyReport& r) {
  std::ostringstream os;
  os << "population,index,energy_marginal,energy_joint\n";
  auto emit = [&](const char* name, const std::vector<double>& em, const std::vector<double>& ej) {
    for (std::size_t i = 0; i < em.size(); ++i) {
      os << name << ',' << i << ',';
      write_number(os, em[i]);
      os << ',';
      write_number(os, ej[i]);
      os << '\n';
    }
  };
  emit("clean", r.e_clean, r.ej_clean);
  emit("adv", r.e_adv, r.ej_adv);
  emit("gen", r.e_gen, r.ej_gen);
  return os.str();
}

std::filesystem::path energies_csv_path(const std::filesystem::path& json_path) {
  auto p = json_path;
  p.replace_filename(json_path.stem().string() + "_energies.csv");
  return p;
}

void report_export(const EnergyReport& report, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << report_json_text(report);
    if (!out) throw IoError("write failed: " + path.string());
  }
  const auto csv = energies_csv_path(path);
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw IoError("cannot write " + csv.string());
  out << report_energies_csv(report);
  if (!out) throw IoError("write failed: " + csv.string());
}

EnergyReport report_import(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
  EnergyReport r;
  r.config = j.at("config");
  r.gap.mean = j.at("gap").at("mean").get<double>();
  r.gap.variance = j.at("gap").at("variance").get<double>();
  r.gap.signed_mean = j.at("gap").at("signed_mean").get<double>();
  r.histogram = histogram_from_json(j.at("histograms"));
  r.histogram_joint = histogram_from_json(j.at("histograms_joint"));
  const auto& m = j.at("metrics");
  r.acc = m.at("acc").get<double>();
  r.robust_acc = m.at("robust_acc").get<double>();
  r.mmd_gen = m.at("mmd_gen").get<double>();
  r.overlap_clean_adv = m.at("overlap_clean_adv").get<double>();
  r.overlap_clean_adv_marginal = m.at("overlap_clean_adv_marginal").get<double>();

  const auto csv = energies_csv_path(path);
  std::ifstream cin(csv);
  if (!cin) throw IoError("cannot open " + csv.string());
  std::string line;
  std::getline(cin, line);
  std::size_t row = 0;
  while (std::getline(cin, line)) {
    ++row;
    std::istringstream ls(line);
    std::string pop, idx, em, ej;
    if (!std::getline(ls, pop, ',') || !std::getline(ls, idx, ',') || !std::getline(ls, em, ',') ||
        !std::getline(ls, ej)) {
      throw ParseError(row, csv.string() + ": malformed row " + std::to_string(row));
    }
    double vm = 0, vj = 0;
    std::from_chars(em.data(), em.data() + em.size(), vm);
    std::from_chars(ej.data(), ej.data() + ej.size(), vj);
    if (pop == "clean") {
      r.e_clean.push_back(vm);
      r.ej_clean.push_back(vj);
    } else if (pop == "adv") {
      r.e_adv.push_back(vm);
      r.ej_adv.push_back(vj);
    } else if (pop == "gen") {
      r.e_gen.push_back(vm);
      r.ej_gen.push_back(vj);
    } else {
      throw ParseError(row, csv.string() + ": unknown population '" + pop + "'");
    }
  }
  return r;
}

}  // namespace ebjdat
