#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "ebjdat/errors.hpp"
#include "ebjdat/report.hpp"
#include "support.hpp"

using namespace ebjdat;

namespace {

Tensor gaussian_cloud(std::size_t n, double shift, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    t.at(i, 0) = shift + rng.normal();
    t.at(i, 1) = rng.normal();
  }
  return t;
}

// Paired U-statistic over i != j with the median pairwise distance.
double mmd_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows();
  std::vector<const double*> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back(a.row(i).data());
  for (std::size_t i = 0; i < n; ++i) pts.push_back(b.row(i).data());
  auto d2 = [](const double* u, const double* v) {
    return (u[0] - v[0]) * (u[0] - v[0]) + (u[1] - v[1]) * (u[1] - v[1]);
  };
  std::vector<double> dist;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) dist.push_back(std::sqrt(d2(pts[i], pts[j])));
  }
  std::sort(dist.begin(), dist.end());
  const std::size_t m = dist.size();
  const double h = m % 2 ? dist[m / 2] : 0.5 * (dist[m / 2 - 1] + dist[m / 2]);
  auto k = [&](const double* u, const double* v) { return std::exp(-d2(u, v) / (2 * h * h)); };
  long double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      s += k(a.row(i).data(), a.row(j).data()) + k(b.row(i).data(), b.row(j).data()) -
           k(a.row(i).data(), b.row(j).data()) - k(a.row(j).data(), b.row(i).data());
    }
  }
  return std::max(0.0, static_cast<double>(s / (static_cast<double>(n) * (n - 1))));
}

EnergyModel zero_model() {
  MlpSpec s;
  s.layer_dims = {2, 3, 2};
  Params p = init_params(s);
  for (auto& t : p) std::fill(t.value.data().begin(), t.value.data().end(), 0.0);
  return EnergyModel(s, p);
}

}  // namespace

TEST_CASE("accuracy counts ties toward class 0") {
  const EnergyModel m = zero_model();
  const Tensor x = testing::random_tensor({4, 2}, 1);
  CHECK(accuracy(m, x, {0, 1, 0, 1}) == 0.5);
  CHECK(accuracy(m, x, {0, 0, 0, 0}) == 1.0);
  CHECK_THROWS_AS(accuracy(m, Tensor(), {}), DimensionError);
  CHECK_THROWS_AS(accuracy(m, x, {0, 1}), DimensionError);
}

TEST_CASE("gap statistics") {
  const std::vector<double> clean = {1, 1, 1}, adv = {3, 1, 2};
  const GapStats g = gap_statistics(clean, adv);
  CHECK(g.mean == doctest::Approx(1.0));
  CHECK(g.signed_mean == doctest::Approx(1.0));
  CHECK(g.variance == doctest::Approx(2.0 / 3.0));
  const GapStats flip = gap_statistics(adv, clean);
  CHECK(flip.mean == doctest::Approx(1.0));
  CHECK(flip.signed_mean == doctest::Approx(-1.0));
  CHECK(gap_statistics(clean, clean).variance == 0);
  CHECK_THROWS_AS(gap_statistics(clean, std::vector<double>{1, 2}), DimensionError);

  MlpSpec s;
  s.seed = 2;
  const EnergyModel m(s);
  const Tensor x = testing::random_tensor({30, 2}, 3);
  const Tensor xa = testing::random_tensor({30, 2}, 4);
  const GapStats direct = one_to_one_energy_gap(m, x, xa);
  const Tensor ec = m.energy_marginal(x), ea = m.energy_marginal(xa);
  double mean = 0;
  for (std::size_t i = 0; i < 30; ++i) mean += std::abs(ea[i] - ec[i]);
  CHECK(direct.mean == doctest::Approx(mean / 30).epsilon(1e-14));
}

TEST_CASE("shared histograms") {
  const std::vector<double> a = {0, 1, 2, 3}, b = {1.5, 1.5}, c = {-1, 4, 4};
  const Histogram h = shared_histogram(a, b, c, 5);
  CHECK(h.edges.size() == 6);
  CHECK(h.edges.front() == -1);
  CHECK(h.edges.back() == 4);
  auto total = [](const std::vector<std::size_t>& v) {
    std::size_t s = 0;
    for (auto x : v) s += x;
    return s;
  };
  CHECK(total(h.clean) == 4);
  CHECK(total(h.adv) == 2);
  CHECK(total(h.gen) == 3);
  CHECK(h.gen.back() == 2);  // the maximum lands in the last bin

  CHECK(overlap_coefficient(h.clean, h.clean) == doctest::Approx(1.0));
  const Histogram same = shared_histogram(a, a, a, 7);
  CHECK(overlap_coefficient(same.clean, same.adv) == doctest::Approx(1.0));
  const std::vector<std::size_t> left = {3, 0}, right = {0, 5};
  CHECK(overlap_coefficient(left, right) == 0.0);

  const std::vector<double> flat = {2, 2};
  const Histogram one = shared_histogram(flat, flat, flat, 4);
  CHECK(one.edges.front() < one.edges.back());
  CHECK_THROWS_AS(shared_histogram(a, b, c, 1), ConfigError);
  CHECK_THROWS_AS(shared_histogram(a, b, std::vector<double>{}, 4), DimensionError);
}

TEST_CASE("mmd matches a brute-force estimate") {
  const Tensor a = gaussian_cloud(500, 0.0, 1);
  const Tensor b = gaussian_cloud(500, 3.0, 2);
  CHECK(std::abs(mmd_rbf(a, b) - mmd_oracle(a, b)) < 1e-10);
  const Tensor c = gaussian_cloud(500, 0.0, 3);
  CHECK(std::abs(mmd_rbf(a, c) - mmd_oracle(a, c)) < 1e-10);

  CHECK(mmd_rbf(a, a) == 0.0);
  CHECK(mmd_rbf(a, b) == doctest::Approx(mmd_rbf(b, a)).epsilon(1e-12));
  CHECK(mmd_rbf(a, b) > 10 * mmd_rbf(a, c));
  CHECK(mmd_rbf(a, c) >= 0.0);
  CHECK(mmd_rbf(a, b, 1.0) != mmd_rbf(a, b, 2.0));

  const Tensor dup = Tensor::from_rows({{1, 1}, {1, 1}});
  CHECK(mmd_rbf(dup, dup) == 0.0);
  CHECK(median_bandwidth(dup, dup) == 0.0);
  CHECK_THROWS_AS(mmd_rbf(a, Tensor::from_rows({{1, 2, 3}, {4, 5, 6}})), DimensionError);
  CHECK_THROWS_AS(mmd_rbf(Tensor::from_rows({{1, 2}}), a), DimensionError);

  // Unequal sizes use the unpaired estimator; still small for one distribution.
  const Tensor d = gaussian_cloud(300, 0.0, 4);
  CHECK(mmd_rbf(a, d) < 0.01);
}

TEST_CASE("report export round trip") {
  MlpSpec s;
  s.seed = 6;
  const EnergyModel m(s);
  const Tensor clean = testing::random_tensor({12, 2}, 7);
  const Tensor adv = project_linf(testing::random_tensor({12, 2}, 8), clean, 0.1);
  const Tensor gen = testing::random_tensor({9, 2}, 9);
  Labels y(12);
  for (std::size_t i = 0; i < 12; ++i) y[i] = static_cast<int>(i % 8);
  EnergyReport r = energy_histograms(m, clean, y, adv, gen, 10);
  r.acc = 0.25;
  r.robust_acc = 0.125;
  r.mmd_gen = 0.5;
  r.config = {{"mode", "test"}};

  CHECK(r.e_clean.size() == 12);
  CHECK(r.e_gen.size() == 9);
  const GapStats g = one_to_one_energy_gap(m, clean, adv);
  CHECK(r.gap.mean == g.mean);
  CHECK(r.gap.variance == g.variance);
  CHECK(r.overlap_clean_adv == overlap_coefficient(r.histogram_joint.clean, r.histogram_joint.adv));

  testing::TempDir dir("report");
  report_export(r, dir / "r.json");
  CHECK(std::filesystem::exists(dir / "r_energies.csv"));
  const std::string csv = testing::read_file(dir / "r_energies.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 12 + 12 + 9);

  const EnergyReport back = report_import(dir / "r.json");
  CHECK(back.e_clean == r.e_clean);
  CHECK(back.ej_adv == r.ej_adv);
  CHECK(back.gap.mean == r.gap.mean);
  CHECK(back.overlap_clean_adv == r.overlap_clean_adv);
  CHECK(back.overlap_clean_adv_marginal == r.overlap_clean_adv_marginal);
  CHECK(back.acc == 0.25);
  CHECK(back.histogram.edges == r.histogram.edges);
  report_export(back, dir / "s.json");
  CHECK(testing::read_file(dir / "s.json") == testing::read_file(dir / "r.json"));
  CHECK(testing::read_file(dir / "s_energies.csv") == csv);
}
