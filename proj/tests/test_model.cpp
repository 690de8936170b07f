#include "doctest.h"

#include <cmath>
#include <numeric>

#include "ebjdat/errors.hpp"
#include "ebjdat/model.hpp"
#include "support.hpp"

using namespace ebjdat;

namespace {

MlpSpec fixture_spec() {
  MlpSpec s;
  s.layer_dims = {2, 3, 2};
  s.activation = Activation::kLeakyRelu;
  return s;
}

// Weights are [fan_in, fan_out].
const std::vector<double> kW0 = {0.5, -1.0, 0.25, 1.5, 0.5, -0.75};
const std::vector<double> kB0 = {0.1, -0.2, 0.3};
const std::vector<double> kW1 = {1.0, -1.0, 0.5, 2.0, -1.5, 0.25};
const std::vector<double> kB1 = {0.05, -0.05};

EnergyModel fixture_model() {
  Params p = {{"layer0.weight", Tensor({2, 3}, kW0)},
              {"layer0.bias", Tensor({3}, kB0)},
              {"layer1.weight", Tensor({3, 2}, kW1)},
              {"layer1.bias", Tensor({2}, kB1)}};
  return EnergyModel(fixture_spec(), p);
}

// Independent scalar forward pass.
std::vector<double> oracle_logits(double x0, double x1) {
  double h[3];
  for (int j = 0; j < 3; ++j) {
    const double z = x0 * kW0[j] + x1 * kW0[3 + j] + kB0[j];
    h[j] = z > 0 ? z : 0.01 * z;
  }
  std::vector<double> out(2);
  for (int k = 0; k < 2; ++k) {
    out[k] = kB1[k];
    for (int j = 0; j < 3; ++j) out[k] += h[j] * kW1[j * 2 + k];
  }
  return out;
}

EnergyModel zero_model(std::vector<std::size_t> dims) {
  MlpSpec s;
  s.layer_dims = std::move(dims);
  Params p = init_params(s);
  for (auto& t : p) std::fill(t.value.data().begin(), t.value.data().end(), 0.0);
  return EnergyModel(s, p);
}

}  // namespace

TEST_CASE("spec validation") {
  MlpSpec s;
  s.layer_dims = {2, 8};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.layer_dims = {2, 4, 1};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.layer_dims = {2, 0, 3};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.layer_dims = {2, 4, 3};
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("init is deterministic with zero biases") {
  MlpSpec s;
  s.seed = 11;
  const Params a = init_params(s), b = init_params(s);
  CHECK(a == b);
  CHECK(a[0].name == "layer0.weight");
  CHECK(a[1].name == "layer0.bias");
  for (std::size_t i = 1; i < a.size(); i += 2) {
    for (double v : a[i].value.data()) CHECK(v == 0.0);
  }
  s.seed = 12;
  CHECK_FALSE(init_params(s) == a);
}

TEST_CASE("init weight spread matches the fan-in target") {
  // U(-1/sqrt(n), 1/sqrt(n)) has standard deviation 1 / sqrt(3 n).
  const double target = 1.0 / std::sqrt(3.0 * 64.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    MlpSpec s;
    s.layer_dims = {64, 64, 2};
    s.seed = seed;
    const Tensor& w = init_params(s)[0].value;
    double m = 0, m2 = 0;
    for (double v : w.data()) m += v;
    m /= static_cast<double>(w.size());
    for (double v : w.data()) m2 += (v - m) * (v - m);
    const double sd = std::sqrt(m2 / static_cast<double>(w.size()));
    CHECK(std::abs(sd - target) / target < 0.2);
  }
}

TEST_CASE("zero parameters give uniform logits") {
  const EnergyModel m = zero_model({2, 4, 10});
  const Tensor x = testing::random_tensor({5, 2}, 3);
  const Tensor f = m.forward_logits(x), em = m.energy_marginal(x),
               ej = m.energy_joint(x, {0, 1, 2, 3, 9}), post = m.class_posterior(x);
  for (double v : f.data()) CHECK(v == 0.0);
  for (double e : em.data()) CHECK(e == doctest::Approx(-std::log(10.0)));
  for (double e : ej.data()) CHECK(e == 0.0);
  for (double p : post.data()) CHECK(p == doctest::Approx(0.1));
}

TEST_CASE("fixture forward pass matches the oracle") {
  const EnergyModel m = fixture_model();
  const Tensor x = Tensor::from_rows({{1, 0}, {-0.3, 0.8}, {0.2, -0.6}});
  const Tensor f = m.forward_logits(x);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto o = oracle_logits(x.at(i, 0), x.at(i, 1));
    CHECK(f.at(i, 0) == doctest::Approx(o[0]).epsilon(1e-14));
    CHECK(f.at(i, 1) == doctest::Approx(o[1]).epsilon(1e-14));
    const double lse = std::log(std::exp(o[0]) + std::exp(o[1]));
    CHECK(m.energy_marginal(x)[i] == doctest::Approx(-lse).epsilon(1e-14));
    CHECK(m.energy_joint(x, {1, 0, 1})[i] == doctest::Approx(-o[i == 1 ? 0 : 1]).epsilon(1e-14));
  }
}

TEST_CASE("adversarial conditional energy") {
  const EnergyModel m = fixture_model();
  const Tensor x = Tensor::from_rows({{1, 0}});
  CHECK(m.energy_adv_conditional(x, x, 0.1) == m.energy_marginal(x));
  const double eps = 0.1;
  const Tensor xa = Tensor::from_rows({{1 + eps, -eps}});
  const auto o = oracle_logits(1 + eps, -eps);
  CHECK(m.energy_adv_conditional(xa, x, eps)[0] ==
        doctest::Approx(-std::log(std::exp(o[0]) + std::exp(o[1]))).epsilon(1e-14));
  const Tensor out = Tensor::from_rows({{1 + 2 * eps, 0}});
  CHECK_THROWS_AS(m.energy_adv_conditional(out, x, eps), DomainError);
}

TEST_CASE("batch independence and input checks") {
  MlpSpec s;
  s.seed = 4;
  const EnergyModel m(s);
  const Tensor x = testing::random_tensor({3, 2}, 9);
  const Tensor f = m.forward_logits(x);
  const Tensor f0 = m.forward_logits(Tensor::from_rows({{x.at(0, 0), x.at(0, 1)}}));
  for (std::size_t k = 0; k < 8; ++k) CHECK(f0.at(0, k) == f.at(0, k));
  CHECK_THROWS_AS(m.forward_logits(Tensor({3, 3})), DimensionError);
  CHECK_THROWS_AS(m.forward_logits(Tensor({6})), DimensionError);
}

TEST_CASE("bias shift moves the energy by exactly -c") {
  MlpSpec s;
  s.seed = 5;
  const EnergyModel m(s);
  Params p = m.params();
  const double c = 0.75;
  for (double& b : p.back().value.data()) b += c;
  const EnergyModel shifted(s, p);
  const Tensor x = testing::random_tensor({6, 2}, 6);
  const Tensor e = m.energy_marginal(x), es = shifted.energy_marginal(x);
  for (std::size_t i = 0; i < 6; ++i) CHECK(es[i] == doctest::Approx(e[i] - c).epsilon(1e-13));
}

TEST_CASE("posterior, joint and marginal energies agree") {
  MlpSpec s;
  s.seed = 8;
  const EnergyModel m(s);
  const Tensor x = testing::random_tensor({20, 2}, 10);
  const Tensor post = m.class_posterior(x);
  const Tensor em = m.energy_marginal(x);
  for (std::size_t i = 0; i < 20; ++i) {
    double row = 0;
    for (std::size_t k = 0; k < 8; ++k) row += post.at(i, k);
    CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
  }
  for (int k = 0; k < 8; ++k) {
    const Tensor ej = m.energy_joint(x, Labels(20, k));
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(em[i] <= ej[i]);
      CHECK(std::abs(post.at(i, k) - std::exp(-ej[i] + em[i])) < 1e-9);
    }
  }
}

TEST_CASE("marginal energy is invariant to permuting the output classes") {
  MlpSpec s;
  s.seed = 13;
  const EnergyModel m(s);
  Params p = m.params();
  Tensor& w = p[p.size() - 2].value;
  Tensor& b = p.back().value;
  const Tensor w0 = w, b0 = b;
  const std::size_t k = 8, perm[] = {3, 1, 7, 0, 2, 6, 5, 4};
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < k; ++c) w.at(r, c) = w0.at(r, perm[c]);
  }
  for (std::size_t c = 0; c < k; ++c) b[c] = b0[perm[c]];
  const EnergyModel permuted(s, p);
  const Tensor x = testing::random_tensor({10, 2}, 14);
  const Tensor a = m.energy_marginal(x), bb = permuted.energy_marginal(x);
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(a[i] - bb[i]) < 1e-12);
}

TEST_CASE("input gradient of the energy matches finite differences") {
  MlpSpec s;
  s.layer_dims = {2, 16, 16, 4};
  s.seed = 21;
  const EnergyModel m(s);
  const Tensor x = testing::random_tensor({5, 2}, 22);
  Tensor e;
  const Tensor g = m.energy_grad(x, &e);
  CHECK(e == m.energy_marginal(x));
  auto total = [&](const Tensor& t) {
    const Tensor en = m.energy_marginal(t);
    return std::accumulate(en.data().begin(), en.data().end(), 0.0);
  };
  CHECK(testing::max_rel_err(g.data(), testing::numeric_grad(total, x)) < 1e-3);

  const Labels y = {0, 3, 1, 2, 2};
  const Tensor gj = m.joint_energy_grad(x, y);
  auto total_j = [&](const Tensor& t) {
    const Tensor en = m.energy_joint(t, y);
    return std::accumulate(en.data().begin(), en.data().end(), 0.0);
  };
  CHECK(testing::max_rel_err(gj.data(), testing::numeric_grad(total_j, x)) < 1e-3);
}

TEST_CASE("cross-entropy parameter gradients match finite differences") {
  MlpSpec s;
  s.layer_dims = {2, 5, 3};
  s.seed = 30;
  const EnergyModel m(s);
  const Tensor x = testing::random_tensor({4, 2}, 31);
  const int y[] = {0, 2, 1, 1};
  auto ce = [&](const Params& p, std::vector<Tensor>* grads) {
    const EnergyModel mm(s, p);
    Graph g;
    auto bound = mm.bind(g, grads != nullptr);
    Var f = mm.logits(bound, g.constant(x));
    Var loss = mean(sub(logsumexp_rows(f), pick(f, y)));
    if (grads) {
      g.backward(loss);
      for (Var v : bound) grads->push_back(g.grad(v));
    }
    return loss.value().item();
  };
  std::vector<Tensor> grads;
  ce(m.params(), &grads);
  for (std::size_t t = 0; t < grads.size(); ++t) {
    auto f = [&](const Tensor& v) {
      Params p = m.params();
      p[t].value = v;
      return ce(p, nullptr);
    };
    CHECK(testing::max_rel_err(grads[t].data(), testing::numeric_grad(f, m.params()[t].value),
                               1e-6) < 1e-3);
  }
}

TEST_CASE("predict breaks ties toward the smallest class") {
  const EnergyModel m = zero_model({2, 3, 4});
  const Labels p = m.predict(testing::random_tensor({7, 2}, 40));
  for (int v : p) CHECK(v == 0);
}
