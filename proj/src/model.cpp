#include "ebjdat/model.hpp"

#include <cmath>

#include "ebjdat/errors.hpp"
#include "ebjdat/rng.hpp"

namespace ebjdat {

void MlpSpec::validate() const {
  if (layer_dims.size() < 3) {
    throw ConfigError("MlpSpec needs input, at least one hidden layer, and output dims");
  }
  for (std::size_t d : layer_dims) {
    if (d == 0) throw ConfigError("MlpSpec dims must be positive");
  }
  if (num_classes() < 2) throw ConfigError("MlpSpec needs K >= 2 classes");
}

Params init_params(const MlpSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Params params;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t fan_in = spec.layer_dims[l], fan_out = spec.layer_dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    const std::string prefix = "layer" + std::to_string(l);
    params.push_back({prefix + ".weight", Tensor({fan_in, fan_out}, std::move(w))});
    params.push_back({prefix + ".bias", Tensor({fan_out})});
  }
  return params;
}

EnergyModel::EnergyModel(MlpSpec spec) : spec_(std::move(spec)) {
  params_ = init_params(spec_);
}

EnergyModel::EnergyModel(MlpSpec spec, Params params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  if (params_.size() != 2 * spec_.num_layers()) {
    throw DimensionError("parameter count does not match MlpSpec");
  }
  for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
    const Shape w = {spec_.layer_dims[l], spec_.layer_dims[l + 1]};
    const Shape b = {spec_.layer_dims[l + 1]};
    if (params_[2 * l].value.shape() != w || params_[2 * l + 1].value.shape() != b) {
      throw DimensionError("layer " + std::to_string(l) + " parameter shapes do not match MlpSpec");
    }
  }
}

void EnergyModel::check_input(const Tensor& x) const {
  if (x.rank() != 2 || x.shape()[1] != spec_.input_dim()) {
    throw DimensionError("model input " + shape_str(x.shape()) + ", expected [B," +
                         std::to_string(spec_.input_dim()) + "]");
  }
}

std::vector<Var> EnergyModel::bind(Graph& g, bool requires_grad) const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(g.leaf(p.value, requires_grad));
  return out;
}

Var EnergyModel::logits(std::span<const Var> bound, Var x) const {
  check_input(x.value());
  Var h = x;
  const std::size_t layers = spec_.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    h = add_bias(matmul(h, bound[2 * l]), bound[2 * l + 1]);
    if (l + 1 < layers) h = activation(h, spec_.activation);
  }
  return h;
}

Var energy_marginal(Var logits) { return neg(logsumexp_rows(logits)); }

Var energy_joint(Var logits, std::span<const int> y) { return neg(pick(logits, y)); }

Tensor EnergyModel::forward_logits(const Tensor& x) const {
  Graph g;
  auto bound = bind(g, false);
  return logits(bound, g.constant(x)).value();
}

Tensor EnergyModel::energy_marginal(const Tensor& x) const {
  Graph g;
  auto bound = bind(g, false);
  return ebjdat::energy_marginal(logits(bound, g.constant(x))).value();
}

Tensor EnergyModel::energy_joint(const Tensor& x, const Labels& y) const {
  Graph g;
  auto bound = bind(g, false);
  return ebjdat::energy_joint(logits(bound, g.constant(x)), y).value();
}

Tensor EnergyModel::energy_adv_conditional(const Tensor& x_adv, const Tensor& x_ref,
                                           double eps) const {
  if (x_adv.shape() != x_ref.shape()) {
    throw DimensionError("energy_adv_conditional: x_adv and x_ref shapes differ");
  }
  for (std::size_t i = 0; i < x_adv.size(); ++i) {
    if (std::abs(x_adv[i] - x_ref[i]) > eps + 1e-9) {
      throw DomainError("energy_adv_conditional: x_adv outside the l-inf ball of radius " +
                        std::to_string(eps));
    }
  }
  return energy_marginal(x_adv);
}

Tensor EnergyModel::class_posterior(const Tensor& x) const {
  Tensor out = forward_logits(x);
  const std::size_t k = out.cols();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double lse = kernels::logsumexp(r);
    for (std::size_t j = 0; j < k; ++j) r[j] = std::exp(r[j] - lse);
  }
  return out;
}

Labels EnergyModel::predict(const Tensor& x) const {
  const Tensor f = forward_logits(x);
  Labels out(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    auto r = f.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j) {
      if (r[j] > r[best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

Tensor EnergyModel::energy_grad(const Tensor& x, Tensor* energies) const {
  Graph g;
  auto bound = bind(g, false);
  Var xv = g.leaf(x, true);
  Var e = ebjdat::energy_marginal(logits(bound, xv));
  // Rows are independent, so d(sum E)/dx_i = dE(x_i)/dx_i.
  g.backward(sum(e));
  if (energies != nullptr) *energies = e.value();
  return g.grad(xv);
}

Tensor EnergyModel::joint_energy_grad(const Tensor& x, const Labels& y, Tensor* energies) const {
  Graph g;
  auto bound = bind(g, false);
  Var xv = g.leaf(x, true);
  Var e = ebjdat::energy_joint(logits(bound, xv), y);
  g.backward(sum(e));
  if (energies != nullptr) *energies = e.value();
  return g.grad(xv);
}

}  // namespace ebjdat
