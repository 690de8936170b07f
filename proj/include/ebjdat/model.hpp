#ifndef EBJDAT_MODEL_HPP_
#define EBJDAT_MODEL_HPP_

// A softmax MLP read as an energy-based model:
//   E(x)   = -logsumexp_y f(x)[y]
//   E(x,y) = -f(x)[y]
//   E(x~|x) = E(x~) on the l-inf ball around x (conditioning is the support).

#include <cstdint>
#include <string>
#include <vector>

#include "ebjdat/tensor.hpp"

namespace ebjdat {

struct MlpSpec {
  // Input dim, hidden dims..., class count.
  std::vector<std::size_t> layer_dims = {2, 64, 64, 8};
  Activation activation = Activation::kSwish;
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t num_classes() const { return layer_dims.back(); }
  std::size_t num_layers() const { return layer_dims.size() - 1; }
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;

  bool operator==(const NamedTensor&) const = default;
};

// Ordered as layer0.weight, layer0.bias, layer1.weight, ... Weights are
// [fan_in, fan_out] so a layer is x * W + b.
using Params = std::vector<NamedTensor>;

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
Params init_params(const MlpSpec& spec);

// Anything with a differentiable scalar energy per input row. The samplers
// only need this much, which lets tests drive them with analytic energies.
class EnergySurface {
 public:
  virtual ~EnergySurface() = default;
  virtual std::size_t dim() const = 0;
  virtual Tensor energy(const Tensor& x) const = 0;
  // d E(x_i) / d x_i for every row; optionally also the energies.
  virtual Tensor energy_grad(const Tensor& x, Tensor* energies = nullptr) const = 0;
};

class EnergyModel : public EnergySurface {
 public:
  explicit EnergyModel(MlpSpec spec);
  EnergyModel(MlpSpec spec, Params params);

  const MlpSpec& spec() const { return spec_; }
  const Params& params() const { return params_; }
  // Shapes must be preserved by the caller.
  Params& mutable_params() { return params_; }
  std::size_t num_classes() const { return spec_.num_classes(); }

  // Records the parameters as leaves of g.
  std::vector<Var> bind(Graph& g, bool requires_grad) const;
  // f(x) on a recorded graph; `bound` comes from bind() on the same graph.
  Var logits(std::span<const Var> bound, Var x) const;

  Tensor forward_logits(const Tensor& x) const;
  Tensor energy_marginal(const Tensor& x) const;
  Tensor energy_joint(const Tensor& x, const Labels& y) const;
  // Throws DomainError unless ||x_adv - x_ref||_inf <= eps + 1e-9 row-wise.
  Tensor energy_adv_conditional(const Tensor& x_adv, const Tensor& x_ref, double eps) const;
  Tensor class_posterior(const Tensor& x) const;
  // Argmax of the logits, ties to the smallest index.
  Labels predict(const Tensor& x) const;

  std::size_t dim() const override { return spec_.input_dim(); }
  Tensor energy(const Tensor& x) const override { return energy_marginal(x); }
  Tensor energy_grad(const Tensor& x, Tensor* energies = nullptr) const override;
  // d E(x_i, y_i) / d x_i.
  Tensor joint_energy_grad(const Tensor& x, const Labels& y, Tensor* energies = nullptr) const;

 private:
  void check_input(const Tensor& x) const;

  MlpSpec spec_;
  Params params_;
};

// Energies on a recorded graph.
Var energy_marginal(Var logits);
Var energy_joint(Var logits, std::span<const int> y);

}  // namespace ebjdat

#endif  // EBJDAT_MODEL_HPP_
