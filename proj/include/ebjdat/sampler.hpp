#ifndef EBJDAT_SAMPLER_HPP_
#define EBJDAT_SAMPLER_HPP_

// Stochastic gradient Langevin dynamics with a persistent replay buffer.
//
//   x <- clamp(x - (c^2 / 2) dE/dx + c * eps),  eps ~ N(0, I)
//
// which is the unadjusted Langevin chain for p(x) ~ exp(-E(x)) with step
// c^2 / 2, clamped to the domain box after every step.

#include <cstdint>
#include <optional>

#include "ebjdat/model.hpp"
#include "ebjdat/rng.hpp"
#include "ebjdat/tensor.hpp"

namespace ebjdat {

// Same bounds on every coordinate.
struct DomainBox {
  double lo = -1.0;
  double hi = 1.0;

  double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
  bool contains(const Tensor& t) const;
  void clamp_inplace(Tensor& t) const;

  bool operator==(const DomainBox&) const = default;
};

enum class InitMode { kUniformBox, kDataPlusNoise };

struct SamplerConfig {
  int steps = 20;
  double step_size = 0.1;
  std::size_t buffer_size = 1000;
  double reinit_prob = 0.05;
  InitMode init_mode = InitMode::kUniformBox;
  double init_noise_sigma = 0.05;
  DomainBox box;
  std::uint64_t seed = 0;

  // Throws ConfigError. batch_size 0 skips the buffer-capacity check.
  void validate(std::size_t batch_size = 0) const;

  bool operator==(const SamplerConfig&) const = default;
};

Tensor uniform_box(std::size_t n, std::size_t dim, const DomainBox& box, Rng& rng);

class ReplayBuffer {
 public:
  // Filled with uniform draws from the box.
  ReplayBuffer(std::size_t capacity, std::size_t dim, const DomainBox& box, std::uint64_t seed);
  ReplayBuffer(Tensor entries, const DomainBox& box, Rng rng);

  std::size_t capacity() const { return entries_.rows(); }
  std::size_t dim() const { return entries_.cols(); }
  const Tensor& entries() const { return entries_; }
  const DomainBox& box() const { return box_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

  // Redraws every slot uniformly from the box.
  void reinitialize();
  void write(std::span<const std::size_t> slots, const Tensor& rows);

 private:
  Tensor entries_;
  DomainBox box_;
  Rng rng_;
};

// One Langevin update with the supplied standard-normal noise.
Tensor sgld_step(const EnergySurface& energy, const Tensor& x, const SamplerConfig& cfg,
                 const Tensor& noise);
Tensor sgld_step(const EnergySurface& energy, const Tensor& x, const SamplerConfig& cfg,
                 Rng& rng);

// `steps` Langevin updates from `start`.
Tensor run_chain(const EnergySurface& energy, Tensor start, const SamplerConfig& cfg,
                 int steps, Rng& rng);

// Persistent contrastive negatives: B slots are drawn from the buffer, each
// restarted with probability reinit_prob, advanced cfg.steps times, and
// written back. `data` is required for kDataPlusNoise.
Tensor sample_negatives(const EnergySurface& energy, ReplayBuffer& buffer, std::size_t batch,
                        const SamplerConfig& cfg, const Tensor* data = nullptr);

// B training rows drawn with replacement, plus N(0, sigma^2) noise, clamped.
Tensor informative_init(const Tensor& data, std::size_t batch, double sigma, Rng& rng,
                        const DomainBox& box = {});
Tensor informative_init(const Tensor& data, std::size_t batch, double sigma,
                        std::uint64_t seed, const DomainBox& box = {});

// E(x) = ||x||^2 / 2, i.e. a standard normal density.
class QuadraticEnergy : public EnergySurface {
 public:
  explicit QuadraticEnergy(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  Tensor energy(const Tensor& x) const override;
  Tensor energy_grad(const Tensor& x, Tensor* energies = nullptr) const override;

 private:
  std::size_t dim_;
};

}  // namespace ebjdat

#endif  // EBJDAT_SAMPLER_HPP_
