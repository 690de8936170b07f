#include "ebjdat/sampler.hpp"

#include <cmath>

#include "ebjdat/errors.hpp"

namespace ebjdat {

bool DomainBox::contains(const Tensor& t) const {
  for (double v : t.data()) {
    if (v < lo || v > hi) return false;
  }
  return true;
}

void DomainBox::clamp_inplace(Tensor& t) const {
  for (double& v : t.data()) v = clamp(v);
}

void SamplerConfig::validate(std::size_t batch_size) const {
  if (steps < 0) throw ConfigError("sampler.steps must be >= 0");
  if (!(step_size >= 0)) throw ConfigError("sampler.step_size must be >= 0");
  if (buffer_size == 0) throw ConfigError("sampler.buffer_size must be positive");
  if (batch_size > 0 && buffer_size < batch_size) {
    throw ConfigError("sampler.buffer_size must be at least the batch size");
  }
  if (!(reinit_prob >= 0 && reinit_prob <= 1)) {
    throw ConfigError("sampler.reinit_prob must lie in [0,1]");
  }
  if (!(init_noise_sigma >= 0)) throw ConfigError("sampler.init_noise_sigma must be >= 0");
  if (!(box.lo < box.hi)) throw ConfigError("sampler box needs lo < hi");
}

Tensor uniform_box(std::size_t n, std::size_t dim, const DomainBox& box, Rng& rng) {
  Tensor t({n, dim});
  for (double& v : t.data()) v = rng.uniform(box.lo, box.hi);
  return t;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t dim, const DomainBox& box,
                           std::uint64_t seed)
    : box_(box), rng_(seed) {
  entries_ = uniform_box(capacity, dim, box_, rng_);
}

ReplayBuffer::ReplayBuffer(Tensor entries, const DomainBox& box, Rng rng)
    : entries_(std::move(entries)), box_(box), rng_(std::move(rng)) {
  if (entries_.rank() != 2) throw DimensionError("replay buffer entries must be a matrix");
  if (!box_.contains(entries_)) throw DomainError("replay buffer entries outside the box");
}

void ReplayBuffer::reinitialize() {
  entries_ = uniform_box(capacity(), dim(), box_, rng_);
}

void ReplayBuffer::write(std::span<const std::size_t> slots, const Tensor& rows) {
  if (rows.rows() != slots.size() || rows.cols() != dim()) {
    throw DimensionError("replay buffer write: shape mismatch");
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto dst = entries_.row(slots[i]);
    auto src = rows.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = box_.clamp(src[j]);
  }
}

Tensor sgld_step(const EnergySurface& energy, const Tensor& x, const SamplerConfig& cfg,
                 const Tensor& noise) {
  if (noise.shape() != x.shape()) throw DimensionError("sgld_step: noise shape mismatch");
  const double c = cfg.step_size;
  Tensor out = x;
  if (c == 0.0) return out;
  const Tensor grad = energy.energy_grad(x);
  if (!grad.all_finite()) throw DivergenceError("sgld_step: non-finite energy gradient");
  const double drift = 0.5 * c * c;
  for (std::size_t i = 0; i < out.size(); ++i) {
    // grad log p = -grad E
    out[i] = cfg.box.clamp(out[i] - drift * grad[i] + c * noise[i]);
  }
  return out;
}

Tensor sgld_step(const EnergySurface& energy, const Tensor& x, const SamplerConfig& cfg,
                 Rng& rng) {
  Tensor noise(x.shape());
  for (double& v : noise.data()) v = rng.normal();
  return sgld_step(energy, x, cfg, noise);
}

Tensor run_chain(const EnergySurface& energy, Tensor start, const SamplerConfig& cfg, int steps,
                 Rng& rng) {
  for (int s = 0; s < steps; ++s) start = sgld_step(energy, start, cfg, rng);
  return start;
}

Tensor sample_negatives(const EnergySurface& energy, ReplayBuffer& buffer, std::size_t batch,
                        const SamplerConfig& cfg, const Tensor* data) {
  cfg.validate();
  if (batch == 0 || batch > buffer.capacity()) {
    throw ConfigError("sample_negatives: batch must be in [1, buffer capacity]");
  }
  if (cfg.init_mode == InitMode::kDataPlusNoise && data == nullptr) {
    throw ConfigError("sample_negatives: data-plus-noise init requires data");
  }
  Rng& rng = buffer.rng();
  std::vector<std::size_t> slots(batch);
  for (auto& s : slots) s = buffer.capacity() == 1 ? 0 : rng.index(buffer.capacity());
  Tensor x = buffer.entries().gather_rows(slots);
  for (std::size_t i = 0; i < batch; ++i) {
    if (rng.uniform() >= cfg.reinit_prob) continue;
    auto r = x.row(i);
    if (cfg.init_mode == InitMode::kUniformBox) {
      for (double& v : r) v = rng.uniform(cfg.box.lo, cfg.box.hi);
    } else {
      auto src = data->row(rng.index(data->rows()));
      for (std::size_t j = 0; j < r.size(); ++j) {
        r[j] = cfg.box.clamp(src[j] + cfg.init_noise_sigma * rng.normal());
      }
    }
  }
  x = run_chain(energy, std::move(x), cfg, cfg.steps, rng);
  buffer.write(slots, x);
  return x;
}

Tensor informative_init(const Tensor& data, std::size_t batch, double sigma, Rng& rng,
                        const DomainBox& box) {
  if (data.empty() || data.rank() != 2) throw DimensionError("informative_init: empty data");
  if (batch == 0) throw DimensionError("informative_init: batch must be positive");
  Tensor out({batch, data.cols()});
  for (std::size_t i = 0; i < batch; ++i) {
    auto src = data.row(rng.index(data.rows()));
    auto dst = out.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) {
      const double noise = sigma > 0 ? sigma * rng.normal() : 0.0;
      dst[j] = box.clamp(src[j] + noise);
    }
  }
  return out;
}

Tensor informative_init(const Tensor& data, std::size_t batch, double sigma,
                        std::uint64_t seed, const DomainBox& box) {
  Rng rng(seed);
  return informative_init(data, batch, sigma, rng, box);
}

Tensor QuadraticEnergy::energy(const Tensor& x) const {
  Tensor e({x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    e[i] = 0.5 * s;
  }
  return e;
}

Tensor QuadraticEnergy::energy_grad(const Tensor& x, Tensor* energies) const {
  if (x.cols() != dim_) throw DimensionError("QuadraticEnergy: dim mismatch");
  if (energies != nullptr) *energies = energy(x);
  return x;
}

}  // namespace ebjdat
