#include "ebjdat/trainer.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <tuple>

#include "ebjdat/errors.hpp"

namespace ebjdat {

void TrainConfig::validate() const {
  if (w1 < 0 || w2 < 0 || w3 < 0) throw ConfigError("loss weights must be >= 0");
  if (w1 == 0 && w2 == 0 && w3 == 0) throw ConfigError("at least one loss weight must be > 0");
  if (!(lr >= 0)) throw ConfigError("lr must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (m_theta < 1) throw ConfigError("m_theta must be >= 1");
  if (max_consecutive_divergent < 1) throw ConfigError("max_consecutive_divergent must be >= 1");
  if (!(divergence_threshold > 0)) throw ConfigError("divergence_threshold must be > 0");
  sampler.validate(w1 > 0 ? batch_size : 0);
  attack.validate();
}

std::string TrainConfig::mode_label() const {
  if (w1 == 0 && w2 == 0) return ce_target == CeTarget::kCleanOnly ? "standard" : "AT-only";
  if (w2 == 0) return "JEM";
  if (w1 == 0) return "adv-energy";
  return "EB-JDAT";
}

// ---------------------------------------------------------------------------
// Objective

namespace {

Var cross_entropy(Var logits, const Labels& y) {
  return mean(sub(logsumexp_rows(logits), pick(logits, y)));
}

void accumulate_term(std::optional<Var>& total, Var term, double w) {
  Var scaled = scale(term, w);
  total = total ? add(*total, scaled) : scaled;
}

}  // namespace

ObjectiveResult compute_objective(const EnergyModel& model, const Tensor& x, const Labels& y,
                                  const Tensor& x_neg, const Tensor& x_adv,
                                  const ObjectiveWeights& w, CeTarget ce_target) {
  const bool use_neg = w.w1 > 0;
  const bool have_adv = !x_adv.empty();
  const bool ce_on_adv = ce_target != CeTarget::kCleanOnly;
  if (use_neg && x_neg.empty()) throw UsageError("objective: w1 > 0 needs negatives");
  if ((w.w2 > 0 || (w.w3 > 0 && ce_on_adv)) && !have_adv) {
    throw UsageError("objective: adversarial term needs x_adv");
  }
  if (have_adv && x_adv.shape() != x.shape()) throw DimensionError("objective: x_adv shape");

  Graph g;
  auto bound = model.bind(g, true);
  Var f_x = model.logits(bound, g.constant(x));
  Var e_x = energy_marginal(f_x);
  std::optional<Var> f_adv;
  if (have_adv) f_adv = model.logits(bound, g.constant(x_adv));

  ObjectiveResult res;
  std::optional<Var> total;
  if (use_neg) {
    Var e_neg = energy_marginal(model.logits(bound, g.constant(x_neg)));
    Var l_gen = sub(mean(e_x), mean(e_neg));
    res.losses.l_gen = l_gen.value().item();
    accumulate_term(total, l_gen, w.w1);
  }
  if (have_adv) {
    Var l_adv = sub(mean(energy_marginal(*f_adv)), mean(e_x));
    res.losses.l_adv_gap = l_adv.value().item();
    if (w.w2 > 0) accumulate_term(total, l_adv, w.w2);
  }
  {
    std::optional<Var> l_ce;
    if (ce_target == CeTarget::kCleanOnly) {
      l_ce = cross_entropy(f_x, y);
    } else if (ce_target == CeTarget::kAdvOnly) {
      if (have_adv) l_ce = cross_entropy(*f_adv, y);
    } else if (have_adv) {
      l_ce = add(scale(cross_entropy(f_x, y), 0.5), scale(cross_entropy(*f_adv, y), 0.5));
    }
    if (l_ce) {
      res.losses.l_ce = l_ce->value().item();
      if (w.w3 > 0) accumulate_term(total, *l_ce, w.w3);
    }
  }
  if (!total) throw ConfigError("objective: all loss weights are zero");
  res.losses.total = total->value().item();
  g.backward(*total);
  res.grads.reserve(bound.size());
  for (Var p : bound) res.grads.push_back(g.grad(p));
  return res;
}

double loss_gen(const EnergyModel& model, const Tensor& x_pos, const Tensor& x_neg) {
  const Tensor ep = model.energy_marginal(x_pos);
  const Tensor en = model.energy_marginal(x_neg);
  double sp = 0.0, sn = 0.0;
  for (double v : ep.data()) sp += v;
  for (double v : en.data()) sn += v;
  return sp / static_cast<double>(ep.size()) - sn / static_cast<double>(en.size());
}

double loss_adv_gap(const EnergyModel& model, const Tensor& x, const Tensor& x_adv, double eps) {
  const Tensor ea = model.energy_adv_conditional(x_adv, x, eps);
  const Tensor ex = model.energy_marginal(x);
  double s = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i) s += ea[i] - ex[i];
  return s / static_cast<double>(ea.size());
}

double loss_ce(const EnergyModel& model, const Tensor& x, const Tensor& x_adv, const Labels& y,
               CeTarget mode) {
  auto ce = [&](const Tensor& pts) {
    const Tensor f = model.forward_logits(pts);
    if (y.size() != f.rows()) throw DimensionError("loss_ce: one label per row required");
    double s = 0.0;
    for (std::size_t i = 0; i < f.rows(); ++i) {
      if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= f.cols()) {
        throw DomainError("loss_ce: label out of range");
      }
      s += kernels::logsumexp(f.row(i)) - f.at(i, static_cast<std::size_t>(y[i]));
    }
    return s / static_cast<double>(f.rows());
  };
  switch (mode) {
    case CeTarget::kAdvOnly:
      return ce(x_adv);
    case CeTarget::kCleanOnly:
      return ce(x);
    case CeTarget::kCleanPlusAdv:
      return 0.5 * ce(x) + 0.5 * ce(x_adv);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Optimizer

void optimizer_update(Params& params, const std::vector<Tensor>& grads, double lr,
                      OptimizerState& state) {
  if (grads.size() != params.size()) throw DimensionError("optimizer: gradient count mismatch");
  ++state.t;
  if (state.kind == OptimizerKind::kSgd) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto w = params[p].value.data();
      const auto g = grads[p].data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
    }
    return;
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.shape());
      state.v.emplace_back(p.value.shape());
    }
  }
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(kBeta1, t);
  const double c2 = 1.0 - std::pow(kBeta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].value.data();
    auto m = state.m[p].data();
    auto v = state.v[p].data();
    const auto g = grads[p].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1 - kBeta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
    }
  }
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

constexpr std::uint64_t kTrainerStream = 0x74726e72u;

TrainerState initial_state(const TrainConfig& cfg, const MlpSpec& spec) {
  EnergyModel model(spec);
  ReplayBuffer buffer(cfg.sampler.buffer_size, spec.input_dim(), cfg.sampler.box,
                      cfg.sampler.seed);
  OptimizerState opt;
  opt.kind = cfg.optimizer;
  return TrainerState{std::move(model), std::move(buffer), Rng::keyed({cfg.seed, kTrainerStream}),
                      std::move(opt), TrainProgress{}, {}};
}

double accuracy_of(const EnergyModel& model, const Tensor& x, const Labels& y) {
  const Labels pred = model.predict(x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i];
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, const MlpSpec& spec)
    : cfg_(std::move(cfg)), state_(initial_state(cfg_, spec)) {
  cfg_.validate();
}

Trainer::Trainer(TrainConfig cfg, TrainerState state)
    : cfg_(std::move(cfg)), state_(std::move(state)) {
  cfg_.validate();
  if (state_.buffer.dim() != state_.model.dim()) {
    throw DimensionError("trainer state: buffer and model dims differ");
  }
}

LossBreakdown Trainer::train_step(const Tensor& x, const Labels& y, const Tensor* data) {
  if (x.rank() != 2 || x.rows() != y.size()) throw DimensionError("train_step: batch shape");
  EnergyModel& model = state_.model;
  LossBreakdown out;
  try {
    Tensor x_neg;
    if (cfg_.w1 > 0) {
      x_neg = sample_negatives(model, state_.buffer, x.rows(), cfg_.sampler, data);
    }
    // The adversary also runs when no term consumes x~ so every mode logs
    // the one-to-one energy gap.
    const Tensor x_adv = energy_adversary(model, x, y, cfg_.attack, state_.rng);

    const Tensor e_x = model.energy_marginal(x);
    const Tensor e_adv = model.energy_marginal(x_adv);
    for (std::size_t i = 0; i < e_x.size(); ++i) {
      const double d = e_adv[i] - e_x[i];
      out.gap_sum += d;
      out.gap_abs_sum += std::abs(d);
      out.gap_sq_sum += d * d;
    }
    out.gap_count = e_x.size();

    ObjectiveResult obj = compute_objective(model, x, y, x_neg, x_adv,
                                            {cfg_.w1, cfg_.w2, cfg_.w3}, cfg_.ce_target);
    const auto gaps = std::make_tuple(out.gap_sum, out.gap_abs_sum, out.gap_sq_sum, out.gap_count);
    out = obj.losses;
    std::tie(out.gap_sum, out.gap_abs_sum, out.gap_sq_sum, out.gap_count) = gaps;
    if (!std::isfinite(out.total) || std::abs(out.total) > cfg_.divergence_threshold) {
      out.diverged = true;
    } else {
      for (int t = 0; t < cfg_.m_theta; ++t) {
        optimizer_update(model.mutable_params(), obj.grads, cfg_.lr, state_.optimizer);
      }
    }
  } catch (const NonFiniteError&) {
    out = LossBreakdown{};
    out.diverged = true;
  } catch (const DivergenceError&) {
    out = LossBreakdown{};
    out.diverged = true;
  }

  if (out.diverged) {
    state_.buffer.reinitialize();
    if (++state_.progress.consecutive_divergent >= cfg_.max_consecutive_divergent) {
      const int epoch = static_cast<int>(state_.progress.epoch) + 1;
      throw TrainingAborted(epoch, "training diverged " +
                                       std::to_string(state_.progress.consecutive_divergent) +
                                       " consecutive steps in epoch " + std::to_string(epoch));
    }
  } else {
    state_.progress.consecutive_divergent = 0;
  }
  ++state_.progress.global_step;
  return out;
}

bool Trainer::run_steps(const Dataset& train, std::size_t max_steps,
                        std::vector<LossBreakdown>* steps) {
  TrainProgress& pr = state_.progress;
  const auto idx = batch_indices(train.size(), cfg_.batch_size, cfg_.seed, pr.epoch);
  const Tensor* data = cfg_.sampler.init_mode == InitMode::kDataPlusNoise ? &train.x : nullptr;
  std::size_t done = 0;
  while (pr.batch_index < idx.size() && done < max_steps) {
    const auto& b = idx[pr.batch_index];
    Labels y;
    y.reserve(b.size());
    for (std::size_t i : b) y.push_back(train.y[i]);
    const LossBreakdown l = train_step(train.x.gather_rows(b), y, data);
    if (steps != nullptr) steps->push_back(l);
    if (l.diverged) {
      ++pr.diverged_steps;
    } else {
      pr.sum_l_gen += l.l_gen;
      pr.sum_l_adv_gap += l.l_adv_gap;
      pr.sum_l_ce += l.l_ce;
      pr.sum_total += l.total;
      ++pr.ok_steps;
      pr.gap_sum += l.gap_sum;
      pr.gap_abs_sum += l.gap_abs_sum;
      pr.gap_sq_sum += l.gap_sq_sum;
      pr.gap_count += l.gap_count;
    }
    ++pr.batch_index;
    ++done;
  }
  if (pr.batch_index < idx.size()) return false;
  close_epoch(train);
  return true;
}

EpochRecord Trainer::close_epoch(const Dataset& train) {
  TrainProgress& pr = state_.progress;
  EpochRecord rec;
  rec.epoch = static_cast<int>(pr.epoch) + 1;
  if (pr.ok_steps > 0) {
    const double n = static_cast<double>(pr.ok_steps);
    rec.l_gen = pr.sum_l_gen / n;
    rec.l_adv_gap = pr.sum_l_adv_gap / n;
    rec.l_ce = pr.sum_l_ce / n;
    rec.total = pr.sum_total / n;
  }
  if (pr.gap_count > 0) {
    const double n = static_cast<double>(pr.gap_count);
    const double mu = pr.gap_sum / n;
    rec.gap_mean = pr.gap_abs_sum / n;
    rec.gap_var = std::max(0.0, pr.gap_sq_sum / n - mu * mu);
  }
  rec.diverged = static_cast<int>(pr.diverged_steps);
  rec.clean_acc = accuracy_of(state_.model, train.x, train.y);
  const std::uint64_t step = pr.global_step;
  const int streak = pr.consecutive_divergent;
  pr = TrainProgress{};
  pr.epoch = static_cast<std::uint64_t>(rec.epoch);
  pr.global_step = step;
  pr.consecutive_divergent = streak;
  state_.epochs.push_back(rec);
  return rec;
}

EpochRecord Trainer::run_epoch(const Dataset& train, std::vector<LossBreakdown>* steps) {
  run_steps(train, static_cast<std::size_t>(-1), steps);
  return state_.epochs.back();
}

FitResult fit(Trainer& trainer, const Dataset& train, const EpochCallback& on_epoch) {
  FitResult res;
  if (train.size() == 0) throw ConfigError("fit: empty training set");
  if (train.dim() != trainer.model().dim()) throw DimensionError("fit: data dim != model dim");
  try {
    while (trainer.state().progress.epoch < static_cast<std::uint64_t>(trainer.config().epochs)) {
      const EpochRecord rec = trainer.run_epoch(train, &res.log.steps);
      if (on_epoch) on_epoch(trainer, rec);
    }
  } catch (const TrainingAborted& e) {
    res.aborted_epoch = e.epoch();
  }
  res.params = trainer.model().params();
  res.log.epochs = trainer.state().epochs;
  return res;
}

FitResult fit(const TrainConfig& cfg, const MlpSpec& spec, const Dataset& train,
              const EpochCallback& on_epoch) {
  Trainer trainer(cfg, spec);
  return fit(trainer, train, on_epoch);
}

std::string training_log_csv(const std::vector<EpochRecord>& epochs) {
  std::ostringstream os;
  os << "epoch,l_gen,l_adv_gap,l_ce,total,clean_acc,gap_mean,gap_var,diverged\n";
  char buf[32];
  auto num = [&](double v) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    os.write(buf, p - buf);
  };
  for (const auto& r : epochs) {
    os << r.epoch << ',';
    num(r.l_gen);
    os << ',';
    num(r.l_adv_gap);
    os << ',';
    num(r.l_ce);
    os << ',';
    num(r.total);
    os << ',';
    num(r.clean_acc);
    os << ',';
    num(r.gap_mean);
    os << ',';
    num(r.gap_var);
    os << ',' << r.diverged << '\n';
  }
  return os.str();
}

}  // namespace ebjdat
