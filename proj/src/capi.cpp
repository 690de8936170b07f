#include "ebjdat/ebjdat.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "ebjdat/commands.hpp"
#include "ebjdat/errors.hpp"

struct ebjd_checkpoint {
  ebjdat::Checkpoint value;
};

namespace {

thread_local std::string g_last_error;

ebjd_status fail(ebjd_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
ebjd_status guarded(F&& f) {
  g_last_error.clear();
  try {
    return f();
  } catch (const ebjdat::TrainingAborted& e) {
    return fail(EBJD_DIVERGED, e.what());
  } catch (const ebjdat::DivergenceError& e) {
    return fail(EBJD_DIVERGED, e.what());
  } catch (const ebjdat::CheckpointError& e) {
    return fail(EBJD_CHECKPOINT_ERROR, e.what());
  } catch (const ebjdat::ConfigError& e) {
    return fail(EBJD_CONFIG_ERROR, e.what());
  } catch (const ebjdat::ParseError& e) {
    return fail(EBJD_CONFIG_ERROR, e.what());
  } catch (const std::exception& e) {
    return fail(EBJD_ERROR, e.what());
  } catch (...) {
    return fail(EBJD_ERROR, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p == nullptr) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

std::string str_or(const char* s, const char* fallback) {
  return s != nullptr ? std::string(s) : std::string(fallback);
}

template <typename T>
std::optional<T> opt(int has, T v) {
  return has ? std::optional<T>(v) : std::nullopt;
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw std::invalid_argument(std::string(what) + " is NULL");
}

}  // namespace

extern "C" {

const char* ebjd_last_error(void) { return g_last_error.c_str(); }

const char* ebjd_version(void) { return "1.0.0"; }

void ebjd_free_string(char* s) { std::free(s); }

ebjd_status ebjd_train(const ebjd_train_args* args, char** summary_json) {
  return guarded([&] {
    require(args, "args");
    require(args->config_path, "config_path");
    ebjdat::TrainRequest req;
    req.config_path = args->config_path;
    if (args->resume) req.resume = args->resume;
    req.seed = opt(args->has_seed, args->seed);
    if (args->output_dir) req.output_dir = args->output_dir;
    const ebjdat::TrainOutcome out = ebjdat::cmd_train(req);

    nlohmann::ordered_json j;
    j["mode"] = out.mode;
    j["epochs_completed"] = out.epochs_completed;
    j["checkpoint"] = out.checkpoint.string();
    j["output_dir"] = out.output_dir.string();
    j["aborted_epoch"] = out.aborted_epoch ? nlohmann::ordered_json(*out.aborted_epoch)
                                           : nlohmann::ordered_json(nullptr);
    if (summary_json) *summary_json = dup_string(j.dump(2) + "\n");
    if (out.aborted_epoch) {
      return fail(EBJD_DIVERGED,
                  "training diverged; aborted at epoch " + std::to_string(*out.aborted_epoch));
    }
    return EBJD_OK;
  });
}

namespace {

void fill(const ebjd_attack_args& a, std::filesystem::path& ckpt, std::string& data,
          std::optional<double>& eps, std::optional<int>& steps,
          std::optional<std::uint64_t>& seed) {
  require(a.checkpoint, "checkpoint");
  ckpt = a.checkpoint;
  data = str_or(a.data, "test");
  eps = opt(a.has_eps, a.eps);
  steps = opt(a.has_steps, a.steps);
  seed = opt(a.has_seed, a.seed);
}

}  // namespace

ebjd_status ebjd_eval(const ebjd_attack_args* args, const char* output_dir,
                      char** metrics_json) {
  return guarded([&] {
    require(args, "args");
    ebjdat::EvalRequest req;
    fill(*args, req.checkpoint, req.data, req.eps, req.steps, req.seed);
    if (output_dir) req.output_dir = output_dir;
    std::string text;
    ebjdat::cmd_eval(req, &text);
    if (metrics_json) *metrics_json = dup_string(text);
    return EBJD_OK;
  });
}

ebjd_status ebjd_attack(const ebjd_attack_args* args, const char* out_csv) {
  return guarded([&] {
    require(args, "args");
    require(out_csv, "out_csv");
    ebjdat::AttackRequest req;
    fill(*args, req.checkpoint, req.data, req.eps, req.steps, req.seed);
    req.out = out_csv;
    ebjdat::cmd_attack(req);
    return EBJD_OK;
  });
}

ebjd_status ebjd_sample(const ebjd_sample_args* args) {
  return guarded([&] {
    require(args, "args");
    require(args->checkpoint, "checkpoint");
    require(args->out_csv, "out_csv");
    ebjdat::SampleRequest req;
    req.checkpoint = args->checkpoint;
    req.n = args->n;
    req.init = str_or(args->init, "uniform");
    req.steps = opt(args->has_steps, args->steps);
    req.sigma = opt(args->has_sigma, args->sigma);
    req.seed = opt(args->has_seed, args->seed);
    req.out = args->out_csv;
    ebjdat::cmd_sample(req);
    return EBJD_OK;
  });
}

ebjd_status ebjd_report(const ebjd_report_args* args, char** report_json) {
  return guarded([&] {
    require(args, "args");
    ebjdat::ReportRequest req;
    fill(args->attack, req.checkpoint, req.data, req.eps, req.steps, req.seed);
    req.bins = args->bins;
    req.n_gen = args->n_gen;
    req.gen_init = str_or(args->gen_init, "uniform");
    req.gen_steps = opt(args->has_gen_steps, args->gen_steps);
    if (args->output_dir) req.output_dir = args->output_dir;
    const ebjdat::EnergyReport rep = ebjdat::cmd_report(req);
    if (report_json) *report_json = dup_string(ebjdat::report_json_text(rep));
    return EBJD_OK;
  });
}

ebjd_status ebjd_checkpoint_load(const char* path, ebjd_checkpoint** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ebjd_checkpoint{ebjdat::load_checkpoint(path)};
    return EBJD_OK;
  });
}

ebjd_status ebjd_checkpoint_save(const ebjd_checkpoint* ck, const char* path) {
  return guarded([&] {
    require(ck, "checkpoint");
    require(path, "path");
    ebjdat::save_checkpoint(ck->value, path);
    return EBJD_OK;
  });
}

void ebjd_checkpoint_free(ebjd_checkpoint* ck) { delete ck; }

size_t ebjd_checkpoint_input_dim(const ebjd_checkpoint* ck) {
  return ck ? ck->value.state.model.dim() : 0;
}

size_t ebjd_checkpoint_num_classes(const ebjd_checkpoint* ck) {
  return ck ? ck->value.state.model.num_classes() : 0;
}

size_t ebjd_checkpoint_epochs(const ebjd_checkpoint* ck) {
  return ck ? ck->value.state.epochs.size() : 0;
}

namespace {

ebjdat::Tensor rows(const ebjd_checkpoint* ck, const double* x, size_t n) {
  require(ck, "checkpoint");
  require(x, "x");
  const size_t d = ck->value.state.model.dim();
  return ebjdat::Tensor({n, d}, std::vector<double>(x, x + n * d));
}

}  // namespace

ebjd_status ebjd_checkpoint_predict(const ebjd_checkpoint* ck, const double* x, size_t n,
                                    int* labels) {
  return guarded([&] {
    require(labels, "labels");
    const auto y = ck->value.state.model.predict(rows(ck, x, n));
    std::copy(y.begin(), y.end(), labels);
    return EBJD_OK;
  });
}

ebjd_status ebjd_checkpoint_energy(const ebjd_checkpoint* ck, const double* x, size_t n,
                                   double* energies) {
  return guarded([&] {
    require(energies, "energies");
    const ebjdat::Tensor e = ck->value.state.model.energy_marginal(rows(ck, x, n));
    std::copy(e.data().begin(), e.data().end(), energies);
    return EBJD_OK;
  });
}

}  // extern "C"
