#include "ebjdat/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "ebjdat/errors.hpp"

namespace ebjdat {

using nlohmann::ordered_json;

std::string_view optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "adam";
}

std::string_view ce_target_name(CeTarget t) {
  switch (t) {
    case CeTarget::kAdvOnly:
      return "adv-only";
    case CeTarget::kCleanPlusAdv:
      return "clean-plus-adv";
    case CeTarget::kCleanOnly:
      return "clean-only";
  }
  return "adv-only";
}

std::string_view init_mode_name(InitMode m) {
  return m == InitMode::kUniformBox ? "uniform-box" : "data-plus-noise";
}

std::string_view data_kind_name(DataKind k) {
  switch (k) {
    case DataKind::kRing:
      return "ring";
    case DataKind::kMoons:
      return "moons";
    case DataKind::kCsv:
      return "csv";
    case DataKind::kIdx:
      return "idx";
  }
  return "ring";
}

namespace {

// Reads keys from one JSON object and rejects whatever was not read.
class Section {
 public:
  Section(const ordered_json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("'" + name_ + "' must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("'" + name_ + "." + key + "' has the wrong type");
    }
  }

  std::optional<ordered_json> sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return *it;
  }

  template <typename Enum, typename Parse>
  void read_enum(const char* key, Enum& out, Parse parse) {
    std::string s;
    read(key, s);
    if (!s.empty()) out = parse(s);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown key '" + (name_.empty() ? "" : name_ + ".") + it.key() + "'");
      }
    }
  }

 private:
  const ordered_json& j_;
  std::string name_;
  std::set<std::string, std::less<>> seen_;
};

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

CeTarget parse_ce_target(const std::string& s) {
  if (s == "adv-only") return CeTarget::kAdvOnly;
  if (s == "clean-plus-adv") return CeTarget::kCleanPlusAdv;
  if (s == "clean-only") return CeTarget::kCleanOnly;
  throw ConfigError("unknown ce_target '" + s + "'");
}

InitMode parse_init_mode(const std::string& s) {
  if (s == "uniform-box") return InitMode::kUniformBox;
  if (s == "data-plus-noise") return InitMode::kDataPlusNoise;
  throw ConfigError("unknown init_mode '" + s + "'");
}

DataKind parse_data_kind(const std::string& s) {
  if (s == "ring") return DataKind::kRing;
  if (s == "moons") return DataKind::kMoons;
  if (s == "csv") return DataKind::kCsv;
  if (s == "idx") return DataKind::kIdx;
  throw ConfigError("unknown data kind '" + s + "'");
}

Activation parse_activation_cfg(const std::string& s) { return parse_activation(s); }

DomainBox parse_box(const ordered_json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError("'box' must be [lo, hi]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  train.sampler.seed = s + 1;
  train.attack.seed = s + 2;
}

MlpSpec RunConfig::mlp_spec(std::size_t input_dim, std::size_t num_classes) const {
  MlpSpec spec;
  spec.layer_dims.clear();
  spec.layer_dims.push_back(input_dim);
  spec.layer_dims.insert(spec.layer_dims.end(), hidden.begin(), hidden.end());
  spec.layer_dims.push_back(num_classes);
  spec.activation = activation;
  spec.seed = seed;
  if (!layer_dims.empty() && layer_dims != spec.layer_dims) {
    throw ConfigError("model.layer_dims does not match the data and hidden sizes");
  }
  spec.validate();
  return spec;
}

void RunConfig::validate() const {
  if (schema_version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
  }
  if (hidden.empty()) throw ConfigError("model.hidden needs at least one layer");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("model.hidden sizes must be positive");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  train.validate();
}

RunConfig parse_run_config(const ordered_json& j) {
  RunConfig cfg;
  Section top(j, "");
  top.read("schema_version", cfg.schema_version);
  std::uint64_t seed = 0;
  top.read("seed", seed);
  top.read("output_dir", cfg.output_dir);
  std::string mode;
  top.read("mode", mode);

  if (auto m = top.sub("model")) {
    Section s(*m, "model");
    s.read("hidden", cfg.hidden);
    s.read("layer_dims", cfg.layer_dims);
    s.read_enum("activation", cfg.activation, parse_activation_cfg);
    s.finish();
  }
  TrainConfig& t = cfg.train;
  if (auto m = top.sub("train")) {
    Section s(*m, "train");
    s.read("w1", t.w1);
    s.read("w2", t.w2);
    s.read("w3", t.w3);
    s.read("lr", t.lr);
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    s.read("m_theta", t.m_theta);
    s.read_enum("optimizer", t.optimizer, parse_optimizer);
    s.read_enum("ce_target", t.ce_target, parse_ce_target);
    s.read("divergence_threshold", t.divergence_threshold);
    s.read("max_consecutive_divergent", t.max_consecutive_divergent);
    s.finish();
  }
  if (auto m = top.sub("sampler")) {
    Section s(*m, "sampler");
    SamplerConfig& sc = t.sampler;
    s.read("steps", sc.steps);
    s.read("step_size", sc.step_size);
    s.read("buffer_size", sc.buffer_size);
    s.read("reinit_prob", sc.reinit_prob);
    s.read_enum("init_mode", sc.init_mode, parse_init_mode);
    s.read("init_noise_sigma", sc.init_noise_sigma);
    if (auto b = s.sub("box")) sc.box = parse_box(*b);
    s.finish();
  }
  if (auto m = top.sub("attack")) {
    Section s(*m, "attack");
    AttackConfig& ac = t.attack;
    s.read("epsilon", ac.epsilon);
    s.read("steps", ac.steps);
    s.read("step_size", ac.step_size);
    s.read("add_noise", ac.add_noise);
    s.read("random_start", ac.random_start);
    s.finish();
  }
  if (auto m = top.sub("data")) {
    Section s(*m, "data");
    DataSpec& d = cfg.data;
    s.read_enum("kind", d.kind, parse_data_kind);
    s.read("seed", d.seed);
    s.read("classes", d.classes);
    s.read("n_per_class", d.n_per_class);
    s.read("test_per_class", d.test_per_class);
    s.read("radius", d.radius);
    s.read("sigma", d.sigma);
    s.read("n", d.n);
    s.read("test_n", d.test_n);
    s.read("noise", d.noise);
    s.read("train_path", d.train_path);
    s.read("test_path", d.test_path);
    s.read("label_column", d.label_column);
    s.read("train_images", d.train_images);
    s.read("train_labels", d.train_labels);
    s.read("test_images", d.test_images);
    s.read("test_labels", d.test_labels);
    s.read("max_n", d.max_n);
    s.finish();
  }
  top.finish();

  // The attack and sampler share the data domain.
  t.attack.box = t.sampler.box;
  cfg.apply_seed(seed);
  cfg.validate();
  if (!mode.empty() && mode != t.mode_label()) {
    throw ConfigError("mode '" + mode + "' disagrees with the loss weights ('" + t.mode_label() +
                      "')");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

ordered_json run_config_to_json(const RunConfig& cfg, const MlpSpec* spec) {
  const TrainConfig& t = cfg.train;
  ordered_json j;
  j["schema_version"] = cfg.schema_version;
  j["seed"] = cfg.seed;
  j["mode"] = t.mode_label();
  j["output_dir"] = cfg.output_dir;
  ordered_json model;
  model["hidden"] = cfg.hidden;
  if (spec != nullptr) {
    model["layer_dims"] = spec->layer_dims;
  } else if (!cfg.layer_dims.empty()) {
    model["layer_dims"] = cfg.layer_dims;
  }
  model["activation"] = activation_name(cfg.activation);
  j["model"] = model;
  j["train"] = {{"w1", t.w1},
                {"w2", t.w2},
                {"w3", t.w3},
                {"lr", t.lr},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"m_theta", t.m_theta},
                {"optimizer", optimizer_name(t.optimizer)},
                {"ce_target", ce_target_name(t.ce_target)},
                {"divergence_threshold", t.divergence_threshold},
                {"max_consecutive_divergent", t.max_consecutive_divergent}};
  const SamplerConfig& s = t.sampler;
  j["sampler"] = {{"steps", s.steps},
                  {"step_size", s.step_size},
                  {"buffer_size", s.buffer_size},
                  {"reinit_prob", s.reinit_prob},
                  {"init_mode", init_mode_name(s.init_mode)},
                  {"init_noise_sigma", s.init_noise_sigma},
                  {"box", {s.box.lo, s.box.hi}}};
  const AttackConfig& a = t.attack;
  j["attack"] = {{"epsilon", a.epsilon},
                 {"steps", a.steps},
                 {"step_size", a.step_size},
                 {"add_noise", a.add_noise},
                 {"random_start", a.random_start}};
  const DataSpec& d = cfg.data;
  ordered_json data;
  data["kind"] = data_kind_name(d.kind);
  data["seed"] = d.seed;
  switch (d.kind) {
    case DataKind::kRing:
      data["classes"] = d.classes;
      data["n_per_class"] = d.n_per_class;
      data["test_per_class"] = d.test_per_class;
      data["radius"] = d.radius;
      data["sigma"] = d.sigma;
      break;
    case DataKind::kMoons:
      data["n"] = d.n;
      data["test_n"] = d.test_n;
      data["noise"] = d.noise;
      break;
    case DataKind::kCsv:
      data["train_path"] = d.train_path;
      data["test_path"] = d.test_path;
      data["label_column"] = d.label_column;
      break;
    case DataKind::kIdx:
      data["train_images"] = d.train_images;
      data["train_labels"] = d.train_labels;
      data["test_images"] = d.test_images;
      data["test_labels"] = d.test_labels;
      data["max_n"] = d.max_n;
      break;
  }
  j["data"] = data;
  return j;
}

std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("EBJD_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (end == nullptr || *end != '\0' || *v == '-') {
    throw ConfigError(std::string("EBJD_SEED must be an unsigned integer, got '") + v + "'");
  }
  return static_cast<std::uint64_t>(s);
}

}  // namespace ebjdat
