#include "ebjdat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "ebjdat/errors.hpp"

namespace ebjdat {

namespace {

constexpr char kMagic[4] = {'E', 'B', 'J', 'D'};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) u64(e);
    for (double v : t.data()) f64(v);
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> b, std::string what) : b_(b), what_(std::move(what)) {}

  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_++]} << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> take(std::uint64_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 8) fail("bad tensor rank");
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& e : shape) {
      e = u64();
      if (e == 0 || e > (1ull << 32)) fail("bad tensor extent");
      n *= e;
    }
    if (n > remaining() / 8) fail("truncated tensor");
    std::vector<double> data(n);
    for (auto& v : data) v = f64();
    try {
      return Tensor(std::move(shape), std::move(data));
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }
  [[noreturn]] void fail(const std::string& msg) const {
    throw CheckpointError("checkpoint " + what_ + ": " + msg);
  }

 private:
  void need(std::uint64_t n) const {
    if (n > remaining()) fail("truncated");
  }

  std::span<const std::uint8_t> b_;
  std::string what_;
  std::size_t pos_ = 0;
};

void put_section(ByteWriter& out, const std::string& name, ByteWriter& payload) {
  out.str(name);
  out.u64(payload.buffer().size());
  out.bytes(payload.buffer());
}

}  // namespace

Checkpoint make_checkpoint(const RunConfig& cfg, const Trainer& trainer) {
  const MlpSpec& spec = trainer.model().spec();
  return Checkpoint{kSchemaVersion, run_config_to_json(cfg, &spec).dump(2), cfg, trainer.state()};
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  const TrainerState& st = ck.state;
  ByteWriter out;
  for (char c : kMagic) out.u8(static_cast<std::uint8_t>(c));
  out.u32(ck.schema_version);

  ByteWriter config;
  config.bytes({reinterpret_cast<const std::uint8_t*>(ck.config_json.data()),
                ck.config_json.size()});
  put_section(out, "config", config);

  const MlpSpec& spec = st.model.spec();
  ByteWriter sp;
  sp.u32(static_cast<std::uint32_t>(spec.layer_dims.size()));
  for (auto d : spec.layer_dims) sp.u64(d);
  sp.u8(spec.activation == Activation::kSwish ? 0 : 1);
  sp.u64(spec.seed);
  put_section(out, "spec", sp);

  ByteWriter params;
  params.u32(static_cast<std::uint32_t>(st.model.params().size()));
  for (const auto& p : st.model.params()) {
    params.str(p.name);
    params.tensor(p.value);
  }
  put_section(out, "params", params);

  ByteWriter buffer;
  buffer.tensor(st.buffer.entries());
  buffer.f64(st.buffer.box().lo);
  buffer.f64(st.buffer.box().hi);
  buffer.str(st.buffer.rng().serialize());
  put_section(out, "buffer", buffer);

  ByteWriter rng;
  rng.str(st.rng.serialize());
  put_section(out, "rng", rng);

  ByteWriter opt;
  opt.u8(st.optimizer.kind == OptimizerKind::kSgd ? 0 : 1);
  opt.u64(st.optimizer.t);
  opt.u32(static_cast<std::uint32_t>(st.optimizer.m.size()));
  for (const auto& t : st.optimizer.m) opt.tensor(t);
  for (const auto& t : st.optimizer.v) opt.tensor(t);
  put_section(out, "optimizer", opt);

  const TrainProgress& pr = st.progress;
  ByteWriter prog;
  prog.u64(pr.epoch);
  prog.u64(pr.batch_index);
  prog.u64(pr.global_step);
  prog.i32(pr.consecutive_divergent);
  prog.f64(pr.sum_l_gen);
  prog.f64(pr.sum_l_adv_gap);
  prog.f64(pr.sum_l_ce);
  prog.f64(pr.sum_total);
  prog.u64(pr.ok_steps);
  prog.u64(pr.diverged_steps);
  prog.f64(pr.gap_abs_sum);
  prog.f64(pr.gap_sum);
  prog.f64(pr.gap_sq_sum);
  prog.u64(pr.gap_count);
  put_section(out, "progress", prog);

  ByteWriter log;
  log.u32(static_cast<std::uint32_t>(st.epochs.size()));
  for (const auto& r : st.epochs) {
    log.i32(r.epoch);
    for (double v : {r.l_gen, r.l_adv_gap, r.l_ce, r.total, r.clean_acc, r.gap_mean, r.gap_var}) {
      log.f64(v);
    }
    log.i32(r.diverged);
  }
  put_section(out, "log", log);
  return std::move(out.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "header");
  for (char c : kMagic) {
    if (in.remaining() == 0 || in.u8() != static_cast<std::uint8_t>(c)) {
      throw CheckpointError("not a checkpoint (bad magic)");
    }
  }
  const std::uint32_t version = in.u32();
  if (version != kSchemaVersion) {
    throw VersionError("checkpoint schema_version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kSchemaVersion) + ")");
  }
  std::map<std::string, std::span<const std::uint8_t>> sections;
  while (!in.done()) {
    std::string name = in.str();
    const std::uint64_t len = in.u64();
    sections[name] = in.take(len);
  }
  auto section = [&](const char* name) {
    auto it = sections.find(name);
    if (it == sections.end()) throw CheckpointError(std::string("missing section '") + name + "'");
    return ByteReader(it->second, name);
  };

  auto cfg_bytes = sections.count("config") ? sections["config"] : std::span<const std::uint8_t>{};
  if (!sections.count("config")) throw CheckpointError("missing section 'config'");
  std::string config_json(reinterpret_cast<const char*>(cfg_bytes.data()), cfg_bytes.size());
  RunConfig cfg;
  try {
    cfg = parse_run_config(nlohmann::ordered_json::parse(config_json));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt config section: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("config section rejected: ") + e.what());
  }

  ByteReader sp = section("spec");
  MlpSpec spec;
  spec.layer_dims.resize(sp.u32());
  if (spec.layer_dims.size() > 64) sp.fail("implausible layer count");
  for (auto& d : spec.layer_dims) d = sp.u64();
  spec.activation = sp.u8() == 0 ? Activation::kSwish : Activation::kLeakyRelu;
  spec.seed = sp.u64();

  ByteReader pr_in = section("params");
  Params params(pr_in.u32());
  if (params.size() > 128) pr_in.fail("implausible parameter count");
  for (auto& p : params) {
    p.name = pr_in.str();
    p.value = pr_in.tensor();
  }

  ByteReader bf = section("buffer");
  Tensor entries = bf.tensor();
  DomainBox box{bf.f64(), bf.f64()};
  Rng buffer_rng = Rng::deserialize(bf.str());

  ByteReader rg = section("rng");
  Rng rng = Rng::deserialize(rg.str());

  ByteReader op = section("optimizer");
  OptimizerState opt;
  opt.kind = op.u8() == 0 ? OptimizerKind::kSgd : OptimizerKind::kAdam;
  opt.t = op.u64();
  const std::uint32_t nm = op.u32();
  if (nm > 128) op.fail("implausible moment count");
  for (std::uint32_t i = 0; i < nm; ++i) opt.m.push_back(op.tensor());
  for (std::uint32_t i = 0; i < nm; ++i) opt.v.push_back(op.tensor());

  ByteReader pg = section("progress");
  TrainProgress pr;
  pr.epoch = pg.u64();
  pr.batch_index = pg.u64();
  pr.global_step = pg.u64();
  pr.consecutive_divergent = pg.i32();
  pr.sum_l_gen = pg.f64();
  pr.sum_l_adv_gap = pg.f64();
  pr.sum_l_ce = pg.f64();
  pr.sum_total = pg.f64();
  pr.ok_steps = pg.u64();
  pr.diverged_steps = pg.u64();
  pr.gap_abs_sum = pg.f64();
  pr.gap_sum = pg.f64();
  pr.gap_sq_sum = pg.f64();
  pr.gap_count = pg.u64();

  ByteReader lg = section("log");
  std::vector<EpochRecord> epochs(lg.u32());
  if (epochs.size() > lg.remaining()) lg.fail("implausible log length");
  for (auto& r : epochs) {
    r.epoch = lg.i32();
    for (double* v : {&r.l_gen, &r.l_adv_gap, &r.l_ce, &r.total, &r.clean_acc, &r.gap_mean,
                      &r.gap_var}) {
      *v = lg.f64();
    }
    r.diverged = lg.i32();
  }

  try {
    EnergyModel model(spec, std::move(params));
    ReplayBuffer buffer(std::move(entries), box, std::move(buffer_rng));
    TrainerState state{std::move(model), std::move(buffer), std::move(rng), std::move(opt), pr,
                       std::move(epochs)};
    return Checkpoint{version, std::move(config_json), std::move(cfg), std::move(state)};
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ck);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace ebjdat
