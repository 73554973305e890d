#include "casgnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "casgnn/errors.hpp"

namespace casgnn {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'S', 'G', 'N', 'N', '0', '1'};

struct Writer {
  std::vector<std::uint8_t> bytes;

  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    bytes.push_back(v & 0xFF);
    bytes.push_back((v >> 8) & 0xFF);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back((v >> (8 * i)) & 0xFF);
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back((v >> (8 * i)) & 0xFF);
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void tensor(const std::string& name, const Shape& shape, const std::vector<float>& data) {
    if (name.size() > 0xFFFF) throw UsageError("tensor name too long: " + name);
    u16(static_cast<std::uint16_t>(name.size()));
    bytes.insert(bytes.end(), name.begin(), name.end());
    u8(4);
    u32(static_cast<std::uint32_t>(shape.n));
    u32(static_cast<std::uint32_t>(shape.c));
    u32(static_cast<std::uint32_t>(shape.h));
    u32(static_cast<std::uint32_t>(shape.w));
    for (float v : data) f32(v);
  }
};

struct Reader {
  std::string path;
  std::vector<std::uint8_t> bytes;
  std::size_t pos = 0;

  explicit Reader(const std::string& p) : path(p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p + " for reading");
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path + ": " + what + " at byte offset " + std::to_string(pos));
  }

  void need(std::size_t n, const char* what) {
    if (bytes.size() - pos < n) fail(std::string("truncated file, expected ") + what);
  }

  std::uint8_t u8() {
    need(1, "u8");
    return bytes[pos++];
  }
  std::uint16_t u16() {
    need(2, "u16");
    std::uint16_t v = bytes[pos] | (bytes[pos + 1] << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }

  std::pair<std::string, TensorF> tensor() {
    const std::uint16_t name_len = u16();
    need(name_len, "tensor name");
    std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;
    const std::uint8_t rank = u8();
    if (rank != 4) fail("unsupported tensor rank " + std::to_string(rank));
    Shape shape;
    shape.n = static_cast<int>(u32());
    shape.c = static_cast<int>(u32());
    shape.h = static_cast<int>(u32());
    shape.w = static_cast<int>(u32());
    if (!shape.valid() || shape.size() > (std::size_t(1) << 30)) {
      fail("implausible tensor shape " + shape.str());
    }
    const std::size_t count = shape.size();
    need(count * 4, "tensor data");
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t raw = 0;
      std::memcpy(&raw, bytes.data() + pos + 4 * i, 4);
      data[i] = std::bit_cast<float>(raw);
    }
    pos += count * 4;
    return {std::move(name), TensorF::from(shape, std::move(data))};
  }
};

std::vector<std::pair<std::string, TensorF>> config_tensors(const ModelConfig& c) {
  std::vector<std::pair<std::string, TensorF>> out;
  const auto scalar = [&](const std::string& key, float v) {
    out.emplace_back("cfg." + key, TensorF::scalar(v));
  };
  scalar("mode", static_cast<float>(static_cast<int>(c.mode)));
  scalar("input_h", static_cast<float>(c.input_h));
  scalar("input_w", static_cast<float>(c.input_w));
  scalar("node_channels", static_cast<float>(c.node_channels));
  scalar("scales", static_cast<float>(c.scales_per_modality));
  scalar("iterations", static_cast<float>(c.iterations));
  scalar("levels", static_cast<float>(c.levels()));
  // 32-bit seed split into exact float-representable halves
  out.emplace_back("cfg.seed", TensorF::from({1, 1, 1, 2},
                                             {static_cast<float>(c.seed & 0xFFFF),
                                              static_cast<float>(c.seed >> 16)}));
  for (int i = 0; i < c.levels(); ++i) {
    scalar("level_channels." + std::to_string(i), static_cast<float>(c.level_channels[i]));
  }
  return out;
}

ModelConfig config_from_tensors(const std::map<std::string, TensorF>& cfg,
                                const std::string& path) {
  const auto get = [&](const std::string& key) -> const TensorF& {
    const auto it = cfg.find("cfg." + key);
    if (it == cfg.end()) throw FormatError(path + ": missing config entry cfg." + key);
    return it->second;
  };
  ModelConfig c;
  const int mode = static_cast<int>(get("mode").item());
  if (mode < 0 || mode > 2) throw FormatError(path + ": invalid cfg.mode");
  c.mode = static_cast<Mode>(mode);
  c.input_h = static_cast<int>(get("input_h").item());
  c.input_w = static_cast<int>(get("input_w").item());
  c.node_channels = static_cast<int>(get("node_channels").item());
  c.scales_per_modality = static_cast<int>(get("scales").item());
  c.iterations = static_cast<int>(get("iterations").item());
  const TensorF& seed = get("seed");
  if (seed.size() != 2) throw FormatError(path + ": invalid cfg.seed");
  c.seed = static_cast<std::uint32_t>(seed.data()[0]) |
           (static_cast<std::uint32_t>(seed.data()[1]) << 16);
  const int levels = static_cast<int>(get("levels").item());
  c.level_channels.clear();
  for (int i = 0; i < levels; ++i) {
    c.level_channels.push_back(
        static_cast<int>(get("level_channels." + std::to_string(i)).item()));
  }
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, Model<float>& model,
                     const AdamState<float>* adam, std::uint64_t step) {
  Writer w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 8);
  w.u32(1);

  const auto cfg = config_tensors(model.config);
  auto named = model.named_parameters();
  w.u32(static_cast<std::uint32_t>(cfg.size() + named.size()));
  for (const auto& [name, tensor] : cfg) w.tensor(name, tensor.shape(), tensor.data());
  for (auto& [name, tensor] : named) w.tensor(name, tensor.shape(), tensor.data());

  if (adam != nullptr) {
    if (adam->slots() != named.size()) {
      throw UsageError("optimizer slots do not match model parameters");
    }
    w.u32(static_cast<std::uint32_t>(2 * named.size()));
    for (std::size_t i = 0; i < named.size(); ++i) {
      w.tensor("adam.m." + named[i].first, named[i].second.shape(), adam->first_moment(i));
      w.tensor("adam.v." + named[i].first, named[i].second.shape(), adam->second_moment(i));
    }
  } else {
    w.u32(0);
  }
  w.u64(step);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  Reader r(path);
  r.need(8, "magic");
  if (std::memcmp(r.bytes.data(), kMagic, 8) != 0) {
    throw FormatError(path + ": bad magic at byte offset 0");
  }
  r.pos = 8;
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != 1) {
    throw FormatError(path + ": unsupported version " + std::to_string(ckpt.version));
  }

  const std::uint32_t tensor_count = r.u32();
  std::map<std::string, TensorF> cfg;
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    auto [name, tensor] = r.tensor();
    if (name.starts_with("cfg.")) {
      cfg.emplace(std::move(name), std::move(tensor));
    } else {
      ckpt.params.emplace_back(std::move(name), std::move(tensor));
    }
  }
  ckpt.config = config_from_tensors(cfg, path);

  const std::uint32_t opt_count = r.u32();
  for (std::uint32_t i = 0; i < opt_count; ++i) {
    auto [name, tensor] = r.tensor();
    ckpt.optimizer.emplace_back(std::move(name), std::move(tensor.data()));
  }
  ckpt.step = r.u64();
  if (r.pos != r.bytes.size()) {
    throw FormatError(path + ": trailing bytes at offset " + std::to_string(r.pos));
  }
  return ckpt;
}

Model<float> restore_model(const Checkpoint& ckpt) {
  Model<float> model = Model<float>::init(ckpt.config);
  std::map<std::string, const TensorF*> stored;
  for (const auto& [name, tensor] : ckpt.params) stored[name] = &tensor;

  std::size_t assigned = 0;
  model.visit_params([&](const std::string& name, TensorF& target) {
    const auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("checkpoint missing parameter " + name);
    if (!(it->second->shape() == target.shape())) {
      throw FormatError("checkpoint parameter " + name + " has shape " +
                        it->second->shape().str() + ", expected " + target.shape().str());
    }
    target.data() = it->second->data();
    ++assigned;
  });
  if (assigned != stored.size()) {
    throw FormatError("checkpoint holds " + std::to_string(stored.size()) +
                      " parameters, model expects " + std::to_string(assigned));
  }
  return model;
}

AdamState<float> restore_adam(const Checkpoint& ckpt, Model<float>& model,
                              const AdamHyper& hyper) {
  AdamState<float> adam(hyper);
  auto params = model.parameters();
  adam.attach(params);
  adam.set_step_count(ckpt.step);
  if (ckpt.optimizer.empty()) return adam;

  std::map<std::string, const std::vector<float>*> stored;
  for (const auto& [name, data] : ckpt.optimizer) stored[name] = &data;
  std::size_t slot = 0;
  model.visit_params([&](const std::string& name, TensorF& target) {
    const auto m = stored.find("adam.m." + name);
    const auto v = stored.find("adam.v." + name);
    if (m == stored.end() || v == stored.end()) {
      throw FormatError("checkpoint missing optimizer state for " + name);
    }
    if (m->second->size() != target.size() || v->second->size() != target.size()) {
      throw FormatError("optimizer state size mismatch for " + name);
    }
    adam.first_moment(slot) = *m->second;
    adam.second_moment(slot) = *v->second;
    ++slot;
  });
  return adam;
}

}  // namespace casgnn
