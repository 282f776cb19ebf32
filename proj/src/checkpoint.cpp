#include "gali/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace gali {

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw CheckpointError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_entries(const CheckpointEntries& entries, const std::string& path) {
  std::vector<std::uint8_t> buf;
  buf.push_back('G');
  buf.push_back('A');
  buf.push_back('L');
  buf.push_back('I');
  put_u32(buf, kCheckpointVersion);
  put_u32(buf, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    for (char c : name) buf.push_back(static_cast<std::uint8_t>(c));
    put_u32(buf, static_cast<std::uint32_t>(tensor.rank()));
    for (int d = 0; d < tensor.rank(); ++d) put_u32(buf, static_cast<std::uint32_t>(tensor.dim(d)));
    for (std::size_t i = 0; i < tensor.size(); ++i) put_f32(buf, static_cast<float>(tensor[i]));
  }
  put_u64(buf, fnv1a64(buf.data(), buf.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw CheckpointError("short write to checkpoint: " + path);
}

CheckpointEntries load_entries(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 12 + 8) throw CheckpointError("checkpoint truncated");

  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(buf[buf.size() - 8 + static_cast<std::size_t>(i)]) << (8 * i);
  if (fnv1a64(buf.data(), buf.size() - 8) != stored)
    throw CheckpointError("checkpoint digest mismatch: " + path);

  Reader r{buf};
  if (r.str(4) != "GALI") throw CheckpointError("bad checkpoint magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32();

  CheckpointEntries entries;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const std::uint32_t rank = r.u32();
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(r.f32());
    entries.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos != buf.size() - 8) throw CheckpointError("checkpoint has trailing bytes");
  return entries;
}

CheckpointEntries collect_entries(ModelBundle& m) {
  CheckpointEntries entries;
  for (const auto& [name, p] : m.params.entries()) entries.emplace_back(name, p.value);
  int idx = 0;
  for (DenseLayer* layer : m.dis_layers()) {
    if (layer->sn_enabled) {
      entries.emplace_back("sn_u." + std::to_string(idx), layer->sn_u);
      entries.emplace_back("sn_v." + std::to_string(idx), layer->sn_v);
    }
    ++idx;
  }
  return entries;
}

void save_checkpoint(ModelBundle& m, const std::string& path) {
  save_entries(collect_entries(m), path);
}

void load_checkpoint(ModelBundle& m, const std::string& path) {
  const CheckpointEntries entries = load_entries(path);
  std::size_t applied = 0;
  for (const auto& [name, tensor] : entries) {
    if (name.rfind("sn_u.", 0) == 0 || name.rfind("sn_v.", 0) == 0) {
      const int idx = std::stoi(name.substr(5));
      auto layers = m.dis_layers();
      if (idx < 0 || idx >= static_cast<int>(layers.size()))
        throw CheckpointError("checkpoint names unknown sn state " + name);
      if (name[3] == 'u')
        layers[static_cast<std::size_t>(idx)]->sn_u = tensor;
      else
        layers[static_cast<std::size_t>(idx)]->sn_v = tensor;
      ++applied;
      continue;
    }
    if (!m.params.contains(name))
      throw CheckpointError("checkpoint parameter not in model: " + name);
    Parameter& p = m.params.at(name);
    if (p.value.shape() != tensor.shape())
      throw CheckpointError("checkpoint shape mismatch for " + name);
    p.value = tensor;
    ++applied;
  }
  const std::size_t expected = collect_entries(m).size();
  if (applied != expected)
    throw CheckpointError("checkpoint entry count mismatch: model expects " +
                          std::to_string(expected) + ", file has " + std::to_string(applied));
  // converged sigma estimates for the loaded weights, without disturbing the
  // persisted power-iteration state (keeps save(load(m)) byte-identical)
  for (DenseLayer* layer : m.dis_layers()) {
    if (!layer->sn_enabled) continue;
    const Tensor u = layer->sn_u;
    const Tensor v = layer->sn_v;
    spectral_normalize_certified(*layer);
    layer->sn_u = u;
    layer->sn_v = v;
  }
}

void save_feature_net(const ParamStore& params, const std::string& path) {
  CheckpointEntries entries;
  for (const auto& [name, p] : params.entries()) entries.emplace_back(name, p.value);
  save_entries(entries, path);
}

void load_feature_net(ParamStore& params, const std::string& path) {
  for (const auto& [name, tensor] : load_entries(path)) {
    if (!params.contains(name)) throw CheckpointError("feature net parameter not in model: " + name);
    Parameter& p = params.at(name);
    if (p.value.shape() != tensor.shape())
      throw CheckpointError("feature net shape mismatch for " + name);
    p.value = tensor;
  }
}

}  // namespace gali
