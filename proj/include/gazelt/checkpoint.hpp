#ifndef GAZELT_CHECKPOINT_HPP
#define GAZELT_CHECKPOINT_HPP

// Checkpoint file, little-endian:
//   "GZLT" | u32 version | u32 meta_len | meta JSON (UTF-8) | u32 n_tensors |
//   n × (u16 name_len | name | u8 rank | rank × u32 dim | float32 payload) |
//   u64 FNV-1a of every byte after the magic

#include <array>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gazelt/error.hpp"
#include "gazelt/hva.hpp"
#include "gazelt/optim.hpp"

namespace gazelt::io {

inline constexpr std::array<char, 4> kCheckpointMagic{'G', 'Z', 'L', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<float> values;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  std::string stage;        // "teacher" or "student"
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();  // architecture and training summaries
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  using hva::detail::put_f32;
  using hva::detail::put_u32;
  std::ostringstream body;
  put_u32(body, kCheckpointVersion);
  const std::string meta =
      nlohmann::json{{"stage", ck.stage}, {"config_hash", ck.config_hash}, {"seed", ck.seed}, {"extra", ck.extra}}
          .dump();
  put_u32(body, static_cast<std::uint32_t>(meta.size()));
  body.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put_u32(body, static_cast<std::uint32_t>(ck.tensors.size()));
  std::set<std::string> seen;
  for (const auto& t : ck.tensors) {
    if (!seen.insert(t.name).second) throw ValidationError("duplicate tensor name '" + t.name + "' in checkpoint");
    if (t.name.empty() || t.name.size() > 0xffff) throw ValidationError("bad tensor name length");
    if (t.shape.size() > 0xff) throw ValidationError("tensor rank too large: " + t.name);
    if (ad::numel_of(t.shape) != t.values.size()) throw ValidationError("tensor '" + t.name + "' size mismatch");
    detail::put_u16(body, static_cast<std::uint16_t>(t.name.size()));
    body.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    const char rank = static_cast<char>(t.shape.size());
    body.write(&rank, 1);
    for (auto d : t.shape) put_u32(body, static_cast<std::uint32_t>(d));
    for (float v : t.values) put_f32(body, v);
  }
  const std::string bytes = body.str();
  out.write(kCheckpointMagic.data(), 4);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  const std::uint64_t sum = fnv1a64(bytes);
  put_u32(out, static_cast<std::uint32_t>(sum & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(sum >> 32));
  if (!out) throw DataError("failed to write checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  const std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::istringstream is(all);
  hva::detail::Reader r(is);
  std::array<char, 4> magic{};
  r.read(magic.data(), 4, "magic");
  if (magic != kCheckpointMagic) throw FormatError(0, "bad checkpoint magic");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) throw FormatError(4, "unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  const auto meta_len = r.u32("metadata length");
  std::string meta(meta_len, '\0');
  r.read(meta.data(), meta_len, "metadata");
  try {
    auto j = nlohmann::json::parse(meta);
    ck.stage = j.at("stage").get<std::string>();
    ck.config_hash = j.at("config_hash").get<std::string>();
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.extra = j.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(12, std::string("bad checkpoint metadata: ") + e.what());
  }
  const auto n = r.u32("tensor count");
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    const auto at = r.offset();
    const auto len = r.u16("name length");
    t.name.resize(len);
    r.read(t.name.data(), len, "tensor name");
    if (!seen.insert(t.name).second) throw FormatError(at, "duplicate tensor '" + t.name + "'");
    const auto rank = r.u8("rank");
    for (std::uint8_t k = 0; k < rank; ++k) t.shape.push_back(r.u32("dims"));
    t.values.resize(ad::numel_of(t.shape));
    for (auto& v : t.values) v = r.f32("tensor payload");
    ck.tensors.push_back(std::move(t));
  }
  const auto body_end = r.offset();
  const std::uint64_t stored = r.u64("checksum");
  if (!r.at_end()) throw FormatError(r.offset(), "trailing bytes after checkpoint");
  if (stored != fnv1a64(std::string_view(all).substr(4, body_end - 4)))
    throw FormatError(body_end, "checkpoint checksum mismatch");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  write_checkpoint(f, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(f);
}

inline void require_stage(const Checkpoint& ck, const std::string& stage) {
  if (ck.stage != stage)
    throw ConfigError("checkpoint stage is '" + ck.stage + "' but a '" + stage + "' checkpoint is required");
}

template <class Real>
void append_params(Checkpoint& ck, const ad::ParamSet<Real>& ps) {
  for (const auto& p : ps.params())
    ck.tensors.push_back({p.name, p.tensor.shape(), std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
}

/// Fills every parameter of `ps` from the checkpoint. Tensors whose name
/// starts with `prefix` must all belong to `ps`.
template <class Real>
void load_params(const Checkpoint& ck, ad::ParamSet<Real>& ps, const std::string& prefix) {
  for (const auto& t : ck.tensors)
    if (t.name.rfind(prefix, 0) == 0 && !ps.contains(t.name))
      throw FormatError(0, "unknown tensor '" + t.name + "' in " + ck.stage + " checkpoint");
  for (auto& p : ps.params()) {
    const auto* t = ck.find(p.name);
    if (!t) throw FormatError(0, "checkpoint lacks tensor '" + p.name + "'");
    if (t->shape != p.tensor.shape())
      throw FormatError(0, "tensor '" + p.name + "' has shape " + ad::to_string(t->shape) + ", expected " +
                               ad::to_string(p.tensor.shape()));
    auto dst = p.tensor.mutable_data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<Real>(t->values[k]);
  }
}

}  // namespace gazelt::io

#endif  // GAZELT_CHECKPOINT_HPP
