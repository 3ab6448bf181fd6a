#include "lidarnl/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "lidarnl/errors.hpp"
#include "lidarnl/scan_io.hpp"

namespace lidarnl {
namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFU));
    }
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str32(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  std::span<const std::byte> bytes(std::size_t n) {
    if (n > in_.size() - pos_) {
      throw LengthError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T le() {
    auto s = bytes(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(s[i]) << (8 * i));
    }
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str(std::size_t n) {
    auto s = bytes(n);
    return std::string(reinterpret_cast<const char*>(s.data()), n);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.le(kCheckpointVersion);
  w.le(ck.seed);
  w.le(ck.config_hash);
  w.le(static_cast<std::uint64_t>(ck.config_text.size()));
  w.bytes(ck.config_text.data(), ck.config_text.size());
  w.le(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const NamedTensor& t : ck.tensors) {
    w.str32(t.name);
    w.le(static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) w.le(static_cast<std::uint64_t>(d));
    for (double v : t.value.data()) w.f64(v);
  }
  return w.take();
}

Checkpoint parse_checkpoint(std::span<const std::byte> bytes) {
  Reader r(bytes);
  auto magic = r.bytes(sizeof(kCheckpointMagic));
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw ValueError("not a checkpoint file (bad magic)");
  }
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ValueError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.seed = r.le<std::uint64_t>();
  ck.config_hash = r.le<std::uint64_t>();
  const auto text_len = r.le<std::uint64_t>();
  if (text_len > bytes.size()) throw LengthError("checkpoint config text overruns the file");
  ck.config_text = r.str(static_cast<std::size_t>(text_len));
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = r.str(r.le<std::uint32_t>());
    const auto rank = r.le<std::uint32_t>();
    if (rank > 8) throw ValueError("checkpoint tensor '" + t.name + "' has rank > 8");
    ad::Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.le<std::uint64_t>());
      if (d != 0 && n > bytes.size() / d) throw LengthError("checkpoint tensor too large");
      n *= d;
    }
    if (n > bytes.size() / 8) throw LengthError("checkpoint tensor overruns the file");
    std::vector<double> data(n);
    for (double& v : data) v = r.f64();
    t.value = ad::Tensor(std::move(shape), std::move(data));
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw LengthError("trailing bytes after checkpoint tensors");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_bytes(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file_bytes(path));
}

Checkpoint make_checkpoint(const Model& model, std::uint64_t seed, std::uint64_t config_hash,
                           std::string config_text) {
  Checkpoint ck{seed, config_hash, std::move(config_text), {}};
  for (const Parameter& p : model.params()) ck.tensors.push_back({p.name, p.value});
  return ck;
}

Model model_from_checkpoint(const Checkpoint& ck, const NetworkConfig& cfg) {
  Model m(cfg);
  for (Parameter& p : m.params()) {
    const NamedTensor* found = nullptr;
    for (const NamedTensor& t : ck.tensors) {
      if (t.name == p.name) found = &t;
    }
    if (found == nullptr) throw ShapeError("checkpoint lacks parameter '" + p.name + "'");
    if (found->value.shape() != p.value.shape()) {
      throw ShapeError("checkpoint parameter '" + p.name + "' has shape " +
                       ad::to_string(found->value.shape()) + ", model expects " +
                       ad::to_string(p.value.shape()));
    }
    p.value = found->value;
  }
  if (ck.tensors.size() != m.params().size()) {
    throw ShapeError("checkpoint holds tensors the model does not know");
  }
  return m;
}

}  // namespace lidarnl
