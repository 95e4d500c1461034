#include "lomar/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lomar/error.hpp"

namespace lomar {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'L', 'M', 'C', 'K'};

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out_.insert(out_.end(), p, p + sizeof(U));
  }
  void bytes(std::span<const std::byte> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void text(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes(std::as_bytes(std::span(s.data(), s.size())));
  }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  std::span<const std::byte> bytes(std::size_t n, const char* what) {
    if (n > in_.size() - pos_) {
      throw CheckpointError(CheckpointError::Kind::truncated, std::string("checkpoint truncated reading ") + what);
    }
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U get(const char* what) {
    U v;
    std::memcpy(&v, bytes(sizeof(U), what).data(), sizeof(U));
    return v;
  }
  std::string text(const char* what) {
    const auto n = get<std::uint32_t>(what);
    const auto b = bytes(n, what);
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

template <typename Src, typename Dst>
void convert(const std::byte* src, std::span<Dst> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    Src v;
    std::memcpy(&v, src + i * sizeof(Src), sizeof(Src));
    out[i] = static_cast<Dst>(v);
  }
}

}  // namespace

template <typename T>
CheckpointTensor CheckpointTensor::pack(std::string name, const Shape& shape, std::span<const T> values) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  if (shape_size(shape) != values.size()) throw DimensionError("checkpoint tensor " + name + ": shape/size mismatch");
  CheckpointTensor t;
  t.name = std::move(name);
  t.shape = shape;
  t.dtype = sizeof(T) == 4 ? DType::f32 : DType::f64;
  const auto raw = std::as_bytes(values);
  t.bytes.assign(raw.begin(), raw.end());
  return t;
}

template <typename T>
void CheckpointTensor::unpack(std::span<T> out) const {
  if (out.size() != element_count()) {
    throw CheckpointError(CheckpointError::Kind::malformed,
                          "checkpoint tensor " + name + " has " + std::to_string(element_count()) +
                              " elements, expected " + std::to_string(out.size()));
  }
  if (dtype == DType::f32) {
    convert<float>(bytes.data(), out);
  } else {
    convert<double>(bytes.data(), out);
  }
}

template CheckpointTensor CheckpointTensor::pack<float>(std::string, const Shape&, std::span<const float>);
template CheckpointTensor CheckpointTensor::pack<double>(std::string, const Shape&, std::span<const double>);
template void CheckpointTensor::unpack<float>(std::span<float>) const;
template void CheckpointTensor::unpack<double>(std::span<double>) const;

const CheckpointTensor& Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint has no tensor named " + name);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(std::as_bytes(std::span(kMagic)));
  w.put(kCheckpointVersion);
  w.text(ckpt.config_text);
  w.put(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.text(t.name);
    w.put(static_cast<std::uint8_t>(t.dtype));
    w.put(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put(static_cast<std::uint32_t>(d));
    w.bytes(t.bytes);
  }
  w.text(ckpt.rng_state);
  w.put(ckpt.step);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::bad_magic, "not a checkpoint (bad magic)");
  }
  r.bytes(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          "checkpoint version " + std::to_string(version) + ", this build reads " +
                              std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  ckpt.config_text = r.text("config");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.text("tensor name");
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != 4 && dtype != 8) {
      throw CheckpointError(CheckpointError::Kind::malformed, "tensor " + t.name + " has unknown dtype");
    }
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 8) throw CheckpointError(CheckpointError::Kind::malformed, "tensor " + t.name + " rank");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint32_t>("dims");
      if (d == 0) throw CheckpointError(CheckpointError::Kind::malformed, "tensor " + t.name + " has a zero dim");
      t.shape.push_back(d);
      n *= d;
      if (n > (std::uint64_t{1} << 32)) {
        throw CheckpointError(CheckpointError::Kind::malformed, "tensor " + t.name + " too large");
      }
    }
    const auto payload = r.bytes(static_cast<std::size_t>(n) * dtype, "tensor payload");
    t.bytes.assign(payload.begin(), payload.end());
    ckpt.tensors.push_back(std::move(t));
  }
  ckpt.rng_state = r.text("rng state");
  ckpt.step = r.get<std::uint64_t>("step");
  if (!r.done()) throw CheckpointError(CheckpointError::Kind::malformed, "trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::as_bytes(std::span(raw.data(), raw.size())));
}

}  // namespace lomar
