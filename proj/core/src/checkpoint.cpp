#include "socnn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "socnn/errors.hpp"

namespace socnn {

namespace {

constexpr char kMagic[4] = {'S', 'O', 'C', '1'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw FormatError("checkpoint: truncated data");
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void Checkpoint::put(const std::string& name, Tensor value) {
  for (auto& e : entries_) {
    if (e.name == name) {
      e.value = std::move(value);
      return;
    }
  }
  entries_.push_back({name, std::move(value)});
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e.value;
  return nullptr;
}

const Tensor& Checkpoint::at(const std::string& name) const {
  const Tensor* t = find(name);
  if (t == nullptr) throw FormatError("checkpoint: missing entry '" + name + "'");
  return *t;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    const auto& dims = e.value.shape().dims();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
    for (std::size_t d : dims) put_le<std::uint64_t>(out, d);
    for (double v : e.value.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  put_le<std::uint32_t>(out, crc32_of(out.data(), out.size()));
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (std::size_t i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (crc32_of(bytes.data(), body) != stored) throw FormatError("checkpoint: CRC mismatch");

  Reader in(bytes, body);
  in.str(4);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t n = 0; n < count; ++n) {
    const auto name_len = in.get<std::uint32_t>();
    std::string name = in.str(name_len);
    const auto rank = in.get<std::uint32_t>();
    std::vector<std::size_t> dims(rank);
    std::size_t numel = 1;
    for (auto& d : dims) {
      d = static_cast<std::size_t>(in.get<std::uint64_t>());
      if (d != 0 && numel > in.remaining() / d) throw FormatError("checkpoint: truncated data");
      numel *= d;
    }
    if (numel > in.remaining() / 8) throw FormatError("checkpoint: truncated data");
    Tensor value{Shape(dims)};
    for (double& v : value.data()) v = std::bit_cast<double>(in.get<std::uint64_t>());
    if (ckpt.contains(name)) throw FormatError("checkpoint: duplicate entry '" + name + "'");
    ckpt.entries_.push_back({std::move(name), std::move(value)});
  }
  if (in.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& file) const {
  const auto bytes = serialize();
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("checkpoint: cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

Checkpoint Checkpoint::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + file.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].name != b.entries_[i].name) return false;
    const auto& x = a.entries_[i].value;
    const auto& y = b.entries_[i].value;
    if (x.shape() != y.shape()) return false;
    // Bitwise, so NaN payloads and signed zeros count.
    if (std::memcmp(x.raw(), y.raw(), x.numel() * sizeof(double)) != 0) return false;
  }
  return true;
}

template <typename T>
void store_params(Checkpoint& ckpt, const ParamSet<T>& params) {
  for (const auto& p : params.items()) {
    ckpt.put(p.name, p.value.template cast<double>());
    if (p.velocity.shape() == p.value.shape()) {
      ckpt.put("velocity/" + p.name, p.velocity.template cast<double>());
    }
  }
}

template <typename T>
void restore_params(ParamSet<T>& params, const Checkpoint& ckpt) {
  for (auto& p : params.items()) {
    const Tensor& v = ckpt.at(p.name);
    if (v.shape() != p.value.shape()) {
      throw FormatError("checkpoint: shape mismatch for '" + p.name + "': stored " +
                        v.shape().str() + ", model " + p.value.shape().str());
    }
    p.value = v.template cast<T>();
    if (const Tensor* vel = ckpt.find("velocity/" + p.name); vel != nullptr) {
      if (vel->shape() != p.value.shape()) throw FormatError("checkpoint: bad velocity shape");
      p.velocity = vel->template cast<T>();
    }
  }
}

template void store_params(Checkpoint&, const ParamSet<float>&);
template void store_params(Checkpoint&, const ParamSet<double>&);
template void restore_params(ParamSet<float>&, const Checkpoint&);
template void restore_params(ParamSet<double>&, const Checkpoint&);

}  // namespace socnn
