#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "socnn/optim.hpp"
#include "socnn/tensor.hpp"

namespace socnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Ordered list of named 64-bit tensors.
///
/// Layout (all integers little-endian):
///   "SOC1" | u32 version | u32 count |
///   count × (u32 name_len | name | u32 rank | rank × u64 dim | numel × f64) |
///   u32 crc32 of every preceding byte
class Checkpoint {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  void put(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return find(name) != nullptr; }
  const Tensor* find(const std::string& name) const;
  /// Throws FormatError when absent.
  const Tensor& at(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<std::uint8_t> serialize() const;
  /// Throws FormatError on bad magic, unsupported version, truncation,
  /// trailing garbage or CRC mismatch.
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  /// Written through a temporary file and renamed into place.
  void save(const std::filesystem::path& file) const;
  static Checkpoint load(const std::filesystem::path& file);

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);

 private:
  std::vector<Entry> entries_;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size);

/// Stores every parameter under its name (and momentum buffers under
/// "velocity/<name>" when allocated).
template <typename T>
void store_params(Checkpoint& ckpt, const ParamSet<T>& params);

/// Restores every parameter of `params` from `ckpt`. Throws FormatError when
/// an entry is missing or its shape differs.
template <typename T>
void restore_params(ParamSet<T>& params, const Checkpoint& ckpt);

}  // namespace socnn
