#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace socnn {

/// Flat `key = value` run configuration with `#` comments and dotted keys.
/// Every key is declared up front with a type and default, so typos and
/// malformed values are rejected when set.
class RunConfig {
 public:
  enum class Kind { Text, Integer, Real, Boolean, List };

  struct Key {
    std::string name;
    Kind kind;
    std::string value;
    std::string help;
  };

  RunConfig();

  static RunConfig parse(std::string_view text, std::string_view origin = "<config>");
  static RunConfig load(const std::filesystem::path& file);

  /// Throws ConfigError for unknown keys or values of the wrong type.
  void set(const std::string& key, const std::string& value);
  bool known(const std::string& key) const;

  const std::string& text(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;  ///< non-negative integer
  std::uint64_t u64(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::size_t> list(const std::string& key) const;

  const std::vector<Key>& keys() const { return keys_; }

  /// Every key with its resolved value; parse(to_text()) reproduces *this.
  std::string to_text() const;
  void write(const std::filesystem::path& file) const;

 private:
  const Key& lookup(const std::string& key) const;
  std::vector<Key> keys_;
};

}  // namespace socnn
