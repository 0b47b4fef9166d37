#pragma once

// Line-oriented run configuration: `section.key = value`, `#` comments.
// Every known key has a default, so an empty file is a complete config.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace vqr {

/// "k/255"-style fractions or plain decimals. Throws FormatError.
double parse_epsilon(std::string_view text);
/// Comma-separated epsilons.
std::vector<double> parse_epsilon_list(std::string_view text);
/// Shortest text that parses back to exactly `value`.
std::string format_real(double value);

class RunConfig {
 public:
  /// All known keys at their defaults.
  RunConfig();

  /// Defaults overridden by the assignments in `text`. Unknown keys, missing
  /// '=' and ill-typed values are errors naming the line.
  static RunConfig parse(std::string_view text, const std::string& origin = "config");

  /// Applies one "section.key=value" override.
  void apply(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  /// Sorted "section.key = value" lines.
  std::string serialize() const;
  std::uint64_t hash() const;

  const std::string& get(const std::string& key) const;
  std::string str(const std::string& key) const { return get(key); }
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  double epsilon(const std::string& key) const;
  std::vector<double> epsilons(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  bool operator==(const RunConfig&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace vqr
