#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "dpr/encoder.hpp"
#include "dpr/mining.hpp"
#include "dpr/synthetic.hpp"
#include "dpr/training.hpp"

namespace dpr {

/// Line-oriented key=value settings. Blank lines and lines starting with '#'
/// are ignored; whitespace around keys and values is trimmed. Values are
/// consumed through typed getters so that leftover (unknown) keys can be
/// reported.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::string& path);

  /// Sets or overrides a value (command-line flags win over files).
  void set(const std::string& key, std::string value);
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  std::optional<std::string> take_string(const std::string& key);
  std::optional<std::uint64_t> take_u64(const std::string& key);
  std::optional<double> take_double(const std::string& key);
  std::optional<bool> take_bool(const std::string& key);

  /// Throws naming every key no getter consumed.
  void require_all_used() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

/// Parses "1:h" (or a bare "h") into h.
std::size_t parse_ratio(std::string_view text);

/// Each apply_* reads `<prefix><field>` keys into the struct, leaving
/// unspecified fields untouched, then validates it.
void apply_train_config(KeyValueConfig& kv, const std::string& prefix, TrainConfig& config);
void apply_cross_config(KeyValueConfig& kv, const std::string& prefix, CrossTrainConfig& config);
void apply_mining_config(KeyValueConfig& kv, const std::string& prefix, MiningConfig& config);
void apply_synthetic_spec(KeyValueConfig& kv, const std::string& prefix, SyntheticSpec& spec);
void apply_dual_shape(KeyValueConfig& kv, const std::string& prefix, DualEncoderShape& shape);
void apply_cross_shape(KeyValueConfig& kv, const std::string& prefix, CrossEncoderShape& shape);

}  // namespace dpr
