#include "dpr/config.hpp"

#include <fstream>
#include <sstream>
#include <type_traits>

#include "dpr/error.hpp"
#include "text_io.hpp"

namespace dpr {

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& origin) {
  KeyValueConfig kv;
  std::size_t no = 0;
  for (auto raw : detail::split(text, '\n')) {
    ++no;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(origin, no, "expected key=value");
    auto key = std::string(detail::trim(line.substr(0, eq)));
    auto value = std::string(detail::trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError(origin, no, "empty key");
    if (!kv.values_.emplace(key, value).second) {
      throw ParseError(origin, no, "duplicate key '" + key + "'");
    }
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

void KeyValueConfig::set(const std::string& key, std::string value) {
  values_[key] = std::move(value);
}

std::optional<std::string> KeyValueConfig::take_string(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  used_.insert(key);
  return it->second;
}

std::optional<std::uint64_t> KeyValueConfig::take_u64(const std::string& key) {
  auto s = take_string(key);
  if (!s) return std::nullopt;
  auto v = detail::parse_u64(*s);
  if (!v) throw Error("config key '" + key + "': expected a non-negative integer, got '" + *s + "'");
  return v;
}

std::optional<double> KeyValueConfig::take_double(const std::string& key) {
  auto s = take_string(key);
  if (!s) return std::nullopt;
  auto v = detail::parse_double(*s);
  if (!v) throw Error("config key '" + key + "': expected a number, got '" + *s + "'");
  return v;
}

std::optional<bool> KeyValueConfig::take_bool(const std::string& key) {
  auto s = take_string(key);
  if (!s) return std::nullopt;
  if (*s == "true" || *s == "1" || *s == "yes") return true;
  if (*s == "false" || *s == "0" || *s == "no") return false;
  throw Error("config key '" + key + "': expected true or false, got '" + *s + "'");
}

void KeyValueConfig::require_all_used() const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (used_.count(key)) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += key;
  }
  if (!unknown.empty()) throw Error("unknown config key(s): " + unknown);
}

std::size_t parse_ratio(std::string_view text) {
  auto t = detail::trim(text);
  auto colon = t.find(':');
  if (colon != std::string_view::npos) {
    auto lhs = detail::parse_u64(detail::trim(t.substr(0, colon)));
    if (!lhs || *lhs != 1) throw Error("ratio '" + std::string(t) + "' must have the form 1:h");
    t = detail::trim(t.substr(colon + 1));
  }
  auto h = detail::parse_u64(t);
  if (!h) throw Error("invalid ratio '" + std::string(text) + "'");
  return *h;
}

namespace {

template <class T>
void take(KeyValueConfig& kv, const std::string& key, T& field) {
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = kv.take_double(key)) field = *v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (auto v = kv.take_bool(key)) field = *v;
  } else {
    if (auto v = kv.take_u64(key)) field = static_cast<T>(*v);
  }
}

}  // namespace

void apply_train_config(KeyValueConfig& kv, const std::string& prefix, TrainConfig& c) {
  take(kv, prefix + "epochs", c.epochs);
  take(kv, prefix + "batch_size", c.batch_size);
  take(kv, prefix + "workers", c.workers);
  take(kv, prefix + "learning_rate", c.learning_rate);
  take(kv, prefix + "warmup_fraction", c.warmup_fraction);
  take(kv, prefix + "hard_negatives", c.hard_negatives);
  if (auto r = kv.take_string(prefix + "hard_negative_ratio")) c.hard_negatives = parse_ratio(*r);
  take(kv, prefix + "seed", c.seed);
  if (auto m = kv.take_string(prefix + "mode")) c.mode = parse_negative_mode(*m);
  take(kv, prefix + "share_hard_negatives", c.share_hard_negatives);
  take(kv, prefix + "max_steps", c.max_steps);
  c.validate();
}

void apply_cross_config(KeyValueConfig& kv, const std::string& prefix, CrossTrainConfig& c) {
  take(kv, prefix + "epochs", c.epochs);
  take(kv, prefix + "batch_size", c.batch_size);
  take(kv, prefix + "learning_rate", c.learning_rate);
  take(kv, prefix + "warmup_fraction", c.warmup_fraction);
  if (auto r = kv.take_string(prefix + "negative_ratio")) c.negative_ratio = parse_ratio(*r);
  take(kv, prefix + "seed", c.seed);
  c.validate();
}

void apply_mining_config(KeyValueConfig& kv, const std::string& prefix, MiningConfig& c) {
  take(kv, prefix + "top_k", c.top_k);
  take(kv, prefix + "negative_threshold", c.negative_threshold);
  take(kv, prefix + "positive_threshold", c.positive_threshold);
  take(kv, prefix + "seed", c.seed);
  take(kv, prefix + "max_negatives", c.max_negatives);
  take(kv, prefix + "bucket_width", c.bucket_width);
  c.validate();
}

void apply_synthetic_spec(KeyValueConfig& kv, const std::string& prefix, SyntheticSpec& s) {
  take(kv, prefix + "seed", s.seed);
  take(kv, prefix + "num_topics", s.num_topics);
  take(kv, prefix + "passages_per_topic", s.passages_per_topic);
  take(kv, prefix + "questions_per_topic", s.questions_per_topic);
  take(kv, prefix + "unlabeled_question_count", s.unlabeled_question_count);
  take(kv, prefix + "test_questions_per_topic", s.test_questions_per_topic);
  take(kv, prefix + "vocab_size", s.vocab_size);
  take(kv, prefix + "tokens_per_passage", s.tokens_per_passage);
  take(kv, prefix + "tokens_per_question", s.tokens_per_question);
  take(kv, prefix + "unlabeled_positive_fraction", s.unlabeled_positive_fraction);
  take(kv, prefix + "terms_per_block", s.terms_per_block);
  take(kv, prefix + "generic_terms", s.generic_terms);
  take(kv, prefix + "noise_rate", s.noise_rate);
  take(kv, prefix + "key_rate", s.key_rate);
  s.validate();
}

void apply_dual_shape(KeyValueConfig& kv, const std::string& prefix, DualEncoderShape& s) {
  take(kv, prefix + "vocab_size", s.vocab_size);
  take(kv, prefix + "embedding_dim", s.embedding_dim);
  take(kv, prefix + "output_dim", s.output_dim);
  if (s.vocab_size == 0 || s.embedding_dim == 0 || s.output_dim == 0) {
    throw Error("dual encoder dimensions must be positive");
  }
}

void apply_cross_shape(KeyValueConfig& kv, const std::string& prefix, CrossEncoderShape& s) {
  take(kv, prefix + "vocab_size", s.vocab_size);
  take(kv, prefix + "embedding_dim", s.embedding_dim);
  take(kv, prefix + "hidden_dim", s.hidden_dim);
  if (s.vocab_size == 0 || s.embedding_dim == 0 || s.hidden_dim == 0) {
    throw Error("cross encoder dimensions must be positive");
  }
}

}  // namespace dpr
