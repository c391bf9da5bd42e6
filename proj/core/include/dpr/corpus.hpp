#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dpr/ids.hpp"

namespace dpr {

/// Truncation lengths and hash-bucket count used when turning text into
/// token ids. Defaults follow the usual 32/128 question/passage budgets.
struct TokenizerConfig {
  std::size_t vocab_size = 4096;
  std::size_t max_question_len = 32;
  std::size_t max_passage_len = 128;
};

/// Splits `text` into terms and hashes each into [0, vocab_size).
///
/// A term is a maximal run of bytes that are ASCII letters, ASCII digits, or
/// non-ASCII (>= 0x80, so UTF-8 words stay intact). ASCII letters are
/// lowercased. Each term maps to `fnv1a64(term) % vocab_size`. Only the first
/// `max_len` terms are kept.
std::vector<TokenId> tokenize(std::string_view text, std::size_t max_len,
                              std::size_t vocab_size);

struct Passage {
  PassageId id{};
  std::string text;
  std::vector<TokenId> tokens;

  friend bool operator==(const Passage&, const Passage&) = default;
};

struct Question {
  QuestionId id{};
  std::string text;
  std::vector<TokenId> tokens;

  friend bool operator==(const Question&, const Question&) = default;
};

/// Labeled positives of one question (sorted, unique, non-empty).
struct QRel {
  QuestionId question{};
  std::vector<PassageId> positives;

  friend bool operator==(const QRel&, const QRel&) = default;
};

/// Passage collection ordered by ascending id.
class Collection {
 public:
  Collection() = default;
  /// Sorts by id; throws on duplicate ids or an empty list.
  explicit Collection(std::vector<Passage> passages);

  std::size_t size() const noexcept { return passages_.size(); }
  const std::vector<Passage>& passages() const noexcept { return passages_; }
  const Passage& operator[](std::size_t i) const { return passages_[i]; }

  bool contains(PassageId id) const { return position_.contains(id); }
  /// Throws if the id is unknown.
  const Passage& at(PassageId id) const;
  std::size_t position(PassageId id) const;

  friend bool operator==(const Collection& a, const Collection& b) {
    return a.passages_ == b.passages_;
  }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<PassageId, std::size_t> position_;
};

/// Question -> labeled positives, for lookups.
using RelevanceMap = std::map<QuestionId, std::vector<PassageId>>;

RelevanceMap to_relevance_map(const std::vector<QRel>& qrels);
std::vector<QRel> from_relevance_map(const RelevanceMap& map);

bool is_labeled_positive(const RelevanceMap& map, QuestionId q, PassageId p);

Collection load_collection(const std::string& path, const TokenizerConfig& tok);
std::vector<Question> load_questions(const std::string& path, const TokenizerConfig& tok);
/// Loads qrels without checking passage ids against a collection.
std::vector<QRel> load_qrels(const std::string& path);
/// Loads qrels and rejects references to passages missing from `collection`.
std::vector<QRel> load_qrels(const std::string& path, const Collection& collection);

void write_collection(const std::string& path, const Collection& collection);
void write_questions(const std::string& path, const std::vector<Question>& questions);
void write_qrels(const std::string& path, const std::vector<QRel>& qrels);

Passage make_passage(PassageId id, std::string text, const TokenizerConfig& tok);
Question make_question(QuestionId id, std::string text, const TokenizerConfig& tok);

/// Parses "3,5,9" into ids, keeping order. Throws dpr::Error on a malformed list.
std::vector<PassageId> parse_id_list(std::string_view list);
std::string format_id_list(const std::vector<PassageId>& ids);

}  // namespace dpr
