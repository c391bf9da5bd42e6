#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dpr/corpus.hpp"

namespace dpr {

/// Parameters of the planted-relevance corpus.
///
/// Each topic owns a block of subject terms and is split into facets of
/// facet_size() = round(unlabeled_positive_fraction * passages_per_topic)
/// passages (the last facet may be smaller). Each facet owns a block of key
/// terms. Passages and questions of a facet mix its topic's subject terms, its
/// own key terms and generic noise terms. A question's true positives are all
/// passages of its facet; the labeled qrels name exactly one of them, so the
/// rest are unlabeled positives (false negatives if sampled as negatives).
/// Passages of the topic's other facets share the subject terms and make
/// natural hard negatives.
struct SyntheticSpec {
  std::uint64_t seed = 7;
  std::size_t num_topics = 10;
  std::size_t passages_per_topic = 200;
  std::size_t questions_per_topic = 50;
  std::size_t unlabeled_question_count = 500;
  std::size_t test_questions_per_topic = 20;
  std::size_t vocab_size = 4096;
  std::size_t tokens_per_passage = 40;
  std::size_t tokens_per_question = 12;
  double unlabeled_positive_fraction = 0.5;
  std::size_t terms_per_block = 20;
  std::size_t generic_terms = 100;
  /// Probability that a token is a topic-independent generic term.
  double noise_rate = 0.15;
  /// Share of facet key terms among the topical tokens.
  double key_rate = 0.3;

  /// Number of true positives per question.
  std::size_t facet_size() const;

  /// Throws dpr::Error when a count is zero or a rate is outside [0, 1].
  void validate() const;
};

struct SyntheticDataset {
  TokenizerConfig tokenizer;
  Collection collection;
  std::vector<Question> labeled_questions;
  std::vector<QRel> labeled_qrels;
  std::vector<Question> unlabeled_questions;
  std::vector<Question> test_questions;
  /// Complete ground truth for every question. Evaluation only.
  std::vector<QRel> truth;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// File names used by write_synthetic / load_synthetic.
struct SyntheticFiles {
  static constexpr const char* kCollection = "collection.tsv";
  static constexpr const char* kQuestions = "questions.tsv";
  static constexpr const char* kQrels = "qrels.tsv";
  static constexpr const char* kUnlabeled = "unlabeled_questions.tsv";
  static constexpr const char* kTestQuestions = "test_questions.tsv";
  static constexpr const char* kTruth = "truth.tsv";
};

void write_synthetic(const std::string& dir, const SyntheticDataset& data);

}  // namespace dpr
