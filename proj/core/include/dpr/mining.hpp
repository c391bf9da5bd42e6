#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpr/corpus.hpp"
#include "dpr/encoder.hpp"
#include "dpr/index.hpp"
#include "dpr/training.hpp"

namespace dpr {

struct MiningConfig {
  std::size_t top_k = 100;
  /// Cross scores strictly below this count as confident negatives.
  double negative_threshold = 0.1;
  /// Cross scores strictly above this count as confident positives.
  double positive_threshold = 0.9;
  std::uint64_t seed = 1;
  /// Per-question cap on emitted negatives; 0 keeps every survivor.
  std::size_t max_negatives = 0;
  /// Width of the rank buckets in the denoise report.
  std::size_t bucket_width = 10;

  void validate() const;
};

/// Candidates (non-labeled retrieved passages) and how many the cross
/// encoder filtered, for ranks [first_rank, last_rank].
struct DenoiseBucket {
  std::size_t first_rank = 0;
  std::size_t last_rank = 0;
  std::size_t candidates = 0;
  std::size_t filtered = 0;

  double fraction() const noexcept {
    return candidates ? static_cast<double>(filtered) / static_cast<double>(candidates) : 0.0;
  }
};

struct DenoiseReport {
  std::vector<DenoiseBucket> buckets;
  std::size_t questions = 0;
  /// Questions left with no hard negatives (they still train with shared negatives).
  std::size_t questions_without_negatives = 0;
};

struct MiningResult {
  NegativeMap negatives;  // ascending question id; each list in rank order
  DenoiseReport report;
};

/// Top-k retrieval minus labeled positives. Used as the cross-encoder
/// negative pool; no cross scoring, no cap.
NegativeMap retrieve_negative_pool(const DualEncoderParams& retriever, const FlatIndex& index,
                                   std::span<const Question> questions, const RelevanceMap& labels,
                                   std::size_t top_k);

/// Retrieves top_k, drops labeled positives, keeps candidates whose cross
/// score is below negative_threshold, then samples up to max_negatives.
MiningResult mine_hard_negatives(const DualEncoderParams& retriever, const FlatIndex& index,
                                 const CrossEncoderParams& cross, std::span<const Question> questions,
                                 const RelevanceMap& labels, const Collection& collection,
                                 const MiningConfig& config);

/// Same retrieval and sampling as mine_hard_negatives without the cross
/// encoder filter.
MiningResult select_undenoised_negatives(const DualEncoderParams& retriever, const FlatIndex& index,
                                         std::span<const Question> questions,
                                         const RelevanceMap& labels, const MiningConfig& config);

struct AugmentedExample {
  QuestionId question{};
  PassageId positive{};
  std::vector<PassageId> negatives;
  double positive_score = 0.0;
  /// Teacher scores of all retrieved candidates, in rank order.
  std::vector<ScoredPassage> teacher_scores;
};

/// Threshold partition of teacher-scored candidates (rank order). The single
/// highest score above positive_threshold becomes the positive (earlier rank
/// wins ties); everything below negative_threshold becomes a negative, capped
/// by max_negatives. Returns nullopt without a confident positive.
std::optional<AugmentedExample> select_pseudo_labels(QuestionId question,
                                                     std::span<const ScoredPassage> scored,
                                                     const MiningConfig& config);

/// Labels unlabeled questions with the cross encoder over the retriever's top_k.
std::vector<AugmentedExample> pseudo_label(const DualEncoderParams& retriever, const FlatIndex& index,
                                           const CrossEncoderParams& cross,
                                           std::span<const Question> unlabeled,
                                           const Collection& collection, const MiningConfig& config);

/// Deterministic seeded subset of `ranked` of size min(cap, n), kept in
/// input order. cap == 0 keeps all. The choice for a passage depends only on
/// (seed, question, passage).
std::vector<PassageId> sample_capped(std::span<const PassageId> ranked, std::size_t cap,
                                     std::uint64_t seed, QuestionId question);

/// Hard-negative file: question_id<TAB>comma-separated negative ids.
void write_negatives(const std::string& path, const NegativeMap& negatives);
NegativeMap load_negatives(const std::string& path);

/// Augmented-data file: question_id<TAB>positive_id<TAB>negative ids<TAB>positive_score.
void write_augmented(const std::string& path, const std::vector<AugmentedExample>& examples);
std::vector<AugmentedExample> load_augmented(const std::string& path);

/// Denoise report: rank_bucket<TAB>candidates<TAB>filtered<TAB>fraction.
void write_denoise_report(const std::string& path, const DenoiseReport& report);

/// Example sources and labels contributed by pseudo-labeled questions.
std::vector<ExampleSource> augmented_sources(const std::vector<AugmentedExample>& examples);
std::vector<QRel> augmented_qrels(const std::vector<AugmentedExample>& examples);

}  // namespace dpr
