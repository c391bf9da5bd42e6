#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dpr/corpus.hpp"
#include "dpr/encoder.hpp"
#include "dpr/tensor.hpp"

namespace dpr {

struct ScoredPassage {
  PassageId id{};
  double score = 0.0;

  friend bool operator==(const ScoredPassage&, const ScoredPassage&) = default;
};

/// Ranked retrieval output for one question, by descending score.
struct RunResult {
  QuestionId question{};
  std::vector<ScoredPassage> hits;

  friend bool operator==(const RunResult&, const RunResult&) = default;
};

/// Exact inner-product index over every passage embedding. Immutable after
/// construction; concurrent searches are safe.
class FlatIndex {
 public:
  FlatIndex() = default;
  /// `fingerprint` is the hex SHA-256 of the checkpoint that produced the
  /// rows (empty means unknown). Throws if ids are not strictly ascending, do
  /// not match the row count, or any entry is non-finite.
  FlatIndex(Matrix embeddings, std::vector<PassageId> ids, std::string fingerprint = {});

  std::size_t dim() const noexcept { return embeddings_.cols(); }
  std::size_t size() const noexcept { return ids_.size(); }
  const Matrix& embeddings() const noexcept { return embeddings_; }
  const std::vector<PassageId>& ids() const noexcept { return ids_; }
  const std::string& checkpoint_fingerprint() const noexcept { return fingerprint_; }

  /// Top min(k, size()) rows by dot product; ties go to the lower passage id.
  std::vector<ScoredPassage> search(std::span<const double> query, std::size_t k) const;

  friend bool operator==(const FlatIndex&, const FlatIndex&) = default;

 private:
  Matrix embeddings_;
  std::vector<PassageId> ids_;
  std::string fingerprint_;
};

/// Row i holds encode_passage of the i-th passage of the collection.
FlatIndex build_index(const DualEncoderParams& params, const Collection& collection);

inline std::vector<ScoredPassage> search(const FlatIndex& index, std::span<const double> query,
                                         std::size_t k) {
  return index.search(query, k);
}

/// Encodes each question with the question tower and searches the index.
/// Output order follows `questions`.
std::vector<RunResult> search_questions(const DualEncoderParams& params, const FlatIndex& index,
                                        std::span<const Question> questions, std::size_t k);

/// Index file layout (little-endian):
///
///   magic "DPRINDEX" (8) | version u32 | d u32 | M u64 |
///   checkpoint fingerprint (32 raw bytes) | checksum (32 bytes, SHA-256 of
///   everything after it) | M*d float32 row-major | M uint64 passage ids
inline constexpr std::uint32_t kIndexVersion = 1;

std::string serialize_index(const FlatIndex& index);
FlatIndex deserialize_index(std::string_view bytes);
void save_index(const FlatIndex& index, const std::string& path);
FlatIndex load_index(const std::string& path);

/// Run file: question_id<TAB>passage_id<TAB>rank<TAB>score, rank from 1.
void write_run(const std::string& path, const std::vector<RunResult>& runs);
std::vector<RunResult> load_run(const std::string& path);

}  // namespace dpr
