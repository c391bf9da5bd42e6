#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dpr/corpus.hpp"
#include "dpr/encoder.hpp"
#include "dpr/tensor.hpp"

namespace dpr {

// ---------------------------------------------------------------------------
// Contrastive loss

struct NllResult {
  double loss = 0.0;
  double d_positive = 0.0;
  std::vector<double> d_negatives;
};

/// -log softmax of the positive similarity against the negatives, computed
/// with max-subtraction. Gradients are softmax probabilities, with p+ - 1 for
/// the positive. An empty negative list gives loss 0.
NllResult nll_loss(double positive, std::span<const double> negatives);

// ---------------------------------------------------------------------------
// Batches and simulated data-parallel workers

/// A question with its positive and the hard negatives used in one step.
struct TrainingExample {
  QuestionId question{};
  PassageId positive{};
  std::vector<PassageId> hard_negatives;
};

/// The B examples processed by one logical worker in one step.
struct WorkerBatch {
  std::size_t rank = 0;
  std::vector<TrainingExample> examples;
};

/// Passage embeddings computed by one worker.
struct PassageBlock {
  std::size_t rank = 0;
  Matrix embeddings;
  std::vector<PassageId> ids;
};

struct GatheredPassages {
  Matrix embeddings;
  std::vector<PassageId> ids;
  std::vector<std::size_t> ranks;  // owning worker of each row
};

/// All-gather: concatenates blocks in ascending rank order regardless of the
/// order they are passed in. Throws on duplicate ranks or mismatched widths.
GatheredPassages gather_passages(std::vector<PassageBlock> blocks);

/// Read-only lookups used while assembling losses: passage and question
/// tokens plus the labeled positives of each question.
class TrainingCorpus {
 public:
  TrainingCorpus(const Collection& collection, std::span<const Question> questions,
                 RelevanceMap labels);

  const Collection& collection() const noexcept { return *collection_; }
  std::span<const TokenId> passage_tokens(PassageId id) const;
  std::span<const TokenId> question_tokens(QuestionId id) const;
  bool is_labeled_positive(QuestionId q, PassageId p) const;
  const RelevanceMap& labels() const noexcept { return labels_; }

 private:
  const Collection* collection_;
  std::unordered_map<QuestionId, std::vector<TokenId>> questions_;
  RelevanceMap labels_;
};

enum class NegativeMode { in_batch, cross_batch };

std::string to_string(NegativeMode mode);
NegativeMode parse_negative_mode(const std::string& text);

struct BatchLossOptions {
  NegativeMode mode = NegativeMode::cross_batch;
  /// Whether other questions' hard negatives join each denominator.
  bool share_hard_negatives = true;
};

struct BatchLossResult {
  double loss = 0.0;
  DualEncoderParams grads;
  /// Number of negatives in each question's denominator, in rank order.
  std::vector<std::size_t> negatives_per_question;
};

/// Mean contrastive loss over all A*B questions and its gradient.
///
/// Each question's denominator holds its own positive, its own hard
/// negatives and every other passage gathered in scope (its worker for
/// in_batch, all workers for cross_batch). Passages whose id is a labeled
/// positive of the question are masked out. Throws if a question ends up with
/// no negatives.
BatchLossResult batch_loss(const DualEncoderParams& params, std::span<const WorkerBatch> workers,
                           const TrainingCorpus& corpus, const BatchLossOptions& options = {});

// ---------------------------------------------------------------------------
// Optimisation

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// Bias-corrected Adam. Moments are allocated on first use. Throws on a
/// shape mismatch or a non-finite gradient (parameters are left untouched).
void adam_step(OptimizerState& state, std::vector<std::span<double>> params,
               std::vector<std::span<const double>> grads, double lr);
void adam_step(OptimizerState& state, DualEncoderParams& params, const DualEncoderParams& grads,
               double lr);
void adam_step(OptimizerState& state, CrossEncoderParams& params, const CrossEncoderParams& grads,
               double lr);

/// Linear warmup from 0 to `peak_lr` over the first warmup_fraction*total
/// steps, then linear decay to 0 at `total_steps`.
double lr_at(std::size_t step, std::size_t total_steps, double peak_lr, double warmup_fraction);

// ---------------------------------------------------------------------------
// Training loops

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;  // B, questions per worker
  std::size_t workers = 4;     // A
  double learning_rate = 5e-3;
  double warmup_fraction = 0.1;
  /// h in the 1:h positive to hard-negative ratio.
  std::size_t hard_negatives = 0;
  std::uint64_t seed = 1;
  NegativeMode mode = NegativeMode::cross_batch;
  bool share_hard_negatives = true;
  /// When non-zero, train for exactly this many steps (cycling epochs).
  std::size_t max_steps = 0;

  void validate() const;
};

struct CrossTrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;  // pairs per step
  double learning_rate = 5e-3;
  double warmup_fraction = 0.1;
  /// k in the 1:k positive to negative ratio.
  std::size_t negative_ratio = 4;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One positive pair plus the pool its negatives are drawn from.
struct ExampleSource {
  QuestionId question{};
  PassageId positive{};
  std::vector<PassageId> negative_pool;
};

using NegativeMap = std::map<QuestionId, std::vector<PassageId>>;

/// One source per (question, labeled positive); pools come from `negatives`
/// (questions without an entry get an empty pool).
std::vector<ExampleSource> make_sources(const std::vector<QRel>& qrels,
                                        const NegativeMap& negatives = {});

struct LossRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct DualTrainResult {
  DualEncoderParams params;
  std::vector<LossRecord> log;
  std::size_t steps_per_epoch = 0;
};

struct CrossTrainResult {
  CrossEncoderParams params;
  std::vector<LossRecord> log;
  std::size_t steps_per_epoch = 0;
};

/// Samples up to `count` hard negatives per source for one epoch; exposed for
/// tests of the 1:h contract.
std::vector<TrainingExample> assemble_examples(std::span<const ExampleSource> sources,
                                               std::size_t count, std::uint64_t seed);

/// Contrastive dual-encoder training. Every step shuffles sources into A
/// worker batches of B, runs batch_loss in the configured mode and applies
/// Adam with the warmup schedule. The trailing partial step of each epoch is
/// dropped. `init` warm-starts from existing parameters.
DualTrainResult train_dual(const TrainConfig& config, const DualEncoderShape& shape,
                           std::span<const ExampleSource> sources, const TrainingCorpus& corpus,
                           const DualEncoderParams* init = nullptr);

/// Pointwise binary cross-entropy training of the cross encoder: label 1 for
/// each positive pair and 0 for `negative_ratio` negatives drawn from its pool
/// each epoch. Labeled positives are never drawn as negatives.
CrossTrainResult train_cross(const CrossTrainConfig& config, const CrossEncoderShape& shape,
                             std::span<const ExampleSource> sources, const TrainingCorpus& corpus);

/// Stable binary cross-entropy on a logit.
double bce_with_logit(double logit, double label) noexcept;

void write_loss_log(const std::string& path, const std::vector<LossRecord>& log);

/// Mean loss per epoch of a training log.
std::vector<double> epoch_means(const std::vector<LossRecord>& log, std::size_t steps_per_epoch);

}  // namespace dpr
