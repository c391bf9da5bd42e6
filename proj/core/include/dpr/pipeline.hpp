#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dpr/config.hpp"
#include "dpr/corpus.hpp"
#include "dpr/encoder.hpp"
#include "dpr/eval.hpp"
#include "dpr/mining.hpp"
#include "dpr/synthetic.hpp"
#include "dpr/training.hpp"

namespace dpr {

/// Input files for a run on existing data. Empty unlabeled/test paths disable
/// augmentation and test evaluation respectively.
struct DataPaths {
  std::string collection;
  std::string questions;
  std::string qrels;
  std::string unlabeled;
  std::string test_questions;
  std::string test_qrels;
};

struct PipelineConfig {
  /// Synthetic data is generated unless `data` is set.
  SyntheticSpec synthetic;
  std::optional<DataPaths> data;

  DualEncoderShape dual_shape;
  CrossEncoderShape cross_shape;
  TrainConfig step1;
  CrossTrainConfig step2;
  TrainConfig step3;
  TrainConfig step4;
  /// Retrieval depth of the cross-encoder negative pool.
  std::size_t step2_pool_depth = 1000;
  MiningConfig mining;

  std::uint64_t seed = 1;
  /// Initialize the step 3 and step 4 dual encoders from the previous one.
  bool warm_start = false;
  std::string metrics = "mrr@10,r@5,r@50,r@100";
  std::size_t eval_depth = 100;

  /// Not part of the fingerprint.
  std::string out_dir = "runs";
  std::size_t last_step = 4;

  PipelineConfig();

  /// Throws when any part is invalid or inconsistent.
  void validate() const;
  /// Sorted key=value lines of every setting that influences results.
  std::string canonical() const;
  /// First 16 hex digits of the SHA-256 of canonical().
  std::string fingerprint() const;
};

/// Reads every pipeline key (see README) from `kv` and rejects unknown keys.
PipelineConfig pipeline_config_from(KeyValueConfig& kv, PipelineConfig base = {});

/// In-memory inputs of one run. `test_truth` is only read by evaluation.
struct PipelineData {
  TokenizerConfig tokenizer;
  Collection collection;
  std::vector<Question> labeled;
  std::vector<QRel> qrels;
  std::vector<Question> unlabeled;
  std::vector<Question> test;
  std::vector<QRel> test_truth;
};

PipelineData load_pipeline_data(const PipelineConfig& config);

struct PipelineResult {
  std::string run_dir;
  std::vector<std::size_t> executed_steps;
  std::vector<std::size_t> skipped_steps;
  /// Test-set reports per dual-encoder checkpoint name (md0, md1, md2).
  std::map<std::string, std::vector<EvalReport>> reports;
};

/// Runs steps 1..config.last_step under `<out_dir>/run-<fingerprint>/`,
/// skipping steps whose recorded artifacts still validate.
PipelineResult run_pipeline(const PipelineConfig& config);

/// Artifact names inside a run directory.
struct PipelineFiles {
  static constexpr const char* kManifest = "manifest.tsv";
  static constexpr const char* kConfig = "config.txt";
  static constexpr const char* kLock = ".lock";
  static constexpr const char* kDataDir = "data";
  static constexpr const char* kStep2Pool = "step2_negative_pool.tsv";
  static constexpr const char* kHardNegatives = "hard_negatives.tsv";
  static constexpr const char* kDenoiseReport = "denoise_report.tsv";
  static constexpr const char* kAugmented = "augmented.tsv";
  static constexpr const char* kFinalRun = "run.tsv";
  static constexpr const char* kFinalReport = "report.tsv";
};

struct AblationConfig {
  PipelineConfig base;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  MetricSpec metric{Metric::mrr, 10};
  /// Worker counts A for the negative-count sweep (A*B-1 negatives); empty skips it.
  std::vector<std::size_t> worker_sweep;
  /// Step budget shared by every point of the negative-count sweep.
  std::size_t sweep_steps = 200;
  /// Fractions of the pseudo-labeled data to train on; empty skips the sweep.
  std::vector<double> augmentation_sweep;
};

struct AblationRow {
  std::string strategy;
  std::string setting;
  std::vector<double> values;  // metric per seed
  double median = 0.0;
  /// Share of mined negatives that are true positives (hard-negative rows only).
  std::optional<double> false_negative_rate;
};

struct AblationReport {
  MetricSpec metric;
  std::vector<AblationRow> rows;

  /// Throws when no row has this strategy and setting.
  const AblationRow& row(const std::string& strategy, const std::string& setting = "") const;
};

/// Strategy labels of the main table, in report order.
struct AblationStrategies {
  static constexpr const char* kInBatch = "in_batch";
  static constexpr const char* kCrossBatch = "cross_batch";
  static constexpr const char* kHardNoisy = "hard_negatives_undenoised";
  static constexpr const char* kHardDenoised = "hard_negatives_denoised";
  static constexpr const char* kAugmentation = "data_augmentation";
  static constexpr const char* kNegativeSweep = "negative_sweep";
  static constexpr const char* kAugmentationSweep = "augmentation_sweep";
};

/// Trains every strategy on synthetic data for each seed and reports the
/// median test metric against the truth table.
AblationReport run_ablation(const AblationConfig& config);

/// strategy<TAB>setting<TAB>metric<TAB>median<TAB>false_negative_rate<TAB>per-seed values
void write_ablation_report(const std::string& path, const AblationReport& report);

double median(std::vector<double> values);

/// Fraction of negatives (over all questions) that are true positives.
double false_negative_rate(const NegativeMap& negatives, const RelevanceMap& truth);

}  // namespace dpr
