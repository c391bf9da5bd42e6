#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpr/corpus.hpp"
#include "dpr/index.hpp"

namespace dpr {

enum class Metric { mrr, recall };

std::string to_string(Metric metric);

struct MetricSpec {
  Metric metric = Metric::mrr;
  std::size_t k = 10;

  friend bool operator==(const MetricSpec&, const MetricSpec&) = default;
};

/// Parses a comma-separated list such as "mrr@10,r@5". Names are
/// case-insensitive; "recall@k" is accepted for "r@k". k must be positive.
std::vector<MetricSpec> parse_metric_specs(std::string_view text);

struct EvalReport {
  MetricSpec spec;
  /// One value per run question, ascending question id.
  std::vector<std::pair<QuestionId, double>> per_question;
  double mean = 0.0;

  std::size_t num_questions() const noexcept { return per_question.size(); }

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Reciprocal rank of the first relevant passage within the top k, else 0.
/// Throws if a run question has no labels or k == 0.
EvalReport mrr_at_k(std::span<const RunResult> runs, const RelevanceMap& labels, std::size_t k);

/// 1 when any relevant passage appears in the top k, else 0.
EvalReport recall_at_k(std::span<const RunResult> runs, const RelevanceMap& labels, std::size_t k);

EvalReport evaluate(std::span<const RunResult> runs, const RelevanceMap& labels,
                    const MetricSpec& spec);
std::vector<EvalReport> evaluate(std::span<const RunResult> runs, const RelevanceMap& labels,
                                 std::span<const MetricSpec> specs);

/// Report file: metric<TAB>k<TAB>value<TAB>num_questions.
void write_report(const std::string& path, const std::vector<EvalReport>& reports);

/// Loads a run file and a qrels file, evaluates each metric and writes the
/// report to `report_path`.
std::vector<EvalReport> evaluate_run(const std::string& run_path, const std::string& qrels_path,
                                     std::span<const MetricSpec> specs,
                                     const std::string& report_path);

}  // namespace dpr
