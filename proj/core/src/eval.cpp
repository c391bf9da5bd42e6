#include "dpr/eval.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>

#include "dpr/error.hpp"
#include "text_io.hpp"

namespace dpr {
namespace {

// Zero-based position of the first relevant hit within the top k, if any.
std::optional<std::size_t> first_relevant(const RunResult& run, const RelevanceMap& labels,
                                          std::size_t k) {
  const std::size_t n = std::min(k, run.hits.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (is_labeled_positive(labels, run.question, run.hits[i].id)) return i;
  }
  return std::nullopt;
}

template <class Fn>
EvalReport per_question(std::span<const RunResult> runs, const RelevanceMap& labels,
                        const MetricSpec& spec, Fn&& value_of) {
  if (spec.k == 0) throw Error("metric cutoff k must be at least 1");
  std::map<QuestionId, double> values;
  for (const auto& run : runs) {
    auto it = labels.find(run.question);
    if (it == labels.end() || it->second.empty()) {
      throw Error("question " + to_string(run.question) + " has no relevance labels");
    }
    if (!values.emplace(run.question, value_of(run)).second) {
      throw Error("question " + to_string(run.question) + " appears twice in the run");
    }
  }
  EvalReport report;
  report.spec = spec;
  double sum = 0.0;
  for (const auto& [q, v] : values) {
    report.per_question.emplace_back(q, v);
    sum += v;
  }
  if (!values.empty()) report.mean = sum / static_cast<double>(values.size());
  return report;
}

}  // namespace

std::string to_string(Metric metric) { return metric == Metric::mrr ? "mrr" : "r"; }

std::vector<MetricSpec> parse_metric_specs(std::string_view text) {
  std::vector<MetricSpec> out;
  for (auto part : detail::split(text, ',')) {
    auto item = detail::trim(part);
    std::string lower(item);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    auto at = lower.find('@');
    if (at == std::string::npos) throw Error("metric '" + lower + "' must look like name@k");
    const auto name = lower.substr(0, at);
    MetricSpec spec;
    if (name == "mrr") {
      spec.metric = Metric::mrr;
    } else if (name == "r" || name == "recall") {
      spec.metric = Metric::recall;
    } else {
      throw Error("unknown metric '" + name + "'");
    }
    auto k = detail::parse_u64(std::string_view(lower).substr(at + 1));
    if (!k || *k == 0) throw Error("metric '" + lower + "' needs a positive cutoff");
    spec.k = *k;
    out.push_back(spec);
  }
  if (out.empty()) throw Error("empty metric list");
  return out;
}

EvalReport mrr_at_k(std::span<const RunResult> runs, const RelevanceMap& labels, std::size_t k) {
  return per_question(runs, labels, {Metric::mrr, k}, [&](const RunResult& run) {
    auto pos = first_relevant(run, labels, k);
    return pos ? 1.0 / static_cast<double>(*pos + 1) : 0.0;
  });
}

EvalReport recall_at_k(std::span<const RunResult> runs, const RelevanceMap& labels,
                       std::size_t k) {
  return per_question(runs, labels, {Metric::recall, k}, [&](const RunResult& run) {
    return first_relevant(run, labels, k) ? 1.0 : 0.0;
  });
}

EvalReport evaluate(std::span<const RunResult> runs, const RelevanceMap& labels,
                    const MetricSpec& spec) {
  return spec.metric == Metric::mrr ? mrr_at_k(runs, labels, spec.k)
                                    : recall_at_k(runs, labels, spec.k);
}

std::vector<EvalReport> evaluate(std::span<const RunResult> runs, const RelevanceMap& labels,
                                 std::span<const MetricSpec> specs) {
  std::vector<EvalReport> out;
  for (const auto& spec : specs) out.push_back(evaluate(runs, labels, spec));
  return out;
}

void write_report(const std::string& path, const std::vector<EvalReport>& reports) {
  auto out = detail::open_output(path);
  for (const auto& r : reports) {
    out << to_string(r.spec.metric) << '\t' << r.spec.k << '\t' << detail::format_double(r.mean)
        << '\t' << r.num_questions() << '\n';
  }
  detail::finish_output(out, path);
}

std::vector<EvalReport> evaluate_run(const std::string& run_path, const std::string& qrels_path,
                                     std::span<const MetricSpec> specs,
                                     const std::string& report_path) {
  const auto runs = load_run(run_path);
  const auto labels = to_relevance_map(load_qrels(qrels_path));
  auto reports = evaluate(runs, labels, specs);
  write_report(report_path, reports);
  return reports;
}

}  // namespace dpr
