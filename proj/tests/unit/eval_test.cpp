#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dpr/error.hpp"
#include "dpr/eval.hpp"
#include "support.hpp"

namespace dpr {
namespace {

RunResult run_with_relevant_at(std::uint64_t q, std::size_t rank, std::size_t depth) {
  RunResult r{QuestionId{q}, {}};
  for (std::size_t i = 1; i <= depth; ++i) {
    const std::uint64_t id = i == rank ? 1000 + q : 2000 + i;
    r.hits.push_back({PassageId{id}, static_cast<double>(depth - i)});
  }
  return r;
}

RelevanceMap labels_for(std::initializer_list<std::uint64_t> qs) {
  RelevanceMap m;
  for (auto q : qs) m[QuestionId{q}] = {PassageId{1000 + q}};
  return m;
}

TEST(Mrr, Definitions) {
  auto labels = labels_for({1});
  std::vector<RunResult> r3{run_with_relevant_at(1, 3, 20)};
  EXPECT_EQ(mrr_at_k(r3, labels, 10).mean, 1.0 / 3.0);
  std::vector<RunResult> r11{run_with_relevant_at(1, 11, 20)};
  EXPECT_EQ(mrr_at_k(r11, labels, 10).mean, 0.0);
  auto two = labels_for({1, 2});
  std::vector<RunResult> runs{run_with_relevant_at(1, 1, 20), run_with_relevant_at(2, 2, 20)};
  EXPECT_EQ(mrr_at_k(runs, two, 10).mean, 0.75);
}

TEST(Recall, Definitions) {
  auto labels = labels_for({1, 2, 3});
  std::vector<RunResult> runs{run_with_relevant_at(1, 2, 10), run_with_relevant_at(2, 5, 10),
                              run_with_relevant_at(3, 9, 10)};
  auto r = recall_at_k(runs, labels, 5);
  EXPECT_EQ(r.mean, 2.0 / 3.0);
  EXPECT_EQ(r.num_questions(), 3u);
  EXPECT_EQ(r.per_question[2].second, 0.0);
  EXPECT_EQ(recall_at_k(runs, labels, 10).mean, 1.0);
}

TEST(Metrics, Errors) {
  std::vector<RunResult> runs{run_with_relevant_at(1, 1, 5)};
  RelevanceMap none;
  EXPECT_THROW(mrr_at_k(runs, none, 10), Error);
  EXPECT_THROW(recall_at_k(runs, none, 10), Error);
  auto labels = labels_for({1});
  EXPECT_THROW(mrr_at_k(runs, labels, 0), Error);
  runs.push_back(runs[0]);
  EXPECT_THROW(mrr_at_k(runs, labels, 10), Error);
}

TEST(Metrics, EmptyRunForQuestionScoresZero) {
  std::vector<RunResult> runs{{QuestionId{1}, {}}};
  EXPECT_EQ(recall_at_k(runs, labels_for({1}), 5).mean, 0.0);
}

TEST(MetricSpecs, Parse) {
  auto s = parse_metric_specs("mrr@10,r@5, Recall@100 ,R@50");
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0], (MetricSpec{Metric::mrr, 10}));
  EXPECT_EQ(s[1], (MetricSpec{Metric::recall, 5}));
  EXPECT_EQ(s[2], (MetricSpec{Metric::recall, 100}));
  EXPECT_EQ(s[3], (MetricSpec{Metric::recall, 50}));
  EXPECT_THROW(parse_metric_specs("mrr@0"), Error);
  EXPECT_THROW(parse_metric_specs("map@10"), Error);
  EXPECT_THROW(parse_metric_specs("mrr"), Error);
  EXPECT_THROW(parse_metric_specs(""), Error);
}

std::vector<RunResult> random_runs(std::mt19937_64& rng, std::size_t questions, std::size_t depth,
                                   RelevanceMap& labels) {
  std::vector<RunResult> runs;
  for (std::size_t q = 0; q < questions; ++q) {
    RunResult r{QuestionId{q}, {}};
    std::vector<std::uint64_t> pool(60);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t i = 0; i < depth; ++i) r.hits.push_back({PassageId{pool[i]}, -static_cast<double>(i)});
    std::vector<PassageId> rel;
    for (std::size_t i = 0, n = 1 + rng() % 4; i < n; ++i) rel.push_back(PassageId{rng() % 60});
    std::sort(rel.begin(), rel.end());
    rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
    labels[r.question] = rel;
    runs.push_back(r);
  }
  return runs;
}

TEST(MetricsProperty, MonotoneBoundedAndOrderInvariant) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    RelevanceMap labels;
    auto runs = random_runs(rng, 1 + rng() % 20, 30, labels);
    double prev_mrr = 0, prev_r = 0;
    for (std::size_t k = 1; k <= 35; ++k) {
      auto m = mrr_at_k(runs, labels, k);
      auto r = recall_at_k(runs, labels, k);
      EXPECT_GE(m.mean, prev_mrr);
      EXPECT_GE(r.mean, prev_r);
      prev_mrr = m.mean;
      prev_r = r.mean;
      double sum = 0;
      for (std::size_t i = 0; i < m.per_question.size(); ++i) {
        EXPECT_GE(m.per_question[i].second, 0.0);
        EXPECT_LE(m.per_question[i].second, r.per_question[i].second);
        EXPECT_LE(r.per_question[i].second, 1.0);
        sum += m.per_question[i].second;
      }
      EXPECT_DOUBLE_EQ(m.mean, sum / static_cast<double>(m.num_questions()));
    }
    auto shuffled = runs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto a = mrr_at_k(runs, labels, 10);
    auto b = mrr_at_k(shuffled, labels, 10);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.per_question, b.per_question);
  }
}

TEST(EvaluateRun, ReportRowsAndIdentityRun) {
  test::TempDir dir;
  std::vector<RunResult> runs;
  std::vector<QRel> qrels;
  for (std::uint64_t q = 0; q < 10; ++q) {
    runs.push_back(run_with_relevant_at(q, 1, 5));
    qrels.push_back({QuestionId{q}, {PassageId{1000 + q}}});
  }
  write_run(dir.file("run.tsv"), runs);
  write_qrels(dir.file("qrels.tsv"), qrels);
  auto specs = parse_metric_specs("mrr@10,r@50");
  auto reports = evaluate_run(dir.file("run.tsv"), dir.file("qrels.tsv"), specs, dir.file("rep.tsv"));
  ASSERT_EQ(reports.size(), 2u);
  for (const auto& r : reports) EXPECT_EQ(r.mean, 1.0);
  EXPECT_EQ(test::read_text(dir.file("rep.tsv")), "mrr\t10\t1\t10\nr\t50\t1\t10\n");
  test::write_text(dir.file("broken.tsv"), "1\t2\t1\n");
  EXPECT_THROW(evaluate_run(dir.file("broken.tsv"), dir.file("qrels.tsv"), specs, dir.file("x.tsv")), ParseError);
}

// Ten questions covering every rank case of the definitions.
TEST(Fixture, TenQuestions) {
  const std::size_t ranks[10] = {1, 2, 3, 4, 5, 10, 11, 0, 1, 7};
  std::vector<RunResult> runs;
  RelevanceMap labels;
  for (std::uint64_t q = 0; q < 10; ++q) {
    runs.push_back(run_with_relevant_at(q, ranks[q], 20));
    labels[QuestionId{q}] = {PassageId{1000 + q}};
  }
  const double mrr = (1 + 0.5 + 1.0 / 3 + 0.25 + 0.2 + 0.1 + 0 + 0 + 1 + 1.0 / 7) / 10;
  EXPECT_DOUBLE_EQ(mrr_at_k(runs, labels, 10).mean, mrr);
  EXPECT_EQ(recall_at_k(runs, labels, 1).mean, 0.2);
  EXPECT_EQ(recall_at_k(runs, labels, 5).mean, 0.6);
  EXPECT_EQ(recall_at_k(runs, labels, 10).mean, 0.8);
  EXPECT_EQ(recall_at_k(runs, labels, 20).mean, 0.9);
}

}  // namespace
}  // namespace dpr
