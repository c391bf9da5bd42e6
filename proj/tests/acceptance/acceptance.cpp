// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dpr/encoder.hpp"
#include "dpr/eval.hpp"
#include "dpr/index.hpp"
#include "dpr/pipeline.hpp"
#include "dpr/training.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace dpr;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int number, const char* name, const std::function<Verdict()>& check) {
  const auto start = Clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::printf("%s %d %s (%s; %.1f s)\n", v.pass ? "PASS" : "FAIL", number, name, v.detail.c_str(),
              seconds_since(start));
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const TokenizerConfig kTok{64, 32, 128};

Verdict gradient_correctness() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  std::string where;
  auto note = [&](const test::GradCheck& g, const std::string& what) {
    checked += g.checked;
    if (g.worst > worst) {
      worst = g.worst;
      where = what + " " + g.where;
    }
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (auto mode : {NegativeMode::in_batch, NegativeMode::cross_batch}) {
      auto p = test::make_dual_problem(1000 + seed, 2, 2, 1, kTok);
      TrainingCorpus corpus(p.collection, p.questions, p.labels);
      auto params = init_dual_encoder({64, 3, 2}, seed);
      for (auto t : params.tensors()) {
        for (auto& v : t) v *= 8.0;
      }
      auto r = batch_loss(params, p.workers, corpus, {mode});
      note(test::finite_difference_check(params.tensors(), std::as_const(r.grads).tensors(),
                                         [&] { return batch_loss(params, p.workers, corpus, {mode}).loss; }),
           "dual seed " + std::to_string(seed));
    }
    std::mt19937_64 rng(seed);
    auto c = init_cross_encoder({16, 3, 4}, seed);
    c.output_bias = 0.2;
    std::vector<TokenId> q, ps;
    for (int i = 0; i < 3; ++i) q.push_back(static_cast<TokenId>(rng() % 16));
    for (int i = 0; i < 5; ++i) ps.push_back(static_cast<TokenId>(rng() % 16));
    for (double label : {0.0, 1.0}) {
      auto act = cross_forward(c, q, ps);
      auto grad = CrossEncoderParams::zeros(c.shape());
      cross_backward(c, q, ps, act, act.score - label, grad);
      note(test::finite_difference_check(c.tensors(), std::as_const(grad).tensors(),
                                         [&] { return bce_with_logit(cross_forward(c, q, ps).logit, label); }),
           "cross seed " + std::to_string(seed));
    }
  }
  const double secs = seconds_since(start);
  Verdict v{worst <= 1e-4 && secs < 30.0, ""};
  v.detail = fmt("worst relative error %.2e", worst) + " over " + std::to_string(checked) +
             " parameters" + (where.empty() ? "" : " at " + where);
  return v;
}

Verdict distributed_equivalence() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (std::size_t hard : {0u, 1u}) {
    auto base = test::make_dual_problem(77 + hard, 1, 8, hard, kTok);
    TrainingCorpus corpus(base.collection, base.questions, base.labels);
    auto params = init_dual_encoder({64, 4, 3}, 5);
    auto whole = batch_loss(params, base.workers, corpus, {NegativeMode::in_batch, true});
    for (auto [a, b] : {std::pair<std::size_t, std::size_t>{2, 4}, {4, 2}}) {
      std::vector<WorkerBatch> split;
      for (std::size_t w = 0; w < a; ++w) {
        WorkerBatch wb;
        wb.rank = w;
        wb.examples.assign(base.workers[0].examples.begin() + static_cast<long>(w * b),
                           base.workers[0].examples.begin() + static_cast<long>((w + 1) * b));
        split.push_back(wb);
      }
      auto x = batch_loss(params, split, corpus, {NegativeMode::cross_batch, true});
      worst = std::max(worst, test::relative_error(x.loss, whole.loss, 1e-300));
      auto gx = std::as_const(x.grads).tensors();
      auto gy = std::as_const(whole.grads).tensors();
      for (std::size_t t = 0; t < gx.size(); ++t) {
        for (std::size_t i = 0; i < gx[t].size(); ++i) {
          if (gx[t][i] == gy[t][i]) continue;
          worst = std::max(worst, test::relative_error(gx[t][i], gy[t][i], 1e-300));
        }
      }
    }
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-10 && secs < 10.0, fmt("worst relative difference %.2e", worst)};
}

Verdict index_exactness() {
  const auto start = Clock::now();
  const std::size_t rows = 10000, dim = 16, queries = 1000;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n;
  Matrix m(rows, dim);
  for (auto& v : m.values()) v = n(rng);
  std::vector<PassageId> ids(rows);
  for (std::size_t i = 0; i < rows; ++i) ids[i] = PassageId{i};
  FlatIndex index(m, ids);
  std::size_t mismatches = 0;
  std::vector<std::pair<double, std::uint64_t>> all(rows);
  for (std::size_t qn = 0; qn < queries; ++qn) {
    std::vector<double> q(dim);
    for (auto& v : q) v = n(rng);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < dim; ++j) s += q[j] * m(i, j);
      all[i] = {s, i};
    }
    std::partial_sort(all.begin(), all.begin() + 100, all.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t k : {1u, 5u, 10u, 100u}) {
      auto got = index.search(q, k);
      bool same = got.size() == k;
      for (std::size_t i = 0; same && i < k; ++i) same = value(got[i].id) == all[i].second;
      if (!same) ++mismatches;
    }
  }
  const double secs = seconds_since(start);
  return {mismatches == 0 && secs < 60.0,
          std::to_string(mismatches) + " mismatching result lists of " + std::to_string(queries * 4)};
}

RunResult run_with_relevant_at(std::uint64_t q, std::size_t rank, std::size_t depth) {
  RunResult r{QuestionId{q}, {}};
  for (std::size_t i = 1; i <= depth; ++i) {
    const std::uint64_t id = i == rank ? 1000 + q : 2000 + i;
    r.hits.push_back({PassageId{id}, static_cast<double>(depth - i)});
  }
  return r;
}

Verdict metric_fixtures() {
  RelevanceMap labels;
  std::vector<RunResult> runs;
  const std::size_t ranks[10] = {1, 2, 3, 4, 5, 10, 11, 0, 1, 7};
  for (std::uint64_t q = 0; q < 10; ++q) {
    runs.push_back(run_with_relevant_at(q, ranks[q], 20));
    labels[QuestionId{q}] = {PassageId{1000 + q}};
  }
  const double expected_mrr = (1 + 0.5 + 1.0 / 3 + 0.25 + 0.2 + 0.1 + 0 + 0 + 1 + 1.0 / 7) / 10;
  int bad = 0;
  if (mrr_at_k(runs, labels, 10).mean != expected_mrr) ++bad;
  if (recall_at_k(runs, labels, 1).mean != 0.2) ++bad;
  if (recall_at_k(runs, labels, 5).mean != 0.6) ++bad;
  if (recall_at_k(runs, labels, 10).mean != 0.8) ++bad;
  if (recall_at_k(runs, labels, 20).mean != 0.9) ++bad;
  // Single-question cases: rank 3, rank 11 under a cutoff of 10, and the 0.75 mean.
  RelevanceMap one{{QuestionId{2}, {PassageId{1002}}}};
  if (mrr_at_k(std::span(runs).subspan(2, 1), one, 10).mean != 1.0 / 3.0) ++bad;
  RelevanceMap cut{{QuestionId{6}, {PassageId{1006}}}};
  if (mrr_at_k(std::span(runs).subspan(6, 1), cut, 10).mean != 0.0) ++bad;
  RelevanceMap two{{QuestionId{0}, {PassageId{1000}}}, {QuestionId{1}, {PassageId{1001}}}};
  if (mrr_at_k(std::span(runs).first(2), two, 10).mean != 0.75) ++bad;
  return {bad == 0, std::to_string(bad) + " of 8 fixture values wrong"};
}

Verdict closed_forms() {
  int bad = 0;
  std::vector<double> zero{0.0};
  if (std::abs(nll_loss(0.0, zero).loss - std::log(2.0)) > 1e-12) ++bad;
  for (std::size_t m : {1u, 3u, 31u, 63u}) {
    std::vector<double> negs(m, 0.42);
    if (std::abs(nll_loss(0.42, negs).loss - std::log(1.0 + static_cast<double>(m))) > 1e-12) ++bad;
  }
  OptimizerState st;
  std::vector<double> w{0.5, -1.0};
  std::vector<double> g{2.0, -0.3};
  adam_step(st, {std::span<double>(w)}, {std::span<const double>(g)}, 0.01);
  // First step: m_hat = g, v_hat = g^2, so |dw| = lr * |g| / (|g| + eps).
  if (std::abs((0.5 - w[0]) - 0.01 * 2.0 / (2.0 + 1e-8)) > 1e-12) ++bad;
  if (std::abs((w[1] + 1.0) - 0.01 * 0.3 / (0.3 + 1e-8)) > 1e-12) ++bad;
  if (lr_at(0, 1000, 3e-5, 0.1) != 0.0) ++bad;
  if (lr_at(100, 1000, 3e-5, 0.1) != 3e-5) ++bad;
  if (lr_at(1000, 1000, 3e-5, 0.1) != 0.0) ++bad;
  if (std::abs(lr_at(50, 1000, 3e-5, 0.1) - 1.5e-5) > 1e-20) ++bad;
  if (std::abs(lr_at(550, 1000, 3e-5, 0.1) - 1.5e-5) > 1e-20) ++bad;
  return {bad == 0, std::to_string(bad) + " of 11 closed-form values wrong"};
}

std::string row_summary(const AblationReport& r, const char* name) {
  return std::string(name) + fmt("=%.4f", r.row(name).median);
}

Verdict ablation_ordering(const AblationReport& r) {
  const double in = r.row(AblationStrategies::kInBatch).median;
  const double cross = r.row(AblationStrategies::kCrossBatch).median;
  const double noisy = r.row(AblationStrategies::kHardNoisy).median;
  const double denoised = r.row(AblationStrategies::kHardDenoised).median;
  const double aug = r.row(AblationStrategies::kAugmentation).median;
  const bool ok = cross > in && noisy < cross && denoised > cross && aug >= denoised - 0.01;
  std::string d = "median mrr@10 ";
  for (const char* s : {AblationStrategies::kInBatch, AblationStrategies::kCrossBatch,
                        AblationStrategies::kHardNoisy, AblationStrategies::kHardDenoised,
                        AblationStrategies::kAugmentation}) {
    d += row_summary(r, s) + " ";
  }
  d.pop_back();
  return {ok, d};
}

Verdict denoising_efficacy(const AblationReport& r) {
  const double noisy = *r.row(AblationStrategies::kHardNoisy).false_negative_rate;
  const double denoised = *r.row(AblationStrategies::kHardDenoised).false_negative_rate;
  const bool ok = noisy >= 2.0 * denoised && noisy > 0.0;
  return {ok, fmt("false-negative share undenoised %.4f", noisy) + fmt(" denoised %.4f", denoised)};
}

Verdict retrieval_quality(const AblationReport& r) {
  const double v = r.row(AblationStrategies::kAugmentation).median;
  return {v >= 0.9, fmt("median recall@5 of the final model %.4f", v)};
}

Verdict determinism() {
  test::TempDir a, b;
  PipelineConfig ca;
  ca.out_dir = a.path().string();
  PipelineConfig cb;
  cb.out_dir = b.path().string();
  auto ra = run_pipeline(ca);
  auto rb = run_pipeline(cb);
  if (ra.reports != rb.reports) return {false, "metric reports differ"};
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(ra.run_dir)) {
    const auto name = e.path().filename().string();
    const auto ext = e.path().extension().string();
    if (ext != ".ckpt" && name.find("report") == std::string::npos) continue;
    const auto other = fs::path(rb.run_dir) / name;
    if (!fs::exists(other) || test::read_text(e.path().string()) != test::read_text(other.string())) {
      return {false, name + " differs"};
    }
    ++compared;
  }
  return {compared >= 8, std::to_string(compared) + " checkpoint and report files byte-identical"};
}

}  // namespace

int main() {
  const auto start = Clock::now();
  report(1, "gradient correctness", gradient_correctness);
  report(2, "distributed equivalence", distributed_equivalence);
  report(3, "index exactness", index_exactness);
  report(4, "metric fixtures", metric_fixtures);
  report(5, "closed forms", closed_forms);

  AblationReport mrr;
  AblationReport recall;
  bool have_mrr = false, have_recall = false;
  const auto ablation_start = Clock::now();
  try {
    AblationConfig ac;
    mrr = run_ablation(ac);
    have_mrr = true;
    ac.metric = {Metric::recall, 5};
    recall = run_ablation(ac);
    have_recall = true;
  } catch (const std::exception& e) {
    std::printf("ablation failed: %s\n", e.what());
  }
  std::printf("ablation runs (mrr@10 and r@5, 5 seeds each) took %.1f s\n", seconds_since(ablation_start));
  auto need = [](bool have, const std::function<Verdict()>& f) {
    return [have, f] { return have ? f() : Verdict{false, "ablation did not complete"}; };
  };
  report(6, "ablation ordering", need(have_mrr, [&] { return ablation_ordering(mrr); }));
  report(7, "denoising efficacy", need(have_mrr, [&] { return denoising_efficacy(mrr); }));
  report(8, "end-to-end retrieval quality", need(have_recall, [&] { return retrieval_quality(recall); }));
  report(9, "determinism", determinism);

  const double total = seconds_since(start);
  std::printf("%s suite runtime %.1f s (limit 900 s)\n", total < 900.0 ? "PASS" : "FAIL", total);
  if (total >= 900.0) ++failures;
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
