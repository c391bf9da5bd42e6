#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dpr/corpus.hpp"
#include "dpr/encoder.hpp"
#include "dpr/training.hpp"

namespace dpr::test {

struct GradCheck {
  double worst = 0.0;        // largest relative error seen
  std::size_t checked = 0;   // parameters compared
  std::string where;         // tensor/element of the worst case
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps exact zeros and values
/// below finite-difference resolution from dividing by ~0.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares every entry of every tensor against central differences of
/// `loss` with step h. `params` is perturbed in place and restored.
inline GradCheck finite_difference_check(std::vector<std::span<double>> params,
                                         std::vector<std::span<const double>> grads,
                                         const std::function<double()>& loss, double h = 1e-5) {
  GradCheck out;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double saved = params[t][i];
      params[t][i] = saved + h;
      const double up = loss();
      params[t][i] = saved - h;
      const double down = loss();
      params[t][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(grads[t][i], numeric);
      ++out.checked;
      if (err > out.worst) {
        out.worst = err;
        out.where = "tensor " + std::to_string(t) + " entry " + std::to_string(i);
      }
    }
  }
  return out;
}

/// Small random problem for checking batch_loss gradients.
struct DualProblem {
  Collection collection;
  std::vector<Question> questions;
  std::vector<WorkerBatch> workers;
  RelevanceMap labels;
};

inline std::string random_words(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s.push_back(' ');
    s += "w" + std::to_string(rng() % vocab);
  }
  return s;
}

/// A workers x batch problem where each question has `hard` hard negatives.
inline DualProblem make_dual_problem(std::uint64_t seed, std::size_t workers, std::size_t batch,
                                     std::size_t hard, const TokenizerConfig& tok) {
  std::mt19937_64 rng(seed);
  DualProblem p;
  const std::size_t questions = workers * batch;
  const std::size_t passages = questions * (1 + hard);
  std::vector<Passage> ps;
  for (std::size_t i = 0; i < passages; ++i) {
    ps.push_back(make_passage(PassageId{i}, random_words(rng, 3 + rng() % 5, 40), tok));
  }
  p.collection = Collection(std::move(ps));
  std::vector<TrainingExample> examples;
  for (std::size_t i = 0; i < questions; ++i) {
    QuestionId q{100 + i};
    p.questions.push_back(make_question(q, random_words(rng, 2 + rng() % 4, 40), tok));
    TrainingExample ex{q, PassageId{i}, {}};
    for (std::size_t j = 0; j < hard; ++j) ex.hard_negatives.push_back(PassageId{questions + i * hard + j});
    p.labels[q] = {ex.positive};
    examples.push_back(ex);
  }
  for (std::size_t a = 0; a < workers; ++a) {
    WorkerBatch w;
    w.rank = a;
    for (std::size_t b = 0; b < batch; ++b) w.examples.push_back(examples[a * batch + b]);
    p.workers.push_back(w);
  }
  return p;
}

}  // namespace dpr::test
