#include "dpr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dpr/error.hpp"
#include "seeds.hpp"
#include "text_io.hpp"

namespace dpr {

NllResult nll_loss(double positive, std::span<const double> negatives) {
  NllResult r;
  r.d_negatives.assign(negatives.size(), 0.0);
  if (!std::isfinite(positive)) throw Error("nll_loss: non-finite similarity");
  for (double s : negatives) {
    if (!std::isfinite(s)) throw Error("nll_loss: non-finite similarity");
  }
  if (negatives.empty()) return r;

  double mx = positive;
  for (double s : negatives) mx = std::max(mx, s);
  double sum = std::exp(positive - mx);
  for (double s : negatives) sum += std::exp(s - mx);
  const double log_z = mx + std::log(sum);

  r.loss = log_z - positive;
  r.d_positive = std::exp(positive - log_z) - 1.0;
  for (std::size_t j = 0; j < negatives.size(); ++j) {
    r.d_negatives[j] = std::exp(negatives[j] - log_z);
  }
  return r;
}

GatheredPassages gather_passages(std::vector<PassageBlock> blocks) {
  std::sort(blocks.begin(), blocks.end(),
            [](const PassageBlock& a, const PassageBlock& b) { return a.rank < b.rank; });
  GatheredPassages out;
  std::size_t rows = 0;
  std::size_t width = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i > 0 && blocks[i].rank == blocks[i - 1].rank) {
      throw Error("gather_passages: duplicate worker rank " + std::to_string(blocks[i].rank));
    }
    if (blocks[i].embeddings.rows() != blocks[i].ids.size()) {
      throw Error("gather_passages: block ids do not match its rows");
    }
    if (blocks[i].embeddings.rows() > 0) {
      if (width != 0 && blocks[i].embeddings.cols() != width) {
        throw Error("gather_passages: embedding dimension mismatch across workers");
      }
      width = blocks[i].embeddings.cols();
    }
    rows += blocks[i].embeddings.rows();
  }
  out.embeddings = Matrix(rows, width);
  out.ids.reserve(rows);
  out.ranks.reserve(rows);
  std::size_t r = 0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < b.embeddings.rows(); ++i, ++r) {
      std::copy(b.embeddings.row(i).begin(), b.embeddings.row(i).end(), out.embeddings.row(r).begin());
      out.ids.push_back(b.ids[i]);
      out.ranks.push_back(b.rank);
    }
  }
  return out;
}

TrainingCorpus::TrainingCorpus(const Collection& collection, std::span<const Question> questions,
                               RelevanceMap labels)
    : collection_(&collection), labels_(std::move(labels)) {
  for (const auto& q : questions) questions_.emplace(q.id, q.tokens);
  for (auto& [q, ps] : labels_) {
    std::sort(ps.begin(), ps.end());
    ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  }
}

std::span<const TokenId> TrainingCorpus::passage_tokens(PassageId id) const {
  return collection_->at(id).tokens;
}

std::span<const TokenId> TrainingCorpus::question_tokens(QuestionId id) const {
  auto it = questions_.find(id);
  if (it == questions_.end()) throw Error("unknown question id " + dpr::to_string(id));
  return it->second;
}

bool TrainingCorpus::is_labeled_positive(QuestionId q, PassageId p) const {
  return dpr::is_labeled_positive(labels_, q, p);
}

std::string to_string(NegativeMode mode) {
  return mode == NegativeMode::in_batch ? "in_batch" : "cross_batch";
}

NegativeMode parse_negative_mode(const std::string& text) {
  if (text == "in_batch" || text == "in-batch") return NegativeMode::in_batch;
  if (text == "cross_batch" || text == "cross-batch") return NegativeMode::cross_batch;
  throw Error("unknown negative mode '" + text + "' (expected in_batch or cross_batch)");
}

namespace {

struct WorkerForward {
  const WorkerBatch* batch = nullptr;
  DualBatch fwd;
  std::vector<PassageId> passage_ids;
  std::vector<std::size_t> passage_owner;  // local question index
  std::vector<bool> is_positive;
  std::vector<std::size_t> positive_row;   // per local question
};

WorkerForward forward_worker(const DualEncoderParams& params, const WorkerBatch& batch,
                             const TrainingCorpus& corpus) {
  WorkerForward w;
  w.batch = &batch;
  std::vector<std::span<const TokenId>> qs, ps;
  for (std::size_t i = 0; i < batch.examples.size(); ++i) {
    const auto& ex = batch.examples[i];
    qs.push_back(corpus.question_tokens(ex.question));
    w.positive_row.push_back(ps.size());
    ps.push_back(corpus.passage_tokens(ex.positive));
    w.passage_ids.push_back(ex.positive);
    w.passage_owner.push_back(i);
    w.is_positive.push_back(true);
    for (auto n : ex.hard_negatives) {
      ps.push_back(corpus.passage_tokens(n));
      w.passage_ids.push_back(n);
      w.passage_owner.push_back(i);
      w.is_positive.push_back(false);
    }
  }
  w.fwd = dual_forward(params, std::move(qs), std::move(ps));
  return w;
}

}  // namespace

BatchLossResult batch_loss(const DualEncoderParams& params, std::span<const WorkerBatch> workers,
                           const TrainingCorpus& corpus, const BatchLossOptions& options) {
  if (workers.empty()) throw Error("batch_loss: no worker batches");
  std::vector<const WorkerBatch*> ordered;
  for (const auto& w : workers) {
    if (w.examples.empty()) throw Error("batch_loss: worker batch is empty");
    ordered.push_back(&w);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const WorkerBatch* a, const WorkerBatch* b) { return a->rank < b->rank; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->rank == ordered[i - 1]->rank) {
      throw Error("batch_loss: duplicate worker rank " + std::to_string(ordered[i]->rank));
    }
  }

  // Per-worker forward passes are independent of each other.
  std::vector<WorkerForward> fw;
  fw.reserve(ordered.size());
  for (const auto* w : ordered) fw.push_back(forward_worker(params, *w, corpus));

  const std::size_t dim = params.passage.projection.cols();
  std::vector<PassageBlock> blocks;
  for (const auto& w : fw) {
    PassageBlock b{w.batch->rank, Matrix(w.passage_ids.size(), dim), w.passage_ids};
    for (std::size_t i = 0; i < w.passage_ids.size(); ++i) {
      const auto& out = w.fwd.passage_acts[i].output;
      std::copy(out.begin(), out.end(), b.embeddings.row(i).begin());
    }
    blocks.push_back(std::move(b));
  }
  GatheredPassages all = gather_passages(std::move(blocks));

  std::vector<std::size_t> offsets(fw.size() + 1, 0);
  std::vector<std::size_t> question_offsets(fw.size() + 1, 0);
  for (std::size_t w = 0; w < fw.size(); ++w) {
    offsets[w + 1] = offsets[w] + fw[w].passage_ids.size();
    question_offsets[w + 1] = question_offsets[w] + fw[w].batch->examples.size();
  }
  const std::size_t n_questions = question_offsets.back();
  const double scale = 1.0 / static_cast<double>(n_questions);

  // Global owner (question index) and positive flag for each gathered row.
  std::vector<std::size_t> owner(all.ids.size());
  std::vector<bool> row_is_positive(all.ids.size());
  for (std::size_t w = 0; w < fw.size(); ++w) {
    for (std::size_t i = 0; i < fw[w].passage_ids.size(); ++i) {
      owner[offsets[w] + i] = question_offsets[w] + fw[w].passage_owner[i];
      row_is_positive[offsets[w] + i] = fw[w].is_positive[i];
    }
  }

  BatchLossResult result;
  result.grads = DualEncoderParams::zeros(params.shape());
  Matrix d_passages(all.ids.size(), dim);
  std::vector<Matrix> d_questions;
  for (const auto& w : fw) d_questions.emplace_back(w.batch->examples.size(), dim);

  std::vector<std::size_t> candidates;
  std::vector<double> neg_sims;
  for (std::size_t w = 0; w < fw.size(); ++w) {
    const std::size_t lo = options.mode == NegativeMode::cross_batch ? 0 : offsets[w];
    const std::size_t hi = options.mode == NegativeMode::cross_batch ? all.ids.size() : offsets[w + 1];
    for (std::size_t i = 0; i < fw[w].batch->examples.size(); ++i) {
      const auto& ex = fw[w].batch->examples[i];
      const std::size_t self = question_offsets[w] + i;
      const std::size_t pos_row = offsets[w] + fw[w].positive_row[i];
      const auto& qvec = fw[w].fwd.question_acts[i].output;

      candidates.clear();
      neg_sims.clear();
      for (std::size_t j = lo; j < hi; ++j) {
        if (j == pos_row) continue;
        if (owner[j] != self && !row_is_positive[j] && !options.share_hard_negatives) continue;
        if (all.ids[j] == ex.positive || corpus.is_labeled_positive(ex.question, all.ids[j])) continue;
        candidates.push_back(j);
        neg_sims.push_back(dot(qvec, all.embeddings.row(j)));
      }
      if (candidates.empty()) {
        throw Error("batch_loss: question " + dpr::to_string(ex.question) +
                    " has no negatives after masking");
      }
      result.negatives_per_question.push_back(candidates.size());

      const double pos_sim = dot(qvec, all.embeddings.row(pos_row));
      NllResult nll = nll_loss(pos_sim, neg_sims);
      result.loss += nll.loss * scale;

      auto dq = d_questions[w].row(i);
      auto accumulate = [&](std::size_t row, double g) {
        g *= scale;
        auto p = all.embeddings.row(row);
        auto dp = d_passages.row(row);
        for (std::size_t k = 0; k < dim; ++k) {
          dq[k] += g * p[k];
          dp[k] += g * qvec[k];
        }
      };
      accumulate(pos_row, nll.d_positive);
      for (std::size_t c = 0; c < candidates.size(); ++c) accumulate(candidates[c], nll.d_negatives[c]);
    }
  }

  // Reduce-scatter: each worker backpropagates the gradient of its own rows.
  for (std::size_t w = 0; w < fw.size(); ++w) {
    Matrix dp(fw[w].passage_ids.size(), dim);
    for (std::size_t i = 0; i < dp.rows(); ++i) {
      auto src = d_passages.row(offsets[w] + i);
      std::copy(src.begin(), src.end(), dp.row(i).begin());
    }
    dual_backward(params, fw[w].fwd, d_questions[w], dp, result.grads);
  }
  return result;
}

void adam_step(OptimizerState& state, std::vector<std::span<double>> params,
               std::vector<std::span<const double>> grads, double lr) {
  if (params.size() != grads.size()) throw Error("adam_step: parameter/gradient count mismatch");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size()) throw Error("adam_step: tensor shape mismatch");
    for (double g : grads[t]) {
      if (!std::isfinite(g)) throw Error("adam_step: non-finite gradient");
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  } else if (state.first_moment.size() != params.size()) {
    throw Error("adam_step: optimizer state does not match parameters");
  }

  const auto& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != params[k].size()) throw Error("adam_step: optimizer state does not match parameters");
    auto p = params[k];
    auto g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
  }
}

void adam_step(OptimizerState& state, DualEncoderParams& params, const DualEncoderParams& grads,
               double lr) {
  adam_step(state, params.tensors(), grads.tensors(), lr);
}

void adam_step(OptimizerState& state, CrossEncoderParams& params, const CrossEncoderParams& grads,
               double lr) {
  adam_step(state, params.tensors(), grads.tensors(), lr);
}

double lr_at(std::size_t step, std::size_t total_steps, double peak_lr, double warmup_fraction) {
  if (total_steps == 0) throw Error("lr_at: total_steps must be positive");
  if (step > total_steps) {
    throw Error("lr_at: step " + std::to_string(step) + " exceeds total " + std::to_string(total_steps));
  }
  const double s = static_cast<double>(step);
  const double total = static_cast<double>(total_steps);
  const double warmup = warmup_fraction * total;
  if (warmup > 0.0 && s <= warmup) return peak_lr * s / warmup;
  if (total == warmup) return peak_lr;
  return peak_lr * (total - s) / (total - warmup);
}

void TrainConfig::validate() const {
  if (workers == 0) throw Error("train config: workers must be at least 1");
  if (batch_size == 0) throw Error("train config: batch_size must be at least 1");
  if (epochs == 0 && max_steps == 0) throw Error("train config: epochs must be at least 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw Error("train config: warmup_fraction must be in [0,1]");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error("train config: learning_rate must be positive");
  }
}

void CrossTrainConfig::validate() const {
  if (batch_size == 0) throw Error("cross train config: batch_size must be at least 1");
  if (epochs == 0) throw Error("cross train config: epochs must be at least 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw Error("cross train config: warmup_fraction must be in [0,1]");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error("cross train config: learning_rate must be positive");
  }
}

std::vector<ExampleSource> make_sources(const std::vector<QRel>& qrels, const NegativeMap& negatives) {
  std::vector<ExampleSource> out;
  for (const auto& q : qrels) {
    auto it = negatives.find(q.question);
    for (auto p : q.positives) {
      ExampleSource s{q.question, p, {}};
      if (it != negatives.end()) s.negative_pool = it->second;
      out.push_back(std::move(s));
    }
  }
  return out;
}

namespace {

/// Draws up to `count` entries of `pool` without replacement, skipping
/// `exclude` matches.
template <class Exclude>
std::vector<PassageId> sample_without_replacement(const std::vector<PassageId>& pool,
                                                  std::size_t count, std::mt19937_64& rng,
                                                  Exclude&& exclude) {
  std::vector<PassageId> eligible;
  eligible.reserve(pool.size());
  for (auto p : pool) {
    if (!exclude(p)) eligible.push_back(p);
  }
  const std::size_t n = std::min(count, eligible.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  eligible.resize(n);
  return eligible;
}

std::vector<TrainingExample> assemble_with(std::span<const ExampleSource> sources, std::size_t count,
                                           std::mt19937_64& rng, const TrainingCorpus* corpus) {
  std::vector<TrainingExample> out;
  out.reserve(sources.size());
  for (const auto& s : sources) {
    auto negatives = sample_without_replacement(s.negative_pool, count, rng, [&](PassageId p) {
      return p == s.positive || (corpus && corpus->is_labeled_positive(s.question, p));
    });
    out.push_back(TrainingExample{s.question, s.positive, std::move(negatives)});
  }
  return out;
}

}  // namespace

std::vector<TrainingExample> assemble_examples(std::span<const ExampleSource> sources,
                                               std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return assemble_with(sources, count, rng, nullptr);
}

DualTrainResult train_dual(const TrainConfig& config, const DualEncoderShape& shape,
                           std::span<const ExampleSource> sources, const TrainingCorpus& corpus,
                           const DualEncoderParams* init) {
  config.validate();
  if (sources.empty()) throw Error("train_dual: no training examples");
  const std::size_t per_step = config.workers * config.batch_size;
  if (sources.size() < per_step) {
    throw Error("train_dual: " + std::to_string(sources.size()) +
                " examples cannot fill one step of " + std::to_string(per_step));
  }

  DualTrainResult result;
  result.steps_per_epoch = sources.size() / per_step;
  const std::size_t total =
      config.max_steps ? config.max_steps : config.epochs * result.steps_per_epoch;
  if (init) {
    auto s = init->shape();
    if (s.vocab_size != shape.vocab_size || s.embedding_dim != shape.embedding_dim ||
        s.output_dim != shape.output_dim) {
      throw Error("train_dual: warm-start checkpoint shape does not match");
    }
    result.params = *init;
  } else {
    result.params = init_dual_encoder(shape, detail::derive_seed(config.seed, 0));
  }

  std::mt19937_64 rng(detail::derive_seed(config.seed, 1));
  OptimizerState opt;
  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), 0);
  const BatchLossOptions options{config.mode, config.share_hard_negatives};

  std::size_t step = 0;
  while (step < total) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<ExampleSource> shuffled;
    shuffled.reserve(order.size());
    for (auto i : order) shuffled.push_back(sources[i]);
    auto examples = assemble_with(shuffled, config.hard_negatives, rng, &corpus);

    for (std::size_t s = 0; s < result.steps_per_epoch && step < total; ++s, ++step) {
      std::vector<WorkerBatch> workers(config.workers);
      for (std::size_t a = 0; a < config.workers; ++a) {
        workers[a].rank = a;
        auto first = examples.begin() + static_cast<std::ptrdiff_t>(s * per_step + a * config.batch_size);
        workers[a].examples.assign(first, first + static_cast<std::ptrdiff_t>(config.batch_size));
      }
      auto loss = batch_loss(result.params, workers, corpus, options);
      const double lr = lr_at(step, total, config.learning_rate, config.warmup_fraction);
      adam_step(opt, result.params, loss.grads, lr);
      result.log.push_back({step, lr, loss.loss});
    }
  }
  return result;
}

double bce_with_logit(double logit, double label) noexcept {
  // softplus(x) - y*x, with softplus evaluated stably.
  const double softplus = logit > 0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
  return softplus - label * logit;
}

CrossTrainResult train_cross(const CrossTrainConfig& config, const CrossEncoderShape& shape,
                             std::span<const ExampleSource> sources, const TrainingCorpus& corpus) {
  config.validate();
  if (sources.empty()) throw Error("train_cross: no training examples");
  auto eligible = [&](const ExampleSource& s) {
    std::size_t n = 0;
    for (auto p : s.negative_pool) {
      if (p != s.positive && !corpus.is_labeled_positive(s.question, p)) ++n;
    }
    return n;
  };
  std::size_t pairs_per_epoch = 0;
  std::size_t negatives_available = 0;
  for (const auto& s : sources) {
    const auto n = eligible(s);
    negatives_available += n;
    pairs_per_epoch += 1 + std::min(config.negative_ratio, n);
  }
  if (negatives_available == 0) throw Error("train_cross: negative pool is empty");

  CrossTrainResult result;
  result.steps_per_epoch = (pairs_per_epoch + config.batch_size - 1) / config.batch_size;
  const std::size_t total = config.epochs * result.steps_per_epoch;
  result.params = init_cross_encoder(shape, detail::derive_seed(config.seed, 0));

  std::mt19937_64 rng(detail::derive_seed(config.seed, 1));
  OptimizerState opt;
  struct Pair {
    QuestionId q;
    PassageId p;
    double label;
  };
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto examples = assemble_with(sources, config.negative_ratio, rng, &corpus);
    std::vector<Pair> pairs;
    pairs.reserve(pairs_per_epoch);
    for (const auto& ex : examples) {
      pairs.push_back({ex.question, ex.positive, 1.0});
      for (auto n : ex.hard_negatives) pairs.push_back({ex.question, n, 0.0});
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);

    for (std::size_t start = 0; start < pairs.size(); start += config.batch_size, ++step) {
      const std::size_t end = std::min(pairs.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      auto grads = CrossEncoderParams::zeros(shape);
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        auto qt = corpus.question_tokens(pairs[i].q);
        auto pt = corpus.passage_tokens(pairs[i].p);
        auto act = cross_forward(result.params, qt, pt);
        loss += bce_with_logit(act.logit, pairs[i].label) * inv;
        cross_backward(result.params, qt, pt, act, (act.score - pairs[i].label) * inv, grads);
      }
      const double lr = lr_at(step, total, config.learning_rate, config.warmup_fraction);
      adam_step(opt, result.params, grads, lr);
      result.log.push_back({step, lr, loss});
    }
  }
  return result;
}

void write_loss_log(const std::string& path, const std::vector<LossRecord>& log) {
  auto out = detail::open_output(path);
  for (const auto& r : log) {
    out << r.step << '\t' << detail::format_double(r.lr) << '\t' << detail::format_double(r.loss)
        << '\n';
  }
  detail::finish_output(out, path);
}

std::vector<double> epoch_means(const std::vector<LossRecord>& log, std::size_t steps_per_epoch) {
  std::vector<double> out;
  if (steps_per_epoch == 0) return out;
  for (std::size_t start = 0; start < log.size(); start += steps_per_epoch) {
    const std::size_t end = std::min(log.size(), start + steps_per_epoch);
    double sum = 0.0;
    for (std::size_t i = start; i < end; ++i) sum += log[i].loss;
    out.push_back(sum / static_cast<double>(end - start));
  }
  return out;
}

}  // namespace dpr
