#include "dpr/encoder.hpp"

#include <cmath>
#include <random>
#include <string>

#include "dpr/error.hpp"

namespace dpr {
namespace {

void check_tokens(std::span<const TokenId> tokens, std::size_t vocab) {
  if (tokens.empty()) throw Error("cannot encode empty text");
  for (auto t : tokens) {
    if (t >= vocab) {
      throw Error("token id " + std::to_string(t) + " out of range for vocabulary of " +
                  std::to_string(vocab));
    }
  }
}

std::vector<double> mean_pool(const Matrix& table, std::span<const TokenId> tokens) {
  std::vector<double> mean(table.cols(), 0.0);
  for (auto t : tokens) {
    auto row = table.row(t);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (auto& v : mean) v *= inv;
  return mean;
}

void scatter_mean_grad(Matrix& table_grad, std::span<const TokenId> tokens,
                       std::span<const double> d_mean) {
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (auto t : tokens) {
    auto row = table_grad.row(t);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += d_mean[j] * inv;
  }
}

void fill_uniform(std::span<double> values, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& v : values) v = u(rng);
}

TowerParams tower_zeros(const DualEncoderShape& s) {
  return TowerParams{Matrix(s.vocab_size, s.embedding_dim), Matrix(s.embedding_dim, s.output_dim),
                     std::vector<double>(s.output_dim, 0.0)};
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

DualEncoderShape DualEncoderParams::shape() const {
  return {question.embeddings.rows(), question.embeddings.cols(), question.projection.cols()};
}

std::vector<std::span<double>> DualEncoderParams::tensors() {
  return {question.embeddings.values(), question.projection.values(), question.bias,
          passage.embeddings.values(),  passage.projection.values(),  passage.bias};
}

std::vector<std::span<const double>> DualEncoderParams::tensors() const {
  return {question.embeddings.values(), question.projection.values(), question.bias,
          passage.embeddings.values(),  passage.projection.values(),  passage.bias};
}

DualEncoderParams DualEncoderParams::zeros(const DualEncoderShape& shape) {
  return {tower_zeros(shape), tower_zeros(shape)};
}

CrossEncoderShape CrossEncoderParams::shape() const {
  return {embeddings.rows(), embeddings.cols(), hidden.cols()};
}

std::vector<std::span<double>> CrossEncoderParams::tensors() {
  return {embeddings.values(), hidden.values(), hidden_bias, output_weights,
          std::span<double>(&output_bias, 1)};
}

std::vector<std::span<const double>> CrossEncoderParams::tensors() const {
  return {embeddings.values(), hidden.values(), hidden_bias, output_weights,
          std::span<const double>(&output_bias, 1)};
}

CrossEncoderParams CrossEncoderParams::zeros(const CrossEncoderShape& s) {
  return CrossEncoderParams{Matrix(s.vocab_size, s.embedding_dim),
                            Matrix(4 * s.embedding_dim, s.hidden_dim),
                            std::vector<double>(s.hidden_dim, 0.0),
                            std::vector<double>(s.hidden_dim, 0.0), 0.0};
}

DualEncoderParams init_dual_encoder(const DualEncoderShape& shape, std::uint64_t seed) {
  if (shape.vocab_size == 0 || shape.embedding_dim == 0 || shape.output_dim == 0) {
    throw Error("dual encoder dimensions must be positive");
  }
  auto p = DualEncoderParams::zeros(shape);
  std::mt19937_64 rng(seed);
  for (TowerParams* t : {&p.question, &p.passage}) {
    fill_uniform(t->embeddings.values(), rng);
    fill_uniform(t->projection.values(), rng);
  }
  return p;
}

CrossEncoderParams init_cross_encoder(const CrossEncoderShape& shape, std::uint64_t seed) {
  if (shape.vocab_size == 0 || shape.embedding_dim == 0 || shape.hidden_dim == 0) {
    throw Error("cross encoder dimensions must be positive");
  }
  auto p = CrossEncoderParams::zeros(shape);
  std::mt19937_64 rng(seed);
  fill_uniform(p.embeddings.values(), rng);
  fill_uniform(p.hidden.values(), rng);
  fill_uniform(p.output_weights, rng);
  return p;
}

TowerActivation tower_forward(const TowerParams& tower, std::span<const TokenId> tokens) {
  check_tokens(tokens, tower.embeddings.rows());
  TowerActivation act;
  act.mean = mean_pool(tower.embeddings, tokens);
  const std::size_t d = tower.projection.cols();
  act.output.assign(tower.bias.begin(), tower.bias.end());
  for (std::size_t i = 0; i < act.mean.size(); ++i) {
    const double m = act.mean[i];
    auto w = tower.projection.row(i);
    for (std::size_t j = 0; j < d; ++j) act.output[j] += m * w[j];
  }
  for (auto& v : act.output) v = std::tanh(v);
  return act;
}

void tower_backward(const TowerParams& tower, std::span<const TokenId> tokens,
                    const TowerActivation& act, std::span<const double> d_output,
                    TowerParams& grad) {
  const std::size_t d = tower.projection.cols();
  std::vector<double> dz(d);
  for (std::size_t j = 0; j < d; ++j) dz[j] = d_output[j] * (1.0 - act.output[j] * act.output[j]);

  std::vector<double> d_mean(act.mean.size(), 0.0);
  for (std::size_t i = 0; i < act.mean.size(); ++i) {
    auto w = tower.projection.row(i);
    auto gw = grad.projection.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      gw[j] += act.mean[i] * dz[j];
      acc += w[j] * dz[j];
    }
    d_mean[i] = acc;
  }
  for (std::size_t j = 0; j < d; ++j) grad.bias[j] += dz[j];
  scatter_mean_grad(grad.embeddings, tokens, d_mean);
}

std::vector<double> encode_question(const DualEncoderParams& params,
                                    std::span<const TokenId> tokens) {
  return tower_forward(params.question, tokens).output;
}

std::vector<double> encode_passage(const DualEncoderParams& params,
                                   std::span<const TokenId> tokens) {
  return tower_forward(params.passage, tokens).output;
}

double sim(std::span<const double> question, std::span<const double> passage) {
  if (question.size() != passage.size()) {
    throw Error("sim: dimension mismatch (" + std::to_string(question.size()) + " vs " +
                std::to_string(passage.size()) + ")");
  }
  return dot(question, passage);
}

DualBatch dual_forward(const DualEncoderParams& params,
                       std::vector<std::span<const TokenId>> questions,
                       std::vector<std::span<const TokenId>> passages) {
  DualBatch batch{std::move(questions), std::move(passages), {}, {}};
  batch.question_acts.reserve(batch.questions.size());
  for (auto q : batch.questions) batch.question_acts.push_back(tower_forward(params.question, q));
  batch.passage_acts.reserve(batch.passages.size());
  for (auto p : batch.passages) batch.passage_acts.push_back(tower_forward(params.passage, p));
  return batch;
}

void dual_backward(const DualEncoderParams& params, const DualBatch& batch,
                   const Matrix& d_questions, const Matrix& d_passages,
                   DualEncoderParams& grads) {
  if (d_questions.rows() != batch.questions.size() || d_passages.rows() != batch.passages.size()) {
    throw Error("dual_backward: upstream gradient rows do not match the batch");
  }
  for (std::size_t i = 0; i < batch.questions.size(); ++i) {
    tower_backward(params.question, batch.questions[i], batch.question_acts[i],
                   d_questions.row(i), grads.question);
  }
  for (std::size_t i = 0; i < batch.passages.size(); ++i) {
    tower_backward(params.passage, batch.passages[i], batch.passage_acts[i], d_passages.row(i),
                   grads.passage);
  }
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

CrossActivation cross_forward(const CrossEncoderParams& params,
                              std::span<const TokenId> question,
                              std::span<const TokenId> passage) {
  const std::size_t vocab = params.embeddings.rows();
  check_tokens(question, vocab);
  check_tokens(passage, vocab);
  CrossActivation act;
  act.question_mean = mean_pool(params.embeddings, question);
  act.passage_mean = mean_pool(params.embeddings, passage);
  const std::size_t e = act.question_mean.size();
  act.features.resize(4 * e);
  for (std::size_t i = 0; i < e; ++i) {
    const double q = act.question_mean[i];
    const double p = act.passage_mean[i];
    act.features[i] = q;
    act.features[e + i] = p;
    act.features[2 * e + i] = q * p;
    act.features[3 * e + i] = std::abs(q - p);
  }
  const std::size_t h = params.hidden.cols();
  act.hidden.assign(params.hidden_bias.begin(), params.hidden_bias.end());
  for (std::size_t i = 0; i < act.features.size(); ++i) {
    const double f = act.features[i];
    if (f == 0.0) continue;
    auto w = params.hidden.row(i);
    for (std::size_t j = 0; j < h; ++j) act.hidden[j] += f * w[j];
  }
  for (auto& v : act.hidden) v = std::tanh(v);
  act.logit = params.output_bias + dot(params.output_weights, act.hidden);
  act.score = sigmoid(act.logit);
  return act;
}

double cross_score(const CrossEncoderParams& params, std::span<const TokenId> question,
                   std::span<const TokenId> passage) {
  return cross_forward(params, question, passage).score;
}

void cross_backward(const CrossEncoderParams& params, std::span<const TokenId> question,
                    std::span<const TokenId> passage, const CrossActivation& act,
                    double d_logit, CrossEncoderParams& grads) {
  const std::size_t h = params.hidden.cols();
  const std::size_t e = act.question_mean.size();

  grads.output_bias += d_logit;
  std::vector<double> dz(h);
  for (std::size_t j = 0; j < h; ++j) {
    grads.output_weights[j] += d_logit * act.hidden[j];
    dz[j] = d_logit * params.output_weights[j] * (1.0 - act.hidden[j] * act.hidden[j]);
    grads.hidden_bias[j] += dz[j];
  }

  std::vector<double> d_features(4 * e, 0.0);
  for (std::size_t i = 0; i < 4 * e; ++i) {
    auto w = params.hidden.row(i);
    auto gw = grads.hidden.row(i);
    const double f = act.features[i];
    double acc = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      gw[j] += f * dz[j];
      acc += w[j] * dz[j];
    }
    d_features[i] = acc;
  }

  std::vector<double> dq(e), dp(e);
  for (std::size_t i = 0; i < e; ++i) {
    const double q = act.question_mean[i];
    const double p = act.passage_mean[i];
    const double s = sign(q - p);
    dq[i] = d_features[i] + d_features[2 * e + i] * p + d_features[3 * e + i] * s;
    dp[i] = d_features[e + i] + d_features[2 * e + i] * q - d_features[3 * e + i] * s;
  }
  scatter_mean_grad(grads.embeddings, question, dq);
  scatter_mean_grad(grads.embeddings, passage, dp);
}

}  // namespace dpr
