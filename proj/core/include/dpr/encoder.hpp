#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dpr/ids.hpp"
#include "dpr/tensor.hpp"

namespace dpr {

struct DualEncoderShape {
  std::size_t vocab_size = 4096;
  std::size_t embedding_dim = 32;
  std::size_t output_dim = 32;
};

struct CrossEncoderShape {
  std::size_t vocab_size = 4096;
  std::size_t embedding_dim = 32;
  std::size_t hidden_dim = 32;
};

/// One tower of the dual encoder: token table, projection and bias.
/// encode(tokens) = tanh(projection^T * mean(embeddings[tokens]) + bias).
struct TowerParams {
  Matrix embeddings;          // vocab_size x embedding_dim
  Matrix projection;          // embedding_dim x output_dim
  std::vector<double> bias;   // output_dim

  friend bool operator==(const TowerParams&, const TowerParams&) = default;
};

/// Question and passage towers. The two towers share no parameters.
struct DualEncoderParams {
  TowerParams question;
  TowerParams passage;

  DualEncoderShape shape() const;

  /// All parameter tensors in checkpoint order.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  static DualEncoderParams zeros(const DualEncoderShape& shape);

  friend bool operator==(const DualEncoderParams&, const DualEncoderParams&) = default;
};

/// Pair scorer over interaction features of mean-pooled token embeddings:
/// f = [mq; mp; mq*mp; |mq-mp|], h = tanh(hidden^T f + hidden_bias),
/// score = sigmoid(output_weights . h + output_bias).
struct CrossEncoderParams {
  Matrix embeddings;                 // vocab_size x embedding_dim
  Matrix hidden;                     // 4*embedding_dim x hidden_dim
  std::vector<double> hidden_bias;   // hidden_dim
  std::vector<double> output_weights;  // hidden_dim
  double output_bias = 0.0;

  CrossEncoderShape shape() const;

  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  static CrossEncoderParams zeros(const CrossEncoderShape& shape);

  friend bool operator==(const CrossEncoderParams&, const CrossEncoderParams&) = default;
};

/// Weights and embeddings ~ U[-0.1, 0.1] from a seeded generator; biases zero.
DualEncoderParams init_dual_encoder(const DualEncoderShape& shape, std::uint64_t seed);
CrossEncoderParams init_cross_encoder(const CrossEncoderShape& shape, std::uint64_t seed);

/// Forward activations of one tower, kept for the backward pass.
struct TowerActivation {
  std::vector<double> mean;    // pooled embedding, embedding_dim
  std::vector<double> output;  // tanh output, output_dim
};

TowerActivation tower_forward(const TowerParams& tower, std::span<const TokenId> tokens);

/// Accumulates d(loss)/d(params) of one tower into `grad` given
/// d(loss)/d(output). Embedding rows of tokens not in `tokens` are untouched.
void tower_backward(const TowerParams& tower, std::span<const TokenId> tokens,
                    const TowerActivation& act, std::span<const double> d_output,
                    TowerParams& grad);

std::vector<double> encode_question(const DualEncoderParams& params,
                                    std::span<const TokenId> tokens);
std::vector<double> encode_passage(const DualEncoderParams& params,
                                   std::span<const TokenId> tokens);

/// Raw dot product; throws on a dimension mismatch.
double sim(std::span<const double> question, std::span<const double> passage);

/// Token sequences of a batch together with their forward activations.
struct DualBatch {
  std::vector<std::span<const TokenId>> questions;
  std::vector<std::span<const TokenId>> passages;
  std::vector<TowerActivation> question_acts;
  std::vector<TowerActivation> passage_acts;
};

/// Runs both towers over every sequence of the batch.
DualBatch dual_forward(const DualEncoderParams& params,
                       std::vector<std::span<const TokenId>> questions,
                       std::vector<std::span<const TokenId>> passages);

/// Backpropagates upstream gradients (one row per question / passage
/// embedding) into `grads`, accumulating.
void dual_backward(const DualEncoderParams& params, const DualBatch& batch,
                   const Matrix& d_questions, const Matrix& d_passages,
                   DualEncoderParams& grads);

struct CrossActivation {
  std::vector<double> question_mean;
  std::vector<double> passage_mean;
  std::vector<double> features;  // 4*embedding_dim
  std::vector<double> hidden;    // hidden_dim
  double logit = 0.0;
  double score = 0.5;
};

CrossActivation cross_forward(const CrossEncoderParams& params,
                              std::span<const TokenId> question,
                              std::span<const TokenId> passage);

/// Relevance probability in (0, 1).
double cross_score(const CrossEncoderParams& params, std::span<const TokenId> question,
                   std::span<const TokenId> passage);

/// Accumulates gradients given d(loss)/d(logit), the pre-sigmoid score.
/// The |mq-mp| block uses sign(0) = 0.
void cross_backward(const CrossEncoderParams& params, std::span<const TokenId> question,
                    std::span<const TokenId> passage, const CrossActivation& act,
                    double d_logit, CrossEncoderParams& grads);

double sigmoid(double x) noexcept;

}  // namespace dpr
