#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dse/common.hpp"
#include "dse/corpus.hpp"

namespace dse {

struct EncoderConfig {
  std::size_t vocab_size = kDefaultVocabSize;
  std::size_t embed_dim = 64;
  std::size_t head_hidden = 64;
  std::size_t head_out = 32;
  double dropout_rate = 0.1;
  std::uint64_t hash_seed = 0;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// The five learnable tensors, in persistence order. Biases are 1-row matrices.
template <typename T>
struct ParamSet {
  Matrix<T> embeddings;  // vocab_size x embed_dim
  Matrix<T> w1;          // embed_dim x head_hidden
  Matrix<T> b1;          // 1 x head_hidden
  Matrix<T> w2;          // head_hidden x head_out
  Matrix<T> b2;          // 1 x head_out

  static constexpr std::array<std::string_view, 5> kNames{"E", "W1", "b1", "W2", "b2"};

  static ParamSet zeros(const EncoderConfig& cfg);

  std::array<Matrix<T>*, 5> tensors() { return {&embeddings, &w1, &b1, &w2, &b2}; }
  std::array<const Matrix<T>*, 5> tensors() const { return {&embeddings, &w1, &b1, &w2, &b2}; }

  template <typename U>
  ParamSet<U> cast() const {
    return {embeddings.template cast<U>(), w1.template cast<U>(), b1.template cast<U>(), w2.template cast<U>(),
            b2.template cast<U>()};
  }

  bool operator==(const ParamSet& o) const {
    return embeddings == o.embeddings && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
  }
};

template <typename T>
using Gradients = ParamSet<T>;

template <typename T>
struct EncoderModel {
  EncoderConfig config;
  ParamSet<T> params;

  template <typename U>
  EncoderModel<U> cast() const {
    return {config, params.template cast<U>()};
  }
  bool operator==(const EncoderModel&) const = default;
};

enum class View { Eval, Train };
enum class ForwardMode { TrainStochastic, Deterministic };

template <typename T>
struct EmbeddingBatch {
  Matrix<T> rows;
  View view = View::Eval;
};

/// Everything backward() needs. Masks hold 0 or 1/(1-p) per unit and are
/// empty when no dropout was applied.
template <typename T>
struct ForwardTape {
  View view = View::Eval;
  ForwardMode mode = ForwardMode::Deterministic;
  std::vector<std::vector<std::uint32_t>> token_ids;
  Matrix<T> pooled;       // n x d, before dropout
  Matrix<T> pooled_mask;  // n x d
  Matrix<T> hidden;       // n x head_hidden, tanh output before dropout
  Matrix<T> hidden_mask;  // n x head_hidden
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases. E, W1, W2
/// are drawn in that order, row-major, from one stream seeded by `seed`.
template <typename T>
EncoderModel<T> init_model(const EncoderConfig& cfg, std::uint64_t seed);

/// Embedding bag + two-layer tanh head. The TRAIN view is the head output;
/// the EVAL view is the mean-pooled embedding with no dropout.
template <typename T>
std::pair<EmbeddingBatch<T>, ForwardTape<T>> forward(const EncoderModel<T>& model, std::span<const TokenSeq> seqs,
                                                     View view, ForwardMode mode, std::uint64_t rng_seed);

/// Recomputes the output of a recorded forward pass with the recorded masks.
template <typename T>
EmbeddingBatch<T> replay(const EncoderModel<T>& model, const ForwardTape<T>& tape);

template <typename T>
Gradients<T> backward(const EncoderModel<T>& model, const ForwardTape<T>& tape, const Matrix<T>& grad_out);

std::vector<TokenSeq> tokenize_all(std::span<const std::string> texts, const EncoderConfig& cfg);

/// EVAL-view embeddings of `texts`, one row each.
template <typename T>
Matrix<T> encode_eval(const EncoderModel<T>& model, std::span<const std::string> texts);

}  // namespace dse
