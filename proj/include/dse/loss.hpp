#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dse/common.hpp"
#include "dse/encoder.hpp"

namespace dse {

struct LossConfig {
  double temperature = 0.05;
  bool hard_negatives = true;
  /// Whether the anchor's own positive appears (with weight 1) in the softmax denominator.
  bool positive_in_denominator = true;
  double eps_norm = 1e-12;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

// Batch layout: 2M rows, row i and row i+M are the query and response of pair i.
constexpr std::size_t positive_of(std::size_t anchor, std::size_t pairs) {
  return anchor < pairs ? anchor + pairs : anchor - pairs;
}

/// The 2M-2 in-batch negatives of `anchor`, ascending.
std::vector<std::size_t> negatives_of(std::size_t anchor, std::size_t pairs);

/// Hard-negative weights. weights(a, j) is meaningful only for j in
/// negatives_of(a); the diagonal and positive entries are zero.
struct AlphaWeights {
  std::size_t pairs = 0;
  MatrixD weights;

  double operator()(std::size_t anchor, std::size_t negative) const {
    return weights(static_cast<Eigen::Index>(anchor), static_cast<Eigen::Index>(negative));
  }
};

/// u.v / (max(|u|, eps) * max(|v|, eps)), clamped to [-1, 1].
double cosine_sim(std::span<const double> u, std::span<const double> v, double eps_norm = 1e-12);

/// Pairwise cosine similarities of the rows of `embeddings`.
MatrixD similarity_matrix(const MatrixD& embeddings, double eps_norm);

AlphaWeights compute_alpha(const MatrixD& sims, std::size_t pairs, const LossConfig& cfg);
AlphaWeights compute_alpha_for_batch(const MatrixD& embeddings, const LossConfig& cfg);

/// Per-anchor loss: -log( e^{s_ap/t} / (e^{s_ap/t} + sum_j e^{alpha_aj s_aj / t}) ).
double anchor_loss(std::size_t anchor, const MatrixD& sims, const AlphaWeights& alphas, const LossConfig& cfg);

struct EmbeddingLoss {
  double loss = 0.0;
  MatrixD grad;  // dL/d(embeddings), same shape as the input batch
  AlphaWeights alphas;
};

/// Symmetrised batch loss (1/2M) sum over all 2M anchors and its gradient
/// with respect to the embeddings. Alphas are recomputed from the batch unless
/// `frozen` is supplied, and are constants under differentiation either way.
EmbeddingLoss batch_loss_with_grad(const MatrixD& embeddings, const LossConfig& cfg,
                                   const AlphaWeights* frozen = nullptr);

double batch_loss(const MatrixD& embeddings, const LossConfig& cfg, const AlphaWeights* frozen = nullptr);

template <typename T>
struct StepLoss {
  double loss = 0.0;
  Gradients<T> grads;
};

/// Loss of a TRAIN-view batch and dL/d(theta) chained through encoder backward.
template <typename T>
StepLoss<T> batch_loss_and_grad(const EncoderModel<T>& model, const ForwardTape<T>& tape,
                                const Matrix<T>& train_embeddings, const LossConfig& cfg);

/// Plain symmetric NT-Xent with the positive in the denominator and unit weights.
double ntxent_reference(const MatrixD& embeddings, double temperature, double eps_norm = 1e-12);

}  // namespace dse
