#include "dse/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dse {

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw Error("loss: temperature must be > 0");
  if (!(eps_norm > 0.0)) throw Error("loss: eps_norm must be > 0");
}

std::vector<std::size_t> negatives_of(std::size_t anchor, std::size_t pairs) {
  std::vector<std::size_t> out;
  out.reserve(2 * pairs - 2);
  const std::size_t pos = positive_of(anchor, pairs);
  for (std::size_t j = 0; j < 2 * pairs; ++j) {
    if (j != anchor && j != pos) out.push_back(j);
  }
  return out;
}

double cosine_sim(std::span<const double> u, std::span<const double> v, double eps_norm) {
  if (u.size() != v.size()) throw Error("cosine_sim: dimension mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const double s = dot / (std::max(std::sqrt(uu), eps_norm) * std::max(std::sqrt(vv), eps_norm));
  return std::clamp(s, -1.0, 1.0);
}

namespace {

Eigen::VectorXd clamped_norms(const MatrixD& x, double eps) {
  return x.rowwise().norm().cwiseMax(eps);
}

void check_batch(const MatrixD& embeddings) {
  if (embeddings.rows() < 4 || embeddings.rows() % 2 != 0) {
    throw Error("contrastive batch needs 2M rows with M >= 2, got " + std::to_string(embeddings.rows()));
  }
}

}  // namespace

MatrixD similarity_matrix(const MatrixD& embeddings, double eps_norm) {
  const Eigen::VectorXd norms = clamped_norms(embeddings, eps_norm);
  const MatrixD unit = norms.cwiseInverse().asDiagonal() * embeddings;
  MatrixD sims = unit * unit.transpose();
  return sims.cwiseMax(-1.0).cwiseMin(1.0);
}

AlphaWeights compute_alpha(const MatrixD& sims, std::size_t pairs, const LossConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(2 * pairs);
  if (pairs < 2 || sims.rows() != n || sims.cols() != n) throw Error("compute_alpha: need a 2M x 2M matrix, M >= 2");
  AlphaWeights out{pairs, MatrixD::Zero(n, n)};
  for (std::size_t a = 0; a < 2 * pairs; ++a) {
    const auto negs = negatives_of(a, pairs);
    const auto ai = static_cast<Eigen::Index>(a);
    if (!cfg.hard_negatives) {
      for (auto j : negs) out.weights(ai, static_cast<Eigen::Index>(j)) = 1.0;
      continue;
    }
    double peak = -std::numeric_limits<double>::infinity();
    for (auto j : negs) peak = std::max(peak, sims(ai, static_cast<Eigen::Index>(j)) / cfg.temperature);
    double mean = 0.0;
    for (auto j : negs) mean += std::exp(sims(ai, static_cast<Eigen::Index>(j)) / cfg.temperature - peak);
    mean /= static_cast<double>(negs.size());
    for (auto j : negs) {
      const auto ji = static_cast<Eigen::Index>(j);
      out.weights(ai, ji) = std::exp(sims(ai, ji) / cfg.temperature - peak) / mean;
    }
  }
  return out;
}

AlphaWeights compute_alpha_for_batch(const MatrixD& embeddings, const LossConfig& cfg) {
  check_batch(embeddings);
  return compute_alpha(similarity_matrix(embeddings, cfg.eps_norm), static_cast<std::size_t>(embeddings.rows() / 2),
                       cfg);
}

namespace {

// Logits entering the softmax denominator for one anchor, plus d(loss)/d(s_aj)
// written into `dsim_row` (scaled by `weight`). Returns the anchor's loss.
double anchor_terms(std::size_t a, const MatrixD& sims, const AlphaWeights& alphas, const LossConfig& cfg,
                    double weight, Eigen::Ref<Eigen::RowVectorXd> dsim_row, bool want_grad) {
  const std::size_t m = alphas.pairs;
  const std::size_t pos = positive_of(a, m);
  const auto ai = static_cast<Eigen::Index>(a);
  const double tau = cfg.temperature;

  // (index, coefficient on s_aj) for every denominator term.
  std::vector<std::pair<std::size_t, double>> terms;
  terms.reserve(2 * m - 1);
  if (cfg.positive_in_denominator) terms.emplace_back(pos, 1.0);
  for (auto j : negatives_of(a, m)) terms.emplace_back(j, alphas(a, j));

  double peak = -std::numeric_limits<double>::infinity();
  std::vector<double> logits(terms.size());
  for (std::size_t t = 0; t < terms.size(); ++t) {
    logits[t] = terms[t].second * sims(ai, static_cast<Eigen::Index>(terms[t].first)) / tau;
    peak = std::max(peak, logits[t]);
  }
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  const double lse = peak + std::log(total);
  const double loss = lse - sims(ai, static_cast<Eigen::Index>(pos)) / tau;
  if (!std::isfinite(loss)) throw Error("contrastive loss: non-finite value at anchor " + std::to_string(a));

  if (want_grad) {
    dsim_row(static_cast<Eigen::Index>(pos)) -= weight / tau;
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const double softmax = std::exp(logits[t] - lse);
      dsim_row(static_cast<Eigen::Index>(terms[t].first)) += weight * softmax * terms[t].second / tau;
    }
  }
  return loss;
}

}  // namespace

double anchor_loss(std::size_t anchor, const MatrixD& sims, const AlphaWeights& alphas, const LossConfig& cfg) {
  if (alphas.pairs < 2) throw Error("anchor_loss: need M >= 2");
  Eigen::RowVectorXd unused = Eigen::RowVectorXd::Zero(sims.cols());
  return anchor_terms(anchor, sims, alphas, cfg, 0.0, unused, false);
}

EmbeddingLoss batch_loss_with_grad(const MatrixD& embeddings, const LossConfig& cfg, const AlphaWeights* frozen) {
  cfg.validate();
  check_batch(embeddings);
  const auto n = embeddings.rows();
  const std::size_t m = static_cast<std::size_t>(n / 2);

  const Eigen::VectorXd norms = clamped_norms(embeddings, cfg.eps_norm);
  const MatrixD unit = norms.cwiseInverse().asDiagonal() * embeddings;
  const MatrixD sims = (unit * unit.transpose()).cwiseMax(-1.0).cwiseMin(1.0);

  EmbeddingLoss out;
  out.alphas = frozen ? *frozen : compute_alpha(sims, m, cfg);
  if (out.alphas.pairs != m) throw Error("batch loss: frozen alphas were computed for a different batch size");

  const double weight = 1.0 / static_cast<double>(n);
  MatrixD dsim = MatrixD::Zero(n, n);
  double total = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    total += anchor_terms(static_cast<std::size_t>(a), sims, out.alphas, cfg, weight, dsim.row(a), true);
  }
  out.loss = total * weight;

  // s_aj = unit_a . unit_j, so dL/d(unit) = (D + D^T) unit.
  const MatrixD dunit = (dsim + dsim.transpose()) * unit;
  out.grad.resize(n, embeddings.cols());
  const Eigen::VectorXd raw_norms = embeddings.rowwise().norm();
  for (Eigen::Index a = 0; a < n; ++a) {
    if (raw_norms(a) > cfg.eps_norm) {
      const double radial = dunit.row(a).dot(unit.row(a));
      out.grad.row(a) = (dunit.row(a) - radial * unit.row(a)) / norms(a);
    } else {
      out.grad.row(a) = dunit.row(a) / norms(a);
    }
  }
  return out;
}

double batch_loss(const MatrixD& embeddings, const LossConfig& cfg, const AlphaWeights* frozen) {
  cfg.validate();
  check_batch(embeddings);
  const auto n = embeddings.rows();
  const MatrixD sims = similarity_matrix(embeddings, cfg.eps_norm);
  const AlphaWeights alphas = frozen ? *frozen : compute_alpha(sims, static_cast<std::size_t>(n / 2), cfg);
  double total = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) total += anchor_loss(static_cast<std::size_t>(a), sims, alphas, cfg);
  return total / static_cast<double>(n);
}

template <typename T>
StepLoss<T> batch_loss_and_grad(const EncoderModel<T>& model, const ForwardTape<T>& tape,
                                const Matrix<T>& train_embeddings, const LossConfig& cfg) {
  const EmbeddingLoss el = batch_loss_with_grad(train_embeddings.template cast<double>(), cfg);
  const Matrix<T> upstream = el.grad.template cast<T>();
  return {el.loss, backward(model, tape, upstream)};
}

template StepLoss<float> batch_loss_and_grad<float>(const EncoderModel<float>&, const ForwardTape<float>&,
                                                    const Matrix<float>&, const LossConfig&);
template StepLoss<double> batch_loss_and_grad<double>(const EncoderModel<double>&, const ForwardTape<double>&,
                                                      const Matrix<double>&, const LossConfig&);

double ntxent_reference(const MatrixD& embeddings, double temperature, double eps_norm) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (n < 4 || n % 2 != 0) throw Error("ntxent_reference: need 2M rows with M >= 2");
  const std::size_t m = n / 2;
  const auto dim = static_cast<std::size_t>(embeddings.cols());

  std::vector<std::vector<double>> rows(n, std::vector<double>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dim; ++k) {
      rows[i][k] = embeddings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t target = i < m ? i + m : i - m;
    std::vector<double> logits;
    double target_logit = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double z = cosine_sim(rows[i], rows[j], eps_norm) / temperature;
      if (j == target) target_logit = z;
      logits.push_back(z);
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - peak);
    total += -(target_logit - peak - std::log(sum));
  }
  return total / static_cast<double>(n);
}

}  // namespace dse
