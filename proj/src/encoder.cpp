#include "dse/encoder.hpp"

#include <cmath>

namespace dse {

void EncoderConfig::validate() const {
  if (vocab_size < 8) throw Error("encoder: vocab_size must be >= 8");
  if (embed_dim < 1) throw Error("encoder: embed_dim must be >= 1");
  if (head_hidden < 1) throw Error("encoder: head_hidden must be >= 1");
  if (head_out < 1) throw Error("encoder: head_out must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error("encoder: dropout_rate must be in [0, 1)");
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros(const EncoderConfig& cfg) {
  const auto v = static_cast<Eigen::Index>(cfg.vocab_size);
  const auto d = static_cast<Eigen::Index>(cfg.embed_dim);
  const auto h = static_cast<Eigen::Index>(cfg.head_hidden);
  const auto o = static_cast<Eigen::Index>(cfg.head_out);
  return {Matrix<T>::Zero(v, d), Matrix<T>::Zero(d, h), Matrix<T>::Zero(1, h), Matrix<T>::Zero(h, o),
          Matrix<T>::Zero(1, o)};
}

namespace {

template <typename T>
void fill_uniform(Matrix<T>& m, double fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  T* data = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) data[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Matrix<T> mask(rows, cols);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform01() < p ? T(0) : scale;
  return mask;
}

template <typename T>
void check_ids(const EncoderConfig& cfg, const std::vector<std::uint32_t>& ids) {
  if (ids.empty()) throw Error("forward: empty token sequence has no pooling target");
  for (auto id : ids) {
    if (id >= cfg.vocab_size) throw Error("forward: token id " + std::to_string(id) + " out of vocabulary");
  }
}

template <typename T>
Matrix<T> mean_pool(const EncoderModel<T>& model, const std::vector<std::vector<std::uint32_t>>& ids) {
  const auto d = static_cast<Eigen::Index>(model.config.embed_dim);
  Matrix<T> pooled = Matrix<T>::Zero(static_cast<Eigen::Index>(ids.size()), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto row = pooled.row(static_cast<Eigen::Index>(i));
    for (auto id : ids[i]) row += model.params.embeddings.row(id);
    row /= static_cast<T>(ids[i].size());
  }
  return pooled;
}

// Head forward shared by forward() and replay() so both produce identical bits.
template <typename T>
Matrix<T> head_output(const EncoderModel<T>& model, const Matrix<T>& pooled, const Matrix<T>& pooled_mask,
                      Matrix<T>& hidden, const Matrix<T>& hidden_mask) {
  const auto& p = model.params;
  Matrix<T> x = pooled_mask.size() ? Matrix<T>(pooled.cwiseProduct(pooled_mask)) : pooled;
  Matrix<T> z = x * p.w1;
  z.rowwise() += p.b1.row(0);
  hidden = z.array().tanh().matrix();
  Matrix<T> hd = hidden_mask.size() ? Matrix<T>(hidden.cwiseProduct(hidden_mask)) : hidden;
  Matrix<T> y = hd * p.w2;
  y.rowwise() += p.b2.row(0);
  return y;
}

}  // namespace

template <typename T>
EncoderModel<T> init_model(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  EncoderModel<T> model{cfg, ParamSet<T>::zeros(cfg)};
  Rng rng(seed);
  fill_uniform(model.params.embeddings, static_cast<double>(cfg.vocab_size), rng);
  fill_uniform(model.params.w1, static_cast<double>(cfg.embed_dim), rng);
  fill_uniform(model.params.w2, static_cast<double>(cfg.head_hidden), rng);
  return model;
}

template <typename T>
std::pair<EmbeddingBatch<T>, ForwardTape<T>> forward(const EncoderModel<T>& model, std::span<const TokenSeq> seqs,
                                                     View view, ForwardMode mode, std::uint64_t rng_seed) {
  ForwardTape<T> tape;
  tape.view = view;
  tape.mode = mode;
  tape.token_ids.reserve(seqs.size());
  for (const auto& s : seqs) {
    check_ids<T>(model.config, s.ids);
    tape.token_ids.push_back(s.ids);
  }
  tape.pooled = mean_pool(model, tape.token_ids);
  if (view == View::Eval) {
    return {EmbeddingBatch<T>{tape.pooled, View::Eval}, std::move(tape)};
  }

  const double p = model.config.dropout_rate;
  if (mode == ForwardMode::TrainStochastic && p > 0.0) {
    const auto n = static_cast<Eigen::Index>(seqs.size());
    const auto d = static_cast<Eigen::Index>(model.config.embed_dim);
    const auto h = static_cast<Eigen::Index>(model.config.head_hidden);
    tape.pooled_mask.resize(n, d);
    tape.hidden_mask.resize(n, h);
    Rng rng(rng_seed);
    for (Eigen::Index i = 0; i < n; ++i) {
      tape.pooled_mask.row(i) = dropout_mask<T>(1, d, p, rng);
      tape.hidden_mask.row(i) = dropout_mask<T>(1, h, p, rng);
    }
  }
  Matrix<T> out = head_output(model, tape.pooled, tape.pooled_mask, tape.hidden, tape.hidden_mask);
  return {EmbeddingBatch<T>{std::move(out), View::Train}, std::move(tape)};
}

template <typename T>
EmbeddingBatch<T> replay(const EncoderModel<T>& model, const ForwardTape<T>& tape) {
  Matrix<T> pooled = mean_pool(model, tape.token_ids);
  if (tape.view == View::Eval) return {std::move(pooled), View::Eval};
  Matrix<T> hidden;
  return {head_output(model, pooled, tape.pooled_mask, hidden, tape.hidden_mask), View::Train};
}

template <typename T>
Gradients<T> backward(const EncoderModel<T>& model, const ForwardTape<T>& tape, const Matrix<T>& grad_out) {
  if (tape.view != View::Train) throw Error("backward: tape must come from a TRAIN-view forward");
  const auto n = static_cast<Eigen::Index>(tape.token_ids.size());
  const auto& cfg = model.config;
  if (grad_out.rows() != n || grad_out.cols() != static_cast<Eigen::Index>(cfg.head_out)) {
    throw Error("backward: upstream gradient is " + std::to_string(grad_out.rows()) + "x" +
                std::to_string(grad_out.cols()) + ", expected " + std::to_string(n) + "x" +
                std::to_string(cfg.head_out));
  }
  if (tape.pooled.rows() != n || tape.pooled.cols() != static_cast<Eigen::Index>(cfg.embed_dim) ||
      tape.hidden.cols() != static_cast<Eigen::Index>(cfg.head_hidden)) {
    throw Error("backward: tape shapes do not match the model");
  }
  const auto& p = model.params;
  Gradients<T> g = ParamSet<T>::zeros(cfg);
  const bool masked = tape.pooled_mask.size() != 0;

  const Matrix<T> hd = masked ? Matrix<T>(tape.hidden.cwiseProduct(tape.hidden_mask)) : tape.hidden;
  g.w2.noalias() = hd.transpose() * grad_out;
  g.b2 = grad_out.colwise().sum();

  Matrix<T> dh = grad_out * p.w2.transpose();
  if (masked) dh = dh.cwiseProduct(tape.hidden_mask);
  const Matrix<T> dz = dh.cwiseProduct((T(1) - tape.hidden.array().square()).matrix());

  const Matrix<T> x = masked ? Matrix<T>(tape.pooled.cwiseProduct(tape.pooled_mask)) : tape.pooled;
  g.w1.noalias() = x.transpose() * dz;
  g.b1 = dz.colwise().sum();

  Matrix<T> dpooled = dz * p.w1.transpose();
  if (masked) dpooled = dpooled.cwiseProduct(tape.pooled_mask);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ids = tape.token_ids[static_cast<std::size_t>(i)];
    const T inv = T(1) / static_cast<T>(ids.size());
    for (auto id : ids) g.embeddings.row(id) += inv * dpooled.row(i);
  }
  return g;
}

std::vector<TokenSeq> tokenize_all(std::span<const std::string> texts, const EncoderConfig& cfg) {
  std::vector<TokenSeq> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(tokenize(t, cfg.vocab_size, cfg.hash_seed));
  return out;
}

template <typename T>
Matrix<T> encode_eval(const EncoderModel<T>& model, std::span<const std::string> texts) {
  const auto seqs = tokenize_all(texts, model.config);
  return forward(model, std::span<const TokenSeq>(seqs), View::Eval, ForwardMode::Deterministic, 0).first.rows;
}

#define DSE_INSTANTIATE_ENCODER(T)                                                                          \
  template struct ParamSet<T>;                                                                               \
  template EncoderModel<T> init_model<T>(const EncoderConfig&, std::uint64_t);                               \
  template std::pair<EmbeddingBatch<T>, ForwardTape<T>> forward<T>(const EncoderModel<T>&,                   \
                                                                   std::span<const TokenSeq>, View,          \
                                                                   ForwardMode, std::uint64_t);              \
  template EmbeddingBatch<T> replay<T>(const EncoderModel<T>&, const ForwardTape<T>&);                       \
  template Gradients<T> backward<T>(const EncoderModel<T>&, const ForwardTape<T>&, const Matrix<T>&);        \
  template Matrix<T> encode_eval<T>(const EncoderModel<T>&, std::span<const std::string>);

DSE_INSTANTIATE_ENCODER(float)
DSE_INSTANTIATE_ENCODER(double)

#undef DSE_INSTANTIATE_ENCODER

}  // namespace dse
