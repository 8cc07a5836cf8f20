#include <doctest.h>

#include <cmath>

#include "dse/encoder.hpp"

using namespace dse;

namespace {

EncoderConfig small_config(double dropout = 0.1) {
  EncoderConfig c;
  c.vocab_size = 50;
  c.embed_dim = 8;
  c.head_hidden = 8;
  c.head_out = 6;
  c.dropout_rate = dropout;
  return c;
}

std::vector<TokenSeq> random_seqs(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenSeq> out(n);
  for (auto& s : out) {
    const auto len = 1 + rng.uniform_index(5);
    for (std::size_t i = 0; i < len; ++i) s.ids.push_back(static_cast<std::uint32_t>(rng.uniform_index(vocab)));
    s.word_count = len;
  }
  return out;
}

MatrixD random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  MatrixD m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  }
  return m;
}

}  // namespace

TEST_CASE("init is deterministic with zero biases") {
  const auto cfg = small_config();
  const auto a = init_model<float>(cfg, 4);
  const auto b = init_model<float>(cfg, 4);
  CHECK(a == b);
  CHECK(a.params.b1.isZero());
  CHECK(a.params.b2.isZero());
  CHECK_FALSE(a == init_model<float>(cfg, 5));
  const float bound = 1.0f / std::sqrt(8.0f);
  CHECK(a.params.w1.cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("config validation") {
  auto cfg = small_config();
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.embed_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("single-token eval row equals the embedding row") {
  const auto model = init_model<double>(small_config(), 1);
  std::vector<TokenSeq> seqs{{{7}, 1}};
  const auto [batch, tape] = forward(model, std::span<const TokenSeq>(seqs), View::Eval, ForwardMode::Deterministic, 0);
  CHECK(batch.view == View::Eval);
  CHECK(batch.rows.row(0) == model.params.embeddings.row(7));
}

TEST_CASE("mean pooling ignores token multiplicity only through the mean") {
  const auto model = init_model<double>(small_config(), 2);
  std::vector<TokenSeq> seqs{{{3, 9}, 2}, {{3, 3, 9, 9}, 4}, {{9, 3}, 2}};
  const auto [batch, tape] = forward(model, std::span<const TokenSeq>(seqs), View::Eval, ForwardMode::Deterministic, 0);
  CHECK((batch.rows.row(0) - batch.rows.row(1)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((batch.rows.row(0) - batch.rows.row(2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("empty or out-of-range sequences are rejected") {
  const auto model = init_model<double>(small_config(), 2);
  std::vector<TokenSeq> empty{{{}, 0}};
  CHECK_THROWS_AS(forward(model, std::span<const TokenSeq>(empty), View::Train, ForwardMode::Deterministic, 0), Error);
  std::vector<TokenSeq> oov{{{50}, 1}};
  CHECK_THROWS_AS(forward(model, std::span<const TokenSeq>(oov), View::Eval, ForwardMode::Deterministic, 0), Error);
}

TEST_CASE("zero dropout makes stochastic and deterministic passes agree") {
  const auto model = init_model<double>(small_config(0.0), 3);
  const auto seqs = random_seqs(5, 50, 1);
  const auto [a, ta] = forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::TrainStochastic, 9);
  const auto [b, tb] = forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::Deterministic, 9);
  CHECK(a.rows == b.rows);
}

TEST_CASE("different dropout seeds give different masks on the same pair") {
  const auto model = init_model<double>(small_config(0.1), 3);
  std::vector<TokenSeq> seqs{{{4, 5, 6}, 3}, {{4, 5, 6}, 3}};
  const auto [a, ta] = forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::TrainStochastic, 1);
  const auto [b, tb] = forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::TrainStochastic, 2);
  const bool masks_differ = ta.pooled_mask != tb.pooled_mask || ta.hidden_mask != tb.hidden_mask;
  CHECK(masks_differ);
  CHECK(a.rows != b.rows);
  CHECK((ta.pooled_mask.array() == 0.0 || ta.pooled_mask.array() == 1.0 / 0.9).all());
}

TEST_CASE("inverted dropout preserves the expectation") {
  auto cfg = small_config(0.3);
  const auto model = init_model<double>(cfg, 5);
  std::vector<TokenSeq> seqs{{{1, 12, 33}, 3}};
  const auto [det, dtape] = forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::Deterministic, 0);

  // Compare the stochastic pooled vector after masking with the clean one.
  const int n = 10000;
  RowVector<double> sum = RowVector<double>::Zero(8);
  RowVector<double> sum_sq = RowVector<double>::Zero(8);
  for (int i = 0; i < n; ++i) {
    const auto [out, tape] =
        forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::TrainStochastic, 1000 + i);
    const RowVector<double> masked = tape.pooled.row(0).cwiseProduct(tape.pooled_mask.row(0));
    sum += masked;
    sum_sq += masked.cwiseProduct(masked);
  }
  const RowVector<double> mean = sum / n;
  for (int j = 0; j < 8; ++j) {
    const double var = sum_sq(j) / n - mean(j) * mean(j);
    const double se = std::sqrt(var / n);
    CHECK(std::abs(mean(j) - dtape.pooled(0, j)) <= 3 * se + 1e-12);
  }
}

TEST_CASE("replay reproduces the recorded forward pass") {
  const auto model = init_model<double>(small_config(), 6);
  const auto seqs = random_seqs(4, 50, 2);
  const auto [out, tape] = forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::TrainStochastic, 3);
  CHECK(replay(model, tape).rows == out.rows);
}

TEST_CASE("backward of a zero upstream gradient is zero") {
  const auto model = init_model<double>(small_config(), 6);
  const auto seqs = random_seqs(4, 50, 2);
  const auto [out, tape] = forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::TrainStochastic, 3);
  const auto g = backward(model, tape, MatrixD(MatrixD::Zero(4, 6)));
  for (const auto* t : g.tensors()) CHECK(t->isZero());
}

TEST_CASE("backward touches only used embedding rows") {
  const auto model = init_model<double>(small_config(), 6);
  std::vector<TokenSeq> seqs{{{4, 8}, 2}, {{8, 15}, 2}};
  const auto [out, tape] = forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::TrainStochastic, 3);
  Rng rng(1);
  const auto g = backward(model, tape, random_matrix(2, 6, rng));
  for (Eigen::Index r = 0; r < 50; ++r) {
    if (r == 4 || r == 8 || r == 15) continue;
    CHECK(g.embeddings.row(r).isZero());
  }
  CHECK_FALSE(g.embeddings.row(8).isZero());
}

TEST_CASE("backward rejects bad shapes and eval tapes") {
  const auto model = init_model<double>(small_config(), 6);
  const auto seqs = random_seqs(3, 50, 2);
  const auto [out, tape] = forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::Deterministic, 0);
  CHECK_THROWS_AS(backward(model, tape, MatrixD(MatrixD::Zero(3, 5))), Error);
  const auto [eo, etape] = forward(model, std::span<const TokenSeq>(seqs), View::Eval, ForwardMode::Deterministic, 0);
  CHECK_THROWS_AS(backward(model, etape, MatrixD(MatrixD::Zero(3, 6))), Error);
}

TEST_CASE("backward matches central finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto model = init_model<double>(small_config(0.2), seed);
    Rng rng(seed + 100);
    // Non-zero biases exercise their gradients.
    model.params.b1 = random_matrix(1, 8, rng) * 0.1;
    model.params.b2 = random_matrix(1, 6, rng) * 0.1;
    const auto seqs = random_seqs(4, 50, seed);
    const auto [out, tape] =
        forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::TrainStochastic, seed);
    const MatrixD upstream = random_matrix(4, 6, rng);
    const auto grads = backward(model, tape, upstream);

    const double h = 1e-4;
    auto objective = [&](const EncoderModel<double>& m) { return replay(m, tape).rows.cwiseProduct(upstream).sum(); };
    double worst = 0.0;
    for (std::size_t t = 0; t < 5; ++t) {
      const auto& g = *grads.tensors()[t];
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        auto plus = model;
        auto minus = model;
        plus.params.tensors()[t]->data()[i] += h;
        minus.params.tensors()[t]->data()[i] -= h;
        const double fd = (objective(plus) - objective(minus)) / (2 * h);
        const double an = g.data()[i];
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        worst = std::max(worst, rel);
      }
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("encode_eval matches tokenized forward") {
  const auto cfg = small_config();
  const auto model = init_model<float>(cfg, 1);
  const std::vector<std::string> texts{"hello there", "general kenobi you are bold"};
  const auto rows = encode_eval(model, std::span<const std::string>(texts));
  const auto seqs = tokenize_all(std::span<const std::string>(texts), cfg);
  const auto [batch, tape] = forward(model, std::span<const TokenSeq>(seqs), View::Eval, ForwardMode::Deterministic, 0);
  CHECK(rows == batch.rows);
  CHECK(rows.cols() == 8);
}
