// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dse/eval.hpp"
#include "dse/io.hpp"
#include "dse/loss.hpp"
#include "dse/pairs.hpp"
#include "dse/study.hpp"
#include "dse/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dse;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

MatrixD uniform_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  MatrixD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

MatrixD grid_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  MatrixD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(rng.uniform_index(5)) - 2.0;
  return m;
}

oracle::Vec vec_of(const MatrixD& m, Eigen::Index r) { return oracle::Vec(m.row(r).data(), m.row(r).data() + m.cols()); }

oracle::Rows rows_of(const MatrixD& m) {
  oracle::Rows out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vec_of(m, r));
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = Clock::now();
  EncoderConfig ec;
  ec.vocab_size = 50;
  ec.embed_dim = 8;
  ec.head_hidden = 8;
  ec.head_out = 8;
  ec.dropout_rate = 0.1;
  const LossConfig lc;
  const std::size_t m = 3;
  const double h = 1e-4;
  const int instances = 20;
  double worst = 0.0;

  for (int inst = 0; inst < instances; ++inst) {
    Rng rng(mix_seed(101, static_cast<std::uint64_t>(inst)));
    auto model = init_model<double>(ec, rng.next());
    model.params.b1 = uniform_matrix(1, 8, rng, -0.1, 0.1);
    model.params.b2 = uniform_matrix(1, 8, rng, -0.1, 0.1);
    std::vector<TokenSeq> seqs(2 * m);
    for (auto& s : seqs) {
      const auto len = 1 + rng.uniform_index(6);
      for (std::size_t i = 0; i < len; ++i) s.ids.push_back(static_cast<std::uint32_t>(rng.uniform_index(50)));
      s.word_count = len;
    }
    const auto [out, tape] =
        forward(model, std::span<const TokenSeq>(seqs), View::Train, ForwardMode::TrainStochastic, rng.next());
    const auto el = batch_loss_with_grad(out.rows, lc);
    const auto grads = backward(model, tape, el.grad);

    auto loss_at = [&](const EncoderModel<double>& mm) { return batch_loss(replay(mm, tape).rows, lc, &el.alphas); };
    for (std::size_t t = 0; t < 5; ++t) {
      const auto& g = *grads.tensors()[t];
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        auto plus = model, minus = model;
        plus.params.tensors()[t]->data()[i] += h;
        minus.params.tensors()[t]->data()[i] -= h;
        const double fd = (loss_at(plus) - loss_at(minus)) / (2 * h);
        const double an = g.data()[i];
        const double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
        worst = std::max(worst, std::abs(fd - an) / scale);
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0, std::to_string(instances) + " instances, max rel err " + fmt("%.3g", worst) +
                                           ", " + fmt("%.2f", secs) + " s"};
}

Outcome alpha_identity() {
  Rng rng(202);
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    const std::size_t m = 2 + rng.uniform_index(15);
    const auto x = uniform_matrix(static_cast<Eigen::Index>(2 * m), 16, rng);
    const auto alphas = compute_alpha_for_batch(x, LossConfig{});
    for (std::size_t a = 0; a < 2 * m; ++a) {
      const auto negs = negatives_of(a, m);
      double sum = 0.0;
      for (auto j : negs) sum += alphas(a, j);
      worst = std::max(worst, std::abs(sum / static_cast<double>(negs.size()) - 1.0));
    }
  }
  return {worst < 1e-6, "100 batches, max |mean alpha - 1| = " + fmt("%.3g", worst)};
}

Outcome reference_equivalence() {
  Rng rng(303);
  LossConfig lc;
  lc.hard_negatives = false;
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    const std::size_t m = 2 + rng.uniform_index(15);
    const auto x = uniform_matrix(static_cast<Eigen::Index>(2 * m), 16, rng);
    worst = std::max(worst, std::abs(batch_loss(x, lc) - ntxent_reference(x, lc.temperature)));
  }
  return {worst < 1e-6, "100 batches, max |diff| = " + fmt("%.3g", worst)};
}

Outcome scale_invariance() {
  Rng rng(404);
  double worst = 0.0;
  std::size_t argmax_changes = 0, rank_changes = 0;
  for (int b = 0; b < 100; ++b) {
    const std::size_t m = 2 + rng.uniform_index(8);
    const auto x = uniform_matrix(static_cast<Eigen::Index>(2 * m), 8, rng);
    MatrixD y = x;
    for (Eigen::Index r = 0; r < y.rows(); ++r) y.row(r) *= std::exp(rng.uniform(-3.0, 3.0));
    worst = std::max(worst, std::abs(batch_loss(x, LossConfig{}) - batch_loss(y, LossConfig{})));

    // 1-shot prototypes: scaling the support scales the prototype only.
    const auto support = uniform_matrix(5, 8, rng);
    const auto queries = uniform_matrix(20, 8, rng);
    MatrixD support2 = support, queries2 = queries;
    for (Eigen::Index r = 0; r < 5; ++r) support2.row(r) *= std::exp(rng.uniform(-3.0, 3.0));
    for (Eigen::Index r = 0; r < 20; ++r) queries2.row(r) *= std::exp(rng.uniform(-3.0, 3.0));
    const std::vector<int> labels{0, 1, 2, 3, 4};
    const auto p1 = classify_protonet(queries, build_prototypes(support, labels, 5));
    const auto p2 = classify_protonet(queries2, build_prototypes(support2, labels, 5));
    for (std::size_t i = 0; i < p1.size(); ++i) argmax_changes += p1[i].label != p2[i].label;

    const auto golds = uniform_matrix(20, 8, rng);
    const auto pool = uniform_matrix(60, 8, rng);
    MatrixD golds2 = golds, pool2 = pool;
    for (Eigen::Index r = 0; r < 20; ++r) golds2.row(r) *= std::exp(rng.uniform(-3.0, 3.0));
    for (Eigen::Index r = 0; r < 60; ++r) pool2.row(r) *= std::exp(rng.uniform(-3.0, 3.0));
    const std::vector<std::size_t> ks{1, 3, 10};
    const auto r1 = rank_topk(queries, golds, pool, {}, ks, 30, static_cast<std::uint64_t>(b));
    const auto r2 = rank_topk(queries2, golds2, pool2, {}, ks, 30, static_cast<std::uint64_t>(b));
    for (std::size_t q = 0; q < 20; ++q) {
      // Full candidate order by similarity, gold first among ties it loses.
      auto order = [&](const MatrixD& qs, const MatrixD& gs, const MatrixD& ps) {
        std::vector<std::pair<double, long>> v;
        v.emplace_back(oracle::cosine(vec_of(qs, static_cast<Eigen::Index>(q)), vec_of(gs, static_cast<Eigen::Index>(q))), -1);
        for (auto c : r1.candidates[q]) {
          v.emplace_back(oracle::cosine(vec_of(qs, static_cast<Eigen::Index>(q)), vec_of(ps, static_cast<Eigen::Index>(c))),
                         static_cast<long>(c));
        }
        std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b2) { return a.first > b2.first; });
        std::vector<long> ids;
        for (const auto& e : v) ids.push_back(e.second);
        return ids;
      };
      rank_changes += r1.gold_ranks[q] != r2.gold_ranks[q] || r1.candidates[q] != r2.candidates[q] ||
                      order(queries, golds, pool) != order(queries2, golds2, pool2);
    }
  }
  return {worst < 1e-6 && argmax_changes == 0 && rank_changes == 0,
          "max |dL| = " + fmt("%.3g", worst) + ", argmax changes " + std::to_string(argmax_changes) +
              ", ranking changes " + std::to_string(rank_changes)};
}

Outcome worked_value() {
  const oracle::Rows e{{1, 0}, {0, 1}, {1, 0}, {0, 1}};
  const oracle::ScalarLoss scalar{1.0, true, true};
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  const double brute = scalar.batch(e);
  MatrixD x(4, 2);
  x << 1, 0, 0, 1, 1, 0, 0, 1;
  LossConfig lc;
  lc.temperature = 1.0;
  const double got = batch_loss_with_grad(x, lc).loss;
  const bool ok = std::abs(brute - expected) < 1e-12 && std::abs(got - expected) < 1e-4 && std::abs(got - 0.5514) < 1e-4;
  return {ok, "oracle " + fmt("%.6f", brute) + ", library " + fmt("%.6f", got) + ", expected " + fmt("%.6f", expected)};
}

Outcome oracle_equivalence() {
  Rng rng(606);
  const int instances = 200;
  std::size_t bad_proto = 0, bad_oos = 0, bad_rank = 0, bad_nli = 0, bad_f1 = 0;
  for (int inst = 0; inst < instances; ++inst) {
    // Protonet.
    const auto protos = grid_matrix(10, 4, rng);
    const auto queries = grid_matrix(30, 4, rng);
    const PrototypeSet ps{protos, std::vector<std::size_t>(10, 1)};
    const auto preds = classify_protonet(queries, ps);
    const auto prow = rows_of(protos);
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
      bad_proto += preds[static_cast<std::size_t>(i)].label != oracle::nearest_prototype(vec_of(queries, i), prow);
    }

    // OOS: flags from the mean / mean-std rule, then the four metrics.
    std::vector<int> gold(30);
    for (auto& g : gold) g = rng.uniform_index(4) == 0 ? kOosLabel : static_cast<int>(rng.uniform_index(10));
    for (auto rule : {ThresholdRule::Mean, ThresholdRule::MeanMinusStd}) {
      OOSConfig cfg;
      cfg.rule = rule;
      const auto d = detect_oos(preds, cfg, gold);
      std::vector<double> sims;
      std::vector<int> labels;
      for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        const auto q = vec_of(queries, i);
        const int c = oracle::nearest_prototype(q, prow);
        labels.push_back(c);
        sims.push_back(oracle::cosine(q, prow[static_cast<std::size_t>(c)]));
      }
      double mean = 0.0;
      for (double s : sims) mean += s;
      mean /= static_cast<double>(sims.size());
      double var = 0.0;
      for (double s : sims) var += (s - mean) * (s - mean);
      const double thr = rule == ThresholdRule::Mean ? mean : mean - std::sqrt(var / static_cast<double>(sims.size()));
      std::size_t all_ok = 0, in_ok = 0, in_n = 0, bin_ok = 0, oos_n = 0, oos_hit = 0;
      for (std::size_t i = 0; i < sims.size(); ++i) {
        const bool flagged = sims[i] < thr;
        bad_oos += flagged != d.predictions[i].oos;
        const bool gold_oos = gold[i] == kOosLabel;
        bin_ok += flagged == gold_oos;
        if (gold_oos) {
          ++oos_n;
          oos_hit += flagged;
          all_ok += flagged;
        } else {
          ++in_n;
          const bool ok = !flagged && labels[i] == gold[i];
          in_ok += ok;
          all_ok += ok;
        }
      }
      auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
      const auto rep = oos_metrics(gold, d.predictions);
      bad_oos += rep.metrics.at("Accuracy") != ratio(all_ok, sims.size());
      bad_oos += rep.metrics.at("In-Accuracy") != ratio(in_ok, in_n);
      bad_oos += rep.metrics.at("OOS-Accuracy") != ratio(bin_ok, sims.size());
      bad_oos += rep.metrics.at("OOS-Recall") != ratio(oos_hit, oos_n);
    }

    // Top-k ranking.
    const auto rq = grid_matrix(5, 3, rng), rg = grid_matrix(5, 3, rng), pool = grid_matrix(40, 3, rng);
    const std::vector<std::size_t> ks{1, 3, 10};
    const auto rr = rank_topk(rq, rg, pool, {}, ks, 20, static_cast<std::uint64_t>(inst));
    std::vector<std::size_t> oracle_ranks;
    for (std::size_t q = 0; q < 5; ++q) {
      const auto qv = vec_of(rq, static_cast<Eigen::Index>(q));
      std::vector<double> neg;
      for (auto c : rr.candidates[q]) neg.push_back(oracle::cosine(qv, vec_of(pool, static_cast<Eigen::Index>(c))));
      oracle_ranks.push_back(oracle::sorted_gold_rank(oracle::cosine(qv, vec_of(rg, static_cast<Eigen::Index>(q))), neg));
      bad_rank += rr.candidates[q].size() != 19;
    }
    bad_rank += oracle_ranks != rr.gold_ranks;
    for (auto k : ks) {
      std::size_t hits = 0;
      for (auto r : oracle_ranks) hits += r <= k;
      bad_rank += rr.report.metrics.at("Top-" + std::to_string(k)) != static_cast<double>(hits) / 5.0;
    }

    // NLI probe.
    const auto na = grid_matrix(10, 3, rng), ne = grid_matrix(10, 3, rng), nc = grid_matrix(10, 3, rng);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < 10; ++i) {
      correct += oracle::cosine(vec_of(na, i), vec_of(ne, i)) > oracle::cosine(vec_of(na, i), vec_of(nc, i));
    }
    bad_nli += nli_probe(na, ne, nc) != static_cast<double>(correct) / 10.0;

    // Micro / macro F1.
    const std::size_t n_items = 50, n_labels = 3;
    std::vector<LabelBits> g(n_items, LabelBits(n_labels)), p(n_items, LabelBits(n_labels));
    for (std::size_t i = 0; i < n_items; ++i) {
      for (std::size_t l = 0; l < n_labels; ++l) {
        g[i][l] = rng.uniform_index(2 + 2 * l) == 0;
        p[i][l] = rng.uniform_index(2 + 2 * l) == 0;
      }
    }
    oracle::Confusion pooled;
    double macro = 0.0;
    for (std::size_t l = 0; l < n_labels; ++l) {
      oracle::Confusion c;
      for (std::size_t i = 0; i < n_items; ++i) {
        c.tp += g[i][l] && p[i][l];
        c.fp += !g[i][l] && p[i][l];
        c.fn += g[i][l] && !p[i][l];
      }
      pooled.tp += c.tp;
      pooled.fp += c.fp;
      pooled.fn += c.fn;
      macro += oracle::f1_of(c);
    }
    const auto f = f1_scores(g, p);
    // F1 is a ratio of integers; both forms agree to rounding of a single division.
    bad_f1 += std::abs(f.micro - oracle::f1_of(pooled)) > 1e-15;
    bad_f1 += std::abs(f.macro - macro / static_cast<double>(n_labels)) > 1e-15;
  }
  const bool ok = bad_proto + bad_oos + bad_rank + bad_nli + bad_f1 == 0;
  return {ok, std::to_string(instances) + " instances; mismatches protonet " + std::to_string(bad_proto) + ", oos " +
                  std::to_string(bad_oos) + ", rank " + std::to_string(bad_rank) + ", nli " + std::to_string(bad_nli) +
                  ", f1 " + std::to_string(bad_f1)};
}

Outcome pair_count_laws() {
  Rng rng(707);
  std::size_t bad = 0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t turns = rng.uniform_index(15);
    Dialogue d{"d" + std::to_string(i), {}};
    std::vector<bool> survives;
    for (std::size_t t = 0; t < turns; ++t) {
      const bool keep = rng.uniform_index(5) != 0;
      survives.push_back(keep);
      const std::size_t words = keep ? 4 + rng.uniform_index(4) : 1 + rng.uniform_index(3);
      std::string text;
      for (std::size_t w = 0; w < words; ++w) text += (w ? " " : "") + std::string("w") + std::to_string(rng.uniform_index(100));
      d.turns.push_back({t % 2 ? Speaker::Sys : Speaker::Usr, text});
    }
    PairBuildConfig all;
    all.query_widths = {1, 2, 3};
    std::size_t expect_combined = 0;
    for (std::size_t k = 1; k <= 3; ++k) {
      const auto windows = oracle::enumerate_windows(survives, k);
      const auto got = k == 1 ? build_consecutive({d}) : build_k_to_1({d}, static_cast<int>(k));
      bad += got.size() != windows.size();
      expect_combined += windows.size();
    }
    bad += build_combined({d}, all).size() != expect_combined;

    // Closed forms per run of n contiguous survivors.
    std::size_t law_k[4] = {0, 0, 0, 0}, law_combined = 0;
    std::size_t run = 0;
    auto close_run = [&] {
      for (std::size_t k = 1; k <= 3; ++k) law_k[k] += run > k ? run - k : 0;
      law_combined += run >= 3 ? 3 * run - 6 : (run == 2 ? 1 : 0);
      run = 0;
    };
    for (bool s : survives) {
      if (s) {
        ++run;
      } else {
        close_run();
      }
    }
    close_run();
    bad += build_consecutive({d}).size() != law_k[1];
    bad += build_k_to_1({d}, 2).size() != law_k[2];
    bad += build_k_to_1({d}, 3).size() != law_k[3];
    bad += build_combined({d}, all).size() != law_combined;
  }
  return {bad == 0, "500 dialogues, " + std::to_string(bad) + " violations"};
}

Outcome synthetic_separation() {
  const auto t0 = Clock::now();
  const int seeds = 10;
  double trained_acc = 0.0, untrained_acc = 0.0, gap = 0.0;
  for (int s = 0; s < seeds; ++s) {
    SyntheticConfig sc;
    sc.num_topics = 8;
    sc.dialogues_per_topic = 100;
    sc.turns_per_dialogue = 6;
    sc.words_per_turn = 6;
    sc.seed = static_cast<std::uint64_t>(s);
    const auto pairs = build_consecutive(gen_synthetic(sc));

    SyntheticConfig held = sc;
    held.dialogues_per_topic = 10;
    held.seed = 1000 + static_cast<std::uint64_t>(s);
    const auto eval_set = synthetic_intent_set(gen_synthetic(held));

    EncoderConfig ec;
    TrainConfig tc;
    tc.epochs = 10;
    tc.init_seed = tc.shuffle_seed = tc.dropout_seed = static_cast<std::uint64_t>(s);

    const auto untrained = init_model<float>(ec, tc.init_seed);
    untrained_acc += eval_intent(eval_set, 1, static_cast<std::uint64_t>(s), 5, make_embedder(untrained)).metrics.at("Accuracy");

    const auto result = train(pairs, ec, LossConfig{}, tc);
    const auto embed = make_embedder(result.final.model);
    trained_acc += eval_intent(eval_set, 1, static_cast<std::uint64_t>(s), 5, embed).metrics.at("Accuracy");
    const auto labels = eval_set.labels();
    gap += cluster_separation(embed(eval_set.texts()), labels).gap();
  }
  trained_acc /= seeds;
  untrained_acc /= seeds;
  gap /= seeds;
  const double secs = seconds_since(t0);
  const bool ok = trained_acc >= 0.85 && trained_acc - untrained_acc >= 0.20 && gap >= 0.2 && secs < 180.0;
  return {ok, "1-shot acc " + fmt("%.3f", trained_acc) + " (untrained " + fmt("%.3f", untrained_acc) + "), intra-inter " +
                  fmt("%.3f", gap) + ", " + fmt("%.1f", secs) + " s"};
}

Outcome epoch_study() {
  SyntheticConfig sc;
  sc.num_topics = 4;
  sc.dialogues_per_topic = 20;
  const auto corpus = gen_synthetic(sc);
  StudyConfig cfg;
  cfg.encoder.vocab_size = 5000;
  cfg.encoder.embed_dim = 16;
  cfg.encoder.head_hidden = 16;
  cfg.encoder.head_out = 8;
  cfg.train.batch_size = 32;
  cfg.train.epochs = 4;
  cfg.train.init_seed = cfg.train.shuffle_seed = cfg.train.dropout_seed = 9;
  StudyEvalSets sets;
  SyntheticConfig held = sc;
  held.dialogues_per_topic = 5;
  held.seed = 77;
  sets.intent = synthetic_intent_set(gen_synthetic(held));
  sets.intent_rounds = 2;

  const auto a = run_epoch_study(corpus, cfg, sets);
  const auto b = run_epoch_study(corpus, cfg, sets);
  bool rows_ok = a.rows.size() == 2;
  for (const auto& [name, rows] : a.rows) {
    rows_ok = rows_ok && rows.size() == cfg.train.epochs;
    for (std::size_t e = 0; e < rows.size(); ++e) rows_ok = rows_ok && rows[e].sizes.at("epoch") == e + 1;
  }
  const bool same = a.table() == b.table() && a.rows == b.rows && a.baseline == b.baseline;
  return {rows_ok && same, std::string("rows per strategy ") + (rows_ok ? "exact" : "WRONG") + ", rerun " +
                               (same ? "bitwise identical" : "DIFFERS")};
}

Outcome persistence() {
  testutil::TempDir dir("acceptance");
  std::vector<std::string> problems;

  EncoderConfig ec;
  ec.vocab_size = 300;
  ec.embed_dim = 8;
  ec.head_hidden = 8;
  ec.head_out = 4;
  TrainConfig tc;
  tc.batch_size = 8;
  tc.epochs = 2;
  const auto pairs = build_consecutive(gen_synthetic(2, 5, 4, 4, 3));
  const auto ckpt = train(pairs, ec, LossConfig{}, tc).final;
  save_checkpoint(ckpt, dir / "a.ckpt");
  const auto loaded = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(loaded, dir / "b.ckpt");
  const std::string bytes = testutil::read_file(dir / "a.ckpt");
  if (!(loaded == ckpt)) problems.push_back("checkpoint load differs");
  if (bytes != testutil::read_file(dir / "b.ckpt")) problems.push_back("checkpoint bytes differ");

  auto rejected_with_version = [&](const std::string& corrupt, const char* what) {
    testutil::write_file(dir / "bad.ckpt", corrupt);
    try {
      load_checkpoint(dir / "bad.ckpt");
      problems.push_back(std::string(what) + " accepted");
    } catch (const Error& e) {
      if (std::string(e.what()).find("DSECKPT1") == std::string::npos) problems.push_back(std::string(what) + " unversioned error");
    }
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  rejected_with_version(bad_magic, "bad magic");
  rejected_with_version(bytes.substr(0, bytes.size() - 9), "truncated");
  rejected_with_version(bytes.substr(0, 20), "header-only");

  const MatrixF emb = encode_eval(ckpt.model, std::span<const std::string>(std::vector<std::string>{"t0w1 t0w2", "t1w3"}));
  save_embeddings(dir / "e.txt", emb, {"t0w1 t0w2", "t1w3"});
  const auto back = load_embeddings(dir / "e.txt");
  save_embeddings(dir / "f.txt", back, {"t0w1 t0w2", "t1w3"});
  if (!(back == emb)) problems.push_back("embedding values differ");
  if (testutil::read_file(dir / "e.txt") != testutil::read_file(dir / "f.txt")) problems.push_back("embedding bytes differ");
  const std::string etext = testutil::read_file(dir / "e.txt");
  try {
    parse_embeddings(etext.substr(0, etext.size() / 2));
    problems.push_back("truncated embeddings accepted");
  } catch (const Error&) {
  }

  std::string detail = problems.empty() ? "checkpoint and embedding roundtrips byte-identical; corruptions rejected" : "";
  for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  return {problems.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_check},
      {"alpha identity", alpha_identity},
      {"reference equivalence", reference_equivalence},
      {"scale invariance", scale_invariance},
      {"worked value", worked_value},
      {"oracle equivalence", oracle_equivalence},
      {"pair-count laws", pair_count_laws},
      {"synthetic separation", synthetic_separation},
      {"epoch-study harness", epoch_study},
      {"persistence", persistence},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
