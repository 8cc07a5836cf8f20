#include "dse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "dse/loss.hpp"

namespace dse {

namespace {

std::span<const double> row_span(const MatrixD& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

double safe_ratio(std::size_t num, std::size_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace

std::vector<std::string> LabeledSet::texts() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.text);
  return out;
}

std::vector<int> LabeledSet::labels() const {
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.label);
  return out;
}

Embedder make_embedder(const EncoderModel<float>& model) {
  return [&model](std::span<const std::string> texts) -> MatrixD {
    return encode_eval(model, texts).cast<double>();
  };
}

// ---------------------------------------------------------------------------

PrototypeSet build_prototypes(const MatrixD& support, std::span<const int> labels, std::size_t num_labels,
                              bool normalize) {
  require(support.rows() > 0, "build_prototypes: empty support set");
  require(static_cast<std::size_t>(support.rows()) == labels.size(), "build_prototypes: labels not aligned");
  PrototypeSet out{MatrixD::Zero(static_cast<Eigen::Index>(num_labels), support.cols()),
                   std::vector<std::size_t>(num_labels, 0)};
  for (Eigen::Index i = 0; i < support.rows(); ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    require(label >= 0 && static_cast<std::size_t>(label) < num_labels,
            "build_prototypes: label id " + std::to_string(label) + " out of range");
    if (normalize) {
      const double n = support.row(i).norm();
      out.prototypes.row(label) += support.row(i) / std::max(n, 1e-12);
    } else {
      out.prototypes.row(label) += support.row(i);
    }
    ++out.support_counts[static_cast<std::size_t>(label)];
  }
  for (std::size_t c = 0; c < num_labels; ++c) {
    require(out.support_counts[c] > 0, "build_prototypes: label " + std::to_string(c) + " has no support");
    out.prototypes.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(out.support_counts[c]);
  }
  return out;
}

PrototypeSet build_prototypes(const LabeledSet& support, const Embedder& embed, bool normalize) {
  const auto texts = support.texts();
  const auto labels = support.labels();
  return build_prototypes(embed(texts), labels, support.label_names.size(), normalize);
}

std::vector<Prediction> classify_protonet(const MatrixD& queries, const PrototypeSet& protos) {
  require(protos.prototypes.rows() > 0, "classify_protonet: no prototypes");
  require(queries.cols() == protos.prototypes.cols() || queries.rows() == 0, "classify_protonet: dimension mismatch");
  std::vector<Prediction> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    Prediction best{0, cosine_sim(row_span(queries, q), row_span(protos.prototypes, 0))};
    for (Eigen::Index c = 1; c < protos.prototypes.rows(); ++c) {
      const double s = cosine_sim(row_span(queries, q), row_span(protos.prototypes, c));
      if (s > best.max_sim) best = {static_cast<int>(c), s};
    }
    out[static_cast<std::size_t>(q)] = best;
  }
  return out;
}

std::vector<Prediction> classify_protonet(std::span<const std::string> queries, const PrototypeSet& protos,
                                          const Embedder& embed) {
  return classify_protonet(embed(queries), protos);
}

double accuracy(std::span<const Prediction> preds, std::span<const int> gold) {
  require(preds.size() == gold.size(), "accuracy: length mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i].label == gold[i];
  return safe_ratio(correct, preds.size());
}

// ---------------------------------------------------------------------------

OOSDecision detect_oos(std::span<const Prediction> nearest, const OOSConfig& cfg, std::span<const int> gold) {
  require(nearest.size() >= 2, "detect_oos: need at least 2 queries");
  std::vector<double> population;
  if (cfg.population == StatsPopulation::TestInOnly) {
    require(gold.size() == nearest.size(), "detect_oos: in-scope-only statistics need aligned gold labels");
    for (std::size_t i = 0; i < nearest.size(); ++i) {
      if (gold[i] != kOosLabel) population.push_back(nearest[i].max_sim);
    }
    require(!population.empty(), "detect_oos: no in-scope samples for statistics");
  } else {
    for (const auto& p : nearest) population.push_back(p.max_sim);
  }

  OOSDecision out;
  const double n = static_cast<double>(population.size());
  out.mean = std::accumulate(population.begin(), population.end(), 0.0) / n;
  double var = 0.0;
  for (double s : population) var += (s - out.mean) * (s - out.mean);
  out.stddev = std::sqrt(var / n);
  if (cfg.threshold_override) {
    out.threshold = *cfg.threshold_override;
  } else {
    out.threshold = cfg.rule == ThresholdRule::Mean ? out.mean : out.mean - out.stddev;
  }

  out.predictions.reserve(nearest.size());
  for (const auto& p : nearest) {
    const bool oos = p.max_sim < out.threshold;
    out.predictions.push_back({oos, oos ? kOosLabel : p.label, p.max_sim});
  }
  return out;
}

OOSDecision detect_oos(std::span<const std::string> queries, const PrototypeSet& protos, const OOSConfig& cfg,
                       const Embedder& embed, std::span<const int> gold) {
  const auto nearest = classify_protonet(queries, protos, embed);
  return detect_oos(nearest, cfg, gold);
}

EvalReport oos_metrics(std::span<const int> gold, std::span<const OOSPrediction> preds) {
  require(gold.size() == preds.size(), "oos_metrics: gold has " + std::to_string(gold.size()) +
                                           " items but predictions have " + std::to_string(preds.size()));
  std::size_t correct = 0, in_total = 0, in_correct = 0, binary_correct = 0, oos_total = 0, oos_flagged = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool gold_oos = gold[i] == kOosLabel;
    const bool flagged = preds[i].oos;
    binary_correct += gold_oos == flagged;
    if (gold_oos) {
      ++oos_total;
      oos_flagged += flagged;
      correct += flagged;
    } else {
      ++in_total;
      const bool right = !flagged && preds[i].label == gold[i];
      in_correct += right;
      correct += right;
    }
  }
  EvalReport r;
  r.task = "oos";
  r.metrics["Accuracy"] = safe_ratio(correct, gold.size());
  r.metrics["In-Accuracy"] = safe_ratio(in_correct, in_total);
  r.metrics["OOS-Accuracy"] = safe_ratio(binary_correct, gold.size());
  r.metrics["OOS-Recall"] = safe_ratio(oos_flagged, oos_total);
  r.sizes["samples"] = gold.size();
  r.sizes["in_scope"] = in_total;
  r.sizes["out_of_scope"] = oos_total;
  return r;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> sample_candidates(std::size_t pool_size, std::span<const std::size_t> excluded,
                                           std::size_t count, std::uint64_t seed) {
  const std::unordered_set<std::size_t> skip(excluded.begin(), excluded.end());
  std::vector<std::size_t> eligible;
  eligible.reserve(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) {
    if (!skip.count(i)) eligible.push_back(i);
  }
  if (eligible.size() < count) {
    throw Error("rank_topk: pool has " + std::to_string(eligible.size()) + " usable responses, need " +
                std::to_string(count));
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(eligible[i], eligible[i + rng.uniform_index(eligible.size() - i)]);
  }
  eligible.resize(count);
  return eligible;
}

RankingResult rank_topk(const MatrixD& queries, const MatrixD& golds, const MatrixD& pool,
                        const std::vector<std::vector<std::size_t>>& excluded, std::span<const std::size_t> k_values,
                        std::size_t n_candidates, std::uint64_t seed) {
  require(n_candidates >= 1, "rank_topk: n_candidates must be >= 1");
  require(queries.rows() == golds.rows(), "rank_topk: gold responses not aligned with queries");
  require(excluded.empty() || excluded.size() == static_cast<std::size_t>(queries.rows()),
          "rank_topk: exclusion lists not aligned with queries");
  require(static_cast<std::size_t>(pool.rows()) + 1 >= n_candidates, "rank_topk: pool too small");

  RankingResult out;
  const auto nq = static_cast<std::size_t>(queries.rows());
  out.gold_ranks.reserve(nq);
  out.candidates.reserve(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    const auto qi = static_cast<Eigen::Index>(q);
    std::span<const std::size_t> skip;
    if (!excluded.empty()) skip = excluded[q];
    auto cands = sample_candidates(static_cast<std::size_t>(pool.rows()), skip, n_candidates - 1, mix_seed(seed, q));
    const double gold_sim = cosine_sim(row_span(queries, qi), row_span(golds, qi));
    std::size_t rank = 1;
    for (auto c : cands) {
      if (cosine_sim(row_span(queries, qi), row_span(pool, static_cast<Eigen::Index>(c))) >= gold_sim) ++rank;
    }
    out.gold_ranks.push_back(rank);
    out.candidates.push_back(std::move(cands));
  }

  out.report.task = "rank";
  out.report.seed = seed;
  out.report.sizes["queries"] = nq;
  out.report.sizes["candidates"] = n_candidates;
  for (auto k : k_values) {
    std::size_t hits = 0;
    for (auto r : out.gold_ranks) hits += r <= k;
    out.report.metrics["Top-" + std::to_string(k)] = safe_ratio(hits, nq);
  }
  return out;
}

RankingResult rank_topk(std::span<const std::string> queries, std::span<const std::string> golds,
                        std::span<const std::string> pool, std::span<const std::size_t> k_values,
                        std::size_t n_candidates, std::uint64_t seed, const Embedder& embed) {
  require(queries.size() == golds.size(), "rank_topk: gold responses not aligned with queries");
  std::vector<std::vector<std::size_t>> excluded(queries.size());
  for (std::size_t q = 0; q < golds.size(); ++q) {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool[i] == golds[q]) excluded[q].push_back(i);
    }
  }
  return rank_topk(embed(queries), embed(golds), embed(pool), excluded, k_values, n_candidates, seed);
}

// ---------------------------------------------------------------------------

double nli_probe(const MatrixD& anchors, const MatrixD& entailments, const MatrixD& contradictions) {
  require(anchors.rows() >= 1, "nli_probe: need at least one triple");
  require(anchors.rows() == entailments.rows() && anchors.rows() == contradictions.rows(),
          "nli_probe: triples not aligned");
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
    const double se = cosine_sim(row_span(anchors, i), row_span(entailments, i));
    const double sc = cosine_sim(row_span(anchors, i), row_span(contradictions, i));
    correct += se > sc;
  }
  return safe_ratio(correct, static_cast<std::size_t>(anchors.rows()));
}

double nli_probe(std::span<const NliTriple> triples, const Embedder& embed) {
  std::vector<std::string> a, e, c;
  for (const auto& t : triples) {
    a.push_back(t.anchor);
    e.push_back(t.entailment);
    c.push_back(t.contradiction);
  }
  require(!a.empty(), "nli_probe: need at least one triple");
  return nli_probe(embed(a), embed(e), embed(c));
}

// ---------------------------------------------------------------------------

std::string format_dialogue_history(std::span<const Turn> turns, std::size_t max_tokens) {
  require(!turns.empty(), "format_dialogue_history: need at least one turn");
  std::string full;
  for (const auto& t : turns) {
    if (!full.empty()) full += ' ';
    full += t.speaker == Speaker::Sys ? "[SYS] " : "[USR] ";
    full += t.text;
  }
  const auto words = split_words(full);
  if (words.size() <= max_tokens) return full;
  std::string out;
  for (std::size_t i = words.size() - max_tokens; i < words.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  return out;
}

// ---------------------------------------------------------------------------

MatrixD ActionProbe::predict_proba(const MatrixD& x) const {
  MatrixD z = x * weights;
  z.rowwise() += bias;
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

std::vector<LabelBits> ActionProbe::predict(const MatrixD& x) const {
  const MatrixD p = predict_proba(x);
  std::vector<LabelBits> out(static_cast<std::size_t>(p.rows()), LabelBits(static_cast<std::size_t>(p.cols())));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index l = 0; l < p.cols(); ++l) {
      out[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)] = p(i, l) > 0.5;
    }
  }
  return out;
}

MatrixD label_matrix(std::span<const LabelBits> labels, std::size_t num_labels) {
  MatrixD y = MatrixD::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(num_labels));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i].size() == num_labels, "label bitset has wrong width");
    for (std::size_t l = 0; l < num_labels; ++l) {
      y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = labels[i][l] ? 1.0 : 0.0;
    }
  }
  return y;
}

ProbeLoss probe_loss_and_grad(const ActionProbe& probe, const MatrixD& x, const MatrixD& y) {
  require(x.rows() == y.rows() && x.rows() > 0, "probe: features and labels not aligned");
  MatrixD z = x * probe.weights;
  z.rowwise() += probe.bias;
  const double cells = static_cast<double>(y.size());
  double loss = 0.0;
  MatrixD g(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index l = 0; l < z.cols(); ++l) {
      const double v = z(i, l);
      // softplus(v) - y v, computed without overflow
      loss += std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))) - y(i, l) * v;
      g(i, l) = (1.0 / (1.0 + std::exp(-v)) - y(i, l)) / cells;
    }
  }
  return {loss / cells, x.transpose() * g, g.colwise().sum()};
}

ActionProbe train_action_probe(const MatrixD& x, std::span<const LabelBits> labels, std::size_t epochs, double lr,
                               std::vector<double>* loss_history) {
  require(x.rows() >= 1 && static_cast<std::size_t>(x.rows()) == labels.size(),
          "train_action_probe: need >= 1 aligned example");
  require(!labels.empty() && !labels[0].empty(), "train_action_probe: need >= 1 label");
  const std::size_t num_labels = labels[0].size();
  const MatrixD y = label_matrix(labels, num_labels);
  ActionProbe probe{MatrixD::Zero(x.cols(), static_cast<Eigen::Index>(num_labels)),
                    Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(num_labels))};
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto step = probe_loss_and_grad(probe, x, y);
    if (loss_history) loss_history->push_back(step.loss);
    probe.weights -= lr * step.grad_weights;
    probe.bias -= lr * step.grad_bias;
  }
  if (loss_history) loss_history->push_back(probe_loss_and_grad(probe, x, y).loss);
  return probe;
}

F1Scores f1_scores(std::span<const LabelBits> gold, std::span<const LabelBits> pred) {
  require(gold.size() == pred.size(), "f1_scores: gold has " + std::to_string(gold.size()) +
                                          " items but predictions have " + std::to_string(pred.size()));
  require(!gold.empty() && !gold[0].empty(), "f1_scores: need at least one label");
  const std::size_t num_labels = gold[0].size();
  std::vector<std::size_t> tp(num_labels, 0), fp(num_labels, 0), fn(num_labels, 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    require(gold[i].size() == num_labels && pred[i].size() == num_labels, "f1_scores: ragged label bitsets");
    for (std::size_t l = 0; l < num_labels; ++l) {
      tp[l] += gold[i][l] && pred[i][l];
      fp[l] += !gold[i][l] && pred[i][l];
      fn[l] += gold[i][l] && !pred[i][l];
    }
  }
  auto f1 = [](std::size_t t, std::size_t p, std::size_t n) {
    const std::size_t den = 2 * t + p + n;
    return den ? 2.0 * static_cast<double>(t) / static_cast<double>(den) : 1.0;
  };
  F1Scores out;
  std::size_t all_tp = 0, all_fp = 0, all_fn = 0;
  for (std::size_t l = 0; l < num_labels; ++l) {
    out.macro += f1(tp[l], fp[l], fn[l]);
    all_tp += tp[l];
    all_fp += fp[l];
    all_fn += fn[l];
  }
  out.macro /= static_cast<double>(num_labels);
  out.micro = f1(all_tp, all_fp, all_fn);
  return out;
}

// ---------------------------------------------------------------------------

FewShotSplit sample_few_shot(const LabeledSet& full, std::size_t shots, std::uint64_t seed) {
  require(shots >= 1, "sample_few_shot: shots must be >= 1");
  FewShotSplit out;
  out.support.label_names = full.label_names;
  out.validation.label_names = full.label_names;
  for (std::size_t label = 0; label < full.label_names.size(); ++label) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < full.items.size(); ++i) {
      if (full.items[i].label == static_cast<int>(label)) idx.push_back(i);
    }
    if (idx.size() < 2 * shots) {
      throw Error("sample_few_shot: label '" + full.label_names[label] + "' has " + std::to_string(idx.size()) +
                  " items, need " + std::to_string(2 * shots));
    }
    Rng rng(mix_seed(seed, label));
    for (std::size_t i = 0; i < 2 * shots; ++i) std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
    for (std::size_t i = 0; i < shots; ++i) {
      out.support_indices.push_back(idx[i]);
      out.support.items.push_back(full.items[idx[i]]);
      out.validation_indices.push_back(idx[shots + i]);
      out.validation.items.push_back(full.items[idx[shots + i]]);
    }
  }
  return out;
}

LabeledSet remaining_items(const LabeledSet& full, std::span<const std::size_t> taken) {
  const std::unordered_set<std::size_t> skip(taken.begin(), taken.end());
  LabeledSet out;
  out.label_names = full.label_names;
  for (std::size_t i = 0; i < full.items.size(); ++i) {
    if (!skip.count(i)) out.items.push_back(full.items[i]);
  }
  return out;
}

EvalReport eval_intent(const LabeledSet& full, std::size_t shots, std::uint64_t seed, std::size_t rounds,
                       const Embedder& embed) {
  require(rounds >= 1, "eval_intent: rounds must be >= 1");
  const MatrixD all = embed(full.texts());
  const auto gold_all = full.labels();
  double total = 0.0;
  std::size_t queries = 0;
  for (std::size_t r = 0; r < rounds; ++r) {
    const auto split = sample_few_shot(full, shots, seed + r);
    std::vector<bool> in_support(full.items.size(), false);
    for (auto i : split.support_indices) in_support[i] = true;

    MatrixD support(static_cast<Eigen::Index>(split.support_indices.size()), all.cols());
    std::vector<int> support_labels;
    for (std::size_t k = 0; k < split.support_indices.size(); ++k) {
      support.row(static_cast<Eigen::Index>(k)) = all.row(static_cast<Eigen::Index>(split.support_indices[k]));
      support_labels.push_back(gold_all[split.support_indices[k]]);
    }
    const auto protos = build_prototypes(support, support_labels, full.label_names.size());

    std::vector<Eigen::Index> rows;
    std::vector<int> gold;
    for (std::size_t i = 0; i < full.items.size(); ++i) {
      if (in_support[i] || gold_all[i] == kOosLabel) continue;
      rows.push_back(static_cast<Eigen::Index>(i));
      gold.push_back(gold_all[i]);
    }
    require(!rows.empty(), "eval_intent: no query items left after sampling the support set");
    MatrixD q(static_cast<Eigen::Index>(rows.size()), all.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) q.row(static_cast<Eigen::Index>(k)) = all.row(rows[k]);
    total += accuracy(classify_protonet(q, protos), gold);
    queries = rows.size();
  }
  EvalReport r;
  r.task = "intent";
  r.seed = seed;
  r.metrics["Accuracy"] = total / static_cast<double>(rounds);
  r.sizes["shots"] = shots;
  r.sizes["rounds"] = rounds;
  r.sizes["labels"] = full.label_names.size();
  r.sizes["queries"] = queries;
  return r;
}

EvalReport eval_oos(const LabeledSet& support, const LabeledSet& test, StatsPopulation population,
                    const Embedder& embed) {
  const auto protos = build_prototypes(support, embed);
  const auto gold = test.labels();
  const auto nearest = classify_protonet(test.texts(), protos, embed);
  EvalReport out;
  out.task = "oos";
  for (auto [rule, prefix] : {std::pair{ThresholdRule::Mean, "mean."}, std::pair{ThresholdRule::MeanMinusStd, "mean-std."}}) {
    OOSConfig cfg;
    cfg.rule = rule;
    cfg.population = population;
    const auto decision = detect_oos(nearest, cfg, gold);
    const auto rep = oos_metrics(gold, decision.predictions);
    for (const auto& [k, v] : rep.metrics) out.metrics[prefix + k] = v;
    out.metrics[std::string(prefix) + "threshold"] = decision.threshold;
    out.sizes = rep.sizes;
  }
  return out;
}

ClusterSeparation cluster_separation(const MatrixD& embeddings, std::span<const int> labels) {
  require(static_cast<std::size_t>(embeddings.rows()) == labels.size(), "cluster_separation: labels not aligned");
  const MatrixD sims = similarity_matrix(embeddings, 1e-12);
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (Eigen::Index i = 0; i < sims.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < sims.rows(); ++j) {
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        intra += sims(i, j);
        ++n_intra;
      } else {
        inter += sims(i, j);
        ++n_inter;
      }
    }
  }
  return {n_intra ? intra / static_cast<double>(n_intra) : 0.0, n_inter ? inter / static_cast<double>(n_inter) : 0.0};
}

}  // namespace dse
