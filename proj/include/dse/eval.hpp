#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dse/common.hpp"
#include "dse/corpus.hpp"
#include "dse/encoder.hpp"
#include "dse/report.hpp"

namespace dse {

/// Label id for out-of-scope items in OOS evaluation sets.
inline constexpr int kOosLabel = -1;

struct LabeledItem {
  std::string text;
  int label = 0;

  bool operator==(const LabeledItem&) const = default;
};

struct LabeledSet {
  std::vector<LabeledItem> items;
  std::vector<std::string> label_names;

  std::vector<std::string> texts() const;
  std::vector<int> labels() const;
  bool operator==(const LabeledSet&) const = default;
};

/// Maps a batch of texts to EVAL-view embeddings, one row per text.
using Embedder = std::function<MatrixD(std::span<const std::string>)>;

/// The model must outlive the returned embedder.
Embedder make_embedder(const EncoderModel<float>& model);

// --- prototypical classification --------------------------------------------

struct PrototypeSet {
  MatrixD prototypes;  // one row per label
  std::vector<std::size_t> support_counts;
};

/// Per-label mean of the support rows. With `normalize`, rows are scaled to
/// unit length before averaging.
PrototypeSet build_prototypes(const MatrixD& support, std::span<const int> labels, std::size_t num_labels,
                              bool normalize = false);
PrototypeSet build_prototypes(const LabeledSet& support, const Embedder& embed, bool normalize = false);

struct Prediction {
  int label = 0;
  double max_sim = 0.0;
};

/// Nearest prototype by cosine; ties go to the smallest label id.
std::vector<Prediction> classify_protonet(const MatrixD& queries, const PrototypeSet& protos);
std::vector<Prediction> classify_protonet(std::span<const std::string> queries, const PrototypeSet& protos,
                                          const Embedder& embed);

double accuracy(std::span<const Prediction> preds, std::span<const int> gold);

// --- out-of-scope detection ---------------------------------------------------

enum class ThresholdRule { Mean, MeanMinusStd };
enum class StatsPopulation { TestAll, TestInOnly };

struct OOSConfig {
  ThresholdRule rule = ThresholdRule::Mean;
  StatsPopulation population = StatsPopulation::TestAll;
  std::optional<double> threshold_override;
};

struct OOSPrediction {
  bool oos = false;
  int label = kOosLabel;
  double max_sim = 0.0;
};

struct OOSDecision {
  std::vector<OOSPrediction> predictions;
  double threshold = 0.0;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

/// Flags a query out-of-scope iff its best prototype similarity is strictly
/// below the threshold. `gold` is only consulted for TestInOnly statistics.
OOSDecision detect_oos(std::span<const Prediction> nearest, const OOSConfig& cfg, std::span<const int> gold = {});
OOSDecision detect_oos(std::span<const std::string> queries, const PrototypeSet& protos, const OOSConfig& cfg,
                       const Embedder& embed, std::span<const int> gold = {});

/// Accuracy, In-Accuracy, OOS-Accuracy (binary in/out over all samples) and
/// OOS-Recall. Accuracy restricted to OOS gold items equals OOS-Recall.
EvalReport oos_metrics(std::span<const int> gold, std::span<const OOSPrediction> preds);

// --- response selection ------------------------------------------------------

struct RankingResult {
  EvalReport report;
  std::vector<std::size_t> gold_ranks;                 // 1-based
  std::vector<std::vector<std::size_t>> candidates;  // sampled pool indices per query
};

/// Samples `count` distinct indices from [0, pool_size) minus `excluded`.
std::vector<std::size_t> sample_candidates(std::size_t pool_size, std::span<const std::size_t> excluded,
                                           std::size_t count, std::uint64_t seed);

/// Top-k over 1 gold + (n_candidates-1) sampled pool responses. The gold
/// loses every tie. `excluded[q]` lists pool rows that are copies of q's gold.
RankingResult rank_topk(const MatrixD& queries, const MatrixD& golds, const MatrixD& pool,
                        const std::vector<std::vector<std::size_t>>& excluded, std::span<const std::size_t> k_values,
                        std::size_t n_candidates, std::uint64_t seed);
RankingResult rank_topk(std::span<const std::string> queries, std::span<const std::string> golds,
                        std::span<const std::string> pool, std::span<const std::size_t> k_values,
                        std::size_t n_candidates, std::uint64_t seed, const Embedder& embed);

// --- NLI probe ---------------------------------------------------------------

struct NliTriple {
  std::string anchor;
  std::string entailment;
  std::string contradiction;
};

/// Fraction of triples with cos(a, e) > cos(a, c); ties are wrong.
double nli_probe(const MatrixD& anchors, const MatrixD& entailments, const MatrixD& contradictions);
double nli_probe(std::span<const NliTriple> triples, const Embedder& embed);

// --- dialogue history ----------------------------------------------------------

/// "[SYS] text [USR] text ..." keeping only the last `max_tokens` words.
std::string format_dialogue_history(std::span<const Turn> turns, std::size_t max_tokens = 32);

// --- multi-label action probe ----------------------------------------------------

using LabelBits = std::vector<bool>;

struct ActionProbe {
  MatrixD weights;         // dim x labels
  Eigen::RowVectorXd bias;  // labels

  MatrixD predict_proba(const MatrixD& x) const;
  /// A label is predicted when its probability exceeds 0.5.
  std::vector<LabelBits> predict(const MatrixD& x) const;
};

MatrixD label_matrix(std::span<const LabelBits> labels, std::size_t num_labels);

struct ProbeLoss {
  double loss = 0.0;
  MatrixD grad_weights;
  Eigen::RowVectorXd grad_bias;
};

/// Mean binary cross-entropy over all (example, label) cells and its gradient.
ProbeLoss probe_loss_and_grad(const ActionProbe& probe, const MatrixD& x, const MatrixD& y);

/// Zero-initialised linear probe trained by full-batch gradient descent.
ActionProbe train_action_probe(const MatrixD& x, std::span<const LabelBits> labels, std::size_t epochs, double lr,
                               std::vector<double>* loss_history = nullptr);

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;
};

/// Labels with no gold and no predictions count as F1 = 1 in the macro mean.
F1Scores f1_scores(std::span<const LabelBits> gold, std::span<const LabelBits> pred);

// --- few-shot sampling ---------------------------------------------------------

struct FewShotSplit {
  LabeledSet support;
  LabeledSet validation;
  std::vector<std::size_t> support_indices;
  std::vector<std::size_t> validation_indices;
};

/// Per label, `shots` support and `shots` validation items drawn without
/// replacement. Items labeled kOosLabel are ignored.
FewShotSplit sample_few_shot(const LabeledSet& full, std::size_t shots, std::uint64_t seed);

/// Items of `full` whose indices are not in `taken`, keeping order.
LabeledSet remaining_items(const LabeledSet& full, std::span<const std::size_t> taken);

// --- task drivers ----------------------------------------------------------------

/// Mean prototypical accuracy over `rounds` few-shot draws (seeds seed,
/// seed+1, ...). Queries are every item not drawn into the support set.
EvalReport eval_intent(const LabeledSet& full, std::size_t shots, std::uint64_t seed, std::size_t rounds,
                       const Embedder& embed);

/// OOS metrics under both threshold rules, keys prefixed "mean." and "mean-std.".
/// `test` marks out-of-scope items with kOosLabel.
EvalReport eval_oos(const LabeledSet& support, const LabeledSet& test, StatsPopulation population,
                    const Embedder& embed);

// --- geometry ------------------------------------------------------------------

struct ClusterSeparation {
  double intra = 0.0;  // mean cosine over same-label pairs
  double inter = 0.0;  // mean cosine over different-label pairs
  double gap() const { return intra - inter; }
};

ClusterSeparation cluster_separation(const MatrixD& embeddings, std::span<const int> labels);

}  // namespace dse
