#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dse/eval.hpp"
#include "dse/pairs.hpp"
#include "dse/report.hpp"
#include "dse/trainer.hpp"

namespace dse {

enum class PairStrategy { Consec, K2, K3, Combined, Self, File };

PairStrategy parse_pair_strategy(std::string_view name);
std::string_view pair_strategy_name(PairStrategy s);

/// Builds training pairs from a corpus by strategy. File is not corpus-based
/// and is rejected here.
std::vector<TrainPair> build_pairs(const std::vector<Dialogue>& dialogues, PairStrategy strategy,
                                   const PairBuildConfig& cfg);

/// Every turn of a synthetic corpus labeled by its topic.
LabeledSet synthetic_intent_set(const std::vector<Dialogue>& corpus);

struct RankingSet {
  std::vector<std::string> queries;
  std::vector<std::string> golds;
  std::vector<std::string> pool;
};

/// Evaluation sets consulted after every epoch. Each one is optional.
struct StudyEvalSets {
  std::optional<LabeledSet> intent;  // full labeled set; support is sampled
  std::size_t intent_shots = 1;
  std::size_t intent_rounds = 1;
  std::uint64_t intent_seed = 0;

  std::optional<LabeledSet> oos_support;
  std::optional<LabeledSet> oos_test;
  StatsPopulation oos_population = StatsPopulation::TestAll;

  std::optional<RankingSet> ranking;
  std::size_t ranking_candidates = 100;
  std::uint64_t ranking_seed = 0;
};

struct StudyConfig {
  EncoderConfig encoder;
  LossConfig loss;
  TrainConfig train;
  PairBuildConfig pair_build;
  std::vector<PairStrategy> strategies{PairStrategy::Consec, PairStrategy::Self};
};

/// Metrics of one model on every supplied evaluation set. Keys are prefixed
/// "intent.", "oos.", "rank.".
EvalReport evaluate_checkpoint(const EncoderModel<float>& model, const StudyEvalSets& sets);

struct StudyResult {
  /// Per strategy: the untrained model's report, then one row per epoch.
  std::map<std::string, EvalReport> baseline;
  std::map<std::string, std::vector<EvalReport>> rows;

  /// TSV: strategy, epoch (0 = untrained), then one column per metric.
  std::string table() const;
};

/// Trains every strategy with identical seeds and evaluates the checkpoint
/// at the end of each epoch.
StudyResult run_epoch_study(const std::vector<Dialogue>& corpus, const StudyConfig& cfg, const StudyEvalSets& sets);

}  // namespace dse
