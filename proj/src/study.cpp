#include "dse/study.hpp"

#include <set>

namespace dse {

PairStrategy parse_pair_strategy(std::string_view name) {
  if (name == "consec") return PairStrategy::Consec;
  if (name == "k2") return PairStrategy::K2;
  if (name == "k3") return PairStrategy::K3;
  if (name == "combined") return PairStrategy::Combined;
  if (name == "self") return PairStrategy::Self;
  if (name == "file") return PairStrategy::File;
  throw Error("unknown pair strategy '" + std::string(name) + "' (consec|k2|k3|combined|self|file)");
}

std::string_view pair_strategy_name(PairStrategy s) {
  switch (s) {
    case PairStrategy::Consec: return "consec";
    case PairStrategy::K2: return "k2";
    case PairStrategy::K3: return "k3";
    case PairStrategy::Combined: return "combined";
    case PairStrategy::Self: return "self";
    case PairStrategy::File: return "file";
  }
  return "?";
}

std::vector<TrainPair> build_pairs(const std::vector<Dialogue>& dialogues, PairStrategy strategy,
                                   const PairBuildConfig& cfg) {
  switch (strategy) {
    case PairStrategy::Consec: return build_consecutive(dialogues, cfg);
    case PairStrategy::K2: return build_k_to_1(dialogues, 2, cfg);
    case PairStrategy::K3: return build_k_to_1(dialogues, 3, cfg);
    case PairStrategy::Combined: {
      PairBuildConfig all = cfg;
      all.query_widths = {1, 2, 3};
      return build_combined(dialogues, all);
    }
    case PairStrategy::Self: return build_self_pairs(dialogues, cfg);
    case PairStrategy::File: break;
  }
  throw Error("build_pairs: the file strategy reads a pair file, not a corpus");
}

LabeledSet synthetic_intent_set(const std::vector<Dialogue>& corpus) {
  LabeledSet set;
  for (const auto& d : corpus) {
    const int topic = synthetic_topic(d.id);
    if (topic < 0) throw Error("not a synthetic dialogue id: " + d.id);
    while (set.label_names.size() <= static_cast<std::size_t>(topic)) {
      set.label_names.push_back("topic" + std::to_string(set.label_names.size()));
    }
    for (const auto& t : d.turns) set.items.push_back({t.text, topic});
  }
  return set;
}

EvalReport evaluate_checkpoint(const EncoderModel<float>& model, const StudyEvalSets& sets) {
  const Embedder embed = make_embedder(model);
  EvalReport out;
  out.task = "checkpoint";
  auto merge = [&out](const std::string& prefix, const EvalReport& r) {
    for (const auto& [k, v] : r.metrics) out.metrics[prefix + k] = v;
  };
  if (sets.intent) {
    merge("intent.", eval_intent(*sets.intent, sets.intent_shots, sets.intent_seed, sets.intent_rounds, embed));
  }
  if (sets.oos_support && sets.oos_test) {
    merge("oos.", eval_oos(*sets.oos_support, *sets.oos_test, sets.oos_population, embed));
  }
  if (sets.ranking) {
    const std::vector<std::size_t> ks{1, 3, 10};
    merge("rank.", rank_topk(sets.ranking->queries, sets.ranking->golds, sets.ranking->pool, ks,
                             sets.ranking_candidates, sets.ranking_seed, embed)
                       .report);
  }
  return out;
}

StudyResult run_epoch_study(const std::vector<Dialogue>& corpus, const StudyConfig& cfg, const StudyEvalSets& sets) {
  if (cfg.strategies.empty()) throw Error("run_epoch_study: no strategies");
  StudyResult result;
  for (auto strategy : cfg.strategies) {
    const std::string name(pair_strategy_name(strategy));
    const auto pairs = build_pairs(corpus, strategy, cfg.pair_build);

    const auto untrained = init_model<float>(cfg.encoder, cfg.train.init_seed);
    EvalReport base = evaluate_checkpoint(untrained, sets);
    base.task = "epoch-study";
    base.seed = cfg.train.init_seed;
    base.sizes["epoch"] = 0;
    base.sizes["pairs"] = pairs.size();
    result.baseline[name] = std::move(base);

    auto& rows = result.rows[name];
    TrainHooks hooks;
    hooks.on_epoch_end = [&](const Checkpoint& ckpt, const EpochStats& stats) {
      EvalReport r = evaluate_checkpoint(ckpt.model, sets);
      r.task = "epoch-study";
      r.seed = cfg.train.init_seed;
      r.metrics["train.mean_loss"] = stats.mean_loss;
      r.sizes["epoch"] = stats.epoch;
      r.sizes["steps"] = stats.steps;
      r.sizes["pairs"] = pairs.size();
      rows.push_back(std::move(r));
    };
    train(pairs, cfg.encoder, cfg.loss, cfg.train, hooks);
  }
  return result;
}

std::string StudyResult::table() const {
  std::set<std::string> columns;
  for (const auto& [name, base] : baseline) {
    for (const auto& [k, v] : base.metrics) columns.insert(k);
  }
  for (const auto& [name, rs] : rows) {
    for (const auto& r : rs) {
      for (const auto& [k, v] : r.metrics) columns.insert(k);
    }
  }
  std::string out = "strategy\tepoch";
  for (const auto& c : columns) out += "\t" + c;
  out += '\n';
  auto emit = [&](const std::string& name, const EvalReport& r) {
    out += name + "\t" + std::to_string(r.sizes.at("epoch"));
    for (const auto& c : columns) {
      auto it = r.metrics.find(c);
      out += '\t';
      out += it == r.metrics.end() ? std::string("NA") : format_double(it->second);
    }
    out += '\n';
  };
  for (const auto& [name, rs] : rows) {
    if (auto it = baseline.find(name); it != baseline.end()) emit(name, it->second);
    for (const auto& r : rs) emit(name, r);
  }
  return out;
}

}  // namespace dse
