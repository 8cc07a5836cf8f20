// dse: command-line driver for corpus preparation, contrastive training and
// similarity-based evaluation of dialogue sentence embeddings.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dse/corpus.hpp"
#include "dse/eval.hpp"
#include "dse/io.hpp"
#include "dse/pairs.hpp"
#include "dse/run_config.hpp"
#include "dse/study.hpp"
#include "dse/trainer.hpp"

namespace fs = std::filesystem;
using namespace dse;

namespace {

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::map<std::string, std::string> flags;
  std::string config_file;
  std::string preset;
};

std::string kebab(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return key;
}

void add_key(Command& cmd, const std::string& key, const std::string& help, bool required = false) {
  auto* opt = cmd.app->add_option_function<std::string>(
      "--" + kebab(key), [&cmd, key](const std::string& v) { cmd.flags[key] = v; }, help);
  if (required) opt->required();
}

void add_common(Command& cmd) {
  cmd.app->add_option("--config", cmd.config_file, "key=value configuration file");
  cmd.app->add_option("--preset", cmd.preset, "named preset: paper|desk");
  add_key(cmd, "threads", "worker cap; results do not depend on it");
}

void add_model_keys(Command& cmd) {
  add_key(cmd, "vocab_size", "hashed vocabulary size");
  add_key(cmd, "hash_seed", "tokenizer hash seed");
  add_key(cmd, "embed_dim", "embedding dimension d");
  add_key(cmd, "head_hidden", "contrastive head hidden width (auto = d)");
  add_key(cmd, "head_out", "contrastive head output width");
  add_key(cmd, "dropout", "dropout rate");
  add_key(cmd, "temperature", "softmax temperature");
  add_key(cmd, "hard_negatives", "hard-negative weighting (true|false)");
  add_key(cmd, "positive_in_denominator", "include the positive in the softmax denominator");
  add_key(cmd, "eps_norm", "norm floor for cosine similarity");
  add_key(cmd, "batch_size", "pairs per batch");
  add_key(cmd, "epochs", "training epochs");
  add_key(cmd, "lr_head", "learning rate of the contrastive head");
  add_key(cmd, "lr_backbone", "learning rate of the embedding table");
  add_key(cmd, "beta1", "Adam beta1");
  add_key(cmd, "beta2", "Adam beta2");
  add_key(cmd, "adam_eps", "Adam epsilon");
  add_key(cmd, "seed", "seed for initialisation, shuffling and dropout");
  add_key(cmd, "same_dialogue_exclusion", "avoid two pairs of one dialogue in a batch");
  add_key(cmd, "keep_partial_batches", "keep a trailing partial batch of >= 2 pairs");
}

void add_filter_keys(Command& cmd) {
  add_key(cmd, "length_filter", "drop utterances of three words or fewer");
  add_key(cmd, "bridge_filtered", "let filtered turns keep their neighbours adjacent");
}

RunConfig resolve(const Command& cmd) {
  RunConfig cfg;
  if (!cmd.preset.empty()) cfg.apply_preset(cmd.preset);
  cfg.apply_env();
  if (!cmd.config_file.empty()) cfg.apply_file_text(read_text_file(cmd.config_file));
  for (const auto& [k, v] : cmd.flags) cfg.set(k, v, Provenance::Flag);
  if (!cmd.preset.empty()) cfg.set("preset", cmd.preset, Provenance::Flag);
  return cfg;
}

void print_config(const Command& cmd, const RunConfig& cfg) {
  std::cout << "# dse " << cmd.name << " resolved configuration\n" << cfg.to_text() << "# end configuration\n";
}

std::string opt_or(const RunConfig& cfg, const std::string& key, const std::string& fallback) {
  return cfg.has(key) ? cfg.get(key) : fallback;
}

void emit_report(const RunConfig& cfg, const EvalReport& report) {
  std::cout << report.to_text();
  if (cfg.has("report")) write_text_file(cfg.get("report"), report.to_json() + "\n");
}

Checkpoint checkpoint_from(const RunConfig& cfg) { return load_checkpoint(cfg.get("ckpt")); }

// --- subcommands -----------------------------------------------------------

int run_synth(const RunConfig& cfg) {
  SyntheticConfig s;
  s.num_topics = cfg.has("topics") ? cfg.get_size("topics") : 8;
  s.dialogues_per_topic = cfg.has("dialogues_per_topic") ? cfg.get_size("dialogues_per_topic") : 100;
  s.turns_per_dialogue = cfg.has("turns") ? cfg.get_size("turns") : 6;
  s.words_per_turn = cfg.has("words") ? cfg.get_size("words") : 6;
  s.pool_size = cfg.has("pool_size") ? cfg.get_size("pool_size") : SyntheticConfig{}.pool_size;
  s.seed = cfg.get_u64("seed");
  const auto corpus = gen_synthetic(s);
  save_corpus(corpus, cfg.get("out"));
  std::cout << "wrote " << corpus.size() << " dialogues to " << cfg.get("out") << "\n";
  return 0;
}

int run_build_pairs(const RunConfig& cfg) {
  const auto strategy = parse_pair_strategy(opt_or(cfg, "strategy", "consec"));
  std::vector<TrainPair> pairs;
  if (strategy == PairStrategy::File) {
    pairs = load_pair_file(cfg.get("in"));
  } else {
    pairs = build_pairs(load_corpus(cfg.get("in")), strategy, cfg.pair_build());
  }
  save_pair_file(pairs, cfg.get("out"));
  std::cout << "wrote " << pairs.size() << " pairs to " << cfg.get("out") << "\n";
  return 0;
}

std::vector<TrainPair> training_pairs(const RunConfig& cfg) {
  if (cfg.has("pairs")) return load_pair_file(cfg.get("pairs"));
  if (!cfg.has("corpus")) throw Error("train: one of --pairs or --corpus is required");
  return build_pairs(load_corpus(cfg.get("corpus")), parse_pair_strategy(opt_or(cfg, "strategy", "consec")),
                     cfg.pair_build());
}

int run_train(const RunConfig& cfg) {
  const auto pairs = training_pairs(cfg);
  const auto enc = cfg.encoder();
  const auto loss = cfg.loss();
  const auto tc = cfg.train();
  std::cout << "training on " << pairs.size() << " pairs\n";

  TrainHooks hooks;
  const std::string epoch_dir = opt_or(cfg, "epoch_dir", "");
  if (!epoch_dir.empty()) fs::create_directories(epoch_dir);
  hooks.on_epoch_end = [&](const Checkpoint& ckpt, const EpochStats& stats) {
    std::cout << "epoch " << stats.epoch << " steps=" << stats.steps << " mean_loss=" << format_double(stats.mean_loss)
              << "\n";
    if (!epoch_dir.empty()) {
      save_checkpoint(ckpt, fs::path(epoch_dir) / ("epoch-" + std::to_string(stats.epoch) + ".ckpt"));
    }
  };
  const auto result = train(pairs, enc, loss, tc, hooks);
  save_checkpoint(result.final, cfg.get("out"));
  std::cout << "saved checkpoint to " << cfg.get("out") << "\n";
  return 0;
}

int run_embed(const RunConfig& cfg) {
  const auto ckpt = checkpoint_from(cfg);
  const auto texts = load_lines(cfg.get("in"));
  const MatrixF rows = encode_eval(ckpt.model, texts);
  save_embeddings(cfg.get("out"), rows, texts);
  std::cout << "wrote " << rows.rows() << " x " << rows.cols() << " embeddings to " << cfg.get("out") << "\n";
  return 0;
}

int run_eval_intent(const RunConfig& cfg) {
  const auto ckpt = checkpoint_from(cfg);
  const auto data = load_labeled_file(cfg.get("data"));
  const auto shots = cfg.has("shots") ? cfg.get_size("shots") : 1;
  const auto rounds = cfg.has("rounds") ? cfg.get_size("rounds") : 1;
  emit_report(cfg, eval_intent(data, shots, cfg.get_u64("seed"), rounds, make_embedder(ckpt.model)));
  return 0;
}

int run_eval_oos(const RunConfig& cfg) {
  const auto ckpt = checkpoint_from(cfg);
  const std::string oos_label = opt_or(cfg, "oos_label", "oos");
  const auto support = load_labeled_file(cfg.get("support"));
  auto test = load_labeled_file(cfg.get("test"), oos_label);
  // Align test label ids with the support label space.
  std::map<std::string, int> ids;
  for (std::size_t i = 0; i < support.label_names.size(); ++i) ids[support.label_names[i]] = static_cast<int>(i);
  for (auto& item : test.items) {
    if (item.label == kOosLabel) continue;
    const auto& name = test.label_names[static_cast<std::size_t>(item.label)];
    auto it = ids.find(name);
    if (it == ids.end()) throw Error("eval-oos: test label '" + name + "' has no support examples");
    item.label = it->second;
  }
  test.label_names = support.label_names;
  emit_report(cfg, eval_oos(support, test, cfg.oos().population, make_embedder(ckpt.model)));
  return 0;
}

RankingSet load_ranking(const std::string& data_path, const std::string& pool_path) {
  RankingSet set;
  const auto pairs = load_pair_file(data_path);
  for (const auto& p : pairs) {
    set.queries.push_back(p.query);
    set.golds.push_back(p.response);
  }
  set.pool = pool_path.empty() ? set.golds : load_lines(pool_path);
  return set;
}

int run_eval_rank(const RunConfig& cfg) {
  const auto ckpt = checkpoint_from(cfg);
  const auto set = load_ranking(cfg.get("data"), opt_or(cfg, "pool", ""));
  const std::size_t n = cfg.has("candidates") ? cfg.get_size("candidates") : 100;
  const std::vector<std::size_t> ks{1, 3, 10};
  const auto result = rank_topk(set.queries, set.golds, set.pool, ks, n, cfg.get_u64("seed"), make_embedder(ckpt.model));
  emit_report(cfg, result.report);
  return 0;
}

int run_eval_nli(const RunConfig& cfg) {
  const auto ckpt = checkpoint_from(cfg);
  const auto triples = load_nli_file(cfg.get("data"));
  EvalReport r;
  r.task = "nli";
  r.metrics["Accuracy"] = nli_probe(triples, make_embedder(ckpt.model));
  r.sizes["triples"] = triples.size();
  emit_report(cfg, r);
  return 0;
}

int run_eval_actions(const RunConfig& cfg) {
  const auto ckpt = checkpoint_from(cfg);
  const auto train_set = load_multilabel_file(cfg.get("train_data"));
  const auto test_set = load_multilabel_file(cfg.get("test_data"), &train_set.label_names);
  const auto epochs = cfg.has("probe_epochs") ? cfg.get_size("probe_epochs") : 200;
  const double lr = cfg.has("probe_lr") ? cfg.get_double("probe_lr") : 1.0;
  const auto embed = make_embedder(ckpt.model);
  const auto probe = train_action_probe(embed(train_set.texts), train_set.labels, epochs, lr);
  const auto pred = probe.predict(embed(test_set.texts));
  const auto f1 = f1_scores(test_set.labels, pred);
  EvalReport r;
  r.task = "actions";
  r.metrics["Micro-F1"] = f1.micro;
  r.metrics["Macro-F1"] = f1.macro;
  r.sizes["train"] = train_set.texts.size();
  r.sizes["test"] = test_set.texts.size();
  r.sizes["labels"] = train_set.label_names.size();
  emit_report(cfg, r);
  return 0;
}

int run_inspect(const RunConfig& cfg) {
  const std::string path = cfg.get("file");
  const std::string bytes = read_text_file(path);
  if (bytes.starts_with("DSECKPT")) {
    const auto ckpt = parse_checkpoint(bytes);
    const auto& e = ckpt.model.config;
    std::cout << "kind=checkpoint\nvocab_size=" << e.vocab_size << "\nembed_dim=" << e.embed_dim
              << "\nhead_hidden=" << e.head_hidden << "\nhead_out=" << e.head_out << "\nepoch=" << ckpt.epoch
              << "\nadam_step=" << ckpt.adam.step << "\n";
    return 0;
  }
  if (bytes.starts_with("{")) {
    const auto corpus = parse_corpus(bytes);
    std::size_t turns = 0;
    for (const auto& d : corpus) turns += d.turns.size();
    std::cout << "kind=corpus\ndialogues=" << corpus.size() << "\nturns=" << turns << "\n";
    return 0;
  }
  const auto m = parse_embeddings(bytes);
  std::cout << "kind=embeddings\nn=" << m.rows() << "\ndim=" << m.cols() << "\n";
  return 0;
}

int run_epoch_study_cmd(const RunConfig& cfg) {
  const auto corpus = load_corpus(cfg.get("corpus"));
  StudyConfig sc;
  sc.encoder = cfg.encoder();
  sc.loss = cfg.loss();
  sc.train = cfg.train();
  sc.pair_build = cfg.pair_build();
  sc.strategies.clear();
  std::stringstream ss(opt_or(cfg, "strategies", "consec,self"));
  for (std::string s; std::getline(ss, s, ',');) sc.strategies.push_back(parse_pair_strategy(s));

  StudyEvalSets sets;
  sets.intent_shots = cfg.has("shots") ? cfg.get_size("shots") : 1;
  sets.intent_rounds = cfg.has("rounds") ? cfg.get_size("rounds") : 1;
  sets.intent_seed = cfg.get_u64("seed");
  sets.ranking_seed = cfg.get_u64("seed");
  if (cfg.has("intent")) sets.intent = load_labeled_file(cfg.get("intent"));
  if (cfg.has("intent_synthetic")) sets.intent = synthetic_intent_set(load_corpus(cfg.get("intent_synthetic")));
  if (cfg.has("oos_support") && cfg.has("oos_test")) {
    sets.oos_support = load_labeled_file(cfg.get("oos_support"));
    sets.oos_test = load_labeled_file(cfg.get("oos_test"), opt_or(cfg, "oos_label", "oos"));
    sets.oos_population = cfg.oos().population;
  }
  if (cfg.has("rank")) {
    sets.ranking = load_ranking(cfg.get("rank"), opt_or(cfg, "pool", ""));
    if (cfg.has("candidates")) sets.ranking_candidates = cfg.get_size("candidates");
  }
  const auto result = run_epoch_study(corpus, sc, sets);
  const std::string table = result.table();
  if (cfg.has("out")) {
    write_text_file(cfg.get("out"), table);
    std::cout << "wrote epoch table to " << cfg.get("out") << "\n";
  }
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dse: dialogue sentence embeddings by contrastive learning on consecutive utterances"};
  app.require_subcommand(1);
  app.fallthrough(false);

  std::vector<std::unique_ptr<Command>> commands;
  std::map<CLI::App*, int (*)(const RunConfig&)> handlers;
  auto make = [&](const std::string& name, const std::string& help, int (*fn)(const RunConfig&)) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->name = name;
    cmd->app = app.add_subcommand(name, help);
    add_common(*cmd);
    handlers[cmd->app] = fn;
    commands.push_back(std::move(cmd));
    return *commands.back();
  };

  {
    auto& c = make("synth", "generate a topic-structured synthetic corpus", run_synth);
    add_key(c, "topics", "number of topics");
    add_key(c, "dialogues_per_topic", "dialogues per topic");
    add_key(c, "turns", "turns per dialogue");
    add_key(c, "words", "words per turn (>= 4)");
    add_key(c, "pool_size", "words per topic pool");
    add_key(c, "seed", "sampling seed");
    add_key(c, "out", "output corpus (JSON Lines)", true);
  }
  {
    auto& c = make("build-pairs", "construct positive pairs from a corpus", run_build_pairs);
    add_key(c, "strategy", "consec|k2|k3|combined|self|file");
    add_key(c, "in", "input corpus (or pair file for --strategy file)", true);
    add_key(c, "out", "output pair file (TSV)", true);
    add_filter_keys(c);
  }
  {
    auto& c = make("train", "train the encoder with the contrastive objective", run_train);
    add_key(c, "pairs", "pair file (TSV)");
    add_key(c, "corpus", "corpus to build pairs from");
    add_key(c, "strategy", "pair strategy when training from a corpus");
    add_key(c, "out", "output checkpoint", true);
    add_key(c, "epoch_dir", "also save a checkpoint after every epoch here");
    add_model_keys(c);
    add_filter_keys(c);
  }
  {
    auto& c = make("embed", "export EVAL-view embeddings for a text file", run_embed);
    add_key(c, "ckpt", "checkpoint", true);
    add_key(c, "in", "one text per line", true);
    add_key(c, "out", "embedding file", true);
  }
  {
    auto& c = make("eval-intent", "prototypical few-shot intent classification", run_eval_intent);
    add_key(c, "ckpt", "checkpoint", true);
    add_key(c, "data", "labeled TSV", true);
    add_key(c, "shots", "support items per label");
    add_key(c, "rounds", "independent few-shot draws");
    add_key(c, "seed", "sampling seed");
    add_key(c, "report", "write the report as JSON here");
  }
  {
    auto& c = make("eval-oos", "out-of-scope detection with mean and mean-std thresholds", run_eval_oos);
    add_key(c, "ckpt", "checkpoint", true);
    add_key(c, "support", "labeled TSV of in-scope support items", true);
    add_key(c, "test", "labeled TSV; out-of-scope items carry --oos-label", true);
    add_key(c, "oos_label", "label name marking out-of-scope items (default oos)");
    add_key(c, "stats_population", "test_all|test_in_only");
    add_key(c, "report", "write the report as JSON here");
  }
  {
    auto& c = make("eval-rank", "top-k response selection among sampled candidates", run_eval_rank);
    add_key(c, "ckpt", "checkpoint", true);
    add_key(c, "data", "TSV query<TAB>gold response", true);
    add_key(c, "pool", "candidate pool, one response per line (default: all gold responses)");
    add_key(c, "candidates", "candidates per query including the gold (default 100)");
    add_key(c, "seed", "sampling seed");
    add_key(c, "report", "write the report as JSON here");
  }
  {
    auto& c = make("eval-nli", "entailment-vs-contradiction cosine probe", run_eval_nli);
    add_key(c, "ckpt", "checkpoint", true);
    add_key(c, "data", "TSV anchor<TAB>entailment<TAB>contradiction", true);
    add_key(c, "report", "write the report as JSON here");
  }
  {
    auto& c = make("eval-actions", "multi-label dialogue action linear probe", run_eval_actions);
    add_key(c, "ckpt", "checkpoint", true);
    add_key(c, "train_data", "TSV history<TAB>l1,l2,...", true);
    add_key(c, "test_data", "TSV history<TAB>l1,l2,...", true);
    add_key(c, "probe_epochs", "gradient-descent epochs (default 200)");
    add_key(c, "probe_lr", "probe learning rate (default 1.0)");
    add_key(c, "report", "write the report as JSON here");
  }
  {
    auto& c = make("inspect", "summarise a checkpoint, corpus or embedding file", run_inspect);
    c.app->add_option_function<std::string>("file", [&c](const std::string& v) { c.flags["file"] = v; }, "file")
        ->required();
  }
  {
    auto& c = make("epoch-study", "train several pair strategies and evaluate every epoch", run_epoch_study_cmd);
    add_key(c, "corpus", "training corpus", true);
    add_key(c, "strategies", "comma-separated pair strategies (default consec,self)");
    add_key(c, "intent", "labeled TSV for few-shot intent accuracy");
    add_key(c, "intent_synthetic", "synthetic corpus whose topics serve as intent labels");
    add_key(c, "shots", "support items per label");
    add_key(c, "rounds", "few-shot draws per evaluation");
    add_key(c, "oos_support", "labeled TSV of in-scope support items");
    add_key(c, "oos_test", "labeled TSV with out-of-scope items");
    add_key(c, "oos_label", "label name marking out-of-scope items");
    add_key(c, "stats_population", "test_all|test_in_only");
    add_key(c, "rank", "TSV query<TAB>gold response");
    add_key(c, "pool", "ranking pool file");
    add_key(c, "candidates", "ranking candidates per query");
    add_key(c, "out", "write the per-epoch table here");
    add_model_keys(c);
    add_filter_keys(c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n";
    const int code = app.exit(e);
    return code == 0 ? 2 : code;
  }

  for (const auto& cmd : commands) {
    if (!cmd->app->parsed()) continue;
    try {
      const RunConfig cfg = resolve(*cmd);
      // Validate every typed section up front so bad values fail before any work.
      cfg.encoder();
      cfg.loss();
      cfg.train();
      cfg.oos();
      cfg.get_size("threads");
      print_config(*cmd, cfg);
      return handlers.at(cmd->app)(cfg);
    } catch (const std::exception& e) {
      std::cerr << "dse " << cmd->name << ": error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}
