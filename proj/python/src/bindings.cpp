#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dse/corpus.hpp"
#include "dse/eval.hpp"
#include "dse/loss.hpp"
#include "dse/pairs.hpp"
#include "dse/study.hpp"
#include "dse/trainer.hpp"

namespace py = pybind11;
using namespace dse;

namespace {

LabeledSet make_labeled(const std::vector<std::string>& texts, const std::vector<int>& labels) {
  if (texts.size() != labels.size()) throw Error("texts and labels differ in length");
  LabeledSet set;
  int max_label = -1;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    set.items.push_back({texts[i], labels[i]});
    max_label = std::max(max_label, labels[i]);
  }
  for (int l = 0; l <= max_label; ++l) set.label_names.push_back(std::to_string(l));
  return set;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  for (const auto& [k, v] : r.metrics) d[py::str(k)] = v;
  return d;
}

}  // namespace

PYBIND11_MODULE(_dse, m) {
  m.doc() = "Dialogue sentence embeddings trained on consecutive utterances";

  py::register_exception<Error>(m, "DseError", PyExc_ValueError);

  py::enum_<Speaker>(m, "Speaker").value("usr", Speaker::Usr).value("sys", Speaker::Sys);

  py::class_<Turn>(m, "Turn")
      .def(py::init<Speaker, std::string>(), py::arg("speaker"), py::arg("text"))
      .def_readwrite("speaker", &Turn::speaker)
      .def_readwrite("text", &Turn::text);

  py::class_<Dialogue>(m, "Dialogue")
      .def(py::init<std::string, std::vector<Turn>>(), py::arg("id"), py::arg("turns"))
      .def_readwrite("id", &Dialogue::id)
      .def_readwrite("turns", &Dialogue::turns);

  py::class_<TrainPair>(m, "TrainPair")
      .def_readonly("query", &TrainPair::query)
      .def_readonly("response", &TrainPair::response)
      .def_readonly("dialogue_id", &TrainPair::dialogue_id)
      .def_property_readonly("source", [](const TrainPair& p) { return std::string(pair_source_name(p.source)); });

  py::class_<EncoderConfig>(m, "EncoderConfig")
      .def(py::init<>())
      .def_readwrite("vocab_size", &EncoderConfig::vocab_size)
      .def_readwrite("embed_dim", &EncoderConfig::embed_dim)
      .def_readwrite("head_hidden", &EncoderConfig::head_hidden)
      .def_readwrite("head_out", &EncoderConfig::head_out)
      .def_readwrite("dropout_rate", &EncoderConfig::dropout_rate)
      .def_readwrite("hash_seed", &EncoderConfig::hash_seed);

  py::class_<LossConfig>(m, "LossConfig")
      .def(py::init<>())
      .def_readwrite("temperature", &LossConfig::temperature)
      .def_readwrite("hard_negatives", &LossConfig::hard_negatives)
      .def_readwrite("positive_in_denominator", &LossConfig::positive_in_denominator)
      .def_readwrite("eps_norm", &LossConfig::eps_norm);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("lr_head", &TrainConfig::lr_head)
      .def_readwrite("lr_backbone", &TrainConfig::lr_backbone)
      .def_readwrite("init_seed", &TrainConfig::init_seed)
      .def_readwrite("shuffle_seed", &TrainConfig::shuffle_seed)
      .def_readwrite("dropout_seed", &TrainConfig::dropout_seed)
      .def_readwrite("same_dialogue_exclusion", &TrainConfig::same_dialogue_exclusion)
      .def_readwrite("keep_partial_batches", &TrainConfig::keep_partial_batches);

  m.def(
      "tokenize",
      [](const std::string& text, std::size_t vocab_size, std::uint64_t hash_seed) {
        const auto seq = tokenize(text, vocab_size, hash_seed);
        return py::make_tuple(seq.ids, seq.word_count);
      },
      py::arg("text"), py::arg("vocab_size") = kDefaultVocabSize, py::arg("hash_seed") = 0);

  m.def(
      "gen_synthetic",
      [](std::size_t topics, std::size_t dialogues_per_topic, std::size_t turns, std::size_t words,
         std::size_t pool_size, std::uint64_t seed) {
        return gen_synthetic(SyntheticConfig{topics, dialogues_per_topic, turns, words, pool_size, seed});
      },
      py::arg("topics") = 8, py::arg("dialogues_per_topic") = 100, py::arg("turns") = 6, py::arg("words") = 6,
      py::arg("pool_size") = 30, py::arg("seed") = 0);

  m.def("load_corpus", [](const std::string& path) { return load_corpus(path); });
  m.def("save_corpus", [](const std::vector<Dialogue>& d, const std::string& path) { save_corpus(d, path); });

  m.def(
      "build_pairs",
      [](const std::vector<Dialogue>& corpus, const std::string& strategy, bool bridge_filtered) {
        PairBuildConfig cfg;
        cfg.bridge_filtered = bridge_filtered;
        return build_pairs(corpus, parse_pair_strategy(strategy), cfg);
      },
      py::arg("corpus"), py::arg("strategy") = "consec", py::arg("bridge_filtered") = false);

  m.def("load_pairs", [](const std::string& path) { return load_pair_file(path); });
  m.def("save_pairs", [](const std::vector<TrainPair>& p, const std::string& path) { save_pair_file(p, path); });

  m.def(
      "batch_loss",
      [](const MatrixD& embeddings, const LossConfig& cfg) {
        auto r = batch_loss_with_grad(embeddings, cfg);
        return py::make_tuple(r.loss, r.grad);
      },
      py::arg("embeddings"), py::arg("config") = LossConfig{},
      "Loss over a 2M-row batch (row i pairs with row i+M) and its gradient.");

  m.def("ntxent", &ntxent_reference, py::arg("embeddings"), py::arg("temperature"), py::arg("eps_norm") = 1e-12);

  py::class_<Checkpoint>(m, "Model")
      .def_static("load", [](const std::string& path) { return load_checkpoint(path); })
      .def("save", [](const Checkpoint& c, const std::string& path) { save_checkpoint(c, path); })
      .def_readonly("epoch", &Checkpoint::epoch)
      .def_property_readonly("encoder_config", [](const Checkpoint& c) { return c.model.config; })
      .def_property_readonly("dim", [](const Checkpoint& c) { return c.model.config.embed_dim; })
      .def(
          "encode",
          [](const Checkpoint& c, const std::vector<std::string>& texts) {
            return encode_eval(c.model, std::span<const std::string>(texts));
          },
          py::arg("texts"), "Evaluation-view embeddings, one float32 row per text.");

  m.def(
      "train",
      [](const std::vector<TrainPair>& pairs, const EncoderConfig& ec, const LossConfig& lc, const TrainConfig& tc) {
        py::gil_scoped_release release;
        auto result = train(pairs, ec, lc, tc);
        std::vector<double> losses;
        for (const auto& e : result.epochs) losses.push_back(e.mean_loss);
        return std::make_pair(std::move(result.final), losses);
      },
      py::arg("pairs"), py::arg("encoder") = EncoderConfig{}, py::arg("loss") = LossConfig{},
      py::arg("train") = TrainConfig{}, "Returns (model, per-epoch mean loss).");

  m.def(
      "eval_intent",
      [](const Checkpoint& c, const std::vector<std::string>& texts, const std::vector<int>& labels,
         std::size_t shots, std::uint64_t seed, std::size_t rounds) {
        return report_dict(eval_intent(make_labeled(texts, labels), shots, seed, rounds, make_embedder(c.model)));
      },
      py::arg("model"), py::arg("texts"), py::arg("labels"), py::arg("shots") = 1, py::arg("seed") = 0,
      py::arg("rounds") = 1);

  m.def(
      "cluster_separation",
      [](const MatrixD& embeddings, const std::vector<int>& labels) {
        const auto s = cluster_separation(embeddings, labels);
        return py::make_tuple(s.intra, s.inter);
      },
      py::arg("embeddings"), py::arg("labels"));

  m.def(
      "synthetic_intent_set",
      [](const std::vector<Dialogue>& corpus) {
        const auto set = synthetic_intent_set(corpus);
        return py::make_tuple(set.texts(), set.labels());
      },
      py::arg("corpus"));
}
