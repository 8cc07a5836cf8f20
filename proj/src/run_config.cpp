#include "dse/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>

namespace dse {

namespace {

const std::vector<std::pair<std::string, std::string>>& default_table() {
  static const std::vector<std::pair<std::string, std::string>> table{
      {"vocab_size", "30000"},
      {"hash_seed", "0"},
      {"embed_dim", "64"},
      {"head_hidden", "auto"},  // auto = embed_dim
      {"head_out", "32"},
      {"dropout", "0.1"},
      {"temperature", "0.05"},
      {"hard_negatives", "true"},
      {"positive_in_denominator", "true"},
      {"eps_norm", "1e-12"},
      {"batch_size", "128"},
      {"epochs", "15"},
      {"lr_head", "0.0003"},
      {"lr_backbone", "0.003"},
      {"beta1", "0.9"},
      {"beta2", "0.999"},
      {"adam_eps", "1e-08"},
      {"seed", "0"},
      {"same_dialogue_exclusion", "false"},
      {"keep_partial_batches", "true"},
      {"length_filter", "true"},
      {"bridge_filtered", "false"},
      {"threshold_rule", "mean"},
      {"stats_population", "test_all"},
      {"threads", "1"},
  };
  return table;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, std::string_view expected) {
  throw Error("invalid value for '" + key + "': '" + value + "' (expected " + std::string(expected) + ")");
}

template <typename N>
N parse_num(const std::string& key, const std::string& value, std::string_view expected) {
  N out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) bad_value(key, value, expected);
  return out;
}

}  // namespace

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Default: return "default";
    case Provenance::Preset: return "preset";
    case Provenance::Env: return "env";
    case Provenance::ConfigFile: return "config-file";
    case Provenance::Flag: return "flag";
  }
  return "?";
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, v] : default_table()) k.push_back(key);
    return k;
  }();
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& [k, v] : default_table()) entries_[k] = {v, Provenance::Default};
}

void RunConfig::apply_preset(std::string_view name) {
  if (name == "desk") return;
  if (name != "paper") throw Error("invalid value for 'preset': '" + std::string(name) + "' (expected paper|desk)");
  const std::vector<std::pair<std::string, std::string>> paper{
      {"batch_size", "1024"}, {"epochs", "15"},         {"temperature", "0.05"}, {"lr_head", "0.0003"},
      {"lr_backbone", "3e-06"}, {"embed_dim", "768"},    {"head_hidden", "auto"}, {"head_out", "128"},
      {"dropout", "0.1"},      {"length_filter", "true"},
  };
  for (const auto& [k, v] : paper) set(k, v, Provenance::Preset);
}

void RunConfig::apply_env() {
  if (const char* s = std::getenv("DSE_SEED"); s && *s) {
    if (source("seed") < Provenance::Env) set("seed", s, Provenance::Env);
  }
}

void RunConfig::apply_file_text(std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected key=value");
    }
    set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), Provenance::ConfigFile);
  }
}

void RunConfig::set(const std::string& key, std::string value, Provenance source) {
  entries_[key] = {std::move(value), source};
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw Error("missing configuration value '" + key + "'");
  return it->second.value;
}

Provenance RunConfig::source(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? Provenance::Default : it->second.source;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return parse_num<std::size_t>(key, get(key), "a non-negative integer");
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return parse_num<std::uint64_t>(key, get(key), "a non-negative integer");
}

double RunConfig::get_double(const std::string& key) const {
  return parse_num<double>(key, get(key), "a number");
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true|false");
}

EncoderConfig RunConfig::encoder() const {
  EncoderConfig c;
  c.vocab_size = get_size("vocab_size");
  c.hash_seed = get_u64("hash_seed");
  c.embed_dim = get_size("embed_dim");
  c.head_hidden = get("head_hidden") == "auto" ? c.embed_dim : get_size("head_hidden");
  c.head_out = get_size("head_out");
  c.dropout_rate = get_double("dropout");
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(std::string("invalid encoder configuration: ") + e.what());
  }
  return c;
}

LossConfig RunConfig::loss() const {
  LossConfig c;
  c.temperature = get_double("temperature");
  c.hard_negatives = get_bool("hard_negatives");
  c.positive_in_denominator = get_bool("positive_in_denominator");
  c.eps_norm = get_double("eps_norm");
  if (!(c.temperature > 0.0)) bad_value("temperature", get("temperature"), "a positive number");
  if (!(c.eps_norm > 0.0)) bad_value("eps_norm", get("eps_norm"), "a positive number");
  return c;
}

TrainConfig RunConfig::train() const {
  TrainConfig c;
  c.batch_size = get_size("batch_size");
  c.epochs = get_size("epochs");
  c.lr_head = get_double("lr_head");
  c.lr_backbone = get_double("lr_backbone");
  c.beta1 = get_double("beta1");
  c.beta2 = get_double("beta2");
  c.adam_eps = get_double("adam_eps");
  c.init_seed = get_u64("seed");
  c.shuffle_seed = c.init_seed;
  c.dropout_seed = c.init_seed;
  c.same_dialogue_exclusion = get_bool("same_dialogue_exclusion");
  c.keep_partial_batches = get_bool("keep_partial_batches");
  if (c.batch_size < 2) bad_value("batch_size", get("batch_size"), "an integer >= 2");
  if (c.epochs < 1) bad_value("epochs", get("epochs"), "an integer >= 1");
  if (!(c.lr_head > 0.0)) bad_value("lr_head", get("lr_head"), "a positive number");
  if (!(c.lr_backbone > 0.0)) bad_value("lr_backbone", get("lr_backbone"), "a positive number");
  c.validate();
  return c;
}

PairBuildConfig RunConfig::pair_build() const {
  PairBuildConfig c;
  c.apply_length_filter = get_bool("length_filter");
  c.bridge_filtered = get_bool("bridge_filtered");
  return c;
}

OOSConfig RunConfig::oos() const {
  OOSConfig c;
  const auto& rule = get("threshold_rule");
  if (rule == "mean") {
    c.rule = ThresholdRule::Mean;
  } else if (rule == "mean-std") {
    c.rule = ThresholdRule::MeanMinusStd;
  } else {
    bad_value("threshold_rule", rule, "mean|mean-std");
  }
  const auto& pop = get("stats_population");
  if (pop == "test_all") {
    c.population = StatsPopulation::TestAll;
  } else if (pop == "test_in_only") {
    c.population = StatsPopulation::TestInOnly;
  } else {
    bad_value("stats_population", pop, "test_all|test_in_only");
  }
  return c;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, e] : entries_) {
    out += k + "=" + e.value + "  # " + std::string(provenance_name(e.source)) + "\n";
  }
  return out;
}

}  // namespace dse
