#include "dse/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dse/common.hpp"

namespace dse {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Speaker parse_speaker(const std::string& s, std::size_t line_no) {
  if (s == "usr") return Speaker::Usr;
  if (s == "sys") return Speaker::Sys;
  throw Error("corpus line " + std::to_string(line_no) + ": unknown speaker '" + s + "'");
}

}  // namespace

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

std::size_t word_count(std::string_view text) { return split_words(text).size(); }

std::string_view trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return text.substr(b, e - b);
}

std::uint32_t hash_word(std::string_view lowered_word, std::size_t vocab_size, std::uint64_t hash_seed) {
  std::uint64_t state = kFnvOffset;
  for (int k = 0; k < 8; ++k) {
    state ^= (hash_seed >> (8 * k)) & 0xffU;
    state *= kFnvPrime;
  }
  state = fnv1a64(lowered_word, state);
  return kNumReserved + static_cast<std::uint32_t>(state % (vocab_size - kNumReserved));
}

TokenSeq tokenize(std::string_view text, std::size_t vocab_size, std::uint64_t hash_seed) {
  if (vocab_size < 8) throw Error("tokenize: vocab_size must be >= 8");
  TokenSeq seq;
  const auto words = split_words(text);
  seq.word_count = words.size();
  seq.ids.reserve(words.size());
  for (auto w : words) {
    const std::string lw = lowercase(w);
    if (lw == "[sep]") {
      seq.ids.push_back(kSepId);
    } else if (lw == "[sys]") {
      seq.ids.push_back(kSysId);
    } else if (lw == "[usr]") {
      seq.ids.push_back(kUsrId);
    } else {
      seq.ids.push_back(hash_word(lw, vocab_size, hash_seed));
    }
  }
  return seq;
}

bool passes_length_filter(std::string_view text) { return word_count(text) >= 4; }

std::string_view speaker_name(Speaker s) { return s == Speaker::Usr ? "usr" : "sys"; }

std::vector<Dialogue> parse_corpus(std::string_view contents) {
  std::vector<Dialogue> out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    std::string_view line = contents.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;

    const std::string where = "corpus line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(where + ": invalid JSON (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("turns") ||
        !j["turns"].is_array()) {
      throw Error(where + ": expected {\"id\": string, \"turns\": [...]}");
    }
    Dialogue d;
    d.id = j["id"].get<std::string>();
    for (const auto& t : j["turns"]) {
      if (!t.is_object() || !t.contains("speaker") || !t["speaker"].is_string() || !t.contains("text") ||
          !t["text"].is_string()) {
        throw Error(where + ": turn must be {\"speaker\": \"usr\"|\"sys\", \"text\": string}");
      }
      Turn turn{parse_speaker(t["speaker"].get<std::string>(), line_no), t["text"].get<std::string>()};
      if (trim(turn.text).empty()) throw Error(where + ": empty turn text");
      d.turns.push_back(std::move(turn));
    }
    if (d.turns.empty()) throw Error(where + ": dialogue has no turns");
    if (!seen.insert(d.id).second) throw Error(where + ": duplicate dialogue id '" + d.id + "'");
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Dialogue> load_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path)); }

std::string serialize_corpus(const std::vector<Dialogue>& dialogues) {
  std::string out;
  for (const auto& d : dialogues) {
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : d.turns) {
      turns.push_back({{"speaker", std::string(speaker_name(t.speaker))}, {"text", t.text}});
    }
    nlohmann::json j = {{"id", d.id}, {"turns", std::move(turns)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const std::vector<Dialogue>& dialogues, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_corpus(dialogues);
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<Dialogue> gen_synthetic(const SyntheticConfig& cfg) {
  if (cfg.num_topics < 1 || cfg.dialogues_per_topic < 1 || cfg.turns_per_dialogue < 1 || cfg.pool_size < 1) {
    throw Error("gen_synthetic: counts must be >= 1");
  }
  if (cfg.words_per_turn < 4) throw Error("gen_synthetic: words_per_turn must be >= 4");

  Rng rng(cfg.seed);
  std::vector<Dialogue> out;
  out.reserve(cfg.num_topics * cfg.dialogues_per_topic);
  for (std::size_t t = 0; t < cfg.num_topics; ++t) {
    for (std::size_t i = 0; i < cfg.dialogues_per_topic; ++i) {
      Dialogue d;
      d.id = "topic" + std::to_string(t) + "-d" + std::to_string(i);
      for (std::size_t u = 0; u < cfg.turns_per_dialogue; ++u) {
        std::string text;
        for (std::size_t w = 0; w < cfg.words_per_turn; ++w) {
          if (w) text += ' ';
          text += 't' + std::to_string(t) + 'w' + std::to_string(rng.uniform_index(cfg.pool_size));
        }
        d.turns.push_back({u % 2 == 0 ? Speaker::Usr : Speaker::Sys, std::move(text)});
      }
      out.push_back(std::move(d));
    }
  }
  return out;
}

std::vector<Dialogue> gen_synthetic(std::size_t num_topics, std::size_t dialogues_per_topic,
                                    std::size_t turns_per_dialogue, std::size_t words_per_turn,
                                    std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.num_topics = num_topics;
  cfg.dialogues_per_topic = dialogues_per_topic;
  cfg.turns_per_dialogue = turns_per_dialogue;
  cfg.words_per_turn = words_per_turn;
  cfg.seed = seed;
  return gen_synthetic(cfg);
}

int synthetic_topic(std::string_view dialogue_id) {
  constexpr std::string_view prefix = "topic";
  if (dialogue_id.substr(0, prefix.size()) != prefix) return -1;
  const char* first = dialogue_id.data() + prefix.size();
  const char* last = dialogue_id.data() + dialogue_id.size();
  int topic = -1;
  auto [ptr, ec] = std::from_chars(first, last, topic);
  if (ec != std::errc() || ptr == first || ptr == last || *ptr != '-') return -1;
  return topic;
}

}  // namespace dse
