#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dse {

enum class Speaker { Usr, Sys };

struct Turn {
  Speaker speaker = Speaker::Usr;
  std::string text;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;

  bool operator==(const Dialogue&) const = default;
};

// Reserved token ids shared by pair queries and dialogue-history rendering.
inline constexpr std::uint32_t kSepId = 0;
inline constexpr std::uint32_t kSysId = 1;
inline constexpr std::uint32_t kUsrId = 2;
inline constexpr std::uint32_t kNumReserved = 3;

inline constexpr std::size_t kDefaultVocabSize = 30000;

struct TokenSeq {
  std::vector<std::uint32_t> ids;
  std::size_t word_count = 0;

  bool operator==(const TokenSeq&) const = default;
};

/// Maximal non-whitespace runs of `text`, in order.
std::vector<std::string_view> split_words(std::string_view text);
std::size_t word_count(std::string_view text);
std::string_view trim(std::string_view text);

/// Lowercases, splits on whitespace and hashes each word into
/// [3, vocab_size). The literal words "[sep]", "[sys]" and "[usr]" (after
/// lowercasing) map to the reserved ids. The seed is folded into the hash
/// state as 8 little-endian bytes before the word bytes.
TokenSeq tokenize(std::string_view text, std::size_t vocab_size, std::uint64_t hash_seed);

std::uint32_t hash_word(std::string_view lowered_word, std::size_t vocab_size, std::uint64_t hash_seed);

/// Training-utterance filter: sentences of three words or fewer are dropped.
bool passes_length_filter(std::string_view text);

std::string_view speaker_name(Speaker s);

/// One JSON object per line: {"id": ..., "turns": [{"speaker": "usr"|"sys", "text": ...}]}.
/// Blank lines are skipped.
std::vector<Dialogue> parse_corpus(std::string_view contents);
std::vector<Dialogue> load_corpus(const std::filesystem::path& path);

/// Canonical JSON Lines rendering (compact, keys sorted, one trailing newline per dialogue).
std::string serialize_corpus(const std::vector<Dialogue>& dialogues);
void save_corpus(const std::vector<Dialogue>& dialogues, const std::filesystem::path& path);

struct SyntheticConfig {
  std::size_t num_topics = 8;
  std::size_t dialogues_per_topic = 100;
  std::size_t turns_per_dialogue = 6;
  std::size_t words_per_turn = 6;
  std::size_t pool_size = 30;
  std::uint64_t seed = 0;
};

/// Topic-structured corpus. Topic t draws words only from its own pool
/// ("t<t>w<j>", j < pool_size), so pools are disjoint and identical across
/// seeds. Dialogue ids have the form "topic<t>-d<i>".
std::vector<Dialogue> gen_synthetic(const SyntheticConfig& cfg);
std::vector<Dialogue> gen_synthetic(std::size_t num_topics, std::size_t dialogues_per_topic,
                                    std::size_t turns_per_dialogue, std::size_t words_per_turn,
                                    std::uint64_t seed);

/// Topic index encoded in a synthetic dialogue id, or -1.
int synthetic_topic(std::string_view dialogue_id);

}  // namespace dse
