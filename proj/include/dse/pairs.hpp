#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dse/corpus.hpp"

namespace dse {

enum class PairSource { Consec11, Consec21, Consec31, Self, File };

std::string_view pair_source_name(PairSource s);

struct TrainPair {
  std::string query;
  std::string response;
  PairSource source = PairSource::Consec11;
  /// Originating dialogue; empty for SELF and FILE pairs.
  std::string dialogue_id;

  bool operator==(const TrainPair&) const = default;
};

struct PairBuildConfig {
  std::set<int> query_widths{1};
  bool apply_length_filter = true;
  /// When true, a dropped turn does not break adjacency between its neighbours.
  bool bridge_filtered = false;
};

inline constexpr std::string_view kSepJoin = " [SEP] ";

/// Runs of turn texts that are adjacent after filtering. Without bridging,
/// each dropped turn closes the current run.
std::vector<std::vector<std::string>> surviving_runs(const Dialogue& d, const PairBuildConfig& cfg);

/// (u_t, u_{t+1}) for every adjacent surviving pair, one orientation only.
std::vector<TrainPair> build_consecutive(const std::vector<Dialogue>& dialogues, const PairBuildConfig& cfg = {});

/// (u_t [SEP] ... [SEP] u_{t+k-1}, u_{t+k}); k must be 2 or 3.
std::vector<TrainPair> build_k_to_1(const std::vector<Dialogue>& dialogues, int k, const PairBuildConfig& cfg = {});

/// Concatenation of the outputs for every width in cfg.query_widths, ascending.
std::vector<TrainPair> build_combined(const std::vector<Dialogue>& dialogues, const PairBuildConfig& cfg);

/// One (x, x) pair per distinct trimmed surviving utterance, corpus-wide,
/// in first-occurrence order.
std::vector<TrainPair> build_self_pairs(const std::vector<Dialogue>& dialogues, const PairBuildConfig& cfg = {});

/// TAB-separated query/response, one per line; '#' lines and blank lines ignored.
std::vector<TrainPair> parse_pair_file(std::string_view contents);
std::vector<TrainPair> load_pair_file(const std::filesystem::path& path);
std::string serialize_pairs(const std::vector<TrainPair>& pairs);
void save_pair_file(const std::vector<TrainPair>& pairs, const std::filesystem::path& path);

}  // namespace dse
