#include "dse/pairs.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "dse/common.hpp"

namespace dse {

namespace {

PairSource width_source(int k) {
  switch (k) {
    case 1: return PairSource::Consec11;
    case 2: return PairSource::Consec21;
    case 3: return PairSource::Consec31;
  }
  throw Error("query width must be 1, 2 or 3, got " + std::to_string(k));
}

std::vector<TrainPair> build_width(const std::vector<Dialogue>& dialogues, int k, const PairBuildConfig& cfg) {
  const PairSource source = width_source(k);
  std::vector<TrainPair> out;
  for (const auto& d : dialogues) {
    for (const auto& run : surviving_runs(d, cfg)) {
      const std::size_t width = static_cast<std::size_t>(k);
      for (std::size_t t = 0; t + width < run.size(); ++t) {
        std::string query = run[t];
        for (std::size_t j = 1; j < width; ++j) {
          query += kSepJoin;
          query += run[t + j];
        }
        out.push_back({std::move(query), run[t + width], source, d.id});
      }
    }
  }
  return out;
}

}  // namespace

std::string_view pair_source_name(PairSource s) {
  switch (s) {
    case PairSource::Consec11: return "consec_1_1";
    case PairSource::Consec21: return "consec_2_1";
    case PairSource::Consec31: return "consec_3_1";
    case PairSource::Self: return "self";
    case PairSource::File: return "file";
  }
  return "?";
}

std::vector<std::vector<std::string>> surviving_runs(const Dialogue& d, const PairBuildConfig& cfg) {
  std::vector<std::vector<std::string>> runs;
  std::vector<std::string> current;
  for (const auto& turn : d.turns) {
    if (cfg.apply_length_filter && !passes_length_filter(turn.text)) {
      if (!cfg.bridge_filtered && !current.empty()) {
        runs.push_back(std::move(current));
        current.clear();
      }
      continue;
    }
    current.push_back(turn.text);
  }
  if (!current.empty()) runs.push_back(std::move(current));
  return runs;
}

std::vector<TrainPair> build_consecutive(const std::vector<Dialogue>& dialogues, const PairBuildConfig& cfg) {
  return build_width(dialogues, 1, cfg);
}

std::vector<TrainPair> build_k_to_1(const std::vector<Dialogue>& dialogues, int k, const PairBuildConfig& cfg) {
  if (k != 2 && k != 3) throw Error("build_k_to_1: k must be 2 or 3, got " + std::to_string(k));
  return build_width(dialogues, k, cfg);
}

std::vector<TrainPair> build_combined(const std::vector<Dialogue>& dialogues, const PairBuildConfig& cfg) {
  if (cfg.query_widths.empty()) throw Error("build_combined: query_widths must be non-empty");
  std::vector<TrainPair> out;
  for (int k : cfg.query_widths) {
    auto part = build_width(dialogues, k, cfg);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

std::vector<TrainPair> build_self_pairs(const std::vector<Dialogue>& dialogues, const PairBuildConfig& cfg) {
  std::vector<TrainPair> out;
  std::unordered_set<std::string> seen;
  for (const auto& d : dialogues) {
    for (const auto& turn : d.turns) {
      if (cfg.apply_length_filter && !passes_length_filter(turn.text)) continue;
      std::string text(trim(turn.text));
      if (!seen.insert(text).second) continue;
      out.push_back({text, text, PairSource::Self, {}});
    }
  }
  return out;
}

std::vector<TrainPair> parse_pair_file(std::string_view contents) {
  std::vector<TrainPair> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < contents.size()) {
    std::size_t nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    std::string_view line = contents.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos) {
      throw Error("pair file line " + std::to_string(line_no) + ": expected exactly two TAB-separated fields");
    }
    std::string_view q = line.substr(0, tab);
    std::string_view r = line.substr(tab + 1);
    if (trim(q).empty() || trim(r).empty()) {
      throw Error("pair file line " + std::to_string(line_no) + ": empty query or response");
    }
    out.push_back({std::string(q), std::string(r), PairSource::File, {}});
  }
  return out;
}

std::vector<TrainPair> load_pair_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pair_file(ss.str());
}

std::string serialize_pairs(const std::vector<TrainPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    if (p.query.find_first_of("\t\n") != std::string::npos || p.response.find_first_of("\t\n") != std::string::npos) {
      throw Error("pair text contains TAB or newline and cannot be written as TSV");
    }
    out += p.query;
    out += '\t';
    out += p.response;
    out += '\n';
  }
  return out;
}

void save_pair_file(const std::vector<TrainPair>& pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_pairs(pairs);
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace dse
