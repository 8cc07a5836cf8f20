#include "dse/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace dse {

namespace {

template <typename F>
void for_each_line(std::string_view contents, F&& fn) {
  std::size_t pos = 0, line_no = 0;
  while (pos < contents.size()) {
    std::size_t nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    std::string_view line = contents.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    fn(line, line_no);
  }
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

[[noreturn]] void line_error(std::string_view file_kind, std::size_t line_no, const std::string& what) {
  throw Error(std::string(file_kind) + " line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<std::string> load_lines(const std::filesystem::path& path) {
  const std::string contents = read_text_file(path);
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t nl = contents.find('\n', pos);
    if (nl == std::string::npos) nl = contents.size();
    std::string line = contents.substr(pos, nl - pos);
    pos = nl + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) out.push_back(std::move(line));
  }
  return out;
}

LabeledSet parse_labeled(std::string_view contents, std::string_view oos_name) {
  LabeledSet out;
  std::map<std::string, int, std::less<>> ids;
  for_each_line(contents, [&](std::string_view line, std::size_t line_no) {
    const auto fields = split_tabs(line);
    if (fields.size() != 2) line_error("labeled file", line_no, "expected text<TAB>label");
    if (trim(fields[0]).empty() || trim(fields[1]).empty()) line_error("labeled file", line_no, "empty field");
    const std::string name(trim(fields[1]));
    int label = kOosLabel;
    if (oos_name.empty() || name != oos_name) {
      auto it = ids.find(name);
      if (it == ids.end()) {
        it = ids.emplace(name, static_cast<int>(out.label_names.size())).first;
        out.label_names.push_back(name);
      }
      label = it->second;
    }
    out.items.push_back({std::string(fields[0]), label});
  });
  return out;
}

LabeledSet load_labeled_file(const std::filesystem::path& path, std::string_view oos_name) {
  return parse_labeled(read_text_file(path), oos_name);
}

MultiLabelSet parse_multilabel(std::string_view contents, const std::vector<std::string>* label_names) {
  MultiLabelSet out;
  std::vector<std::vector<std::string>> raw;
  std::map<std::string, std::size_t, std::less<>> ids;
  if (label_names) {
    out.label_names = *label_names;
    for (std::size_t i = 0; i < label_names->size(); ++i) ids.emplace((*label_names)[i], i);
  }
  for_each_line(contents, [&](std::string_view line, std::size_t line_no) {
    const auto fields = split_tabs(line);
    if (fields.size() != 2) line_error("multi-label file", line_no, "expected text<TAB>l1,l2,...");
    if (trim(fields[0]).empty()) line_error("multi-label file", line_no, "empty text");
    std::vector<std::string> names;
    std::string_view rest = fields[1];
    while (!trim(rest).empty()) {
      const auto comma = rest.find(',');
      const std::string name(trim(rest.substr(0, comma)));
      if (name.empty()) line_error("multi-label file", line_no, "empty label name");
      if (!ids.count(name)) {
        if (label_names) line_error("multi-label file", line_no, "unknown label '" + name + "'");
        ids.emplace(name, out.label_names.size());
        out.label_names.push_back(name);
      }
      names.push_back(name);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    out.texts.emplace_back(fields[0]);
    raw.push_back(std::move(names));
  });
  for (const auto& names : raw) {
    LabelBits bits(out.label_names.size(), false);
    for (const auto& n : names) bits[ids.find(n)->second] = true;
    out.labels.push_back(std::move(bits));
  }
  return out;
}

MultiLabelSet load_multilabel_file(const std::filesystem::path& path, const std::vector<std::string>* label_names) {
  return parse_multilabel(read_text_file(path), label_names);
}

std::vector<NliTriple> parse_nli(std::string_view contents) {
  std::vector<NliTriple> out;
  for_each_line(contents, [&](std::string_view line, std::size_t line_no) {
    const auto f = split_tabs(line);
    if (f.size() != 3) line_error("NLI file", line_no, "expected anchor<TAB>entailment<TAB>contradiction");
    for (auto s : f) {
      if (trim(s).empty()) line_error("NLI file", line_no, "empty field");
    }
    out.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2])});
  });
  return out;
}

std::vector<NliTriple> load_nli_file(const std::filesystem::path& path) { return parse_nli(read_text_file(path)); }

std::string serialize_embeddings(const MatrixF& rows) {
  std::string out = std::to_string(rows.rows()) + " " + std::to_string(rows.cols()) + "\n";
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j) out += ' ';
      out += format_float(rows(i, j));
    }
    out += '\n';
  }
  return out;
}

MatrixF parse_embeddings(std::string_view contents) {
  auto next_line = [&contents](std::size_t& pos) -> std::string_view {
    if (pos >= contents.size()) throw Error("embedding file: truncated");
    std::size_t nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    std::string_view line = contents.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  auto parse_row = [](std::string_view line, std::size_t line_no, auto* out, std::size_t expected) {
    const auto words = split_words(line);
    if (words.size() != expected) {
      throw Error("embedding file line " + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                  " values, got " + std::to_string(words.size()));
    }
    for (std::size_t k = 0; k < expected; ++k) {
      auto [ptr, ec] = std::from_chars(words[k].data(), words[k].data() + words[k].size(), out[k]);
      if (ec != std::errc() || ptr != words[k].data() + words[k].size()) {
        throw Error("embedding file line " + std::to_string(line_no) + ": bad number '" + std::string(words[k]) +
                    "'");
      }
    }
  };

  std::size_t pos = 0;
  std::size_t shape[2];
  parse_row(next_line(pos), 1, shape, 2);
  MatrixF m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
  for (std::size_t i = 0; i < shape[0]; ++i) {
    parse_row(next_line(pos), i + 2, m.data() + i * shape[1], shape[1]);
  }
  if (!trim(contents.substr(std::min(pos, contents.size()))).empty()) {
    throw Error("embedding file: trailing data after " + std::to_string(shape[0]) + " rows");
  }
  return m;
}

std::filesystem::path embedding_sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".inputs";
  return p;
}

void save_embeddings(const std::filesystem::path& path, const MatrixF& rows, const std::vector<std::string>& inputs) {
  if (inputs.size() != static_cast<std::size_t>(rows.rows())) throw Error("save_embeddings: inputs not aligned");
  write_text_file(path, serialize_embeddings(rows));
  std::string side;
  for (const auto& s : inputs) {
    if (s.find('\n') != std::string::npos) throw Error("save_embeddings: input text contains a newline");
    side += s;
    side += '\n';
  }
  write_text_file(embedding_sidecar(path), side);
}

MatrixF load_embeddings(const std::filesystem::path& path) { return parse_embeddings(read_text_file(path)); }

}  // namespace dse
