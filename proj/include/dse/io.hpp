#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dse/common.hpp"
#include "dse/eval.hpp"

namespace dse {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);

/// Non-empty lines of a text file, '\r' stripped.
std::vector<std::string> load_lines(const std::filesystem::path& path);

/// `text<TAB>label`; label names are assigned ids in first-appearance order.
/// When `oos_name` is non-empty, that label maps to kOosLabel instead.
LabeledSet parse_labeled(std::string_view contents, std::string_view oos_name = {});
LabeledSet load_labeled_file(const std::filesystem::path& path, std::string_view oos_name = {});

struct MultiLabelSet {
  std::vector<std::string> texts;
  std::vector<LabelBits> labels;
  std::vector<std::string> label_names;
};

/// `text<TAB>l1,l2,...`; an empty label field means no labels. When
/// `label_names` is given, the label space is fixed to it (unknown names are an error).
MultiLabelSet parse_multilabel(std::string_view contents, const std::vector<std::string>* label_names = nullptr);
MultiLabelSet load_multilabel_file(const std::filesystem::path& path,
                                   const std::vector<std::string>* label_names = nullptr);

/// `anchor<TAB>entailment<TAB>contradiction`.
std::vector<NliTriple> parse_nli(std::string_view contents);
std::vector<NliTriple> load_nli_file(const std::filesystem::path& path);

/// Header "<n> <dim>", then one row of space-separated shortest-round-trip floats per line.
std::string serialize_embeddings(const MatrixF& rows);
MatrixF parse_embeddings(std::string_view contents);

std::filesystem::path embedding_sidecar(const std::filesystem::path& path);
/// Writes the matrix and, line-aligned, the inputs to embedding_sidecar(path).
void save_embeddings(const std::filesystem::path& path, const MatrixF& rows, const std::vector<std::string>& inputs);
MatrixF load_embeddings(const std::filesystem::path& path);

}  // namespace dse
