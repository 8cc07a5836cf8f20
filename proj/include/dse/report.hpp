#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace dse {

/// Named metric values for one evaluation run.
struct EvalReport {
  std::string task;
  std::map<std::string, double> metrics;
  std::map<std::string, std::size_t> sizes;
  std::uint64_t seed = 0;

  /// Flat key=value lines: task=..., seed=..., metric.<name>=..., size.<name>=...
  std::string to_text() const;
  std::string to_json() const;
  static EvalReport from_text(std::string_view text);
  static EvalReport from_json(std::string_view json);

  bool operator==(const EvalReport&) const = default;
};

}  // namespace dse
