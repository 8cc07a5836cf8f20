#include "dse/report.hpp"

#include <charconv>

#include <nlohmann/json.hpp>

#include "dse/common.hpp"

namespace dse {

std::string EvalReport::to_text() const {
  std::string out = "task=" + task + "\nseed=" + std::to_string(seed) + "\n";
  for (const auto& [k, v] : metrics) out += "metric." + k + "=" + format_double(v) + "\n";
  for (const auto& [k, v] : sizes) out += "size." + k + "=" + std::to_string(v) + "\n";
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  j["seed"] = seed;
  j["metrics"] = nlohmann::json::object();
  for (const auto& [k, v] : metrics) j["metrics"][k] = v;
  j["sizes"] = nlohmann::json::object();
  for (const auto& [k, v] : sizes) j["sizes"][k] = v;
  return j.dump(2);
}

EvalReport EvalReport::from_text(std::string_view text) {
  EvalReport r;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error("report: malformed line '" + std::string(line) + "'");
    const std::string_view key = line.substr(0, eq);
    const std::string_view value = line.substr(eq + 1);
    auto parse = [&](auto& out) {
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
      if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw Error("report: bad value for '" + std::string(key) + "'");
      }
    };
    if (key == "task") {
      r.task = std::string(value);
    } else if (key == "seed") {
      parse(r.seed);
    } else if (key.starts_with("metric.")) {
      parse(r.metrics[std::string(key.substr(7))]);
    } else if (key.starts_with("size.")) {
      parse(r.sizes[std::string(key.substr(5))]);
    } else {
      throw Error("report: unknown key '" + std::string(key) + "'");
    }
  }
  return r;
}

EvalReport EvalReport::from_json(std::string_view json) {
  const auto j = nlohmann::json::parse(json);
  EvalReport r;
  r.task = j.at("task").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.get<double>();
  for (const auto& [k, v] : j.at("sizes").items()) r.sizes[k] = v.get<std::size_t>();
  return r;
}

}  // namespace dse
