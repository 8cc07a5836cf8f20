#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dse/encoder.hpp"
#include "dse/eval.hpp"
#include "dse/loss.hpp"
#include "dse/pairs.hpp"
#include "dse/trainer.hpp"

namespace dse {

enum class Provenance { Default, Preset, Env, ConfigFile, Flag };

std::string_view provenance_name(Provenance p);

/// Every tunable of a run as a flat key=value table. Layers apply in order
/// default < preset < env (DSE_SEED) < config file < flag; a later layer
/// overrides an earlier one.
class RunConfig {
 public:
  struct Entry {
    std::string value;
    Provenance source = Provenance::Default;
  };

  RunConfig();

  /// "paper" pins the published pre-training hyperparameters; "desk" is the default table.
  void apply_preset(std::string_view name);
  void apply_env();
  /// Config-file text: key=value per line, '#' starts a comment.
  void apply_file_text(std::string_view text);
  void set(const std::string& key, std::string value, Provenance source);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  Provenance source(const std::string& key) const;

  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  EncoderConfig encoder() const;
  LossConfig loss() const;
  TrainConfig train() const;
  PairBuildConfig pair_build() const;
  OOSConfig oos() const;

  /// Resolved table, one "key=value  # provenance" line per key. Feeding it
  /// back through apply_file_text reproduces every value.
  std::string to_text() const;

  /// Keys registered by default (everything except run-specific paths).
  static const std::vector<std::string>& known_keys();

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace dse
