#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dse/encoder.hpp"
#include "dse/loss.hpp"
#include "dse/pairs.hpp"

namespace dse {

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 15;
  double lr_head = 3e-4;
  double lr_backbone = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t dropout_seed = 0;
  bool same_dialogue_exclusion = false;
  bool keep_partial_batches = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Canonical key=value rendering of a TrainConfig and its FNV-1a-64 digest.
std::string train_config_text(const TrainConfig& cfg);
std::uint64_t train_config_digest(const TrainConfig& cfg);

template <typename T>
struct AdamState {
  ParamSet<T> m;
  ParamSet<T> v;
  std::uint64_t step = 0;

  static AdamState zeros(const EncoderConfig& cfg) { return {ParamSet<T>::zeros(cfg), ParamSet<T>::zeros(cfg), 0}; }
  bool operator==(const AdamState&) const = default;
};

/// Index lists into `pairs`, one per batch. Shuffled by (shuffle_seed, epoch);
/// a trailing batch of one pair is always dropped, other partial batches only
/// when keep_partial_batches is false.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<TrainPair>& pairs, const TrainConfig& cfg,
                                                   std::size_t epoch);

/// One bias-corrected Adam update. E uses lr_backbone; the head uses lr_head.
template <typename T>
void adam_step(EncoderModel<T>& model, const Gradients<T>& grads, AdamState<T>& state, const TrainConfig& cfg);

struct Checkpoint {
  EncoderModel<float> model;
  AdamState<float> adam;
  LossConfig loss;
  TrainConfig train;
  std::uint64_t epoch = 0;

  bool operator==(const Checkpoint&) const = default;
};

/// Binary checkpoint: "DSECKPT1\n", key=value header ended by a blank line,
/// little-endian float32 arrays (E, W1, b1, W2, b2, then m and v in the same
/// order), then two little-endian uint64: byte length and FNV-1a-64 of
/// everything before the footer.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::string_view kCheckpointMagic = "DSECKPT1\n";

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;
  double mean_loss = 0.0;
  double first_batch_loss = 0.0;
};

struct TrainHooks {
  /// Fires once after the last step of every epoch.
  std::function<void(const Checkpoint&, const EpochStats&)> on_epoch_end;
  /// Fires after every optimizer step with (epoch, step-in-epoch, loss).
  std::function<void(std::size_t, std::size_t, double)> on_step;
};

struct TrainResult {
  Checkpoint final;
  std::vector<EpochStats> epochs;
};

TrainResult train(const std::vector<TrainPair>& pairs, const EncoderConfig& encoder_cfg, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg, const TrainHooks& hooks = {});

}  // namespace dse
