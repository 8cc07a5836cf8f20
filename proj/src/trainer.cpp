#include "dse/trainer.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace dse {

void TrainConfig::validate() const {
  if (batch_size < 2) throw Error("train: batch_size must be >= 2");
  if (epochs < 1) throw Error("train: epochs must be >= 1");
  if (!(lr_head > 0.0)) throw Error("train: lr_head must be > 0");
  if (!(lr_backbone > 0.0)) throw Error("train: lr_backbone must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw Error("train: beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw Error("train: beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw Error("train: adam_eps must be > 0");
}

std::string train_config_text(const TrainConfig& c) {
  std::string s;
  auto kv = [&s](std::string_view k, const std::string& v) {
    s += k;
    s += '=';
    s += v;
    s += '\n';
  };
  kv("batch_size", std::to_string(c.batch_size));
  kv("epochs", std::to_string(c.epochs));
  kv("lr_head", format_double(c.lr_head));
  kv("lr_backbone", format_double(c.lr_backbone));
  kv("beta1", format_double(c.beta1));
  kv("beta2", format_double(c.beta2));
  kv("adam_eps", format_double(c.adam_eps));
  kv("init_seed", std::to_string(c.init_seed));
  kv("shuffle_seed", std::to_string(c.shuffle_seed));
  kv("dropout_seed", std::to_string(c.dropout_seed));
  kv("same_dialogue_exclusion", c.same_dialogue_exclusion ? "true" : "false");
  kv("keep_partial_batches", c.keep_partial_batches ? "true" : "false");
  return s;
}

std::uint64_t train_config_digest(const TrainConfig& cfg) { return fnv1a64(train_config_text(cfg)); }

std::vector<std::vector<std::size_t>> make_batches(const std::vector<TrainPair>& pairs, const TrainConfig& cfg,
                                                   std::size_t epoch) {
  cfg.validate();
  if (pairs.size() < 2) throw Error("make_batches: need at least 2 pairs, got " + std::to_string(pairs.size()));

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(cfg.shuffle_seed, epoch));
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_index(i + 1)]);
  }

  const std::size_t m = cfg.batch_size;
  if (cfg.same_dialogue_exclusion) {
    // Single greedy pass: a pair clashing with its batch is swapped with the
    // first later pair whose dialogue is absent from that batch.
    std::set<std::string_view> in_batch;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i % m == 0) in_batch.clear();
      const std::string& id = pairs[order[i]].dialogue_id;
      if (!id.empty() && in_batch.count(id)) {
        for (std::size_t j = i + 1; j < order.size(); ++j) {
          const std::string& other = pairs[order[j]].dialogue_id;
          if (other.empty() || !in_batch.count(other)) {
            std::swap(order[i], order[j]);
            break;
          }
        }
      }
      const std::string& placed = pairs[order[i]].dialogue_id;
      if (!placed.empty()) in_batch.insert(placed);
    }
  }

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += m) {
    const std::size_t end = std::min(order.size(), start + m);
    const std::size_t size = end - start;
    if (size < 2) break;
    if (size < m && !cfg.keep_partial_batches) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

template <typename T>
void adam_step(EncoderModel<T>& model, const Gradients<T>& grads, AdamState<T>& state, const TrainConfig& cfg) {
  auto params = model.params.tensors();
  auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (g[k]->rows() != params[k]->rows() || g[k]->cols() != params[k]->cols() || m[k]->rows() != params[k]->rows() ||
        m[k]->cols() != params[k]->cols() || v[k]->rows() != params[k]->rows() ||
        v[k]->cols() != params[k]->cols()) {
      throw Error("adam_step: shape mismatch in parameter group " + std::string(ParamSet<T>::kNames[k]));
    }
    if (!g[k]->allFinite()) {
      throw Error("adam_step: non-finite gradient in parameter group " + std::string(ParamSet<T>::kNames[k]));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T eps = static_cast<T>(cfg.adam_eps);
  const T inv_c1 = static_cast<T>(1.0 / correction1);
  const T inv_c2 = static_cast<T>(1.0 / correction2);

  for (std::size_t k = 0; k < params.size(); ++k) {
    const T lr = static_cast<T>(k == 0 ? cfg.lr_backbone : cfg.lr_head);
    auto ga = g[k]->array();
    auto ma = m[k]->array();
    auto va = v[k]->array();
    ma = b1 * ma + (T(1) - b1) * ga;
    va = b2 * va + (T(1) - b2) * ga.square();
    params[k]->array() -= lr * (ma * inv_c1) / ((va * inv_c2).sqrt() + eps);
  }
}

template void adam_step<float>(EncoderModel<float>&, const Gradients<float>&, AdamState<float>&, const TrainConfig&);
template void adam_step<double>(EncoderModel<double>&, const Gradients<double>&, AdamState<double>&,
                                const TrainConfig&);

// ---------------------------------------------------------------------------
// Checkpoint persistence

namespace {

void append_u64(std::string& out, std::uint64_t x) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((x >> (8 * k)) & 0xffU));
}

std::uint64_t read_u64(std::string_view bytes, std::size_t at) {
  std::uint64_t x = 0;
  for (int k = 0; k < 8; ++k) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + k])) << (8 * k);
  return x;
}

void append_floats(std::string& out, const MatrixF& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(m.data()[i]);
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xffU));
  }
}

void read_floats(std::string_view bytes, std::size_t& at, MatrixF& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(k)])) << (8 * k);
    }
    m.data()[i] = std::bit_cast<float>(bits);
    at += 4;
  }
}

const std::string kFormat = "format DSECKPT1";

[[noreturn]] void fail(const std::string& what) { throw Error("checkpoint (" + kFormat + "): " + what); }

template <typename N>
N parse_number(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) fail("missing header field '" + key + "'");
  N value{};
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail("bad value for '" + key + "': " + s);
  return value;
}

bool parse_flag(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) fail("missing header field '" + key + "'");
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  fail("bad value for '" + key + "': " + it->second);
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& e = ckpt.model.config;
  std::string out(kCheckpointMagic);
  auto kv = [&out](std::string_view k, const std::string& v) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  };
  kv("vocab_size", std::to_string(e.vocab_size));
  kv("embed_dim", std::to_string(e.embed_dim));
  kv("head_hidden", std::to_string(e.head_hidden));
  kv("head_out", std::to_string(e.head_out));
  kv("dropout_rate", format_double(e.dropout_rate));
  kv("hash_seed", std::to_string(e.hash_seed));
  kv("temperature", format_double(ckpt.loss.temperature));
  kv("hard_negatives", ckpt.loss.hard_negatives ? "true" : "false");
  kv("positive_in_denominator", ckpt.loss.positive_in_denominator ? "true" : "false");
  kv("eps_norm", format_double(ckpt.loss.eps_norm));
  out += train_config_text(ckpt.train);
  kv("train_config_digest", std::to_string(train_config_digest(ckpt.train)));
  kv("epoch", std::to_string(ckpt.epoch));
  kv("adam_step", std::to_string(ckpt.adam.step));
  out += '\n';

  for (const auto* t : ckpt.model.params.tensors()) append_floats(out, *t);
  for (const auto* t : ckpt.adam.m.tensors()) append_floats(out, *t);
  for (const auto* t : ckpt.adam.v.tensors()) append_floats(out, *t);

  const std::uint64_t length = out.size();
  const std::uint64_t checksum = fnv1a64(out);
  append_u64(out, length);
  append_u64(out, checksum);
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  constexpr std::string_view family = "DSECKPT";
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    if (bytes.substr(0, family.size()) == family) {
      const auto nl = bytes.find('\n');
      fail("unsupported version '" + std::string(bytes.substr(0, std::min<std::size_t>(nl, 16))) + "'");
    }
    fail("bad magic, not a checkpoint file");
  }
  const std::size_t header_end = bytes.find("\n\n", kCheckpointMagic.size() - 1);
  if (header_end == std::string_view::npos) fail("truncated header");

  std::map<std::string, std::string> kv;
  std::string_view header = bytes.substr(kCheckpointMagic.size(), header_end + 1 - kCheckpointMagic.size());
  while (!header.empty()) {
    const auto nl = header.find('\n');
    std::string_view line = header.substr(0, nl);
    header.remove_prefix(nl + 1);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("malformed header line '" + std::string(line) + "'");
    kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
  }

  Checkpoint ckpt;
  EncoderConfig& e = ckpt.model.config;
  e.vocab_size = parse_number<std::size_t>(kv, "vocab_size");
  e.embed_dim = parse_number<std::size_t>(kv, "embed_dim");
  e.head_hidden = parse_number<std::size_t>(kv, "head_hidden");
  e.head_out = parse_number<std::size_t>(kv, "head_out");
  e.dropout_rate = parse_number<double>(kv, "dropout_rate");
  e.hash_seed = parse_number<std::uint64_t>(kv, "hash_seed");
  try {
    e.validate();
  } catch (const Error& err) {
    fail(err.what());
  }
  ckpt.loss.temperature = parse_number<double>(kv, "temperature");
  ckpt.loss.hard_negatives = parse_flag(kv, "hard_negatives");
  ckpt.loss.positive_in_denominator = parse_flag(kv, "positive_in_denominator");
  ckpt.loss.eps_norm = parse_number<double>(kv, "eps_norm");
  TrainConfig& t = ckpt.train;
  t.batch_size = parse_number<std::size_t>(kv, "batch_size");
  t.epochs = parse_number<std::size_t>(kv, "epochs");
  t.lr_head = parse_number<double>(kv, "lr_head");
  t.lr_backbone = parse_number<double>(kv, "lr_backbone");
  t.beta1 = parse_number<double>(kv, "beta1");
  t.beta2 = parse_number<double>(kv, "beta2");
  t.adam_eps = parse_number<double>(kv, "adam_eps");
  t.init_seed = parse_number<std::uint64_t>(kv, "init_seed");
  t.shuffle_seed = parse_number<std::uint64_t>(kv, "shuffle_seed");
  t.dropout_seed = parse_number<std::uint64_t>(kv, "dropout_seed");
  t.same_dialogue_exclusion = parse_flag(kv, "same_dialogue_exclusion");
  t.keep_partial_batches = parse_flag(kv, "keep_partial_batches");
  if (parse_number<std::uint64_t>(kv, "train_config_digest") != train_config_digest(t)) {
    fail("train config digest mismatch");
  }
  ckpt.epoch = parse_number<std::uint64_t>(kv, "epoch");
  ckpt.adam.step = parse_number<std::uint64_t>(kv, "adam_step");

  ckpt.model.params = ParamSet<float>::zeros(e);
  ckpt.adam.m = ParamSet<float>::zeros(e);
  ckpt.adam.v = ParamSet<float>::zeros(e);
  std::size_t floats = 0;
  for (const auto* m : ckpt.model.params.tensors()) floats += static_cast<std::size_t>(m->size());
  const std::size_t body_start = header_end + 2;
  const std::size_t body_end = body_start + 3 * 4 * floats;
  if (bytes.size() < body_end + 16) fail("truncated file");
  if (bytes.size() > body_end + 16) fail("trailing bytes after footer");
  if (read_u64(bytes, body_end) != body_end) fail("length footer mismatch");
  if (read_u64(bytes, body_end + 8) != fnv1a64(bytes.substr(0, body_end))) fail("checksum mismatch");

  std::size_t at = body_start;
  for (auto* m : ckpt.model.params.tensors()) read_floats(bytes, at, *m);
  for (auto* m : ckpt.adam.m.tensors()) read_floats(bytes, at, *m);
  for (auto* m : ckpt.adam.v.tensors()) read_floats(bytes, at, *m);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

// ---------------------------------------------------------------------------

TrainResult train(const std::vector<TrainPair>& pairs, const EncoderConfig& encoder_cfg, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg, const TrainHooks& hooks) {
  encoder_cfg.validate();
  loss_cfg.validate();
  train_cfg.validate();
  if (pairs.size() < 2) throw Error("train: need at least 2 pairs, got " + std::to_string(pairs.size()));

  std::vector<TokenSeq> queries, responses;
  queries.reserve(pairs.size());
  responses.reserve(pairs.size());
  for (const auto& p : pairs) {
    queries.push_back(tokenize(p.query, encoder_cfg.vocab_size, encoder_cfg.hash_seed));
    responses.push_back(tokenize(p.response, encoder_cfg.vocab_size, encoder_cfg.hash_seed));
  }

  TrainResult result;
  Checkpoint& ckpt = result.final;
  ckpt.model = init_model<float>(encoder_cfg, train_cfg.init_seed);
  ckpt.adam = AdamState<float>::zeros(encoder_cfg);
  ckpt.loss = loss_cfg;
  ckpt.train = train_cfg;

  std::vector<TokenSeq> seqs;
  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    const auto batches = make_batches(pairs, train_cfg, epoch);
    EpochStats stats;
    stats.epoch = epoch;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      seqs.clear();
      for (auto i : batch) seqs.push_back(queries[i]);
      for (auto i : batch) seqs.push_back(responses[i]);
      const std::uint64_t mask_seed = mix_seed(mix_seed(train_cfg.dropout_seed, epoch), b);
      auto [emb, tape] = forward(ckpt.model, std::span<const TokenSeq>(seqs), View::Train,
                                 ForwardMode::TrainStochastic, mask_seed);
      const auto step = batch_loss_and_grad(ckpt.model, tape, emb.rows, loss_cfg);
      adam_step(ckpt.model, step.grads, ckpt.adam, train_cfg);
      if (b == 0) stats.first_batch_loss = step.loss;
      loss_sum += step.loss;
      ++stats.steps;
      if (hooks.on_step) hooks.on_step(epoch, b, step.loss);
    }
    stats.mean_loss = stats.steps ? loss_sum / static_cast<double>(stats.steps) : 0.0;
    ckpt.epoch = epoch;
    result.epochs.push_back(stats);
    if (hooks.on_epoch_end) hooks.on_epoch_end(ckpt, stats);
  }
  return result;
}

}  // namespace dse
