#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "nhalf/activation.hpp"
#include "nhalf/config.hpp"
#include "nhalf/error.hpp"
#include "nhalf/io.hpp"

namespace nhalf {

struct BlockParams {
  std::vector<double> weights;  // latent weights laid out per BlockDescriptor::weight_dims
  ActivationParams act;         // unused for the HALF block

  bool operator==(const BlockParams&) const = default;
};

// Trained float parameters: the trainer -> compiler exchange object.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ArchitectureConfig config;
  std::vector<BlockParams> blocks;
  std::uint32_t format_version = kFormatVersion;

  void validate() const {
    config.validate();
    if (blocks.size() != config.blocks.size())
      throw ConfigError("checkpoint has " + std::to_string(blocks.size()) + " blocks, architecture has " +
                        std::to_string(config.blocks.size()));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& d = config.blocks[i];
      const auto& p = blocks[i];
      const std::string where = "block " + std::to_string(i + 1) + ": ";
      if (p.weights.size() != d.weight_count())
        throw ConfigError(where + "expected " + std::to_string(d.weight_count()) + " weights, got " +
                          std::to_string(p.weights.size()));
      for (double w : p.weights)
        if (!std::isfinite(w)) throw ConfigError(where + "non-finite latent weight");
      if (!d.has_activation()) continue;
      if (p.act.channels() != d.out_channels)
        throw ConfigError(where + "activation params cover " + std::to_string(p.act.channels()) +
                          " channels, block has " + std::to_string(d.out_channels));
      if (p.act.clip != config.clip) throw ConfigError(where + "clip differs from architecture clip");
      if (!(p.act.epsilon > 0.0)) throw ConfigError(where + "epsilon must be > 0");
      try {
        p.act.validate();
      } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
      }
    }
  }

  // Applies a new clip to the architecture and every block.
  void set_clip(int clip) {
    config.clip = clip;
    for (std::size_t i = 0; i < blocks.size(); ++i)
      if (config.blocks[i].has_activation()) blocks[i].act.clip = clip;
  }

  bool operator==(const Checkpoint&) const = default;
};

// ============================================================================
// NHB1 exchange file
// ============================================================================
//
//   "NHB1" | u32 header_len | header JSON (UTF-8) | f64 LE payload sections
//
// The header carries the architecture, clip, per-block epsilon and a tensor
// directory {name, shape, dtype, offset}; offsets are byte offsets from the
// start of the payload and sections appear in directory order.

inline constexpr char kCheckpointMagic[4] = {'N', 'H', 'B', '1'};

namespace detail {

struct TensorRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double>* target;
  bool broadcastable = false;  // PReLU slope may be a single value
};

inline std::vector<TensorRef> checkpoint_tensors(Checkpoint& ck) {
  std::vector<TensorRef> refs;
  for (std::size_t i = 0; i < ck.config.blocks.size(); ++i) {
    const auto& d = ck.config.blocks[i];
    auto& p = ck.blocks[i];
    const std::string prefix = "block" + std::to_string(i + 1) + ".";
    refs.push_back({prefix + "weight", d.weight_dims(), &p.weights});
    if (!d.has_activation()) continue;
    const std::vector<std::size_t> per_channel{d.out_channels};
    refs.push_back({prefix + "gamma", per_channel, &p.act.gamma});
    refs.push_back({prefix + "beta", per_channel, &p.act.beta});
    refs.push_back({prefix + "mu", per_channel, &p.act.mu});
    refs.push_back({prefix + "sigma_sq", per_channel, &p.act.sigma_sq});
    refs.push_back({prefix + "prelu_a", per_channel, &p.act.a, true});
  }
  return refs;
}

inline std::size_t product(const std::vector<std::size_t>& v) {
  std::size_t n = 1;
  for (auto d : v) n *= d;
  return n;
}

}  // namespace detail

inline Bytes serialize_checkpoint(const Checkpoint& ck_in) {
  ck_in.validate();
  Checkpoint ck = ck_in;
  nlohmann::json eps = nlohmann::json::array();
  for (std::size_t i = 0; i < ck.blocks.size(); ++i)
    eps.push_back(ck.config.blocks[i].has_activation() ? nlohmann::json(ck.blocks[i].act.epsilon)
                                                      : nlohmann::json(nullptr));
  nlohmann::json dir = nlohmann::json::array();
  std::size_t offset = 0;
  const auto refs = detail::checkpoint_tensors(ck);
  for (const auto& r : refs) {
    const std::vector<std::size_t> shape =
        r.broadcastable ? std::vector<std::size_t>{r.target->size()} : r.shape;
    dir.push_back({{"name", r.name}, {"shape", shape}, {"dtype", "f64"}, {"offset", offset}});
    offset += r.target->size() * sizeof(double);
  }
  const nlohmann::json header = {{"format_version", ck.format_version},
                                 {"architecture", to_json(ck.config)},
                                 {"clip", ck.config.clip},
                                 {"epsilon", eps},
                                 {"tensors", dir}};
  const std::string text = header.dump();

  ByteWriter w;
  w.raw(std::string(kCheckpointMagic, 4));
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  for (const auto& r : refs)
    for (double v : *r.target) w.f64(v);
  return w.take();
}

inline Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  const auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic))
    throw FormatError("not a checkpoint file (bad magic)");
  const std::uint32_t header_len = r.u32();
  const auto header_bytes = r.raw(header_len);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.format_version = header.at("format_version").get<std::uint32_t>();
    if (ck.format_version != Checkpoint::kFormatVersion)
      throw VersionError("unsupported checkpoint version " + std::to_string(ck.format_version));
    ck.config = config_from_json(header.at("architecture"));
    if (header.at("clip").get<int>() != ck.config.clip)
      throw FormatError("header clip differs from architecture clip");
    const auto& eps = header.at("epsilon");
    if (eps.size() != ck.config.blocks.size()) throw FormatError("epsilon list length mismatch");
    ck.blocks.resize(ck.config.blocks.size());
    for (std::size_t i = 0; i < ck.blocks.size(); ++i) {
      if (!ck.config.blocks[i].has_activation()) continue;
      ck.blocks[i].act.epsilon = eps.at(i).get<double>();
      ck.blocks[i].act.clip = ck.config.clip;
    }

    const auto& dir = header.at("tensors");
    std::size_t offset = 0;
    std::size_t index = 0;
    for (const auto& ref : detail::checkpoint_tensors(ck)) {
      if (index >= dir.size()) throw FormatError("tensor directory is missing " + ref.name);
      const auto& entry = dir.at(index++);
      if (entry.at("name").get<std::string>() != ref.name)
        throw FormatError("expected tensor " + ref.name + ", found " + entry.at("name").get<std::string>());
      if (entry.at("dtype").get<std::string>() != "f64") throw FormatError(ref.name + ": dtype must be f64");
      if (entry.at("offset").get<std::size_t>() != offset)
        throw FormatError(ref.name + ": payload sections out of directory order");
      auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (ref.broadcastable) {
        if (shape.size() != 1 || (shape[0] != 1 && shape[0] != ref.shape[0]))
          throw ConfigError(ref.name + ": slope shape must be [1] or [" + std::to_string(ref.shape[0]) + "]");
      } else if (shape != ref.shape) {
        throw ConfigError(ref.name + ": shape mismatch with architecture");
      }
      const std::size_t n = detail::product(shape);
      ref.target->resize(n);
      offset += n * sizeof(double);
    }
    if (index != dir.size()) throw FormatError("tensor directory has unexpected extra entries");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }

  for (const auto& ref : detail::checkpoint_tensors(ck))
    for (auto& v : *ref.target) v = r.f64();
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint payload");
  ck.validate();
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("checkpoint not found: " + path.string());
  return deserialize_checkpoint(read_file(path));
}

// ============================================================================
// Synthetic checkpoints
// ============================================================================

inline Checkpoint identity_checkpoint(const ArchitectureConfig& config, std::uint64_t seed = 0) {
  config.validate();
  Checkpoint ck;
  ck.config = config;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  for (const auto& d : config.blocks) {
    BlockParams p;
    p.weights.resize(d.weight_count());
    for (auto& v : p.weights) v = w(rng);
    if (d.has_activation()) {
      p.act = ActivationParams::identity(d.out_channels, config.clip);
      p.act.epsilon = kDefaultEpsilon;
    }
    ck.blocks.push_back(std::move(p));
  }
  return ck;
}

// Parameter ranges for random checkpoints. mu is drawn relative to the clip
// so thresholds land inside and outside the reachable range.
struct RandomCheckpointOptions {
  double gamma_min = 0.25, gamma_max = 2.0;
  double negative_gamma_fraction = 0.2;
  double beta_abs = 1.0;
  double mu_clip_fraction = 0.75;
  double sigma_sq_min = 0.5, sigma_sq_max = 64.0;
  double slope_min = -0.5, slope_max = 1.5;
  double epsilon = kDefaultEpsilon;
};

inline Checkpoint random_checkpoint(const ArchitectureConfig& config, std::uint64_t seed,
                                    const RandomCheckpointOptions& o = {}) {
  config.validate();
  Checkpoint ck;
  ck.config = config;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double mu_abs = o.mu_clip_fraction * config.clip;
  for (const auto& d : config.blocks) {
    BlockParams p;
    p.weights.resize(d.weight_count());
    for (auto& v : p.weights) v = uniform(-1.0, 1.0);
    if (d.has_activation()) {
      auto& a = p.act;
      a.clip = config.clip;
      a.epsilon = o.epsilon;
      for (std::size_t c = 0; c < d.out_channels; ++c) {
        const double g = uniform(o.gamma_min, o.gamma_max);
        a.gamma.push_back(unit(rng) < o.negative_gamma_fraction ? -g : g);
        a.beta.push_back(uniform(-o.beta_abs, o.beta_abs));
        a.mu.push_back(uniform(-mu_abs, mu_abs));
        a.sigma_sq.push_back(uniform(o.sigma_sq_min, o.sigma_sq_max));
        a.a.push_back(uniform(o.slope_min, o.slope_max));
      }
    }
    ck.blocks.push_back(std::move(p));
  }
  return ck;
}

}  // namespace nhalf
