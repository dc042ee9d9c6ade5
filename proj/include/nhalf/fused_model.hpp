#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nhalf/config.hpp"
#include "nhalf/error.hpp"
#include "nhalf/fusion.hpp"
#include "nhalf/io.hpp"
#include "nhalf/tensor.hpp"

namespace nhalf {

struct FusedBlock {
  BitTensor weights;                    // out_channels x taps, sign of latent weights
  std::vector<FusedChannelRule> rules;  // one per output channel; empty for HALF

  bool operator==(const FusedBlock&) const = default;
};

// Deployable artifact. Everything in it is an integer or a bit.
struct FusedModel {
  static constexpr std::uint16_t kFormatVersion = 1;

  ArchitectureConfig config;
  ShapePlan plan;
  std::vector<FusedBlock> blocks;
  BitWidthReport bitwidths;
  std::uint16_t format_version = kFormatVersion;

  std::uint64_t weight_bits() const {
    std::uint64_t n = 0;
    for (const auto& b : blocks) n += b.weights.size();
    return n;
  }

  std::vector<std::vector<FusedChannelRule>> rule_table() const {
    std::vector<std::vector<FusedChannelRule>> t;
    for (const auto& b : blocks) t.push_back(b.rules);
    return t;
  }

  bool operator==(const FusedModel&) const = default;
};

// ============================================================================
// NHF1 fused model file
// ============================================================================
//
//   "NHF1" | u16 version | u32 header_len | header JSON
//   per block: weight rows as u64 LE words (each row padded to 64 bits)
//              per channel (non-HALF): u8 pos_mode, u8 neg_mode,
//                                      i16 t_pos, i16 t_neg, i8 s_hi, i8 s_lo
//   u32 CRC32 of every preceding byte

inline constexpr char kFusedMagic[4] = {'N', 'H', 'F', '1'};
inline constexpr std::size_t kRuleRecordBytes = 8;

inline Bytes serialize_fused(const FusedModel& m) {
  const nlohmann::json header = {{"architecture", to_json(m.config)},
                                 {"shape_plan", to_json(m.plan)},
                                 {"bitwidth_report", to_json(m.bitwidths)}};
  const std::string text = header.dump();
  ByteWriter w;
  w.raw(std::string(kFusedMagic, 4));
  w.u16(m.format_version);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  for (const auto& b : m.blocks) {
    for (auto word : b.weights.words()) w.u64(word);
    for (const auto& r : b.rules) {
      if (r.t_pos < INT16_MIN || r.t_pos > INT16_MAX || r.t_neg < INT16_MIN || r.t_neg > INT16_MAX)
        throw CompileError("threshold does not fit 16 bits");
      w.u8(static_cast<std::uint8_t>(r.pos_mode));
      w.u8(static_cast<std::uint8_t>(r.neg_mode));
      w.i16(static_cast<std::int16_t>(r.t_pos));
      w.i16(static_cast<std::int16_t>(r.t_neg));
      w.i8(r.s_hi);
      w.i8(r.s_lo);
    }
  }
  w.u32(crc32_of(w.bytes()));
  return w.take();
}

namespace detail {

inline std::size_t fused_payload_bytes(const ArchitectureConfig& c) {
  std::size_t n = 0;
  for (const auto& d : c.blocks) {
    n += d.out_channels * ((d.taps() + 63) / 64) * 8;
    if (d.has_activation()) n += d.out_channels * kRuleRecordBytes;
  }
  return n;
}

inline RuleMode rule_mode_from_byte(std::uint8_t v) {
  if (v > 3) throw FormatError("invalid rule mode byte " + std::to_string(v));
  return static_cast<RuleMode>(v);
}

}  // namespace detail

inline FusedModel deserialize_fused(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  const auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kFusedMagic))
    throw FormatError("not a fused model file (bad magic)");
  FusedModel m;
  m.format_version = r.u16();
  if (m.format_version != FusedModel::kFormatVersion)
    throw VersionError("unsupported fused model version " + std::to_string(m.format_version));
  const std::uint32_t header_len = r.u32();
  const auto header_bytes = r.raw(header_len);

  nlohmann::json header;
  bool header_ok = true;
  try {
    header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
    m.config = config_from_json(header.at("architecture"));
  } catch (const std::exception&) {
    header_ok = false;
  }

  const std::size_t body_end = data.size() >= 4 ? data.size() - 4 : 0;
  const std::uint32_t stored_crc = data.size() >= 4
      ? static_cast<std::uint32_t>(data[body_end]) | static_cast<std::uint32_t>(data[body_end + 1]) << 8 |
            static_cast<std::uint32_t>(data[body_end + 2]) << 16 | static_cast<std::uint32_t>(data[body_end + 3]) << 24
      : 0;
  const bool crc_ok = crc32_of(data.first(body_end)) == stored_crc;

  if (header_ok) {
    const std::size_t expected = r.position() + detail::fused_payload_bytes(m.config) + 4;
    if (data.size() < expected) throw TruncatedError("fused model file is truncated");
    if (!crc_ok) throw ChecksumError("fused model CRC32 mismatch");
    if (data.size() > expected) throw FormatError("trailing bytes after fused model");
  } else {
    if (!crc_ok) throw ChecksumError("fused model CRC32 mismatch");
    throw FormatError("fused model header is malformed");
  }

  try {
    m.plan = infer_shapes(m.config);
    if (to_json(m.plan) != header.at("shape_plan")) throw FormatError("stored shape plan does not match architecture");
    m.bitwidths = bitwidth_report_from_json(header.at("bitwidth_report"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed fused model header: ") + e.what());
  }

  for (const auto& d : m.config.blocks) {
    FusedBlock b;
    const Shape shape{d.out_channels, d.taps()};
    std::vector<BitTensor::Word> words(d.out_channels * ((d.taps() + 63) / 64));
    for (auto& word : words) word = r.u64();
    b.weights = BitTensor(shape, std::move(words));
    if (d.has_activation()) {
      for (std::size_t c = 0; c < d.out_channels; ++c) {
        FusedChannelRule rule;
        rule.clip = m.config.clip;
        rule.pos_mode = detail::rule_mode_from_byte(r.u8());
        rule.neg_mode = detail::rule_mode_from_byte(r.u8());
        rule.t_pos = r.i16();
        rule.t_neg = r.i16();
        rule.s_hi = r.i8();
        rule.s_lo = r.i8();
        if ((rule.s_hi != 1 && rule.s_hi != -1) || (rule.s_lo != 1 && rule.s_lo != -1))
          throw FormatError("saturation output must be +1 or -1");
        b.rules.push_back(rule);
      }
    }
    m.blocks.push_back(std::move(b));
  }
  return m;
}

inline void save_fused(const FusedModel& m, const std::filesystem::path& path) {
  write_file(path, serialize_fused(m));
}

inline FusedModel load_fused(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("model not found: " + path.string());
  return deserialize_fused(read_file(path));
}

// ============================================================================
// Storage accounting
// ============================================================================

struct StorageReport {
  std::uint64_t params = 0;
  double binary_bytes = 0;      // one bit per weight
  double binary_kb = 0;         // binary_bytes / 1024
  double float32_bytes = 0;
  double int8_bytes = 0;
  double float32_ratio = 0;
  double int8_ratio = 0;

  std::uint64_t threshold_entries = 0;  // two per non-HALF channel
  int threshold_bits = 0;               // provable minimum at this clip
  double threshold_bytes_min = 0;
  double threshold_bytes_stored = 0;    // 16-bit file encoding

  std::uint64_t intermediate_elements = 0;  // pooled outputs of non-HALF blocks
  int intermediate_bits_clipped = 0;
  int intermediate_bits_unclipped = 0;
  double intermediate_bytes_clipped = 0;
  double intermediate_bytes_unclipped = 0;
  double intermediate_ratio = 0;
};

// Unclipped intermediates are accounted at 15 bits, the width observed for
// the loose pre-HardTanh distribution.
inline constexpr int kUnclippedIntermediateBits = 15;

inline StorageReport storage_report(std::uint64_t params, int clip,
                                    int unclipped_bits = kUnclippedIntermediateBits) {
  StorageReport s;
  s.params = params;
  s.binary_bytes = static_cast<double>(params) / 8.0;
  s.binary_kb = s.binary_bytes / 1024.0;
  s.float32_bytes = static_cast<double>(params) * 4.0;
  s.int8_bytes = static_cast<double>(params);
  s.float32_ratio = params ? s.float32_bytes / s.binary_bytes : 0.0;
  s.int8_ratio = params ? s.int8_bytes / s.binary_bytes : 0.0;
  s.threshold_bits = signed_width(clip + 1);
  s.intermediate_bits_clipped = signed_width(clip);
  s.intermediate_bits_unclipped = unclipped_bits;
  s.intermediate_ratio =
      static_cast<double>(s.intermediate_bits_unclipped) / static_cast<double>(s.intermediate_bits_clipped);
  return s;
}

inline StorageReport storage_report(const ArchitectureConfig& config, int clip,
                                    int unclipped_bits = kUnclippedIntermediateBits) {
  StorageReport s = storage_report(count_params(config).total, clip, unclipped_bits);
  const ShapePlan plan = infer_shapes(config);
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    if (!config.blocks[i].has_activation()) continue;
    s.threshold_entries += 2 * config.blocks[i].out_channels;
    s.intermediate_elements += plan.blocks[i].pool_output.numel();
  }
  s.threshold_bytes_min = static_cast<double>(s.threshold_entries * s.threshold_bits) / 8.0;
  s.threshold_bytes_stored = static_cast<double>(s.threshold_entries) * 2.0;
  s.intermediate_bytes_clipped = static_cast<double>(s.intermediate_elements * s.intermediate_bits_clipped) / 8.0;
  s.intermediate_bytes_unclipped =
      static_cast<double>(s.intermediate_elements * s.intermediate_bits_unclipped) / 8.0;
  return s;
}

}  // namespace nhalf
