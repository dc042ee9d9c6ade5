#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nhalf/activation.hpp"
#include "nhalf/config.hpp"
#include "nhalf/error.hpp"
#include "nhalf/tensor.hpp"

namespace nhalf {

// BatchNorm and PReLU folded into one piecewise-affine map of the pooled
// value x:  kx + b on [0, clip],  a*k*x + b on [-clip, 0),  C1 / C2 beyond.
struct ChannelAffine {
  double k = 1.0;
  double b = 0.0;
  double a = 1.0;
  int clip = kDefaultClip;
  double c1 = 0.0;
  double c2 = 0.0;
  std::optional<double> delta1;  // -b / k, absent when k == 0
  std::optional<double> delta2;  // -b / (a*k), absent when a*k == 0

  double slope_neg() const { return a * k; }

  // Affine value the reference path would produce at integer x.
  double value(std::int64_t x) const {
    if (x > clip) return c1;
    if (x < -clip) return c2;
    const double xd = static_cast<double>(x);
    return x >= 0 ? k * xd + b : a * k * xd + b;
  }
};

inline ChannelAffine fold_bn_prelu(const ActivationParams& p, std::size_t ch) {
  ChannelAffine c;
  const double std_dev = std::sqrt(p.sigma_sq.at(ch) + p.epsilon);
  c.k = p.gamma.at(ch) / std_dev;
  c.b = p.beta.at(ch) - p.mu.at(ch) * p.gamma.at(ch) / std_dev;
  c.a = p.slope(ch);
  c.clip = p.clip;
  const double clip = static_cast<double>(p.clip);
  c.c1 = clip * c.k + c.b;
  c.c2 = c.a * (-clip) * c.k + c.b;
  if (c.k != 0.0) c.delta1 = -c.b / c.k;
  if (c.a * c.k != 0.0) c.delta2 = -c.b / (c.a * c.k);
  return c;
}

// ============================================================================
// Integer decision rules
// ============================================================================

enum class RuleMode : std::uint8_t {
  GreaterEqual = 0,  // +1 iff x >= t
  LessEqual = 1,     // +1 iff x <= t
  ConstPlus = 2,
  ConstMinus = 3,
};

inline const char* to_string(RuleMode m) {
  switch (m) {
    case RuleMode::GreaterEqual: return "GE";
    case RuleMode::LessEqual: return "LE";
    case RuleMode::ConstPlus: return "CONST+1";
    case RuleMode::ConstMinus: return "CONST-1";
  }
  return "?";
}

// Integer-only replacement for hardtanh -> prelu -> batchnorm -> sign of one
// output channel. Holds no real-valued fields.
struct FusedChannelRule {
  std::int8_t s_hi = 1;   // decision for x > clip
  std::int8_t s_lo = -1;  // decision for x < -clip
  RuleMode pos_mode = RuleMode::GreaterEqual;
  std::int32_t t_pos = 0;  // in [0, clip + 1]
  RuleMode neg_mode = RuleMode::GreaterEqual;
  std::int32_t t_neg = 0;  // in [-(clip + 1), 0]
  std::int32_t clip = kDefaultClip;

  bool operator==(const FusedChannelRule&) const = default;
};

namespace detail {

inline std::int32_t clamp_threshold(double t, std::int32_t lo, std::int32_t hi) {
  if (t <= lo) return lo;
  if (t >= hi) return hi;
  return static_cast<std::int32_t>(t);
}

inline int apply_mode(RuleMode m, std::int32_t t, std::int64_t x) {
  switch (m) {
    case RuleMode::GreaterEqual: return x >= t ? 1 : -1;
    case RuleMode::LessEqual: return x <= t ? 1 : -1;
    case RuleMode::ConstPlus: return 1;
    case RuleMode::ConstMinus: return -1;
  }
  return -1;
}

inline RuleMode const_mode(double b) { return b >= 0.0 ? RuleMode::ConstPlus : RuleMode::ConstMinus; }

}  // namespace detail

inline FusedChannelRule derive_rule(const ChannelAffine& c) {
  if (c.clip < 1) throw CompileError("clip must be >= 1");
  FusedChannelRule r;
  r.clip = c.clip;
  r.s_hi = static_cast<std::int8_t>(sign(c.c1));
  r.s_lo = static_cast<std::int8_t>(sign(c.c2));
  const std::int32_t edge = c.clip + 1;

  // Positive branch, reachable x in [0, clip].
  if (c.k > 0.0) {
    r.pos_mode = RuleMode::GreaterEqual;
    r.t_pos = detail::clamp_threshold(std::ceil(*c.delta1), 0, edge);
  } else if (c.k < 0.0) {
    const double t = std::floor(*c.delta1);
    if (t < 0.0) {
      // x <= t is unsatisfiable on [0, clip]; LE cannot encode that within [0, clip + 1].
      r.pos_mode = RuleMode::ConstMinus;
      r.t_pos = 0;
    } else {
      r.pos_mode = RuleMode::LessEqual;
      r.t_pos = detail::clamp_threshold(t, 0, edge);
    }
  } else {
    r.pos_mode = detail::const_mode(c.b);
    r.t_pos = 0;
  }

  // Negative branch, reachable x in [-clip, -1]; the slope there is a*k.
  const double s = c.slope_neg();
  if (s > 0.0) {
    r.neg_mode = RuleMode::GreaterEqual;
    r.t_neg = detail::clamp_threshold(std::ceil(*c.delta2), -edge, 0);
  } else if (s < 0.0) {
    r.neg_mode = RuleMode::LessEqual;
    r.t_neg = detail::clamp_threshold(std::floor(*c.delta2), -edge, 0);
  } else {
    r.neg_mode = detail::const_mode(c.b);
    r.t_neg = 0;
  }
  return r;
}

inline int fused_decide(std::int64_t x, const FusedChannelRule& r) {
  if (x > r.clip) return r.s_hi;
  if (x < -r.clip) return r.s_lo;
  if (x >= 0) return detail::apply_mode(r.pos_mode, r.t_pos, x);
  return detail::apply_mode(r.neg_mode, r.t_neg, x);
}

// ============================================================================
// Boundary-tie diagnostics
// ============================================================================

inline constexpr double kTieMargin = 1e-6;

struct BoundaryTie {
  std::size_t block = 0;  // 1-based
  std::size_t channel = 0;
  std::int64_t x = 0;
  double value = 0.0;
};

// Reachable integers (including one step past each saturation edge) whose
// affine value lies within `margin` of zero; there the integer rule and the
// real-valued sign may legitimately disagree.
inline std::vector<BoundaryTie> find_boundary_ties(const ChannelAffine& c, std::size_t block,
                                                   std::size_t channel, double margin = kTieMargin) {
  std::vector<BoundaryTie> ties;
  for (std::int64_t x = -c.clip - 1; x <= c.clip + 1; ++x) {
    const double v = c.value(x);
    if (std::fabs(v) <= margin) ties.push_back({block, channel, x, v});
  }
  return ties;
}

// ============================================================================
// Bit-width analysis
// ============================================================================

struct BlockBitWidths {
  int accumulator_bits = 0;         // conv output, +/- taps
  int pooled_bits = 0;              // max pooling keeps the accumulator range
  int stored_activation_bits = 0;   // what must be buffered before the decision; 0 for HALF
  int threshold_bits = 0;           // covers every compiled threshold; 0 for HALF

  bool operator==(const BlockBitWidths&) const = default;
};

struct BitWidthReport {
  std::vector<BlockBitWidths> blocks;
  int score_bits = 0;  // per-class position sums of the HALF block
  bool clipping = true;
  std::uint64_t float_op_count = 0;

  int max_stored_activation_bits() const {
    int m = 0;
    for (const auto& b : blocks) m = std::max(m, b.stored_activation_bits);
    return m;
  }
  int max_threshold_bits() const {
    int m = 0;
    for (const auto& b : blocks) m = std::max(m, b.threshold_bits);
    return m;
  }

  bool operator==(const BitWidthReport&) const = default;
};

// With clipping, stored activations are HardTanh outputs in [-clip, clip] and
// thresholds are whatever derive_rule produced. Without it, both fall back to
// the worst case implied by the accumulator range.
inline BitWidthReport analyze_bitwidths(const ArchitectureConfig& config,
                                        const std::vector<std::vector<FusedChannelRule>>& rules,
                                        bool clipping = true, std::uint64_t float_op_count = 0) {
  const ShapePlan plan = infer_shapes(config);
  if (rules.size() != config.blocks.size()) throw CompileError("rule table / architecture block mismatch");
  BitWidthReport rep;
  rep.clipping = clipping;
  rep.float_op_count = float_op_count;
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const auto& d = config.blocks[i];
    BlockBitWidths bw;
    const auto taps = static_cast<std::int64_t>(d.taps());
    bw.accumulator_bits = signed_width(taps);
    bw.pooled_bits = bw.accumulator_bits;
    if (!d.has_activation()) {
      // Pooled outputs stream straight into the class sums (score_bits).
      bw.stored_activation_bits = 0;
      bw.threshold_bits = 0;
      rep.score_bits = signed_width(taps * static_cast<std::int64_t>(plan.score_positions));
    } else if (clipping) {
      bw.stored_activation_bits = signed_width(std::min<std::int64_t>(config.clip, taps));
      std::int64_t lo = 0, hi = 0;
      for (const auto& r : rules[i]) {
        if (r.pos_mode == RuleMode::GreaterEqual || r.pos_mode == RuleMode::LessEqual)
          hi = std::max<std::int64_t>(hi, r.t_pos), lo = std::min<std::int64_t>(lo, r.t_pos);
        if (r.neg_mode == RuleMode::GreaterEqual || r.neg_mode == RuleMode::LessEqual)
          hi = std::max<std::int64_t>(hi, r.t_neg), lo = std::min<std::int64_t>(lo, r.t_neg);
      }
      bw.threshold_bits = signed_width(lo, hi);
    } else {
      bw.stored_activation_bits = bw.pooled_bits;
      bw.threshold_bits = signed_width(taps + 1);
    }
    rep.blocks.push_back(bw);
  }
  return rep;
}

inline nlohmann::json to_json(const BitWidthReport& r) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : r.blocks)
    blocks.push_back({{"accumulator_bits", b.accumulator_bits},
                      {"pooled_bits", b.pooled_bits},
                      {"stored_activation_bits", b.stored_activation_bits},
                      {"threshold_bits", b.threshold_bits}});
  return {{"blocks", blocks},
          {"score_bits", r.score_bits},
          {"clipping", r.clipping},
          {"float_op_count", r.float_op_count}};
}

inline BitWidthReport bitwidth_report_from_json(const nlohmann::json& j) {
  BitWidthReport r;
  for (const auto& b : j.at("blocks"))
    r.blocks.push_back({b.at("accumulator_bits").get<int>(), b.at("pooled_bits").get<int>(),
                        b.at("stored_activation_bits").get<int>(), b.at("threshold_bits").get<int>()});
  r.score_bits = j.at("score_bits").get<int>();
  r.clipping = j.at("clipping").get<bool>();
  r.float_op_count = j.at("float_op_count").get<std::uint64_t>();
  return r;
}

}  // namespace nhalf
