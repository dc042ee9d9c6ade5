#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "nhalf/checkpoint.hpp"
#include "nhalf/engine.hpp"
#include "nhalf/fused_model.hpp"
#include "nhalf/fusion.hpp"

namespace nhalf {

// Unit-width integer bins: bin b covers [b, b + 1).
struct Histogram {
  std::string series;
  std::map<std::int64_t, std::uint64_t> bins;

  void add(double v) {
    constexpr double kLimit = 9007199254740992.0;  // 2^53
    bins[static_cast<std::int64_t>(std::floor(std::clamp(v, -kLimit, kLimit)))]++;
  }
  void add(std::int64_t v) { bins[v]++; }

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& [_, c] : bins) n += c;
    return n;
  }
  std::int64_t min_bin() const { return bins.empty() ? 0 : bins.begin()->first; }
  std::int64_t max_bin() const { return bins.empty() ? 0 : bins.rbegin()->first; }
};

struct DistributionStats {
  std::vector<Histogram> series;

  const Histogram* find(const std::string& name) const {
    for (const auto& h : series)
      if (h.series == name) return &h;
    return nullptr;
  }
};

// Pooled outputs per block before and after clamping (from fused runs over
// `samples`), compiled thresholds, and raw real-valued deltas read straight
// from the checkpoint.
inline DistributionStats distribution_stats(const FusedModel& model, const Checkpoint& checkpoint,
                                            const std::vector<BitTensor>& samples) {
  DistributionStats out;
  const auto& cfg = model.config;
  std::vector<Histogram> raw(cfg.blocks.size()), clipped(cfg.blocks.size());
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    raw[i].series = "pool_raw_block" + std::to_string(i + 1);
    clipped[i].series = "pool_clipped_block" + std::to_string(i + 1);
  }
  for (const auto& s : samples) {
    FusedTrace trace;
    forward_fused(model, s, nullptr, &trace);
    for (std::size_t i = 0; i < trace.blocks.size(); ++i) {
      const auto& b = trace.blocks[i];
      for (auto v : b.pooled.values()) raw[i].add(std::int64_t{v});
      if (cfg.blocks[i].has_activation())
        for (auto v : b.staged.values()) clipped[i].add(std::int64_t{v});
    }
  }
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    out.series.push_back(std::move(raw[i]));
    if (cfg.blocks[i].has_activation()) out.series.push_back(std::move(clipped[i]));
  }

  Histogram thresholds{"threshold", {}};
  for (const auto& b : model.blocks) {
    for (const auto& r : b.rules) {
      if (r.pos_mode == RuleMode::GreaterEqual || r.pos_mode == RuleMode::LessEqual)
        thresholds.add(std::int64_t{r.t_pos});
      if (r.neg_mode == RuleMode::GreaterEqual || r.neg_mode == RuleMode::LessEqual)
        thresholds.add(std::int64_t{r.t_neg});
    }
  }
  out.series.push_back(std::move(thresholds));

  Histogram deltas{"delta_raw", {}};
  for (std::size_t i = 0; i < checkpoint.blocks.size(); ++i) {
    if (!checkpoint.config.blocks[i].has_activation()) continue;
    const auto& act = checkpoint.blocks[i].act;
    for (std::size_t c = 0; c < act.channels(); ++c) {
      const auto affine = fold_bn_prelu(act, c);
      if (affine.delta1) deltas.add(*affine.delta1);
      if (affine.delta2) deltas.add(*affine.delta2);
    }
  }
  out.series.push_back(std::move(deltas));
  return out;
}

inline void write_stats_csv(std::ostream& os, const DistributionStats& stats) {
  os << "series,bin_lo,bin_hi,count\n";
  for (const auto& h : stats.series)
    for (const auto& [bin, count] : h.bins) os << h.series << ',' << bin << ',' << bin + 1 << ',' << count << '\n';
}

}  // namespace nhalf
