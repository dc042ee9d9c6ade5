#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

#include "nhalf/counters.hpp"
#include "nhalf/error.hpp"
#include "nhalf/fused_model.hpp"
#include "nhalf/fusion.hpp"
#include "nhalf/kernels.hpp"
#include "nhalf/tensor.hpp"

namespace nhalf {

struct ClassScores {
  std::vector<std::int32_t> scores;
  std::size_t predicted = 0;  // lowest index among the maximal scores
  int declared_bits = 0;

  // Class indices ordered by score (descending), ties by index.
  std::vector<std::size_t> ranking() const {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
  }
};

struct FusedBlockTrace {
  IntTensor pooled;  // raw pooled accumulators
  IntTensor staged;  // clamped to [-clip, clip]; empty for HALF
  BitTensor binary;  // decisions; empty for HALF
};

struct FusedTrace {
  std::vector<FusedBlockTrace> blocks;
};

// Integer-only forward pass. Per non-HALF block: binary conv, max pool, clamp
// to the clip range, per-channel threshold decision. The HALF block's pooled
// outputs are summed per class.
inline ClassScores forward_fused(const FusedModel& model, const BitTensor& input,
                                 OpCounters* counters = nullptr, FusedTrace* trace = nullptr) {
  const auto& cfg = model.config;
  if (model.blocks.size() != cfg.blocks.size() || model.plan.blocks.size() != cfg.blocks.size())
    throw ShapeError("fused model is inconsistent with its architecture");
  if (input.shape() != model.plan.blocks.front().input)
    throw ShapeError("input shape " + input.shape().str() + " does not match model input " +
                     model.plan.blocks.front().input.str());

  BitTensor x = input;
  ClassScores out;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& d = cfg.blocks[i];
    const auto& bp = model.plan.blocks[i];
    const auto& fb = model.blocks[i];
    if (bp.flatten_before) x = x.reshaped(bp.input);

    const IntTensor conv = conv_binary(x, fb.weights, d.conv_geometry(), counters);
    IntTensor pooled = maxpool(conv, d.pool_geometry(), counters);
    if (conv.shape() != bp.conv_output || pooled.shape() != bp.pool_output)
      throw ShapeError("block " + std::to_string(i + 1) + ": executed shape differs from plan");

    const std::size_t channels = d.out_channels;
    const std::size_t positions = pooled.size() / channels;
    const auto pv = pooled.values();

    if (!d.has_activation()) {
      out.scores.assign(channels, 0);
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t j = 0; j < positions; ++j) out.scores[c] += pv[c * positions + j];
      out.declared_bits =
          signed_width(static_cast<std::int64_t>(d.taps()) * static_cast<std::int64_t>(positions));
      if (counters) counters->int_adds += pooled.size();
      if (trace) trace->blocks.push_back({std::move(pooled), {}, {}});
      break;
    }

    const std::int32_t clip = cfg.clip;
    std::vector<std::int32_t> staged(pv.size());
    for (std::size_t j = 0; j < pv.size(); ++j) staged[j] = std::clamp(pv[j], -clip, clip);
    if (counters) counters->int_compares += 2 * staged.size();
    IntTensor staged_t(pooled.shape(), std::move(staged),
                       signed_width(std::min<std::int64_t>(clip, static_cast<std::int64_t>(d.taps()))));
    assert(staged_t.declared_bits() <= signed_width(clip));

    BitTensor next(pooled.shape());
    const auto sv = staged_t.values();
    for (std::size_t c = 0; c < channels; ++c) {
      const auto& rule = fb.rules[c];
      for (std::size_t j = 0; j < positions; ++j)
        if (fused_decide(sv[c * positions + j], rule) > 0) next.set(c * positions + j, 1);
    }
    if (counters) counters->int_compares += 3 * staged_t.size();
    assert(next.padding_clean());

    if (trace) trace->blocks.push_back({std::move(pooled), std::move(staged_t), next});
    x = std::move(next);
  }

  out.predicted = static_cast<std::size_t>(
      std::max_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
  if (counters) counters->int_compares += out.scores.size();
  return out;
}

inline BitTensor blank_input(const FusedModel& model) {
  return BitTensor(model.plan.blocks.front().input);
}

}  // namespace nhalf
