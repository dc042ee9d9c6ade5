#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nhalf/checkpoint.hpp"
#include "nhalf/engine.hpp"
#include "nhalf/fused_model.hpp"
#include "nhalf/fusion.hpp"

namespace nhalf {

struct CompileOptions {
  std::optional<int> clip;  // overrides the checkpoint's clip
  double tie_margin = kTieMargin;
};

struct CompileDiagnostics {
  std::vector<BoundaryTie> ties;
  std::vector<std::string> warnings;
};

// Clips below this lose most of the pooled-value range.
inline constexpr int kSmallClipWarning = 16;

// Checkpoint -> deployable integer model. Weights become sign bits, every
// activated block's BatchNorm/PReLU/HardTanh/Sign chain becomes one integer
// rule per channel. Deterministic for a given checkpoint and options.
inline FusedModel compile(const Checkpoint& checkpoint, const CompileOptions& opts = {},
                          CompileDiagnostics* diag = nullptr) {
  Checkpoint ck = checkpoint;
  if (opts.clip) {
    if (*opts.clip < 1) throw CompileError("clip must be >= 1");
    ck.set_clip(*opts.clip);
  }
  try {
    ck.validate();
  } catch (const Error& e) {
    throw CompileError(e.what());
  }

  FusedModel m;
  m.config = ck.config;
  m.plan = infer_shapes(ck.config);
  for (std::size_t i = 0; i < ck.config.blocks.size(); ++i) {
    const auto& d = ck.config.blocks[i];
    const auto& p = ck.blocks[i];
    FusedBlock fb;
    fb.weights = BitTensor(Shape{d.out_channels, d.taps()});
    for (std::size_t j = 0; j < p.weights.size(); ++j)
      if (sign(p.weights[j]) > 0) fb.weights.set(j, 1);
    if (d.has_activation()) {
      for (std::size_t c = 0; c < d.out_channels; ++c) {
        const ChannelAffine affine = fold_bn_prelu(p.act, c);
        fb.rules.push_back(derive_rule(affine));
        if (diag) {
          auto ties = find_boundary_ties(affine, i + 1, c, opts.tie_margin);
          diag->ties.insert(diag->ties.end(), ties.begin(), ties.end());
        }
      }
    }
    m.blocks.push_back(std::move(fb));
  }

  // Probe run to read the float-op tally of the compiled path.
  OpCounters probe;
  forward_fused(m, blank_input(m), &probe);
  m.bitwidths = analyze_bitwidths(m.config, m.rule_table(), true, probe.float_ops);

  if (diag && m.config.clip < kSmallClipWarning)
    diag->warnings.push_back("clip " + std::to_string(m.config.clip) +
                             " is small; accuracy degrades sharply below 16 (31 is the default)");
  return m;
}

}  // namespace nhalf
