#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "nhalf/activation.hpp"
#include "nhalf/checkpoint.hpp"
#include "nhalf/config.hpp"
#include "nhalf/counters.hpp"
#include "nhalf/tensor.hpp"

namespace nhalf {

struct RealTensor {
  Shape shape;
  std::vector<double> values;
};

struct ReferenceBlockTrace {
  RealTensor conv;
  RealTensor pooled;
  RealTensor activated;     // after hardtanh -> prelu -> batchnorm; empty for HALF
  std::vector<int> binary;  // sign(activated); empty for HALF
};

struct ReferenceResult {
  std::vector<ReferenceBlockTrace> blocks;
  std::vector<double> scores;
  std::size_t predicted = 0;

  // Gap between the best and second-best class score.
  double top2_margin() const {
    if (scores.size() < 2) return std::numeric_limits<double>::infinity();
    std::vector<double> s = scores;
    std::partial_sort(s.begin(), s.begin() + 2, s.end(), std::greater<>{});
    return s[0] - s[1];
  }
};

namespace detail {

// Direct sliding-window convolution over +/-1 reals, -1 padding.
inline RealTensor reference_conv(const RealTensor& in, const std::vector<double>& weights,
                                 const BlockDescriptor& d, OpCounters* counters) {
  const bool two_d = in.shape.rank() == 3;
  const std::size_t c_in = in.shape[0];
  const std::size_t h = two_d ? in.shape[1] : 1;
  const std::size_t w = two_d ? in.shape[2] : in.shape[1];
  const auto g = d.conv_geometry();
  const std::size_t ph = h + 2 * g.pad_h, pw = w + 2 * g.pad_w;
  const std::size_t oh = KernelGeometry::out_extent(h, g.kernel_h, g.stride_h, g.pad_h);
  const std::size_t ow = KernelGeometry::out_extent(w, g.kernel_w, g.stride_w, g.pad_w);

  std::vector<double> padded(c_in * ph * pw, -1.0);
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(&in.values[(c * h + y) * w], w, &padded[(c * ph + y + g.pad_h) * pw + g.pad_w]);

  const std::size_t out_c = d.out_channels;
  std::vector<double> out(out_c * oh * ow, 0.0);
  for (std::size_t o = 0; o < out_c; ++o) {
    double* dst = &out[o * oh * ow];
    for (std::size_t c = 0; c < c_in; ++c) {
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const double wv =
              weights[((o * c_in + c) * g.kernel_h + ky) * g.kernel_w + kx] >= 0.0 ? 1.0 : -1.0;
          for (std::size_t y = 0; y < oh; ++y) {
            const double* src = &padded[(c * ph + y * g.stride_h + ky) * pw + kx];
            double* row = dst + y * ow;
            for (std::size_t x = 0; x < ow; ++x) row[x] += wv * src[x * g.stride_w];
          }
        }
      }
    }
  }
  if (counters) counters->float_ops += 2 * out.size() * d.taps();
  return {two_d ? Shape{out_c, oh, ow} : Shape{out_c, ow}, std::move(out)};
}

inline RealTensor reference_pool(const RealTensor& in, const BlockDescriptor& d, OpCounters* counters) {
  const bool two_d = in.shape.rank() == 3;
  const std::size_t c = in.shape[0];
  const std::size_t h = two_d ? in.shape[1] : 1;
  const std::size_t w = two_d ? in.shape[2] : in.shape[1];
  const auto p = d.pool_geometry();
  const std::size_t oh = KernelGeometry::out_extent(h, p.window_h, p.stride_h, 0);
  const std::size_t ow = KernelGeometry::out_extent(w, p.window_w, p.stride_w, 0);
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t dy = 0; dy < p.window_h; ++dy)
          for (std::size_t dx = 0; dx < p.window_w; ++dx)
            best = std::max(best, in.values[(ch * h + y * p.stride_h + dy) * w + x * p.stride_w + dx]);
        out[(ch * oh + y) * ow + x] = best;
      }
  if (counters) counters->float_ops += out.size() * (p.window_h * p.window_w - 1);
  return {two_d ? Shape{c, oh, ow} : Shape{c, ow}, std::move(out)};
}

}  // namespace detail

// Unfused double-precision forward pass:
//   blocks 1..N: conv -> maxpool -> hardtanh -> prelu -> batchnorm -> sign
//   HALF block:  conv -> maxpool -> per-class sum over positions
// `image` is the +/-1 input of shape 1 x H x W.
inline ReferenceResult reference_forward(std::span<const int> image, const Checkpoint& ck,
                                         OpCounters* counters = nullptr) {
  const auto& cfg = ck.config;
  if (ck.blocks.size() != cfg.blocks.size()) throw ConfigError("checkpoint/architecture block mismatch");
  if (image.size() != cfg.input_h * cfg.input_w)
    throw ConfigError("input has " + std::to_string(image.size()) + " elements, architecture expects " +
                      std::to_string(cfg.input_h * cfg.input_w));

  RealTensor x{Shape{1, cfg.input_h, cfg.input_w}, std::vector<double>(image.begin(), image.end())};
  ReferenceResult result;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& d = cfg.blocks[i];
    if (ck.blocks[i].weights.size() != d.weight_count())
      throw ConfigError("block " + std::to_string(i + 1) + ": weight count mismatch");
    if (!d.is_2d() && x.shape.rank() == 3) x.shape = Shape{x.shape[0], x.shape[1] * x.shape[2]};
    if (x.shape[0] != d.in_channels)
      throw ConfigError("block " + std::to_string(i + 1) + ": channel mismatch");

    ReferenceBlockTrace t;
    t.conv = detail::reference_conv(x, ck.blocks[i].weights, d, counters);
    t.pooled = detail::reference_pool(t.conv, d, counters);

    if (!d.has_activation()) {
      const std::size_t positions = t.pooled.values.size() / d.out_channels;
      result.scores.assign(d.out_channels, 0.0);
      for (std::size_t c = 0; c < d.out_channels; ++c)
        for (std::size_t j = 0; j < positions; ++j) result.scores[c] += t.pooled.values[c * positions + j];
      if (counters) counters->float_ops += t.pooled.values.size();
      result.blocks.push_back(std::move(t));
      break;
    }

    const auto& act = ck.blocks[i].act;
    const std::size_t per_channel = t.pooled.values.size() / d.out_channels;
    t.activated.shape = t.pooled.shape;
    t.activated.values.resize(t.pooled.values.size());
    t.binary.resize(t.pooled.values.size());
    for (std::size_t c = 0; c < d.out_channels; ++c) {
      for (std::size_t j = 0; j < per_channel; ++j) {
        const std::size_t idx = c * per_channel + j;
        const double v = batchnorm(prelu(hardtanh(t.pooled.values[idx], act.clip), act.slope(c)), act, c);
        t.activated.values[idx] = v;
        t.binary[idx] = sign(v);
      }
    }
    // hardtanh 2, prelu 2, batchnorm 5, sign 1
    if (counters) counters->float_ops += 10 * t.pooled.values.size();

    x = RealTensor{t.pooled.shape, std::vector<double>(t.binary.begin(), t.binary.end())};
    result.blocks.push_back(std::move(t));
  }

  result.predicted = static_cast<std::size_t>(
      std::max_element(result.scores.begin(), result.scores.end()) - result.scores.begin());
  return result;
}

inline ReferenceResult reference_forward(const BitTensor& image, const Checkpoint& ck,
                                         OpCounters* counters = nullptr) {
  const auto v = image.values();
  return reference_forward(std::span<const int>(v), ck, counters);
}

}  // namespace nhalf
