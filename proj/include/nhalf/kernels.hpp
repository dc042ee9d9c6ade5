#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "nhalf/counters.hpp"
#include "nhalf/error.hpp"
#include "nhalf/tensor.hpp"

namespace nhalf {

// Sum of x_i * w_i over +/-1 semantics: n - 2 * popcount(x ^ w). Bits beyond
// n in the final word are masked out.
inline std::int32_t xnor_dot(std::span<const BitTensor::Word> x,
                             std::span<const BitTensor::Word> w, std::size_t n,
                             OpCounters* counters = nullptr) {
  const std::size_t words = (n + BitTensor::kWordBits - 1) / BitTensor::kWordBits;
  if (x.size() < words || w.size() < words || x.size() != w.size())
    throw ShapeError("xnor_dot length mismatch");
  if (words == 0) return 0;
  std::int64_t mismatches = 0;
  for (std::size_t i = 0; i + 1 < words; ++i) mismatches += std::popcount(x[i] ^ w[i]);
  const std::size_t rem = n % BitTensor::kWordBits;
  const BitTensor::Word mask = rem == 0 ? ~BitTensor::Word{0} : (BitTensor::Word{1} << rem) - 1;
  mismatches += std::popcount((x[words - 1] ^ w[words - 1]) & mask);
  if (counters) {
    counters->xnor_words += words;
    counters->popcounts += words;
    counters->int_adds += words + 1;
  }
  return static_cast<std::int32_t>(static_cast<std::int64_t>(n) - 2 * mismatches);
}

inline std::int32_t xnor_dot(const BitTensor& x, const BitTensor& w,
                             OpCounters* counters = nullptr) {
  if (x.size() != w.size()) throw ShapeError("xnor_dot length mismatch");
  if (x.rows() != 1 || w.rows() != 1) throw ShapeError("xnor_dot expects single rows");
  return xnor_dot(x.row(0), w.row(0), x.size(), counters);
}

// Weights viewed as [out_channels, taps] with each output row word-aligned.
inline BitTensor as_weight_matrix(const BitTensor& weights) {
  const auto& s = weights.shape();
  if (s.rank() < 2) throw ShapeError("weights must be at least rank 2, got " + s.str());
  if (s.rank() == 2) return weights;
  return weights.reshaped(Shape{s[0], s.numel() / s[0]});
}

// Entry (r, o) = xnor_dot(patch row r, weight row o).
inline IntTensor binary_gemm(const PatchMatrix& a, const BitTensor& b,
                             OpCounters* counters = nullptr) {
  const BitTensor wm = as_weight_matrix(b);
  const std::size_t out = wm.shape()[0];
  const std::size_t taps = wm.shape()[1];
  if (a.cols != taps)
    throw ShapeError("inner dimension mismatch: patch cols " + std::to_string(a.cols) +
                     " vs weight taps " + std::to_string(taps));
  std::vector<std::int32_t> acc(a.rows * out);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const auto row = a.data.row(r);
    for (std::size_t o = 0; o < out; ++o)
      acc[r * out + o] = xnor_dot(row, wm.row(o), taps, counters);
  }
  return IntTensor(Shape{a.rows, out}, std::move(acc),
                   signed_width(static_cast<std::int64_t>(taps)));
}

// Binary convolution via im2col + binary_gemm. Output is
// out_channels x out_h x out_w for CxHxW input, out_channels x L for CxL.
inline IntTensor conv_binary(const BitTensor& input, const BitTensor& weights,
                             const KernelGeometry& g, OpCounters* counters = nullptr) {
  const std::size_t in_channels = detail::spatial_view(input).channels;
  const auto& ws = weights.shape();
  if (ws.rank() < 2 || ws.numel() / ws[0] != in_channels * g.volume())
    throw ShapeError("weights " + ws.str() + " do not match " + std::to_string(in_channels) +
                     " input channels with kernel volume " + std::to_string(g.volume()));
  const PatchMatrix pm = im2col(input, g);
  const IntTensor gemm = binary_gemm(pm, weights, counters);
  const std::size_t out = ws[0];

  std::vector<std::int32_t> chw(gemm.size());
  const auto src = gemm.values();
  for (std::size_t r = 0; r < pm.rows; ++r)
    for (std::size_t o = 0; o < out; ++o) chw[o * pm.rows + r] = src[r * out + o];

  Shape shape = input.shape().rank() == 3 ? Shape{out, pm.out_h, pm.out_w}
                                          : Shape{out, pm.out_w};
  return IntTensor(std::move(shape), std::move(chw), gemm.declared_bits());
}

struct PoolGeometry {
  std::size_t window_h = 1, window_w = 1;
  std::size_t stride_h = 1, stride_w = 1;

  static PoolGeometry square(std::size_t window, std::size_t stride) {
    return {window, window, stride, stride};
  }
  static PoolGeometry line(std::size_t window, std::size_t stride) {
    return {1, window, 1, stride};
  }
};

// Max pooling without padding over CxHxW (2-D window) or CxL (1-D window).
inline IntTensor maxpool(const IntTensor& input, const PoolGeometry& p,
                         OpCounters* counters = nullptr) {
  const auto& s = input.shape();
  std::size_t c, h, w;
  if (s.rank() == 3) {
    c = s[0]; h = s[1]; w = s[2];
  } else if (s.rank() == 2) {
    c = s[0]; h = 1; w = s[1];
    if (p.window_h != 1) throw ShapeError("1-D pooling needs window_h == 1");
  } else {
    throw ShapeError("maxpool input must be CxHxW or CxL, got " + s.str());
  }
  if (p.window_h > h || p.window_w > w)
    throw ShapeError("pool window larger than input " + s.str());
  const std::size_t oh = KernelGeometry::out_extent(h, p.window_h, p.stride_h, 0);
  const std::size_t ow = KernelGeometry::out_extent(w, p.window_w, p.stride_w, 0);

  const auto in = input.values();
  std::vector<std::int32_t> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::int32_t best = std::numeric_limits<std::int32_t>::min();
        for (std::size_t dy = 0; dy < p.window_h; ++dy)
          for (std::size_t dx = 0; dx < p.window_w; ++dx)
            best = std::max(best, in[(ch * h + y * p.stride_h + dy) * w + x * p.stride_w + dx]);
        out[(ch * oh + y) * ow + x] = best;
      }
    }
  }
  if (counters) counters->int_compares += out.size() * (p.window_h * p.window_w - 1);
  Shape shape = s.rank() == 3 ? Shape{c, oh, ow} : Shape{c, ow};
  return IntTensor(std::move(shape), std::move(out), input.declared_bits());
}

}  // namespace nhalf
