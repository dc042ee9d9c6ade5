#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nhalf/error.hpp"

namespace nhalf {

// ============================================================================
// Shape
// ============================================================================

struct Shape {
  enum class Layout : std::uint8_t { RowMajor };

  std::vector<std::size_t> dims;
  Layout layout = Layout::RowMajor;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> d) : dims(d) { validate(); }
  explicit Shape(std::vector<std::size_t> d) : dims(std::move(d)) { validate(); }

  std::size_t rank() const { return dims.size(); }
  std::size_t operator[](std::size_t i) const { return dims.at(i); }

  std::size_t numel() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           std::multiplies<>{});
  }
  std::size_t inner() const { return dims.empty() ? 1 : dims.back(); }
  std::size_t outer() const { return dims.empty() ? 1 : numel() / inner(); }

  std::string str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(dims[i]);
    }
    return s + "]";
  }

  bool operator==(const Shape&) const = default;

 private:
  void validate() const {
    for (auto d : dims)
      if (d < 1) throw ShapeError("shape extent must be >= 1, got " + str());
  }
};

// Minimal signed two's-complement width holding every value in [lo, hi].
constexpr int signed_width(std::int64_t lo, std::int64_t hi) {
  int bits = 1;
  while (lo < -(std::int64_t{1} << (bits - 1)) ||
         hi > (std::int64_t{1} << (bits - 1)) - 1)
    ++bits;
  return bits;
}

// Width for the symmetric range [-bound, bound].
constexpr int signed_width(std::int64_t bound) {
  return signed_width(-bound, bound);
}

// ============================================================================
// BitTensor
// ============================================================================

// Bit-packed +/-1 tensor. +1 is bit 1, -1 is bit 0, LSB-first within each
// 64-bit word. Every run of the innermost dimension starts on a fresh word;
// the tail bits of the last word in a run are always 0.
class BitTensor {
 public:
  using Word = std::uint64_t;
  static constexpr std::size_t kWordBits = 64;

  BitTensor() = default;

  // All elements -1.
  explicit BitTensor(Shape shape)
      : shape_(std::move(shape)),
        words_per_row_((shape_.inner() + kWordBits - 1) / kWordBits),
        words_(shape_.outer() * words_per_row_, 0) {}

  BitTensor(Shape shape, std::span<const int> values) : BitTensor(std::move(shape)) {
    if (values.size() != shape_.numel())
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_.str());
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] != 1 && values[i] != -1)
        throw DomainError("BitTensor element must be +1 or -1, got " +
                          std::to_string(values[i]) + " at " + std::to_string(i));
      set(i, values[i]);
    }
  }

  // Rebuild from raw words (deserialization). Padding must already be clean.
  BitTensor(Shape shape, std::vector<Word> words) : BitTensor(std::move(shape)) {
    if (words.size() != words_.size())
      throw ShapeError("word count mismatch for shape " + shape_.str());
    words_ = std::move(words);
    if (!padding_clean()) throw FormatError("BitTensor padding bits are not zero");
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return shape_.numel(); }
  std::size_t rows() const { return shape_.outer(); }
  std::size_t row_bits() const { return shape_.inner(); }
  std::size_t words_per_row() const { return words_per_row_; }
  std::span<const Word> words() const { return words_; }

  std::span<const Word> row(std::size_t r) const {
    return std::span<const Word>(words_).subspan(r * words_per_row_, words_per_row_);
  }

  int get(std::size_t flat) const {
    const auto [w, b] = locate(flat);
    return (words_[w] >> b) & 1u ? 1 : -1;
  }

  int get(std::size_t r, std::size_t c) const {
    const Word word = words_[r * words_per_row_ + c / kWordBits];
    return (word >> (c % kWordBits)) & 1u ? 1 : -1;
  }

  void set(std::size_t flat, int value) {
    const auto [w, b] = locate(flat);
    if (value > 0)
      words_[w] |= Word{1} << b;
    else
      words_[w] &= ~(Word{1} << b);
  }

  void set(std::size_t r, std::size_t c, int value) {
    set(r * row_bits() + c, value);
  }

  std::vector<int> values() const {
    std::vector<int> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = get(i);
    return out;
  }

  // Mask selecting the logical bits of the final word of a row.
  Word tail_mask() const {
    const std::size_t rem = row_bits() % kWordBits;
    return rem == 0 ? ~Word{0} : (Word{1} << rem) - 1;
  }

  bool padding_clean() const {
    const Word mask = tail_mask();
    for (std::size_t r = 0; r < rows(); ++r)
      if (words_[(r + 1) * words_per_row_ - 1] & ~mask) return false;
    return true;
  }

  // Same bits under a new shape; repacks when the innermost extent changes.
  BitTensor reshaped(Shape shape) const {
    if (shape.numel() != size())
      throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    if (shape.inner() == shape_.inner()) {
      BitTensor out = *this;
      out.shape_ = std::move(shape);
      return out;
    }
    BitTensor out(std::move(shape));
    for (std::size_t i = 0; i < size(); ++i)
      if (get(i) > 0) out.set(i, 1);
    return out;
  }

  bool operator==(const BitTensor&) const = default;

 private:
  std::pair<std::size_t, std::size_t> locate(std::size_t flat) const {
    const std::size_t r = flat / row_bits();
    const std::size_t c = flat % row_bits();
    return {r * words_per_row_ + c / kWordBits, c % kWordBits};
  }

  Shape shape_;
  std::size_t words_per_row_ = 0;
  std::vector<Word> words_;
};

// Packs a flat +/-1 sequence into a rank-1 BitTensor.
inline BitTensor pack_bits(std::span<const int> values) {
  if (values.empty()) throw ShapeError("cannot pack an empty sequence");
  return BitTensor(Shape{values.size()}, values);
}

inline std::vector<int> unpack_bits(const BitTensor& t) { return t.values(); }

// ============================================================================
// IntTensor
// ============================================================================

// Small-integer tensor whose values all fit declared_bits (signed).
class IntTensor {
 public:
  IntTensor() = default;

  IntTensor(Shape shape, std::vector<std::int32_t> values, int declared_bits)
      : shape_(std::move(shape)), values_(std::move(values)), bits_(declared_bits) {
    if (values_.size() != shape_.numel())
      throw ShapeError("value count does not match shape " + shape_.str());
    if (bits_ < 1 || bits_ > 32) throw DomainError("declared_bits out of range");
    const std::int64_t lo = -(std::int64_t{1} << (bits_ - 1));
    const std::int64_t hi = (std::int64_t{1} << (bits_ - 1)) - 1;
    for (auto v : values_)
      if (v < lo || v > hi)
        throw DomainError("value " + std::to_string(v) + " exceeds declared " +
                          std::to_string(bits_) + "-bit width");
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  int declared_bits() const { return bits_; }
  std::span<const std::int32_t> values() const { return values_; }
  std::int32_t operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const IntTensor&) const = default;

 private:
  Shape shape_;
  std::vector<std::int32_t> values_;
  int bits_ = 1;
};

// ============================================================================
// img2col lowering
// ============================================================================

struct KernelGeometry {
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;

  static KernelGeometry square(std::size_t k, std::size_t stride, std::size_t pad) {
    return {k, k, stride, stride, pad, pad};
  }
  // 1-D kernels run along the width of a C x 1 x L view.
  static KernelGeometry line(std::size_t k, std::size_t stride, std::size_t pad) {
    return {1, k, 1, stride, 0, pad};
  }

  std::size_t volume() const { return kernel_h * kernel_w; }

  static std::size_t out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                std::size_t pad) {
    if (stride < 1) throw ShapeError("stride must be >= 1");
    if (in + 2 * pad < k)
      throw ShapeError("kernel " + std::to_string(k) + " larger than padded input " +
                       std::to_string(in + 2 * pad));
    return (in + 2 * pad - k) / stride + 1;
  }
};

struct PatchMatrix {
  std::size_t rows = 0;  // output positions
  std::size_t cols = 0;  // in_channels * kernel volume
  std::size_t out_h = 0, out_w = 0;
  BitTensor data;        // rows x cols
};

namespace detail {

struct SpatialView {
  std::size_t channels, height, width;
};

inline SpatialView spatial_view(const BitTensor& t) {
  const auto& s = t.shape();
  if (s.rank() == 3) return {s[0], s[1], s[2]};
  if (s.rank() == 2) return {s[0], 1, s[1]};
  throw ShapeError("convolution input must be CxHxW or CxL, got " + s.str());
}

}  // namespace detail

// Lowers a convolution input to a patch matrix. Row r is the receptive field
// at output position r (row-major over out_h x out_w); columns run
// channel-major, then kernel row, then kernel column. Out-of-bounds taps read
// the pad value -1 (bit 0).
inline PatchMatrix im2col(const BitTensor& input, const KernelGeometry& g) {
  const auto v = detail::spatial_view(input);
  const std::size_t out_h = KernelGeometry::out_extent(v.height, g.kernel_h, g.stride_h, g.pad_h);
  const std::size_t out_w = KernelGeometry::out_extent(v.width, g.kernel_w, g.stride_w, g.pad_w);

  PatchMatrix pm;
  pm.rows = out_h * out_w;
  pm.cols = v.channels * g.volume();
  pm.out_h = out_h;
  pm.out_w = out_w;
  pm.data = BitTensor(Shape{pm.rows, pm.cols});

  for (std::size_t oy = 0; oy < out_h; ++oy) {
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const std::size_t r = oy * out_w + ox;
      std::size_t col = 0;
      for (std::size_t c = 0; c < v.channels; ++c) {
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad_h);
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++col) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride_w + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad_w);
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(v.height) ||
                ix >= static_cast<std::ptrdiff_t>(v.width))
              continue;
            const std::size_t flat = (c * v.height + static_cast<std::size_t>(iy)) * v.width +
                                     static_cast<std::size_t>(ix);
            if (input.get(flat) > 0) pm.data.set(r, col, 1);
          }
        }
      }
    }
  }
  return pm;
}

}  // namespace nhalf
