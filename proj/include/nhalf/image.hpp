#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "nhalf/error.hpp"
#include "nhalf/io.hpp"
#include "nhalf/tensor.hpp"

namespace nhalf {

// 8-bit raster, interleaved channels (1 = gray, 3 = RGB).
struct Image {
  std::size_t width = 0, height = 0, channels = 1;
  std::vector<std::uint8_t> pixels;

  bool empty() const { return width == 0 || height == 0 || pixels.empty(); }

  static Image filled(std::size_t w, std::size_t h, std::size_t channels, std::uint8_t value) {
    return {w, h, channels, std::vector<std::uint8_t>(w * h * channels, value)};
  }
};

// ============================================================================
// Decoding
// ============================================================================

namespace detail {

inline bool is_png(std::span<const std::uint8_t> d) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return d.size() >= 8 && std::equal(sig, sig + 8, d.begin());
}

inline Image decode_png(std::span<const std::uint8_t> d) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, d.data(), d.size()))
    throw InputError(std::string("PNG decode failed: ") + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image out;
  out.width = img.width;
  out.height = img.height;
  out.channels = color ? 3 : 1;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw InputError("PNG decode failed: " + msg);
  }
  return out;
}

// Netpbm P2/P3 (ASCII) and P5/P6 (binary), maxval <= 255.
inline Image decode_pnm(std::span<const std::uint8_t> d) {
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < d.size()) {
      if (d[pos] == '#') {
        while (pos < d.size() && d[pos] != '\n') ++pos;
      } else if (std::isspace(d[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_space();
    if (pos >= d.size() || !std::isdigit(d[pos])) throw InputError("malformed PNM header");
    std::size_t v = 0;
    while (pos < d.size() && std::isdigit(d[pos])) v = v * 10 + (d[pos++] - '0');
    return v;
  };
  const char kind = static_cast<char>(d[1]);
  Image out;
  out.channels = (kind == '3' || kind == '6') ? 3 : 1;
  out.width = read_int();
  out.height = read_int();
  const std::size_t maxval = read_int();
  if (maxval == 0 || maxval > 255) throw InputError("only 8-bit PNM images are supported");
  const std::size_t n = out.width * out.height * out.channels;
  out.pixels.resize(n);
  auto scale = [&](std::size_t v) {
    if (v > maxval) throw InputError("PNM sample exceeds maxval");
    return static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
  };
  if (kind == '5' || kind == '6') {
    ++pos;  // single whitespace after maxval
    if (d.size() < pos + n) throw InputError("PNM pixel data is truncated");
    for (std::size_t i = 0; i < n; ++i) out.pixels[i] = scale(d[pos + i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out.pixels[i] = scale(read_int());
  }
  return out;
}

}  // namespace detail

inline Image decode_image(std::span<const std::uint8_t> data) {
  Image img;
  if (detail::is_png(data)) {
    img = detail::decode_png(data);
  } else if (data.size() >= 2 && data[0] == 'P' &&
             (data[1] == '2' || data[1] == '3' || data[1] == '5' || data[1] == '6')) {
    img = detail::decode_pnm(data);
  } else {
    throw InputError("unrecognized image format (expected PNG or PNM)");
  }
  if (img.empty()) throw InputError("image is empty");
  return img;
}

inline Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw InputError("image not found: " + path.string());
  return decode_image(read_file(path));
}

inline void save_pnm(const Image& img, const std::filesystem::path& path) {
  ByteWriter w;
  w.raw(std::string(img.channels == 3 ? "P6\n" : "P5\n") + std::to_string(img.width) + " " +
        std::to_string(img.height) + "\n255\n");
  w.raw(img.pixels);
  write_file(path, w.bytes());
}

inline void save_png(const Image& img, const std::filesystem::path& path) {
  png_image p{};
  p.version = PNG_IMAGE_VERSION;
  p.width = static_cast<png_uint_32>(img.width);
  p.height = static_cast<png_uint_32>(img.height);
  p.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&p, path.string().c_str(), 0, img.pixels.data(), 0, nullptr))
    throw InputError(std::string("PNG write failed: ") + p.message);
}

// ============================================================================
// Preprocessing
// ============================================================================

enum class ResizeMethod : std::uint8_t { Bilinear, Nearest };

struct PreprocessConfig {
  std::size_t target_h = 48, target_w = 48;
  std::array<double, 3> luminance{0.299, 0.587, 0.114};  // BT.601
  ResizeMethod resize = ResizeMethod::Bilinear;
  double threshold = 0.5;  // on the [0, 1] scale

  void validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("binarization threshold must lie in (0, 1)");
    if (target_h < 1 || target_w < 1) throw ConfigError("target size must be positive");
  }
};

inline std::vector<double> to_grayscale(const Image& img, const std::array<double, 3>& lum) {
  std::vector<double> g(img.width * img.height);
  if (img.channels == 1) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = img.pixels[i];
  } else if (img.channels == 3) {
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = lum[0] * img.pixels[3 * i] + lum[1] * img.pixels[3 * i + 1] + lum[2] * img.pixels[3 * i + 2];
  } else {
    throw InputError("unsupported channel count " + std::to_string(img.channels));
  }
  return g;
}

// Half-pixel-centre sampling, edges replicated.
inline std::vector<double> resize_plane(const std::vector<double>& src, std::size_t sw, std::size_t sh,
                                        std::size_t dw, std::size_t dh, ResizeMethod method) {
  std::vector<double> dst(dw * dh);
  const double sx = static_cast<double>(sw) / static_cast<double>(dw);
  const double sy = static_cast<double>(sh) / static_cast<double>(dh);
  for (std::size_t y = 0; y < dh; ++y) {
    for (std::size_t x = 0; x < dw; ++x) {
      if (method == ResizeMethod::Nearest) {
        const auto ix = std::min(sw - 1, static_cast<std::size_t>(std::floor(x * sx)));
        const auto iy = std::min(sh - 1, static_cast<std::size_t>(std::floor(y * sy)));
        dst[y * dw + x] = src[iy * sw + ix];
        continue;
      }
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
      const auto x0 = std::min(sw - 1, static_cast<std::size_t>(fx));
      const auto y0 = std::min(sh - 1, static_cast<std::size_t>(fy));
      const auto x1 = std::min(sw - 1, x0 + 1);
      const auto y1 = std::min(sh - 1, y0 + 1);
      const double ax = std::min(1.0, fx - static_cast<double>(x0));
      const double ay = std::min(1.0, fy - static_cast<double>(y0));
      const double top = src[y0 * sw + x0] * (1 - ax) + src[y0 * sw + x1] * ax;
      const double bot = src[y1 * sw + x0] * (1 - ax) + src[y1 * sw + x1] * ax;
      dst[y * dw + x] = top * (1 - ay) + bot * ay;
    }
  }
  return dst;
}

// Grayscale, resize, scale by 1/255, threshold: +1 where value >= threshold.
inline BitTensor preprocess(const Image& img, const PreprocessConfig& cfg) {
  cfg.validate();
  if (img.empty()) throw InputError("image is empty");
  if (img.pixels.size() != img.width * img.height * img.channels)
    throw InputError("image buffer size does not match its dimensions");
  const auto gray = to_grayscale(img, cfg.luminance);
  const auto resized = (img.width == cfg.target_w && img.height == cfg.target_h)
                           ? gray
                           : resize_plane(gray, img.width, img.height, cfg.target_w, cfg.target_h, cfg.resize);
  BitTensor out(Shape{1, cfg.target_h, cfg.target_w});
  for (std::size_t i = 0; i < resized.size(); ++i)
    if (resized[i] / 255.0 >= cfg.threshold) out.set(i, 1);
  return out;
}

}  // namespace nhalf
