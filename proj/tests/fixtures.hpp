#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "nhalf/activation.hpp"
#include "nhalf/config.hpp"

namespace fixture {

// 12x12 input, four blocks: two 2-D, one 1-D, HALF with five classes.
inline nhalf::ArchitectureConfig small_config(int clip = nhalf::kDefaultClip) {
  using K = nhalf::BlockKind;
  nhalf::ArchitectureConfig c;
  c.blocks = {
      {K::Conv2D, 1, 4, 3, 1, 1, 2, 2},
      {K::Conv2D, 4, 8, 3, 1, 1, 2, 2},
      {K::Conv1D, 8, 8, 3, 1, 0, 2, 1},
      {K::Half, 8, 5, 3, 1, 0, 2, 2},
  };
  c.input_h = 12;
  c.input_w = 12;
  c.class_count = 5;
  c.clip = clip;
  return c;
}

// Single-channel activation parameters drawn from the wide ranges used by
// the agreement properties.
inline nhalf::ActivationParams random_channel(std::mt19937_64& rng, int clip) {
  std::uniform_real_distribution<double> g(-4.0, 4.0), s2(1e-4, 16.0), a(-2.0, 2.0);
  nhalf::ActivationParams p;
  p.gamma = {g(rng)};
  p.beta = {g(rng)};
  p.mu = {g(rng)};
  p.sigma_sq = {s2(rng)};
  p.a = {a(rng)};
  p.epsilon = 0.0;
  p.clip = clip;
  return p;
}

inline int random_clip(std::mt19937_64& rng) {
  static constexpr int clips[] = {8, 15, 31, 63};
  return clips[rng() % 4];
}

// Random valid architecture: 1-3 2-D blocks, 0-2 plain 1-D blocks, HALF.
// Geometry is kept small so a full forward pass stays cheap.
inline nhalf::ArchitectureConfig random_config(std::mt19937_64& rng) {
  using K = nhalf::BlockKind;
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  for (;;) {
    nhalf::ArchitectureConfig c;
    c.input_h = pick(6, 20);
    c.input_w = pick(6, 20);
    c.class_count = pick(2, 9);
    c.clip = static_cast<int>(pick(1, 40));
    std::size_t ch = 1;
    const std::size_t n2 = pick(1, 3), n1 = pick(0, 2);
    for (std::size_t i = 0; i < n2; ++i) {
      const std::size_t out = pick(1, 8), k = pick(1, 5);
      c.blocks.push_back({K::Conv2D, ch, out, k, pick(1, 2), pick(0, k / 2), pick(1, 2), pick(1, 2)});
      ch = out;
    }
    for (std::size_t i = 0; i < n1; ++i) {
      const std::size_t out = pick(1, 8);
      c.blocks.push_back({K::Conv1D, ch, out, pick(1, 6), 1, pick(0, 1), pick(1, 3), pick(1, 2)});
      ch = out;
    }
    c.blocks.push_back({K::Half, ch, c.class_count, pick(1, 6), 1, 0, pick(1, 3), pick(1, 2)});
    try {
      nhalf::infer_shapes(c);
      return c;
    } catch (const nhalf::ConfigError&) {
      // extent vanished; draw again
    }
  }
}

}  // namespace fixture
