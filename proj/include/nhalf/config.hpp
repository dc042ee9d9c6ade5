#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "nhalf/activation.hpp"
#include "nhalf/error.hpp"
#include "nhalf/kernels.hpp"
#include "nhalf/tensor.hpp"

namespace nhalf {

enum class BlockKind : std::uint8_t { Conv2D, Conv1D, Half };

inline std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::Conv2D: return "2D";
    case BlockKind::Conv1D: return "1D";
    case BlockKind::Half: return "HALF";
  }
  return "?";
}

inline BlockKind block_kind_from_string(const std::string& s) {
  if (s == "2D") return BlockKind::Conv2D;
  if (s == "1D") return BlockKind::Conv1D;
  if (s == "HALF") return BlockKind::Half;
  throw ConfigError("unknown block kind '" + s + "'");
}

struct BlockDescriptor {
  BlockKind kind = BlockKind::Conv2D;
  std::size_t in_channels = 1, out_channels = 1;
  std::size_t kernel_size = 1, conv_stride = 1, conv_padding = 0;
  std::size_t pool_size = 1, pool_stride = 1;

  bool is_2d() const { return kind == BlockKind::Conv2D; }
  bool has_activation() const { return kind != BlockKind::Half; }

  std::size_t kernel_volume() const { return is_2d() ? kernel_size * kernel_size : kernel_size; }
  std::size_t taps() const { return in_channels * kernel_volume(); }
  std::size_t weight_count() const { return out_channels * taps(); }

  KernelGeometry conv_geometry() const {
    return is_2d() ? KernelGeometry::square(kernel_size, conv_stride, conv_padding)
                   : KernelGeometry::line(kernel_size, conv_stride, conv_padding);
  }
  PoolGeometry pool_geometry() const {
    return is_2d() ? PoolGeometry::square(pool_size, pool_stride)
                   : PoolGeometry::line(pool_size, pool_stride);
  }

  // Latent weight tensor layout: out x in x k x k (2-D) or out x in x k.
  std::vector<std::size_t> weight_dims() const {
    if (is_2d()) return {out_channels, in_channels, kernel_size, kernel_size};
    return {out_channels, in_channels, kernel_size};
  }

  bool operator==(const BlockDescriptor&) const = default;
};

struct ArchitectureConfig {
  std::vector<BlockDescriptor> blocks;
  std::size_t input_h = 48, input_w = 48;
  std::size_t class_count = 43;
  int clip = kDefaultClip;

  // Chain of 2-D blocks, then 1-D blocks, ending in exactly one HALF block
  // whose outputs are the class channels.
  void validate() const {
    if (blocks.size() < 2) throw ConfigError("architecture needs at least two blocks");
    if (input_h < 1 || input_w < 1) throw ConfigError("input size must be positive");
    if (clip < 1) throw ConfigError("clip must be >= 1");
    if (class_count < 1) throw ConfigError("class_count must be >= 1");
    if (blocks.front().kind != BlockKind::Conv2D)
      throw ConfigError("first block must be 2D");
    if (blocks.back().kind != BlockKind::Half) throw ConfigError("last block must be HALF");
    if (blocks.back().out_channels != class_count)
      throw ConfigError("HALF block out_channels must equal class_count");
    if (blocks.front().in_channels != 1) throw ConfigError("block 1 must take one input channel");
    int transitions = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      const std::string where = "block " + std::to_string(i + 1) + ": ";
      if (b.in_channels < 1 || b.out_channels < 1) throw ConfigError(where + "channels must be >= 1");
      if (b.kernel_size < 1 || b.conv_stride < 1) throw ConfigError(where + "kernel/stride must be >= 1");
      if (b.pool_size < 1 || b.pool_stride < 1) throw ConfigError(where + "pool size/stride must be >= 1");
      if (b.kind == BlockKind::Half && i + 1 != blocks.size())
        throw ConfigError(where + "HALF must be the last block");
      if (i > 0) {
        if (blocks[i - 1].out_channels != b.in_channels)
          throw ConfigError(where + "in_channels does not match previous out_channels");
        if (blocks[i - 1].is_2d() && !b.is_2d()) ++transitions;
        if (!blocks[i - 1].is_2d() && b.is_2d()) throw ConfigError(where + "2D block after 1D block");
      }
    }
    if (transitions != 1) throw ConfigError("architecture needs exactly one 2D->1D transition");
  }

  bool operator==(const ArchitectureConfig&) const = default;
};

// Six blocks as in the reference N+Half design: four 2-D blocks, one 1-D
// block and the HALF block producing the 43 class channels.
inline ArchitectureConfig default_config() {
  ArchitectureConfig c;
  using K = BlockKind;
  c.blocks = {
      {K::Conv2D, 1, 8, 5, 1, 2, 2, 2},
      {K::Conv2D, 8, 16, 5, 1, 2, 2, 2},
      {K::Conv2D, 16, 32, 5, 1, 2, 2, 1},
      {K::Conv2D, 32, 64, 5, 1, 2, 2, 1},
      {K::Conv1D, 64, 128, 16, 1, 0, 4, 2},
      {K::Half, 128, 43, 16, 1, 0, 4, 2},
  };
  c.input_h = 48;
  c.input_w = 48;
  c.class_count = 43;
  c.clip = kDefaultClip;
  return c;
}

// ============================================================================
// Shape plan
// ============================================================================

struct BlockPlan {
  Shape input;        // shape fed to the convolution (after any flatten)
  Shape conv_output;
  Shape pool_output;
  std::size_t taps = 0;
  bool flatten_before = false;  // CxHxW -> Cx(H*W) happens before this block

  bool operator==(const BlockPlan&) const = default;
};

struct ShapePlan {
  std::vector<BlockPlan> blocks;
  std::size_t score_positions = 0;  // pooled positions summed per class

  bool operator==(const ShapePlan&) const = default;
};

inline ShapePlan infer_shapes(const ArchitectureConfig& config) {
  config.validate();
  ShapePlan plan;
  Shape current{config.blocks.front().in_channels, config.input_h, config.input_w};
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const auto& b = config.blocks[i];
    BlockPlan bp;
    try {
      if (!b.is_2d() && current.rank() == 3) {
        current = Shape{current[0], current[1] * current[2]};
        bp.flatten_before = true;
      }
      bp.input = current;
      const auto g = b.conv_geometry();
      const auto p = b.pool_geometry();
      if (b.is_2d()) {
        const auto ch = KernelGeometry::out_extent(current[1], g.kernel_h, g.stride_h, g.pad_h);
        const auto cw = KernelGeometry::out_extent(current[2], g.kernel_w, g.stride_w, g.pad_w);
        bp.conv_output = Shape{b.out_channels, ch, cw};
        bp.pool_output = Shape{b.out_channels, KernelGeometry::out_extent(ch, p.window_h, p.stride_h, 0),
                               KernelGeometry::out_extent(cw, p.window_w, p.stride_w, 0)};
      } else {
        const auto cl = KernelGeometry::out_extent(current[1], g.kernel_w, g.stride_w, g.pad_w);
        bp.conv_output = Shape{b.out_channels, cl};
        bp.pool_output = Shape{b.out_channels, KernelGeometry::out_extent(cl, p.window_w, p.stride_w, 0)};
      }
    } catch (const ShapeError& e) {
      throw ConfigError("block " + std::to_string(i + 1) + ": extent vanishes (" + e.what() + ")");
    }
    bp.taps = b.taps();
    current = bp.pool_output;
    plan.blocks.push_back(std::move(bp));
  }
  plan.score_positions = current[1];
  return plan;
}

struct ParamCount {
  std::vector<std::uint64_t> per_block;
  std::uint64_t total = 0;
};

inline ParamCount count_params(const ArchitectureConfig& config) {
  ParamCount pc;
  for (const auto& b : config.blocks) {
    pc.per_block.push_back(b.weight_count());
    pc.total += b.weight_count();
  }
  return pc;
}

// ============================================================================
// JSON
// ============================================================================

inline nlohmann::json to_json(const ArchitectureConfig& c) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : c.blocks) {
    blocks.push_back({{"kind", to_string(b.kind)},
                      {"in_channels", b.in_channels},
                      {"out_channels", b.out_channels},
                      {"kernel_size", b.kernel_size},
                      {"conv_stride", b.conv_stride},
                      {"conv_padding", b.conv_padding},
                      {"pool_size", b.pool_size},
                      {"pool_stride", b.pool_stride}});
  }
  return {{"blocks", blocks},
          {"input_size", {c.input_h, c.input_w}},
          {"class_count", c.class_count},
          {"clip", c.clip}};
}

inline ArchitectureConfig config_from_json(const nlohmann::json& j) {
  try {
    ArchitectureConfig c;
    c.blocks.clear();
    for (const auto& jb : j.at("blocks")) {
      BlockDescriptor b;
      b.kind = block_kind_from_string(jb.at("kind").get<std::string>());
      b.in_channels = jb.at("in_channels").get<std::size_t>();
      b.out_channels = jb.at("out_channels").get<std::size_t>();
      b.kernel_size = jb.at("kernel_size").get<std::size_t>();
      b.conv_stride = jb.at("conv_stride").get<std::size_t>();
      b.conv_padding = jb.at("conv_padding").get<std::size_t>();
      b.pool_size = jb.at("pool_size").get<std::size_t>();
      b.pool_stride = jb.at("pool_stride").get<std::size_t>();
      c.blocks.push_back(b);
    }
    c.input_h = j.at("input_size").at(0).get<std::size_t>();
    c.input_w = j.at("input_size").at(1).get<std::size_t>();
    c.class_count = j.at("class_count").get<std::size_t>();
    c.clip = j.at("clip").get<int>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed architecture: ") + e.what());
  }
}

inline nlohmann::json to_json(const ShapePlan& plan) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : plan.blocks) {
    blocks.push_back({{"input", b.input.dims},
                      {"conv_output", b.conv_output.dims},
                      {"pool_output", b.pool_output.dims},
                      {"taps", b.taps},
                      {"flatten_before", b.flatten_before}});
  }
  return {{"blocks", blocks}, {"score_positions", plan.score_positions}};
}

}  // namespace nhalf
