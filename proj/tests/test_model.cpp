#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "nhalf/checkpoint.hpp"
#include "nhalf/compile.hpp"
#include "nhalf/engine.hpp"
#include "nhalf/fused_model.hpp"
#include "oracles.hpp"

using namespace nhalf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "nhalf_test_model";
  fs::create_directories(dir);
  return dir / name;
}

BitTensor random_input(const ArchitectureConfig& c, std::mt19937_64& rng) {
  const auto v = oracle::random_pm1(c.input_h * c.input_w, rng);
  return BitTensor(Shape{1, c.input_h, c.input_w}, v);
}

// Mirrors the conv/pool arithmetic independently of infer_shapes.
std::vector<std::size_t> traced_extents(const ArchitectureConfig& c) {
  std::vector<std::size_t> out;
  std::size_t h = c.input_h, w = c.input_w, len = 0;
  bool flat = false;
  for (const auto& b : c.blocks) {
    if (b.is_2d()) {
      h = (h + 2 * b.conv_padding - b.kernel_size) / b.conv_stride + 1;
      w = (w + 2 * b.conv_padding - b.kernel_size) / b.conv_stride + 1;
      h = (h - b.pool_size) / b.pool_stride + 1;
      w = (w - b.pool_size) / b.pool_stride + 1;
      out.push_back(h);
      out.push_back(w);
    } else {
      if (!flat) len = h * w, flat = true;
      len = (len + 2 * b.conv_padding - b.kernel_size) / b.conv_stride + 1;
      out.push_back(len);
      len = (len - b.pool_size) / b.pool_stride + 1;
      out.push_back(len);
    }
  }
  return out;
}

}  // namespace

TEST(DefaultConfig, BlockDescriptors) {
  const auto c = default_config();
  ASSERT_EQ(c.blocks.size(), 6u);
  const auto& b1 = c.blocks[0];
  EXPECT_EQ(b1.kind, BlockKind::Conv2D);
  EXPECT_EQ(b1.in_channels, 1u);
  EXPECT_EQ(b1.out_channels, 8u);
  EXPECT_EQ(b1.kernel_size, 5u);
  EXPECT_EQ(b1.conv_stride, 1u);
  EXPECT_EQ(b1.conv_padding, 2u);
  EXPECT_EQ(b1.pool_size, 2u);
  EXPECT_EQ(b1.pool_stride, 2u);
  const auto& b5 = c.blocks[4];
  EXPECT_EQ(b5.kind, BlockKind::Conv1D);
  EXPECT_EQ(b5.in_channels, 64u);
  EXPECT_EQ(b5.out_channels, 128u);
  EXPECT_EQ(b5.kernel_size, 16u);
  EXPECT_EQ(b5.pool_size, 4u);
  EXPECT_EQ(b5.pool_stride, 2u);
  EXPECT_EQ(c.blocks[5].kind, BlockKind::Half);
  EXPECT_EQ(c.blocks[5].out_channels, 43u);
  EXPECT_EQ(c.class_count, 43u);
  EXPECT_EQ(c.clip, 31);
  EXPECT_EQ(c.input_h, 48u);
}

TEST(DefaultConfig, JsonRoundTrip) {
  const auto c = default_config();
  EXPECT_EQ(config_from_json(to_json(c)), c);
  EXPECT_EQ(to_json(c).at("blocks").at(5).at("kind"), "HALF");
}

TEST(ConfigValidation, Rejections) {
  auto c = default_config();
  c.blocks[2].in_channels = 15;
  EXPECT_THROW(c.validate(), ConfigError);
  c = default_config();
  c.blocks.back().out_channels = 42;
  EXPECT_THROW(c.validate(), ConfigError);
  c = default_config();
  c.blocks.insert(c.blocks.begin() + 5, BlockDescriptor{BlockKind::Conv2D, 128, 128, 3, 1, 1, 1, 1});
  EXPECT_THROW(c.validate(), ConfigError);  // 2D after 1D
  c = default_config();
  std::swap(c.blocks[4], c.blocks[5]);
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(InferShapes, DefaultPlan) {
  const auto plan = infer_shapes(default_config());
  ASSERT_EQ(plan.blocks.size(), 6u);
  EXPECT_EQ(plan.blocks[0].conv_output, (Shape{8, 48, 48}));
  EXPECT_EQ(plan.blocks[0].pool_output, (Shape{8, 24, 24}));
  EXPECT_EQ(plan.blocks[1].pool_output, (Shape{16, 12, 12}));
  EXPECT_EQ(plan.blocks[2].pool_output, (Shape{32, 11, 11}));
  EXPECT_EQ(plan.blocks[3].pool_output, (Shape{64, 10, 10}));
  EXPECT_TRUE(plan.blocks[4].flatten_before);
  EXPECT_EQ(plan.blocks[4].input, (Shape{64, 100}));
  EXPECT_EQ(plan.blocks[4].conv_output, (Shape{128, 85}));
  EXPECT_EQ(plan.blocks[4].pool_output, (Shape{128, 41}));
  EXPECT_EQ(plan.blocks[5].conv_output, (Shape{43, 26}));
  EXPECT_EQ(plan.blocks[5].pool_output, (Shape{43, 12}));
  EXPECT_EQ(plan.score_positions, 12u);
  EXPECT_EQ(plan.blocks[4].taps, 1024u);
}

TEST(InferShapes, VanishingExtentNamesBlock) {
  auto c = default_config();
  c.input_h = c.input_w = 8;
  try {
    infer_shapes(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("block 4"), std::string::npos) << e.what();
  }
}

TEST(InferShapes, MatchesTracingOracleOnRandomConfigs) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 300; ++i) {
    const auto c = fixture::random_config(rng);
    const auto plan = infer_shapes(c);
    const auto want = traced_extents(c);
    std::vector<std::size_t> got;
    for (std::size_t b = 0; b < c.blocks.size(); ++b) {
      const auto& bp = plan.blocks[b];
      if (c.blocks[b].is_2d()) {
        got.push_back(bp.pool_output[1]);
        got.push_back(bp.pool_output[2]);
      } else {
        got.push_back(bp.conv_output[1]);
        got.push_back(bp.pool_output[1]);
      }
    }
    ASSERT_EQ(got, want);
  }
}

TEST(CountParams, DefaultConfig) {
  const auto pc = count_params(default_config());
  EXPECT_EQ(pc.per_block, (std::vector<std::uint64_t>{200, 3200, 12800, 51200, 131072, 88064}));
  EXPECT_EQ(pc.total, 286536u);
}

TEST(CountParams, EqualsStoredWeightBitsProperty) {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 100; ++i) {
    const auto c = fixture::random_config(rng);
    const auto m = compile(random_checkpoint(c, rng()));
    ASSERT_EQ(m.weight_bits(), count_params(c).total);
  }
}

TEST(ExecutedShapes, MatchPlanOnRandomConfigs) {
  // forward_fused throws if an executed shape departs from the plan; the
  // trace lets us check the recorded shapes too.
  std::mt19937_64 rng(33);
  for (int i = 0; i < 100; ++i) {
    const auto c = fixture::random_config(rng);
    const auto m = compile(random_checkpoint(c, rng()));
    FusedTrace trace;
    const auto scores = forward_fused(m, random_input(c, rng), nullptr, &trace);
    ASSERT_EQ(trace.blocks.size(), c.blocks.size());
    for (std::size_t b = 0; b < c.blocks.size(); ++b) ASSERT_EQ(trace.blocks[b].pooled.shape(), m.plan.blocks[b].pool_output);
    ASSERT_EQ(scores.scores.size(), c.class_count);
  }
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto ck = random_checkpoint(default_config(), seed);
    const auto bytes = serialize_checkpoint(ck);
    const auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back, ck);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
  }
}

TEST(Checkpoint, BroadcastSlopeRoundTrips) {
  auto ck = identity_checkpoint(fixture::small_config());
  ck.blocks[1].act.a = {0.25};
  const auto back = deserialize_checkpoint(serialize_checkpoint(ck));
  EXPECT_EQ(back.blocks[1].act.a, (std::vector<double>{0.25}));
}

TEST(Checkpoint, FileRoundTrip) {
  const auto ck = random_checkpoint(fixture::small_config(), 9);
  const auto p = scratch("ck.nhb");
  save_checkpoint(ck, p);
  EXPECT_EQ(load_checkpoint(p), ck);
  EXPECT_THROW(load_checkpoint(scratch("absent.nhb")), InputError);
}

TEST(Checkpoint, RecordsEpsilon) {
  auto ck = identity_checkpoint(fixture::small_config());
  ck.blocks[0].act.epsilon = 1e-3;
  const auto back = deserialize_checkpoint(serialize_checkpoint(ck));
  EXPECT_EQ(back.blocks[0].act.epsilon, 1e-3);
  EXPECT_EQ(back.blocks[1].act.epsilon, kDefaultEpsilon);
}

TEST(Checkpoint, CorruptionErrors) {
  const auto good = serialize_checkpoint(random_checkpoint(fixture::small_config(), 10));
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), FormatError);
  EXPECT_THROW(deserialize_checkpoint(std::span(good).first(good.size() - 3)), TruncatedError);
  EXPECT_THROW(deserialize_checkpoint(std::span(good).first(10)), TruncatedError);
  auto longer = good;
  longer.push_back(0);
  EXPECT_THROW(deserialize_checkpoint(longer), FormatError);
}

TEST(Checkpoint, ValidationRejectsBadParams) {
  auto ck = identity_checkpoint(fixture::small_config());
  ck.blocks[0].act.epsilon = 0.0;
  EXPECT_THROW(ck.validate(), ConfigError);
  ck = identity_checkpoint(fixture::small_config());
  ck.blocks[1].weights.pop_back();
  EXPECT_THROW(ck.validate(), ConfigError);
  EXPECT_THROW(compile(ck), CompileError);
  ck = identity_checkpoint(fixture::small_config());
  ck.blocks[2].act.sigma_sq[3] = -1.0;
  try {
    compile(ck);
    FAIL();
  } catch (const CompileError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("block 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("channel 3"), std::string::npos) << msg;
  }
}

TEST(Compile, IdentityCheckpointGivesSignRules) {
  const auto m = compile(identity_checkpoint(default_config(), 5));
  for (std::size_t b = 0; b < 5; ++b) {
    ASSERT_EQ(m.blocks[b].rules.size(), m.config.blocks[b].out_channels);
    for (const auto& r : m.blocks[b].rules) {
      EXPECT_EQ(r.pos_mode, RuleMode::GreaterEqual);
      EXPECT_EQ(r.t_pos, 0);
      EXPECT_EQ(r.neg_mode, RuleMode::GreaterEqual);
      EXPECT_EQ(r.t_neg, 0);
      EXPECT_EQ(r.s_hi, 1);
      EXPECT_EQ(r.s_lo, -1);
    }
  }
  EXPECT_TRUE(m.blocks[5].rules.empty());
}

TEST(Compile, WeightsAreSignBits) {
  const auto ck = random_checkpoint(fixture::small_config(), 6);
  const auto m = compile(ck);
  for (std::size_t b = 0; b < ck.blocks.size(); ++b)
    for (std::size_t j = 0; j < ck.blocks[b].weights.size(); ++j)
      ASSERT_EQ(m.blocks[b].weights.get(j), sign(ck.blocks[b].weights[j]));
}

TEST(Compile, Deterministic) {
  const auto ck = random_checkpoint(default_config(), 7);
  EXPECT_EQ(serialize_fused(compile(ck)), serialize_fused(compile(ck)));
}

TEST(Compile, ClipOverrideAndWarning) {
  CompileDiagnostics diag;
  const auto m = compile(random_checkpoint(fixture::small_config(), 8), CompileOptions{8}, &diag);
  EXPECT_EQ(m.config.clip, 8);
  for (const auto& b : m.blocks)
    for (const auto& r : b.rules) EXPECT_EQ(r.clip, 8);
  ASSERT_EQ(diag.warnings.size(), 1u);
  EXPECT_NE(diag.warnings[0].find("small"), std::string::npos);
  EXPECT_THROW(compile(identity_checkpoint(fixture::small_config()), CompileOptions{0}), CompileError);
}

TEST(Compile, ReportsBoundaryTies) {
  // beta = -2 with identity scale: k*x + b is exactly 0 at x = 2.
  auto ck = identity_checkpoint(fixture::small_config());
  ck.blocks[1].act.beta[5] = -2.0;
  ck.blocks[1].act.sigma_sq[5] = 1.0 - ck.blocks[1].act.epsilon;
  CompileDiagnostics diag;
  compile(ck, {}, &diag);
  bool found = false;
  for (const auto& t : diag.ties) found = found || (t.block == 2 && t.channel == 5 && t.x == 2);
  EXPECT_TRUE(found);
}

TEST(FusedModel, RoundTripIsByteIdentical) {
  const auto m = compile(random_checkpoint(default_config(), 11));
  const auto bytes = serialize_fused(m);
  const auto back = deserialize_fused(bytes);
  EXPECT_EQ(back, m);
  EXPECT_EQ(serialize_fused(back), bytes);
}

TEST(FusedModel, LoadErrorsAreDistinct) {
  const auto good = serialize_fused(compile(random_checkpoint(fixture::small_config(), 12)));

  auto bad_magic = good;
  bad_magic[1] = 'X';
  EXPECT_THROW(deserialize_fused(bad_magic), FormatError);

  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_fused(bad_version), VersionError);

  auto bad_crc = good;
  bad_crc.back() ^= 0x5A;
  EXPECT_THROW(deserialize_fused(bad_crc), ChecksumError);

  auto flipped = good;
  flipped[good.size() - 10] ^= 0x01;  // rule payload
  EXPECT_THROW(deserialize_fused(flipped), ChecksumError);

  EXPECT_THROW(deserialize_fused(std::span(good).first(good.size() - 9)), TruncatedError);
  EXPECT_THROW(deserialize_fused(std::span(good).first(8)), TruncatedError);

  EXPECT_THROW(load_fused(scratch("absent.nhf")), InputError);
}

TEST(FusedModel, DistinctErrorKinds) {
  const auto good = serialize_fused(compile(identity_checkpoint(fixture::small_config())));
  auto bad = good;
  bad.back() ^= 1;
  try {
    deserialize_fused(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "checksum");
  }
  bad = good;
  bad[0] = 'Q';
  try {
    deserialize_fused(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "format");
  }
}

TEST(FusedModel, SerializationTransparency) {
  std::mt19937_64 rng(13);
  const auto ck = random_checkpoint(fixture::small_config(), 14);
  const auto direct = compile(ck);
  const auto p = scratch("m.nhf");
  save_fused(direct, p);
  const auto loaded = load_fused(p);
  for (int i = 0; i < 50; ++i) {
    const auto in = random_input(ck.config, rng);
    const auto a = forward_fused(direct, in), b = forward_fused(loaded, in);
    ASSERT_EQ(a.scores, b.scores);
    ASSERT_EQ(a.predicted, b.predicted);
  }
}

TEST(Storage, ReferenceDesignCount) {
  const auto s = storage_report(287032, 31);
  EXPECT_NEAR(s.binary_kb, 35.03, 0.01);
  EXPECT_DOUBLE_EQ(s.float32_ratio, 32.0);
  EXPECT_DOUBLE_EQ(s.int8_ratio, 8.0);
  EXPECT_DOUBLE_EQ(s.intermediate_ratio, 2.5);
  EXPECT_EQ(s.intermediate_bits_clipped, 6);
  EXPECT_EQ(s.threshold_bits, 7);
}

TEST(Storage, ArchitectureCount) {
  const auto s = storage_report(default_config(), 31);
  EXPECT_EQ(s.params, 286536u);
  EXPECT_NEAR(s.binary_kb, 34.97, 0.01);
  EXPECT_DOUBLE_EQ(s.binary_bytes, 286536.0 / 8.0);
  EXPECT_EQ(s.threshold_entries, 2u * (8 + 16 + 32 + 64 + 128));
  EXPECT_EQ(s.intermediate_elements, 8u * 576 + 16u * 144 + 32u * 121 + 64u * 100 + 128u * 41);
  EXPECT_DOUBLE_EQ(s.intermediate_bytes_unclipped / s.intermediate_bytes_clipped, 2.5);
}
