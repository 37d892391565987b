#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bidrn/errors.hpp"
#include "bidrn/stats.hpp"

using namespace bidrn;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

LayerCount count(LayerKind k, bool bin, std::size_t ci, std::size_t co, std::size_t kern,
                 std::size_t stride, std::size_t pad, const Shape& in) {
  return count_layer(LayerDescriptor{"l", k, bin, ci, co, kern, stride, pad}, in);
}

}  // namespace

TEST(CountLayer, Conv) {
  auto c = count(LayerKind::Conv, true, 8, 16, 3, 2, 1, Shape{1, 8, 16, 16});
  EXPECT_EQ(c.params, 16u * 8 * 9);
  EXPECT_EQ(c.ops, 16u * 8 * 9 * 8 * 8);
  EXPECT_TRUE(c.binarized);
  EXPECT_EQ(c.output, (Shape{1, 16, 8, 8}));
  EXPECT_THROW(count(LayerKind::Conv, false, 4, 4, 3, 1, 1, Shape{1, 8, 4, 4}), ConfigError);
}

TEST(CountLayer, DeconvUsesOutputExtent) {
  auto c = count(LayerKind::Deconv, true, 4, 2, 4, 2, 1, Shape{1, 4, 5, 5});
  EXPECT_EQ(c.output, (Shape{1, 2, 10, 10}));
  EXPECT_EQ(c.params, 2u * 4 * 16);
  EXPECT_EQ(c.ops, 2u * 4 * 16 * 100);
}

TEST(CountLayer, LinearNormActivation) {
  auto l = count(LayerKind::Linear, false, 32, 10, 1, 1, 0, Shape{1, 32, 1, 1});
  EXPECT_EQ(l.params, 320u);
  EXPECT_EQ(l.ops, 320u);
  EXPECT_THROW(count(LayerKind::Linear, false, 32, 10, 1, 1, 0, Shape{1, 32, 2, 2}),
               ConfigError);
  const Shape s{1, 6, 3, 5};
  auto bn = count(LayerKind::BatchNorm, false, 6, 6, 1, 1, 0, s);
  EXPECT_EQ(bn.params, 12u);
  EXPECT_EQ(bn.ops, 2u * 90);
  auto rp = count(LayerKind::RPReLU, false, 6, 6, 1, 1, 0, s);
  EXPECT_EQ(rp.params, 18u);
  EXPECT_EQ(rp.ops, 2u * 90);
  auto pr = count(LayerKind::PReLU, false, 6, 6, 1, 1, 0, s);
  EXPECT_EQ(pr.params, 6u);
  EXPECT_EQ(pr.ops, 90u);
}

TEST(ModelStats, EffectiveTotals) {
  ModelStats s;
  s.params_fp = 1000;
  s.params_bin_latent = 32000;
  s.ops_fp = 1000000;
  s.ops_bin = 64000000;
  EXPECT_DOUBLE_EQ(s.params_effective_M(), 0.002);
  EXPECT_DOUBLE_EQ(s.ops_effective_G(), 0.002);
}

// Layer-by-layer sums for the tiny network, written out by hand.
TEST(ModelStats, TinyNetworkHandCount) {
  const std::uint64_t stem_p = 8 * 3 * 9 + 16, stem_o = 8 * 3 * 9 * 256 + 2 * 8 * 256;
  // one 8-channel LCR branch at an 8x8 output: rprelu + bn
  const std::uint64_t side8_p = 24 + 16, side8_o_8x8 = 2 * 8 * 64 * 2,
                      side8_o_4x4 = 2 * 8 * 16 * 2;
  const std::uint64_t fp_params = stem_p + (2 * side8_p + 64) +
                                  (4 * side8_p + 32 + 16 + 64) +
                                  (2 * side8_p + 32 + (48 + 32) + 128) + 256;
  const std::uint64_t fp_ops = stem_o + (2 * side8_o_8x8 + 64 * 64) +
                               (4 * side8_o_8x8 + 2 * 16 * 64 + 2 * 8 * 64 + 64 * 64) +
                               (2 * side8_o_4x4 + 2 * 16 * 16 + (2 * 16 * 16 * 2) + 128 * 16) +
                               256;
  const std::uint64_t bin_params = 2 * 576 + 4 * 576 + (2 * 576 + 2304);
  const std::uint64_t bin_ops = 2 * 576 * 64 + 4 * 576 * 64 + (2 * 576 * 16 + 2304 * 16);

  ModelStats s = model_stats(preset_config("full-bidrb"));
  EXPECT_EQ(s.params_fp, fp_params);
  EXPECT_EQ(s.ops_fp, fp_ops);
  EXPECT_EQ(s.params_bin_latent, bin_params);
  EXPECT_EQ(s.ops_bin, bin_ops);
}

TEST(ModelStats, GoldenFileMatches) {
  const std::string dir = BIDRN_SOURCE_DIR "/configs/";
  NetworkConfig cfg = load_config(dir + "tiny.json");
  const auto got = nlohmann::json::parse(stats_json(model_stats(cfg)));
  const auto want = nlohmann::json::parse(slurp(dir + "tiny.stats.json"));
  for (const char* k : {"params_fp", "params_bin_latent", "ops_fp", "ops_bin"})
    EXPECT_EQ(got.at(k).get<std::uint64_t>(), want.at(k).get<std::uint64_t>()) << k;
  for (const char* k : {"params_effective_M", "ops_effective_G"})
    EXPECT_NEAR(got.at(k).get<double>(), want.at(k).get<double>(),
                1e-9 * want.at(k).get<double>())
        << k;
  EXPECT_EQ(want.at("params_fp").get<std::uint64_t>(), 1224u);
  EXPECT_EQ(want.at("ops_bin").get<std::uint64_t>(), 276480u);
}

TEST(ModelStats, PreluAddsSlopes) {
  NetworkConfig cfg = preset_config("full-bidrb");
  const auto base = model_stats(cfg);
  cfg.preact = Preact::Prelu;
  const auto with = model_stats(cfg);
  // six modules; inputs 8@16x16, 8@8x8, 8@8x8, 16@8x8, 8@8x8, 16@4x4
  EXPECT_EQ(with.params_fp - base.params_fp, 8u + 8 + 8 + 16 + 8 + 16);
  EXPECT_EQ(with.ops_fp - base.ops_fp, 8u * 256 + 8 * 64 + 8 * 64 + 16 * 64 + 8 * 64 + 16 * 16);
  EXPECT_EQ(with.ops_bin, base.ops_bin);
}

TEST(ModelStats, BinarizedResidualMovesToBinaryBucket) {
  NetworkConfig cfg = preset_config("full-bidrb");
  const auto base = model_stats(cfg);
  cfg.blocks[0].block_residual.mode = BlockResidualMode::Binarized1x1;
  const auto bin = model_stats(cfg);
  EXPECT_EQ(base.params_fp - bin.params_fp, 64u);
  EXPECT_EQ(bin.params_bin_latent - base.params_bin_latent, 64u);
  EXPECT_EQ(bin.ops_bin - base.ops_bin, 64u * 64);
}

TEST(ModelStats, JsonLayout) {
  const std::string j = stats_json(model_stats(preset_config("full-bidrb")));
  EXPECT_EQ(j.back(), '\n');
  EXPECT_LT(j.find("params_fp"), j.find("params_bin_latent"));
  EXPECT_LT(j.find("ops_bin"), j.find("params_effective_M"));
  EXPECT_EQ(j.substr(0, 4), "{\n  ");
}

TEST(Bench, ShapeSets) {
  EXPECT_EQ(bench_shapes("small").size(), 4u);
  EXPECT_EQ(bench_shapes("large").size(), 4u);
  EXPECT_THROW(bench_shapes("huge"), ConfigError);
}

TEST(Bench, StableChecksumsAndSmallerFootprint) {
  const std::vector<BenchShape> shapes{{64, 16, 6, 6, 3, 1}, {256, 8, 4, 4, 3, 1}};
  const auto rows = bench_conv(shapes, 2, 1);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.checksums_stable);
    EXPECT_TRUE(std::isfinite(r.packed_checksum));
    EXPECT_EQ(r.ops, std::uint64_t(r.shape.out_channels) * r.reduction_len *
                         r.shape.height * r.shape.width);
    EXPECT_EQ(r.reduction_len, r.shape.in_channels * 9);
    EXPECT_GE(double(r.dense_bytes) / double(r.packed_bytes), 30.0);
  }
  const std::string csv = bench_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
