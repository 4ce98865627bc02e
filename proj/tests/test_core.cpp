#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pseudocorr/matching.hpp"

using namespace pseudocorr;

namespace {

FeatureMap map_from(int h, int w, int c, std::vector<float> v) { return FeatureMap(h, w, c, std::move(v)); }

// 2x2 grid of one-hot features along the first four axes.
FeatureMap orthogonal_2x2() {
  return map_from(2, 2, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
}

FeatureMap random_map(std::mt19937_64& rng, int h, int w, int c) {
  std::normal_distribution<float> nd(0, 1);
  FeatureMap m(h, w, c);
  for (auto& x : m.data()) x = nd(rng);
  return m;
}

}  // namespace

TEST(Cosine, HandValues) {
  const std::vector<float> a{1, 0}, b{0, 1}, c{1, 2, 2}, d{2, 1, 2};
  EXPECT_FLOAT_EQ(cosine_sim<float>(a, a), 1.0f);
  EXPECT_FLOAT_EQ(cosine_sim<float>(a, b), 0.0f);
  EXPECT_NEAR(cosine_sim<float>(c, d), 8.0 / 9.0, 1e-7);
}

TEST(Cosine, ZeroNormCountsDiagnostic) {
  SimilarityDiagnostics diag;
  const std::vector<double> z{0, 0, 0}, a{1, 2, 3};
  EXPECT_EQ(cosine_sim<double>(z, a, &diag), 0.0);
  EXPECT_EQ(diag.zero_norm_pairs.load(), 1u);
}

TEST(Cosine, LengthMismatchThrows) {
  const std::vector<float> a{1, 0}, b{1, 0, 0};
  EXPECT_THROW(cosine_sim<float>(a, b), ValidationError);
}

TEST(SimMap, SelfQueryPeaksAtOwnCell) {
  std::mt19937_64 rng(1);
  const FeatureMap m = random_map(rng, 5, 4, 6);
  const auto sims = sim_map<float>({3, 1}, m, m);
  const auto best = std::max_element(sims.begin(), sims.end()) - sims.begin();
  EXPECT_EQ(best, 3 * 4 + 1);
  EXPECT_NEAR(sims[best], 1.0f, 1e-6);
}

TEST(SimMap, SingleCellTarget) {
  const FeatureMap src = orthogonal_2x2();
  const FeatureMap tgt = map_from(1, 1, 4, {0, 0, 1, 0});
  EXPECT_EQ(sim_map<float>({1, 0}, src, tgt).size(), 1u);
}

TEST(SimMap, OrthogonalFixture) {
  const FeatureMap m = orthogonal_2x2();
  EXPECT_EQ(sim_map<float>({1, 0}, m, m), (std::vector<float>{0, 0, 1, 0}));
}

TEST(SimMap, NonIntegralQueryThrows) {
  const FeatureMap m = orthogonal_2x2();
  EXPECT_THROW(sim_map<float>({0.5, 0}, m, m), ValidationError);
  EXPECT_THROW(sim_map<float>({2, 0}, m, m), ValidationError);
}

TEST(MaskedPoints, RowMajor) {
  EXPECT_TRUE(masked_points(Mask(3, 3)).empty());
  Mask one(4, 5);
  one.set(2, 3);
  EXPECT_EQ(masked_points(one), (std::vector<GridPoint>{{2, 3}}));
  EXPECT_EQ(masked_points(Mask(2, 2, true)), (std::vector<GridPoint>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
}

TEST(FeatureMap, RejectsBadShapes) {
  EXPECT_THROW(FeatureMap(0, 2, 2), ValidationError);
  EXPECT_THROW(FeatureMap(2, 2, 2, std::vector<float>(7)), ValidationError);
  EXPECT_THROW(orthogonal_2x2().slice_channels(3, 2), ValidationError);
  const FeatureMap s = orthogonal_2x2().slice_channels(1, 2);
  EXPECT_EQ(s.channels(), 2);
  EXPECT_EQ(s.at(0, 1)[0], 1.0f);
}

TEST(NnMatch, SelfMatch) {
  std::mt19937_64 rng(2);
  const FeatureMap m = random_map(rng, 6, 7, 5);
  for (const auto& p : masked_points(Mask(6, 7, true))) {
    const Match got = nn_match(p, m, m);
    EXPECT_EQ(got.tgt, p);
    EXPECT_NEAR(got.score, 1.0, 1e-6);
  }
}

TEST(NnMatch, OrthogonalFixture) {
  const FeatureMap m = orthogonal_2x2();
  const Match got = nn_match<float>({1, 0}, m, m);
  EXPECT_EQ(got.tgt, (GridPoint{1, 0}));
  EXPECT_FLOAT_EQ(got.score, 1.0);
}

TEST(NnMatch, MaskExcludingArgmaxGivesSecondBest) {
  std::mt19937_64 rng(3);
  const FeatureMap src = random_map(rng, 4, 4, 8);
  const FeatureMap tgt = random_map(rng, 5, 6, 8);
  const GridPoint q{2, 1};
  const Match unmasked = nn_match(q, src, tgt);
  Mask mask(5, 6, true);
  mask.set(static_cast<int>(unmasked.tgt.row), static_cast<int>(unmasked.tgt.col), false);
  // Brute force over the remaining cells.
  const auto sims = sim_map(q, src, tgt);
  int best = -1;
  for (int i = 0; i < 30; ++i) {
    if (!mask.bits()[i]) continue;
    if (best < 0 || sims[i] > sims[best]) best = i;
  }
  const Match masked = nn_match(q, src, tgt, &mask);
  EXPECT_EQ(masked.tgt, (GridPoint{static_cast<double>(best / 6), static_cast<double>(best % 6)}));
}

TEST(NnMatch, TiesGoToFirstCell) {
  const FeatureMap src = map_from(1, 1, 2, {1, 0});
  const FeatureMap tgt = map_from(2, 2, 2, {0, 1, 2, 0, 0, 1, 1, 0});
  EXPECT_EQ(nn_match<float>({0, 0}, src, tgt).tgt, (GridPoint{0, 1}));
}

TEST(NnMatch, EmptyMaskThrows) {
  const FeatureMap m = orthogonal_2x2();
  const Mask none(2, 2);
  EXPECT_THROW(nn_match<float>({0, 0}, m, m, &none), ValidationError);
}

TEST(NnMatchAll, EmptyAndSingle) {
  const FeatureMap m = orthogonal_2x2();
  EXPECT_TRUE(nn_match_all<float>({}, m, m).empty());
  const std::vector<GridPoint> one{{0, 1}};
  const MatchSet s = nn_match_all<float>(one, m, m);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.matches[0], nn_match<float>({0, 1}, m, m));
}

TEST(NnMatchAll, EqualsPerPointLoop) {
  std::mt19937_64 rng(4);
  const FeatureMap src = random_map(rng, 10, 10, 12);
  const FeatureMap tgt = random_map(rng, 9, 11, 12);
  std::vector<GridPoint> pts;
  for (int k = 0; k < 50; ++k) pts.push_back({static_cast<double>(rng() % 10), static_cast<double>(rng() % 10)});
  const MatchSet all = nn_match_all<float>(pts, src, tgt);
  for (std::size_t k = 0; k < pts.size(); ++k) EXPECT_EQ(all.matches[k], nn_match(pts[k], src, tgt));
}

TEST(SoftArgmax, UniformWindowGivesCentroid) {
  const std::vector<double> sims(7 * 7, 0.3);
  // Peak is cell 0 under the first-max rule; the clipped window is rows/cols 0..2.
  const auto w = soft_argmax_window<double>(sims, 7, 7, 5, 0.1);
  EXPECT_DOUBLE_EQ(w.location.row, 1.0);
  EXPECT_DOUBLE_EQ(w.location.col, 1.0);
}

TEST(SoftArgmax, LowTemperatureApproachesArgmax) {
  std::mt19937_64 rng(5);
  const FeatureMapD src = random_map(rng, 6, 6, 4).cast<double>();
  const FeatureMapD tgt = random_map(rng, 8, 9, 4).cast<double>();
  const GridPoint q{2, 3};
  const GridPoint soft = window_soft_argmax(q, src, tgt, 5, 1e-6);
  const GridPoint hard = nn_match(q, src, tgt).tgt;
  EXPECT_NEAR(soft.row, hard.row, 1e-3);
  EXPECT_NEAR(soft.col, hard.col, 1e-3);
}

TEST(SoftArgmax, TwoEqualPeaksGiveMidpoint) {
  std::vector<double> sims(9 * 9, -1.0);
  sims[4 * 9 + 3] = 1.0;
  sims[4 * 9 + 5] = 1.0;
  const auto w = soft_argmax_window<double>(sims, 9, 9, 5, 1e-3);
  EXPECT_NEAR(w.location.row, 4.0, 1e-12);
  EXPECT_NEAR(w.location.col, 4.0, 1e-12);
}

TEST(SoftArgmax, InvalidArguments) {
  const std::vector<float> sims(16, 0.0f);
  EXPECT_THROW(soft_argmax_window<float>(sims, 4, 4, 4, 0.1f), ValidationError);
  EXPECT_THROW(soft_argmax_window<float>(sims, 4, 4, 5, 0.1f), ValidationError);
  EXPECT_THROW(soft_argmax_window<float>(sims, 4, 4, 3, 0.0f), ValidationError);
}
