#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "pseudocorr/chaining.hpp"
#include "pseudocorr/filtering.hpp"

using namespace pseudocorr;

namespace {

FeatureMap one_hot_row(std::vector<int> axes, int channels, std::string id) {
  FeatureMap m(1, static_cast<int>(axes.size()), channels, std::move(id));
  for (std::size_t i = 0; i < axes.size(); ++i) m.cell(static_cast<int>(i))[axes[i]] = 1.0f;
  return m;
}

FeatureMap random_map(std::mt19937_64& rng, int h, int w, int c, std::string id) {
  std::normal_distribution<float> nd(0, 1);
  FeatureMap m(h, w, c, std::move(id));
  for (auto& x : m.data()) x = nd(rng);
  return m;
}

ImageRecord record(const std::string& id, const std::string& cat, double deg) {
  ImageRecord r;
  r.image_id = id;
  r.category = cat;
  r.azimuth_deg = deg;
  r.azimuth_bin = azimuth_bin_of(deg);
  r.bbox = {0, 0, 10, 10};
  r.feature_path = id + ".ccf";
  r.mask_path = id + ".ccm";
  return r;
}

MatchSet identity_set(const FeatureMap& m) {
  const auto pts = masked_points(Mask(m.height(), m.width(), true));
  return nn_match_all<float>(pts, m, m);
}

}  // namespace

TEST(CyclicFilter, IdentityKeepsAll) {
  std::mt19937_64 rng(1);
  FeatureMap m = random_map(rng, 5, 5, 6, "a");
  const MatchSet set = identity_set(m);
  const Filtered f = cyclic_filter(set, m, m, nullptr, nullptr);
  EXPECT_EQ(f.matches, set);
  EXPECT_EQ(f.report.kept_count, 25u);
  EXPECT_EQ(f.report.rejected_count, 0u);
}

TEST(CyclicFilter, DuplicateTargetBackMatchesFirstSource) {
  // Source cells 0 and 2 carry the same feature; the back-match of their
  // common target resolves to source cell 0, so the match from cell 2 fails.
  const FeatureMap src = one_hot_row({0, 1, 0}, 3, "s");
  const FeatureMap tgt = one_hot_row({2, 0, 1}, 3, "t");
  const std::vector<GridPoint> pts{{0, 0}, {0, 1}, {0, 2}};
  const MatchSet set = nn_match_all<float>(pts, src, tgt);
  ASSERT_EQ(set.matches[0].tgt, (GridPoint{0, 1}));
  ASSERT_EQ(set.matches[2].tgt, (GridPoint{0, 1}));
  const Filtered f = cyclic_filter(set, src, tgt, nullptr, nullptr);
  ASSERT_EQ(f.matches.size(), 2u);
  EXPECT_EQ(f.matches.matches[0].src, (GridPoint{0, 0}));
  EXPECT_EQ(f.matches.matches[1].src, (GridPoint{0, 1}));
  EXPECT_EQ(f.report.rejection_reasons.at(reason::kBackwardMismatch), 1u);
}

TEST(CyclicFilter, ForwardMismatchRejected) {
  const FeatureMap m = one_hot_row({0, 1}, 2, "a");
  MatchSet set{"a", "a", {{{0, 0}, {0, 1}, 0.0}}};
  const Filtered f = cyclic_filter(set, m, m, nullptr, nullptr);
  EXPECT_TRUE(f.matches.empty());
  EXPECT_EQ(f.report.rejection_reasons.at(reason::kForwardMismatch), 1u);
}

TEST(CyclicFilter, EmptySet) {
  const FeatureMap m = one_hot_row({0}, 1, "a");
  const Filtered f = cyclic_filter(MatchSet{"a", "a", {}}, m, m, nullptr, nullptr);
  EXPECT_TRUE(f.matches.empty());
  EXPECT_EQ(f.report.input_count, 0u);
}

TEST(RelaxedFilter, RadiusLimits) {
  std::mt19937_64 rng(2);
  const FeatureMap a = random_map(rng, 6, 6, 3, "a");
  const FeatureMap b = random_map(rng, 6, 6, 3, "b");
  const MatchSet set = nn_match_all<float>(masked_points(Mask(6, 6, true)), a, b);
  EXPECT_TRUE(relaxed_cyclic_filter(set, a, b, nullptr, nullptr, 0.0).matches.empty());
  EXPECT_EQ(relaxed_cyclic_filter(set, a, b, nullptr, nullptr, kUnboundedRadius).matches, set);
  EXPECT_EQ(relaxed_cyclic_filter(set, a, b, nullptr, nullptr, 0.5).matches,
            cyclic_filter(set, a, b, nullptr, nullptr).matches);
  EXPECT_THROW(relaxed_cyclic_filter(set, a, b, nullptr, nullptr, -1.0), ValidationError);
}

TEST(RelaxedFilter, OnePatchDeviationPassesDefaultRadius) {
  // Source cells 0 and 1 are near-duplicates; the back-match of the match from
  // cell 1 lands on cell 0, one patch away.
  FeatureMap src(1, 4, 2, "s");
  src.at(0, 0)[0] = 1.0f;
  src.at(0, 1)[0] = 0.99f;
  src.at(0, 1)[1] = 0.01f;
  src.at(0, 2)[1] = 1.0f;
  src.at(0, 3)[0] = 1.0f;
  src.at(0, 3)[1] = -1.0f;
  FeatureMap tgt(1, 2, 2, "t");
  tgt.at(0, 0)[0] = 1.0f;
  tgt.at(0, 1)[1] = 1.0f;
  const MatchSet set{"s", "t", {{{0, 1}, {0, 0}, 0.0}, {{0, 3}, {0, 0}, 0.0}}};
  EXPECT_EQ(relaxed_cyclic_filter(set, src, tgt, nullptr, nullptr, kDefaultRMax).matches.size(), 1u);
  EXPECT_TRUE(relaxed_cyclic_filter(set, src, tgt, nullptr, nullptr, 1.0).matches.empty());
}

TEST(CycleFilterChoice, Describe) {
  EXPECT_EQ(CycleFilter::none().describe(), "none");
  EXPECT_EQ(CycleFilter::exact().describe(), "exact");
  EXPECT_EQ(CycleFilter::relaxed(1.5).describe(), "relaxed:1.5");
}

TEST(Azimuth, CircularDistance) {
  EXPECT_DOUBLE_EQ(d_circ(0, 180), 180);
  EXPECT_DOUBLE_EQ(d_circ(350, 10), 20);
  EXPECT_DOUBLE_EQ(d_circ(45, 45), 0);
  EXPECT_DOUBLE_EQ(d_circ(-30, 30), 60);
}

TEST(Azimuth, Bins) {
  EXPECT_EQ(azimuth_bin_of(0), 0);
  EXPECT_EQ(azimuth_bin_of(44.9), 0);
  EXPECT_EQ(azimuth_bin_of(45), 1);
  EXPECT_EQ(azimuth_bin_of(359), 7);
  EXPECT_EQ(azimuth_bin_of(-1), 7);
  EXPECT_DOUBLE_EQ(normalize_azimuth(-90), 270);
}

TEST(Records, Validation) {
  ImageRecord r = record("a", "c", 100);
  EXPECT_NO_THROW(validate_record(r));
  r.azimuth_bin = 0;
  EXPECT_THROW(validate_record(r), ValidationError);
  r.azimuth_from_bin = true;
  r.azimuth_deg = 22.5;
  EXPECT_NO_THROW(validate_record(r));
  r.azimuth_bin = 8;
  EXPECT_THROW(validate_record(r), ValidationError);
  ImageRecord bad = record("b", "c", 10);
  bad.rotation = Mat3{1, 0, 0, 0, 1, 0, 0, 0, 2};
  EXPECT_THROW(validate_record(bad), ValidationError);
}

TEST(Chains, SingleBinGivesNone) {
  std::vector<ImageRecord> recs;
  for (int i = 0; i < 6; ++i) recs.push_back(record("i" + std::to_string(i), "c", 10.0 + i));
  EXPECT_TRUE(sample_chains(recs, 4, 20, 0).empty());
}

TEST(Chains, FourBinsMatchEnumeration) {
  const std::vector<ImageRecord> recs{record("a", "c", 0), record("b", "c", 45), record("c", "c", 90),
                                      record("d", "c", 135)};
  // Exhaustive oracle over every ordering of the four records.
  std::vector<int> order{0, 1, 2, 3};
  std::vector<std::vector<std::string>> valid;
  do {
    bool ok = true;
    for (int k = 0; k + 1 < 4; ++k) {
      const auto& x = recs[order[k]];
      const auto& y = recs[order[k + 1]];
      ok = ok && x.azimuth_bin != y.azimuth_bin && d_circ(x.azimuth_deg, y.azimuth_deg) < 90.0;
    }
    if (ok) {
      std::vector<std::string> ids;
      for (int i : order) ids.push_back(recs[i].image_id);
      valid.push_back(ids);
    }
  } while (std::next_permutation(order.begin(), order.end()));
  const std::vector<std::string> ascending{"a", "b", "c", "d"};
  ASSERT_NE(std::find(valid.begin(), valid.end(), ascending), valid.end());

  const auto chains = sample_chains(recs, 4, 50, 1);
  ASSERT_FALSE(chains.empty());
  bool saw_ascending = false;
  for (const auto& ch : chains) {
    EXPECT_EQ(check_chain(ch, recs), "");
    EXPECT_NE(std::find(valid.begin(), valid.end(), ch.images), valid.end());
    saw_ascending = saw_ascending || ch.images == ascending;
  }
  EXPECT_TRUE(saw_ascending);
}

TEST(Chains, DeterministicAndValid) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> az(0, 360);
  std::vector<ImageRecord> recs;
  for (int i = 0; i < 30; ++i) recs.push_back(record("i" + std::to_string(i), i % 2 ? "x" : "y", az(rng)));
  const auto a = sample_chains(recs, 4, 25, 9);
  const auto b = sample_chains(recs, 4, 25, 9);
  EXPECT_EQ(a, b);
  for (const auto& ch : a) {
    EXPECT_EQ(check_chain(ch, recs), "");
    EXPECT_EQ(ch.images.size(), 4u);
  }
}

TEST(Chains, CheckerFlagsBadHop) {
  const std::vector<ImageRecord> recs{record("a", "c", 0), record("b", "c", 100), record("c", "c", 130)};
  EXPECT_NE(check_chain(Chain{{"a", "b", "c"}, "c"}, recs), "");
}

TEST(NaivePairs, SmallCategories) {
  EXPECT_TRUE(sample_naive_pairs({record("a", "c", 0)}, 5, 0).empty());
  const std::vector<ImageRecord> two{record("a", "c", 0), record("b", "c", 200)};
  EXPECT_EQ(sample_naive_pairs(two, 5, 0), (std::vector<std::pair<std::string, std::string>>{{"a", "b"}}));
  EXPECT_EQ(sample_naive_pairs(two, 5, 0, true),
            (std::vector<std::pair<std::string, std::string>>{{"a", "b"}, {"b", "a"}}));
}

TEST(NaivePairs, Reproducible) {
  std::vector<ImageRecord> recs;
  for (int i = 0; i < 12; ++i) recs.push_back(record("i" + std::to_string(i), "c", 30.0 * i));
  const auto a = sample_naive_pairs(recs, 10, 4);
  EXPECT_EQ(a, sample_naive_pairs(recs, 10, 4));
  EXPECT_EQ(a.size(), 10u);
}

TEST(Propagate, IdenticalImagesGiveIdentity) {
  std::mt19937_64 rng(5);
  const FeatureMap m = random_map(rng, 4, 5, 8, "");
  ImageStore store;
  for (const char* id : {"a", "b", "c", "d"}) store.insert(id, m, Mask(4, 5, true));
  const Propagation p = propagate(Chain{{"a", "b", "c", "d"}, "c"}, store, CycleFilter::relaxed(kDefaultRMax));
  ASSERT_EQ(p.composed.size(), 3u);
  for (const auto& set : p.composed) {
    EXPECT_EQ(set.size(), 20u);
    for (const auto& mt : set.matches) EXPECT_EQ(mt.src, mt.tgt);
  }
  EXPECT_FALSE(p.truncated);
}

TEST(Propagate, MissingPartDropped) {
  // Part 2 is absent from b. Its point ties at zero similarity everywhere, so it
  // lands on b's first cell, whose back-match returns two patches away.
  FeatureMap b = one_hot_row({0, 1, 0}, 4, "b");
  b.at(0, 2)[0] = 0.5f;
  b.at(0, 2)[3] = 0.1f;
  ImageStore store;
  store.insert("a", one_hot_row({0, 1, 2}, 4, "a"), Mask(1, 3, true));
  store.insert("b", b, Mask(1, 3, true));
  store.insert("c", one_hot_row({0, 1, 2}, 4, "c"), Mask(1, 3, true));
  const Propagation p = propagate(Chain{{"a", "b", "c"}, "c"}, store, CycleFilter::relaxed(kDefaultRMax));
  ASSERT_EQ(p.composed.size(), 2u);
  for (const auto& set : p.composed) {
    EXPECT_EQ(set.size(), 2u);
    for (const auto& mt : set.matches) EXPECT_NE(mt.src, (GridPoint{0, 2}));
  }
  EXPECT_EQ(p.hop_reports[0].rejected_count, 1u);
}

TEST(Propagate, TwoImagesEqualsMatchThenFilter) {
  std::mt19937_64 rng(6);
  ImageStore store;
  store.insert("a", random_map(rng, 6, 6, 4, "a"), Mask(6, 6, true));
  Mask mb(6, 6, true);
  mb.set(0, 0, false);
  store.insert("b", random_map(rng, 6, 6, 4, "b"), mb);
  const auto& a = store.at("a");
  const auto& b = store.at("b");
  const MatchSet direct = nn_match_all<float>(masked_points(a.mask), a.features, b.features, &b.mask);
  const Filtered expect = relaxed_cyclic_filter(direct, a.features, b.features, &a.mask, &b.mask, kDefaultRMax);
  const Propagation p = propagate(Chain{{"a", "b"}, "c"}, store, CycleFilter::relaxed(kDefaultRMax));
  ASSERT_EQ(p.composed.size(), 1u);
  ASSERT_EQ(p.composed[0].size(), expect.matches.size());
  for (std::size_t i = 0; i < expect.matches.size(); ++i) {
    EXPECT_EQ(p.composed[0].matches[i].src, expect.matches.matches[i].src);
    EXPECT_EQ(p.composed[0].matches[i].tgt, expect.matches.matches[i].tgt);
  }
  const Propagation none = propagate(Chain{{"a", "b"}, "c"}, store, CycleFilter::none());
  EXPECT_EQ(none.composed[0].size(), direct.size());
}
