#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "pseudocorr/adapter.hpp"
#include "pseudocorr/sphere.hpp"

using namespace pseudocorr;

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

// ---- sphere ----

TEST(Sphere, RotationClosedForms) {
  const SpherePoint id = rotation_to_sphere({1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(id, (SpherePoint{0, 0, 1}));
  EXPECT_DOUBLE_EQ(id.theta(), 0.0);
  EXPECT_DOUBLE_EQ(id.phi(), 0.0);
  const SpherePoint flip = rotation_to_sphere({1, 0, 0, 0, -1, 0, 0, 0, -1});
  EXPECT_NEAR(flip.z, -1.0, 1e-12);
  EXPECT_NEAR(flip.theta(), kPi, 1e-12);
  const double c = std::cos(kPi / 2), s = std::sin(kPi / 2);
  const SpherePoint quarter = rotation_to_sphere({1, 0, 0, 0, c, -s, 0, s, c});
  EXPECT_NEAR(quarter.y, -1.0, 1e-12);
  EXPECT_NEAR(quarter.theta(), kPi / 2, 1e-12);
  EXPECT_NEAR(quarter.phi(), -kPi / 2, 1e-12);
}

TEST(Sphere, RotationRejectsNonRotations) {
  EXPECT_THROW(rotation_to_sphere({1, 0, 0, 0, 1, 0, 0, 0, -1}), ValidationError);
  EXPECT_THROW(rotation_to_sphere({2, 0, 0, 0, 1, 0, 0, 0, 1}), ValidationError);
}

TEST(Sphere, Geodesic) {
  const SpherePoint x{1, 0, 0}, y{0, 1, 0}, nx{-1, 0, 0};
  EXPECT_DOUBLE_EQ(geodesic(x, x), 0.0);
  EXPECT_DOUBLE_EQ(geodesic(x, nx), kPi);
  EXPECT_DOUBLE_EQ(geodesic(x, y), kPi / 2);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0, 1);
  for (int i = 0; i < 200; ++i) {
    const auto a = SpherePoint::normalized(nd(rng), nd(rng), nd(rng));
    const auto b = SpherePoint::normalized(nd(rng), nd(rng), nd(rng));
    const auto d = SpherePoint::normalized(nd(rng), nd(rng), nd(rng));
    EXPECT_EQ(geodesic(a, b), geodesic(b, a));
    EXPECT_LE(geodesic(a, d), geodesic(a, b) + geodesic(b, d) + 1e-9);
  }
}

TEST(Sphere, Angles) {
  const SpherePoint p = SpherePoint::from_angles(0.7, -2.1);
  EXPECT_NEAR(p.theta(), 0.7, 1e-12);
  EXPECT_NEAR(p.phi(), -2.1, 1e-12);
  EXPECT_THROW(SpherePoint::normalized(0, 0, 0), ValidationError);
}

TEST(Sphere, MeanOnSphere) {
  const SpherePoint a{0.6, 0.8, 0};
  EXPECT_NEAR(mean_on_sphere(std::vector<SpherePoint>{a}).x, 0.6, 1e-15);
  const SpherePoint m2 = mean_on_sphere(std::vector<SpherePoint>{a, a});
  EXPECT_NEAR(m2.y, 0.8, 1e-15);
  const SpherePoint m = mean_on_sphere(std::vector<SpherePoint>{{1, 0, 0}, {0, 1, 0}});
  EXPECT_NEAR(m.x, 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(m.y, 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(m.z, 0, 1e-15);
  const std::vector<double> w{3, 1};
  const SpherePoint mw = mean_on_sphere(std::vector<SpherePoint>{{1, 0, 0}, {0, 1, 0}}, w);
  EXPECT_NEAR(mw.x / mw.y, 3.0, 1e-12);
  EXPECT_THROW(mean_on_sphere(std::vector<SpherePoint>{{1, 0, 0}, {-1, 0, 0}}), Error);
  EXPECT_THROW(mean_on_sphere(std::vector<SpherePoint>{}), Error);
}

TEST(SphereReject, ThresholdExtremesAndMonotone) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0, 1);
  MatchSet set{"a", "b", {}};
  std::vector<SpherePoint> sa, sb;
  for (int i = 0; i < 60; ++i) {
    set.matches.push_back({{0, static_cast<double>(i)}, {0, static_cast<double>(i)}, 0});
    sa.push_back(SpherePoint::normalized(nd(rng), nd(rng), nd(rng)));
    sb.push_back(i % 5 == 0 ? sa.back() : SpherePoint::normalized(nd(rng), nd(rng), nd(rng)));
  }
  EXPECT_EQ(sphere_reject(set, sa, sb, kPi).matches.size(), 60u);
  EXPECT_EQ(sphere_reject(set, sa, sb, 0.0).matches.size(), 12u);
  std::size_t prev = 0;
  for (double t = 0; t <= kPi; t += 0.1) {
    const std::size_t n = sphere_reject(set, sa, sb, t).matches.size();
    EXPECT_GE(n, prev);
    prev = n;
  }
  EXPECT_THROW(sphere_reject(set, sa, std::vector<SpherePoint>(3), 0.5), ValidationError);
}

TEST(SphereReject, QuantizeAzimuth) {
  const SpherePoint p = SpherePoint::from_angles(1.0, 10.0 * kPi / 180);
  const SpherePoint q = quantize_azimuth(p, 45.0);
  EXPECT_NEAR(q.phi(), 22.5 * kPi / 180, 1e-12);
  EXPECT_NEAR(q.theta(), 1.0, 1e-12);
}

TEST(SphereLoss, PairLossExamples) {
  const SpherePoint x{1, 0, 0}, y{0, 1, 0};
  const std::vector<std::pair<SpherePoint, SpherePoint>> same{{x, y}};
  EXPECT_DOUBLE_EQ(sphere_pair_loss(same, same), 0.0);
  const std::vector<std::pair<SpherePoint, SpherePoint>> poses{{x, x}};
  EXPECT_DOUBLE_EQ(sphere_pair_loss(same, poses), 1.0);
}

TEST(SphereLoss, NonNegativeAndZeroWhenReproduced) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0, 1);
  SphereMapper<double> mapper({3, 5, 3}, 4);
  std::vector<SphereImage<double>> images(4);
  for (auto& img : images) {
    img.features = SphereMapper<double>::Matrix(3, 4);
    for (Eigen::Index i = 0; i < img.features.size(); ++i) img.features.data()[i] = nd(rng);
    img.pose = SpherePoint::normalized(nd(rng), nd(rng), nd(rng));
  }
  const std::vector<std::pair<int, int>> pairs{{0, 1}, {2, 3}, {1, 3}};
  EXPECT_GE(sphere_loss<double>(mapper, images, pairs), 0.0);
  EXPECT_EQ(sphere_loss<double>(mapper, images, std::vector<std::pair<int, int>>{}), 0.0);
  // Give every image the pose its own mapped mean points at: residuals vanish.
  for (auto& img : images) {
    const auto u = mapper.forward(img.features);
    const Eigen::Vector3d mean = u.rowwise().mean();
    img.pose = SpherePoint::normalized(mean.x(), mean.y(), mean.z());
  }
  EXPECT_NEAR(sphere_loss<double>(mapper, images, pairs), 0.0, 1e-24);
}

TEST(SphereMapperTest, UnitOutputsAndGolden) {
  SphereMapper<double> m({2, 4, 3}, 0);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) m.parameters()[i] = 0.5 * std::cos(1.0 + static_cast<double>(i));
  SphereMapper<double>::Matrix in(2, 2);
  in << 0.3, -1.2, 0.8, 0.5;
  const auto u = m.forward(in);
  const double golden[] = {0.7894547599208821,  0.59645501766227538, -0.14492271714178334,
                           0.60460247689065172, 0.76496028456815701, 0.22201713440879564};
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(u.data()[i], golden[i], 1e-12);
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(u.col(k).norm(), 1.0, 1e-12);
  SphereMapper<float> f({5, 3}, 1);
  EXPECT_TRUE(map_to_sphere(f, {}).empty());
  const std::vector<std::vector<float>> vecs{{1, 2, 3, 4, 5}, {-1, 0, 0, 2, 0.5f}};
  for (const auto& p : map_to_sphere(f, vecs)) EXPECT_NEAR(p.norm(), 1.0, 1e-6);
}

TEST(SphereMapperTest, TrainingLowersLoss) {
  // Features carry the pose directly; a linear map can recover it.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0, 1);
  std::vector<SphereImage<float>> images;
  std::vector<int> cats;
  for (int i = 0; i < 24; ++i) {
    SphereImage<float> img;
    img.pose = SpherePoint::from_angles(kPi / 2, 2 * kPi * i / 24.0);
    img.features = SphereMapper<float>::Matrix(4, 5);
    for (int k = 0; k < 5; ++k) {
      img.features(0, k) = static_cast<float>(img.pose.x + 0.05 * nd(rng));
      img.features(1, k) = static_cast<float>(img.pose.y + 0.05 * nd(rng));
      img.features(2, k) = static_cast<float>(0.05 * nd(rng));
      img.features(3, k) = static_cast<float>(nd(rng));
    }
    images.push_back(img);
    cats.push_back(0);
  }
  SphereMapper<float> mapper({4, 8, 3}, 2);
  SphereTrainConfig cfg;
  cfg.steps = 400;
  cfg.lr = 1e-2;
  const SphereTrainLog log = train_sphere_mapper(mapper, images, cats, cfg);
  ASSERT_EQ(log.losses.size(), 400u);
  double head = 0, tail = 0;
  for (int i = 0; i < 40; ++i) {
    head += log.losses[i];
    tail += log.losses[360 + i];
  }
  EXPECT_LT(tail, 0.5 * head);
}

// ---- adapter ----

TEST(AdapterTest, StartsAsIdentity) {
  AdapterShape shape{6, 3, 2, 0};
  const Adapter<double> a(shape, 7);
  Adapter<double>::Matrix x = Adapter<double>::Matrix::Random(6, 4);
  EXPECT_EQ(a.forward(x), x);
  shape.out_channels = 6;
  const Adapter<double> b(shape, 7);
  EXPECT_EQ(b.forward(x), x);
}

TEST(AdapterTest, GoldenForward) {
  AdapterShape sh{3, 2, 2, 2};
  std::vector<double> p(sh.parameter_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.5 * std::sin(1.0 + static_cast<double>(i));
  const Adapter<double> a(sh, p);
  Adapter<double>::Matrix x(3, 2);
  x << 0.1, -0.4, 0.7, 0.2, -0.3, 0.9;
  const auto y = a.forward(x);
  const double golden[] = {-0.69817834115737032, -0.43105608811358831, 0.15095268600611494, 0.29970672310384794};
  ASSERT_EQ(y.size(), 4);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y.data()[i], golden[i], 1e-12);
}

TEST(AdapterTest, SingleCellMapAndCounts) {
  const AdapterShape sh{4, 2, 1, 0};
  EXPECT_EQ(sh.parameter_count(), 2u * 4 * 2 + 2 + 4);
  std::vector<double> p(sh.parameter_count(), 0.1);
  const Adapter<double> a(sh, p);
  FeatureMapD m(1, 1, 4, std::vector<double>{1, 2, 3, 4});
  const FeatureMapD out = a.forward(m);
  Adapter<double>::Matrix x(4, 1);
  x << 1, 2, 3, 4;
  const auto y = a.forward(x);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(out.at(0, 0)[c], y(c, 0));
  EXPECT_LE(AdapterShape{}.parameter_count(), kDeskParameterBudget);
  const std::size_t full = AdapterShape::full_scale_preset().parameter_count();
  EXPECT_GT(full, 4'500'000u);
  EXPECT_LT(full, 5'500'000u);
}

TEST(SparseLoss, ClosedForms) {
  FeatureRows<double> e = FeatureRows<double>::Identity(2, 2);
  const double tau = 0.07;
  EXPECT_NEAR(sparse_contrastive_loss<double>(e, e, tau), std::log1p(std::exp(-1 / tau)), 1e-15);
  FeatureRows<double> same = FeatureRows<double>::Ones(3, 4);
  EXPECT_NEAR(sparse_contrastive_loss<double>(same, same, 0.3), std::log(4.0), 1e-12);
  FeatureRows<double> one = FeatureRows<double>::Ones(3, 1);
  EXPECT_EQ(sparse_contrastive_loss<double>(one, one, 0.1), 0.0);
}

TEST(SparseLoss, InputGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0, 1);
  for (int cfg = 0; cfg < 20; ++cfg) {
    const int c = 2 + cfg % 4, n = 2 + cfg % 5;
    FeatureRows<double> a(c, n), b(c, n);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] = nd(rng);
      b.data()[i] = nd(rng);
    }
    const double tau = 0.1 + 0.1 * (cfg % 3);
    FeatureRows<double> ga, gb;
    sparse_contrastive_loss<double>(a, b, tau, &ga, &gb);
    double diff = 0, norm = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      for (int side = 0; side < 2; ++side) {
        FeatureRows<double>& m = side ? b : a;
        const double keep = m.data()[i];
        m.data()[i] = keep + 1e-5;
        const double up = sparse_contrastive_loss<double>(a, b, tau);
        m.data()[i] = keep - 1e-5;
        const double dn = sparse_contrastive_loss<double>(a, b, tau);
        m.data()[i] = keep;
        const double fd = (up - dn) / 2e-5;
        const double an = side ? gb.data()[i] : ga.data()[i];
        diff += (fd - an) * (fd - an);
        norm += fd * fd;
      }
    }
    EXPECT_LE(std::sqrt(diff / std::max(norm, 1e-24)), 1e-4) << "config " << cfg;
  }
}

TEST(DenseLoss, ExactHitGivesZeroAndGolden) {
  std::mt19937_64 rng(9);
  FeatureMapD tgt(6, 6, 3);
  tgt.at(2, 3)[0] = 1.0;
  FeatureRows<double> src(3, 1);
  src << 1, 0, 0;
  // Every other cell has zero similarity; at tiny temperature the window
  // soft-argmax sits on (2, 3).
  const std::vector<GridPoint> at{{2, 3}};
  EXPECT_NEAR(dense_loss<double>(src, tgt, at, {}, 3, 1e-4).loss, 0.0, 1e-12);

  std::vector<double> t(6 * 6 * 3);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::sin(0.7 * i) + 0.1 * std::cos(1.3 * i);
  const FeatureMapD g(6, 6, 3, t);
  FeatureRows<double> s(3, 3);
  s << 0.2, -0.5, 0.9, 0.4, 0.1, -0.3, -0.7, 0.6, 0.2;
  const std::vector<GridPoint> pts{{1, 2}, {4, 4}, {3, 0}};
  const std::vector<GridPoint> noise{{0.1, -0.2}, {0.0, 0.3}, {-0.25, 0.05}};
  EXPECT_NEAR(dense_loss<double>(s, g, pts, noise, 3, 0.2, false).loss, 10.846319358346641, 1e-10);
  EXPECT_THROW(dense_loss<double>(s, g, at, {}, 3, 0.2), ValidationError);
}

// ---- optimizer and trainer ----

TEST(Optim, ScheduleAnchors) {
  const double peak = 5e-3;
  EXPECT_DOUBLE_EQ(lr_schedule(0, 1000, peak, 0.3), peak / 25);
  EXPECT_NEAR(lr_schedule(300, 1000, peak, 0.3), peak, 1e-15);
  EXPECT_NEAR(lr_schedule(1000, 1000, peak, 0.3), peak / 1e4, 1e-12);
  double prev = peak;
  for (int s = 300; s <= 1000; s += 10) {
    const double lr = lr_schedule(s, 1000, peak, 0.3);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  EXPECT_THROW(lr_schedule(1001, 1000, peak, 0.3), ValidationError);
}

TEST(Optim, FirstAdamWStepByHand) {
  std::vector<double> w{1.0, -2.0};
  const std::vector<double> g{0.5, -4.0};
  AdamWState<double> st;
  const AdamWConfig cfg{0.9, 0.999, 1e-8, 0.01};
  adamw_step<double>(w, g, st, 0.1, cfg);
  // Bias correction makes m_hat = g and v_hat = g^2 on the first step.
  EXPECT_NEAR(w[0], 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(w[1], -2.0 * (1 - 0.1 * 0.01) + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 1);
}

namespace {

struct TrainFixture {
  std::vector<FeatureMapD> maps;
  std::vector<TrainPair<double>> data;
};

// Target maps are shifted copies of the sources in the first four channels;
// the last two channels are independent distractors the adapter must learn to mute.
TrainFixture make_train_fixture(std::uint64_t seed, int pairs = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0, 1);
  TrainFixture fx;
  fx.maps.reserve(8);
  for (int i = 0; i < 4; ++i) {
    FeatureMapD a(8, 8, 6), b(8, 8, 6);
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) {
        for (int k = 0; k < 4; ++k) a.at(r, c)[k] = nd(rng);
        for (int k = 4; k < 6; ++k) a.at(r, c)[k] = nd(rng);
      }
    }
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) {
        for (int k = 0; k < 4; ++k) b.at(r, c)[k] = a.at(r, (c + 1) % 8)[k];
        for (int k = 4; k < 6; ++k) b.at(r, c)[k] = nd(rng);
      }
    }
    fx.maps.push_back(std::move(a));
    fx.maps.push_back(std::move(b));
  }
  for (int i = 0; i < pairs; ++i) {
    TrainPair<double> p{&fx.maps[2 * i], &fx.maps[2 * i + 1], {}, "p" + std::to_string(i)};
    for (int r = 0; r < 8; ++r) {
      for (int c = 1; c < 8; ++c) {
        p.matches.push_back({{static_cast<double>(r), static_cast<double>(c)}, {static_cast<double>(r), c - 1.0}, 1});
      }
    }
    fx.data.push_back(std::move(p));
  }
  return fx;
}

TrainConfig small_train_config() {
  TrainConfig tc;
  tc.steps = 200;
  tc.window = 3;
  tc.max_matches = 56;
  tc.peak_lr = 1e-2;
  tc.noise_sigma = 0.1;
  tc.softargmax_temperature = 0.1;
  tc.seed = 4;
  return tc;
}

}  // namespace

TEST(TrainerTest, ZeroLearningRateKeepsParameters) {
  const TrainFixture fx = make_train_fixture(1);
  TrainConfig tc = small_train_config();
  tc.steps = 10;
  tc.peak_lr = 0.0;
  const Adapter<double> init(AdapterShape{6, 4, 2, 0}, 3);
  Trainer<double> t(init, tc, fx.data);
  t.run();
  EXPECT_EQ(std::memcmp(t.adapter().parameters().data(), init.parameters().data(),
                        init.parameters().size() * sizeof(double)),
            0);
}

TEST(TrainerTest, SmoothedLossDecreases) {
  int decreasing = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TrainFixture fx = make_train_fixture(10 + seed, 1);
    TrainConfig tc = small_train_config();
    tc.seed = seed;
    Trainer<double> t(Adapter<double>(AdapterShape{6, 4, 2, 0}, seed), tc, fx.data);
    std::vector<double> losses;
    t.run([&](const StepRecord& s) { losses.push_back(s.loss_sparse + s.loss_dense); });
    ASSERT_EQ(losses.size(), 200u);
    // Means over consecutive windows of 20 steps.
    std::vector<double> windows;
    for (int w = 0; w < 10; ++w) {
      double m = 0;
      for (int i = 0; i < 20; ++i) m += losses[w * 20 + i];
      windows.push_back(m / 20);
    }
    // net drop, last window against first
    decreasing += windows.back() < 0.6 * windows.front();
  }
  EXPECT_GE(decreasing, 4);
}

TEST(TrainerTest, ResumeMatchesUninterrupted) {
  const TrainFixture fx = make_train_fixture(2);
  TrainConfig tc = small_train_config();
  tc.steps = 30;
  tc.pairs_per_step = 2;
  const Adapter<double> init(AdapterShape{6, 4, 2, 6}, 5);
  Trainer<double> full(init, tc, fx.data);
  full.run();

  Trainer<double> first(init, tc, fx.data);
  for (int i = 0; i < 13; ++i) first.step();
  Trainer<double> resumed(init, tc, fx.data);
  resumed.restore(first.adapter().parameters(), first.optimizer(), first.current_step());
  resumed.run();
  const auto& a = full.adapter().parameters();
  const auto& b = resumed.adapter().parameters();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
  EXPECT_EQ(full.optimizer(), resumed.optimizer());
}

TEST(TrainerTest, ConfigValidation) {
  TrainConfig tc;
  tc.window = 4;
  EXPECT_THROW(validate(tc), ValidationError);
  tc = TrainConfig{};
  tc.warmup_frac = 1.5;
  EXPECT_THROW(validate(tc), ValidationError);
  tc = TrainConfig{};
  tc.pairs_per_step = 0;
  EXPECT_THROW(validate(tc), ValidationError);
}
