#include <catch2/catch_amalgamated.hpp>

#include "tpsdf/analytic.hpp"
#include "tpsdf/losses.hpp"
#include "tpsdf/rng.hpp"

using namespace tpsdf;

TEST_CASE("loss_rgb closed forms and oracle") {
  std::vector<double> a(48), b(48);
  Rng rng = Rng(1).stream("rgb");
  for (auto& v : a) v = rng.uniform();
  b = a;
  CHECK(loss_rgb(a.data(), b.data(), 48) == 0.0);

  for (auto& v : b) v += 0.1;
  CHECK(loss_rgb(a.data(), b.data(), 48) == Catch::Approx(0.01).epsilon(1e-12));

  for (auto& v : b) v = rng.uniform();
  double oracle = 0;
  for (size_t i = 0; i < a.size(); ++i) oracle += (a[i] - b[i]) * (a[i] - b[i]);
  oracle /= double(a.size());
  CHECK(std::abs(loss_rgb(a.data(), b.data(), 48) - oracle) < 1e-12);
}

TEST_CASE("loss_normal closed forms and oracle") {
  const int64_t np = 16;
  std::vector<double> a(np * 3), b(np * 3);
  std::vector<uint8_t> mask(np, 1);
  Rng rng = Rng(2).stream("n");
  for (int64_t p = 0; p < np; ++p) {
    Vec3<double> n = rng.unit_vector();
    for (int c = 0; c < 3; ++c) a[size_t(3 * p + c)] = b[size_t(3 * p + c)] = n[c];
  }
  CHECK(loss_normal(a.data(), b.data(), mask.data(), np) == 0.0);

  for (int64_t p = 0; p < np; ++p)
    for (int c = 0; c < 3; ++c) b[size_t(3 * p + c)] = -a[size_t(3 * p + c)];
  CHECK(loss_normal(a.data(), b.data(), mask.data(), np) == Catch::Approx(4.0).epsilon(1e-12));

  // Random masked case vs a directly-coded oracle.
  for (int64_t p = 0; p < np; ++p) {
    mask[size_t(p)] = rng.uniform() < 0.6 ? 1 : 0;
    Vec3<double> n = rng.unit_vector();
    for (int c = 0; c < 3; ++c) b[size_t(3 * p + c)] = n[c];
  }
  double acc = 0;
  int64_t m = 0;
  for (int64_t p = 0; p < np; ++p) {
    if (!mask[size_t(p)]) continue;
    ++m;
    for (int c = 0; c < 3; ++c) acc += sqr(a[size_t(3 * p + c)] - b[size_t(3 * p + c)]);
  }
  CHECK(loss_normal(a.data(), b.data(), mask.data(), np) == Catch::Approx(acc / double(m)));

  std::fill(mask.begin(), mask.end(), 0);
  CHECK(loss_normal(a.data(), b.data(), mask.data(), np) == 0.0);
}

TEST_CASE("loss_depth_si closed forms") {
  const int64_t np = 25;
  std::vector<double> gt(np), pred(np);
  std::vector<uint8_t> mask(np, 1);
  Rng rng = Rng(3).stream("d");
  for (auto& v : gt) v = rng.uniform(0.5, 3.0);

  pred = gt;
  CHECK(loss_depth_si(pred.data(), gt.data(), mask.data(), np, 0.85) == 0.0);

  // Full scale invariance at lambda = 1.
  for (int64_t i = 0; i < np; ++i) pred[size_t(i)] = 2.7 * gt[size_t(i)];
  CHECK(loss_depth_si(pred.data(), gt.data(), mask.data(), np, 1.0) ==
        Catch::Approx(0.0).margin(1e-9));

  // pred = 2 gt with lambda 0.85: sqrt(0.15) * ln 2.
  for (int64_t i = 0; i < np; ++i) pred[size_t(i)] = 2.0 * gt[size_t(i)];
  CHECK(loss_depth_si(pred.data(), gt.data(), mask.data(), np, 0.85) ==
        Catch::Approx(std::sqrt(0.15) * std::log(2.0)).margin(1e-6));

  // Simultaneous rescaling of pred and gt leaves the loss unchanged.
  std::vector<double> gt2(np), pred2(np);
  for (int64_t i = 0; i < np; ++i) pred[size_t(i)] = gt[size_t(i)] * rng.uniform(0.5, 2.0);
  for (int64_t i = 0; i < np; ++i) {
    gt2[size_t(i)] = 7.3 * gt[size_t(i)];
    pred2[size_t(i)] = 7.3 * pred[size_t(i)];
  }
  CHECK(loss_depth_si(pred.data(), gt.data(), mask.data(), np, 0.85) ==
        Catch::Approx(loss_depth_si(pred2.data(), gt2.data(), mask.data(), np, 0.85)).margin(1e-12));
}

TEST_CASE("loss_depth_si exclusion rules") {
  std::vector<double> gt{1.0, 2.0, 3.0, 4.0};
  std::vector<double> pred{1.1, -0.5, 0.0, 4.2};
  std::vector<uint8_t> mask{1, 1, 1, 1};
  int64_t excluded = 0;
  double L = loss_depth_si(pred.data(), gt.data(), mask.data(), 4, 0.85, &excluded);
  CHECK(excluded == 2);
  CHECK(L > 0.0);

  std::vector<double> bad{-1.0, -2.0, 0.0, -0.1};
  CHECK_THROWS_WITH(loss_depth_si(bad.data(), gt.data(), mask.data(), 4, 0.85),
                    Catch::Matchers::ContainsSubstring("nonpositive"));

  std::vector<uint8_t> empty(4, 0);
  CHECK(loss_depth_si(bad.data(), gt.data(), empty.data(), 4, 0.85) == 0.0);
}

TEST_CASE("loss_eikonal: exact sphere SDF gives ~0, scaled plane gives 1") {
  AnalyticScene scene;
  scene.primitives.push_back({SpherePrim{{0, 0, 0}, 0.5}, {1, 1, 1}});
  auto sphere_sdf = [&](const Vec3<double>& p) { return sdf_eval(scene, p); };
  Rng rng = Rng(4).stream("eik");
  std::vector<Vec3<double>> pts;
  while (pts.size() < 200) {
    Vec3<double> p = rng.in_unit_box();
    if (norm(p) > 0.15) pts.push_back(p);  // keep away from the sdf kink at the center
  }
  CHECK(loss_eikonal(sphere_sdf, pts, 0.005) < 1e-6);

  Vec3<double> a = normalized(Vec3<double>{0.2, -0.5, 0.8});
  auto plane2 = [&](const Vec3<double>& p) { return 2.0 * dot(p, a); };
  CHECK(loss_eikonal(plane2, pts, 0.01) == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("loss_eikonal matches an independent finite-difference oracle") {
  auto wavy = [](const Vec3<double>& p) {
    return 0.7 * p.x + 0.2 * std::sin(3 * p.y) - 0.4 * p.z + 0.1 * p.x * p.z;
  };
  Rng rng = Rng(5).stream("eik2");
  std::vector<Vec3<double>> pts;
  for (int i = 0; i < 100; ++i) pts.push_back(rng.in_unit_box() * 0.9);
  double eps = 0.01;
  double oracle = 0;
  for (const auto& p : pts) {
    double gx = (wavy({p.x + eps, p.y, p.z}) - wavy({p.x - eps, p.y, p.z})) / (2 * eps);
    double gy = (wavy({p.x, p.y + eps, p.z}) - wavy({p.x, p.y - eps, p.z})) / (2 * eps);
    double gz = (wavy({p.x, p.y, p.z + eps}) - wavy({p.x, p.y, p.z - eps})) / (2 * eps);
    oracle += sqr(std::sqrt(gx * gx + gy * gy + gz * gz) - 1.0);
  }
  oracle /= double(pts.size());
  CHECK(loss_eikonal(wavy, pts, eps) == Catch::Approx(oracle).margin(1e-12));
}

TEST_CASE("total_loss composition and breakdown bookkeeping") {
  LossWeights w;  // runnable defaults
  SECTION("perfect prediction leaves only the eikonal term") {
    auto out = total_loss<double>({0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, 0.02, w);
    CHECK(out.total == Catch::Approx(0.5 * 0.02));
    CHECK(out.rgb == 0.0);
  }
  SECTION("two views average") {
    auto out = total_loss<double>({0.3, 0.5}, {0.0, 0.0}, {0.0, 0.0}, 0.0, w);
    CHECK(out.total == Catch::Approx(0.4));
  }
  SECTION("breakdown sums to total within 1e-12") {
    auto out = total_loss<double>({0.31, 0.11}, {0.07, 0.19}, {0.05, 0.41}, 0.13, w);
    CHECK(std::abs(out.total - (out.rgb + out.normal + out.depth + out.eikonal)) < 1e-12);
  }
  SECTION("nonzero lpips weight is rejected") {
    LossWeights parity = LossWeights::paper_parity();
    CHECK(parity.lambda_lpips == 2.0);
    CHECK_THROWS_WITH(total_loss<double>({0.1}, {0.1}, {0.1}, 0.0, parity),
                      Catch::Matchers::ContainsSubstring("perceptual loss unsupported"));
  }
  SECTION("defaults mirror the reference weights") {
    LossWeights d;
    CHECK(d.lambda_n == 1.0);
    CHECK(d.lambda_d == 1.0);
    CHECK(d.lambda_eik == 0.5);
    CHECK(d.lambda_si == 0.85);
    CHECK(d.lambda_lpips == 0.0);  // runnable slot; parity config carries 2
  }
  SECTION("non-negativity on random inputs") {
    Rng rng = Rng(6).stream("tl");
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> r{rng.uniform(), rng.uniform()}, n{rng.uniform(), rng.uniform()},
          d{rng.uniform(), rng.uniform()};
      auto out = total_loss<double>(r, n, d, rng.uniform(), w);
      CHECK(out.total >= 0.0);
      CHECK(out.rgb >= 0.0);
      CHECK(out.normal >= 0.0);
      CHECK(out.depth >= 0.0);
      CHECK(out.eikonal >= 0.0);
    }
  }
}

TEST_CASE("loss backward passes match finite differences") {
  Rng rng = Rng(7).stream("lb");
  const int64_t np = 12;
  std::vector<double> pred(np * 3), gt(np * 3), dpred(np * 3, 0.0);
  for (auto& v : pred) v = rng.uniform(0.1, 0.9);
  for (auto& v : gt) v = rng.uniform(0.1, 0.9);

  SECTION("rgb") {
    loss_rgb_backward(pred.data(), gt.data(), np * 3, 1.7, dpred.data());
    for (int i : {0, 5, 17}) {
      double h = 1e-7, keep = pred[size_t(i)];
      pred[size_t(i)] = keep + h;
      double hi = 1.7 * loss_rgb(pred.data(), gt.data(), np * 3);
      pred[size_t(i)] = keep - h;
      double lo = 1.7 * loss_rgb(pred.data(), gt.data(), np * 3);
      pred[size_t(i)] = keep;
      CHECK(dpred[size_t(i)] == Catch::Approx((hi - lo) / (2 * h)).margin(1e-6));
    }
  }

  SECTION("normal (masked)") {
    std::vector<uint8_t> mask(np, 1);
    mask[3] = 0;
    loss_normal_backward(pred.data(), gt.data(), mask.data(), np, 0.8, dpred.data());
    CHECK(dpred[9] == 0.0);  // masked pixel gets no gradient
    for (int i : {0, 14}) {
      double h = 1e-7, keep = pred[size_t(i)];
      pred[size_t(i)] = keep + h;
      double hi = 0.8 * loss_normal(pred.data(), gt.data(), mask.data(), np);
      pred[size_t(i)] = keep - h;
      double lo = 0.8 * loss_normal(pred.data(), gt.data(), mask.data(), np);
      pred[size_t(i)] = keep;
      CHECK(dpred[size_t(i)] == Catch::Approx((hi - lo) / (2 * h)).margin(1e-6));
    }
  }

  SECTION("depth silog") {
    std::vector<double> dp(np), gtd(np), ddp(np, 0.0);
    std::vector<uint8_t> mask(np, 1);
    for (auto& v : gtd) v = rng.uniform(0.5, 3.0);
    for (int64_t i = 0; i < np; ++i) dp[size_t(i)] = gtd[size_t(i)] * rng.uniform(0.7, 1.5);
    loss_depth_si_backward(dp.data(), gtd.data(), mask.data(), np, 0.85, 1.0, ddp.data());
    for (int i : {1, 6, 11}) {
      double h = 1e-7, keep = dp[size_t(i)];
      dp[size_t(i)] = keep + h;
      double hi = loss_depth_si(dp.data(), gtd.data(), mask.data(), np, 0.85);
      dp[size_t(i)] = keep - h;
      double lo = loss_depth_si(dp.data(), gtd.data(), mask.data(), np, 0.85);
      dp[size_t(i)] = keep;
      CHECK(ddp[size_t(i)] == Catch::Approx((hi - lo) / (2 * h)).margin(1e-6));
    }
  }
}
