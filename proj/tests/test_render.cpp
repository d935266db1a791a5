#include <catch2/catch_amalgamated.hpp>

#include "tpsdf/render.hpp"
#include "tpsdf/rng.hpp"

using namespace tpsdf;

namespace {

AnalyticScene sphere_scene(double radius = 0.5) {
  AnalyticScene scene;
  scene.primitives.push_back({SpherePrim{{0, 0, 0}, radius}, {0.9, 0.3, 0.2}});
  return scene;
}

struct RandomCompositeCase {
  std::vector<double> ts, sig, rgb, nrm;
  double t_far;
  int m;
};

RandomCompositeCase random_case(Rng& rng, int min_m = 1, int max_m = 24) {
  RandomCompositeCase c;
  c.m = min_m + int(rng.uniform_index(uint64_t(max_m - min_m + 1)));
  double t = rng.uniform(0.2, 1.0);
  for (int i = 0; i < c.m; ++i) {
    c.ts.push_back(t);
    t += rng.uniform(0.01, 0.3);
    c.sig.push_back(rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.0, 30.0));
    for (int a = 0; a < 3; ++a) c.rgb.push_back(rng.uniform());
    Vec3<double> n = rng.unit_vector();
    c.nrm.insert(c.nrm.end(), {n.x, n.y, n.z});
  }
  c.t_far = t + rng.uniform(0.0, 0.2);
  return c;
}

}  // namespace

TEST_CASE("sdf_to_density closed forms") {
  double beta = 0.07;
  CHECK(sdf_to_density(0.0, beta) == Catch::Approx(1.0 / (2 * beta)));
  // s = -beta -> (1/beta)(1 - e^-1 / 2)
  CHECK(sdf_to_density(-beta, beta) == Catch::Approx((1.0 - 0.5 * std::exp(-1.0)) / beta));
  // Limits.
  CHECK(sdf_to_density(100.0, beta) == Catch::Approx(0.0).margin(1e-300));
  CHECK(sdf_to_density(-100.0, beta) == Catch::Approx(1.0 / beta));
  // Derivative matches finite differences.
  for (double s : {-0.3, -0.01, 0.0, 0.01, 0.25}) {
    double h = 1e-7;
    double fd = (sdf_to_density(s + h, beta) - sdf_to_density(s - h, beta)) / (2 * h);
    CHECK(sdf_to_density_deriv(s, beta) == Catch::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("beta schedule") {
  CHECK(beta_schedule(0, 100, 0.1, 0.002) == Catch::Approx(0.1));
  CHECK(beta_schedule(100, 100, 0.1, 0.002) == Catch::Approx(0.002));
  CHECK(beta_schedule(50, 100, 0.1, 0.002) == Catch::Approx(std::sqrt(0.1 * 0.002)));
  double prev = 1e9;
  for (int i = 0; i <= 20; ++i) {
    double b = beta_schedule(i, 20, 0.1, 0.002);
    CHECK(b < prev);
    prev = b;
  }
}

TEST_CASE("coarse samples: midpoints without jitter") {
  Rng rng = Rng(1).stream("c");
  std::vector<double> ts;
  sample_coarse(1.0, 3.0, 4, false, rng, ts);
  REQUIRE(ts.size() == 4);
  CHECK(ts[0] == Catch::Approx(1.25));
  CHECK(ts[1] == Catch::Approx(1.75));
  CHECK(ts[2] == Catch::Approx(2.25));
  CHECK(ts[3] == Catch::Approx(2.75));
}

TEST_CASE("coarse samples stay inside their strata") {
  Rng rng = Rng(2).stream("cj");
  const int n = 16;
  for (int rep = 0; rep < 625; ++rep) {  // 10^4 draws total
    std::vector<double> ts;
    sample_coarse(0.5, 2.5, n, true, rng, ts);
    double width = 2.0 / n;
    for (int k = 0; k < n; ++k) {
      CHECK(ts[size_t(k)] >= 0.5 + k * width);
      CHECK(ts[size_t(k)] < 0.5 + (k + 1) * width);
      if (k) CHECK(ts[size_t(k)] > ts[size_t(k) - 1]);
    }
  }
}

TEST_CASE("fine samples concentrate in the weighted bin") {
  Rng rng = Rng(3).stream("f");
  std::vector<double> w(8, 0.0);
  w[5] = 1.0;
  std::vector<double> out;
  sample_fine(0.0, 8.0, w, 64, true, rng, out);
  int inside = 0;
  for (double t : out)
    if (t >= 5.0 - 0.01 && t <= 6.0 + 0.01) ++inside;
  // The 1e-5 floor leaks a tiny fraction elsewhere.
  CHECK(inside >= 62);
}

TEST_CASE("fine samples under uniform weights are uniform (chi-squared)") {
  Rng rng = Rng(4).stream("chi");
  std::vector<double> w(16, 0.5);
  const int draws = 10000;
  std::vector<int> hist(16, 0);
  int total = 0;
  while (total < draws) {
    std::vector<double> out;
    sample_fine(0.0, 16.0, w, 13, true, rng, out);
    for (double t : out) {
      CHECK(t >= 0.0);
      CHECK(t < 16.0);
      ++hist[size_t(std::min(15, int(t)))];
      ++total;
    }
  }
  double expect = double(total) / 16.0, stat = 0;
  for (int h : hist) stat += (h - expect) * (h - expect) / expect;
  CHECK(stat < 30.578);  // chi^2 critical value, df=15, p=0.01
}

TEST_CASE("fine samples are sorted, merged union deduplicates") {
  Rng rng = Rng(5).stream("s");
  std::vector<double> w{0.1, 0.9, 0.4, 0.0};
  std::vector<double> fine;
  sample_fine(1.0, 3.0, w, 32, true, rng, fine);
  for (size_t i = 1; i < fine.size(); ++i) CHECK(fine[i] >= fine[i - 1]);

  std::vector<double> coarse{1.2, 1.7, 2.4};
  std::vector<double> merged;
  merge_samples(coarse, fine, merged);
  for (size_t i = 1; i < merged.size(); ++i) CHECK(merged[i] - merged[i - 1] >= 1e-9);

  // Exact duplicates collapse.
  std::vector<double> dup{1.0, 1.0 + 5e-10, 2.0};
  merge_samples(dup, {}, merged);
  CHECK(merged.size() == 2);
}

TEST_CASE("all-zero fine weights fall back to uniform") {
  Rng rng = Rng(6).stream("z");
  std::vector<double> w(8, 0.0);
  std::vector<double> out;
  sample_fine(0.0, 8.0, w, 800, true, rng, out);
  std::vector<int> hist(8, 0);
  for (double t : out) ++hist[size_t(std::min(7, int(t)))];
  for (int h : hist) CHECK(h == 100);  // stratified over a flat CDF
}

TEST_CASE("composite: zero density everywhere") {
  std::vector<double> ts{1.0, 1.5, 2.0}, sig{0, 0, 0}, rgb(9, 0.3), nrm(9, 0.0);
  auto out = composite(ts.data(), sig.data(), rgb.data(), nrm.data(), 3, 2.5);
  CHECK(out.wsum == 0.0);
  CHECK(out.color.x == 1.0);
  CHECK(out.color.y == 1.0);
  CHECK(out.color.z == 1.0);
  CHECK(out.depth_raw == 0.0);
  CHECK(out.normal_degenerate);
}

TEST_CASE("composite: single sample with sigma*delta = ln 2") {
  double ln2 = std::log(2.0);
  std::vector<double> ts{1.0}, sig{ln2 / 0.5}, rgb{0.2, 0.6, 0.8}, nrm{0, 0, 1};
  auto out = composite(ts.data(), sig.data(), rgb.data(), nrm.data(), 1, 1.5);
  // alpha = 1/2: color = rgb/2 + white/2.
  CHECK(out.wsum == Catch::Approx(0.5));
  CHECK(out.color.x == Catch::Approx(0.6));
  CHECK(out.color.y == Catch::Approx(0.8));
  CHECK(out.color.z == Catch::Approx(0.9));
  CHECK(out.depth_raw == Catch::Approx(1.0));
}

TEST_CASE("composite: two-sample hand-computed weights") {
  // sigma1*delta1 = 1, sigma2*delta2 = 2.
  std::vector<double> ts{1.0, 2.0}, sig{1.0, 2.0}, rgb{1, 0, 0, 0, 1, 0}, nrm(6, 0.0);
  nrm[2] = nrm[5] = 1.0;
  std::vector<double> w(2);
  auto out = composite(ts.data(), sig.data(), rgb.data(), nrm.data(), 2, 3.0, w.data());
  double w1 = 1 - std::exp(-1.0);
  double w2 = std::exp(-1.0) * (1 - std::exp(-2.0));
  CHECK(w[0] == Catch::Approx(w1).epsilon(1e-14));
  CHECK(w[1] == Catch::Approx(w2).epsilon(1e-14));
  CHECK(out.wsum == Catch::Approx(w1 + w2).epsilon(1e-14));
  CHECK(out.color.x == Catch::Approx(w1 * 1 + (1 - w1 - w2) * 1).epsilon(1e-14));
  CHECK(out.depth_raw == Catch::Approx((w1 * 1.0 + w2 * 2.0) / (w1 + w2)).epsilon(1e-14));
}

TEST_CASE("telescoping identity over randomized configurations") {
  Rng rng = Rng(7).stream("tele");
  for (int rep = 0; rep < 1000; ++rep) {
    auto c = random_case(rng);
    std::vector<double> w(size_t(c.m));
    auto out = composite(c.ts.data(), c.sig.data(), c.rgb.data(), c.nrm.data(), c.m, c.t_far,
                         w.data());
    double sum_w = 0, prod = 1;
    for (int i = 0; i < c.m; ++i) {
      double delta = (i + 1 < c.m ? c.ts[size_t(i) + 1] - c.ts[size_t(i)] : c.t_far - c.ts[size_t(i)]);
      prod *= std::exp(-c.sig[size_t(i)] * delta);
      sum_w += w[size_t(i)];
    }
    REQUIRE(std::abs(sum_w - (1 - prod)) < 1e-12);
    REQUIRE(out.wsum >= 0.0);
    REQUIRE(out.wsum <= 1.0);
    REQUIRE(std::abs(out.wsum - sum_w) < 1e-12);
  }
}

TEST_CASE("zero-density samples in empty regions do not change outputs") {
  Rng rng = Rng(8).stream("ins");
  for (int rep = 0; rep < 200; ++rep) {
    auto c = random_case(rng, 2, 12);
    auto base = composite(c.ts.data(), c.sig.data(), c.rgb.data(), c.nrm.data(), c.m, c.t_far);

    // Insert a zero-density sample before the first sample.
    RandomCompositeCase f = c;
    f.ts.insert(f.ts.begin(), c.ts.front() - 0.05);
    f.sig.insert(f.sig.begin(), 0.0);
    f.rgb.insert(f.rgb.begin(), {0.5, 0.5, 0.5});
    f.nrm.insert(f.nrm.begin(), {1.0, 0.0, 0.0});
    f.m += 1;
    auto fr = composite(f.ts.data(), f.sig.data(), f.rgb.data(), f.nrm.data(), f.m, f.t_far);
    CHECK(std::abs(fr.color.x - base.color.x) < 1e-12);
    CHECK(std::abs(fr.depth_raw - base.depth_raw) < 1e-12);
    CHECK(std::abs(fr.wsum - base.wsum) < 1e-12);

    // Insert inside a zero-density segment (if any).
    for (int i = 0; i < c.m; ++i) {
      if (c.sig[size_t(i)] != 0.0) continue;
      double hi = (i + 1 < c.m ? c.ts[size_t(i) + 1] : c.t_far);
      if (hi - c.ts[size_t(i)] < 1e-6) continue;
      RandomCompositeCase g = c;
      double tmid = 0.5 * (c.ts[size_t(i)] + hi);
      g.ts.insert(g.ts.begin() + i + 1, tmid);
      g.sig.insert(g.sig.begin() + i + 1, 0.0);
      g.rgb.insert(g.rgb.begin() + 3 * (i + 1), {0.1, 0.2, 0.3});
      g.nrm.insert(g.nrm.begin() + 3 * (i + 1), {0.0, 1.0, 0.0});
      g.m += 1;
      auto gr = composite(g.ts.data(), g.sig.data(), g.rgb.data(), g.nrm.data(), g.m, g.t_far);
      CHECK(std::abs(gr.color.y - base.color.y) < 1e-12);
      CHECK(std::abs(gr.wsum - base.wsum) < 1e-12);
      CHECK(std::abs(gr.depth_raw - base.depth_raw) < 1e-12);
      break;
    }
  }
}

TEST_CASE("re-binning invariance: splitting segments with the same density") {
  Rng rng = Rng(9).stream("split");
  for (int rep = 0; rep < 200; ++rep) {
    auto c = random_case(rng, 2, 12);
    auto base = composite(c.ts.data(), c.sig.data(), c.rgb.data(), c.nrm.data(), c.m, c.t_far);
    // Split every segment at its midpoint, duplicating sigma and rgb.
    RandomCompositeCase s;
    s.t_far = c.t_far;
    for (int i = 0; i < c.m; ++i) {
      double hi = (i + 1 < c.m ? c.ts[size_t(i) + 1] : c.t_far);
      double tmid = 0.5 * (c.ts[size_t(i)] + hi);
      for (double t : {c.ts[size_t(i)], tmid}) {
        s.ts.push_back(t);
        s.sig.push_back(c.sig[size_t(i)]);
        for (int a = 0; a < 3; ++a) s.rgb.push_back(c.rgb[size_t(3 * i + a)]);
        for (int a = 0; a < 3; ++a) s.nrm.push_back(c.nrm[size_t(3 * i + a)]);
      }
    }
    s.m = int(s.ts.size());
    auto sr = composite(s.ts.data(), s.sig.data(), s.rgb.data(), s.nrm.data(), s.m, s.t_far);
    CHECK(std::abs(sr.color.x - base.color.x) < 1e-9);
    CHECK(std::abs(sr.color.y - base.color.y) < 1e-9);
    CHECK(std::abs(sr.color.z - base.color.z) < 1e-9);
    CHECK(std::abs(sr.wsum - base.wsum) < 1e-9);
  }
}

TEST_CASE("Riemann refinement converges for a smooth density") {
  // sigma(t) smooth on [1,3]; denser midpoint sampling must approach the
  // reference computed at very high resolution.
  auto sigma_fn = [](double t) { return 4.0 * std::exp(-8.0 * (t - 1.8) * (t - 1.8)); };
  auto rgb_fn = [](double t) { return 0.5 + 0.4 * std::sin(3 * t); };
  auto render_at = [&](int m) {
    std::vector<double> ts(static_cast<size_t>(m)), sig(static_cast<size_t>(m)), rgb(size_t(m) * 3), nrm(size_t(m) * 3, 0.0);
    for (int i = 0; i < m; ++i) {
      ts[size_t(i)] = 1.0 + 2.0 * (i + 0.5) / m;
      sig[size_t(i)] = sigma_fn(ts[size_t(i)]);
      for (int a = 0; a < 3; ++a) rgb[size_t(3 * i + a)] = rgb_fn(ts[size_t(i)]);
      nrm[size_t(3 * i)] = 1.0;
    }
    return composite(ts.data(), sig.data(), rgb.data(), nrm.data(), m, 3.0);
  };
  auto ref = render_at(100000);
  double err64 = std::abs(render_at(64).color.x - ref.color.x);
  double err512 = std::abs(render_at(512).color.x - ref.color.x);
  CHECK(err512 < err64);
  CHECK(err512 < 1e-6 + err64 / 4);  // first-order midpoint refinement
}

TEST_CASE("composite backward matches finite differences") {
  Rng rng = Rng(10).stream("bwd");
  for (int rep = 0; rep < 30; ++rep) {
    // Stay clear of the wsum floor and the degenerate-normal guard, whose
    // kinks are intentional and break central differences.
    RandomCompositeCase c;
    while (true) {
      c = random_case(rng, 1, 10);
      auto probe = composite(c.ts.data(), c.sig.data(), c.rgb.data(), c.nrm.data(), c.m, c.t_far);
      Vec3<double> v{0, 0, 0};
      std::vector<double> w(static_cast<size_t>(c.m));
      composite(c.ts.data(), c.sig.data(), c.rgb.data(), c.nrm.data(), c.m, c.t_far, w.data());
      for (int i = 0; i < c.m; ++i)
        v += Vec3<double>{c.nrm[size_t(3 * i)], c.nrm[size_t(3 * i + 1)], c.nrm[size_t(3 * i + 2)]} *
             w[size_t(i)];
      if (probe.wsum > 1e-3 && norm(v) > 1e-3) break;
    }
    // Random cotangents for all outputs.
    Vec3<double> dC{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    Vec3<double> dN{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    double dD = rng.uniform(-1, 1), dW = rng.uniform(-1, 1);

    auto scalar_loss = [&](const RandomCompositeCase& cc) {
      auto o = composite(cc.ts.data(), cc.sig.data(), cc.rgb.data(), cc.nrm.data(), cc.m, cc.t_far);
      return dot(dC, o.color) + dD * o.depth_raw + dot(dN, o.normal) + dW * o.wsum;
    };

    std::vector<double> dsig(size_t(c.m), 0.0), drgb(size_t(c.m) * 3, 0.0), dnrm(size_t(c.m) * 3, 0.0);
    composite_backward(c.ts.data(), c.sig.data(), c.rgb.data(), c.nrm.data(), c.m, c.t_far, dC, dD,
                       dN, dW, dsig.data(), drgb.data(), dnrm.data());

    const double h = 1e-6;
    auto check_fd = [&](std::vector<double>& arr, size_t idx, double analytic) {
      double keep = arr[idx];
      arr[idx] = keep + h;
      double hi = scalar_loss(c);
      arr[idx] = keep - h;
      double lo = scalar_loss(c);
      arr[idx] = keep;
      double fd = (hi - lo) / (2 * h);
      CHECK(std::abs(analytic - fd) < 2e-6 * std::max(1.0, std::abs(fd)));
    };
    for (int i = 0; i < c.m; ++i) {
      check_fd(c.sig, size_t(i), dsig[size_t(i)]);
      check_fd(c.rgb, size_t(3 * i), drgb[size_t(3 * i)]);
      check_fd(c.nrm, size_t(3 * i + 1), dnrm[size_t(3 * i + 1)]);
    }
  }
}

TEST_CASE("analytic render: rays missing the box give white pixels") {
  AnalyticScene scene = sphere_scene();
  CameraPose cam = look_at_camera({0, 0, 2.5}, {0, 0, 0}, 20, 20, 32, 32);
  Rng base = Rng(3).stream("render", 0);
  auto pb = render_patch_analytic(scene, cam, {0, 0, 32, 32}, {16, 16, false}, {0.01}, base);
  // Wide FOV corners miss the [-1,1]^3 box entirely.
  CHECK(pb.rgb[0] == 1.0);
  CHECK(pb.wsum[0] == 0.0);
}

TEST_CASE("analytic sphere render at beta=0.002 matches sphere-traced GT above 30 dB") {
  AnalyticScene scene = sphere_scene(0.5);
  CameraPose cam = look_at_camera({0, 0, 2.5}, {0, 0, 0}, 64, 64, 64, 64);
  ViewBundle gt = render_ground_truth(scene, cam);

  Rng base = Rng(7).stream("render", 0);
  auto pb = render_patch_analytic(scene, cam, {0, 0, 64, 64}, {48, 64, true}, {0.002}, base);

  double mse = 0;
  for (size_t i = 0; i < pb.rgb.size(); ++i) {
    double d = pb.rgb[i] - double(gt.rgb.data[i]);
    mse += d * d;
  }
  mse /= double(pb.rgb.size());
  double psnr = 10 * std::log10(1.0 / mse);
  CHECK(psnr > 30.0);

  // Depth converges to sphere-traced depth on mutually-foreground pixels:
  // sup error < 20 * beta.
  double sup = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      size_t p = size_t(y) * 64 + x;
      if (gt.mask.at(x, y, 0) == 0 || pb.wsum[p] < 0.5) continue;
      sup = std::max(sup, std::abs(pb.depth_raw[p] - double(gt.depth.at(x, y, 0))));
    }
  CHECK(sup < 20 * 0.002);
}

TEST_CASE("analytic render is deterministic under a fixed seed") {
  AnalyticScene scene = sphere_scene();
  CameraPose cam = look_at_camera({1.5, 1.0, 1.5}, {0, 0, 0}, 48, 48, 32, 32);
  Rng base = Rng(11).stream("render", 4);
  set_thread_count(1);
  auto a = render_patch_analytic(scene, cam, {0, 0, 32, 32}, {24, 24, true}, {0.01}, base);
  set_thread_count(8);
  auto b = render_patch_analytic(scene, cam, {0, 0, 32, 32}, {24, 24, true}, {0.01}, base);
  set_thread_count(2);
  CHECK(a.rgb == b.rgb);
  CHECK(a.depth_raw == b.depth_raw);
  CHECK(a.wsum == b.wsum);
  CHECK(a.normal == b.normal);
}
