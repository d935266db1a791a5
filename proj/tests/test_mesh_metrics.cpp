#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <map>

#include "tpsdf/metrics.hpp"

using namespace tpsdf;

namespace {

AnalyticScene sphere_scene(double r = 0.5) {
  AnalyticScene s;
  s.primitives.push_back({SpherePrim{{0, 0, 0}, r}, {0.9, 0.3, 0.2}});
  return s;
}

// Edge -> face count map; a closed 2-manifold has every edge on exactly 2
// faces, and genus 0 means V - E + F = 2.
std::map<std::pair<int, int>, int> edge_counts(const TriangleMesh& m) {
  std::map<std::pair<int, int>, int> edges;
  for (const auto& f : m.faces)
    for (int i = 0; i < 3; ++i) {
      int a = f[size_t(i)], b = f[size_t((i + 1) % 3)];
      edges[{std::min(a, b), std::max(a, b)}] += 1;
    }
  return edges;
}

}  // namespace

TEST_CASE("marching cubes on a sphere: vertex radii within half-cell bound") {
  const int R = 128;
  auto mesh = marching_cubes(sphere_scene(0.5), R);
  REQUIRE(!mesh.empty());
  for (const auto& v : mesh.vertices) {
    CHECK(norm(v) > 0.5 - 2.0 / R);
    CHECK(norm(v) < 0.5 + 2.0 / R);
  }
}

TEST_CASE("marching cubes on an all-positive field is empty, not an error") {
  auto grid = sample_sdf_grid([](const Vec3<double>&) { return 1.0; }, 16);
  auto mesh = marching_cubes_grid(grid, 16);
  CHECK(mesh.empty());
  auto grid2 = sample_sdf_grid([](const Vec3<double>&) { return -1.0; }, 16);
  CHECK(marching_cubes_grid(grid2, 16).empty());
}

TEST_CASE("marching cubes sphere is closed and genus 0") {
  auto mesh = marching_cubes(sphere_scene(0.45), 48);
  auto edges = edge_counts(mesh);
  for (const auto& [e, c] : edges) REQUIRE(c == 2);
  int64_t V = int64_t(mesh.vertices.size()), E = int64_t(edges.size()),
          F = int64_t(mesh.faces.size());
  CHECK(V - E + F == 2);
}

TEST_CASE("marching cubes normals point toward positive SDF") {
  auto scene = sphere_scene(0.5);
  auto mesh = marching_cubes(scene, 32);
  int outward = 0;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    Vec3<double> c = (mesh.vertices[size_t(tri[0])] + mesh.vertices[size_t(tri[1])] +
                      mesh.vertices[size_t(tri[2])]) / 3.0;
    if (dot(face_normal(mesh, f), c) > 0) ++outward;
  }
  CHECK(outward == int(mesh.faces.size()));
}

TEST_CASE("marching cubes error halves when resolution doubles") {
  auto max_radial_err = [&](int R) {
    auto mesh = marching_cubes(sphere_scene(0.5), R);
    double worst = 0;
    for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(norm(v) - 0.5));
    return worst;
  };
  double e32 = max_radial_err(32), e64 = max_radial_err(64);
  CHECK(e64 <= 0.5 * e32);
}

TEST_CASE("initialized field extracts a closed genus-0 surface") {
  auto field = init_field<float>(7, FieldDims{});
  auto mesh = marching_cubes(field, 48);
  REQUIRE(!mesh.empty());
  auto edges = edge_counts(mesh);
  for (const auto& [e, c] : edges) REQUIRE(c == 2);
  CHECK(int64_t(mesh.vertices.size()) - int64_t(edges.size()) + int64_t(mesh.faces.size()) == 2);
}

TEST_CASE("obj round trip preserves topology and coordinates") {
  namespace fs = std::filesystem;
  auto mesh = marching_cubes(sphere_scene(0.4), 24);
  fs::path p = fs::temp_directory_path() / "tpsdf_mesh_test.obj";
  export_obj(p, mesh);
  auto back = import_obj(p);
  REQUIRE(back.faces.size() == mesh.faces.size());
  REQUIRE(back.vertices.size() == mesh.vertices.size());
  for (size_t f = 0; f < mesh.faces.size(); ++f) CHECK(back.faces[f] == mesh.faces[f]);
  for (size_t v = 0; v < mesh.vertices.size(); ++v)
    CHECK(norm(back.vertices[v] - mesh.vertices[v]) < 1e-6);
  fs::remove(p);
}

TEST_CASE("obj import rejects malformed input naming the line") {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "tpsdf_bad.obj";
  {
    std::ofstream f(p);
    f << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n";
  }
  CHECK_THROWS_WITH(import_obj(p), Catch::Matchers::ContainsSubstring(":4:") &&
                                       Catch::Matchers::ContainsSubstring("out of range"));
  {
    std::ofstream f(p);
    f << "v 0 0 zebra\n";
  }
  CHECK_THROWS_WITH(import_obj(p), Catch::Matchers::ContainsSubstring(":1:"));
  fs::remove(p);
}

TEST_CASE("sample_surface: barycentric containment and area weighting") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 1}, {3, 1, 1}, {1, 3, 1}};
  m.faces = {{0, 1, 2}};

  auto pc = sample_surface(m, 500, Rng(3).stream("s"));
  for (const auto& p : pc.points) {
    CHECK(p.z == 0.0);
    CHECK(p.x >= -1e-12);
    CHECK(p.y >= -1e-12);
    CHECK(p.x + p.y <= 1 + 1e-12);
  }

  // Two triangles, areas 1:4 (the second has sides scaled 2x).
  m.faces = {{0, 1, 2}, {3, 4, 5}};
  auto pc2 = sample_surface(m, 10000, Rng(5).stream("s2"));
  int64_t on_second = 0;
  for (const auto& p : pc2.points)
    if (p.z > 0.5) ++on_second;
  // Expected fraction 0.8; binomial sd ~ 0.004.
  CHECK(std::abs(double(on_second) / 10000.0 - 0.8) < 0.02);

  auto pc3 = sample_surface(m, 100, Rng(5).stream("s2"));
  auto pc4 = sample_surface(m, 100, Rng(5).stream("s2"));
  for (size_t i = 0; i < 100; ++i) CHECK(norm(pc3.points[i] - pc4.points[i]) == 0.0);
}

TEST_CASE("chamfer closed forms") {
  PointCloud a, b;
  a.points = {{0, 0, 0}};
  b.points = {{0.01, 0, 0}};
  CHECK(chamfer(a, a) == 0.0);
  CHECK(chamfer(a, b) == Catch::Approx(1.0));
  CHECK(chamfer(a, b) == Catch::Approx(chamfer(b, a)));
}

TEST_CASE("chamfer/NC/p2s agree with brute force on random instances") {
  Rng rng = Rng(11).stream("bf");
  for (int rep = 0; rep < 5; ++rep) {
    PointCloud a, b;
    int na = 200 + int(rng.uniform_index(300)), nb = 200 + int(rng.uniform_index(300));
    for (int i = 0; i < na; ++i) {
      a.points.push_back(rng.in_unit_box());
      a.normals.push_back(rng.unit_vector());
    }
    for (int i = 0; i < nb; ++i) {
      b.points.push_back(rng.in_unit_box());
      b.normals.push_back(rng.unit_vector());
    }

    // Brute-force chamfer.
    auto nn_brute = [](const PointCloud& from, const PointCloud& to, double& mean_d,
                       std::vector<size_t>& idx) {
      mean_d = 0;
      idx.clear();
      for (const auto& p : from.points) {
        double best = 1e30;
        size_t bi = 0;
        for (size_t j = 0; j < to.points.size(); ++j) {
          double d = norm(p - to.points[j]);
          if (d < best) {
            best = d;
            bi = j;
          }
        }
        mean_d += best;
        idx.push_back(bi);
      }
      mean_d /= double(from.points.size());
    };
    double ab, ba;
    std::vector<size_t> iab, iba;
    nn_brute(a, b, ab, iab);
    nn_brute(b, a, ba, iba);
    CHECK(std::abs(chamfer(a, b) - 100.0 * 0.5 * (ab + ba)) < 1e-12);

    // Brute-force NC.
    double e1 = 0, e2 = 0;
    for (size_t i = 0; i < a.points.size(); ++i)
      e1 += 1.0 - std::abs(dot(a.normals[i], b.normals[iab[i]]));
    for (size_t i = 0; i < b.points.size(); ++i)
      e2 += 1.0 - std::abs(dot(b.normals[i], a.normals[iba[i]]));
    double nc_brute = 0.5 * (e1 / na + e2 / nb);
    CHECK(std::abs(normal_consistency(a, b) - nc_brute) < 1e-12);
  }

  // p2s vs all-triangles scan.
  auto mesh = marching_cubes(sphere_scene(0.4), 12);
  REQUIRE(mesh.faces.size() <= 500);
  PointCloud pts;
  for (int i = 0; i < 200; ++i) pts.points.push_back(rng.in_unit_box());
  TriangleTree tree(mesh);
  double brute_mean = 0;
  for (const auto& p : pts.points) {
    double best = 1e30;
    for (const auto& f : mesh.faces) {
      Vec3<double> q = closest_point_on_triangle(p, mesh.vertices[size_t(f[0])],
                                                 mesh.vertices[size_t(f[1])],
                                                 mesh.vertices[size_t(f[2])]);
      best = std::min(best, norm(p - q));
    }
    brute_mean += best;
    CHECK(std::abs(tree.distance(p) - best) < 1e-12);
  }
  brute_mean = 100.0 * brute_mean / double(pts.points.size());
  CHECK(std::abs(p2s(pts, mesh) - brute_mean) < 1e-12);
}

TEST_CASE("chamfer translation bound and p2s closed forms") {
  Rng rng = Rng(13).stream("tr");
  PointCloud a;
  for (int i = 0; i < 300; ++i) a.points.push_back(rng.in_unit_box());
  Vec3<double> t{0.03, -0.01, 0.02};
  PointCloud b;
  for (const auto& p : a.points) b.points.push_back(p + t);
  CHECK(chamfer(a, b) <= 100.0 * norm(t) + 1e-9);

  // Point at height d above a large triangle.
  TriangleMesh tri;
  tri.vertices = {{-5, 0, -5}, {5, 0, -5}, {0, 0, 5}};
  tri.faces = {{0, 1, 2}};
  PointCloud q;
  q.points = {{0.1, 0.25, 0.0}};
  CHECK(p2s(q, tri) == Catch::Approx(25.0));

  // Points sampled on a mesh have ~zero distance to it.
  auto mesh = marching_cubes(sphere_scene(0.45), 16);
  auto on = sample_surface(mesh, 500, Rng(7).stream("on"));
  CHECK(p2s(on, mesh) < 1e-9);

  // p2s is bounded by the one-directional point-to-sample distance.
  auto dense = sample_surface(mesh, 2000, Rng(9).stream("dense"));
  KdTree kt(dense.points);
  double one_dir = 0;
  for (const auto& p : on.points) {
    double d2;
    kt.nearest(p, d2);
    one_dir += std::sqrt(d2);
  }
  one_dir = 100.0 * one_dir / double(on.points.size());
  CHECK(p2s(on, mesh) <= one_dir + 1e-12);
}

TEST_CASE("normal consistency closed forms and rotation invariance") {
  Rng rng = Rng(17).stream("nc");
  PointCloud a;
  for (int i = 0; i < 200; ++i) {
    a.points.push_back(rng.in_unit_box());
    a.normals.push_back(rng.unit_vector());
  }
  CHECK(normal_consistency(a, a) == Catch::Approx(0.0).margin(1e-12));

  // Identical points, normals rotated 90 degrees.
  PointCloud b = a;
  for (auto& nv : b.normals) nv = Vec3<double>{-nv.y, nv.x, nv.z * 0};  // z->0 not unit; fix below
  b = a;
  for (auto& nv : b.normals) {
    Vec3<double> perp = cross(nv, std::abs(nv.x) < 0.9 ? Vec3<double>{1, 0, 0} : Vec3<double>{0, 1, 0});
    nv = normalized(perp);
  }
  CHECK(normal_consistency(a, b) == Catch::Approx(1.0).margin(1e-12));

  // Global rigid rotation applied to both inputs changes nothing.
  double c = std::cos(0.7), s = std::sin(0.7);
  Mat3<double> R = Mat3<double>::from_rows({c, -s, 0}, {s, c, 0}, {0, 0, 1});
  PointCloud a2 = a, b2 = b;
  for (auto& p : a2.points) p = R * p;
  for (auto& nv : a2.normals) nv = R * nv;
  for (auto& p : b2.points) p = R * p;
  for (auto& nv : b2.normals) nv = R * nv;
  PointCloud br = b;  // random second cloud for a non-trivial value
  double before = normal_consistency(a, b);
  double after = normal_consistency(a2, b2);
  CHECK(std::abs(before - after) < 1e-9);
}

TEST_CASE("psnr and ssim closed forms") {
  ImageF a(16, 16, 3);
  Rng rng = Rng(19).stream("img");
  for (auto& v : a.data) v = float(rng.uniform(0.2, 0.7));
  ImageF b = a;
  CHECK(std::isinf(psnr(a, b)));
  CHECK(ssim(a, b) == Catch::Approx(1.0).margin(1e-12));

  for (auto& v : b.data) v += 0.1f;  // stays within [0,1]; no clipping
  CHECK(psnr(a, b) == Catch::Approx(20.0).margin(1e-3));

  ImageF c(8, 8, 1);
  CHECK_THROWS(psnr(a, c));
}

TEST_CASE("ssim of a render vs its negative is low") {
  AnalyticScene scene = sphere_scene(0.5);
  CameraPose cam = look_at_camera({0, 0, 2.5}, {0, 0, 0}, 64, 64, 64, 64);
  ViewBundle gt = render_ground_truth(scene, cam);
  ImageF neg = gt.rgb;
  for (auto& v : neg.data) v = 1.0f - v;
  CHECK(ssim(gt.rgb, neg) < 0.1);
  CHECK(ssim(gt.rgb, gt.rgb) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("depth_normal_error closed forms and oracle") {
  AnalyticScene scene = sphere_scene(0.5);
  CameraPose cam = look_at_camera({0, 0, 2.5}, {0, 0, 0}, 64, 64, 48, 48);
  ViewBundle gt = render_ground_truth(scene, cam);

  auto self = depth_normal_error(gt, gt);
  CHECK(self.depth_mae_x100 == 0.0);
  // Normals are stored as float32; the self dot product carries ~1e-7 noise.
  CHECK(self.normal_error == Catch::Approx(0.0).margin(1e-6));

  ViewBundle pred = gt;
  for (auto& v : pred.depth.data)
    if (v > 0) v += 0.02f;
  auto shifted = depth_normal_error(pred, gt);
  CHECK(shifted.depth_mae_x100 == Catch::Approx(2.0).margin(1e-4));

  // Random perturbation vs a hand-rolled oracle.
  Rng rng = Rng(23).stream("dn");
  ViewBundle pred2 = gt;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      if (!gt.mask.at(x, y, 0)) continue;
      pred2.depth.at(x, y, 0) += float(rng.uniform(-0.05, 0.05));
      Vec3<double> n{gt.normal.at(x, y, 0), gt.normal.at(x, y, 1), gt.normal.at(x, y, 2)};
      Vec3<double> axis = rng.unit_vector();
      double ang = rng.uniform(0, 0.3);
      // Rodrigues rotation.
      Vec3<double> nr = n * std::cos(ang) + cross(axis, n) * std::sin(ang) +
                        axis * dot(axis, n) * (1 - std::cos(ang));
      for (int ch = 0; ch < 3; ++ch) pred2.normal.at(x, y, ch) = float(nr[ch]);
    }
  double dacc = 0, nacc = 0;
  int64_t cnt = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      if (!gt.mask.at(x, y, 0) || !pred2.mask.at(x, y, 0)) continue;
      ++cnt;
      dacc += std::abs(double(pred2.depth.at(x, y, 0)) - double(gt.depth.at(x, y, 0)));
      double d = 0;
      for (int ch = 0; ch < 3; ++ch)
        d += double(pred2.normal.at(x, y, ch)) * double(gt.normal.at(x, y, ch));
      nacc += 1.0 - d;
    }
  auto got = depth_normal_error(pred2, gt);
  CHECK(got.depth_mae_x100 == Catch::Approx(100.0 * dacc / double(cnt)).margin(1e-9));
  CHECK(got.normal_error == Catch::Approx(nacc / double(cnt)).margin(1e-12));

  ViewBundle empty = gt;
  std::fill(empty.mask.data.begin(), empty.mask.data.end(), uint8_t(0));
  CHECK_THROWS_WITH(depth_normal_error(empty, gt),
                    Catch::Matchers::ContainsSubstring("empty mask"));
}
