#pragma once

// Zero-level-set extraction over [-1,1]^3 with shared (welded) edge
// vertices, plus ASCII OBJ round-tripping. Triangles are oriented so face
// normals point toward positive SDF.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "tpsdf/analytic.hpp"
#include "tpsdf/field.hpp"
#include "tpsdf/mc_tables.hpp"

namespace tpsdf {

struct TriangleMesh {
  std::vector<Vec3<double>> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3<double>> normals;  // optional, per vertex

  bool empty() const { return faces.empty(); }

  void validate() const {
    for (const auto& f : faces)
      for (int i : f)
        if (i < 0 || i >= int(vertices.size()))
          throw std::runtime_error("mesh face index out of range");
  }
};

inline Vec3<double> face_normal(const TriangleMesh& m, size_t f) {
  const auto& tri = m.faces[f];
  Vec3<double> a = m.vertices[size_t(tri[0])];
  Vec3<double> e1 = m.vertices[size_t(tri[1])] - a;
  Vec3<double> e2 = m.vertices[size_t(tri[2])] - a;
  return cross(e1, e2);
}

inline double face_area(const TriangleMesh& m, size_t f) { return 0.5 * norm(face_normal(m, f)); }

inline double mesh_area(const TriangleMesh& m) {
  double a = 0;
  for (size_t f = 0; f < m.faces.size(); ++f) a += face_area(m, f);
  return a;
}

// Marching cubes over a precomputed (R+1)^3 grid of SDF samples laid out
// x-fastest: values[(z*(R+1)+y)*(R+1)+x]. Grid node (i,j,k) sits at
// (-1+2i/R, -1+2j/R, -1+2k/R). All-positive or all-negative grids produce
// an empty mesh.
inline TriangleMesh marching_cubes_grid(const std::vector<float>& values, int R,
                                        double level = 0.0) {
  if (R < 8) throw std::invalid_argument("marching cubes resolution must be >= 8");
  const int64_t n = R + 1;
  if (int64_t(values.size()) != n * n * n)
    throw std::invalid_argument("marching cubes: grid size mismatch");

  auto val = [&](int x, int y, int z) -> double {
    return double(values[size_t((int64_t(z) * n + y) * n + x)]);
  };
  auto node_pos = [&](int x, int y, int z) -> Vec3<double> {
    return {-1.0 + 2.0 * x / R, -1.0 + 2.0 * y / R, -1.0 + 2.0 * z / R};
  };

  // Corner layout paired with the classic tables: 0..3 around z, 4..7 at z+1.
  static constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                        {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  static constexpr int kEdgeEnds[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                           {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

  TriangleMesh mesh;
  // Welding: a cut edge is identified by its lower lattice endpoint + axis.
  std::unordered_map<int64_t, int> edge_vertex;
  edge_vertex.reserve(size_t(R) * R * 8);

  auto edge_key = [&](int x0, int y0, int z0, int x1, int y1, int z1) -> int64_t {
    int axis = (x1 != x0) ? 0 : (y1 != y0 ? 1 : 2);
    int bx = std::min(x0, x1), by = std::min(y0, y1), bz = std::min(z0, z1);
    return ((int64_t(bz) * n + by) * n + bx) * 3 + axis;
  };

  double corner_val[8];
  Vec3<double> corner_pos[8];
  for (int z = 0; z < R; ++z)
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          int cx = x + kCorner[c][0], cy = y + kCorner[c][1], cz = z + kCorner[c][2];
          corner_val[c] = val(cx, cy, cz);
          corner_pos[c] = node_pos(cx, cy, cz);
          if (corner_val[c] < level) cube |= 1 << c;
        }
        uint16_t edges = detail::kMcEdgeTable[cube];
        if (!edges) continue;

        int edge_ids[12];
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          int a = kEdgeEnds[e][0], b = kEdgeEnds[e][1];
          int64_t key = edge_key(x + kCorner[a][0], y + kCorner[a][1], z + kCorner[a][2],
                                 x + kCorner[b][0], y + kCorner[b][1], z + kCorner[b][2]);
          auto it = edge_vertex.find(key);
          if (it == edge_vertex.end()) {
            double va = corner_val[a], vb = corner_val[b];
            double t = (level - va) / (vb - va);
            t = clamp(t, 0.0, 1.0);
            Vec3<double> p = corner_pos[a] + (corner_pos[b] - corner_pos[a]) * t;
            it = edge_vertex.emplace(key, int(mesh.vertices.size())).first;
            mesh.vertices.push_back(p);
          }
          edge_ids[e] = it->second;
        }

        const int8_t* tri = detail::kMcTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          std::array<int, 3> f{edge_ids[tri[t]], edge_ids[tri[t + 1]], edge_ids[tri[t + 2]]};
          if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
          mesh.faces.push_back(f);
        }
      }

  // Drop numerically degenerate faces and orient normals toward positive
  // SDF: the tables emit inside(<level)-consistent winding; verify with the
  // local gradient and flip when needed.
  std::vector<std::array<int, 3>> kept;
  kept.reserve(mesh.faces.size());
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    if (face_area(mesh, f) < 1e-12) continue;
    kept.push_back(mesh.faces[f]);
  }
  mesh.faces = std::move(kept);

  // Orientation probe: average alignment of face normals with the grid
  // gradient; flip globally if the tables' winding points inward.
  double align = 0;
  const double h = 2.0 / R;
  auto grid_grad = [&](const Vec3<double>& p) -> Vec3<double> {
    auto sample = [&](double px, double py, double pz) -> double {
      double gx = (clamp(px, -1.0, 1.0) + 1) / 2 * R;
      double gy = (clamp(py, -1.0, 1.0) + 1) / 2 * R;
      double gz = (clamp(pz, -1.0, 1.0) + 1) / 2 * R;
      int ix = std::min(int(gx), R - 1), iy = std::min(int(gy), R - 1), iz = std::min(int(gz), R - 1);
      double fx = gx - ix, fy = gy - iy, fz = gz - iz;
      double acc = 0;
      for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
            acc += w * val(ix + dx, iy + dy, iz + dz);
          }
      return acc;
    };
    return {(sample(p.x + h, p.y, p.z) - sample(p.x - h, p.y, p.z)) / (2 * h),
            (sample(p.x, p.y + h, p.z) - sample(p.x, p.y - h, p.z)) / (2 * h),
            (sample(p.x, p.y, p.z + h) - sample(p.x, p.y, p.z - h)) / (2 * h)};
  };
  size_t probes = std::min<size_t>(mesh.faces.size(), 64);
  for (size_t i = 0; i < probes; ++i) {
    size_t f = i * std::max<size_t>(1, mesh.faces.size() / probes);
    if (f >= mesh.faces.size()) break;
    const auto& tri = mesh.faces[f];
    Vec3<double> c = (mesh.vertices[size_t(tri[0])] + mesh.vertices[size_t(tri[1])] +
                      mesh.vertices[size_t(tri[2])]) / 3.0;
    align += dot(normalized(face_normal(mesh, f)), grid_grad(c));
  }
  if (align < 0)
    for (auto& f : mesh.faces) std::swap(f[1], f[2]);

  return mesh;
}

template <typename SdfFn>
inline std::vector<float> sample_sdf_grid(SdfFn&& sdf, int R) {
  const int64_t n = R + 1;
  std::vector<float> values(size_t(n * n * n));
  parallel_for(n * n * n, [&](int64_t idx) {
    int x = int(idx % n), y = int((idx / n) % n), z = int(idx / (n * n));
    values[size_t(idx)] =
        float(sdf(Vec3<double>{-1.0 + 2.0 * x / R, -1.0 + 2.0 * y / R, -1.0 + 2.0 * z / R}));
  });
  return values;
}

inline TriangleMesh marching_cubes(const AnalyticScene& scene, int R, double level = 0.0) {
  return marching_cubes_grid(sample_sdf_grid([&](const Vec3<double>& p) { return sdf_eval(scene, p); }, R),
                             R, level);
}

template <typename T>
inline TriangleMesh marching_cubes(const TriplaneField<T>& field, int R, double level = 0.0) {
  const int64_t n = R + 1;
  std::vector<float> values(size_t(n * n * n));
  parallel_chunks(n * n * n, 8192, [&](int64_t b, int64_t e, int64_t) {
    std::vector<Vec3<T>> pts(size_t(e - b));
    for (int64_t i = b; i < e; ++i) {
      int x = int(i % n), y = int((i / n) % n), z = int(i / (n * n));
      pts[size_t(i - b)] =
          Vec3<T>{T(-1.0 + 2.0 * x / R), T(-1.0 + 2.0 * y / R), T(-1.0 + 2.0 * z / R)};
    }
    VecX<T> sdf;
    eval_sdf_batch(field, pts.data(), e - b, sdf);
    for (int64_t i = b; i < e; ++i) values[size_t(i)] = float(sdf(i - b));
  });
  return marching_cubes_grid(values, R, level);
}

// --- OBJ ---------------------------------------------------------------------

inline void export_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.7g %.7g %.7g\n", v.x, v.y, v.z);
    f << buf;
  }
  for (const auto& nrm : mesh.normals) {
    std::snprintf(buf, sizeof buf, "vn %.7g %.7g %.7g\n", nrm.x, nrm.y, nrm.z);
    f << buf;
  }
  const bool with_normals = mesh.normals.size() == mesh.vertices.size();
  for (const auto& face : mesh.faces) {
    if (with_normals)
      std::snprintf(buf, sizeof buf, "f %d//%d %d//%d %d//%d\n", face[0] + 1, face[0] + 1,
                    face[1] + 1, face[1] + 1, face[2] + 1, face[2] + 1);
    else
      std::snprintf(buf, sizeof buf, "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
    f << buf;
  }
  if (!f) throw std::runtime_error("short write: " + path.string());
}

inline TriangleMesh import_obj(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  TriangleMesh mesh;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3<double> v;
      if (!(ss >> v.x >> v.y >> v.z)) fail("malformed vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "vn") {
      Vec3<double> v;
      if (!(ss >> v.x >> v.y >> v.z)) fail("malformed normal");
      mesh.normals.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> face{};
      for (int i = 0; i < 3; ++i) {
        std::string tok;
        if (!(ss >> tok)) fail("face needs three vertices");
        size_t slash = tok.find('/');
        int idx = 0;
        try {
          idx = std::stoi(slash == std::string::npos ? tok : tok.substr(0, slash));
        } catch (const std::exception&) {
          fail("malformed face index '" + tok + "'");
        }
        if (idx < 1 || idx > int(mesh.vertices.size()))
          fail("face index " + std::to_string(idx) + " out of range");
        face[size_t(i)] = idx - 1;
      }
      std::string extra;
      if (ss >> extra) fail("only triangle faces are supported");
      mesh.faces.push_back(face);
    }
    // Other tags (usemtl, o, s, ...) are ignored.
  }
  return mesh;
}

}  // namespace tpsdf
