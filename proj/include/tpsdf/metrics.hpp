#pragma once

// Reconstruction metrics: Chamfer (x100), point-to-surface (x100), normal
// consistency, PSNR/SSIM, and masked depth/normal error maps. Nearest
// neighbors go through an exact kd-tree, point-to-triangle queries through
// an exact AABB tree; brute-force oracles in the tests define correctness.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "tpsdf/analytic.hpp"
#include "tpsdf/mesh.hpp"
#include "tpsdf/rng.hpp"

namespace tpsdf {

struct PointCloud {
  std::vector<Vec3<double>> points;
  std::vector<Vec3<double>> normals;  // optional; unit when present

  bool has_normals() const { return normals.size() == points.size() && !points.empty(); }
};

// Area-weighted surface sampling with uniform barycentric placement;
// point normals are the face normals.
inline PointCloud sample_surface(const TriangleMesh& mesh, int64_t n, Rng rng) {
  if (mesh.empty()) throw std::invalid_argument("sample_surface: empty mesh");
  if (n < 1) throw std::invalid_argument("sample_surface: need n >= 1");
  std::vector<double> cum(mesh.faces.size());
  double acc = 0;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    acc += face_area(mesh, f);
    cum[f] = acc;
  }
  if (!(acc > 0)) throw std::invalid_argument("sample_surface: zero-area mesh");

  PointCloud pc;
  pc.points.reserve(size_t(n));
  pc.normals.reserve(size_t(n));
  for (int64_t i = 0; i < n; ++i) {
    double u = rng.uniform() * acc;
    size_t f = size_t(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (f >= mesh.faces.size()) f = mesh.faces.size() - 1;
    const auto& tri = mesh.faces[f];
    double r1 = std::sqrt(rng.uniform());
    double r2 = rng.uniform();
    double b0 = 1 - r1, b1 = r1 * (1 - r2), b2 = r1 * r2;
    pc.points.push_back(mesh.vertices[size_t(tri[0])] * b0 + mesh.vertices[size_t(tri[1])] * b1 +
                        mesh.vertices[size_t(tri[2])] * b2);
    Vec3<double> fn = face_normal(mesh, f);
    double l = norm(fn);
    pc.normals.push_back(l > 0 ? fn / l : Vec3<double>{0, 0, 1});
  }
  return pc;
}

// --- exact kd-tree nearest neighbor -------------------------------------------

class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3<double>>& pts) : pts_(pts) {
    if (pts_.empty()) throw std::invalid_argument("KdTree: empty point set");
    order_.resize(pts_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * pts_.size());
    root_ = build(0, int64_t(pts_.size()), 0);
  }

  // Returns the index of the nearest point and its squared distance.
  int64_t nearest(const Vec3<double>& q, double& best_d2) const {
    best_d2 = std::numeric_limits<double>::infinity();
    int64_t best = -1;
    search(root_, q, best, best_d2);
    return best;
  }

 private:
  struct Node {
    int axis = -1;           // -1 for leaves
    double split = 0;
    int64_t left = -1, right = -1;
    int64_t begin = 0, end = 0;  // leaf range into order_
  };

  static constexpr int64_t kLeaf = 16;

  int64_t build(int64_t b, int64_t e, int depth) {
    Node node;
    if (e - b <= kLeaf) {
      node.begin = b;
      node.end = e;
      nodes_.push_back(node);
      return int64_t(nodes_.size()) - 1;
    }
    int axis = depth % 3;
    int64_t mid = (b + e) / 2;
    std::nth_element(order_.begin() + b, order_.begin() + mid, order_.begin() + e,
                     [&](int64_t i, int64_t j) { return pts_[size_t(i)][axis] < pts_[size_t(j)][axis]; });
    node.axis = axis;
    node.split = pts_[size_t(order_[size_t(mid)])][axis];
    int64_t self = int64_t(nodes_.size());
    nodes_.push_back(node);
    int64_t l = build(b, mid, depth + 1);
    int64_t r = build(mid, e, depth + 1);
    nodes_[size_t(self)].left = l;
    nodes_[size_t(self)].right = r;
    return self;
  }

  void search(int64_t ni, const Vec3<double>& q, int64_t& best, double& best_d2) const {
    const Node& node = nodes_[size_t(ni)];
    if (node.axis < 0) {
      for (int64_t i = node.begin; i < node.end; ++i) {
        int64_t idx = order_[size_t(i)];
        Vec3<double> d = pts_[size_t(idx)] - q;
        double d2 = dot(d, d);
        if (d2 < best_d2) {
          best_d2 = d2;
          best = idx;
        }
      }
      return;
    }
    double delta = q[node.axis] - node.split;
    int64_t near = delta < 0 ? node.left : node.right;
    int64_t far = delta < 0 ? node.right : node.left;
    search(near, q, best, best_d2);
    if (delta * delta < best_d2) search(far, q, best, best_d2);
  }

  const std::vector<Vec3<double>>& pts_;
  std::vector<int64_t> order_;
  std::vector<Node> nodes_;
  int64_t root_ = 0;
};

// Bidirectional mean nearest-neighbor distance, reported x100.
inline double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.points.empty() || b.points.empty()) throw std::invalid_argument("chamfer: empty cloud");
  KdTree ta(a.points), tb(b.points);
  double ab = 0, ba = 0;
  for (const auto& p : a.points) {
    double d2;
    tb.nearest(p, d2);
    ab += std::sqrt(d2);
  }
  for (const auto& p : b.points) {
    double d2;
    ta.nearest(p, d2);
    ba += std::sqrt(d2);
  }
  ab /= double(a.points.size());
  ba /= double(b.points.size());
  return 100.0 * 0.5 * (ab + ba);
}

// Symmetric normal error: (1 - |n.n'|) against the nearest neighbor,
// averaged over both directions. Orientation-agnostic by construction.
inline double normal_consistency(const PointCloud& pred, const PointCloud& gt) {
  if (!pred.has_normals() || !gt.has_normals())
    throw std::invalid_argument("normal_consistency: both clouds need normals");
  KdTree tp(pred.points), tg(gt.points);
  double e_pg = 0, e_gp = 0;
  for (size_t i = 0; i < pred.points.size(); ++i) {
    double d2;
    int64_t j = tg.nearest(pred.points[i], d2);
    e_pg += 1.0 - std::abs(dot(pred.normals[i], gt.normals[size_t(j)]));
  }
  for (size_t i = 0; i < gt.points.size(); ++i) {
    double d2;
    int64_t j = tp.nearest(gt.points[i], d2);
    e_gp += 1.0 - std::abs(dot(gt.normals[i], pred.normals[size_t(j)]));
  }
  return 0.5 * (e_pg / double(pred.points.size()) + e_gp / double(gt.points.size()));
}

// --- exact point-to-triangle distance and the face tree ----------------------

inline Vec3<double> closest_point_on_triangle(const Vec3<double>& p, const Vec3<double>& a,
                                              const Vec3<double>& b, const Vec3<double>& c) {
  // Ericson, Real-Time Collision Detection, 5.1.5.
  Vec3<double> ab = b - a, ac = c - a, ap = p - a;
  double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return a;
  Vec3<double> bp = p - b;
  double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return b;
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  Vec3<double> cp = p - c;
  double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return c;
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + (c - b) * w;
  }
  double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

class TriangleTree {
 public:
  explicit TriangleTree(const TriangleMesh& mesh) : mesh_(mesh) {
    if (mesh.empty()) throw std::invalid_argument("TriangleTree: empty mesh");
    order_.resize(mesh.faces.size());
    std::iota(order_.begin(), order_.end(), 0);
    root_ = build(0, int64_t(order_.size()));
  }

  double distance(const Vec3<double>& p) const {
    double best = std::numeric_limits<double>::infinity();
    search(root_, p, best);
    return std::sqrt(best);
  }

 private:
  struct Node {
    Vec3<double> lo, hi;
    int64_t left = -1, right = -1;
    int64_t begin = 0, end = 0;
  };
  static constexpr int64_t kLeaf = 8;

  Vec3<double> centroid(int64_t f) const {
    const auto& tri = mesh_.faces[size_t(f)];
    return (mesh_.vertices[size_t(tri[0])] + mesh_.vertices[size_t(tri[1])] +
            mesh_.vertices[size_t(tri[2])]) / 3.0;
  }

  int64_t build(int64_t b, int64_t e) {
    Node node;
    node.lo = {1e30, 1e30, 1e30};
    node.hi = {-1e30, -1e30, -1e30};
    for (int64_t i = b; i < e; ++i)
      for (int v : mesh_.faces[size_t(order_[size_t(i)])]) {
        node.lo = cwise_min(node.lo, mesh_.vertices[size_t(v)]);
        node.hi = cwise_max(node.hi, mesh_.vertices[size_t(v)]);
      }
    int64_t self = int64_t(nodes_.size());
    if (e - b <= kLeaf) {
      node.begin = b;
      node.end = e;
      nodes_.push_back(node);
      return self;
    }
    Vec3<double> ext = node.hi - node.lo;
    int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    int64_t mid = (b + e) / 2;
    std::nth_element(order_.begin() + b, order_.begin() + mid, order_.begin() + e,
                     [&](int64_t i, int64_t j) { return centroid(i)[axis] < centroid(j)[axis]; });
    nodes_.push_back(node);
    int64_t l = build(b, mid);
    int64_t r = build(mid, e);
    nodes_[size_t(self)].left = l;
    nodes_[size_t(self)].right = r;
    return self;
  }

  double box_d2(const Node& node, const Vec3<double>& p) const {
    double d2 = 0;
    for (int a = 0; a < 3; ++a) {
      double v = p[a] < node.lo[a] ? node.lo[a] - p[a] : (p[a] > node.hi[a] ? p[a] - node.hi[a] : 0);
      d2 += v * v;
    }
    return d2;
  }

  void search(int64_t ni, const Vec3<double>& p, double& best) const {
    const Node& node = nodes_[size_t(ni)];
    if (box_d2(node, p) >= best) return;
    if (node.left < 0) {
      for (int64_t i = node.begin; i < node.end; ++i) {
        const auto& tri = mesh_.faces[size_t(order_[size_t(i)])];
        Vec3<double> q = closest_point_on_triangle(p, mesh_.vertices[size_t(tri[0])],
                                                   mesh_.vertices[size_t(tri[1])],
                                                   mesh_.vertices[size_t(tri[2])]);
        Vec3<double> d = p - q;
        best = std::min(best, dot(d, d));
      }
      return;
    }
    double dl = box_d2(nodes_[size_t(node.left)], p);
    double dr = box_d2(nodes_[size_t(node.right)], p);
    if (dl <= dr) {
      search(node.left, p, best);
      search(node.right, p, best);
    } else {
      search(node.right, p, best);
      search(node.left, p, best);
    }
  }

  const TriangleMesh& mesh_;
  std::vector<int64_t> order_;
  std::vector<Node> nodes_;
  int64_t root_ = 0;
};

// Mean exact distance from ground-truth surface points to the predicted
// mesh, reported x100.
inline double p2s(const PointCloud& gt_points, const TriangleMesh& pred) {
  if (gt_points.points.empty()) throw std::invalid_argument("p2s: empty point cloud");
  if (pred.empty()) throw std::invalid_argument("p2s: empty mesh");
  TriangleTree tree(pred);
  double acc = 0;
  for (const auto& p : gt_points.points) acc += tree.distance(p);
  return 100.0 * acc / double(gt_points.points.size());
}

// --- appearance metrics --------------------------------------------------------

// PSNR over [0,1] images; identical images return +infinity.
inline double psnr(const ImageF& a, const ImageF& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) mse += sqr(double(a.data[i]) - double(b.data[i]));
  mse /= double(a.data.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// averaged over the valid interior and channels.
inline double ssim(const ImageF& a, const ImageF& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  constexpr int kHalf = 5;
  const int W = a.width, H = a.height, C = a.channels;
  if (W < 11 || H < 11) throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  double kernel[11];
  double ksum = 0;
  for (int i = 0; i < 11; ++i) {
    kernel[i] = std::exp(-sqr(double(i - kHalf)) / (2 * sqr(1.5)));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  const double c1 = sqr(0.01), c2 = sqr(0.03);
  double total = 0;
  int64_t count = 0;
  // Separable filtering per channel, valid region only.
  for (int c = 0; c < C; ++c) {
    // Horizontal pass into line buffers for each row, then vertical.
    std::vector<double> ha(size_t(W) * H), hb(size_t(W) * H), haa(size_t(W) * H),
        hbb(size_t(W) * H), hab(size_t(W) * H);
    for (int y = 0; y < H; ++y) {
      for (int x = kHalf; x < W - kHalf; ++x) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int k = -kHalf; k <= kHalf; ++k) {
          double va = a.at(x + k, y, c), vb = b.at(x + k, y, c);
          double w = kernel[k + kHalf];
          sa += w * va;
          sb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
        ha[size_t(y) * W + x] = sa;
        hb[size_t(y) * W + x] = sb;
        haa[size_t(y) * W + x] = saa;
        hbb[size_t(y) * W + x] = sbb;
        hab[size_t(y) * W + x] = sab;
      }
    }
    for (int y = kHalf; y < H - kHalf; ++y) {
      for (int x = kHalf; x < W - kHalf; ++x) {
        double mu_a = 0, mu_b = 0, m_aa = 0, m_bb = 0, m_ab = 0;
        for (int k = -kHalf; k <= kHalf; ++k) {
          double w = kernel[k + kHalf];
          size_t idx = size_t(y + k) * W + x;
          mu_a += w * ha[idx];
          mu_b += w * hb[idx];
          m_aa += w * haa[idx];
          m_bb += w * hbb[idx];
          m_ab += w * hab[idx];
        }
        double var_a = m_aa - mu_a * mu_a;
        double var_b = m_bb - mu_b * mu_b;
        double cov = m_ab - mu_a * mu_b;
        double s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        total += s;
        ++count;
      }
    }
  }
  return total / double(count);
}

// Masked depth MAE (x100) and mean (1 - n.n') over the intersection of the
// foreground masks.
struct DepthNormalError {
  double depth_mae_x100 = 0;
  double normal_error = 0;
  int64_t pixels = 0;
};

inline DepthNormalError depth_normal_error(const ViewBundle& pred, const ViewBundle& gt) {
  if (pred.depth.width != gt.depth.width || pred.depth.height != gt.depth.height)
    throw std::invalid_argument("depth_normal_error: resolution mismatch");
  DepthNormalError out;
  double dacc = 0, nacc = 0;
  for (int y = 0; y < gt.depth.height; ++y)
    for (int x = 0; x < gt.depth.width; ++x) {
      bool fg_gt = gt.mask.empty() ? gt.depth.at(x, y, 0) > 0 : gt.mask.at(x, y, 0) != 0;
      bool fg_pred = pred.mask.empty() ? pred.depth.at(x, y, 0) > 0 : pred.mask.at(x, y, 0) != 0;
      if (!fg_gt || !fg_pred) continue;
      ++out.pixels;
      dacc += std::abs(double(pred.depth.at(x, y, 0)) - double(gt.depth.at(x, y, 0)));
      Vec3<double> np{pred.normal.at(x, y, 0), pred.normal.at(x, y, 1), pred.normal.at(x, y, 2)};
      Vec3<double> ng{gt.normal.at(x, y, 0), gt.normal.at(x, y, 1), gt.normal.at(x, y, 2)};
      nacc += 1.0 - dot(np, ng);
    }
  if (out.pixels == 0) throw std::runtime_error("depth_normal_error: empty mask intersection");
  out.depth_mae_x100 = 100.0 * dacc / double(out.pixels);
  out.normal_error = nacc / double(out.pixels);
  return out;
}

}  // namespace tpsdf
