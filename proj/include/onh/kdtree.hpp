#pragma once

// Exact nearest-neighbour search over 3D points for the Chamfer loss.
// Ties resolve to the lowest point index so that results are identical to
// an exhaustive scan.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Core>

#include "onh/error.hpp"

namespace onh {

class KdTree3 {
 public:
  using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  // `pts` is (n, 3) and must outlive the tree.
  explicit KdTree3(const Points& pts) : pts_(&pts) {
    if (pts.cols() != 3) throw ValidationError("KdTree3: points must have 3 columns");
    if (pts.rows() == 0) throw ValidationError("KdTree3: empty point set");
    idx_.resize(static_cast<std::size_t>(pts.rows()));
    std::iota(idx_.begin(), idx_.end(), std::size_t{0});
    nodes_.reserve(2 * idx_.size() / kLeaf + 2);
    build(0, idx_.size());
    // Leaf scans read a contiguous copy in tree order.
    packed_.resize(3 * idx_.size());
    for (std::size_t i = 0; i < idx_.size(); ++i) std::copy_n(row(idx_[i]), 3, packed_.data() + 3 * i);
  }

  struct Hit {
    std::size_t index = 0;
    double sq_dist = std::numeric_limits<double>::infinity();
  };

  Hit nearest(double x, double y, double z) const {
    Hit best;
    const double q[3] = {x, y, z};
    search(0, q, best);
    return best;
  }

  static double sq_dist(const double* a, const double* b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
  }

 private:
  static constexpr std::size_t kLeaf = 32;

  struct Node {
    std::size_t begin, end;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::size_t left = 0, right = 0;
    double lo[3], hi[3];  // bounding box of the node's points
  };

  double box_sq_dist(const Node& n, const double* q) const {
    double d = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double t = q[a] < n.lo[a] ? n.lo[a] - q[a] : (q[a] > n.hi[a] ? q[a] - n.hi[a] : 0.0);
      d += t * t;
    }
    return d;
  }

  const double* row(std::size_t i) const { return pts_->data() + 3 * i; }

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end, -1, 0.0, 0, 0, {}, {}});
    double lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::numeric_limits<double>::infinity();
      hi[a] = -std::numeric_limits<double>::infinity();
    }
    for (std::size_t i = begin; i < end; ++i) {
      const double* p = row(idx_[i]);
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], p[a]);
        hi[a] = std::max(hi[a], p[a]);
      }
    }
    for (int a = 0; a < 3; ++a) {
      nodes_[id].lo[a] = lo[a];
      nodes_[id].hi[a] = hi[a];
    }
    if (end - begin <= kLeaf) return id;

    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                     idx_.begin() + static_cast<std::ptrdiff_t>(mid),
                     idx_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       const double va = row(a)[axis], vb = row(b)[axis];
                       return va < vb || (va == vb && a < b);
                     });
    const double split = row(idx_[mid])[axis];
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::size_t id, const double* q, Hit& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const double d = sq_dist(q, packed_.data() + 3 * i);
        const std::size_t j = idx_[i];
        if (d < best.sq_dist || (d == best.sq_dist && j < best.index)) best = {j, d};
      }
      return;
    }
    // Nearer box first; "<=" keeps equal-distance candidates with lower
    // indices reachable.
    const double dl = box_sq_dist(nodes_[n.left], q);
    const double dr = box_sq_dist(nodes_[n.right], q);
    const bool left_first = dl <= dr;
    const std::size_t near = left_first ? n.left : n.right;
    const std::size_t far = left_first ? n.right : n.left;
    if ((left_first ? dl : dr) <= best.sq_dist) search(near, q, best);
    if ((left_first ? dr : dl) <= best.sq_dist) search(far, q, best);
  }

  const Points* pts_;
  std::vector<std::size_t> idx_;
  std::vector<double> packed_;
  std::vector<Node> nodes_;
};

}  // namespace onh
