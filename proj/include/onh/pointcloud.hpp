#pragma once

// Labeled 3D point clouds: the data type every stage of the pipeline
// exchanges, plus the geometric operations applied to them before they
// reach the network (normalization, farthest-point downsampling,
// augmentation, layer filtering, central-slice extraction).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "onh/error.hpp"

namespace onh {

using Vec3 = std::array<double, 3>;

enum class LayerLabel : std::uint8_t {
  RNFL = 0,
  GCL_IPL = 1,
  ORL = 2,
  RPE = 3,
  CHOROID = 4,
  SCLERA = 5,
  LC = 6,
  PRELAMINA = 7,
};
inline constexpr int kLayerCount = 8;

enum class ClassLabel : std::uint8_t { H = 0, HM = 1, G = 2, HMG = 3 };
inline constexpr int kClassCount = 4;

enum class BoundarySide : std::uint8_t { Anterior = 0, Posterior = 1 };

inline LayerLabel layer_from_code(int code) {
  if (code < 0 || code >= kLayerCount) {
    throw ValidationError("layer code out of range 0-7: " + std::to_string(code));
  }
  return static_cast<LayerLabel>(code);
}

constexpr int layer_code(LayerLabel l) { return static_cast<int>(l); }

inline constexpr std::array<std::string_view, kLayerCount> kLayerNames = {
    "rnfl", "gcl_ipl", "orl", "rpe", "choroid", "sclera", "lc", "prelamina"};

inline std::string_view layer_name(LayerLabel l) { return kLayerNames[layer_code(l)]; }

inline LayerLabel parse_layer(std::string_view name) {
  for (int i = 0; i < kLayerCount; ++i) {
    if (kLayerNames[i] == name) return static_cast<LayerLabel>(i);
  }
  throw ValidationError("unknown layer name: " + std::string(name));
}

inline ClassLabel class_from_code(int code) {
  if (code < 0 || code >= kClassCount) {
    throw ValidationError("class code out of range 0-3: " + std::to_string(code));
  }
  return static_cast<ClassLabel>(code);
}

constexpr int class_code(ClassLabel c) { return static_cast<int>(c); }

inline constexpr std::array<std::string_view, kClassCount> kClassNames = {"H", "HM", "G", "HMG"};

inline std::string_view class_name(ClassLabel c) { return kClassNames[class_code(c)]; }

inline ClassLabel parse_class(std::string_view name) {
  for (int i = 0; i < kClassCount; ++i) {
    if (kClassNames[i] == name) return static_cast<ClassLabel>(i);
  }
  throw ValidationError("unknown class name: " + std::string(name));
}

// Small set of layer labels backed by a bitmask.
class LayerSet {
 public:
  constexpr LayerSet() = default;
  constexpr LayerSet(std::initializer_list<LayerLabel> layers) {
    for (auto l : layers) insert(l);
  }

  static constexpr LayerSet all() {
    LayerSet s;
    s.bits_ = 0xFF;
    return s;
  }

  constexpr void insert(LayerLabel l) { bits_ |= static_cast<std::uint8_t>(1u << layer_code(l)); }
  constexpr bool contains(LayerLabel l) const { return (bits_ >> layer_code(l)) & 1u; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool operator==(const LayerSet&) const = default;

  std::vector<LayerLabel> members() const {
    std::vector<LayerLabel> out;
    for (int i = 0; i < kLayerCount; ++i) {
      if ((bits_ >> i) & 1u) out.push_back(static_cast<LayerLabel>(i));
    }
    return out;
  }

  std::string to_string() const {
    std::string s;
    for (auto l : members()) {
      if (!s.empty()) s += ',';
      s += layer_name(l);
    }
    return s;
  }

  // Comma separated layer names, e.g. "rnfl,orl,sclera,lc".
  static LayerSet parse(std::string_view text) {
    LayerSet s;
    while (!text.empty()) {
      auto comma = text.find(',');
      auto token = text.substr(0, comma);
      if (!token.empty()) s.insert(parse_layer(token));
      if (comma == std::string_view::npos) break;
      text.remove_prefix(comma + 1);
    }
    if (s.empty()) throw ValidationError("empty layer set");
    return s;
  }

 private:
  std::uint8_t bits_ = 0;
};

// Layers kept in extracted clouds by default. GCL+IPL, RPE and choroid are
// implied by their neighbours; prelamina is opt-in.
inline constexpr LayerSet kDefaultLayers{LayerLabel::RNFL, LayerLabel::ORL, LayerLabel::SCLERA,
                                         LayerLabel::LC};

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  LayerLabel layer = LayerLabel::RNFL;

  bool operator==(const Point&) const = default;
};

// Number of points the network consumes per cloud.
inline constexpr std::size_t kModelPoints = 4096;

struct PointCloud {
  std::vector<Point> points;
  std::optional<ClassLabel> class_label;
  std::optional<std::string> subject_id;
  // Per-point boundary side; present for extracted and generated clouds.
  std::optional<std::vector<BoundarySide>> sides;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  // Throws on the first non-finite coordinate or inconsistent side vector.
  void validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
        throw ValidationError("non-finite coordinate at point " + std::to_string(i));
      }
      if (layer_code(p.layer) >= kLayerCount) {
        throw ValidationError("invalid layer label at point " + std::to_string(i));
      }
    }
    if (sides && sides->size() != points.size()) {
      throw ValidationError("boundary side count does not match point count");
    }
  }

  bool operator==(const PointCloud&) const = default;
};

// Fixed global scale (mm) mapping registered clouds into network units.
// Disc size carries class signal, so no per-cloud rescaling is applied.
inline constexpr double kNormalizationScale = 2.0;

inline PointCloud normalize(const PointCloud& cloud, const Vec3& reference_center) {
  for (double c : reference_center) {
    if (!std::isfinite(c)) throw ValidationError("normalize: reference center is not finite");
  }
  cloud.validate();
  PointCloud out = cloud;
  for (auto& p : out.points) {
    p.x = (p.x - reference_center[0]) / kNormalizationScale;
    p.y = (p.y - reference_center[1]) / kNormalizationScale;
    p.z = (p.z - reference_center[2]) / kNormalizationScale;
  }
  return out;
}

inline double squared_distance(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

// Indices chosen by farthest-point sampling, in selection order. The first
// index is drawn from `seed`; every later pick maximizes the distance to the
// selected set, ties going to the lowest index.
inline std::vector<std::size_t> fps_indices(std::span<const Point> points, std::size_t m,
                                            std::uint64_t seed) {
  if (points.empty()) throw ValidationError("downsample_fps: empty cloud");
  if (m == 0) throw ValidationError("downsample_fps: m must be >= 1");
  const std::size_t n = points.size();
  m = std::min(m, n);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> selected;
  selected.reserve(m);
  selected.push_back(pick(rng));

  // Points are bucketed into grid cells holding their bounding box and the
  // largest min-distance inside; a cell whose box is no closer to the newest
  // pick than that maximum cannot change and is skipped. Cells keep their
  // points in index order, so results match the plain O(n*m) scan.
  struct Cell {
    std::size_t begin = 0, end = 0;
    double lo[3], hi[3];
    double max_d = std::numeric_limits<double>::infinity();
  };
  double lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::numeric_limits<double>::infinity();
    hi[a] = -std::numeric_limits<double>::infinity();
  }
  auto coord = [&](std::size_t i, int a) { return a == 0 ? points[i].x : (a == 1 ? points[i].y : points[i].z); };
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], coord(i, a));
      hi[a] = std::max(hi[a], coord(i, a));
    }
  }
  const std::size_t g = std::clamp<std::size_t>(static_cast<std::size_t>(std::sqrt(static_cast<double>(n) / 256.0)), 1, 64);
  auto bin = [&](double v, int a) {
    const double span = hi[a] - lo[a];
    if (!(span > 0)) return std::size_t{0};
    return std::min(g - 1, static_cast<std::size_t>((v - lo[a]) / span * static_cast<double>(g)));
  };
  std::vector<std::size_t> cell_of(n), count(g * g + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    cell_of[i] = bin(points[i].x, 0) * g + bin(points[i].y, 1);
    ++count[cell_of[i] + 1];
  }
  for (std::size_t c = 0; c < g * g; ++c) count[c + 1] += count[c];
  std::vector<Cell> cells(g * g);
  for (std::size_t c = 0; c < g * g; ++c) {
    cells[c].begin = count[c];
    cells[c].end = count[c + 1];
    for (int a = 0; a < 3; ++a) {
      cells[c].lo[a] = std::numeric_limits<double>::infinity();
      cells[c].hi[a] = -std::numeric_limits<double>::infinity();
    }
  }
  // Flat per-slot arrays in cell order.
  std::vector<std::size_t> orig(n), slot_of(n);
  std::vector<double> xs(n), ys(n), zs(n);
  {
    auto fill = count;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t s = fill[cell_of[i]]++;
      orig[s] = i;
      slot_of[i] = s;
      xs[s] = points[i].x;
      ys[s] = points[i].y;
      zs[s] = points[i].z;
      auto& c = cells[cell_of[i]];
      for (int a = 0; a < 3; ++a) {
        c.lo[a] = std::min(c.lo[a], coord(i, a));
        c.hi[a] = std::max(c.hi[a], coord(i, a));
      }
    }
  }
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  auto refresh_max = [&](Cell& c) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = c.begin; s < c.end; ++s) mx = min_d[s] > mx ? min_d[s] : mx;
    c.max_d = mx;
  };
  // Selected points are parked at -inf so duplicates never get re-picked.
  auto park = [&](std::size_t i) {
    min_d[slot_of[i]] = -std::numeric_limits<double>::infinity();
    refresh_max(cells[cell_of[i]]);
  };
  park(selected.front());
  while (selected.size() < m) {
    const Point& last = points[selected.back()];
    const double q[3] = {last.x, last.y, last.z};
    for (auto& c : cells) {
      if (c.begin == c.end) continue;
      double bd = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double t = q[a] < c.lo[a] ? c.lo[a] - q[a] : (q[a] > c.hi[a] ? q[a] - c.hi[a] : 0.0);
        bd += t * t;
      }
      if (bd >= c.max_d) continue;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t s = c.begin; s < c.end; ++s) {
        const double dx = xs[s] - q[0];
        const double dy = ys[s] - q[1];
        const double dz = zs[s] - q[2];
        const double d = dx * dx + dy * dy + dz * dz;
        const double md = d < min_d[s] ? d : min_d[s];
        min_d[s] = md;
        mx = md > mx ? md : mx;
      }
      c.max_d = mx;
    }
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& c : cells) best = c.max_d > best ? c.max_d : best;
    // Lowest original index attaining the maximum.
    std::size_t best_i = n;
    for (const auto& c : cells) {
      if (c.max_d != best) continue;
      for (std::size_t s = c.begin; s < c.end; ++s) {
        if (min_d[s] == best) {
          best_i = std::min(best_i, orig[s]);
          break;
        }
      }
    }
    selected.push_back(best_i);
    park(best_i);
  }
  return selected;
}

inline PointCloud select_points(const PointCloud& cloud, std::span<const std::size_t> idx) {
  PointCloud out;
  out.class_label = cloud.class_label;
  out.subject_id = cloud.subject_id;
  out.points.reserve(idx.size());
  for (auto i : idx) out.points.push_back(cloud.points[i]);
  if (cloud.sides) {
    std::vector<BoundarySide> s;
    s.reserve(idx.size());
    for (auto i : idx) s.push_back((*cloud.sides)[i]);
    out.sides = std::move(s);
  }
  return out;
}

inline PointCloud downsample_fps(const PointCloud& cloud, std::size_t m, std::uint64_t seed) {
  auto idx = fps_indices(cloud.points, m, seed);
  return select_points(cloud, idx);
}

// Bring a cloud to exactly `m` points: FPS when larger, deterministic
// resampling with repetition when smaller.
inline PointCloud resample_to(const PointCloud& cloud, std::size_t m, std::uint64_t seed) {
  if (cloud.empty()) throw ValidationError("resample_to: empty cloud");
  if (cloud.size() >= m) return downsample_fps(cloud, m, seed);
  std::vector<std::size_t> idx(cloud.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
  while (idx.size() < m) idx.push_back(pick(rng));
  return select_points(cloud, idx);
}

struct AugmentParams {
  double jitter_sigma = 0.005;  // normalized units
  double max_rot_deg = 10.0;
  double max_shift = 0.05;  // normalized units
};

// Counterclockwise rotation viewed from +z.
inline void rotate_about_z(PointCloud& cloud, double angle_rad) {
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  for (auto& p : cloud.points) {
    const double x = p.x;
    const double y = p.y;
    p.x = c * x - s * y;
    p.y = s * x + c * y;
  }
}

inline PointCloud augment(const PointCloud& cloud, std::uint64_t rng_seed, const AugmentParams& a) {
  if (a.jitter_sigma < 0 || a.max_rot_deg < 0 || a.max_shift < 0) {
    throw ValidationError("augment: parameters must be >= 0");
  }
  PointCloud out = cloud;
  std::mt19937_64 rng(rng_seed);
  if (a.jitter_sigma > 0) {
    std::normal_distribution<double> noise(0.0, a.jitter_sigma);
    const double clip = 4.0 * a.jitter_sigma;
    for (auto& p : out.points) {
      p.x += std::clamp(noise(rng), -clip, clip);
      p.y += std::clamp(noise(rng), -clip, clip);
      p.z += std::clamp(noise(rng), -clip, clip);
    }
  }
  if (a.max_rot_deg > 0) {
    std::uniform_real_distribution<double> angle(-a.max_rot_deg, a.max_rot_deg);
    rotate_about_z(out, angle(rng) * std::numbers::pi / 180.0);
  }
  if (a.max_shift > 0) {
    std::uniform_real_distribution<double> shift(-a.max_shift, a.max_shift);
    const double tx = shift(rng);
    const double ty = shift(rng);
    const double tz = shift(rng);
    for (auto& p : out.points) {
      p.x += tx;
      p.y += ty;
      p.z += tz;
    }
  }
  return out;
}

inline PointCloud split_by_layers(const PointCloud& cloud, LayerSet layers) {
  if (layers.empty()) throw ValidationError("split_by_layers: empty layer set");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (layers.contains(cloud.points[i].layer)) idx.push_back(i);
  }
  if (idx.empty()) {
    throw ValidationError("split_by_layers: no points in layers {" + layers.to_string() + "}");
  }
  return select_points(cloud, idx);
}

inline std::vector<std::size_t> slice_indices(const PointCloud& cloud, double y_center, double tol) {
  if (!(tol > 0)) throw ValidationError("central_slice: tol must be > 0");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (std::abs(cloud.points[i].y - y_center) <= tol) idx.push_back(i);
  }
  return idx;
}

namespace detail {

// Optimal two-cluster split of sorted 1-D values; returns the count of the
// lower cluster.
inline std::size_t split_two_means(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  if (n < 2) return n;
  std::vector<double> prefix(n + 1, 0.0), prefix_sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + sorted[i];
    prefix_sq[i + 1] = prefix_sq[i] + sorted[i] * sorted[i];
  }
  auto sse = [&](std::size_t a, std::size_t b) {
    const double cnt = static_cast<double>(b - a);
    const double s = prefix[b] - prefix[a];
    return (prefix_sq[b] - prefix_sq[a]) - s * s / cnt;
  };
  std::size_t best_k = 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < n; ++k) {
    const double cost = sse(0, k) + sse(k, n);
    if (cost < best) {
      best = cost;
      best_k = k;
    }
  }
  return best_k;
}

}  // namespace detail

inline constexpr std::size_t kSideWindow = 9;

// Recovers anterior/posterior tags for points of a single layer lying in a
// thin slice: points are swept in x with overlapping windows of nine, each
// window is split into two z-clusters, and every point takes the majority
// vote over the windows that contain it (smaller z is anterior).
inline std::vector<BoundarySide> infer_boundary_sides(std::span<const Point> pts) {
  const std::size_t n = pts.size();
  std::vector<BoundarySide> out(n, BoundarySide::Anterior);
  if (n < 2) return out;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pts[a].x < pts[b].x; });

  const std::size_t w = std::min(kSideWindow, n);
  std::vector<int> votes(n, 0);  // > 0 anterior, < 0 posterior
  std::vector<std::pair<double, std::size_t>> window(w);
  std::vector<double> zs(w);
  for (std::size_t start = 0; start + w <= n; ++start) {
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t i = order[start + j];
      window[j] = {pts[i].z, i};
    }
    std::stable_sort(window.begin(), window.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t j = 0; j < w; ++j) zs[j] = window[j].first;
    const std::size_t lower = detail::split_two_means(zs);
    for (std::size_t j = 0; j < w; ++j) votes[window[j].second] += j < lower ? 1 : -1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = votes[i] >= 0 ? BoundarySide::Anterior : BoundarySide::Posterior;
  }
  return out;
}

using SliceKey = std::pair<LayerLabel, BoundarySide>;
using SliceTable = std::map<SliceKey, std::vector<Point>>;

inline SliceTable central_slice(const PointCloud& cloud, double y_center, double tol) {
  const auto idx = slice_indices(cloud, y_center, tol);
  SliceTable table;
  if (idx.empty()) return table;
  if (cloud.sides) {
    for (auto i : idx) table[{cloud.points[i].layer, (*cloud.sides)[i]}].push_back(cloud.points[i]);
    return table;
  }
  std::map<LayerLabel, std::vector<Point>> by_layer;
  for (auto i : idx) by_layer[cloud.points[i].layer].push_back(cloud.points[i]);
  for (const auto& [layer, pts] : by_layer) {
    const auto sides = infer_boundary_sides(pts);
    for (std::size_t j = 0; j < pts.size(); ++j) table[{layer, sides[j]}].push_back(pts[j]);
  }
  return table;
}

}  // namespace onh
