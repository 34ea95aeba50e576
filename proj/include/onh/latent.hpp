#pragma once

// Post-hoc analysis of latent codes: a two-direction PCA with its inverse,
// k-means on the resulting plane, morphing between embedding points and
// smoothing-spline rendering of central slices.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <json.hpp>

#include "onh/error.hpp"
#include "onh/log.hpp"
#include "onh/model.hpp"
#include "onh/onhpc.hpp"
#include "onh/pointcloud.hpp"

namespace onh {

using Vec2 = Eigen::Vector2d;

// ---------------------------------------------------------------- PCA

struct PcaModel {
  Eigen::VectorXd mean;
  std::array<Eigen::VectorXd, 2> components;  // PD1, PD2; unit length, orthogonal
  std::array<double, 2> explained{};          // eigenvalues of the sample covariance

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

namespace detail {

// Largest-magnitude entry made positive; the first such entry wins ties.
inline void fix_sign(Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (v[best] < 0) v = -v;
}

}  // namespace detail

// Relative size below which the second eigenvalue counts as zero.
inline constexpr double kPcaRankTolerance = 1e-12;

inline PcaModel pca_fit(const std::vector<Eigen::VectorXd>& latents) {
  if (latents.size() < 3) throw ValidationError("pca_fit: need at least 3 latent vectors");
  const Eigen::Index k = latents.front().size();
  if (k < 2) throw ValidationError("pca_fit: latent dimension must be >= 2");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(latents.size()), k);
  for (std::size_t i = 0; i < latents.size(); ++i) {
    if (latents[i].size() != k) throw ValidationError("pca_fit: latent vectors differ in length");
    if (!latents[i].allFinite()) throw ValidationError("pca_fit: non-finite latent vector");
    x.row(static_cast<Eigen::Index>(i)) = latents[i].transpose();
  }
  PcaModel m;
  m.mean = x.colwise().mean().transpose();
  x.rowwise() -= m.mean.transpose();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw ValidationError("pca_fit: eigendecomposition failed");
  // Ascending order: the last two columns are the principal directions.
  const double l1 = es.eigenvalues()[k - 1], l2 = es.eigenvalues()[k - 2];
  if (!(l1 > 0) || l2 <= kPcaRankTolerance * l1) {
    throw ValidationError("pca_fit: covariance has rank < 2");
  }
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(k - 1 - c);
    v.normalize();
    detail::fix_sign(v);
    m.components[c] = std::move(v);
  }
  m.explained = {l1, l2};
  return m;
}

inline Vec2 pca_forward(const PcaModel& m, const Eigen::VectorXd& latent) {
  if (latent.size() != m.mean.size()) {
    throw ValidationError("pca_forward: latent length " + std::to_string(latent.size()) + " != " +
                          std::to_string(m.mean.size()));
  }
  const Eigen::VectorXd c = latent - m.mean;
  return {c.dot(m.components[0]), c.dot(m.components[1])};
}

inline Eigen::VectorXd pca_inverse(const PcaModel& m, const Vec2& pd) {
  if (!pd.allFinite()) throw ValidationError("pca_inverse: non-finite coordinates");
  return m.mean + pd[0] * m.components[0] + pd[1] * m.components[1];
}

inline nlohmann::json to_json(const PcaModel& m) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"mean", vec(m.mean)},
          {"components", {vec(m.components[0]), vec(m.components[1])}},
          {"explained", {m.explained[0], m.explained[1]}}};
}

inline PcaModel pca_from_json(const nlohmann::json& j) {
  try {
    auto vec = [](const nlohmann::json& a) {
      const auto v = a.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    PcaModel m;
    m.mean = vec(j.at("mean"));
    m.components = {vec(j.at("components").at(0)), vec(j.at("components").at(1))};
    m.explained = {j.at("explained").at(0).get<double>(), j.at("explained").at(1).get<double>()};
    if (m.components[0].size() != m.mean.size() || m.components[1].size() != m.mean.size()) {
      throw ValidationError("pca: component length does not match mean");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("pca: malformed model: ") + e.what());
  }
}

// ---------------------------------------------------------------- k-means

struct ClusterModel {
  std::vector<Vec2> centroids;
  std::vector<std::size_t> assignments;  // of the fitted points
  std::vector<double> objective;         // within-cluster SS after every assignment step
  std::size_t iterations = 0;

  std::size_t k() const { return centroids.size(); }

  // Nearest centroid; ties go to the lower cluster id.
  std::size_t assign(const Vec2& p) const {
    std::size_t best = 0;
    double bd = (p - centroids[0]).squaredNorm();
    for (std::size_t c = 1; c < centroids.size(); ++c) {
      const double d = (p - centroids[c]).squaredNorm();
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    return best;
  }
};

inline constexpr std::size_t kClusterCount = 4;
inline constexpr std::size_t kKmeansMaxIterations = 500;
inline constexpr double kKmeansTolerance = 1e-8;

// k-means++ seeding followed by Lloyd iterations. A cluster that loses all
// members is re-seeded at the point farthest from its current centroid.
inline ClusterModel kmeans_fit(const std::vector<Vec2>& pts, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  for (const auto& p : pts)
    if (!p.allFinite()) throw ValidationError("kmeans: non-finite point");
  {
    std::vector<std::pair<double, double>> distinct;
    for (const auto& p : pts) distinct.emplace_back(p[0], p[1]);
    std::sort(distinct.begin(), distinct.end());
    const auto n_distinct = static_cast<std::size_t>(std::unique(distinct.begin(), distinct.end()) - distinct.begin());
    if (n_distinct < k) {
      throw ValidationError("kmeans: need at least " + std::to_string(k) + " distinct points, got " +
                            std::to_string(n_distinct));
    }
  }
  const std::size_t n = pts.size();
  std::mt19937_64 rng(seed);
  ClusterModel m;
  m.centroids.push_back(pts[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (pts[i] - m.centroids[0]).squaredNorm();
  while (m.centroids.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t pick = n;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0) continue;
      acc += d2[i];
      pick = i;
      if (acc > r) break;
    }
    m.centroids.push_back(pts[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], (pts[i] - m.centroids.back()).squaredNorm());
  }

  auto assign_all = [&] {
    std::vector<std::size_t> a(n);
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = m.assign(pts[i]);
      obj += (pts[i] - m.centroids[a[i]]).squaredNorm();
    }
    m.objective.push_back(obj);
    return a;
  };

  for (m.iterations = 1; m.iterations <= kKmeansMaxIterations; ++m.iterations) {
    const auto a = assign_all();
    std::vector<Vec2> sum(k, Vec2::Zero());
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[a[i]] += pts[i];
      ++count[a[i]];
    }
    std::vector<Vec2> next(k);
    for (std::size_t c = 0; c < k; ++c) next[c] = count[c] ? Vec2(sum[c] / static_cast<double>(count[c])) : m.centroids[c];
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c]) continue;
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = (pts[i] - next[a[i]]).squaredNorm();
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      next[c] = pts[far];
    }
    double move = 0.0;
    for (std::size_t c = 0; c < k; ++c) move = std::max(move, (next[c] - m.centroids[c]).norm());
    m.centroids = std::move(next);
    if (move < kKmeansTolerance) break;
  }
  m.iterations = std::min(m.iterations, kKmeansMaxIterations);
  m.assignments = assign_all();
  return m;
}

inline nlohmann::json to_json(const ClusterModel& m) {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& v : m.centroids) c.push_back({v[0], v[1]});
  return {{"centroids", c}, {"iterations", m.iterations}, {"objective", m.objective}};
}

inline ClusterModel clusters_from_json(const nlohmann::json& j) {
  try {
    ClusterModel m;
    for (const auto& c : j.at("centroids")) m.centroids.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
    if (m.centroids.empty()) throw ValidationError("clusters: no centroids");
    m.iterations = j.value("iterations", std::size_t{0});
    if (j.contains("objective")) m.objective = j.at("objective").get<std::vector<double>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("clusters: malformed model: ") + e.what());
  }
}

// Class/cluster contingency and its best one-to-one matching.
struct ClassClusterMatch {
  std::array<std::array<std::size_t, kClusterCount>, kClassCount> contingency{};  // [class][cluster]
  std::array<std::size_t, kClassCount> cluster_of{};                              // matched cluster per class
  std::size_t covered = 0;
  std::size_t total = 0;

  double coverage() const { return total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0; }
};

inline ClassClusterMatch match_classes(const std::vector<ClassLabel>& classes, const std::vector<std::size_t>& clusters) {
  if (classes.size() != clusters.size()) throw ValidationError("match_classes: length mismatch");
  ClassClusterMatch r;
  r.total = classes.size();
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (clusters[i] >= kClusterCount) throw ValidationError("match_classes: cluster id out of range");
    ++r.contingency[class_code(classes[i])][clusters[i]];
  }
  std::array<std::size_t, kClusterCount> perm;
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  bool first = true;
  do {  // lexicographic order, so the first best permutation wins ties
    std::size_t s = 0;
    for (int c = 0; c < kClassCount; ++c) s += r.contingency[c][perm[c]];
    if (first || s > r.covered) {
      r.covered = s;
      r.cluster_of = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return r;
}

// ---------------------------------------------------------------- embedding

struct EmbeddingPoint {
  std::string id;
  double pd1 = 0.0, pd2 = 0.0;
  std::optional<ClassLabel> label;
  std::optional<std::size_t> cluster;

  Vec2 xy() const { return {pd1, pd2}; }
};

inline std::string embedding_csv(const std::vector<EmbeddingPoint>& pts) {
  std::string out = "id,pd1,pd2,class,cluster\n";
  for (const auto& p : pts) {
    if (!std::isfinite(p.pd1) || !std::isfinite(p.pd2)) throw ValidationError("embedding: non-finite point " + p.id);
    if (p.id.find_first_of(",\n") != std::string::npos) throw ValidationError("embedding: id contains a separator");
    out += p.id + ',' + format_double(p.pd1) + ',' + format_double(p.pd2) + ',' +
           (p.label ? std::string(class_name(*p.label)) : std::string()) + ',' +
           (p.cluster ? std::to_string(*p.cluster) : std::string()) + '\n';
  }
  return out;
}

inline std::vector<EmbeddingPoint> parse_embedding_csv(std::string_view text, const std::string& source) {
  std::vector<EmbeddingPoint> pts;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (ln == 1) {
      if (line != "id,pd1,pd2,class,cluster") throw IoError(source, "unexpected embedding header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    const std::string ctx = source + ":" + std::to_string(ln);
    if (f.size() != 5) throw IoError(ctx, "expected 5 fields");
    EmbeddingPoint p;
    p.id = f[0];
    p.pd1 = detail::parse_double(f[1], ctx);
    p.pd2 = detail::parse_double(f[2], ctx);
    if (!f[3].empty()) p.label = parse_class(f[3]);
    if (!f[4].empty()) {
      const auto c = detail::parse_int(f[4], ctx);
      if (c < 0) throw IoError(ctx, "negative cluster id");
      p.cluster = static_cast<std::size_t>(c);
    }
    pts.push_back(std::move(p));
  }
  if (ln == 0) throw IoError(source, "empty embedding file");
  return pts;
}

// ---------------------------------------------------------------- morphing

struct MorphState {
  Vec2 embedding;
  Eigen::VectorXd latent;
  Matrix cloud;  // decoder output, one row per point
};

using MorphTrajectory = std::vector<MorphState>;

inline constexpr std::size_t kMorphSteps = 20;

// Evenly spaced embeddings from start to target inclusive; the last state
// is the target itself.
inline std::vector<Vec2> morph_path(const Vec2& start, const Vec2& target, std::size_t steps) {
  if (steps < 1) throw ValidationError("morph: steps must be >= 1");
  if (!start.allFinite() || !target.allFinite()) throw ValidationError("morph: non-finite endpoint");
  std::vector<Vec2> e(steps + 1);
  const Vec2 delta = target - start;
  for (std::size_t i = 0; i <= steps; ++i) {
    e[i] = start + (static_cast<double>(i) / static_cast<double>(steps)) * delta;
  }
  e.front() = start;
  e.back() = target;
  return e;
}

inline MorphTrajectory morph(const PcaModel& pca, const EnsembleNet& net, const Vec2& start, const Vec2& target,
                             std::size_t steps = kMorphSteps) {
  if (pca.dim() != net.latent_dim()) throw ValidationError("morph: PCA and model latent sizes differ");
  MorphTrajectory t;
  for (const auto& e : morph_path(start, target, steps)) {
    MorphState s;
    s.embedding = e;
    s.latent = pca_inverse(pca, e);
    s.cloud = net.decode(LatentCode(s.latent.transpose()));
    t.push_back(std::move(s));
  }
  return t;
}

// Decoder output for `latent` as a labeled cloud, coloured by the nearest
// layer exemplar.
inline PointCloud labeled_decoding(const LayerExemplars& ex, const Eigen::VectorXd& latent, const Matrix& xyz) {
  const auto& labels = ex.labels_for(LatentCode(latent.transpose()));
  if (labels.size() != static_cast<std::size_t>(xyz.rows())) {
    throw ValidationError("layer exemplars label " + std::to_string(labels.size()) + " points, decoder output has " +
                          std::to_string(xyz.rows()));
  }
  PointCloud c;
  c.points.reserve(labels.size());
  for (Eigen::Index i = 0; i < xyz.rows(); ++i) {
    c.points.push_back({xyz(i, 0), xyz(i, 1), xyz(i, 2), labels[static_cast<std::size_t>(i)]});
  }
  return c;
}

// ---------------------------------------------------------------- splines

inline constexpr std::size_t kCurveSamples = 256;
// Half-width (normalized units) of the slab taken around the central row of
// a decoded cloud; decoded points do not sit on scan rows.
inline constexpr double kDefaultSliceTolerance = 0.05;

struct BoundaryCurve {
  LayerLabel layer = LayerLabel::RNFL;
  BoundarySide side = BoundarySide::Anterior;
  std::vector<double> x, z;  // kCurveSamples evenly spaced samples
};

// Natural cubic smoothing spline through (x, y) with weights w, minimizing
//   sum w_i (y_i - f(x_i))^2 + lambda * integral f''^2.
// x must be strictly increasing with at least 3 entries. Returns fitted
// values g and second derivatives gamma at the knots (Reinsch form).
struct SmoothingSpline {
  std::vector<double> x, g, gamma;

  double operator()(double t) const {
    const std::size_t n = x.size();
    std::size_t i = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), t) - x.begin());
    i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
    const double h = x[i + 1] - x[i];
    const double a = t - x[i], b = x[i + 1] - t;
    return (a * g[i + 1] + b * g[i]) / h -
           a * b / 6.0 * ((1.0 + a / h) * gamma[i + 1] + (1.0 + b / h) * gamma[i]);
  }
};

inline SmoothingSpline fit_smoothing_spline(std::vector<double> x, std::vector<double> y, std::vector<double> w,
                                            double lambda) {
  const std::size_t n = x.size();
  if (n < 3 || y.size() != n || w.size() != n) throw ValidationError("spline: need >= 3 matching knots");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw ValidationError("spline: smoothing must be finite and >= 0");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(x[i + 1] > x[i])) throw ValidationError("spline: knots must be strictly increasing");
  const std::size_t m = n - 2;
  std::vector<double> h(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) h[i] = x[i + 1] - x[i];

  // Q is n x (n-2) with three nonzeros per column; R is (n-2) tridiagonal.
  using Sp = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> qt, rt;
  for (std::size_t j = 0; j < m; ++j) {
    const auto c = static_cast<int>(j);
    qt.emplace_back(static_cast<int>(j), c, 1.0 / h[j]);
    qt.emplace_back(static_cast<int>(j + 1), c, -1.0 / h[j] - 1.0 / h[j + 1]);
    qt.emplace_back(static_cast<int>(j + 2), c, 1.0 / h[j + 1]);
    rt.emplace_back(c, c, (h[j] + h[j + 1]) / 3.0);
    if (j + 1 < m) {
      rt.emplace_back(c, c + 1, h[j + 1] / 6.0);
      rt.emplace_back(c + 1, c, h[j + 1] / 6.0);
    }
  }
  Sp q(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)), r(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  q.setFromTriplets(qt.begin(), qt.end());
  r.setFromTriplets(rt.begin(), rt.end());
  Eigen::VectorXd winv(static_cast<Eigen::Index>(n)), yv(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!(w[i] > 0)) throw ValidationError("spline: weights must be positive");
    winv[static_cast<Eigen::Index>(i)] = 1.0 / w[i];
    yv[static_cast<Eigen::Index>(i)] = y[i];
  }
  const Sp a = r + lambda * Sp(q.transpose() * winv.asDiagonal() * q);
  Eigen::SimplicialLDLT<Sp> solver(a);
  if (solver.info() != Eigen::Success) throw ValidationError("spline: system is singular");
  const Eigen::VectorXd gam = solver.solve(Eigen::VectorXd(q.transpose() * yv));
  const Eigen::VectorXd gv = yv - lambda * winv.cwiseProduct(q * gam);

  SmoothingSpline s;
  s.x = std::move(x);
  s.g.assign(gv.data(), gv.data() + n);
  s.gamma.assign(n, 0.0);
  for (std::size_t j = 0; j < m; ++j) s.gamma[j + 1] = gam[static_cast<Eigen::Index>(j)];
  return s;
}

// Fits one curve per (layer, side) group. Points sharing an x are merged
// into their mean with a proportional weight; groups with fewer than four
// distinct x are skipped with a warning.
inline std::vector<BoundaryCurve> fit_boundary_splines(const SliceTable& slice, double smoothing) {
  if (!(smoothing >= 0) || !std::isfinite(smoothing)) throw ValidationError("splines: smoothing must be finite and >= 0");
  std::vector<BoundaryCurve> out;
  for (const auto& [key, pts] : slice) {
    std::map<double, std::pair<double, std::size_t>> by_x;
    for (const auto& p : pts) {
      auto& e = by_x[p.x];
      e.first += p.z;
      ++e.second;
    }
    if (by_x.size() < 4) {
      log::warn("splines: skipping " + std::string(layer_name(key.first)) +
                (key.second == BoundarySide::Anterior ? " anterior" : " posterior") + " boundary with " +
                std::to_string(by_x.size()) + " distinct x value(s)");
      continue;
    }
    std::vector<double> x, y, w;
    for (const auto& [xv, e] : by_x) {
      x.push_back(xv);
      y.push_back(e.first / static_cast<double>(e.second));
      w.push_back(static_cast<double>(e.second));
    }
    const auto s = fit_smoothing_spline(x, y, w, smoothing);
    BoundaryCurve c{key.first, key.second, {}, {}};
    const double lo = x.front(), hi = x.back();
    for (std::size_t i = 0; i < kCurveSamples; ++i) {
      const double t = i + 1 == kCurveSamples ? hi : lo + (hi - lo) * static_cast<double>(i) / (kCurveSamples - 1);
      c.x.push_back(t);
      c.z.push_back(s(t));
    }
    out.push_back(std::move(c));
  }
  return out;
}

// Depth of the deepest point of a curve below the chord joining its ends
// (z grows posteriorly, so a cup is a positive excursion).
inline double cup_depth(const BoundaryCurve& c) {
  if (c.x.size() < 2) throw ValidationError("cup_depth: curve has fewer than 2 samples");
  const double x0 = c.x.front(), x1 = c.x.back(), z0 = c.z.front(), z1 = c.z.back();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c.x.size(); ++i) {
    const double chord = x1 > x0 ? z0 + (z1 - z0) * (c.x[i] - x0) / (x1 - x0) : z0;
    best = std::max(best, c.z[i] - chord);
  }
  return best;
}

inline std::string curves_csv(const std::vector<BoundaryCurve>& curves) {
  std::string out = "layer,side,x,z\n";
  for (const auto& c : curves) {
    const std::string prefix = std::string(layer_name(c.layer)) + ',' +
                               (c.side == BoundarySide::Anterior ? "anterior" : "posterior") + ',';
    for (std::size_t i = 0; i < c.x.size(); ++i) out += prefix + format_double(c.x[i]) + ',' + format_double(c.z[i]) + '\n';
  }
  return out;
}

inline constexpr std::array<std::string_view, kLayerCount> kLayerColors = {
    "#d62728", "#ff7f0e", "#2ca02c", "#8c564b", "#9467bd", "#e377c2", "#1f77b4", "#17becf"};

// B-scan style drawing: x to the right, depth downwards. The viewport is
// fixed so that stages of one morph line up.
struct SvgFrame {
  double x_min = -1.0, x_max = 1.0, z_min = -0.6, z_max = 0.6;
  int width = 800, height = 480;
};

inline std::string curves_svg(const std::vector<BoundaryCurve>& curves, const SvgFrame& f = {},
                              const std::string& title = "") {
  auto px = [&](double x) { return (x - f.x_min) / (f.x_max - f.x_min) * f.width; };
  auto pz = [&](double z) { return (z - f.z_min) / (f.z_max - f.z_min) * f.height; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(f.width) + "\" height=\"" +
                  std::to_string(f.height) + "\" viewBox=\"0 0 " + std::to_string(f.width) + ' ' +
                  std::to_string(f.height) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"black\"/>\n";
  if (!title.empty()) s += "<title>" + title + "</title>\n";
  for (const auto& c : curves) {
    s += "<path data-layer=\"" + std::string(layer_name(c.layer)) + "\" data-side=\"" +
         (c.side == BoundarySide::Anterior ? "anterior" : "posterior") + "\" fill=\"none\" stroke=\"" +
         std::string(kLayerColors[layer_code(c.layer)]) + "\" stroke-width=\"2\"" +
         (c.side == BoundarySide::Posterior ? " stroke-dasharray=\"6 3\"" : "") + " d=\"";
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      s += (i == 0 ? "M" : " L") + num(px(c.x[i])) + ',' + num(pz(c.z[i]));
    }
    s += "\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

inline constexpr std::array<std::size_t, 5> kDefaultRenderStages = {0, 5, 10, 15, 20};

struct RenderedStage {
  std::size_t stage = 0;
  std::vector<BoundaryCurve> curves;
  std::string csv_path, svg_path;
};

// Central-slice curves of the chosen morph stages, written as
// stage_NN.csv / stage_NN.svg under out_dir.
inline std::vector<RenderedStage> render_morph(const MorphTrajectory& t, const LayerExemplars& ex,
                                               const std::filesystem::path& out_dir, double smoothing,
                                               double slice_tol = kDefaultSliceTolerance,
                                               std::vector<std::size_t> stages = {kDefaultRenderStages.begin(),
                                                                                  kDefaultRenderStages.end()}) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string(), "cannot create directory: " + ec.message());
  std::vector<RenderedStage> out;
  for (auto st : stages) {
    if (st >= t.size()) {
      throw ValidationError("render_morph: stage " + std::to_string(st) + " beyond trajectory of " +
                            std::to_string(t.size()) + " states");
    }
    const auto cloud = labeled_decoding(ex, t[st].latent, t[st].cloud);
    RenderedStage r;
    r.stage = st;
    r.curves = fit_boundary_splines(central_slice(cloud, 0.0, slice_tol), smoothing);
    char name[32];
    std::snprintf(name, sizeof name, "stage_%02zu", st);
    r.csv_path = (out_dir / (std::string(name) + ".csv")).string();
    r.svg_path = (out_dir / (std::string(name) + ".svg")).string();
    write_text_file(r.csv_path, curves_csv(r.curves));
    write_text_file(r.svg_path, curves_svg(r.curves, {}, name));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace onh
