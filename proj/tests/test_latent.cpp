#include <gtest/gtest.h>

#include <cmath>
#include <regex>
#include <set>

#include "fixtures.hpp"
#include "gen.hpp"
#include "oracles.hpp"
#include "onh/latent.hpp"

using namespace onh;

namespace {

using oracle::covariance;
using oracle::jacobi_eigen;
using oracle::subspace_angle;

// Anisotropic Gaussian latents with well separated leading variances.
std::vector<Eigen::VectorXd> random_latents(gen::Rng& r, std::size_t n, Eigen::Index k) {
  Eigen::MatrixXd rot = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < rot.size(); ++i) rot.data()[i] = r.normal(1);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(rot).householderQ();
  Eigen::VectorXd scale(k);
  for (Eigen::Index i = 0; i < k; ++i) scale[i] = 3.0 / static_cast<double>(i + 1);
  Eigen::VectorXd shift(k);
  for (Eigen::Index i = 0; i < k; ++i) shift[i] = r.normal(2);
  std::vector<Eigen::VectorXd> out;
  for (std::size_t j = 0; j < n; ++j) {
    Eigen::VectorXd z(k);
    for (Eigen::Index i = 0; i < k; ++i) z[i] = r.normal(scale[i]);
    out.push_back(shift + q * z);
  }
  return out;
}

std::vector<Vec2> blobs(gen::Rng& r, const std::vector<Vec2>& centres, std::size_t per, double sd,
                        std::vector<std::size_t>* truth = nullptr) {
  std::vector<Vec2> pts;
  for (std::size_t c = 0; c < centres.size(); ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      pts.push_back(centres[c] + Vec2(r.normal(sd), r.normal(sd)));
      if (truth) truth->push_back(c);
    }
  }
  return pts;
}

double objective(const std::vector<Vec2>& pts, const ClusterModel& m) {
  double s = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) s += (pts[i] - m.centroids[m.assignments[i]]).squaredNorm();
  return s;
}

BoundaryCurve sampled_curve(double (*f)(double)) {
  BoundaryCurve c;
  for (std::size_t i = 0; i < kCurveSamples; ++i) {
    const double x = -1 + 2 * static_cast<double>(i) / (kCurveSamples - 1);
    c.x.push_back(x);
    c.z.push_back(f(x));
  }
  return c;
}

}  // namespace

// --- PCA -----------------------------------------------------------------------

TEST(Pca, MatchesJacobiOracle) {
  gen::Rng r(1);
  for (Eigen::Index k : {2, 5, 16, 64}) {
    for (int trial = 0; trial < 3; ++trial) {
      const auto z = random_latents(r, 120, k);
      const auto m = pca_fit(z);
      const auto [vals, vecs] = jacobi_eigen(covariance(z));
      Eigen::MatrixXd ours(k, 2);
      ours << m.components[0], m.components[1];
      EXPECT_LT(subspace_angle(ours, vecs.leftCols(2)), 1e-6) << "k " << k;
      EXPECT_NEAR(m.explained[0], vals[0], 1e-9 * vals[0]);
      EXPECT_NEAR(m.explained[1], vals[1], 1e-9 * vals[0]);
      // Same directions individually, up to sign.
      for (int c = 0; c < 2; ++c) EXPECT_NEAR(std::abs(ours.col(c).dot(vecs.col(c))), 1.0, 1e-9);
    }
  }
}

TEST(Pca, ComponentsOrthonormalWithSignConvention) {
  gen::Rng r(2);
  const auto m = pca_fit(random_latents(r, 50, 12));
  EXPECT_NEAR(m.components[0].norm(), 1, 1e-12);
  EXPECT_NEAR(m.components[1].norm(), 1, 1e-12);
  EXPECT_NEAR(m.components[0].dot(m.components[1]), 0, 1e-12);
  for (const auto& v : m.components) {
    Eigen::Index i;
    v.cwiseAbs().maxCoeff(&i);
    EXPECT_GT(v[i], 0);
  }
  EXPECT_GE(m.explained[0], m.explained[1]);
}

TEST(Pca, ProjectionIsIdempotent) {
  gen::Rng r(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = random_latents(r, 40, 32);
    const auto m = pca_fit(z);
    for (const auto& v : z) {
      const Vec2 p = pca_forward(m, v);
      const Eigen::VectorXd back = pca_inverse(m, p);
      EXPECT_LT((pca_forward(m, back) - p).norm(), 1e-10);
      EXPECT_LT((pca_inverse(m, pca_forward(m, back)) - back).norm(), 1e-10);
    }
  }
}

TEST(Pca, MeanMapsToOrigin) {
  gen::Rng r(4);
  const auto z = random_latents(r, 30, 8);
  const auto m = pca_fit(z);
  EXPECT_LT(pca_forward(m, m.mean).norm(), 1e-14);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(8);
  for (const auto& v : z) sum += v;
  EXPECT_LT((sum / 30.0 - m.mean).norm(), 1e-12);
}

TEST(Pca, CollinearLatentsAreRejectedButNearLineIsAccepted) {
  std::vector<Eigen::VectorXd> line;
  Eigen::VectorXd dir(6), base(6);
  dir << 1, 2, 0, -1, 0.5, 3;
  base << 0.3, 0, 1, 2, -1, 0;
  for (int i = 0; i < 10; ++i) line.push_back(base + (i - 4.5) * dir);
  EXPECT_THROW(pca_fit(line), ValidationError);

  auto near = line;
  near[3][2] += 1e-3;
  const auto m = pca_fit(near);
  EXPECT_NEAR(std::abs(m.components[0].dot(dir.normalized())), 1.0, 1e-6);

  EXPECT_THROW(pca_fit({base, base + dir}), ValidationError);
  EXPECT_THROW(pca_fit({base, base, Eigen::VectorXd::Zero(3)}), ValidationError);
}

TEST(Pca, ErrorsAndJsonRoundTrip) {
  gen::Rng r(5);
  const auto m = pca_fit(random_latents(r, 20, 4));
  EXPECT_THROW(pca_forward(m, Eigen::VectorXd::Zero(5)), ValidationError);
  EXPECT_THROW(pca_inverse(m, Vec2(NAN, 0)), ValidationError);
  const auto back = pca_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.mean, m.mean);
  EXPECT_EQ(back.components[0], m.components[0]);
  EXPECT_EQ(back.components[1], m.components[1]);
}

// --- k-means -------------------------------------------------------------------

TEST(Kmeans, RecoversSeparatedBlobs) {
  gen::Rng r(6);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> truth;
    const auto pts = blobs(r, {{0, 0}, {10, 0}, {0, 10}, {10, 10}}, 25, 0.8, &truth);
    const auto m = kmeans_fit(pts, 4, r.eng());
    std::vector<ClassLabel> classes;
    for (auto t : truth) classes.push_back(class_from_code(static_cast<int>(t)));
    EXPECT_EQ(match_classes(classes, m.assignments).covered, pts.size());
  }
}

TEST(Kmeans, NearestCentroidAndNonincreasingObjective) {
  gen::Rng r(7);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<std::size_t>(r.integer(8, 120));
    std::vector<Vec2> pts;
    for (std::size_t i = 0; i < n; ++i) pts.emplace_back(r.normal(1), r.normal(1) * r.uniform(0.1, 3));
    const auto k = static_cast<std::size_t>(r.integer(1, 6));
    const auto m = kmeans_fit(pts, k, r.eng());
    ASSERT_EQ(m.centroids.size(), k);
    ASSERT_EQ(m.assignments.size(), n);
    for (std::size_t i = 0; i < n; ++i) {
      const double own = (pts[i] - m.centroids[m.assignments[i]]).squaredNorm();
      for (const auto& c : m.centroids) EXPECT_LE(own, (pts[i] - c).squaredNorm());
    }
    for (std::size_t s = 1; s < m.objective.size(); ++s) EXPECT_LE(m.objective[s], m.objective[s - 1] * (1 + 1e-12));
    EXPECT_NEAR(m.objective.back(), objective(pts, m), 1e-9 * (1 + m.objective.back()));
  }
}

TEST(Kmeans, SingleClusterIsTheMean) {
  gen::Rng r(8);
  const auto pts = blobs(r, {{1, 2}}, 30, 1.0);
  const auto m = kmeans_fit(pts, 1, 3);
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  EXPECT_LT((m.centroids[0] - mean / 30.0).norm(), 1e-12);
}

TEST(Kmeans, DeterministicAndRejectsTooFewDistinctPoints) {
  gen::Rng r(9);
  const auto pts = blobs(r, {{0, 0}, {3, 1}}, 20, 1.0);
  const auto a = kmeans_fit(pts, 4, 11), b = kmeans_fit(pts, 4, 11);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_THROW(kmeans_fit({{0, 0}, {0, 0}, {1, 1}, {1, 1}}, 3, 1), ValidationError);
  EXPECT_THROW(kmeans_fit(pts, 0, 1), ValidationError);
  EXPECT_THROW(kmeans_fit({{0, 0}, {NAN, 1}, {1, 1}}, 2, 1), ValidationError);
  const auto back = clusters_from_json(nlohmann::json::parse(to_json(a).dump()));
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(back.assign(pts[i]), a.assign(pts[i]));
}

TEST(MatchClasses, BestPermutation) {
  // 10 H in cluster 2, 8 HM split 6/2 over clusters 0/2, 5 G in 1, 7 HMG in 3 and 0.
  std::vector<ClassLabel> cls;
  std::vector<std::size_t> clu;
  auto add = [&](ClassLabel c, std::size_t k, int n) {
    for (int i = 0; i < n; ++i) {
      cls.push_back(c);
      clu.push_back(k);
    }
  };
  add(ClassLabel::H, 2, 10);
  add(ClassLabel::HM, 0, 6);
  add(ClassLabel::HM, 2, 2);
  add(ClassLabel::G, 1, 5);
  add(ClassLabel::HMG, 3, 4);
  add(ClassLabel::HMG, 0, 3);
  const auto m = match_classes(cls, clu);
  EXPECT_EQ(m.covered, 25u);
  EXPECT_EQ(m.total, 30u);
  EXPECT_EQ(m.cluster_of, (std::array<std::size_t, 4>{2, 0, 1, 3}));
  EXPECT_EQ(m.contingency[1][2], 2u);
  EXPECT_THROW(match_classes(cls, {1, 2}), ValidationError);
  EXPECT_THROW(match_classes({ClassLabel::H}, {4}), ValidationError);
}

// --- embedding file ----------------------------------------------------------------

TEST(EmbeddingCsv, RoundTripWithOptionalFields) {
  std::vector<EmbeddingPoint> pts{{"a", 0.1, -2.5, ClassLabel::HMG, 3},
                                  {"b", 1e-17, 3.0, std::nullopt, std::nullopt},
                                  {"c", -0.3333333333333333, 7.25, ClassLabel::H, std::nullopt}};
  const auto text = embedding_csv(pts);
  const auto back = parse_embedding_csv(text, "mem");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].id, pts[i].id);
    EXPECT_EQ(back[i].pd1, pts[i].pd1);
    EXPECT_EQ(back[i].pd2, pts[i].pd2);
    EXPECT_EQ(back[i].label, pts[i].label);
    EXPECT_EQ(back[i].cluster, pts[i].cluster);
  }
  EXPECT_EQ(embedding_csv(back), text);
}

TEST(EmbeddingCsv, Rejections) {
  EXPECT_THROW(parse_embedding_csv("", "e"), IoError);
  EXPECT_THROW(parse_embedding_csv("id,x,y\n", "e"), IoError);
  EXPECT_THROW(parse_embedding_csv("id,pd1,pd2,class,cluster\na,1,2,H\n", "e"), IoError);
  EXPECT_THROW(parse_embedding_csv("id,pd1,pd2,class,cluster\na,1,zz,H,0\n", "e"), Error);
  EXPECT_THROW(parse_embedding_csv("id,pd1,pd2,class,cluster\na,1,2,H,-1\n", "e"), IoError);
  EXPECT_THROW(embedding_csv({{"a,b", 0, 0, std::nullopt, std::nullopt}}), ValidationError);
  EXPECT_THROW(embedding_csv({{"a", INFINITY, 0, std::nullopt, std::nullopt}}), ValidationError);
}

// --- morphing ------------------------------------------------------------------

TEST(Morph, PathIsEvenlySpacedWithExactEndpoints) {
  gen::Rng r(10);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec2 a(r.normal(3), r.normal(3)), b(r.normal(3), r.normal(3));
    const auto p = morph_path(a, b, kMorphSteps);
    ASSERT_EQ(p.size(), 21u);
    EXPECT_EQ(p.front(), a);
    EXPECT_EQ(p.back(), b);
    const Vec2 step = (b - a) / 20.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) EXPECT_LT((p[i + 1] - p[i] - step).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(morph_path({0, 0}, {1, 1}, 0), ValidationError);
  EXPECT_THROW(morph_path({0, NAN}, {1, 1}, 4), ValidationError);
}

TEST(Morph, StatesDecodeTheirLatents) {
  const auto cfg = fixtures::small_config();
  EnsembleNet net(cfg, 12);
  gen::Rng r(12);
  const auto pca = pca_fit(random_latents(r, 20, static_cast<Eigen::Index>(cfg.encoder.latent_dim)));
  const Vec2 a(-1, 0.5), b(2, -0.25);
  const auto t = morph(pca, net, a, b);
  ASSERT_EQ(t.size(), kMorphSteps + 1);
  const Matrix first = net.decode(LatentCode(pca_inverse(pca, a).transpose()));
  ASSERT_EQ(first.rows(), t[0].cloud.rows());
  EXPECT_EQ(std::memcmp(first.data(), t[0].cloud.data(), sizeof(double) * static_cast<std::size_t>(first.size())), 0);
  for (const auto& s : t) EXPECT_LT((pca_forward(pca, s.latent) - s.embedding).norm(), 1e-10);
  const auto other = pca_fit(random_latents(r, 20, 7));
  EXPECT_THROW(morph(other, net, a, b), ValidationError);
}

// --- splines -------------------------------------------------------------------

TEST(Spline, InterpolatesWithoutSmoothing) {
  gen::Rng r(13);
  std::vector<double> x, y, w;
  double t = 0;
  for (int i = 0; i < 30; ++i) {
    t += r.uniform(0.05, 0.3);
    x.push_back(t);
    y.push_back(std::sin(3 * t) + r.normal(0.1));
    w.push_back(r.uniform(0.5, 2));
  }
  const auto s = fit_smoothing_spline(x, y, w, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(s.g[i], y[i], 1e-10);
    EXPECT_NEAR(s(x[i]), y[i], 1e-10);
  }
  EXPECT_EQ(s.gamma.front(), 0.0);
  EXPECT_EQ(s.gamma.back(), 0.0);
}

TEST(Spline, LinesAreFixedForAnySmoothing) {
  std::vector<double> x{0, 0.5, 1.25, 2, 3.5, 4}, y, w(6, 1.0);
  for (double v : x) y.push_back(2 - 0.75 * v);
  for (double lambda : {0.0, 0.1, 10.0, 1e6}) {
    const auto s = fit_smoothing_spline(x, y, w, lambda);
    for (double t = 0; t <= 4; t += 0.125) EXPECT_NEAR(s(t), 2 - 0.75 * t, 1e-9) << lambda;
  }
}

TEST(Spline, ParabolaAndLargeSmoothingLimit) {
  std::vector<double> x, y, w;
  for (int i = 0; i <= 40; ++i) {
    x.push_back(-1 + i * 0.05);
    y.push_back(x.back() * x.back());
    w.push_back(1 + (i % 3));
  }
  const auto exact = fit_smoothing_spline(x, y, w, 0.0);
  for (double t = -0.95; t < 0.95; t += 0.01) EXPECT_NEAR(exact(t), t * t, 2e-4);

  // As the penalty grows the fit tends to the weighted least-squares line.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
    sxx += w[i] * x[i] * x[i];
    sxy += w[i] * x[i] * y[i];
  }
  const double slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx), icpt = (sy - slope * sx) / sw;
  const auto flat = fit_smoothing_spline(x, y, w, 1e10);
  for (double t : {-1.0, -0.3, 0.0, 0.6, 1.0}) EXPECT_NEAR(flat(t), icpt + slope * t, 1e-6);
}

TEST(Spline, Rejections) {
  EXPECT_THROW(fit_smoothing_spline({0, 1}, {0, 1}, {1, 1}, 0), ValidationError);
  EXPECT_THROW(fit_smoothing_spline({0, 1, 1}, {0, 1, 2}, {1, 1, 1}, 0), ValidationError);
  EXPECT_THROW(fit_smoothing_spline({0, 1, 2}, {0, 1, 2}, {1, 1, 1}, -1), ValidationError);
  EXPECT_THROW(fit_smoothing_spline({0, 1, 2}, {0, 1, 2}, {1, 0, 1}, 0), ValidationError);
  EXPECT_THROW(fit_smoothing_spline({0, 1, 2}, {0, 1}, {1, 1, 1}, 0), ValidationError);
}

TEST(BoundarySplines, SampledCurvesAndSkippedGroups) {
  SliceTable t;
  for (int i = 0; i < 20; ++i) {
    const double x = -0.9 + i * 0.09;
    t[{LayerLabel::RNFL, BoundarySide::Anterior}].push_back({x, 0, 0.2 * x * x, LayerLabel::RNFL});
    t[{LayerLabel::RNFL, BoundarySide::Anterior}].push_back({x, 0, 0.2 * x * x + 0.01, LayerLabel::RNFL});
  }
  for (int i = 0; i < 3; ++i) t[{LayerLabel::LC, BoundarySide::Posterior}].push_back({i * 0.1, 0, 0.4, LayerLabel::LC});
  const auto curves = fit_boundary_splines(t, 0.0);
  ASSERT_EQ(curves.size(), 1u);
  const auto& c = curves[0];
  EXPECT_EQ(c.layer, LayerLabel::RNFL);
  ASSERT_EQ(c.x.size(), kCurveSamples);
  EXPECT_EQ(c.x.front(), -0.9);
  EXPECT_EQ(c.x.back(), -0.9 + 19 * 0.09);
  for (std::size_t i = 0; i < c.x.size(); ++i) EXPECT_NEAR(c.z[i], 0.2 * c.x[i] * c.x[i] + 0.005, 1e-3);
  EXPECT_THROW(fit_boundary_splines(t, -1), ValidationError);
}

TEST(CupDepth, ExcursionBelowChord) {
  EXPECT_NEAR(cup_depth(sampled_curve([](double x) { return 1 - x * x; })), 1.0, 1e-4);
  EXPECT_NEAR(cup_depth(sampled_curve([](double x) { return 0.3 * x + 2; })), 0.0, 1e-12);
  EXPECT_NEAR(cup_depth(sampled_curve([](double x) { return 0.5 * x * x; })), 0.0, 1e-12);
  const double shallow = cup_depth(sampled_curve([](double x) { return 0.2 * std::exp(-8 * x * x); }));
  const double deep = cup_depth(sampled_curve([](double x) { return 0.4 * std::exp(-8 * x * x); }));
  EXPECT_GT(deep, shallow);
  EXPECT_THROW(cup_depth(BoundaryCurve{}), ValidationError);
}

// --- rendering -----------------------------------------------------------------

TEST(Svg, OnePathPerCurveWithAllSamples) {
  auto a = sampled_curve([](double x) { return 0.1 * x; });
  auto b = sampled_curve([](double x) { return 0.2 - 0.1 * x * x; });
  b.layer = LayerLabel::LC;
  b.side = BoundarySide::Posterior;
  const auto svg = curves_svg({a, b}, {}, "stage_00");
  std::regex path("<path [^>]*d=\"([^\"]*)\"");
  std::size_t paths = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), path); it != std::sregex_iterator(); ++it, ++paths) {
    const std::string d = (*it)[1];
    EXPECT_EQ(std::count(d.begin(), d.end(), 'M') + std::count(d.begin(), d.end(), 'L'),
              static_cast<long>(kCurveSamples));
  }
  EXPECT_EQ(paths, 2u);
  EXPECT_NE(svg.find("data-layer=\"lc\""), std::string::npos);
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
}

TEST(RenderMorph, WritesFiveStages) {
  const auto cfg = fixtures::small_config();
  EnsembleNet net(cfg, 14);
  gen::Rng r(14);
  const auto pca = pca_fit(random_latents(r, 20, static_cast<Eigen::Index>(cfg.encoder.latent_dim)));
  const auto t = morph(pca, net, {-1, 0}, {1, 0});
  PointCloud rnfl = gen::cloud(r, cfg.encoder.input_points);
  for (auto& p : rnfl.points) p.layer = LayerLabel::RNFL;
  const auto ex = calibrate_layer_exemplars(net, {rnfl});
  gen::TempDir dir("render");
  // Untrained output is scattered, so take every point in the slice.
  const auto stages = render_morph(t, ex, dir.path, 0.1, 10.0);
  ASSERT_EQ(stages.size(), kDefaultRenderStages.size());
  for (std::size_t i = 0; i < stages.size(); ++i) {
    EXPECT_EQ(stages[i].stage, kDefaultRenderStages[i]);
    EXPECT_TRUE(std::filesystem::exists(stages[i].svg_path));
    EXPECT_EQ(gen::slurp(stages[i].csv_path), curves_csv(stages[i].curves));
    for (const auto& c : stages[i].curves) EXPECT_EQ(c.layer, LayerLabel::RNFL);
  }
  EXPECT_TRUE(std::filesystem::exists(dir.path / "stage_20.svg"));
  EXPECT_THROW(render_morph(t, ex, dir.path, 0.1, 10.0, {21}), ValidationError);
}

TEST(LabeledDecoding, TakesTheNearestExemplarsLabels) {
  const auto cfg = fixtures::small_config();
  EnsembleNet net(cfg, 15);
  gen::Rng r(15);
  PointCloud a = gen::cloud(r, cfg.encoder.input_points), b = gen::cloud(r, cfg.encoder.input_points);
  for (auto& p : a.points) p.layer = LayerLabel::RNFL;
  for (auto& p : b.points) p.layer = LayerLabel::LC;
  const auto ex = calibrate_layer_exemplars(net, {a, b});
  for (Eigen::Index e = 0; e < 2; ++e) {
    const Eigen::VectorXd z = ex.latents.row(e).transpose();
    const Matrix xyz = net.decode(LatentCode(z.transpose()));
    const auto c = labeled_decoding(ex, z, xyz);
    ASSERT_EQ(c.size(), static_cast<std::size_t>(xyz.rows()));
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_EQ(c.points[i].layer, e == 0 ? LayerLabel::RNFL : LayerLabel::LC);
      EXPECT_EQ(c.points[i].x, xyz(static_cast<Eigen::Index>(i), 0));
    }
  }
  const Eigen::VectorXd z0 = ex.latents.row(0).transpose();
  EXPECT_THROW(labeled_decoding(ex, z0, Matrix::Zero(3, 3)), ValidationError);
  EXPECT_THROW(labeled_decoding(ex, Eigen::VectorXd::Zero(3), Matrix::Zero(3, 3)), ValidationError);
}
