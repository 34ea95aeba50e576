#pragma once

// Ensemble autoencoder: a set-invariant point encoder, a decoder made of
// independent patch submodels, and a dense classifier sharing the latent
// code. Also defines the two training losses.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "onh/diff.hpp"
#include "onh/error.hpp"
#include "onh/kdtree.hpp"
#include "onh/pointcloud.hpp"

namespace onh {

using diff::BasicGraph;
using diff::Graph;
using diff::MatrixT;
using diff::Matrix;
using diff::Var;
using LatentCode = Eigen::RowVectorXd;

inline constexpr std::array<std::size_t, 4> kLatentSweep = {128, 256, 512, 1024};

struct EncoderConfig {
  std::size_t latent_dim = 512;
  std::size_t input_points = kModelPoints;
  std::vector<std::size_t> widths = {64, 64, 128, 256};
  bool feature_transform = true;
  // The feature transform acts on the output of this many shared layers.
  std::size_t transform_after = 2;
  std::vector<std::size_t> tnet_widths = {64, 128};
};

struct DecoderConfig {
  std::size_t n_patches = 32;
  std::size_t points_per_patch = 128;
  std::size_t grid_rows = 8;
  std::size_t grid_cols = 16;
  std::vector<std::size_t> widths = {128, 64};

  std::size_t output_points() const { return n_patches * points_per_patch; }
};

struct ClassifierConfig {
  std::vector<std::size_t> widths = {64, static_cast<std::size_t>(kClassCount)};
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  ClassifierConfig classifier;
  // Weight of the ||I - T T^T||^2 feature-transform penalty (0 = off).
  double feature_transform_reg = 0.0;

  void validate() const {
    const auto& e = encoder;
    if (e.latent_dim < 1) throw ValidationError("model: latent_dim must be >= 1");
    if (e.input_points < 1) throw ValidationError("model: input_points must be >= 1");
    if (e.widths.empty()) throw ValidationError("model: encoder widths must be nonempty");
    if (e.feature_transform && (e.transform_after < 1 || e.transform_after > e.widths.size())) {
      throw ValidationError("model: transform_after must index an encoder layer");
    }
    if (e.feature_transform && e.tnet_widths.empty()) throw ValidationError("model: tnet widths must be nonempty");
    const auto& d = decoder;
    if (d.grid_rows * d.grid_cols != d.points_per_patch) {
      throw ValidationError("model: patch grid must have points_per_patch points");
    }
    if (d.n_patches < 1 || d.widths.empty()) throw ValidationError("model: decoder needs patches and widths");
    if (classifier.widths.empty() || classifier.widths.back() != static_cast<std::size_t>(kClassCount)) {
      throw ValidationError("model: classifier must end in 4 outputs");
    }
    for (auto w : e.widths) if (w == 0) throw ValidationError("model: zero width");
    for (auto w : e.tnet_widths) if (w == 0) throw ValidationError("model: zero width");
    for (auto w : d.widths) if (w == 0) throw ValidationError("model: zero width");
    for (auto w : classifier.widths) if (w == 0) throw ValidationError("model: zero width");
    if (feature_transform_reg < 0) throw ValidationError("model: feature_transform_reg must be >= 0");
  }
};

// Fixed lattice of the patch parameter space, (points_per_patch, 2) in [0,1]^2.
inline Matrix patch_grid(const DecoderConfig& d) {
  Matrix g(static_cast<Eigen::Index>(d.points_per_patch), 2);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < d.grid_rows; ++i) {
    for (std::size_t j = 0; j < d.grid_cols; ++j, ++k) {
      g(k, 0) = d.grid_rows > 1 ? static_cast<double>(i) / static_cast<double>(d.grid_rows - 1) : 0.5;
      g(k, 1) = d.grid_cols > 1 ? static_cast<double>(j) / static_cast<double>(d.grid_cols - 1) : 0.5;
    }
  }
  return g;
}

inline Matrix cloud_xyz(const PointCloud& cloud) {
  Matrix m(static_cast<Eigen::Index>(cloud.size()), 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = cloud.points[i].x;
    m(r, 1) = cloud.points[i].y;
    m(r, 2) = cloud.points[i].z;
  }
  return m;
}

// --- losses ------------------------------------------------------------------

struct ChamferPairs {
  double value = 0.0;
  std::vector<std::size_t> a_to_b;  // nearest B index for every A row
  std::vector<std::size_t> b_to_a;
};

// Sum of the two directed mean squared nearest-neighbour distances.
inline ChamferPairs chamfer_pairs(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0 || b.rows() == 0) throw ValidationError("chamfer: empty cloud");
  if (a.cols() != 3 || b.cols() != 3) throw ValidationError("chamfer: clouds must be (n, 3)");
  ChamferPairs out;
  out.a_to_b.resize(static_cast<std::size_t>(a.rows()));
  out.b_to_a.resize(static_cast<std::size_t>(b.rows()));
  const KdTree3 tree_b(b);
  double sum_a = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const auto hit = tree_b.nearest(a(i, 0), a(i, 1), a(i, 2));
    out.a_to_b[static_cast<std::size_t>(i)] = hit.index;
    sum_a += hit.sq_dist;
  }
  const KdTree3 tree_a(a);
  double sum_b = 0.0;
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const auto hit = tree_a.nearest(b(j, 0), b(j, 1), b(j, 2));
    out.b_to_a[static_cast<std::size_t>(j)] = hit.index;
    sum_b += hit.sq_dist;
  }
  out.value = sum_a / static_cast<double>(a.rows()) + sum_b / static_cast<double>(b.rows());
  return out;
}

inline double chamfer(const Matrix& a, const Matrix& b) { return chamfer_pairs(a, b).value; }

// Differentiable Chamfer; the nearest-neighbour pairing is held fixed
// within the step, so gradients flow through the paired distances.
// Pairing and value are computed in f64 whatever the graph precision.
template <typename S>
Var chamfer(BasicGraph<S>& g, Var a, Var b) {
  using Mat = MatrixT<S>;
  auto pairs = [&] {
    if constexpr (std::is_same_v<S, double>) {
      return chamfer_pairs(g.value(a), g.value(b));
    } else {
      return chamfer_pairs(g.value(a).template cast<double>(), g.value(b).template cast<double>());
    }
  }();
  Mat v(1, 1);
  v(0, 0) = static_cast<S>(pairs.value);
  return g.custom("chamfer", std::move(v), {a, b}, [a, b, pairs = std::move(pairs)](BasicGraph<S>& gr, std::size_t self) {
    const S up = gr.upstream(self)(0, 0);
    const Mat& A = gr.value(a);
    const Mat& B = gr.value(b);
    Mat da = Mat::Zero(A.rows(), 3);
    Mat db = Mat::Zero(B.rows(), 3);
    const S ca = S(2) * up / static_cast<S>(A.rows());
    const S cb = S(2) * up / static_cast<S>(B.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const auto j = static_cast<Eigen::Index>(pairs.a_to_b[static_cast<std::size_t>(i)]);
      const Eigen::Matrix<S, 1, 3> d = ca * (A.row(i) - B.row(j));
      da.row(i) += d;
      db.row(j) -= d;
    }
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      const auto i = static_cast<Eigen::Index>(pairs.b_to_a[static_cast<std::size_t>(j)]);
      const Eigen::Matrix<S, 1, 3> d = cb * (B.row(j) - A.row(i));
      db.row(j) += d;
      da.row(i) -= d;
    }
    gr.accumulate(a, da);
    gr.accumulate(b, db);
  });
}

inline constexpr double kProbabilityFloor = 1e-12;

template <typename S>
void check_distribution(const MatrixT<S>& probs) {
  if (probs.rows() != 1 || probs.cols() != kClassCount) {
    throw ValidationError("cross_entropy: probabilities must be a 4-vector");
  }
  const double tol = std::is_same_v<S, double> ? 1e-9 : 1e-5;
  if (!probs.allFinite()) throw diff::NonFiniteError("cross_entropy: non-finite probabilities");
  if (probs.minCoeff() < S(0) || std::abs(static_cast<double>(probs.sum()) - 1.0) > tol) {
    throw ValidationError("cross_entropy: not a probability distribution");
  }
}

inline double cross_entropy(const Matrix& probs, ClassLabel truth) {
  check_distribution(probs);
  return -std::log(std::max(probs(0, class_code(truth)), kProbabilityFloor));
}

template <typename S>
Var cross_entropy(BasicGraph<S>& g, Var probs, ClassLabel truth) {
  using Mat = MatrixT<S>;
  const Mat& P = g.value(probs);
  check_distribution(P);
  const int t = class_code(truth);
  const S p = P(0, t);
  Mat v(1, 1);
  v(0, 0) = -std::log(std::max(p, static_cast<S>(kProbabilityFloor)));
  return g.custom("cross_entropy", std::move(v), {probs}, [probs, t, p](BasicGraph<S>& gr, std::size_t self) {
    Mat d = Mat::Zero(1, kClassCount);
    if (p > static_cast<S>(kProbabilityFloor)) d(0, t) = -gr.upstream(self)(0, 0) / p;
    gr.accumulate(probs, d);
  });
}

struct LossWeights {
  double w_rec = 1.0;
  double w_cls = 0.25;

  void validate() const {
    if (!(w_rec >= 0) || !(w_cls >= 0)) throw ValidationError("loss weights must be >= 0");
    if (w_rec == 0 && w_cls == 0) throw ValidationError("loss weights must not both be zero");
  }
};

inline double total_loss(const Matrix& recon, const Matrix& input_xyz, const Matrix& probs, ClassLabel truth,
                         const LossWeights& w) {
  w.validate();
  double loss = 0.0;
  if (w.w_rec != 0) loss += w.w_rec * chamfer(recon, input_xyz);
  if (w.w_cls != 0) loss += w.w_cls * cross_entropy(probs, truth);
  return loss;
}

// --- network -------------------------------------------------------------------

struct ForwardPass {
  Var latent;
  Var recon;
  Var probs;
  std::optional<Var> transform;
};

struct LossTerms {
  Var total;
  double chamfer = 0.0;
  double cross_entropy = 0.0;
};

class EnsembleNet {
 public:
  EnsembleNet(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), store_(seed) {
    cfg_.validate();
    grid_ = patch_grid(cfg_.decoder);
    register_params();
  }

  // Adopts existing parameters (checkpoint load); names and shapes must match.
  EnsembleNet(ModelConfig cfg, diff::ParamStore params) : EnsembleNet(cfg, params.seed()) {
    if (params.size() != store_.size()) throw ValidationError("parameter count does not match model");
    for (std::size_t i = 0; i < store_.size(); ++i) {
      if (params.name(i) != store_.name(i) || params.tensor(i).shape != store_.tensor(i).shape) {
        throw ValidationError("parameter '" + params.name(i) + "' does not match model layout");
      }
    }
    store_ = std::move(params);
  }

  const ModelConfig& config() const { return cfg_; }
  diff::ParamStore& params() { return store_; }
  const diff::ParamStore& params() const { return store_; }
  std::size_t latent_dim() const { return cfg_.encoder.latent_dim; }
  std::size_t output_points() const { return cfg_.decoder.output_points(); }

  // --- graph builders ---

  template <typename S>
  Var encode(BasicGraph<S>& g, Var xyz, std::optional<Var>* transform_out = nullptr) const {
    const auto& X = g.value(xyz);
    if (X.cols() != 3) throw ValidationError("encode: input must be (n, 3)");
    if (static_cast<std::size_t>(X.rows()) != cfg_.encoder.input_points) {
      throw ValidationError("encode: expected " + std::to_string(cfg_.encoder.input_points) + " points, got " +
                            std::to_string(X.rows()));
    }
    Var h = xyz;
    const auto& e = cfg_.encoder;
    for (std::size_t i = 0; i < e.widths.size(); ++i) {
      h = g.relu(g.dense(h, g.param(p_enc_w_[i]), g.param(p_enc_b_[i])));
      if (e.feature_transform && i + 1 == e.transform_after) {
        Var t = tnet(g, h);
        if (transform_out) *transform_out = t;
        h = g.matmul(h, t);
      }
    }
    Var pooled = g.max_over_set(h);
    return g.dense(pooled, g.param(p_head_w_), g.param(p_head_b_));
  }

  template <typename S>
  Var decode(BasicGraph<S>& g, Var code) const {
    check_code(g.value(code), "decode");
    const auto& d = cfg_.decoder;
    Var grid = g.constant(grid_.cast<S>());
    std::vector<Var> patches;
    patches.reserve(d.n_patches);
    for (std::size_t p = 0; p < d.n_patches; ++p) {
      const auto& P = p_dec_[p];
      Var row = g.dense(code, g.param(P.code_w), g.param(P.b0));
      Var h = g.relu(g.add_row(g.matmul(grid, g.param(P.uv_w)), row));
      for (std::size_t l = 0; l + 1 < P.w.size(); ++l) h = g.relu(g.dense(h, g.param(P.w[l]), g.param(P.b[l])));
      h = g.dense(h, g.param(P.w.back()), g.param(P.b.back()));
      patches.push_back(h);
    }
    return g.concat_rows(patches);
  }

  template <typename S>
  Var classify(BasicGraph<S>& g, Var code) const {
    check_code(g.value(code), "classify");
    Var h = code;
    for (std::size_t l = 0; l < p_cls_w_.size(); ++l) {
      h = g.dense(h, g.param(p_cls_w_[l]), g.param(p_cls_b_[l]));
      if (l + 1 < p_cls_w_.size()) h = g.relu(h);
    }
    return g.softmax(h);
  }

  template <typename S>
  ForwardPass forward(BasicGraph<S>& g, Var xyz) const {
    ForwardPass f;
    f.latent = encode(g, xyz, &f.transform);
    f.recon = decode(g, f.latent);
    f.probs = classify(g, f.latent);
    return f;
  }

  template <typename S>
  LossTerms loss(BasicGraph<S>& g, const ForwardPass& f, Var xyz, ClassLabel truth, const LossWeights& w) const {
    w.validate();
    LossTerms out;
    std::optional<Var> total;
    auto add_term = [&](Var term) { total = total ? g.add(*total, term) : term; };
    if (w.w_rec != 0) {
      Var cd = chamfer(g, f.recon, xyz);
      out.chamfer = static_cast<double>(g.value(cd)(0, 0));
      add_term(g.scale(cd, w.w_rec));
    } else {
      out.chamfer = chamfer(g.value(f.recon).template cast<double>(), g.value(xyz).template cast<double>());
    }
    if (w.w_cls != 0) {
      Var ce = cross_entropy(g, f.probs, truth);
      out.cross_entropy = static_cast<double>(g.value(ce)(0, 0));
      add_term(g.scale(ce, w.w_cls));
    } else {
      out.cross_entropy = cross_entropy(MatrixT<double>(g.value(f.probs).template cast<double>()), truth);
    }
    if (cfg_.feature_transform_reg > 0 && f.transform) {
      const auto d = g.value(*f.transform).rows();
      Var ttt = g.matmul(*f.transform, g.transpose(*f.transform));
      Var dev = g.sub(ttt, g.constant(MatrixT<S>::Identity(d, d)));
      add_term(g.scale(g.sum_squares(dev), cfg_.feature_transform_reg));
    }
    out.total = *total;
    return out;
  }

  // --- plain inference ---

  LatentCode encode(const Matrix& xyz) const {
    Graph g(&store_);
    return g.value(encode(g, g.constant(xyz))).row(0);
  }

  Matrix decode(const LatentCode& code) const {
    Graph g(&store_);
    return g.value(decode(g, g.constant(Matrix(code))));
  }

  Matrix classify(const LatentCode& code) const {
    Graph g(&store_);
    return g.value(classify(g, g.constant(Matrix(code))));
  }

  // Patch index of decoded row r.
  std::size_t patch_of(std::size_t row) const { return row / cfg_.decoder.points_per_patch; }

 private:
  struct PatchParams {
    std::size_t uv_w, code_w, b0;
    std::vector<std::size_t> w, b;
  };

  template <typename M>
  void check_code(const M& code, const char* op) const {
    if (code.rows() != 1 || static_cast<std::size_t>(code.cols()) != cfg_.encoder.latent_dim) {
      throw ValidationError(std::string(op) + ": latent code must have length " +
                            std::to_string(cfg_.encoder.latent_dim) + ", got " + diff::shape_string(code));
    }
  }

  template <typename S>
  Var tnet(BasicGraph<S>& g, Var h) const {
    Var t = h;
    for (std::size_t i = 0; i < p_tnet_w_.size(); ++i) t = g.relu(g.dense(t, g.param(p_tnet_w_[i]), g.param(p_tnet_b_[i])));
    Var pooled = g.max_over_set(t);
    Var flat = g.dense(pooled, g.param(p_tnet_out_w_), g.param(p_tnet_out_b_));
    const auto d = static_cast<Eigen::Index>(cfg_.encoder.widths[cfg_.encoder.transform_after - 1]);
    return g.reshape(flat, d, d);
  }

  void register_params() {
    const auto& e = cfg_.encoder;
    std::size_t in = 3;
    for (std::size_t i = 0; i < e.widths.size(); ++i) {
      const auto tag = "enc.mlp" + std::to_string(i);
      p_enc_w_.push_back(store_.add_glorot(tag + ".W", in, e.widths[i]));
      p_enc_b_.push_back(store_.add_zeros(tag + ".b", {e.widths[i]}));
      in = e.widths[i];
      if (e.feature_transform && i + 1 == e.transform_after) {
        const std::size_t d = in;
        std::size_t tin = d;
        for (std::size_t j = 0; j < e.tnet_widths.size(); ++j) {
          const auto ttag = "enc.tnet.mlp" + std::to_string(j);
          p_tnet_w_.push_back(store_.add_glorot(ttag + ".W", tin, e.tnet_widths[j]));
          p_tnet_b_.push_back(store_.add_zeros(ttag + ".b", {e.tnet_widths[j]}));
          tin = e.tnet_widths[j];
        }
        p_tnet_out_w_ = store_.add_glorot("enc.tnet.out.W", tin, d * d);
        // Bias starts at the flattened identity so the transform begins near I.
        diff::Tensor bias = diff::Tensor::zeros({d * d});
        for (std::size_t k = 0; k < d; ++k) bias.values(0, static_cast<Eigen::Index>(k * d + k)) = 1.0;
        p_tnet_out_b_ = store_.add("enc.tnet.out.b", std::move(bias));
      }
    }
    p_head_w_ = store_.add_glorot("enc.head.W", in, e.latent_dim);
    p_head_b_ = store_.add_zeros("enc.head.b", {e.latent_dim});

    const auto& d = cfg_.decoder;
    for (std::size_t p = 0; p < d.n_patches; ++p) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "dec.p%02zu", p);
      const std::string tag = buf;
      PatchParams P;
      const std::size_t w0 = d.widths[0];
      // First layer acts on [uv, code]; split into its two column blocks.
      P.uv_w = store_.add_glorot(tag + ".l0.uv.W", 2 + e.latent_dim, w0);
      P.code_w = store_.add_glorot(tag + ".l0.code.W", 2 + e.latent_dim, w0);
      P.b0 = store_.add_zeros(tag + ".l0.b", {w0});
      // The glorot helper draws for the full fan; trim to the block shapes.
      trim_rows(P.uv_w, 2);
      trim_rows(P.code_w, e.latent_dim, 2);
      std::size_t hin = w0;
      for (std::size_t l = 1; l <= d.widths.size(); ++l) {
        const std::size_t out = l < d.widths.size() ? d.widths[l] : 3;
        P.w.push_back(store_.add_glorot(tag + ".l" + std::to_string(l) + ".W", hin, out));
        P.b.push_back(store_.add_zeros(tag + ".l" + std::to_string(l) + ".b", {out}));
        hin = out;
      }
      p_dec_.push_back(std::move(P));
    }

    std::size_t cin = e.latent_dim;
    for (std::size_t l = 0; l < cfg_.classifier.widths.size(); ++l) {
      const auto tag = "cls.l" + std::to_string(l);
      p_cls_w_.push_back(store_.add_glorot(tag + ".W", cin, cfg_.classifier.widths[l]));
      p_cls_b_.push_back(store_.add_zeros(tag + ".b", {cfg_.classifier.widths[l]}));
      cin = cfg_.classifier.widths[l];
    }
  }

  // Keeps `rows` rows starting at `first` of a (fan_in, out) weight.
  void trim_rows(std::size_t index, std::size_t rows, std::size_t first = 0) {
    auto& t = store_.tensor(index);
    Matrix kept = t.values.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(rows));
    t.values = std::move(kept);
    t.shape[0] = rows;
  }

  ModelConfig cfg_;
  diff::ParamStore store_;
  Matrix grid_;
  std::vector<std::size_t> p_enc_w_, p_enc_b_, p_tnet_w_, p_tnet_b_;
  std::size_t p_tnet_out_w_ = 0, p_tnet_out_b_ = 0, p_head_w_ = 0, p_head_b_ = 0;
  std::vector<PatchParams> p_dec_;
  std::vector<std::size_t> p_cls_w_, p_cls_b_;
};

// Layer colouring for decoder output. Decoder points carry no labels and
// patches straddle layers, so labels are transferred from labelled
// exemplars: each keeps its latent code and, per output point, the layer of
// the input point nearest to that point of its reconstruction. A decoded
// code takes the labels of the exemplar with the nearest latent.
struct LayerExemplars {
  Matrix latents;                               // one row per exemplar, f32-representable
  std::vector<std::vector<LayerLabel>> layers;  // [exemplar][output point]

  bool empty() const { return layers.empty(); }
  std::size_t size() const { return layers.size(); }

  // Nearest exemplar by Euclidean latent distance; ties go to the lower index.
  std::size_t nearest(const LatentCode& z) const {
    if (empty()) throw ValidationError("layer exemplars: none stored");
    if (z.size() != latents.cols()) {
      throw ValidationError("layer exemplars: latent size " + std::to_string(z.size()) + ", expected " +
                            std::to_string(latents.cols()));
    }
    std::size_t best = 0;
    double bd = INFINITY;
    for (Eigen::Index i = 0; i < latents.rows(); ++i) {
      const double d = (latents.row(i) - z).squaredNorm();
      if (d < bd) {
        bd = d;
        best = static_cast<std::size_t>(i);
      }
    }
    return best;
  }

  const std::vector<LayerLabel>& labels_for(const LatentCode& z) const { return layers[nearest(z)]; }

  bool operator==(const LayerExemplars& o) const {
    return layers == o.layers && latents.rows() == o.latents.rows() && latents.cols() == o.latents.cols() &&
           (latents.array() == o.latents.array()).all();
  }
};

inline LayerExemplars calibrate_layer_exemplars(const EnsembleNet& net, const std::vector<PointCloud>& clouds) {
  if (clouds.empty()) throw ValidationError("calibrate_layer_exemplars: empty calibration set");
  LayerExemplars ex;
  ex.latents.resize(static_cast<Eigen::Index>(clouds.size()), static_cast<Eigen::Index>(net.latent_dim()));
  for (std::size_t c = 0; c < clouds.size(); ++c) {
    const Matrix xyz = cloud_xyz(clouds[c]);
    // Stored as f32, so labels are computed from the rounded code.
    const LatentCode z = net.encode(xyz).cast<float>().cast<double>();
    ex.latents.row(static_cast<Eigen::Index>(c)) = z;
    const Matrix recon = net.decode(z);
    const KdTree3 tree(xyz);
    std::vector<LayerLabel> labels(static_cast<std::size_t>(recon.rows()));
    for (Eigen::Index r = 0; r < recon.rows(); ++r) {
      labels[static_cast<std::size_t>(r)] = clouds[c].points[tree.nearest(recon(r, 0), recon(r, 1), recon(r, 2)).index].layer;
    }
    ex.layers.push_back(std::move(labels));
  }
  return ex;
}

}  // namespace onh
