#pragma once

// Gradient checks of every network component, shared by the unit tests and
// the acceptance runner.

#include <string>
#include <vector>

#include "gen.hpp"
#include "gradcheck.hpp"
#include "onh/model.hpp"

namespace checks {

using onh::diff::Matrix;
using onh::diff::Var;

struct ComponentResult {
  std::string component;
  gradcheck::Report report;
};

inline Matrix random_matrix(gen::Rng& r, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.normal(sd);
  return m;
}

// Targets for every parameter whose name starts with `prefix` ("" = all).
inline void add_params(onh::diff::ParamStore& store, const std::string& prefix, std::vector<gradcheck::Target>& t,
                       std::vector<std::size_t>& idx) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store.name(i).rfind(prefix, 0) != 0) continue;
    t.push_back({store.name(i), &store.tensor(i).values});
    idx.push_back(i);
  }
}

inline std::vector<ComponentResult> model_gradient_checks(const onh::ModelConfig& cfg, std::uint64_t seed,
                                                          std::size_t per_target) {
  onh::EnsembleNet net(cfg, seed);
  auto& store = net.params();
  gen::Rng r(seed ^ 0xC0FFEE);
  // Zero-initialized biases put dead ReLU rows exactly on the kink; move to a
  // generic point of parameter space first.
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& name = store.name(i);
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0) {
      auto& v = store.tensor(i).values;
      for (Eigen::Index j = 0; j < v.size(); ++j) v.data()[j] += r.normal(0.1);
    }
  }
  const auto n = static_cast<Eigen::Index>(cfg.encoder.input_points);
  const auto k = static_cast<Eigen::Index>(cfg.encoder.latent_dim);
  std::vector<ComponentResult> out;

  Matrix x = random_matrix(r, n, 3, 0.5);
  Matrix code = random_matrix(r, 1, k, 0.5);

  {  // encoder: random projection of the latent
    const Matrix proj = random_matrix(r, 1, k);
    std::vector<gradcheck::Target> t{{"xyz", &x}};
    std::vector<std::size_t> idx;
    add_params(store, "enc.", t, idx);
    auto build = [&](onh::diff::Graph& g) {
      Var vx = g.variable(x);
      Var loss = g.sum(g.mul(net.encode(g, vx), g.constant(proj)));
      std::vector<Var> vars{vx};
      for (auto i : idx) vars.push_back(g.param(i));
      return std::make_pair(loss, vars);
    };
    out.push_back({"encoder", gradcheck::check(&store, t, build, per_target, seed)});
  }
  {  // decoder
    const Matrix proj = random_matrix(r, static_cast<Eigen::Index>(cfg.decoder.output_points()), 3);
    std::vector<gradcheck::Target> t{{"code", &code}};
    std::vector<std::size_t> idx;
    add_params(store, "dec.", t, idx);
    auto build = [&](onh::diff::Graph& g) {
      Var vc = g.variable(code);
      Var loss = g.sum(g.mul(net.decode(g, vc), g.constant(proj)));
      std::vector<Var> vars{vc};
      for (auto i : idx) vars.push_back(g.param(i));
      return std::make_pair(loss, vars);
    };
    out.push_back({"decoder", gradcheck::check(&store, t, build, per_target, seed + 1)});
  }
  {  // classifier
    const Matrix proj = random_matrix(r, 1, onh::kClassCount);
    std::vector<gradcheck::Target> t{{"code", &code}};
    std::vector<std::size_t> idx;
    add_params(store, "cls.", t, idx);
    auto build = [&](onh::diff::Graph& g) {
      Var vc = g.variable(code);
      Var loss = g.sum(g.mul(net.classify(g, vc), g.constant(proj)));
      std::vector<Var> vars{vc};
      for (auto i : idx) vars.push_back(g.param(i));
      return std::make_pair(loss, vars);
    };
    out.push_back({"classifier", gradcheck::check(&store, t, build, per_target, seed + 2)});
  }
  {  // Chamfer between two free clouds
    Matrix a = random_matrix(r, 40, 3), b = random_matrix(r, 29, 3);
    std::vector<gradcheck::Target> t{{"A", &a}, {"B", &b}};
    auto build = [&](onh::diff::Graph& g) {
      Var va = g.variable(a), vb = g.variable(b);
      return std::make_pair(onh::chamfer(g, va, vb), std::vector<Var>{va, vb});
    };
    out.push_back({"chamfer", gradcheck::check(nullptr, t, build, per_target, seed + 3)});
  }
  {  // cross-entropy through softmax logits
    Matrix z = random_matrix(r, 1, onh::kClassCount, 2.0);
    const auto truth = onh::class_from_code(static_cast<int>(seed % onh::kClassCount));
    std::vector<gradcheck::Target> t{{"logits", &z}};
    auto build = [&](onh::diff::Graph& g) {
      Var vz = g.variable(z);
      return std::make_pair(onh::cross_entropy(g, g.softmax(vz), truth), std::vector<Var>{vz});
    };
    out.push_back({"cross_entropy", gradcheck::check(nullptr, t, build, per_target, seed + 4)});
  }
  {  // composed total loss through encoder, decoder, classifier and both losses
    const auto truth = onh::class_from_code(static_cast<int>((seed + 1) % onh::kClassCount));
    const onh::LossWeights w;
    std::vector<gradcheck::Target> t{{"xyz", &x}};
    std::vector<std::size_t> idx;
    add_params(store, "", t, idx);
    auto build = [&](onh::diff::Graph& g) {
      Var vx = g.variable(x);
      const auto f = net.forward(g, vx);
      Var loss = net.loss(g, f, vx, truth, w).total;
      std::vector<Var> vars{vx};
      for (auto i : idx) vars.push_back(g.param(i));
      return std::make_pair(loss, vars);
    };
    out.push_back({"total_loss", gradcheck::check(&store, t, build, per_target, seed + 5)});
  }
  return out;
}

}  // namespace checks
