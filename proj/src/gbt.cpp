// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
#include "vmplan/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vmplan/errors.hpp"

namespace vmplan::gbt {

double Tree::predict(std::span<const double> x) const {
  int i = 0;
  while (!nodes[i].is_leaf()) {
    const Node& n = nodes[i];
    double v = x[static_cast<std::size_t>(n.feature)];
    i = (std::isnan(v) || v <= n.threshold) ? n.left : n.right;
  }
  return nodes[i].value;
}

double Model::predict(std::span<const double> x) const {
  double y = base_score;
  for (const auto& t : trees) y += t.predict(x);
  return y;
}

namespace {

struct GradHess {
  double g = 0.0;
  double h = 0.0;
};

GradHess grad_hess(Loss loss, double residual, double delta) {
  // Gradients of L(pred, y) w.r.t. pred, written in terms of r = y - pred so
  // the leaf Newton step g/h moves toward the target.
  switch (loss) {
    case Loss::squared:
      return {residual, 1.0};
    case Loss::pseudo_huber: {
      double q = 1.0 + (residual / delta) * (residual / delta);
      return {residual / std::sqrt(q), 1.0 / (q * std::sqrt(q))};
    }
  }
  return {residual, 1.0};
}

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

double leaf_objective(double g, double h, double lambda) {
  return g * g / (h + lambda);
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<double>& features, std::size_t n_features,
              const Params& params)
      : x_(features), d_(n_features), p_(params) {}

  Tree build(const std::vector<GradHess>& gh, std::span<const double> w) {
    Tree tree;
    std::vector<std::size_t> rows(gh.size());
    std::iota(rows.begin(), rows.end(), 0);
    grow(tree, rows, gh, w, 0);
    return tree;
  }

 private:
  double feat(std::size_t row, int f) const {
    return x_[row * d_ + static_cast<std::size_t>(f)];
  }

  int grow(Tree& tree, std::vector<std::size_t>& rows,
           const std::vector<GradHess>& gh, std::span<const double> w,
           int depth) {
    double G = 0.0, H = 0.0;
    for (std::size_t r : rows) {
      double wr = w.empty() ? 1.0 : w[r];
      G += wr * gh[r].g;
      H += wr * gh[r].h;
    }

    SplitChoice best;
    if (depth < p_.max_depth && rows.size() >= 2) best = best_split(rows, gh, w, G, H);

    int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (best.feature < 0) {
      tree.nodes[static_cast<std::size_t>(idx)].value =
          p_.learning_rate * (G / (H + p_.lambda));
      return idx;
    }

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) {
      double v = feat(r, best.feature);
      (std::isnan(v) || v <= best.threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    int li = grow(tree, left, gh, w, depth + 1);
    int ri = grow(tree, right, gh, w, depth + 1);
    Node& n = tree.nodes[static_cast<std::size_t>(idx)];
    n.feature = best.feature;
    n.threshold = best.threshold;
    n.left = li;
    n.right = ri;
    return idx;
  }

  SplitChoice best_split(const std::vector<std::size_t>& rows,
                         const std::vector<GradHess>& gh,
                         std::span<const double> w, double G, double H) {
    SplitChoice best;
    double parent = leaf_objective(G, H, p_.lambda);
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(rows.size());

    for (int f = 0; f < static_cast<int>(d_); ++f) {
      order.clear();
      for (std::size_t r : rows) order.emplace_back(feat(r, f), r);
      std::sort(order.begin(), order.end());
      if (order.front().first == order.back().first) continue;

      double gl = 0.0, hl = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        std::size_t r = order[i].second;
        double wr = w.empty() ? 1.0 : w[r];
        gl += wr * gh[r].g;
        hl += wr * gh[r].h;
        if (order[i].first == order[i + 1].first) continue;  // not a boundary
        double hr = H - hl;
        if (hl < p_.min_child_weight || hr < p_.min_child_weight) continue;
        double gain = leaf_objective(gl, hl, p_.lambda) +
                      leaf_objective(G - gl, hr, p_.lambda) - parent;
        // Strict improvement keeps the choice deterministic: first
        // (feature, threshold) in scan order wins ties.
        if (gain > best.gain + 1e-12) {
          best.gain = gain;
          best.feature = f;
          best.threshold =
              order[i].first + 0.5 * (order[i + 1].first - order[i].first);
        }
      }
    }
    return best;
  }

  const std::vector<double>& x_;
  std::size_t d_;
  const Params& p_;
};

}  // namespace

Model train(const std::vector<double>& features, std::size_t n_features,
            std::span<const double> labels, std::span<const double> weights,
            const Params& params) {
  if (n_features == 0) throw DomainError("gbt::train: n_features == 0");
  std::size_t n = labels.size();
  if (n == 0) throw DomainError("gbt::train: empty dataset");
  if (features.size() != n * n_features)
    throw DomainError("gbt::train: feature matrix shape mismatch");
  if (!weights.empty() && weights.size() != n)
    throw DomainError("gbt::train: weight length mismatch");
  for (double v : features)
    if (!std::isfinite(v))
      throw DomainError("gbt::train: non-finite feature value");

  Model model;
  model.params = params;

  double wsum = 0.0, ysum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double w = weights.empty() ? 1.0 : weights[i];
    wsum += w;
    ysum += w * labels[i];
  }
  model.base_score = ysum / wsum;

  std::vector<double> pred(n, model.base_score);
  std::vector<GradHess> gh(n);
  TreeBuilder builder(features, n_features, params);

  for (int t = 0; t < params.n_trees; ++t) {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      gh[i] = grad_hess(params.loss, labels[i] - pred[i], params.huber_delta);
      sse += (labels[i] - pred[i]) * (labels[i] - pred[i]);
    }
    if (sse <= 1e-28 * static_cast<double>(n)) break;  // already exact

    Tree tree = builder.build(gh, weights);
    for (std::size_t i = 0; i < n; ++i)
      pred[i] += tree.predict(
          std::span<const double>(features.data() + i * n_features, n_features));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

nlohmann::json to_json(const Model& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"value", n.value}});
      } else {
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right}});
      }
    }
    trees.push_back({{"nodes", nodes}});
  }
  return {{"kind", "gbt"},
          {"base_score", m.base_score},
          {"trees", trees},
          {"loss", m.params.loss == Loss::pseudo_huber ? "pseudo_huber"
                                                       : "squared"},
          {"learning_rate", m.params.learning_rate},
          {"max_depth", m.params.max_depth},
          {"lambda", m.params.lambda}};
}

Model model_from_json(const nlohmann::json& j) {
  Model m;
  m.base_score = j.at("base_score").get<double>();
  m.params.learning_rate = j.value("learning_rate", 0.1);
  m.params.max_depth = j.value("max_depth", 5);
  m.params.lambda = j.value("lambda", 1.0);
  m.params.loss = j.value("loss", std::string("squared")) == "pseudo_huber"
                      ? Loss::pseudo_huber
                      : Loss::squared;
  for (const auto& tj : j.at("trees")) {
    Tree t;
    for (const auto& nj : tj.at("nodes")) {
      Node n;
      if (nj.contains("feature")) {
        n.feature = nj.at("feature").get<int>();
        n.threshold = nj.at("threshold").get<double>();
        n.left = nj.at("left").get<int>();
        n.right = nj.at("right").get<int>();
      } else {
        n.value = nj.at("value").get<double>();
      }
      t.nodes.push_back(n);
    }
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace vmplan::gbt
