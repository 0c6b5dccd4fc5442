// Copyright (c) 2026 The vmplan Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small gradient-boosted regression tree learner. Exact greedy splits,
// Newton leaf values, optional pseudo-huber loss, per-row sample weights.
// Training is deterministic given (row order, params); trees serialize to a
// self-describing JSON layout so any language can evaluate them.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace vmplan::gbt {

enum class Loss { squared, pseudo_huber };

struct Params {
  int n_trees = 200;
  int max_depth = 5;
  double learning_rate = 0.1;
  double lambda = 1.0;            // L2 on leaf values
  double min_child_weight = 1.0;  // min hessian sum per child
  Loss loss = Loss::squared;
  double huber_delta = 1.0;       // pseudo-huber transition scale
};

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf weight, already scaled by learning_rate
  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<Node> nodes;  // nodes[0] is the root
  double predict(std::span<const double> x) const;
};

struct Model {
  double base_score = 0.0;
  std::vector<Tree> trees;
  Params params;

  double predict(std::span<const double> x) const;
};

// Row-major feature matrix, n_rows x n_features. weights may be empty
// (all ones). NaN feature values always route to the left child.
Model train(const std::vector<double>& features, std::size_t n_features,
            std::span<const double> labels, std::span<const double> weights,
            const Params& params);

nlohmann::json to_json(const Model& m);
Model model_from_json(const nlohmann::json& j);

}  // namespace vmplan::gbt
