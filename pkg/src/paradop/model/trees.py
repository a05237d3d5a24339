# Copyright 2026 The paradop Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Regression trees and tree ensembles.

A tree is stored as flat per-node arrays. Node 0 is the root; a node with
feature -1 is a leaf. Rows with x[feature] <= threshold go left.

The split gain of a node with target sum G over n rows, split into (G_L,
n_L) and (G_R, n_R), is

  G_L^2 / (n_L + l2) + G_R^2 / (n_R + l2) - G^2 / (n + l2)

and a leaf predicts G / (n + l2). With l2 = 0 the gain is the reduction in
squared error and the leaf value is the mean target.

Boosted trees are grown here by exact greedy splitting. Random forest members
are grown by sklearn and converted to the same arrays.
"""

import dataclasses
import multiprocessing
from typing import Any, Dict, List, Mapping, Optional, Sequence

from absl import logging
import numpy as np
from sklearn import tree as sklearn_tree

LEAF = -1


def seed_stream(seed: int, index: int) -> np.random.Generator:
  """Returns the generator for ensemble member `index` under `seed`."""
  return np.random.default_rng([seed % 2**64, index])


@dataclasses.dataclass
class RegressionTree:
  """A fitted binary regression tree.

  Attributes:
    features: Split slot per node, LEAF for leaves.
    thresholds: Split threshold per node, 0 for leaves.
    children_left: Left child per node, LEAF for leaves.
    children_right: Right child per node, LEAF for leaves.
    values: Prediction per node.
    gains: Split gain per node, 0 for leaves.
  """
  features: np.ndarray
  thresholds: np.ndarray
  children_left: np.ndarray
  children_right: np.ndarray
  values: np.ndarray
  gains: np.ndarray

  @property
  def num_nodes(self) -> int:
    return int(self.features.shape[0])

  @property
  def num_leaves(self) -> int:
    return int((self.features == LEAF).sum())

  def depth(self) -> int:
    depths = np.zeros(self.num_nodes, dtype=np.int64)
    for node in range(self.num_nodes):
      if self.features[node] != LEAF:
        depths[self.children_left[node]] = depths[node] + 1
        depths[self.children_right[node]] = depths[node] + 1
    return int(depths.max())

  def predict(self, x: np.ndarray) -> np.ndarray:
    return self.values[self.apply(x)]

  def apply(self, x: np.ndarray) -> np.ndarray:
    """Returns the leaf reached by every row."""
    nodes = np.zeros(x.shape[0], dtype=np.int64)
    rows = np.arange(x.shape[0])
    while True:
      features = self.features[nodes]
      active = features != LEAF
      if not active.any():
        break
      current = nodes[active]
      go_left = (x[rows[active], features[active]] <=
                 self.thresholds[current])
      nodes[active] = np.where(go_left, self.children_left[current],
                               self.children_right[current])
    return nodes

  def feature_importances(self, num_features: int) -> np.ndarray:
    importances = np.zeros(num_features)
    split = self.features != LEAF
    np.add.at(importances, self.features[split], self.gains[split])
    return importances

  def to_dict(self) -> Dict[str, List[Any]]:
    return {
        'features': self.features.tolist(),
        'thresholds': self.thresholds.tolist(),
        'children_left': self.children_left.tolist(),
        'children_right': self.children_right.tolist(),
        'values': self.values.tolist(),
        'gains': self.gains.tolist(),
    }

  @classmethod
  def from_dict(cls, d: Mapping[str, Sequence[Any]]) -> 'RegressionTree':
    tree = cls(
        features=np.asarray(d['features'], dtype=np.int64),
        thresholds=np.asarray(d['thresholds'], dtype=np.float64),
        children_left=np.asarray(d['children_left'], dtype=np.int64),
        children_right=np.asarray(d['children_right'], dtype=np.int64),
        values=np.asarray(d['values'], dtype=np.float64),
        gains=np.asarray(d['gains'], dtype=np.float64))
    n = tree.num_nodes
    for name in ('thresholds', 'children_left', 'children_right', 'values',
                 'gains'):
      if getattr(tree, name).shape != (n,):
        raise ValueError(f'Tree array "{name}" does not have {n} entries.')
    if n == 0:
      raise ValueError('Tree has no nodes.')
    if not np.all(np.isfinite(tree.thresholds)):
      raise ValueError('Tree thresholds must be finite.')
    split = tree.features != LEAF
    if np.any(tree.features[split] < 0):
      raise ValueError('Tree split features must be non-negative.')
    # Children strictly after their parent keep every path finite.
    nodes = np.arange(n)
    for name in ('children_left', 'children_right'):
      children = getattr(tree, name)[split]
      if np.any(children <= nodes[split]) or np.any(children >= n):
        raise ValueError(f'Tree array "{name}" points outside the tree or '
                         'back towards the root.')
    return tree


@dataclasses.dataclass(frozen=True)
class _Split:
  feature: int
  threshold: float
  gain: float
  left_rows: np.ndarray
  right_rows: np.ndarray


def find_best_split(x: np.ndarray, y: np.ndarray, rows: np.ndarray,
                    features: np.ndarray, min_samples_leaf: int,
                    l2: float) -> Optional[_Split]:
  """Finds the split with the largest gain over the candidate features.

  Every boundary between consecutive distinct sorted values of a feature is
  a candidate, with the threshold at the midpoint. Among equal gains the
  lowest feature wins, then the lowest threshold.

  Args:
    x: Full feature matrix.
    y: Full target vector.
    rows: Rows reaching the node.
    features: Candidate features in ascending order.
    min_samples_leaf: Minimum rows on each side.
    l2: L2 penalty on leaf values.

  Returns:
    The best split, or None if no split has positive gain.
  """
  n = rows.shape[0]
  if n < 2 * min_samples_leaf:
    return None
  xs = x[np.ix_(rows, features)]
  order = np.argsort(xs, axis=0, kind='stable')
  sorted_x = np.take_along_axis(xs, order, axis=0)
  sorted_y = y[rows][order]
  cumulative = np.cumsum(sorted_y, axis=0)
  total = cumulative[-1]
  # Left side of boundary i holds the first i + 1 sorted rows.
  left_sum = cumulative[:-1]
  right_sum = total - left_sum
  left_count = np.arange(1, n, dtype=np.float64)[:, None]
  right_count = n - left_count
  valid = ((sorted_x[:-1] < sorted_x[1:]) &
           (left_count >= min_samples_leaf) &
           (right_count >= min_samples_leaf))
  if not valid.any():
    return None
  parent = total * total / (n + l2)
  gain = (left_sum * left_sum / (left_count + l2) +
          right_sum * right_sum / (right_count + l2) - parent)
  gain = np.where(valid, gain, -np.inf)
  # Feature-major flattening makes argmax prefer the lowest feature, then
  # the lowest boundary.
  best = int(np.argmax(gain.T))
  column, boundary = divmod(best, n - 1)
  best_gain = float(gain[boundary, column])
  if not best_gain > 0.:
    return None
  lo = sorted_x[boundary, column]
  hi = sorted_x[boundary + 1, column]
  threshold = lo / 2. + hi / 2.
  if not lo <= threshold < hi:
    threshold = lo
  sorted_rows = rows[order[:, column]]
  return _Split(feature=int(features[column]), threshold=float(threshold),
                gain=best_gain, left_rows=sorted_rows[:boundary + 1],
                right_rows=sorted_rows[boundary + 1:])


def fit_tree(x: np.ndarray,
             y: np.ndarray,
             rows: Optional[np.ndarray] = None,
             max_depth: Optional[int] = None,
             min_samples_leaf: int = 1,
             l2: float = 0.,
             feature_fraction: float = 1.,
             rng: Optional[np.random.Generator] = None) -> RegressionTree:
  """Grows a regression tree depth first.

  Args:
    x: Feature matrix of shape (n, f).
    y: Targets of shape (n,).
    rows: Rows to fit on, possibly repeated. Defaults to all rows.
    max_depth: Maximum depth; None grows until no split has positive gain.
    min_samples_leaf: Minimum rows per leaf.
    l2: L2 penalty on leaf values.
    feature_fraction: Fraction of features drawn at every split.
    rng: Generator for feature subsampling; required if feature_fraction is
      below 1.

  Returns:
    The fitted tree.
  """
  num_features = x.shape[1]
  if rows is None:
    rows = np.arange(x.shape[0])
  per_split = max(1, int(feature_fraction * num_features))
  if per_split < num_features and rng is None:
    raise ValueError('Feature subsampling requires a random generator.')
  all_features = np.arange(num_features)

  features, thresholds, lefts, rights, values, gains = [], [], [], [], [], []

  def new_node(node_rows: np.ndarray) -> int:
    features.append(LEAF)
    thresholds.append(0.)
    lefts.append(LEAF)
    rights.append(LEAF)
    values.append(float(y[node_rows].sum() / (node_rows.shape[0] + l2)))
    gains.append(0.)
    return len(features) - 1

  stack = [(new_node(rows), rows, 0)]
  while stack:
    node, node_rows, depth = stack.pop()
    if max_depth is not None and depth >= max_depth:
      continue
    node_y = y[node_rows]
    if node_y.max() == node_y.min():
      continue
    if per_split < num_features:
      # Draws only among features that still vary at this node.
      node_x = x[node_rows]
      varying = np.flatnonzero(node_x.max(axis=0) > node_x.min(axis=0))
      if varying.shape[0] > per_split:
        candidates = np.sort(rng.choice(varying, per_split, replace=False))
      else:
        candidates = varying
      if not candidates.size:
        continue
    else:
      candidates = all_features
    split = find_best_split(x, y, node_rows, candidates, min_samples_leaf, l2)
    if split is None:
      continue
    features[node] = split.feature
    thresholds[node] = split.threshold
    gains[node] = split.gain
    left = new_node(split.left_rows)
    right = new_node(split.right_rows)
    lefts[node] = left
    rights[node] = right
    # Right is pushed first so the left subtree is numbered first.
    stack.append((right, split.right_rows, depth + 1))
    stack.append((left, split.left_rows, depth + 1))

  return RegressionTree(
      features=np.asarray(features, dtype=np.int64),
      thresholds=np.asarray(thresholds, dtype=np.float64),
      children_left=np.asarray(lefts, dtype=np.int64),
      children_right=np.asarray(rights, dtype=np.int64),
      values=np.asarray(values, dtype=np.float64),
      gains=np.asarray(gains, dtype=np.float64))


def from_sklearn(regressor: sklearn_tree.DecisionTreeRegressor
                ) -> RegressionTree:
  """Converts a fitted sklearn regression tree to flat arrays.

  sklearn splits on float32 features, so trees converted here must be
  applied to float32 inputs to route rows the way sklearn does.

  Args:
    regressor: A fitted single-output tree.

  Returns:
    The same tree, with the split gain of each node recovered from the
    weighted impurities of the node and its children.
  """
  t = regressor.tree_
  leaf = t.children_left == LEAF
  left = np.where(leaf, 0, t.children_left)
  right = np.where(leaf, 0, t.children_right)
  sse = t.weighted_n_node_samples * t.impurity
  return RegressionTree(
      features=np.where(leaf, LEAF, t.feature).astype(np.int64),
      thresholds=np.where(leaf, 0., t.threshold).astype(np.float64),
      children_left=np.where(leaf, LEAF, t.children_left).astype(np.int64),
      children_right=np.where(leaf, LEAF, t.children_right).astype(np.int64),
      values=np.asarray(t.value[:, 0, 0], dtype=np.float64),
      gains=np.where(leaf, 0., sse - sse[left] - sse[right]))


def _fit_forest_member(x: np.ndarray, y: np.ndarray, seed: int, index: int,
                       bootstrap: bool, max_depth: Optional[int],
                       min_samples_leaf: int,
                       feature_fraction: float) -> RegressionTree:
  rng = seed_stream(seed, index)
  n = x.shape[0]
  rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
  regressor = sklearn_tree.DecisionTreeRegressor(
      max_depth=max_depth,
      min_samples_leaf=min_samples_leaf,
      max_features=feature_fraction,
      random_state=int(rng.integers(2**31 - 1)))
  regressor.fit(x[rows], y[rows])
  return from_sklearn(regressor)


@dataclasses.dataclass
class RandomForestRegressor:
  """Bagged regression trees; the prediction is the mean over trees.

  Members are grown by sklearn CART with per-split feature sampling and
  stored as RegressionTree arrays, so the saved forest has the same layout
  as a boosted ensemble. Member i draws its bootstrap rows and its sklearn
  seed from seed_stream(seed, i).
  """
  n_trees: int = 100
  max_depth: Optional[int] = None
  min_samples_leaf: int = 1
  feature_fraction: float = 1. / 3.
  bootstrap: bool = True
  num_workers: int = 0
  trees: List[RegressionTree] = dataclasses.field(
      default_factory=list, repr=False)

  @classmethod
  def from_config(cls, config: Mapping[str, Any]) -> 'RandomForestRegressor':
    max_depth = config['max_depth']
    return cls(n_trees=int(config['n_trees']),
               max_depth=None if max_depth is None else int(max_depth),
               min_samples_leaf=int(config['min_samples_leaf']),
               feature_fraction=float(config['feature_fraction']),
               bootstrap=bool(config['bootstrap']),
               num_workers=int(config['num_workers']))

  def fit(self, x: np.ndarray, y: np.ndarray,
          seed: int = 0) -> 'RandomForestRegressor':
    args = [(x, y, seed, i, self.bootstrap, self.max_depth,
             self.min_samples_leaf, self.feature_fraction)
            for i in range(self.n_trees)]
    if self.num_workers > 1:
      with multiprocessing.Pool(self.num_workers) as pool:
        self.trees = pool.starmap(_fit_forest_member, args)
    else:
      self.trees = [_fit_forest_member(*a) for a in args]
    logging.info('Fit random forest of %d trees (mean depth %.1f).',
                 len(self.trees), np.mean([t.depth() for t in self.trees]))
    return self

  def predict(self, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    return np.mean([t.predict(x) for t in self.trees], axis=0)

  def feature_importances(self, num_features: int) -> np.ndarray:
    return np.sum([t.feature_importances(num_features) for t in self.trees],
                  axis=0)

  def summary(self) -> Dict[str, Any]:
    return {'trees': len(self.trees),
            'leaves': int(sum(t.num_leaves for t in self.trees))}

  def to_dict(self) -> Dict[str, Any]:
    return {'trees': [t.to_dict() for t in self.trees]}

  @classmethod
  def from_dict(cls, d: Mapping[str, Any],
                config: Mapping[str, Any]) -> 'RandomForestRegressor':
    model = cls.from_config(config)
    model.trees = [RegressionTree.from_dict(t) for t in d['trees']]
    if not model.trees:
      raise ValueError('Forest has no trees.')
    return model


@dataclasses.dataclass
class GradientBoostingRegressor:
  """Trees fit in sequence to squared-loss residuals.

  The prediction is base_score + shrinkage * sum of tree predictions, where
  base_score is the mean training target.
  """
  n_rounds: int = 100
  max_depth: Optional[int] = 6
  min_samples_leaf: int = 1
  shrinkage: float = 0.1
  l2: float = 1.0
  base_score: float = 0.
  trees: List[RegressionTree] = dataclasses.field(
      default_factory=list, repr=False)
  round_mse: List[float] = dataclasses.field(default_factory=list, repr=False)

  @classmethod
  def from_config(cls,
                  config: Mapping[str, Any]) -> 'GradientBoostingRegressor':
    max_depth = config['max_depth']
    return cls(n_rounds=int(config['n_rounds']),
               max_depth=None if max_depth is None else int(max_depth),
               min_samples_leaf=int(config['min_samples_leaf']),
               shrinkage=float(config['shrinkage']),
               l2=float(config['l2']))

  def fit(self, x: np.ndarray, y: np.ndarray,
          seed: int = 0) -> 'GradientBoostingRegressor':
    """Fits the ensemble; boosting is deterministic, so seed is unused."""
    del seed
    self.base_score = float(y.mean())
    prediction = np.full(y.shape[0], self.base_score)
    self.trees = []
    self.round_mse = []
    for round_index in range(self.n_rounds):
      residual = y - prediction
      tree = fit_tree(x, residual, max_depth=self.max_depth,
                      min_samples_leaf=self.min_samples_leaf, l2=self.l2)
      self.trees.append(tree)
      prediction = prediction + self.shrinkage * tree.predict(x)
      mse = float(np.mean((y - prediction) ** 2))
      self.round_mse.append(mse)
      logging.debug('Boosting round %d: training MSE %.6g.', round_index, mse)
    return self

  def predict(self, x: np.ndarray) -> np.ndarray:
    prediction = np.full(x.shape[0], self.base_score)
    for tree in self.trees:
      prediction = prediction + self.shrinkage * tree.predict(x)
    return prediction

  def feature_importances(self, num_features: int) -> np.ndarray:
    return np.sum([t.feature_importances(num_features) for t in self.trees],
                  axis=0)

  def summary(self) -> Dict[str, Any]:
    return {'rounds': len(self.trees), 'round_mse': list(self.round_mse)}

  def to_dict(self) -> Dict[str, Any]:
    return {'base_score': self.base_score,
            'trees': [t.to_dict() for t in self.trees]}

  @classmethod
  def from_dict(cls, d: Mapping[str, Any],
                config: Mapping[str, Any]) -> 'GradientBoostingRegressor':
    model = cls.from_config(config)
    model.base_score = float(d['base_score'])
    model.trees = [RegressionTree.from_dict(t) for t in d['trees']]
    if not model.trees:
      raise ValueError('Boosted ensemble has no trees.')
    return model
