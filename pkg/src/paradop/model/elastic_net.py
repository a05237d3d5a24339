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

"""Elastic net linear regression fit by cyclic coordinate descent.

Features are z-scored internally and the target is centered, so the
intercept is not penalized. The minimized objective is

  (1 / 2n) * ||y - Xw||^2 + alpha * (l1_ratio * |w|_1
                                     + (1 - l1_ratio) / 2 * |w|_2^2)

Coefficients are also exposed in raw feature space.
"""

import dataclasses
from typing import Any, Dict, List, Mapping, Tuple

from absl import logging
import numpy as np


def soft_threshold(value: float, threshold: float) -> float:
  if value > threshold:
    return value - threshold
  if value < -threshold:
    return value + threshold
  return 0.


def _objective(w: np.ndarray, gram: np.ndarray, corr: np.ndarray,
               y_sq: float, alpha: float, l1_ratio: float) -> float:
  rss_half = 0.5 * (y_sq - 2. * corr @ w + w @ gram @ w)
  penalty = alpha * (l1_ratio * np.abs(w).sum() +
                     0.5 * (1. - l1_ratio) * (w @ w))
  return float(rss_half + penalty)


def coordinate_descent(
    gram: np.ndarray, corr: np.ndarray, y_sq: float, alpha: float,
    l1_ratio: float, tol: float,
    max_iter: int) -> Tuple[np.ndarray, List[float], bool]:
  """Minimizes the elastic net objective over precomputed statistics.

  Args:
    gram: X^T X / n for the standardized features.
    corr: X^T y / n for the centered target.
    y_sq: y^T y / n for the centered target.
    alpha: Regularization strength.
    l1_ratio: Share of the L1 penalty.
    tol: Convergence threshold on the largest coefficient change in a sweep.
    max_iter: Maximum number of sweeps.

  Returns:
    Tuple of (coefficients, objective after every sweep, converged).
  """
  num_features = corr.shape[0]
  w = np.zeros(num_features)
  l1 = alpha * l1_ratio
  l2 = alpha * (1. - l1_ratio)
  history = []
  converged = False
  # gram @ w, updated in place as coordinates move.
  gram_w = np.zeros(num_features)
  for sweep in range(max_iter):
    max_change = 0.
    for j in range(num_features):
      denominator = gram[j, j] + l2
      if denominator <= 0.:
        continue
      old = w[j]
      rho = corr[j] - gram_w[j] + gram[j, j] * old
      new = soft_threshold(rho, l1) / denominator
      if new != old:
        gram_w += gram[:, j] * (new - old)
        w[j] = new
        max_change = max(max_change, abs(new - old))
    history.append(_objective(w, gram, corr, y_sq, alpha, l1_ratio))
    logging.debug('Elastic net sweep %d: objective %.6g, max change %.3g.',
                  sweep, history[-1], max_change)
    if max_change < tol:
      converged = True
      break
  return w, history, converged


@dataclasses.dataclass
class ElasticNetRegressor:
  """Linear model with combined L1 and L2 penalties.

  Attributes:
    alpha: Regularization strength.
    l1_ratio: Share of the L1 penalty.
    tol: Convergence threshold on coefficient changes.
    max_iter: Maximum number of coordinate descent sweeps.
  """
  alpha: float = 0.1
  l1_ratio: float = 0.5
  tol: float = 1e-6
  max_iter: int = 10000
  feature_mean: np.ndarray = dataclasses.field(default=None, repr=False)
  feature_scale: np.ndarray = dataclasses.field(default=None, repr=False)
  coefficients: np.ndarray = dataclasses.field(default=None, repr=False)
  intercept: float = 0.
  objective_history: List[float] = dataclasses.field(
      default_factory=list, repr=False)
  converged: bool = False

  @classmethod
  def from_config(cls, config: Mapping[str, Any]) -> 'ElasticNetRegressor':
    return cls(alpha=float(config['alpha']),
               l1_ratio=float(config['l1_ratio']),
               tol=float(config['tol']),
               max_iter=int(config['max_iter']))

  def fit(self, x: np.ndarray, y: np.ndarray,
          seed: int = 0) -> 'ElasticNetRegressor':
    """Fits the model; seed is accepted for interface parity and unused."""
    del seed
    n = x.shape[0]
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.] = 1.
    z = (x - mean) / scale
    y_mean = float(y.mean())
    yc = y - y_mean
    gram = z.T @ z / n
    corr = z.T @ yc / n
    w, history, converged = coordinate_descent(
        gram, corr, float(yc @ yc / n), self.alpha, self.l1_ratio, self.tol,
        self.max_iter)
    if not converged:
      logging.warning('Elastic net did not converge in %d sweeps.',
                      self.max_iter)
    self.feature_mean = mean
    self.feature_scale = scale
    self.coefficients = w / scale
    self.intercept = y_mean - float(self.coefficients @ mean)
    self.objective_history = history
    self.converged = converged
    return self

  @property
  def standardized_coefficients(self) -> np.ndarray:
    return self.coefficients * self.feature_scale

  def predict(self, x: np.ndarray) -> np.ndarray:
    return x @ self.coefficients + self.intercept

  def summary(self) -> Dict[str, Any]:
    return {'sweeps': len(self.objective_history),
            'converged': self.converged,
            'objective_history': list(self.objective_history)}

  def to_dict(self) -> Dict[str, Any]:
    return {
        'feature_mean': self.feature_mean.tolist(),
        'feature_scale': self.feature_scale.tolist(),
        'coefficients': self.coefficients.tolist(),
        'intercept': self.intercept,
    }

  @classmethod
  def from_dict(cls, d: Mapping[str, Any],
                config: Mapping[str, Any]) -> 'ElasticNetRegressor':
    model = cls.from_config(config)
    model.feature_mean = np.asarray(d['feature_mean'], dtype=np.float64)
    model.feature_scale = np.asarray(d['feature_scale'], dtype=np.float64)
    model.coefficients = np.asarray(d['coefficients'], dtype=np.float64)
    model.intercept = float(d['intercept'])
    return model
