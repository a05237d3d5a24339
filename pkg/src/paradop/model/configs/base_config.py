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

"""Base hyper-parameter configurations for the latency models.

Every model kind has a ConfigDict of defaults. User overrides are applied to
a locked copy, so misspelled names and values of the wrong type are rejected
before any training starts.
"""

from typing import Any, Mapping, Optional

import ml_collections
from ml_collections import config_dict
from paradop import utils

ELASTIC_NET = 'elastic_net'
RANDOM_FOREST = 'random_forest'
GRADIENT_BOOSTING = 'gradient_boosting'

MAX_TREES = 1000


class InvalidHyperparameterError(utils.ParadopError, ValueError):
  """Raised when a hyper-parameter is unknown or out of range."""


def get_elastic_net_config() -> ml_collections.ConfigDict:
  """Get elastic net config."""
  config = ml_collections.ConfigDict()
  # Overall regularization strength. 0 gives ordinary least squares.
  config.alpha = 0.1
  # Share of the L1 penalty; 1 is the lasso, 0 is ridge.
  config.l1_ratio = 0.5
  # Coordinate descent stops once no coefficient moves more than tol.
  config.tol = 1e-6
  config.max_iter = 10000
  return config


def get_random_forest_config() -> ml_collections.ConfigDict:
  """Get random forest config."""
  config = ml_collections.ConfigDict()
  config.n_trees = 100
  # Unset means trees grow until leaves are pure or min_samples_leaf binds.
  config.max_depth = config_dict.placeholder(int)
  config.min_samples_leaf = 1
  # Fraction of the features considered at every split.
  config.feature_fraction = 1. / 3.
  config.bootstrap = True
  # Trees are fit in a process pool when above 1.
  config.num_workers = 0
  return config


def get_gradient_boosting_config() -> ml_collections.ConfigDict:
  """Get gradient boosting config."""
  config = ml_collections.ConfigDict()
  config.n_rounds = 100
  config.max_depth = 6
  config.min_samples_leaf = 1
  config.shrinkage = 0.1
  # L2 penalty on leaf values.
  config.l2 = 1.0
  return config


_CONFIG_GETTERS = {
    ELASTIC_NET: get_elastic_net_config,
    RANDOM_FOREST: get_random_forest_config,
    GRADIENT_BOOSTING: get_gradient_boosting_config,
}


def get_model_config(kind: str) -> ml_collections.ConfigDict:
  if kind not in _CONFIG_GETTERS:
    raise InvalidHyperparameterError(
        f'Unknown model kind: {kind}\nPossible choices: '
        f'{sorted(_CONFIG_GETTERS)}')
  return _CONFIG_GETTERS[kind]()


def _check_range(name: str, value: Any, low: Optional[float] = None,
                 high: Optional[float] = None, low_open: bool = False) -> None:
  if low is not None and (value <= low if low_open else value < low):
    raise InvalidHyperparameterError(
        f'{name} must be {">" if low_open else ">="} {low}, got {value}.')
  if high is not None and value > high:
    raise InvalidHyperparameterError(
        f'{name} must be <= {high}, got {value}.')


def check_hyperparams(kind: str, config: ml_collections.ConfigDict) -> None:
  """Checks validity of hyper-parameter values for a model kind."""
  if kind == ELASTIC_NET:
    _check_range('alpha', config.alpha, low=0.)
    _check_range('l1_ratio', config.l1_ratio, low=0., high=1.)
    _check_range('tol', config.tol, low=0., low_open=True)
    _check_range('max_iter', config.max_iter, low=1)
  elif kind in (RANDOM_FOREST, GRADIENT_BOOSTING):
    if kind == RANDOM_FOREST:
      _check_range('n_trees', config.n_trees, low=1, high=MAX_TREES)
      _check_range('feature_fraction', config.feature_fraction, low=0.,
                   high=1., low_open=True)
      _check_range('num_workers', config.num_workers, low=0)
    else:
      _check_range('n_rounds', config.n_rounds, low=1, high=MAX_TREES)
      _check_range('shrinkage', config.shrinkage, low=0., high=1.,
                   low_open=True)
      _check_range('l2', config.l2, low=0.)
    if config.max_depth is not None:
      _check_range('max_depth', config.max_depth, low=1)
    _check_range('min_samples_leaf', config.min_samples_leaf, low=1)
  else:
    raise InvalidHyperparameterError(f'Unknown model kind: {kind}')


def resolve_hyperparams(
    kind: str,
    overrides: Optional[Mapping[str, Any]] = None) -> ml_collections.ConfigDict:
  """Returns the defaults for a kind with overrides applied and checked.

  Args:
    kind: Model kind name.
    overrides: Hyper-parameter values replacing the defaults.

  Returns:
    Locked ConfigDict.

  Raises:
    InvalidHyperparameterError if an override is unknown, has the wrong type
    or is out of range.
  """
  config = get_model_config(kind)
  config.lock()
  try:
    config.update(dict(overrides or {}))
  except (AttributeError, KeyError, TypeError) as e:
    raise InvalidHyperparameterError(
        f'Bad hyper-parameter for {kind}: {e}') from e
  check_hyperparams(kind, config)
  return config
