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

"""Library of latency models f(ftr(P), d) -> latency_ms.

Every model kind is a registered estimator class with fit/predict and a
dictionary form. A Model wraps a fitted estimator together with the spec it
was trained from and the fingerprint of the feature registry it expects.
"""

import dataclasses
import enum
import itertools
import json
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from absl import logging
import ml_collections
import numpy as np
import pandas as pd
from paradop import featurization
from paradop import utils
from paradop.model import data as data_lib
from paradop.model import elastic_net
from paradop.model import trees
from paradop.model.configs import base_config
from sklearn import metrics as sklearn_metrics
from sklearn import model_selection

MODEL_REGISTRY = {}
MODEL_FORMAT = 'paradop-model'
MODEL_FORMAT_VERSION = '1.0'
# exp() of anything larger overflows a float64.
_MAX_LOG_PREDICTION = float(np.log(np.finfo(np.float64).max))

InvalidHyperparameterError = base_config.InvalidHyperparameterError


class TooFewPointsForFoldsError(utils.ParadopError, ValueError):
  """Raised when cross validation asks for more folds than points."""

  def __init__(self, folds: int, points: int):
    super().__init__(
        f'Cannot split {points} points into {folds} folds.')
    self.folds = folds
    self.points = points


class VersionMismatchError(utils.ParadopError):
  """Raised when a model file is from a newer format or another registry."""


class CorruptModelError(utils.ParadopError):
  """Raised when a model file cannot be decoded."""


def register_model(name: str):
  """Provides decorator to register model classes."""
  def save(model_class):
    MODEL_REGISTRY[name] = model_class
    return model_class

  return save


def get_model(name: str):
  """Retrieves model class based on name."""
  if name not in MODEL_REGISTRY:
    raise InvalidHyperparameterError(
        f'Unknown model: {name}\nPossible choices: {sorted(MODEL_REGISTRY)}')
  return MODEL_REGISTRY[name]


register_model(base_config.ELASTIC_NET)(elastic_net.ElasticNetRegressor)
register_model(base_config.RANDOM_FOREST)(trees.RandomForestRegressor)
register_model(base_config.GRADIENT_BOOSTING)(
    trees.GradientBoostingRegressor)


class ModelKind(enum.Enum):
  ELASTIC_NET = base_config.ELASTIC_NET
  RANDOM_FOREST = base_config.RANDOM_FOREST
  GRADIENT_BOOSTING = base_config.GRADIENT_BOOSTING


class TargetSpace(enum.Enum):
  """Space the regressor is fit in; LOG fits log(latency_ms)."""
  RAW = 'raw'
  LOG = 'log'


@dataclasses.dataclass(frozen=True)
class ModelSpec:
  """What to train.

  Attributes:
    kind: Model family.
    hyperparams: Overrides of the family's defaults in base_config.
    seed: Seed for every random draw made while training.
    target_space: Whether to fit raw or log-transformed latencies.
  """
  kind: ModelKind
  hyperparams: Mapping[str, Any] = dataclasses.field(default_factory=dict)
  seed: int = 0
  target_space: TargetSpace = TargetSpace.RAW

  def __post_init__(self):
    try:
      object.__setattr__(self, 'kind', ModelKind(self.kind))
      object.__setattr__(self, 'target_space',
                         TargetSpace(self.target_space))
    except ValueError as e:
      raise InvalidHyperparameterError(str(e)) from e
    object.__setattr__(self, 'hyperparams', dict(self.hyperparams))
    object.__setattr__(self, 'seed', int(self.seed))
    # Rejects unknown or out-of-range hyper-parameters.
    self.resolved_hyperparams()

  def resolved_hyperparams(self) -> ml_collections.ConfigDict:
    return base_config.resolve_hyperparams(self.kind.value, self.hyperparams)

  @property
  def label(self) -> str:
    overrides = ','.join(
        f'{k}={v}' for k, v in sorted(self.hyperparams.items()))
    return f'{self.kind.value}({overrides})'

  def to_dict(self) -> Dict[str, Any]:
    return {
        'kind': self.kind.value,
        'hyperparams': self.resolved_hyperparams().to_dict(),
        'seed': self.seed,
        'target_space': self.target_space.value,
    }

  @classmethod
  def from_dict(cls, d: Mapping[str, Any]) -> 'ModelSpec':
    return cls(kind=d['kind'],
               hyperparams=d.get('hyperparams', {}),
               seed=d.get('seed', 0),
               target_space=d.get('target_space', TargetSpace.RAW.value))


@dataclasses.dataclass
class Model:
  """A trained latency model.

  Attributes:
    spec: Spec the model was trained from.
    registry_fingerprint: Fingerprint of the registry of the training data.
    dimension: Feature dimension including the DOP slot.
    estimator: Fitted estimator of the spec's kind.
    training_summary: Training MAE and per-kind fitting statistics.
  """
  spec: ModelSpec
  registry_fingerprint: str
  dimension: int
  estimator: Any
  training_summary: Dict[str, Any] = dataclasses.field(default_factory=dict)

  def predict_matrix(self, x: np.ndarray) -> np.ndarray:
    """Predicts latency_ms for every row of a feature matrix."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != self.dimension:
      raise data_lib.DimensionMismatchError(self.dimension, x.shape[1])
    raw = self.estimator.predict(x)
    if self.spec.target_space == TargetSpace.LOG:
      return np.exp(np.minimum(raw, _MAX_LOG_PREDICTION))
    return np.maximum(raw, 0.)

  def feature_importances(self) -> Optional[np.ndarray]:
    if hasattr(self.estimator, 'feature_importances'):
      return self.estimator.feature_importances(self.dimension)
    return None


def train(spec: ModelSpec, dataset: data_lib.Dataset) -> Model:
  """Trains a model of the spec's kind minimizing squared error.

  Args:
    spec: What to train.
    dataset: Training points.

  Returns:
    The trained model.

  Raises:
    EmptyDatasetError if the dataset has no points.
    DimensionMismatchError if the feature vectors differ in dimension.
    NonFiniteTargetError if a latency is not finite, or not positive when
      training in log space.
  """
  if not len(dataset):
    raise data_lib.EmptyDatasetError()
  x = dataset.features()
  y = dataset.targets()
  if spec.target_space == TargetSpace.LOG:
    if (y <= 0).any():
      raise data_lib.NonFiniteTargetError(
          'Log-space training needs positive latencies.')
    fit_y = np.log(y)
  else:
    fit_y = y
  config = spec.resolved_hyperparams()
  estimator = get_model(spec.kind.value).from_config(config)
  estimator.fit(x, fit_y, seed=spec.seed)
  model = Model(spec=spec,
                registry_fingerprint=dataset.registry_fingerprint,
                dimension=x.shape[1],
                estimator=estimator)
  training_mae = float(sklearn_metrics.mean_absolute_error(
      y, model.predict_matrix(x)))
  model.training_summary = {
      'training_mae': training_mae,
      'points': len(dataset),
      **estimator.summary(),
  }
  logging.info('Trained %s on %d points: training MAE %.4g ms.', spec.label,
               len(dataset), training_mae)
  return model


def predict(model: Model, x: featurization.FeatureVector) -> float:
  """Predicts latency_ms for one feature vector with its DOP slot set."""
  if x.dimension != model.dimension:
    raise data_lib.DimensionMismatchError(model.dimension, x.dimension)
  if x.registry_fingerprint != model.registry_fingerprint:
    logging.warning('Feature vector comes from a different registry than the '
                    'model was trained with.')
  return float(model.predict_matrix(x.values[None, :])[0])


def _to_bytes(d: Dict[str, Any]) -> bytes:
  return (utils.canonical_json(d) + '\n').encode('utf-8')


def save_model(model: Model) -> bytes:
  """Serializes a model to versioned JSON with sorted keys."""
  return _to_bytes({
      'format': MODEL_FORMAT,
      'version': MODEL_FORMAT_VERSION,
      'spec': model.spec.to_dict(),
      'registry_fingerprint': model.registry_fingerprint,
      'dimension': model.dimension,
      'parameters': model.estimator.to_dict(),
      'training_summary': model.training_summary,
  })


def _major(version: Any) -> int:
  try:
    return int(str(version).split('.')[0])
  except ValueError as e:
    raise CorruptModelError(f'Bad model format version {version!r}.') from e


def _check_slots(estimator: Any, dimension: int) -> None:
  """Raises ValueError if the estimator reads slots outside the dimension."""
  for tree in getattr(estimator, 'trees', ()):
    if tree.features.max() >= dimension:
      raise ValueError(f'Tree splits on a slot beyond dimension {dimension}.')
  coefficients = getattr(estimator, 'coefficients', None)
  if coefficients is not None and coefficients.shape != (dimension,):
    raise ValueError(f'Expected {dimension} coefficients, got '
                     f'{coefficients.shape[0]}.')


def load_model(data: bytes,
               expected_fingerprint: Optional[str] = None) -> Model:
  """Deserializes a model written by save_model.

  Args:
    data: Serialized model.
    expected_fingerprint: If set, the registry fingerprint the model must
      have been trained against.

  Returns:
    The model.

  Raises:
    CorruptModelError if the bytes are not a complete model document.
    VersionMismatchError if the document is from a newer major format
      version or was trained against a different registry.
  """
  try:
    d = json.loads(data.decode('utf-8'))
  except (UnicodeDecodeError, json.JSONDecodeError) as e:
    raise CorruptModelError(f'Model file cannot be decoded: {e}') from e
  if not isinstance(d, dict) or d.get('format') != MODEL_FORMAT:
    raise CorruptModelError('Not a paradop model document.')
  major = _major(d.get('version'))
  if major > _major(MODEL_FORMAT_VERSION):
    raise VersionMismatchError(
        f'Model format version {d["version"]} is newer than the supported '
        f'version {MODEL_FORMAT_VERSION}.')
  if (expected_fingerprint is not None and
      d.get('registry_fingerprint') != expected_fingerprint):
    raise VersionMismatchError(
        'Model was trained against a different feature registry.')
  try:
    spec = ModelSpec.from_dict(d['spec'])
    config = spec.resolved_hyperparams()
    estimator = get_model(spec.kind.value).from_dict(d['parameters'], config)
    model = Model(spec=spec,
                  registry_fingerprint=str(d['registry_fingerprint']),
                  dimension=int(d['dimension']),
                  estimator=estimator,
                  training_summary=dict(d.get('training_summary', {})))
    _check_slots(estimator, model.dimension)
    return model
  except (KeyError, TypeError, ValueError) as e:
    raise CorruptModelError(f'Model file is incomplete: {e!r}') from e


def write_model_file(model: Model, path: str) -> None:
  utils.write_bytes(save_model(model), path)


def read_model_file(path: str,
                    expected_fingerprint: Optional[str] = None) -> Model:
  return load_model(utils.read_bytes(path), expected_fingerprint)


def expand_grid(kind: str,
                grid: Mapping[str, Sequence[Any]],
                seed: int = 0,
                target_space: str = TargetSpace.RAW.value) -> List[ModelSpec]:
  """Returns one spec per combination of the grid's values.

  Args:
    kind: Model kind name.
    grid: Hyper-parameter name to candidate values. Names are expanded in
      sorted order, so the first spec takes every first value.
    seed: Seed of every spec.
    target_space: Target space of every spec.

  Returns:
    List of specs.
  """
  names = sorted(grid)
  specs = []
  for values in itertools.product(*(list(grid[n]) for n in names)):
    specs.append(ModelSpec(kind=kind, hyperparams=dict(zip(names, values)),
                           seed=seed, target_space=target_space))
  return specs


@dataclasses.dataclass
class CrossValidationReport:
  """Per-spec per-fold validation MAE of a grid search."""
  labels: List[str]
  fold_mae: np.ndarray
  grouped_by_plan: bool

  @property
  def mean_mae(self) -> np.ndarray:
    return self.fold_mae.mean(axis=1)

  @property
  def best_index(self) -> int:
    # argmin returns the first minimum, so ties go to the earlier spec.
    return int(np.argmin(self.mean_mae))

  def to_frame(self) -> pd.DataFrame:
    records = []
    for i, label in enumerate(self.labels):
      for fold, mae in enumerate(self.fold_mae[i]):
        records.append({'spec_index': i, 'spec': label, 'fold': fold,
                        'mae': float(mae)})
    return pd.DataFrame.from_records(
        records, columns=['spec_index', 'spec', 'fold', 'mae'])

  def to_dict(self) -> Dict[str, Any]:
    return {
        'grouped_by_plan': self.grouped_by_plan,
        'best_index': self.best_index,
        'specs': [{'spec': label,
                   'fold_mae': self.fold_mae[i].tolist(),
                   'mean_mae': float(self.mean_mae[i])}
                  for i, label in enumerate(self.labels)],
    }


def cross_validation_folds(
    dataset: data_lib.Dataset, folds: int,
    seed: int = 0) -> Tuple[List[Tuple[np.ndarray, np.ndarray]], bool]:
  """Splits point indices into folds, keeping each plan's rows together.

  Plans are the unit of splitting when there are at least `folds` of them;
  otherwise points are split individually.

  Args:
    dataset: Points to split.
    folds: Number of folds.
    seed: Shuffling seed.

  Returns:
    Tuple of ([(train indices, validation indices)], grouped_by_plan).
  """
  if not len(dataset):
    raise data_lib.EmptyDatasetError()
  if folds < 2:
    raise ValueError(f'Cross validation needs at least 2 folds, got {folds}.')
  if folds > len(dataset):
    raise TooFewPointsForFoldsError(folds, len(dataset))
  kfold = model_selection.KFold(n_splits=folds, shuffle=True,
                                random_state=seed % 2**32)
  plan_ids = dataset.plan_ids()
  plans = np.array(sorted(set(plan_ids.tolist())), dtype=object)
  if len(plans) >= folds:
    splits = []
    for train_plans, test_plans in kfold.split(plans):
      test_mask = np.isin(plan_ids, plans[test_plans])
      splits.append((np.flatnonzero(~test_mask), np.flatnonzero(test_mask)))
    return splits, True
  return list(kfold.split(np.arange(len(dataset)))), False


def grid_search(
    specs: Sequence[ModelSpec],
    dataset: data_lib.Dataset,
    folds: int = 5,
    seed: int = 0) -> Tuple[ModelSpec, CrossValidationReport]:
  """Picks the spec with the lowest mean validation MAE.

  Args:
    specs: Candidate specs; ties go to the earliest.
    dataset: Training points.
    folds: Number of cross validation folds.
    seed: Fold shuffling seed.

  Returns:
    Tuple of (best spec, report).

  Raises:
    EmptyDatasetError if the dataset has no points.
    TooFewPointsForFoldsError if folds exceeds the number of points.
  """
  if not specs:
    raise ValueError('Grid search needs at least one spec.')
  splits, grouped = cross_validation_folds(dataset, folds, seed)
  fold_mae = np.zeros((len(specs), len(splits)))
  for i, spec in enumerate(specs):
    for j, (train_idx, test_idx) in enumerate(splits):
      model = train(spec, dataset.subset(train_idx))
      held_out = dataset.subset(test_idx)
      fold_mae[i, j] = sklearn_metrics.mean_absolute_error(
          held_out.targets(), model.predict_matrix(held_out.features()))
    logging.info('Grid search %s: mean validation MAE %.4g ms.', spec.label,
                 fold_mae[i].mean())
  report = CrossValidationReport(labels=[s.label for s in specs],
                                 fold_mae=fold_mae, grouped_by_plan=grouped)
  return specs[report.best_index], report
