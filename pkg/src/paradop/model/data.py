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

"""Training datasets, plan corpora and latency grids.

A corpus is a directory holding the plans of one workload and the latency
measured for every plan at every DOP:

  <corpus>/plans.jsonl     one plan document per line
  <corpus>/latencies.csv   plan_id,dop,latency_ms

A dataset is a corpus after featurization: one TrainingPoint per
(plan, dop) cell.
"""

import dataclasses
import os
from typing import Iterable, List, Optional, Sequence, Tuple

from absl import logging
import numpy as np
import pandas as pd
from paradop import featurization
from paradop import plan as plan_lib
from paradop import utils

DEFAULT_DOP_SET = (1, 2, 4, 8, 16, 20, 32, 40, 64, 80)
LATENCY_COLUMNS = ['plan_id', 'dop', 'latency_ms']
PLANS_FILE = 'plans.jsonl'
LATENCIES_FILE = 'latencies.csv'


class EmptyDatasetError(utils.ParadopError, ValueError):
  """Raised when training or evaluation receives no points."""

  def __init__(self, what: str = 'dataset'):
    super().__init__(f'The {what} is empty.')


class DimensionMismatchError(utils.ParadopError, ValueError):
  """Raised when feature vectors do not have the expected dimension."""

  def __init__(self, expected: int, actual: int):
    super().__init__(
        f'Expected feature dimension {expected}, got {actual}.')
    self.expected = expected
    self.actual = actual


class NonFiniteTargetError(utils.ParadopError, ValueError):
  """Raised when a training target is NaN or infinite."""


class MalformedLatencyError(utils.ParadopError, ValueError):
  """Raised when a latency grid has bad columns, DOPs or values."""


def normalize_dop_set(dop_set: Iterable[int]) -> Tuple[int, ...]:
  """Returns the DOPs sorted and deduplicated, validating each one."""
  dops = sorted({featurization.check_dop(d) for d in dop_set})
  if not dops:
    raise MalformedLatencyError('The DOP set is empty.')
  return tuple(dops)


@dataclasses.dataclass(frozen=True)
class Dataset:
  """Featurized (plan, dop) points with measured latencies.

  Attributes:
    points: Training points; every point's DOP slot is set.
    dop_set: Sorted DOPs the points were measured at.
  """
  points: Tuple[featurization.TrainingPoint, ...]
  dop_set: Tuple[int, ...] = DEFAULT_DOP_SET

  def __post_init__(self):
    object.__setattr__(self, 'points', tuple(self.points))
    object.__setattr__(self, 'dop_set', normalize_dop_set(self.dop_set))
    allowed = set(self.dop_set)
    for point in self.points:
      if point.dop not in allowed:
        raise MalformedLatencyError(
            f'Point for plan {point.plan_id} has DOP {point.dop} outside the '
            f'DOP set {list(self.dop_set)}.')

  def __len__(self) -> int:
    return len(self.points)

  @property
  def registry_fingerprint(self) -> Optional[str]:
    if not self.points:
      return None
    return self.points[0].features.registry_fingerprint

  @property
  def dimension(self) -> int:
    if not self.points:
      raise EmptyDatasetError()
    return self.points[0].features.dimension

  def plan_ids(self) -> np.ndarray:
    return np.array([p.plan_id for p in self.points], dtype=object)

  def features(self) -> np.ndarray:
    """Returns the (n, dimension) feature matrix.

    Raises:
      EmptyDatasetError if there are no points.
      DimensionMismatchError if the vectors have different dimensions.
    """
    if not self.points:
      raise EmptyDatasetError()
    dimension = self.dimension
    for point in self.points:
      if point.features.dimension != dimension:
        raise DimensionMismatchError(dimension, point.features.dimension)
    return np.stack([p.features.values for p in self.points])

  def targets(self) -> np.ndarray:
    y = np.array([p.latency_ms for p in self.points], dtype=np.float64)
    if not np.all(np.isfinite(y)):
      bad = self.points[int(np.flatnonzero(~np.isfinite(y))[0])]
      raise NonFiniteTargetError(
          f'Latency of plan {bad.plan_id} at DOP {bad.dop} is not finite.')
    return y

  def subset(self, indices: Sequence[int]) -> 'Dataset':
    return Dataset(points=tuple(self.points[i] for i in indices),
                   dop_set=self.dop_set)

  def select_plans(self, plan_ids: Iterable[str]) -> 'Dataset':
    wanted = set(plan_ids)
    return Dataset(
        points=tuple(p for p in self.points if p.plan_id in wanted),
        dop_set=self.dop_set)


def validate_latencies(frame: pd.DataFrame) -> pd.DataFrame:
  """Checks a latency frame and returns it sorted by (plan_id, dop).

  Args:
    frame: DataFrame with columns plan_id, dop and latency_ms.

  Returns:
    A sorted copy with plan_id as str, dop as int and latency_ms as float.

  Raises:
    MalformedLatencyError if a column is missing, a DOP is below 1, a
    latency is not a positive finite number, or a cell appears twice.
  """
  missing = [c for c in LATENCY_COLUMNS if c not in frame.columns]
  if missing:
    raise MalformedLatencyError(f'Latency grid is missing columns {missing}.')
  frame = frame[LATENCY_COLUMNS].copy()
  frame['plan_id'] = frame['plan_id'].astype(str)
  try:
    frame['dop'] = frame['dop'].astype(np.int64)
    frame['latency_ms'] = frame['latency_ms'].astype(np.float64)
  except (TypeError, ValueError) as e:
    raise MalformedLatencyError(f'Latency grid has bad values: {e}') from e
  if (frame['dop'] < 1).any():
    raise MalformedLatencyError('Latency grid has a DOP below 1.')
  latency = frame['latency_ms'].to_numpy()
  if not np.all(np.isfinite(latency)) or (latency <= 0).any():
    raise MalformedLatencyError(
        'Every latency must be a positive finite number of milliseconds.')
  duplicated = frame.duplicated(subset=['plan_id', 'dop'])
  if duplicated.any():
    row = frame[duplicated].iloc[0]
    raise MalformedLatencyError(
        f'Latency for plan {row.plan_id} at DOP {row.dop} appears twice.')
  return frame.sort_values(['plan_id', 'dop']).reset_index(drop=True)


def read_latencies(path: str) -> pd.DataFrame:
  frame = pd.read_csv(path, dtype={'plan_id': str}, keep_default_na=False)
  return validate_latencies(frame)


def write_latencies(frame: pd.DataFrame, path: str) -> None:
  utils.ensure_dir(os.path.dirname(path))
  validate_latencies(frame).to_csv(path, index=False)


@dataclasses.dataclass(frozen=True, eq=False)
class Corpus:
  """Plans of one workload together with their latency grid."""
  plans: Tuple[plan_lib.QueryPlan, ...]
  latencies: pd.DataFrame

  def __post_init__(self):
    plans = tuple(sorted(self.plans, key=lambda p: p.plan_id))
    object.__setattr__(self, 'plans', plans)
    object.__setattr__(self, 'latencies', validate_latencies(self.latencies))
    by_id = {}
    for p in plans:
      if p.plan_id in by_id:
        raise plan_lib.MalformedDocumentError(
            f'Plan id {p.plan_id} appears twice in the corpus.')
      by_id[p.plan_id] = p
    object.__setattr__(self, '_by_id', by_id)
    unknown = sorted(set(self.latencies['plan_id']) - set(by_id))
    if unknown:
      raise MalformedLatencyError(
          f'Latency grid references {len(unknown)} unknown plans, e.g. '
          f'{unknown[0]}.')

  def __len__(self) -> int:
    return len(self.plans)

  def plan(self, plan_id: str) -> plan_lib.QueryPlan:
    return self._by_id[plan_id]

  @property
  def plan_ids(self) -> List[str]:
    return [p.plan_id for p in self.plans]

  @property
  def dop_set(self) -> Tuple[int, ...]:
    return tuple(sorted(int(d) for d in self.latencies['dop'].unique()))

  @property
  def corpus_ids(self) -> List[str]:
    return sorted({p.corpus_id for p in self.plans if p.corpus_id})

  def latency_grid(self) -> pd.DataFrame:
    """Returns latencies pivoted to one row per plan and one column per DOP."""
    return self.latencies.pivot(index='plan_id', columns='dop',
                                values='latency_ms')

  def select_plans(self, plan_ids: Iterable[str]) -> 'Corpus':
    wanted = set(plan_ids)
    return Corpus(
        plans=tuple(p for p in self.plans if p.plan_id in wanted),
        latencies=self.latencies[self.latencies['plan_id'].isin(wanted)])

  def save(self, directory: str) -> None:
    utils.ensure_dir(directory)
    plan_lib.write_plans_file(os.path.join(directory, PLANS_FILE), self.plans)
    write_latencies(self.latencies, os.path.join(directory, LATENCIES_FILE))

  @classmethod
  def load(cls, directory: str) -> 'Corpus':
    plans = plan_lib.read_plans_file(os.path.join(directory, PLANS_FILE))
    latencies = read_latencies(os.path.join(directory, LATENCIES_FILE))
    corpus = cls(plans=tuple(plans), latencies=latencies)
    logging.info('Loaded corpus %s: %d plans, %d latency cells.', directory,
                 len(corpus.plans), len(corpus.latencies))
    return corpus


def merge_corpora(corpora: Sequence[Corpus]) -> Corpus:
  return Corpus(
      plans=tuple(p for c in corpora for p in c.plans),
      latencies=pd.concat([c.latencies for c in corpora], ignore_index=True))


def featurize_corpus(
    corpus: Corpus,
    registry: featurization.FeatureRegistry,
    dop_set: Optional[Sequence[int]] = None) -> Dataset:
  """Featurizes every (plan, dop) latency cell of a corpus.

  Args:
    corpus: Corpus to featurize.
    registry: Registry fixing the feature layout.
    dop_set: DOPs to keep. Defaults to every DOP in the latency grid; cells
      at other DOPs are dropped.

  Returns:
    Dataset ordered by (plan_id, dop).
  """
  dop_set = normalize_dop_set(dop_set or corpus.dop_set)
  allowed = set(dop_set)
  vectors = featurization.featurize_many(corpus.plans, registry)
  points = []
  for plan_id, dop, latency_ms in corpus.latencies.itertuples(index=False):
    if dop not in allowed:
      continue
    p = corpus.plan(plan_id)
    points.append(featurization.TrainingPoint(
        features=featurization.attach_dop(vectors[plan_id], int(dop)),
        dop=int(dop),
        latency_ms=float(latency_ms),
        plan_id=plan_id,
        template_id=p.template_id,
        corpus_id=p.corpus_id))
  return Dataset(points=tuple(points), dop_set=dop_set)


def dataset_from_frames(features: pd.DataFrame, latencies: pd.DataFrame,
                        registry: featurization.FeatureRegistry) -> Dataset:
  """Joins a feature matrix with a latency grid on (plan_id, dop).

  Args:
    features: Frame written by featurization.write_feature_matrix.
    latencies: Latency grid.
    registry: Registry the feature matrix was built with.

  Returns:
    Dataset with one point per joined row.

  Raises:
    EmptyDatasetError if no row joins.
  """
  latencies = validate_latencies(latencies)
  names = registry.slot_names()
  features = features.astype({'dop': np.int64})
  joined = features.merge(latencies, on=['plan_id', 'dop'], how='inner')
  if joined.empty:
    raise EmptyDatasetError('join of features and latencies')
  dropped = len(features) - len(joined)
  if dropped:
    logging.warning('%d feature rows have no measured latency.', dropped)
  joined = joined.sort_values(['plan_id', 'dop']).reset_index(drop=True)
  matrix = joined[names].to_numpy(dtype=np.float64)
  points = []
  for i, row in enumerate(joined.itertuples(index=False)):
    points.append(featurization.TrainingPoint(
        features=featurization.FeatureVector(
            values=matrix[i], registry_fingerprint=registry.fingerprint),
        dop=int(row.dop),
        latency_ms=float(row.latency_ms),
        plan_id=str(row.plan_id),
        template_id=row.template_id or None,
        corpus_id=row.corpus_id or None))
  return Dataset(points=tuple(points),
                 dop_set=sorted(set(joined['dop'].tolist())))
