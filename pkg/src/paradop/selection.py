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

"""Per-query and per-workload DOP selection and speedup/costup curves.

Whenever two DOPs have the same latency the smaller one is chosen, since it
reaches that latency with fewer cores.
"""

import dataclasses
import enum
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence

from absl import logging
import numpy as np
import pandas as pd
from paradop import featurization
from paradop import plan as plan_lib
from paradop import utils
from paradop.model import models

WORKLOAD_TAG = '__workload__'
CURVE_COLUMNS = ['dop', 'speedup', 'costup', 'source']
CAPPED_CURVE_COLUMNS = ['cap', 'speedup', 'costup']


class EmptyDopSetError(utils.ParadopError, ValueError):
  """Raised when there is no DOP to choose from."""

  def __init__(self):
    super().__init__('The DOP set is empty.')


class EmptyWorkloadError(utils.ParadopError, ValueError):
  """Raised when a workload has no plans."""

  def __init__(self):
    super().__init__('The workload has no plans.')


class MissingBaselineError(utils.ParadopError, ValueError):
  """Raised when a curve's baseline DOP has no latency."""

  def __init__(self, baseline_dop: int):
    super().__init__(f'No latency at baseline DOP {baseline_dop}.')
    self.baseline_dop = baseline_dop


class MismatchedDopSetsError(utils.ParadopError, ValueError):
  """Raised when the rows of a workload cover different DOPs."""

  def __init__(self, first: Sequence[int], other: Sequence[int]):
    super().__init__(
        f'Workload rows cover different DOPs: {list(first)} and '
        f'{list(other)}.')


class NonPositiveLatencyError(utils.ParadopError, ValueError):
  """Raised when a latency that is divided by is not positive."""


class CurveSource(enum.Enum):
  PREDICTED = 'predicted'
  ACTUAL = 'actual'


def argmin_dop(row: Mapping[int, float]) -> int:
  """Returns the DOP of the smallest latency, preferring smaller DOPs."""
  if not row:
    raise EmptyDopSetError()
  return min(row, key=lambda d: (row[d], d))


def argmin_columns(grid: np.ndarray) -> np.ndarray:
  """Per-row argmin over columns sorted by ascending DOP.

  np.argmin returns the first minimum, which is the smallest DOP.
  """
  return np.argmin(grid, axis=1)


@dataclasses.dataclass(frozen=True)
class DopRecommendation:
  """A chosen DOP with the predicted row it was chosen from."""
  plan_id: str
  chosen_dop: int
  predicted_ms: float
  row: Dict[int, float]

  def to_dict(self) -> Dict[str, Any]:
    return {
        'plan_id': self.plan_id,
        'chosen_dop': self.chosen_dop,
        'predicted_ms': self.predicted_ms,
        'row': {str(d): v for d, v in sorted(self.row.items())},
    }


@dataclasses.dataclass(frozen=True)
class CurvePoint:
  dop: int
  speedup: float
  costup: float


@dataclasses.dataclass(frozen=True)
class SpeedupCurve:
  """Speedup and costup relative to a baseline DOP."""
  baseline_dop: int
  points: List[CurvePoint]
  source: CurveSource = CurveSource.PREDICTED

  def point(self, dop: int) -> CurvePoint:
    for p in self.points:
      if p.dop == dop:
        return p
    raise KeyError(dop)

  def to_frame(self) -> pd.DataFrame:
    return pd.DataFrame.from_records(
        [(p.dop, p.speedup, p.costup, self.source.value) for p in self.points],
        columns=CURVE_COLUMNS)


def recommend_row(plan_id: str, row: Mapping[int, float]) -> DopRecommendation:
  chosen = argmin_dop(row)
  return DopRecommendation(plan_id=plan_id, chosen_dop=chosen,
                           predicted_ms=float(row[chosen]),
                           row={int(d): float(v) for d, v in row.items()})


def sum_rows(rows: Sequence[Mapping[int, float]]) -> Dict[int, float]:
  """Sums latency rows DOP by DOP; every row must cover the same DOPs."""
  if not rows:
    raise EmptyWorkloadError()
  dops = set(rows[0])
  for row in rows[1:]:
    if set(row) != dops:
      raise MismatchedDopSetsError(sorted(dops), sorted(row))
  if not dops:
    raise EmptyDopSetError()
  return {d: float(np.sum([r[d] for r in rows])) for d in sorted(dops)}


def recommend_workload(
    rows: Mapping[str, Mapping[int, float]]) -> DopRecommendation:
  summed = sum_rows([rows[k] for k in sorted(rows)])
  return recommend_row(WORKLOAD_TAG, summed)


def predict_row(model: models.Model,
                registry: featurization.FeatureRegistry,
                plan: plan_lib.QueryPlan,
                dop_set: Sequence[int]) -> Dict[int, float]:
  """Predicts the plan's latency at every DOP of the set."""
  if not dop_set:
    raise EmptyDopSetError()
  vector = featurization.featurize(plan, registry)
  dops = sorted({featurization.check_dop(d) for d in dop_set})
  x = np.stack([featurization.attach_dop(vector, d).values for d in dops])
  return dict(zip(dops, model.predict_matrix(x).tolist()))


def select_per_query(model: models.Model,
                     registry: featurization.FeatureRegistry,
                     plan: plan_lib.QueryPlan,
                     dop_set: Sequence[int]) -> DopRecommendation:
  """Chooses the DOP minimizing the plan's predicted latency."""
  return recommend_row(plan.plan_id,
                       predict_row(model, registry, plan, dop_set))


def select_workload(model: models.Model,
                    registry: featurization.FeatureRegistry,
                    plans: Sequence[plan_lib.QueryPlan],
                    dop_set: Sequence[int]) -> DopRecommendation:
  """Chooses the single DOP minimizing the summed predicted latency."""
  if not plans:
    raise EmptyWorkloadError()
  rows = {p.plan_id: predict_row(model, registry, p, dop_set) for p in plans}
  return recommend_workload(rows)


def speedup_costup(
    row: Mapping[int, float],
    baseline_dop: int,
    cores: Optional[Mapping[int, float]] = None,
    source: CurveSource = CurveSource.PREDICTED) -> SpeedupCurve:
  """Builds the speedup/costup curve of one latency row.

  Cost is the number of provisioned cores times the latency.

  Args:
    row: Latency per DOP.
    baseline_dop: DOP everything is relative to.
    cores: Provisioned cores per DOP; defaults to the DOP itself.
    source: Whether the row is predicted or measured.

  Returns:
    The curve, ordered by DOP.

  Raises:
    MissingBaselineError if the row has no baseline latency.
    NonPositiveLatencyError if a latency is not positive.
  """
  if baseline_dop not in row:
    raise MissingBaselineError(baseline_dop)
  for dop, latency in row.items():
    if not latency > 0:
      raise NonPositiveLatencyError(
          f'Latency at DOP {dop} is {latency}; it must be positive.')
  cores = cores or {}
  base_latency = row[baseline_dop]
  base_cost = cores.get(baseline_dop, baseline_dop) * base_latency
  points = []
  for dop in sorted(row):
    latency = row[dop]
    speedup = 1. if dop == baseline_dop else base_latency / latency
    costup = (1. if dop == baseline_dop else
              cores.get(dop, dop) * latency / base_cost)
    points.append(CurvePoint(dop=int(dop), speedup=float(speedup),
                             costup=float(costup)))
  return SpeedupCurve(baseline_dop=baseline_dop, points=points, source=source)


def workload_curve(rows: Mapping[str, Mapping[int, float]],
                   baseline_dop: int,
                   source: CurveSource = CurveSource.PREDICTED,
                   cores: Optional[Mapping[int, float]] = None) -> SpeedupCurve:
  """Speedup/costup of the summed workload latency at one shared DOP."""
  return speedup_costup(sum_rows([rows[k] for k in sorted(rows)]),
                        baseline_dop, cores=cores, source=source)


def per_query_capped_curve(rows: Mapping[str, Mapping[int, float]],
                           dop_set: Sequence[int],
                           baseline_dop: int) -> pd.DataFrame:
  """Workload performance when each query picks its best DOP up to a cap.

  For every cap in the DOP set, each query takes the DOP of its lowest
  latency among DOPs <= cap. Speedup is the summed latency at the baseline
  DOP over the summed latency of those choices; costup compares the summed
  DOP * latency the same way.

  Args:
    rows: Latency row per plan.
    dop_set: DOPs to use as caps.
    baseline_dop: Shared DOP the workload is compared against.

  Returns:
    DataFrame with columns cap, speedup and costup, ordered by cap.
  """
  if not rows:
    raise EmptyWorkloadError()
  dops = sorted(dop_set)
  if not dops:
    raise EmptyDopSetError()
  plan_ids = sorted(rows)
  for plan_id in plan_ids:
    if baseline_dop not in rows[plan_id]:
      raise MissingBaselineError(baseline_dop)
  grid = np.array([[rows[p][d] for d in dops] for p in plan_ids])
  if not np.all(grid > 0):
    raise NonPositiveLatencyError('Every latency must be positive.')
  base = np.array([rows[p][baseline_dop] for p in plan_ids])
  base_time = base.sum()
  base_cost = (baseline_dop * base).sum()
  dop_array = np.array(dops, dtype=np.float64)
  records = []
  for width in range(1, len(dops) + 1):
    chosen = argmin_columns(grid[:, :width])
    latency = grid[np.arange(len(plan_ids)), chosen]
    records.append((dops[width - 1], float(base_time / latency.sum()),
                    float((dop_array[chosen] * latency).sum() / base_cost)))
  return pd.DataFrame.from_records(records, columns=CAPPED_CURVE_COLUMNS)


def select_for_budget(curve: SpeedupCurve, max_costup: float) -> int:
  """Returns the DOP with the largest speedup whose costup fits the budget.

  Ties go to the smaller DOP. If no DOP fits, the cheapest one is returned.

  Args:
    curve: Speedup/costup curve.
    max_costup: Largest acceptable costup.

  Returns:
    The chosen DOP.
  """
  if not curve.points:
    raise EmptyDopSetError()
  fitting = [p for p in curve.points if p.costup <= max_costup]
  if not fitting:
    cheapest = min(curve.points, key=lambda p: (p.costup, p.dop))
    logging.warning('No DOP has costup <= %.3g; using the cheapest DOP %d.',
                    max_costup, cheapest.dop)
    return cheapest.dop
  return min(fitting, key=lambda p: (-p.speedup, p.dop)).dop


def write_curves_csv(curves: Sequence[SpeedupCurve], path: str) -> None:
  utils.ensure_dir(os.path.dirname(path))
  frame = pd.concat([c.to_frame() for c in curves], ignore_index=True)
  frame.to_csv(path, index=False)


def write_recommendations_json(
    recommendations: Sequence[DopRecommendation], path: str) -> None:
  utils.write_json([r.to_dict() for r in recommendations], path)
