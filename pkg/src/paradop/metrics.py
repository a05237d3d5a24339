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

"""Prediction-quality and throughput metrics over latency grids.

All metrics take a LatencyTable holding the actual and predicted latency of
every plan at every DOP of the table's DOP set:

  mae    mean absolute error over all (plan, dop) cells
  rpe    per plan, mean over DOPs of |predicted - actual| / actual
  spe    per plan, mean over DOPs of the error in speedup over DOP 1
  tq     |W| / sum over plans of the smallest predicted latency
  tw     |W| / smallest summed predicted latency at one shared DOP

The realized_* variants charge the actual latency at the DOPs the
predictions choose; the oracle_* variants choose with actual latencies.
"""

import dataclasses
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence

from absl import logging
import numpy as np
import pandas as pd
from paradop import selection
from paradop import utils

DEFAULT_RPE_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_SPE_THRESHOLDS = (0.001, 0.005, 0.01, 0.05, 0.1)
DEFAULT_BASELINE_DOP = 64
TABLE_COLUMNS = ['plan_id', 'dop', 'actual_ms', 'predicted_ms']

NonPositiveLatencyError = selection.NonPositiveLatencyError


class IncompleteGridError(utils.ParadopError, ValueError):
  """Raised when a plan lacks a latency at some DOP of the set."""


class UnknownPlanError(utils.ParadopError, KeyError):
  """Raised when a plan id is not in the table."""


class MissingBaselineDopError(utils.ParadopError, ValueError):
  """Raised when a metric needs a DOP the table does not have."""

  def __init__(self, dop: int):
    super().__init__(f'The DOP set does not contain DOP {dop}.')
    self.dop = dop


class PredictedBaselineZeroError(utils.ParadopError, ValueError):
  """Raised when a predicted DOP-1 latency of zero would divide SPE."""


class EmptyValuesError(utils.ParadopError, ValueError):
  """Raised when a distribution is computed over no values."""


class LatencyTable:
  """Actual and predicted latency per (plan, dop).

  Attributes:
    frame: Rows of plan_id, dop, actual_ms, predicted_ms sorted by plan and
      DOP.
    dop_set: DOPs every plan should have.
  """

  def __init__(self, frame: pd.DataFrame,
               dop_set: Optional[Sequence[int]] = None):
    missing = [c for c in TABLE_COLUMNS if c not in frame.columns]
    if missing:
      raise ValueError(f'Latency table is missing columns {missing}.')
    frame = frame[TABLE_COLUMNS].copy()
    frame['plan_id'] = frame['plan_id'].astype(str)
    frame['dop'] = frame['dop'].astype(np.int64)
    frame['actual_ms'] = frame['actual_ms'].astype(np.float64)
    frame['predicted_ms'] = frame['predicted_ms'].astype(np.float64)
    actual = frame['actual_ms'].to_numpy()
    if not np.all(np.isfinite(actual)) or (actual <= 0).any():
      raise NonPositiveLatencyError(
          'Every actual latency must be positive and finite.')
    predicted = frame['predicted_ms'].to_numpy()
    if not np.all(np.isfinite(predicted)) or (predicted < 0).any():
      raise ValueError('Every predicted latency must be finite and >= 0.')
    if frame.duplicated(subset=['plan_id', 'dop']).any():
      raise ValueError('Latency table has a (plan_id, dop) cell twice.')
    self.frame = frame.sort_values(['plan_id', 'dop']).reset_index(drop=True)
    if dop_set is None:
      dop_set = self.frame['dop'].unique().tolist()
    self.dop_set = tuple(sorted(int(d) for d in dop_set))
    self.plan_ids = sorted(self.frame['plan_id'].unique().tolist())

  @classmethod
  def from_frame(cls, frame: pd.DataFrame,
                 dop_set: Optional[Sequence[int]] = None) -> 'LatencyTable':
    return cls(frame, dop_set)

  @classmethod
  def from_grids(cls,
                 actual: Mapping[str, Mapping[int, float]],
                 predicted: Mapping[str, Mapping[int, float]],
                 dop_set: Optional[Sequence[int]] = None) -> 'LatencyTable':
    """Builds a table from per-plan rows; cells need both values."""
    records = []
    for plan_id in sorted(actual):
      for dop in sorted(actual[plan_id]):
        if dop in predicted.get(plan_id, {}):
          records.append((plan_id, dop, actual[plan_id][dop],
                          predicted[plan_id][dop]))
    return cls(pd.DataFrame.from_records(records, columns=TABLE_COLUMNS),
               dop_set)

  def __len__(self) -> int:
    return len(self.plan_ids)

  def _grid(self, column: str) -> np.ndarray:
    grid = self.frame.pivot(index='plan_id', columns='dop', values=column)
    grid = grid.reindex(index=self.plan_ids, columns=list(self.dop_set))
    values = grid.to_numpy(dtype=np.float64)
    if np.isnan(values).any():
      plan_index, dop_index = np.argwhere(np.isnan(values))[0]
      raise IncompleteGridError(
          f'Plan {self.plan_ids[plan_index]} has no latency at DOP '
          f'{self.dop_set[dop_index]}.')
    return values

  def actual_grid(self) -> np.ndarray:
    """Returns actual latencies as (plans, dops) in plan and DOP order."""
    return self._grid('actual_ms')

  def predicted_grid(self) -> np.ndarray:
    return self._grid('predicted_ms')

  def rows(self, plan_id: str) -> Dict[str, Dict[int, float]]:
    """Returns the actual and predicted row of one plan."""
    if plan_id not in set(self.plan_ids):
      raise UnknownPlanError(f'Plan {plan_id} is not in the table.')
    part = self.frame[self.frame['plan_id'] == plan_id]
    actual = dict(zip(part['dop'].tolist(), part['actual_ms'].tolist()))
    predicted = dict(zip(part['dop'].tolist(), part['predicted_ms'].tolist()))
    missing = [d for d in self.dop_set if d not in actual]
    if missing:
      raise IncompleteGridError(
          f'Plan {plan_id} has no latency at DOP {missing[0]}.')
    return {'actual': {d: actual[d] for d in self.dop_set},
            'predicted': {d: predicted[d] for d in self.dop_set}}

  def row_dicts(self, column: str) -> Dict[str, Dict[int, float]]:
    grid = self._grid(column)
    return {p: dict(zip(self.dop_set, grid[i].tolist()))
            for i, p in enumerate(self.plan_ids)}


def _check_not_empty(table: LatencyTable) -> None:
  if not len(table):
    raise EmptyValuesError('The latency table has no plans.')


def mae(table: LatencyTable) -> float:
  _check_not_empty(table)
  return float(np.mean(np.abs(table.predicted_grid() - table.actual_grid())))


def rpe(table: LatencyTable, plan_id: str) -> float:
  rows = table.rows(plan_id)
  actual = np.array(list(rows['actual'].values()))
  predicted = np.array(list(rows['predicted'].values()))
  return float(np.mean(np.abs(predicted - actual) / actual))


def spe(table: LatencyTable, plan_id: str) -> float:
  """Speedup prediction error of one plan, normalized by DOP 1."""
  if 1 not in table.dop_set:
    raise MissingBaselineDopError(1)
  rows = table.rows(plan_id)
  actual = np.array(list(rows['actual'].values()))
  predicted = np.array(list(rows['predicted'].values()))
  if rows['predicted'][1] == 0:
    raise PredictedBaselineZeroError(
        f'Predicted DOP-1 latency of plan {plan_id} is 0.')
  return float(np.mean(np.abs(predicted / rows['predicted'][1] -
                              actual / rows['actual'][1])))


def rpe_values(table: LatencyTable) -> np.ndarray:
  _check_not_empty(table)
  actual = table.actual_grid()
  return np.mean(np.abs(table.predicted_grid() - actual) / actual, axis=1)


def spe_values(table: LatencyTable) -> np.ndarray:
  _check_not_empty(table)
  if 1 not in table.dop_set:
    raise MissingBaselineDopError(1)
  column = table.dop_set.index(1)
  actual = table.actual_grid()
  predicted = table.predicted_grid()
  if (predicted[:, column] == 0).any():
    plan_id = table.plan_ids[int(np.flatnonzero(predicted[:, column] == 0)[0])]
    raise PredictedBaselineZeroError(
        f'Predicted DOP-1 latency of plan {plan_id} is 0.')
  return np.mean(np.abs(predicted / predicted[:, [column]] -
                        actual / actual[:, [column]]), axis=1)


def _per_query_throughput(grid: np.ndarray) -> float:
  return grid.shape[0] / float(np.min(grid, axis=1).sum())


def _per_workload_throughput(grid: np.ndarray) -> float:
  return grid.shape[0] / float(np.min(grid.sum(axis=0)))


def tq(table: LatencyTable) -> float:
  _check_not_empty(table)
  return _per_query_throughput(table.predicted_grid())


def tw(table: LatencyTable) -> float:
  _check_not_empty(table)
  return _per_workload_throughput(table.predicted_grid())


def realized_tq(table: LatencyTable) -> float:
  """Throughput when every plan runs at its predicted-best DOP."""
  _check_not_empty(table)
  actual = table.actual_grid()
  chosen = selection.argmin_columns(table.predicted_grid())
  return actual.shape[0] / float(
      actual[np.arange(actual.shape[0]), chosen].sum())


def realized_tw(table: LatencyTable) -> float:
  """Throughput when the workload runs at its predicted-best shared DOP."""
  _check_not_empty(table)
  actual = table.actual_grid()
  summed = table.predicted_grid().sum(axis=0)
  chosen = int(selection.argmin_columns(summed[None, :])[0])
  return actual.shape[0] / float(actual[:, chosen].sum())


def oracle_tq(table: LatencyTable) -> float:
  _check_not_empty(table)
  return _per_query_throughput(table.actual_grid())


def oracle_tw(table: LatencyTable) -> float:
  _check_not_empty(table)
  return _per_workload_throughput(table.actual_grid())


def throughput_at_dop(table: LatencyTable, dop: int,
                      source: str = 'actual') -> float:
  """Throughput when every plan runs at one fixed DOP."""
  _check_not_empty(table)
  if dop not in table.dop_set:
    raise MissingBaselineDopError(dop)
  grid = (table.actual_grid() if source == 'actual' else
          table.predicted_grid())
  return grid.shape[0] / float(grid[:, table.dop_set.index(dop)].sum())


def throughputs(table: LatencyTable) -> Dict[str, float]:
  return {
      'tq': tq(table),
      'tw': tw(table),
      'realized_tq': realized_tq(table),
      'realized_tw': realized_tw(table),
      'oracle_tq': oracle_tq(table),
      'oracle_tw': oracle_tw(table),
  }


def normalized_throughputs(
    table: LatencyTable,
    baseline_dop: int = DEFAULT_BASELINE_DOP) -> Dict[str, float]:
  """Throughputs divided by the throughput at the baseline DOP.

  tq and tw are divided by the predicted throughput at the baseline; every
  other variant, and every static DOP, by the actual one.

  Args:
    table: Latency table.
    baseline_dop: DOP the workload would otherwise run at.

  Returns:
    Map from variant name to normalized throughput. Static DOPs appear as
    "dop_<d>".
  """
  predicted_base = throughput_at_dop(table, baseline_dop, source='predicted')
  actual_base = throughput_at_dop(table, baseline_dop)
  normalized = {}
  for name, value in throughputs(table).items():
    base = predicted_base if name in ('tq', 'tw') else actual_base
    normalized[name] = value / base
  for dop in table.dop_set:
    normalized[f'dop_{dop}'] = throughput_at_dop(table, dop) / actual_base
  return normalized


def chosen_dop_histogram(table: LatencyTable,
                         source: str = 'predicted') -> Dict[int, int]:
  """Counts how many plans have each DOP as their best DOP."""
  _check_not_empty(table)
  grid = (table.predicted_grid() if source == 'predicted' else
          table.actual_grid())
  chosen = selection.argmin_columns(grid)
  counts = np.bincount(chosen, minlength=len(table.dop_set))
  return {d: int(c) for d, c in zip(table.dop_set, counts)}


def error_distribution(values: Sequence[float],
                       thresholds: Sequence[float]) -> List[float]:
  """Cumulative percentage of values at or below every threshold.

  Args:
    values: Per-plan errors.
    thresholds: Ascending thresholds.

  Returns:
    Percentages in [0, 100], one per threshold.

  Raises:
    EmptyValuesError if values is empty.
    ValueError if thresholds are not ascending.
  """
  values = np.asarray(values, dtype=np.float64)
  if values.size == 0:
    raise EmptyValuesError('Cannot compute a distribution of no values.')
  thresholds = np.asarray(thresholds, dtype=np.float64)
  if np.any(np.diff(thresholds) < 0):
    raise ValueError('Thresholds must be sorted in ascending order.')
  counts = np.searchsorted(np.sort(values), thresholds, side='right')
  return (100. * counts / values.size).tolist()


@dataclasses.dataclass
class MetricsReport:
  """All metrics of one latency table."""
  plans: int
  mae: float
  rpe_mean: float
  rpe_median: float
  spe_mean: Optional[float]
  spe_median: Optional[float]
  throughputs: Dict[str, float]
  normalized_throughputs: Optional[Dict[str, float]]
  baseline_dop: int
  rpe_thresholds: List[float]
  rpe_distribution: List[float]
  spe_thresholds: List[float]
  spe_distribution: Optional[List[float]]
  chosen_dops_predicted: Dict[int, int]
  chosen_dops_actual: Dict[int, int]

  def to_dict(self) -> Dict[str, Any]:
    d = dataclasses.asdict(self)
    for key in ('chosen_dops_predicted', 'chosen_dops_actual'):
      d[key] = {str(k): v for k, v in d[key].items()}
    return d

  def flat_row(self) -> Dict[str, Any]:
    """Returns scalar metrics in the stable CSV column order."""
    row = {'plans': self.plans, 'mae': self.mae, 'rpe_mean': self.rpe_mean,
           'rpe_median': self.rpe_median, 'spe_mean': self.spe_mean,
           'spe_median': self.spe_median}
    row.update(self.throughputs)
    for name, value in (self.normalized_throughputs or {}).items():
      row[f'normalized_{name}'] = value
    return row

  def write_json(self, path: str) -> None:
    utils.write_json(self.to_dict(), path)

  def write_csv(self, path: str) -> None:
    utils.ensure_dir(os.path.dirname(path))
    pd.DataFrame([self.flat_row()]).to_csv(path, index=False)


def summarize(
    table: LatencyTable,
    baseline_dop: int = DEFAULT_BASELINE_DOP,
    rpe_thresholds: Sequence[float] = DEFAULT_RPE_THRESHOLDS,
    spe_thresholds: Sequence[float] = DEFAULT_SPE_THRESHOLDS
) -> MetricsReport:
  """Computes every metric of a table.

  SPE is skipped with a warning when the DOP set lacks DOP 1, and normalized
  throughputs when it lacks the baseline DOP.

  Args:
    table: Latency table with a complete grid.
    baseline_dop: DOP for normalized throughputs.
    rpe_thresholds: Thresholds of the RPE distribution.
    spe_thresholds: Thresholds of the SPE distribution.

  Returns:
    The report.
  """
  rpes = rpe_values(table)
  spe_mean = spe_median = spe_distribution = None
  if 1 in table.dop_set:
    spes = spe_values(table)
    spe_mean = float(spes.mean())
    spe_median = float(np.median(spes))
    spe_distribution = error_distribution(spes, spe_thresholds)
  else:
    logging.warning('DOP 1 is not in the DOP set; skipping SPE.')
  normalized = None
  if baseline_dop in table.dop_set:
    normalized = normalized_throughputs(table, baseline_dop)
  else:
    logging.warning('Baseline DOP %d is not in the DOP set; skipping '
                    'normalized throughputs.', baseline_dop)
  return MetricsReport(
      plans=len(table),
      mae=mae(table),
      rpe_mean=float(rpes.mean()),
      rpe_median=float(np.median(rpes)),
      spe_mean=spe_mean,
      spe_median=spe_median,
      throughputs=throughputs(table),
      normalized_throughputs=normalized,
      baseline_dop=baseline_dop,
      rpe_thresholds=list(rpe_thresholds),
      rpe_distribution=error_distribution(rpes, rpe_thresholds),
      spe_thresholds=list(spe_thresholds),
      spe_distribution=spe_distribution,
      chosen_dops_predicted=chosen_dop_histogram(table, 'predicted'),
      chosen_dops_actual=chosen_dop_histogram(table, 'actual'))
