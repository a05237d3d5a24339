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

"""Tests for metrics."""

import json
import os

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np
import pandas as pd
from paradop import metrics


def _table(actual, predicted, dop_set=None):
  return metrics.LatencyTable.from_grids(actual, predicted, dop_set)


def _random_table(rng, plans=5, dops=(1, 2, 4, 8, 16)):
  actual = {}
  predicted = {}
  for i in range(plans):
    actual[f'p{i}'] = {d: float(rng.uniform(1., 100.)) for d in dops}
    predicted[f'p{i}'] = {d: float(rng.uniform(1., 100.)) for d in dops}
  return _table(actual, predicted)


class MetricsTest(parameterized.TestCase):

  def test_mae_hand_computed(self):
    table = _table({'a': {1: 10., 2: 20.}}, {'a': {1: 12., 2: 16.}})
    self.assertEqual(metrics.mae(table), 3.)

  def test_perfect_prediction_has_zero_errors(self):
    rows = {'a': {1: 10., 2: 20., 4: 7.}, 'b': {1: 3., 2: 2., 4: 1.}}
    table = _table(rows, rows)
    self.assertEqual(metrics.mae(table), 0.)
    self.assertEqual(metrics.rpe(table, 'a'), 0.)
    self.assertEqual(metrics.spe(table, 'b'), 0.)

  def test_incomplete_grid(self):
    table = _table({'a': {1: 10., 2: 20.}, 'b': {1: 5.}},
                   {'a': {1: 10., 2: 20.}, 'b': {1: 5.}})
    with self.assertRaises(metrics.IncompleteGridError):
      metrics.mae(table)
    with self.assertRaises(metrics.IncompleteGridError):
      metrics.rpe(table, 'b')

  @parameterized.named_parameters(
      ('double', {1: 20., 2: 40.}, 1.),
      ('ten_percent', {1: 11., 2: 18.}, 0.1),
  )
  def test_rpe(self, predicted, expected):
    table = _table({'a': {1: 10., 2: 20.}}, {'a': predicted})
    self.assertAlmostEqual(metrics.rpe(table, 'a'), expected, delta=1e-12)

  def test_rpe_unknown_plan(self):
    table = _table({'a': {1: 10.}}, {'a': {1: 10.}})
    with self.assertRaises(metrics.UnknownPlanError):
      metrics.rpe(table, 'zzz')

  def test_spe_hand_computed(self):
    table = _table({'a': {1: 100., 2: 50.}}, {'a': {1: 100., 2: 100.}})
    self.assertEqual(metrics.spe(table, 'a'), 0.25)

  def test_spe_is_scale_invariant(self):
    rng = np.random.default_rng(0)
    for _ in range(50):
      actual = {'a': {d: float(rng.uniform(1., 50.)) for d in (1, 2, 4, 8)}}
      predicted = {'a': {d: float(rng.uniform(1., 50.)) for d in (1, 2, 4, 8)}}
      scale = float(rng.uniform(0.1, 10.))
      scaled = {'a': {d: v * scale for d, v in predicted['a'].items()}}
      self.assertAlmostEqual(metrics.spe(_table(actual, predicted), 'a'),
                             metrics.spe(_table(actual, scaled), 'a'),
                             delta=1e-12)

  def test_spe_scaled_prediction_is_zero(self):
    actual = {'a': {1: 10., 2: 6., 4: 5.}}
    predicted = {'a': {1: 30., 2: 18., 4: 15.}}
    self.assertAlmostEqual(metrics.spe(_table(actual, predicted), 'a'), 0.,
                           delta=1e-15)

  def test_spe_needs_dop_one(self):
    table = _table({'a': {2: 10., 4: 5.}}, {'a': {2: 10., 4: 5.}})
    with self.assertRaises(metrics.MissingBaselineDopError):
      metrics.spe(table, 'a')

  def test_spe_predicted_baseline_zero(self):
    table = _table({'a': {1: 10., 2: 5.}}, {'a': {1: 0., 2: 5.}})
    with self.assertRaises(metrics.PredictedBaselineZeroError):
      metrics.spe(table, 'a')

  def test_tq_and_tw_hand_computed(self):
    table = _table({'a': {1: 1., 2: 1.}, 'b': {1: 1., 2: 1.}},
                   {'a': {1: 10., 2: 20.}, 'b': {1: 20., 2: 10.}})
    self.assertAlmostEqual(metrics.tq(table), 0.1, delta=1e-12)
    self.assertAlmostEqual(metrics.tw(table), 2. / 30., delta=1e-12)

  def test_constant_predictions_tq_equals_tw(self):
    table = _table({'a': {1: 1., 2: 1.}, 'b': {1: 1., 2: 1.}},
                   {'a': {1: 4., 2: 4.}, 'b': {1: 4., 2: 4.}})
    self.assertEqual(metrics.tq(table), 0.25)
    self.assertEqual(metrics.tw(table), 0.25)

  def test_single_plan_tq_equals_tw(self):
    table = _table({'a': {1: 3., 2: 2.}}, {'a': {1: 9., 2: 7.}})
    self.assertEqual(metrics.tq(table), metrics.tw(table))

  def test_tq_dominates_tw_on_random_grids(self):
    rng = np.random.default_rng(42)
    for _ in range(1000):
      table = _random_table(rng, plans=int(rng.integers(1, 6)))
      self.assertGreaterEqual(metrics.tq(table), metrics.tw(table))
      self.assertGreaterEqual(metrics.oracle_tq(table),
                              metrics.realized_tq(table))

  def test_realized_throughputs(self):
    table = _table({'a': {1: 10., 2: 40.}, 'b': {1: 30., 2: 10.}},
                   {'a': {1: 50., 2: 5.}, 'b': {1: 5., 2: 50.}})
    # Predictions pick the slow DOP for both plans.
    self.assertEqual(metrics.realized_tq(table), 2. / 70.)
    self.assertEqual(metrics.oracle_tq(table), 2. / 20.)
    # Summed predictions tie; the smaller DOP 1 wins.
    self.assertEqual(metrics.realized_tw(table), 2. / 40.)
    self.assertEqual(metrics.oracle_tw(table), 2. / 40.)

  def test_normalized_throughputs(self):
    table = _table({'a': {1: 10., 2: 5.}, 'b': {1: 10., 2: 20.}},
                   {'a': {1: 10., 2: 5.}, 'b': {1: 10., 2: 20.}})
    normalized = metrics.normalized_throughputs(table, baseline_dop=2)
    self.assertEqual(normalized['dop_2'], 1.)
    self.assertEqual(normalized['oracle_tq'], (2. / 15.) / (2. / 25.))
    self.assertEqual(normalized['tq'], normalized['oracle_tq'])
    with self.assertRaises(metrics.MissingBaselineDopError):
      metrics.normalized_throughputs(table, baseline_dop=64)

  def test_chosen_dop_histogram(self):
    table = _table({'a': {1: 1., 2: 1., 4: 1.}, 'b': {1: 1., 2: 1., 4: 1.},
                    'c': {1: 1., 2: 1., 4: 1.}},
                   {'a': {1: 3., 2: 2., 4: 1.}, 'b': {1: 1., 2: 2., 4: 3.},
                    'c': {1: 5., 2: 1., 4: 1.}})
    self.assertEqual(metrics.chosen_dop_histogram(table), {1: 1, 2: 1, 4: 1})
    self.assertEqual(metrics.chosen_dop_histogram(table, 'actual'),
                     {1: 3, 2: 0, 4: 0})

  @parameterized.named_parameters(
      ('spread', [0.05, 0.15, 0.25], [0.1, 0.2, 0.3],
       [100. / 3., 200. / 3., 100.]),
      ('all_zero', [0., 0.], [0., 0.5], [100., 100.]),
      ('below_min', [0.5, 0.7], [0.1, 0.6], [0., 50.]),
  )
  def test_error_distribution(self, values, thresholds, expected):
    np.testing.assert_allclose(
        metrics.error_distribution(values, thresholds), expected)

  def test_error_distribution_is_monotone(self):
    rng = np.random.default_rng(1)
    values = rng.exponential(size=100)
    distribution = metrics.error_distribution(
        values, metrics.DEFAULT_RPE_THRESHOLDS)
    self.assertTrue(np.all(np.diff(distribution) >= 0))
    self.assertTrue(all(0. <= p <= 100. for p in distribution))

  def test_error_distribution_empty(self):
    with self.assertRaises(metrics.EmptyValuesError):
      metrics.error_distribution([], [0.1])

  def test_default_thresholds(self):
    self.assertLen(metrics.DEFAULT_RPE_THRESHOLDS, 10)
    self.assertEqual(metrics.DEFAULT_RPE_THRESHOLDS[0], 0.1)
    self.assertEqual(metrics.DEFAULT_RPE_THRESHOLDS[-1], 1.0)
    self.assertEqual(metrics.DEFAULT_SPE_THRESHOLDS[0], 0.001)

  def test_non_positive_actual_latency(self):
    with self.assertRaises(metrics.NonPositiveLatencyError):
      _table({'a': {1: 0.}}, {'a': {1: 1.}})

  def test_from_frame(self):
    frame = pd.DataFrame({'plan_id': ['a', 'a'], 'dop': [1, 2],
                          'actual_ms': [10., 20.],
                          'predicted_ms': [12., 16.]})
    self.assertEqual(metrics.mae(metrics.LatencyTable.from_frame(frame)), 3.)

  def test_summarize(self):
    rng = np.random.default_rng(3)
    table = _random_table(rng, plans=8, dops=(1, 2, 4, 64))
    report = metrics.summarize(table)
    self.assertEqual(report.plans, 8)
    self.assertLen(report.rpe_distribution, 10)
    self.assertLen(report.spe_distribution, 5)
    self.assertIn('realized_tq', report.throughputs)
    self.assertEqual(report.normalized_throughputs['dop_64'], 1.)
    self.assertEqual(sum(report.chosen_dops_predicted.values()), 8)
    directory = self.create_tempdir().full_path
    report.write_json(os.path.join(directory, 'report.json'))
    report.write_csv(os.path.join(directory, 'report.csv'))
    with open(os.path.join(directory, 'report.json')) as f:
      self.assertEqual(json.load(f)['plans'], 8)
    frame = pd.read_csv(os.path.join(directory, 'report.csv'))
    self.assertEqual(list(frame.columns[:3]), ['plans', 'mae', 'rpe_mean'])

  def test_summarize_without_dop_one_skips_spe(self):
    rng = np.random.default_rng(4)
    table = _random_table(rng, dops=(2, 4))
    with self.assertLogs(level='WARNING'):
      report = metrics.summarize(table)
    self.assertIsNone(report.spe_mean)
    self.assertIsNone(report.normalized_throughputs)


if __name__ == '__main__':
  absltest.main()
