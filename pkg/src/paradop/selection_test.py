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

"""Tests for selection."""

import json
import os
import pathlib

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np
import pandas as pd
from paradop import featurization
from paradop import plan as plan_lib
from paradop import selection
from paradop.model import data
from paradop.model import models


def get_test_file_path(relative_test_data_path: str) -> str:
  current_dir = pathlib.Path(__file__).parent
  return str(current_dir / relative_test_data_path)


def _trained_fixture():
  """Memorizing model over the test plans; plan i takes 100 * (i + 1) / dop."""
  plans = plan_lib.read_plans_file(get_test_file_path('test_data/plans.jsonl'))
  records = []
  for i, p in enumerate(plans):
    for dop in (1, 2, 4):
      records.append({'plan_id': p.plan_id, 'dop': dop,
                      'latency_ms': 100. * (i + 1) / dop})
  corpus = data.Corpus(plans=tuple(plans),
                       latencies=pd.DataFrame.from_records(records))
  registry = featurization.build_registry(corpus.plans)
  spec = models.ModelSpec(
      kind='random_forest',
      hyperparams={'n_trees': 1, 'bootstrap': False, 'feature_fraction': 1.0})
  model = models.train(spec, data.featurize_corpus(corpus, registry))
  return model, registry, {p.plan_id: p for p in plans}


def _random_rows(rng, plans=4, dops=(1, 2, 4, 8, 16, 32)):
  return {f'p{i}': {d: float(rng.uniform(1., 100.)) for d in dops}
          for i in range(plans)}


class SelectionTest(parameterized.TestCase):

  @parameterized.named_parameters(
      ('valley', {1: 100., 2: 60., 4: 40., 8: 45.}, 4),
      ('constant', {1: 7., 2: 7., 4: 7.}, 1),
      ('decreasing', {1: 80., 2: 40., 4: 20., 8: 10.}, 8),
      ('tie_in_middle', {1: 9., 2: 5., 4: 5., 8: 6.}, 2),
  )
  def test_argmin_dop(self, row, expected):
    self.assertEqual(selection.argmin_dop(row), expected)

  def test_argmin_dop_empty(self):
    with self.assertRaises(selection.EmptyDopSetError):
      selection.argmin_dop({})

  def test_argmin_columns_prefers_first_minimum(self):
    grid = np.array([[3., 1., 1.], [2., 2., 2.], [5., 4., 3.]])
    np.testing.assert_array_equal(selection.argmin_columns(grid), [1, 0, 2])

  def test_recommend_workload(self):
    rows = {'a': {1: 10., 2: 6.}, 'b': {1: 10., 2: 8.}}
    recommendation = selection.recommend_workload(rows)
    self.assertEqual(recommendation.plan_id, selection.WORKLOAD_TAG)
    self.assertEqual(recommendation.chosen_dop, 2)
    self.assertEqual(recommendation.predicted_ms, 14.)
    self.assertEqual(recommendation.row, {1: 20., 2: 14.})

  def test_workload_choice_differs_from_per_query_choices(self):
    rows = {'a': {2: 10., 4: 11., 8: 100.}, 'b': {2: 100., 4: 11., 8: 10.}}
    self.assertEqual(selection.recommend_row('a', rows['a']).chosen_dop, 2)
    self.assertEqual(selection.recommend_row('b', rows['b']).chosen_dop, 8)
    self.assertEqual(selection.recommend_workload(rows).chosen_dop, 4)

  def test_single_plan_workload_matches_per_query(self):
    row = {1: 9., 2: 4., 4: 6.}
    self.assertEqual(selection.recommend_workload({'a': row}).chosen_dop,
                     selection.recommend_row('a', row).chosen_dop)

  def test_empty_workload(self):
    with self.assertRaises(selection.EmptyWorkloadError):
      selection.recommend_workload({})

  def test_workload_rows_must_cover_the_same_dops(self):
    rows = {'a': {1: 10., 2: 6., 4: 5.}, 'b': {1: 10., 2: 8.}}
    with self.assertRaises(selection.MismatchedDopSetsError):
      selection.recommend_workload(rows)
    with self.assertRaises(selection.MismatchedDopSetsError):
      selection.workload_curve(rows, 1)

  def test_choices_are_invariant_to_scaling(self):
    rng = np.random.default_rng(0)
    for _ in range(200):
      rows = _random_rows(rng)
      scaled = {p: {d: 3.7 * v for d, v in row.items()}
                for p, row in rows.items()}
      for plan_id in rows:
        self.assertEqual(
            selection.recommend_row(plan_id, rows[plan_id]).chosen_dop,
            selection.recommend_row(plan_id, scaled[plan_id]).chosen_dop)
      self.assertEqual(selection.recommend_workload(rows).chosen_dop,
                       selection.recommend_workload(scaled).chosen_dop)

  def test_per_query_dominates_every_shared_dop(self):
    rng = np.random.default_rng(1)
    for _ in range(100):
      rows = _random_rows(rng)
      per_query = sum(
          rows[p][selection.recommend_row(p, rows[p]).chosen_dop]
          for p in rows)
      for dop in rows['p0']:
        self.assertLessEqual(per_query,
                             sum(row[dop] for row in rows.values()) + 1e-9)

  @parameterized.named_parameters(
      ('perfect_scaling', {1: 100., 2: 50.}, 1, {1: 1., 2: 2.}, {1: 1., 2: 1.}),
      ('no_speedup', {1: 100., 2: 100.}, 1, {1: 1., 2: 1.}, {1: 1., 2: 2.}),
  )
  def test_speedup_costup(self, row, baseline, speedup, costup):
    curve = selection.speedup_costup(row, baseline)
    for dop in row:
      self.assertEqual(curve.point(dop).speedup, speedup[dop])
      self.assertEqual(curve.point(dop).costup, costup[dop])

  def test_speedup_costup_of_doubling_cores(self):
    curve = selection.speedup_costup({20: 176., 40: 100.}, 20)
    self.assertEqual(curve.point(20).speedup, 1.)
    self.assertAlmostEqual(curve.point(40).speedup, 1.76, delta=1e-12)
    self.assertAlmostEqual(curve.point(40).costup, 2. / 1.76, delta=1e-12)
    self.assertAlmostEqual(curve.point(40).costup, 1.14, delta=0.005)

  def test_speedup_costup_with_provisioned_cores(self):
    curve = selection.speedup_costup({1: 100., 2: 50.}, 1, cores={1: 4, 2: 4})
    self.assertEqual(curve.point(2).costup, 0.5)

  def test_baseline_speedup_is_exactly_one(self):
    rng = np.random.default_rng(2)
    row = {d: float(rng.uniform(1., 10.)) for d in (1, 2, 4, 8)}
    for baseline in row:
      point = selection.speedup_costup(row, baseline).point(baseline)
      self.assertEqual(point.speedup, 1.)
      self.assertEqual(point.costup, 1.)

  def test_constant_row_has_flat_speedup(self):
    curve = selection.speedup_costup({1: 5., 2: 5., 4: 5.}, 2)
    self.assertEqual([p.speedup for p in curve.points], [1., 1., 1.])

  def test_speedup_costup_errors(self):
    with self.assertRaises(selection.MissingBaselineError):
      selection.speedup_costup({1: 10.}, 2)
    with self.assertRaises(selection.NonPositiveLatencyError):
      selection.speedup_costup({1: 10., 2: 0.}, 1)

  def test_curve_frame(self):
    curve = selection.speedup_costup({1: 10., 2: 5.}, 1,
                                     source=selection.CurveSource.ACTUAL)
    frame = curve.to_frame()
    self.assertEqual(list(frame.columns), selection.CURVE_COLUMNS)
    self.assertEqual(frame['source'].tolist(), ['actual', 'actual'])

  def test_workload_curve(self):
    rows = {'a': {1: 10., 2: 6.}, 'b': {1: 10., 2: 4.}}
    curve = selection.workload_curve(rows, 1)
    self.assertEqual(curve.point(2).speedup, 2.)

  def test_per_query_capped_curve(self):
    rows = {'a': {1: 10., 2: 4., 4: 8.}, 'b': {1: 10., 2: 8., 4: 4.}}
    frame = selection.per_query_capped_curve(rows, [1, 2, 4], baseline_dop=1)
    self.assertEqual(list(frame.columns), selection.CAPPED_CURVE_COLUMNS)
    self.assertEqual(frame['cap'].tolist(), [1, 2, 4])
    np.testing.assert_allclose(frame['speedup'], [1., 20. / 12., 20. / 8.])
    # Cap 4: a runs at DOP 2 and b at DOP 4.
    np.testing.assert_allclose(frame['costup'].iloc[-1], (8. + 16.) / 20.)
    self.assertTrue(np.all(np.diff(frame['speedup']) >= 0))

  def test_select_for_budget(self):
    curve = selection.speedup_costup({1: 100., 2: 55., 4: 30., 8: 20.}, 1)
    self.assertEqual(selection.select_for_budget(curve, 1.2), 4)
    self.assertEqual(selection.select_for_budget(curve, 10.), 8)
    self.assertEqual(selection.select_for_budget(curve, 1.), 1)

  def test_select_for_budget_falls_back_to_cheapest(self):
    curve = selection.speedup_costup({4: 10., 8: 9.}, 4)
    with self.assertLogs(level='WARNING'):
      self.assertEqual(selection.select_for_budget(curve, 0.5), 4)

  def test_select_per_query_with_model(self):
    model, registry, plans = _trained_fixture()
    recommendation = selection.select_per_query(model, registry,
                                                plans['join'], [1, 2, 4])
    self.assertEqual(recommendation.chosen_dop, 4)
    self.assertAlmostEqual(recommendation.predicted_ms, 25., delta=1e-9)
    self.assertEqual(sorted(recommendation.row), [1, 2, 4])
    with self.assertRaises(selection.EmptyDopSetError):
      selection.select_per_query(model, registry, plans['join'], [])
    with self.assertRaises(featurization.InvalidDopError):
      selection.select_per_query(model, registry, plans['join'], [0, 2])

  def test_select_workload_with_model(self):
    model, registry, plans = _trained_fixture()
    recommendation = selection.select_workload(
        model, registry, list(plans.values()), [1, 2, 4])
    self.assertEqual(recommendation.chosen_dop, 4)
    self.assertAlmostEqual(recommendation.predicted_ms, 150., delta=1e-9)
    single = selection.select_workload(model, registry, [plans['agg']],
                                       [1, 2, 4])
    self.assertEqual(
        single.chosen_dop,
        selection.select_per_query(model, registry, plans['agg'],
                                   [1, 2, 4]).chosen_dop)
    with self.assertRaises(selection.EmptyWorkloadError):
      selection.select_workload(model, registry, [], [1, 2])

  def test_writers(self):
    directory = self.create_tempdir().full_path
    curves = [selection.speedup_costup({1: 10., 2: 5.}, 1),
              selection.speedup_costup({1: 10., 2: 8.}, 1,
                                       source=selection.CurveSource.ACTUAL)]
    selection.write_curves_csv(curves, os.path.join(directory, 'curves.csv'))
    frame = pd.read_csv(os.path.join(directory, 'curves.csv'))
    self.assertLen(frame, 4)
    recommendations = [selection.recommend_row('a', {1: 3., 2: 1.})]
    path = os.path.join(directory, 'recs.json')
    selection.write_recommendations_json(recommendations, path)
    with open(path) as f:
      loaded = json.load(f)
    self.assertEqual(loaded[0]['chosen_dop'], 2)
    self.assertEqual(loaded[0]['row'], {'1': 3., '2': 1.})


if __name__ == '__main__':
  absltest.main()
