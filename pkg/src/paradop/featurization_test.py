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

"""Tests for featurization.py."""

import itertools
import os
import pathlib

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np
import pandas as pd
from paradop import featurization
from paradop import plan as plan_lib

Channel = featurization.Channel
RowBatch = plan_lib.RowBatch
ParallelSerial = plan_lib.ParallelSerial

_VOCABULARY = (
    ('TableScan', RowBatch.ROW, ParallelSerial.PARALLEL, ()),
    ('ColumnstoreIndexScan', RowBatch.BATCH, ParallelSerial.PARALLEL, ()),
    ('HashMatch', RowBatch.BATCH, ParallelSerial.PARALLEL,
     (('logical', 'Join'),)),
    ('HashMatch', RowBatch.BATCH, ParallelSerial.SERIAL,
     (('logical', 'Aggregate'),)),
    ('Sort', RowBatch.ROW, ParallelSerial.PARALLEL, ()),
    ('NestedLoops', RowBatch.ROW, ParallelSerial.SERIAL,
     (('logical', 'InnerJoin'),)),
    ('Parallelism', RowBatch.ROW, ParallelSerial.PARALLEL,
     (('logical', 'GatherStreams'),)),
)


def get_test_file_path(relative_test_data_path: str) -> str:
  current_dir = pathlib.Path(__file__).parent
  return str(current_dir / relative_test_data_path)


def _node(node_id, op='TableScan', row_batch=RowBatch.ROW,
          parallel_serial=ParallelSerial.PARALLEL, attrs=(), out=0.0, cpu=0.0,
          io=0.0, children=()):
  return plan_lib.OperatorNode(
      node_id=node_id, operator=op, row_batch=row_batch,
      parallel_serial=parallel_serial, optional_attrs=tuple(attrs),
      est_output_bytes=float(out), est_cpu_cost=float(cpu),
      est_io_cost=float(io), children=tuple(children))


def _plan(nodes, plan_id='p', root=0):
  return plan_lib.validate_plan(
      plan_lib.QueryPlan(plan_id=plan_id, root=root, nodes=tuple(nodes)))


def _random_plan(rng: np.random.Generator, plan_id: str,
                 max_depth: int = 6) -> plan_lib.QueryPlan:
  """Generates a random tree of operators from the test vocabulary."""
  nodes = []
  counter = itertools.count()

  def grow(depth):
    node_id = next(counter)
    children = []
    if depth < max_depth:
      for _ in range(int(rng.integers(0, 3))):
        children.append(grow(depth + 1))
    op, rb, ps, attrs = _VOCABULARY[int(rng.integers(len(_VOCABULARY)))]
    nodes.append(_node(node_id, op, rb, ps, attrs,
                       out=rng.uniform(0, 1e6), cpu=rng.uniform(0, 50),
                       io=rng.uniform(0, 50), children=children))
    return node_id

  grow(1)
  return _plan(nodes, plan_id=plan_id)


def _permute_children(p: plan_lib.QueryPlan,
                      rng: np.random.Generator) -> plan_lib.QueryPlan:
  nodes = []
  for node in p.nodes:
    children = list(node.children)
    rng.shuffle(children)
    nodes.append(_node(node.node_id, node.operator, node.row_batch,
                       node.parallel_serial, node.optional_attrs,
                       node.est_output_bytes, node.est_cpu_cost,
                       node.est_io_cost, children))
  return _plan(nodes, plan_id=p.plan_id, root=p.root)


def _brute_force_weight(p: plan_lib.QueryPlan, node_id: int) -> float:

  def height(n):
    children = p.node(n).children
    return 1 + max((height(c) for c in children), default=0)

  node = p.node(node_id)
  if not node.children:
    return node.est_output_bytes
  return sum(_brute_force_weight(p, c) * height(c) for c in node.children)


class FeaturizationTest(parameterized.TestCase):

  def testRegistryDedupsKeys(self):
    p = _plan([_node(0, children=[1]), _node(1)])
    registry = featurization.build_registry([p])
    self.assertLen(registry.keys, 1)

  def testRegistryUnion(self):
    a = _plan([_node(0, 'A', children=[1]), _node(1, 'B')], plan_id='a')
    b = _plan([_node(0, 'C', children=[1, 2]), _node(1, 'D'), _node(2, 'E')],
              plan_id='b')
    registry = featurization.build_registry([a, b])
    self.assertLen(registry.keys, 5)

  def testRegistryIsDeterministic(self):
    plans = plan_lib.read_plans_file(
        get_test_file_path('test_data/plans.jsonl'))
    first = featurization.build_registry(plans)
    second = featurization.build_registry(list(reversed(plans)))
    self.assertEqual(first, second)
    self.assertEqual(first.fingerprint, second.fingerprint)

  def testEmptyCorpus(self):
    with self.assertRaises(featurization.EmptyCorpusError):
      featurization.build_registry([])

  def testDimension(self):
    plans = plan_lib.read_plans_file(
        get_test_file_path('test_data/plans.jsonl'))
    full = featurization.build_registry(plans, featurization.ALL_CHANNELS)
    default = featurization.build_registry(plans)
    n = len(full.keys)
    self.assertEqual(full.dimension, n * 5 + 1)
    self.assertEqual(default.dimension, n * 3 + 1)
    self.assertLen(full.slot_names(), full.dimension)
    self.assertEqual(full.slot_names()[-1], 'dop')

  def testHeights(self):
    single = _plan([_node(0)])
    self.assertEqual(featurization.node_heights(single), {0: 1})
    chain = _plan([_node(0, children=[1]), _node(1, children=[2]), _node(2)])
    self.assertEqual(featurization.node_heights(chain), {0: 3, 1: 2, 2: 1})
    fork = _plan([_node(0, children=[1, 2]), _node(1), _node(2)])
    self.assertEqual(featurization.node_heights(fork)[0], 2)

  def testWeights(self):
    leaf = _plan([_node(0, out=100)])
    self.assertEqual(featurization.node_weights(leaf), {0: 100.0})
    fork = _plan([_node(0, children=[1, 2]), _node(1, out=10),
                  _node(2, out=20)])
    self.assertEqual(featurization.node_weights(fork)[0], 30.0)
    chain = _plan([_node(0, children=[1]), _node(1, children=[2]),
                   _node(2, out=8)])
    weights = featurization.node_weights(chain)
    self.assertEqual(weights[1], 8.0)
    self.assertEqual(weights[0], 16.0)

  def testWeightsMatchBruteForce(self):
    rng = np.random.default_rng(7)
    for i in range(100):
      p = _random_plan(rng, f'p{i}', max_depth=6)
      weights = featurization.node_weights(p)
      for node_id in p.node_ids:
        np.testing.assert_allclose(
            weights[node_id], _brute_force_weight(p, node_id), rtol=1e-9)

  def testFeaturizeSumsPerKey(self):
    p = _plan([_node(0, children=[1], out=100, cpu=2, io=3),
               _node(1, out=50, cpu=1, io=4)])
    registry = featurization.build_registry([p], featurization.ALL_CHANNELS)
    vector = featurization.featurize(p, registry)
    key = registry.keys[0]
    self.assertEqual(vector.values[registry.slot_index(key, Channel.COUNT)], 2)
    self.assertEqual(vector.values[registry.slot_index(key, Channel.CARD)],
                     150)
    self.assertEqual(vector.values[registry.slot_index(key, Channel.COST)], 3)
    self.assertEqual(
        vector.values[registry.slot_index(key, Channel.COST, part=1)], 7)
    # Leaf weight 50 at height 1, root weight 50; summed per key.
    self.assertEqual(vector.values[registry.slot_index(key, Channel.WEIGHT)],
                     100)
    self.assertEqual(vector.dop, 0.0)
    self.assertEqual(vector.unknown_keys, 0)

  def testUnknownKeysAreTallied(self):
    known = _plan([_node(0, 'A')], plan_id='known')
    registry = featurization.build_registry([known])
    other = _plan([_node(0, 'B', children=[1, 2]), _node(1, 'C'),
                   _node(2, 'C')], plan_id='other')
    vector = featurization.featurize(other, registry)
    self.assertFalse(vector.values.any())
    self.assertEqual(vector.unknown_keys, 2)

  def testDistinctKeysUseSeparateSlots(self):
    plans = plan_lib.read_plans_file(
        get_test_file_path('test_data/plans.jsonl'))
    plan = [p for p in plans if p.plan_id == 'join'][0]
    registry = featurization.build_registry([plan])
    vector = featurization.featurize(plan, registry)
    scan = plan_lib.composite_key(plan.node(2))
    join = plan_lib.composite_key(plan.node(1))
    self.assertEqual(vector.values[registry.slot_index(scan, Channel.CARD)],
                     2000)
    self.assertEqual(vector.values[registry.slot_index(join, Channel.CARD)],
                     400)
    self.assertEqual(vector.values[registry.slot_index(scan, Channel.COUNT)],
                     2)
    self.assertEqual(vector.values[registry.slot_index(join, Channel.WEIGHT)],
                     2000)

  def testAttachDop(self):
    p = _plan([_node(0, out=5)])
    registry = featurization.build_registry([p])
    vector = featurization.featurize(p, registry)
    with_dop = featurization.attach_dop(vector, 40)
    self.assertEqual(with_dop.values[-1], 40)
    self.assertEqual(vector.values[-1], 0)
    self.assertEqual(featurization.attach_dop(vector, 1).dop, 1.0)
    with self.assertRaises(featurization.InvalidDopError):
      featurization.attach_dop(vector, 0)

  def testSiblingPermutationInvariance(self):
    rng = np.random.default_rng(11)
    plans = [_random_plan(rng, f'p{i}') for i in range(500)]
    registry = featurization.build_registry(plans, featurization.ALL_CHANNELS)
    for p in plans:
      permuted = _permute_children(p, rng)
      np.testing.assert_array_equal(
          featurization.featurize(p, registry).values,
          featurization.featurize(permuted, registry).values)

  @parameterized.named_parameters(
      ('raw', False), ('log1p', True))
  def testAblationConsistency(self, log_transform):
    rng = np.random.default_rng(3)
    plans = [_random_plan(rng, f'p{i}') for i in range(500)]
    full = featurization.build_registry(
        plans, featurization.ALL_CHANNELS, log_transform=log_transform)
    full_names = full.slot_names()
    for dropped in featurization.ALL_CHANNELS:
      subset = [c for c in featurization.ALL_CHANNELS if c != dropped]
      ablated = featurization.build_registry(
          plans, subset, log_transform=log_transform)
      index = [full_names.index(n) for n in ablated.slot_names()]
      for p in plans:
        np.testing.assert_array_equal(
            featurization.featurize(p, full).values[index],
            featurization.featurize(p, ablated).values)

  def testAdditivityUnderCommonRoot(self):
    a = _plan([_node(0, 'A', out=10, cpu=1, io=2, children=[1]),
               _node(1, 'B', out=20, cpu=3, io=4)], plan_id='a')
    b = _plan([_node(0, 'C', out=5, cpu=1, io=1, children=[1, 2]),
               _node(1, 'D', out=7, cpu=2, io=2),
               _node(2, 'D', out=9, cpu=2, io=2)], plan_id='b')
    merged = _plan([
        _node(0, 'Concatenation', children=[1, 3]),
        _node(1, 'A', out=10, cpu=1, io=2, children=[2]),
        _node(2, 'B', out=20, cpu=3, io=4),
        _node(3, 'C', out=5, cpu=1, io=1, children=[4, 5]),
        _node(4, 'D', out=7, cpu=2, io=2),
        _node(5, 'D', out=9, cpu=2, io=2),
    ], plan_id='merged')
    registry = featurization.build_registry([merged],
                                            featurization.ALL_CHANNELS)
    total = (featurization.featurize(a, registry).values +
             featurization.featurize(b, registry).values)
    merged_vector = featurization.featurize(merged, registry).values
    for key in registry.keys:
      if key.operator == 'Concatenation':
        continue
      for channel, part in ((Channel.COUNT, 0), (Channel.CARD, 0),
                            (Channel.COST, 0), (Channel.COST, 1)):
        slot = registry.slot_index(key, channel, part)
        self.assertEqual(merged_vector[slot], total[slot])

  def testVectorsAreFiniteAndNonNegative(self):
    rng = np.random.default_rng(5)
    plans = [_random_plan(rng, f'p{i}') for i in range(50)]
    registry = featurization.build_registry(plans, featurization.ALL_CHANNELS)
    for p in plans:
      values = featurization.featurize(p, registry).values
      self.assertTrue(np.all(np.isfinite(values)))
      self.assertTrue(np.all(values >= 0))

  def testLogTransformLeavesCountIntegral(self):
    p = _plan([_node(0, children=[1], out=100), _node(1, out=50)])
    registry = featurization.build_registry(
        [p], featurization.ALL_CHANNELS, log_transform=True)
    vector = featurization.featurize(p, registry)
    key = registry.keys[0]
    self.assertEqual(vector.values[registry.slot_index(key, Channel.COUNT)], 2)
    self.assertAlmostEqual(
        vector.values[registry.slot_index(key, Channel.CARD)], np.log1p(150))

  def testRegistrySaveLoad(self):
    plans = plan_lib.read_plans_file(
        get_test_file_path('test_data/plans.jsonl'))
    registry = featurization.build_registry(plans, featurization.ALL_CHANNELS)
    path = os.path.join(self.create_tempdir().full_path, 'registry.json')
    registry.save(path)
    loaded = featurization.FeatureRegistry.load(path)
    self.assertEqual(loaded, registry)
    self.assertEqual(loaded.fingerprint, registry.fingerprint)

  def testFeatureFrameHeaderFollowsChannels(self):
    plans = plan_lib.read_plans_file(
        get_test_file_path('test_data/plans.jsonl'))
    registry = featurization.build_registry(
        plans, Channel.parse_set('count,card,weight'))
    frame = featurization.feature_frame(plans, registry, [1, 2, 4])
    self.assertLen(frame, len(plans) * 3)
    self.assertFalse([c for c in frame.columns if '#cost' in c])
    self.assertEqual(list(frame.columns)[-1], 'dop')
    path = os.path.join(self.create_tempdir().full_path, 'features.csv')
    featurization.write_feature_matrix(frame, path)
    reread = featurization.read_feature_matrix(path, registry)
    pd.testing.assert_frame_equal(reread[['plan_id', 'dop']],
                                  frame[['plan_id', 'dop']])

  @parameterized.named_parameters(
      ('all', featurization.ALL_CHANNELS, 'F'),
      ('no_cost', featurization.DEFAULT_CHANNELS, 'F\\{cost}'),
  )
  def testChannelSetLabel(self, channels, expected):
    self.assertEqual(featurization.channel_set_label(channels), expected)

  def testParseUnknownChannel(self):
    with self.assertRaises(ValueError):
      Channel.parse_set('count,rows')


if __name__ == '__main__':
  absltest.main()
