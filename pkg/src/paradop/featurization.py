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

"""Fixed-dimension plan featurization over composite-key channels.

Every composite key seen while building the registry owns a block of
slots. Within a block, the enabled channels appear in the order COUNT,
CARD, COST (cpu, io), WEIGHT. The last slot of every vector holds the DOP.

  COUNT   number of nodes with the key
  CARD    sum of estimated output bytes
  COST    sum of estimated cpu cost, sum of estimated io cost
  WEIGHT  sum of the recursive node weight
"""

import dataclasses
import enum
import math
import os
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from absl import logging
import numpy as np
import pandas as pd
from paradop import plan as plan_lib
from paradop import utils

REGISTRY_FORMAT_VERSION = 1
DOP_SLOT_NAME = 'dop'


class Channel(enum.Enum):
  """Feature channels; the value is the name used in slot headers."""
  COUNT = 'count'
  CARD = 'card'
  COST = 'cost'
  WEIGHT = 'weight'

  @property
  def width(self) -> int:
    return 2 if self == Channel.COST else 1

  @property
  def parts(self) -> Tuple[str, ...]:
    return ('cpu', 'io') if self == Channel.COST else ('',)

  @staticmethod
  def canonical(channels: Iterable['Channel']) -> Tuple['Channel', ...]:
    wanted = set(channels)
    return tuple(c for c in Channel if c in wanted)

  @staticmethod
  def parse_set(text: str | Sequence[str]) -> Tuple['Channel', ...]:
    """Parses "count,card,weight" (or a list of names) into channels."""
    names = text.split(',') if isinstance(text, str) else list(text)
    channels = []
    for name in names:
      name = name.strip().lower()
      if not name:
        continue
      try:
        channels.append(Channel(name))
      except ValueError:
        raise ValueError(
            f'Unknown channel "{name}". Possible choices: '
            f'{[c.value for c in Channel]}') from None
    if not channels:
      raise ValueError('At least one channel must be enabled.')
    return Channel.canonical(channels)


ALL_CHANNELS = Channel.canonical(Channel)
DEFAULT_CHANNELS = (Channel.COUNT, Channel.CARD, Channel.WEIGHT)


def channel_set_label(channels: Iterable[Channel]) -> str:
  """Renders a channel set as "F" or "F\\{cost}" style labels."""
  missing = [c.value for c in ALL_CHANNELS if c not in set(channels)]
  if not missing:
    return 'F'
  return 'F\\{' + ','.join(missing) + '}'


class EmptyCorpusError(utils.ParadopError, ValueError):
  """Raised when a registry is built from no plans."""

  def __init__(self):
    super().__init__('Cannot build a feature registry from zero plans.')


class InvalidDopError(utils.ParadopError, ValueError):
  """Raised when a degree of parallelism is below 1."""

  def __init__(self, dop: Any):
    super().__init__(f'DOP must be a positive integer, got {dop!r}.')
    self.dop = dop


def check_dop(dop: Any) -> int:
  if isinstance(dop, bool) or not isinstance(dop, (int, np.integer)):
    raise InvalidDopError(dop)
  if dop < 1:
    raise InvalidDopError(dop)
  return int(dop)


@dataclasses.dataclass(frozen=True)
class FeatureRegistry:
  """Mapping from composite keys to feature-vector slots.

  Attributes:
    keys: Composite keys in slot order.
    channels: Enabled channels in canonical order.
    log_transform: If True, CARD, COST and WEIGHT slots hold log1p values.
  """
  keys: Tuple[plan_lib.CompositeKey, ...]
  channels: Tuple[Channel, ...] = DEFAULT_CHANNELS
  log_transform: bool = False

  def __post_init__(self):
    object.__setattr__(self, 'channels', Channel.canonical(self.channels))
    object.__setattr__(
        self, '_key_index', {k: i for i, k in enumerate(self.keys)})
    offsets = {}
    offset = 0
    for channel in self.channels:
      offsets[channel] = offset
      offset += channel.width
    object.__setattr__(self, '_channel_offsets', offsets)
    object.__setattr__(self, '_block_width', offset)
    object.__setattr__(self, '_fingerprint', utils.fingerprint(self.to_dict()))

  @property
  def channel_offsets(self) -> Dict[Channel, int]:
    return dict(self._channel_offsets)

  @property
  def block_width(self) -> int:
    return self._block_width

  @property
  def dimension(self) -> int:
    return len(self.keys) * self._block_width + 1

  @property
  def fingerprint(self) -> str:
    return self._fingerprint

  def key_index(self, key: plan_lib.CompositeKey) -> Optional[int]:
    return self._key_index.get(key)

  def slot_index(self, key: plan_lib.CompositeKey, channel: Channel,
                 part: int = 0) -> int:
    """Returns the slot of a key's channel (part 1 is COST's io slot)."""
    if channel not in self._channel_offsets:
      raise KeyError(f'Channel {channel.value} is not enabled.')
    return (self._key_index[key] * self._block_width +
            self._channel_offsets[channel] + part)

  def slot_names(self) -> List[str]:
    names = []
    for key in self.keys:
      prefix = key.slot_prefix()
      for channel in self.channels:
        for part in channel.parts:
          suffix = f'{channel.value}_{part}' if part else channel.value
          names.append(f'{prefix}#{suffix}')
    names.append(DOP_SLOT_NAME)
    return names

  def to_dict(self) -> Dict[str, Any]:
    return {
        'version': REGISTRY_FORMAT_VERSION,
        'channels': [c.value for c in self.channels],
        'log_transform': self.log_transform,
        'keys': [k.to_dict() for k in self.keys],
    }

  @classmethod
  def from_dict(cls, d: Mapping[str, Any]) -> 'FeatureRegistry':
    version = d.get('version')
    if version != REGISTRY_FORMAT_VERSION:
      raise ValueError(
          f'Unsupported registry version {version!r}, expected '
          f'{REGISTRY_FORMAT_VERSION}.')
    return cls(
        keys=tuple(plan_lib.CompositeKey.from_dict(k) for k in d['keys']),
        channels=Channel.parse_set(d['channels']),
        log_transform=bool(d.get('log_transform', False)))

  def save(self, path: str) -> None:
    utils.write_json(self.to_dict(), path)

  @classmethod
  def load(cls, path: str) -> 'FeatureRegistry':
    return cls.from_dict(utils.read_json(path))


@dataclasses.dataclass(frozen=True)
class FeatureVector:
  """A plan encoding produced by a registry.

  Attributes:
    values: Dense vector; the last entry is the DOP slot.
    registry_fingerprint: Fingerprint of the producing registry.
    unknown_keys: Number of distinct plan keys absent from the registry.
  """
  values: np.ndarray
  registry_fingerprint: str
  unknown_keys: int = 0

  def __post_init__(self):
    values = np.array(self.values, dtype=np.float64)
    values.flags.writeable = False
    object.__setattr__(self, 'values', values)

  @property
  def dimension(self) -> int:
    return int(self.values.shape[0])

  @property
  def dop(self) -> float:
    return float(self.values[-1])

  def __eq__(self, other):
    if not isinstance(other, FeatureVector):
      return NotImplemented
    return (self.registry_fingerprint == other.registry_fingerprint and
            self.unknown_keys == other.unknown_keys and
            np.array_equal(self.values, other.values))


@dataclasses.dataclass(frozen=True)
class TrainingPoint:
  """A featurized plan at one DOP with its measured latency."""
  features: FeatureVector
  dop: int
  latency_ms: float
  plan_id: str
  template_id: Optional[str] = None
  corpus_id: Optional[str] = None


def build_registry(
    plans: Sequence[plan_lib.QueryPlan],
    channels: Iterable[Channel] = DEFAULT_CHANNELS,
    log_transform: bool = False) -> FeatureRegistry:
  """Builds a registry over every composite key of the plans.

  Plans are visited in plan-id order and nodes in node-id order, so the
  slot layout depends only on the set of plans.

  Args:
    plans: Plans to collect keys from.
    channels: Channels to enable.
    log_transform: Whether to log1p-transform CARD, COST and WEIGHT.

  Returns:
    The registry.

  Raises:
    EmptyCorpusError if plans is empty.
  """
  if not plans:
    raise EmptyCorpusError()
  keys = {}
  for p in sorted(plans, key=lambda p: p.plan_id):
    for key in plan_lib.plan_keys(p):
      keys.setdefault(key, None)
  registry = FeatureRegistry(
      keys=tuple(keys), channels=tuple(channels), log_transform=log_transform)
  logging.info('Built feature registry with %d keys over %d plans '
               '(channels=%s, dimension=%d).', len(registry.keys), len(plans),
               ','.join(c.value for c in registry.channels),
               registry.dimension)
  return registry


def node_heights(plan: plan_lib.QueryPlan) -> Dict[int, int]:
  """Returns the height of every node; leaves have height 1."""
  heights = {}
  for node_id in plan.postorder():
    children = plan.node(node_id).children
    heights[node_id] = 1 + max((heights[c] for c in children), default=0)
  return heights


def node_weights(plan: plan_lib.QueryPlan) -> Dict[int, float]:
  """Returns the recursive weight of every node.

  A leaf weighs its estimated output bytes. An internal node weighs the sum
  over its children of child weight times child height.

  Args:
    plan: Plan to evaluate.

  Returns:
    Map from node id to weight.
  """
  heights = node_heights(plan)
  weights = {}
  for node_id in plan.postorder():
    node = plan.node(node_id)
    if node.is_leaf:
      weights[node_id] = node.est_output_bytes
    else:
      weights[node_id] = math.fsum(
          weights[c] * heights[c] for c in node.children)
  return weights


def featurize(plan: plan_lib.QueryPlan,
              registry: FeatureRegistry) -> FeatureVector:
  """Encodes a plan as a feature vector with the DOP slot left at 0.

  Args:
    plan: Plan to encode.
    registry: Registry fixing the slot layout.

  Returns:
    Feature vector. Keys missing from the registry are skipped and counted
    in its unknown_keys field.
  """
  values = np.zeros(registry.dimension, dtype=np.float64)
  width = registry.block_width
  offsets = registry.channel_offsets
  weights = node_weights(plan) if Channel.WEIGHT in offsets else {}
  unknown = set()
  # fsum makes every slot independent of node and sibling order.
  sums = {}
  for node in plan.nodes:
    key = plan_lib.composite_key(node)
    index = registry.key_index(key)
    if index is None:
      unknown.add(key)
      continue
    base = index * width
    contributions = []
    if Channel.COUNT in offsets:
      contributions.append((base + offsets[Channel.COUNT], 1.0))
    if Channel.CARD in offsets:
      contributions.append((base + offsets[Channel.CARD],
                            node.est_output_bytes))
    if Channel.COST in offsets:
      contributions.append((base + offsets[Channel.COST], node.est_cpu_cost))
      contributions.append((base + offsets[Channel.COST] + 1,
                            node.est_io_cost))
    if Channel.WEIGHT in offsets:
      contributions.append((base + offsets[Channel.WEIGHT],
                            weights[node.node_id]))
    for slot, value in contributions:
      sums.setdefault(slot, []).append(value)
  for slot, parts in sums.items():
    values[slot] = math.fsum(parts)

  if registry.log_transform:
    for channel in (Channel.CARD, Channel.COST, Channel.WEIGHT):
      if channel not in offsets:
        continue
      for part in range(channel.width):
        slots = (np.arange(len(registry.keys)) * width + offsets[channel] +
                 part)
        values[slots] = np.log1p(values[slots])

  if unknown:
    logging.debug('Plan %s has %d keys unknown to the registry.',
                  plan.plan_id, len(unknown))
  return FeatureVector(values=values,
                       registry_fingerprint=registry.fingerprint,
                       unknown_keys=len(unknown))


def featurize_many(plans: Iterable[plan_lib.QueryPlan],
                   registry: FeatureRegistry) -> Dict[str, FeatureVector]:
  vectors = {p.plan_id: featurize(p, registry) for p in plans}
  unknown = sum(1 for v in vectors.values() if v.unknown_keys)
  if unknown:
    logging.warning('%d of %d plans contain keys unknown to the registry.',
                    unknown, len(vectors))
  return vectors


def attach_dop(vector: FeatureVector, dop: int) -> FeatureVector:
  """Returns a copy of the vector with the DOP slot set."""
  dop = check_dop(dop)
  values = vector.values.copy()
  values[-1] = float(dop)
  return FeatureVector(values=values,
                       registry_fingerprint=vector.registry_fingerprint,
                       unknown_keys=vector.unknown_keys)


def feature_frame(plans: Sequence[plan_lib.QueryPlan],
                  registry: FeatureRegistry,
                  dop_set: Sequence[int]) -> pd.DataFrame:
  """Builds the feature matrix with one row per (plan, dop).

  Args:
    plans: Plans to featurize.
    registry: Registry fixing the layout.
    dop_set: DOPs to attach to every plan.

  Returns:
    DataFrame with plan_id, template_id, corpus_id and one column per slot;
    the last column is "dop".
  """
  vectors = featurize_many(plans, registry)
  names = registry.slot_names()
  records = []
  for p in sorted(plans, key=lambda p: p.plan_id):
    for dop in sorted(dop_set):
      values = attach_dop(vectors[p.plan_id], dop).values
      record = {'plan_id': p.plan_id,
                'template_id': p.template_id or '',
                'corpus_id': p.corpus_id or ''}
      record.update(zip(names, values.tolist()))
      records.append(record)
  return pd.DataFrame.from_records(
      records, columns=['plan_id', 'template_id', 'corpus_id'] + names)


def write_feature_matrix(frame: pd.DataFrame, path: str) -> None:
  utils.ensure_dir(os.path.dirname(path))
  frame.to_csv(path, index=False)


def read_feature_matrix(path: str,
                        registry: FeatureRegistry) -> pd.DataFrame:
  """Reads a feature CSV and checks its header against the registry."""
  frame = pd.read_csv(path, dtype={'plan_id': str, 'template_id': str,
                                   'corpus_id': str}, keep_default_na=False)
  names = registry.slot_names()
  missing = [n for n in names if n not in frame.columns]
  if missing:
    raise ValueError(
        f'Feature matrix "{path}" does not match the registry; missing '
        f'{len(missing)} columns, e.g. "{missing[0]}".')
  return frame
