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

"""Synthetic workloads with a parametric ground-truth latency oracle.

Every template belongs to one of four archetypes describing how its latency
reacts to the DOP:

  flat            no benefit from parallelism
  parallelizable  latency falls close to 1/DOP over the whole DOP range
  saturating      speedup stops at a saturation DOP, then contention grows
  spill_cliff     like parallelizable until a spill DOP, then a fixed penalty

The latency of a plan at DOP d is

  serial_ms + parallel_ms / min(d, saturation_dop) + contention_per_dop_ms * d
    + spill_penalty_ms (spill_cliff only, when d > spill_dop)

times lognormal noise. Serial, parallel and spill terms are scaled by the
plan's total leaf output, so the estimates in the generated plans carry the
signal a model needs.
"""

import dataclasses
import enum
import math
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from absl import logging
import numpy as np
import pandas as pd
from paradop import featurization
from paradop import plan as plan_lib
from paradop import utils
from paradop.model import data

BYTES_PER_UNIT = 1e6


@dataclasses.dataclass(frozen=True)
class SchemaProfile:
  """How a schema shapes the plans drawn against it.

  Plans never name tables; two schemas differ only in the shapes and
  cardinalities their plans show the featurizer.

  Attributes:
    extra_depth: Operator levels added to every drawn template depth.
    leaf_share_range: Range of the relative output of one leaf.
    selectivity_range: Range of the output-to-input ratio of an internal
      operator.
  """
  extra_depth: int = 0
  leaf_share_range: Tuple[float, float] = (0.2, 1.)
  selectivity_range: Tuple[float, float] = (0.1, 1.)


SCHEMAS = {
    # Normalized tables of similar size.
    'a': SchemaProfile(),
    # Star schema: one more join level, a dominant fact table and selective
    # dimension filters.
    'b': SchemaProfile(extra_depth=1, leaf_share_range=(0.02, 1.),
                       selectivity_range=(0.01, 0.5)),
}


_Operator = Tuple[str, str, bool]


class InvalidSpecError(utils.ParadopError, ValueError):
  """Raised when an archetype or corpus spec is inconsistent."""


class ArchetypeKind(enum.Enum):
  FLAT = 'flat'
  PARALLELIZABLE = 'parallelizable'
  SATURATING = 'saturating'
  SPILL_CLIFF = 'spill_cliff'


@dataclasses.dataclass(frozen=True)
class _Vocabulary:
  internal: Tuple[_Operator, ...]
  leaves: Tuple[_Operator, ...]


# (operator, row_batch, parallel) per archetype. HashMatch appears in two
# archetypes with different modes, so the composite keys still differ.
_VOCABULARIES = {
    ArchetypeKind.FLAT: _Vocabulary(
        internal=(('NestedLoops', 'row', False), ('Top', 'row', False)),
        leaves=(('IndexSeek', 'row', False), ('KeyLookup', 'row', False))),
    ArchetypeKind.PARALLELIZABLE: _Vocabulary(
        internal=(('HashMatch', 'batch', True), ('Filter', 'batch', True)),
        leaves=(('ColumnstoreIndexScan', 'batch', True),)),
    ArchetypeKind.SATURATING: _Vocabulary(
        internal=(('StreamAggregate', 'row', True), ('MergeJoin', 'row', True)),
        leaves=(('TableScan', 'row', True),
                ('ClusteredIndexScan', 'row', True))),
    ArchetypeKind.SPILL_CLIFF: _Vocabulary(
        internal=(('Sort', 'row', True), ('HashMatch', 'row', True)),
        leaves=(('TableScan', 'row', True),
                ('ClusteredIndexScan', 'row', True))),
}


@dataclasses.dataclass(frozen=True)
class TemplateArchetype:
  """Latency profile and plan shape of a family of templates.

  Attributes:
    kind: Archetype.
    serial_ms: DOP-independent latency of one work unit.
    parallel_ms: Latency of one work unit at DOP 1 that parallelizes.
    saturation_dop: DOP beyond which the parallel term stops shrinking.
    contention_per_dop_ms: Latency added per degree of parallelism.
    spill_dop: Largest DOP without a spill; spill_cliff only.
    spill_penalty_ms: Latency of one work unit added above spill_dop.
    noise_sigma: Sigma of the multiplicative lognormal noise.
    depth_range: Inclusive range of operator levels below the gather root;
      the last level holds the leaves.
    fanout_range: Inclusive range of children per internal operator.
    work_range: Range of the per-template work units; one unit is
      BYTES_PER_UNIT bytes of leaf output.
  """
  kind: ArchetypeKind
  serial_ms: float = 0.
  parallel_ms: float = 0.
  saturation_dop: int = 1
  contention_per_dop_ms: float = 0.
  spill_dop: Optional[int] = None
  spill_penalty_ms: float = 0.
  noise_sigma: float = 0.02
  depth_range: Tuple[int, int] = (1, 3)
  fanout_range: Tuple[int, int] = (1, 2)
  work_range: Tuple[float, float] = (0.5, 1.5)

  def __post_init__(self):
    object.__setattr__(self, 'kind', ArchetypeKind(self.kind))
    for name in ('serial_ms', 'parallel_ms', 'contention_per_dop_ms',
                 'spill_penalty_ms', 'noise_sigma'):
      value = getattr(self, name)
      if not math.isfinite(value) or value < 0:
        raise InvalidSpecError(f'{name} must be finite and >= 0, got {value}.')
    if self.saturation_dop < 1:
      raise InvalidSpecError(
          f'saturation_dop must be >= 1, got {self.saturation_dop}.')
    if self.kind == ArchetypeKind.SPILL_CLIFF and self.spill_dop is None:
      raise InvalidSpecError('A spill_cliff archetype needs a spill_dop.')
    for name in ('depth_range', 'fanout_range', 'work_range'):
      low, high = getattr(self, name)
      if low > high or low <= 0:
        raise InvalidSpecError(f'{name} must be a positive (low, high) pair.')
      object.__setattr__(self, name, (low, high))

  def replace(self, **overrides: Any) -> 'TemplateArchetype':
    try:
      return dataclasses.replace(self, **overrides)
    except TypeError as e:
      raise InvalidSpecError(f'Unknown archetype parameter: {e}') from None


def default_archetypes() -> Dict[ArchetypeKind, TemplateArchetype]:
  """Presets producing the four characteristic latency-vs-DOP shapes."""
  return {
      ArchetypeKind.FLAT: TemplateArchetype(
          kind=ArchetypeKind.FLAT, serial_ms=100.),
      ArchetypeKind.PARALLELIZABLE: TemplateArchetype(
          kind=ArchetypeKind.PARALLELIZABLE, serial_ms=5., parallel_ms=2000.,
          saturation_dop=80),
      ArchetypeKind.SATURATING: TemplateArchetype(
          kind=ArchetypeKind.SATURATING, serial_ms=20., parallel_ms=1500.,
          saturation_dop=16, contention_per_dop_ms=1.),
      ArchetypeKind.SPILL_CLIFF: TemplateArchetype(
          kind=ArchetypeKind.SPILL_CLIFF, serial_ms=10., parallel_ms=1200.,
          saturation_dop=80, spill_dop=20, spill_penalty_ms=400.),
  }


def ground_truth_latency(archetype: TemplateArchetype,
                         dop: int,
                         work: float = 1.,
                         rng: Optional[np.random.Generator] = None) -> float:
  """Latency in milliseconds of `work` units of the archetype at a DOP.

  Args:
    archetype: Latency profile.
    dop: Degree of parallelism.
    work: Multiplier of the serial, parallel and spill terms.
    rng: Source of the lognormal noise. Required when noise_sigma > 0.

  Returns:
    Latency in milliseconds.

  Raises:
    InvalidDopError if dop is not a positive integer.
    ValueError if the archetype is noisy and rng is None.
  """
  dop = featurization.check_dop(dop)
  latency = work * (archetype.serial_ms +
                    archetype.parallel_ms / min(dop, archetype.saturation_dop))
  latency += archetype.contention_per_dop_ms * dop
  if (archetype.kind == ArchetypeKind.SPILL_CLIFF and
      dop > archetype.spill_dop):
    latency += work * archetype.spill_penalty_ms
  if archetype.noise_sigma > 0:
    if rng is None:
      raise ValueError('Noisy latencies need a random generator.')
    latency *= float(np.exp(rng.normal(0., archetype.noise_sigma)))
  return latency


@dataclasses.dataclass(frozen=True)
class TemplateGroup:
  archetype: TemplateArchetype
  n_templates: int = 1
  n_plans: int = 1


@dataclasses.dataclass
class CorpusSpec:
  """What generate_corpus produces.

  Attributes:
    groups: Archetypes with their template and plan counts.
    dop_set: DOPs of the latency grid.
    seed: Seed of every random draw.
    corpus_id: Stamped on every plan.
    scale: Multiplier of leaf output and work, standing in for data scale.
    schema: Key of SCHEMAS shaping the plans.
    plan_jitter: Plans of a template differ in work by up to this fraction.
  """
  groups: List[TemplateGroup]
  dop_set: Tuple[int, ...] = data.DEFAULT_DOP_SET
  seed: int = 0
  corpus_id: str = 'synthetic'
  scale: float = 1.
  schema: str = 'a'
  plan_jitter: float = 0.15

  def validate(self) -> None:
    if not self.groups:
      raise InvalidSpecError('A corpus spec needs at least one group.')
    try:
      self.dop_set = data.normalize_dop_set(self.dop_set)
    except (featurization.InvalidDopError, data.MalformedLatencyError) as e:
      raise InvalidSpecError(f'Invalid dop_set: {e}') from None
    for group in self.groups:
      if group.n_templates < 1 or group.n_plans < 1:
        raise InvalidSpecError('Template and plan counts must be >= 1.')
      archetype = group.archetype
      if (archetype.kind == ArchetypeKind.SPILL_CLIFF and
          archetype.spill_dop not in self.dop_set):
        raise InvalidSpecError(
            f'spill_dop {archetype.spill_dop} is not in the DOP set.')
    if not self.scale > 0:
      raise InvalidSpecError(f'scale must be positive, got {self.scale}.')
    if self.schema not in SCHEMAS:
      raise InvalidSpecError(
          f'Unknown schema {self.schema!r}; expected one of {sorted(SCHEMAS)}.')
    if not 0 <= self.plan_jitter < 1:
      raise InvalidSpecError('plan_jitter must be in [0, 1).')

  @staticmethod
  def from_dict(d: Mapping[str, Any]) -> 'CorpusSpec':
    """Builds a spec from its JSON form.

    Groups name an archetype kind and may override any preset parameter;
    a corpus-level noise_sigma applies to groups that do not set their own.

    Args:
      d: Decoded JSON object.

    Returns:
      The validated spec.

    Raises:
      InvalidSpecError if a field is missing or invalid.
    """
    presets = default_archetypes()
    groups = []
    try:
      for g in d['groups']:
        params = dict(g.get('params', {}))
        if 'noise_sigma' in d:
          params.setdefault('noise_sigma', d['noise_sigma'])
        for name in ('depth_range', 'fanout_range', 'work_range'):
          if name in params:
            params[name] = tuple(params[name])
        archetype = presets[ArchetypeKind(g['kind'])].replace(**params)
        groups.append(TemplateGroup(archetype=archetype,
                                    n_templates=int(g.get('n_templates', 1)),
                                    n_plans=int(g.get('n_plans', 1))))
    except (KeyError, TypeError) as e:
      raise InvalidSpecError(f'Malformed corpus spec: {e!r}') from None
    except ValueError as e:
      raise InvalidSpecError(str(e)) from None
    spec = CorpusSpec(groups=groups)
    for field in dataclasses.fields(CorpusSpec):
      if field.name != 'groups' and field.name in d:
        setattr(spec, field.name, d[field.name])
      elif field.name != 'groups':
        logging.info('%s is not given in the corpus spec; using %s.',
                     field.name, getattr(spec, field.name))
    spec.validate()
    return spec

  @staticmethod
  def init_from_json_path(json_path: str) -> 'CorpusSpec':
    return CorpusSpec.from_dict(utils.read_json(json_path))


def template_id(kind: ArchetypeKind, index: int) -> str:
  return f'{kind.value}-{index}'


def archetype_of(template: Optional[str]) -> Optional[str]:
  """Returns the archetype tag of a template id such as 'flat-3'."""
  if not template or '-' not in template:
    return None
  return template.rsplit('-', 1)[0]


@dataclasses.dataclass(frozen=True)
class _ShapeNode:
  operator: _Operator
  children: Tuple[int, ...]
  share: float  # Leaf share of the template's output; selectivity otherwise.
  attrs: Tuple[Tuple[str, str], ...] = ()


def _draw_shape(archetype: TemplateArchetype, schema: SchemaProfile,
                rng: np.random.Generator) -> List[_ShapeNode]:
  """Draws the operator tree of a template; node 0 gathers the streams."""
  vocabulary = _VOCABULARIES[archetype.kind]
  depth = int(rng.integers(archetype.depth_range[0],
                           archetype.depth_range[1] + 1)) + schema.extra_depth
  nodes: List[Optional[_ShapeNode]] = [None]

  def build(level: int) -> int:
    node_id = len(nodes)
    nodes.append(None)
    if level >= depth:
      operator = vocabulary.leaves[int(rng.integers(len(vocabulary.leaves)))]
      nodes[node_id] = _ShapeNode(
          operator=operator, children=(),
          share=float(rng.uniform(*schema.leaf_share_range)))
      return node_id
    operator = vocabulary.internal[int(rng.integers(len(vocabulary.internal)))]
    fanout = int(rng.integers(archetype.fanout_range[0],
                              archetype.fanout_range[1] + 1))
    children = tuple(build(level + 1) for _ in range(fanout))
    attrs = ()
    if operator[0] == 'HashMatch':
      attrs = (('logical', 'Join' if len(children) > 1 else 'Aggregate'),)
    nodes[node_id] = _ShapeNode(
        operator=operator, children=children,
        share=float(rng.uniform(*schema.selectivity_range)), attrs=attrs)
    return node_id

  child = build(1)
  nodes[0] = _ShapeNode(operator=('Parallelism', 'row', True),
                        children=(child,), share=1.,
                        attrs=(('logical', 'GatherStreams'),))
  return nodes


def _plan_from_shape(shape: Sequence[_ShapeNode], leaf_bytes: float,
                     plan_id: str, template: str,
                     corpus_id: str) -> plan_lib.QueryPlan:
  """Instantiates a template shape whose leaves output leaf_bytes in total."""
  leaf_total = sum(n.share for n in shape if not n.children)
  output: Dict[int, float] = {}
  for node_id in reversed(range(len(shape))):
    node = shape[node_id]
    if node.children:
      output[node_id] = node.share * sum(output[c] for c in node.children)
    else:
      output[node_id] = leaf_bytes * node.share / leaf_total
  nodes = []
  for node_id, node in enumerate(shape):
    name, row_batch, parallel = node.operator
    size = round(output[node_id], 3)
    cpu_weight = 1. if parallel else 0.5
    nodes.append(plan_lib.OperatorNode(
        node_id=node_id,
        operator=name,
        row_batch=plan_lib.RowBatch(row_batch),
        parallel_serial=(plan_lib.ParallelSerial.PARALLEL if parallel else
                         plan_lib.ParallelSerial.SERIAL),
        optional_attrs=node.attrs,
        est_output_bytes=size,
        est_cpu_cost=round(cpu_weight * size / 1e5, 6),
        est_io_cost=0. if node.children else round(size / 1e5, 6),
        children=node.children))
  return plan_lib.validate_plan(plan_lib.QueryPlan(
      plan_id=plan_id, root=0, nodes=tuple(nodes), template_id=template,
      corpus_id=corpus_id))


def generate_corpus(spec: CorpusSpec) -> data.Corpus:
  """Generates plans and their complete latency grid.

  Template t of the corpus draws from its own random stream seeded with
  (seed, t), so the output depends only on the spec.

  Args:
    spec: What to generate.

  Returns:
    The corpus; plan ids are "<corpus_id>/<template_id>/<n>".

  Raises:
    InvalidSpecError if the spec is inconsistent.
  """
  spec.validate()
  schema = SCHEMAS[spec.schema]
  plans = []
  records = []
  index = 0
  per_kind: Dict[ArchetypeKind, int] = {}
  for group in spec.groups:
    archetype = group.archetype
    for _ in range(group.n_templates):
      rng = np.random.default_rng([spec.seed % 2**64, index])
      index += 1
      number = per_kind.get(archetype.kind, 0)
      per_kind[archetype.kind] = number + 1
      template = template_id(archetype.kind, number)
      shape = _draw_shape(archetype, schema, rng)
      template_work = float(rng.uniform(*archetype.work_range))
      for n in range(group.n_plans):
        work = spec.scale * template_work * float(
            rng.uniform(1. - spec.plan_jitter, 1. + spec.plan_jitter))
        plan_id = f'{spec.corpus_id}/{template}/{n}'
        plans.append(_plan_from_shape(shape, work * BYTES_PER_UNIT, plan_id,
                                      template, spec.corpus_id))
        for dop in spec.dop_set:
          records.append((plan_id, dop,
                          ground_truth_latency(archetype, dop, work, rng)))
  corpus = data.Corpus(
      plans=tuple(plans),
      latencies=pd.DataFrame.from_records(records,
                                          columns=data.LATENCY_COLUMNS))
  logging.info('Generated corpus %s: %d templates, %d plans, %d DOPs.',
               spec.corpus_id, index, len(plans), len(spec.dop_set))
  return corpus


def write_corpus(directory: str, corpus: data.Corpus) -> None:
  corpus.save(directory)
  logging.info('Wrote %d plans to %s.', len(corpus), directory)
