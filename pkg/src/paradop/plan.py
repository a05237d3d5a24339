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

"""Query plan trees, operator modes and composite keys.

A query plan is a tree of physical operators. Each node carries the
operator name, its execution modes (row or batch, parallel or serial), a
free-form list of optional attributes and the optimizer's estimates for
output size and CPU/IO cost. Plans are parsed from a JSON document, one
plan per document or one plan per line.
"""

import dataclasses
import enum
import json
import math
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from absl import logging
from paradop import utils


class RowBatch(enum.Enum):
  ROW = 'row'
  BATCH = 'batch'


class ParallelSerial(enum.Enum):
  PARALLEL = 'parallel'
  SERIAL = 'serial'


class MalformedDocumentError(utils.ParadopError, ValueError):
  """Raised when a plan document is not valid JSON or misses fields."""


class DanglingChildError(utils.ParadopError, ValueError):
  """Raised when a node lists a child id that does not exist."""

  def __init__(self, node_id: int, child_id: int):
    super().__init__(f'Node {node_id} references unknown child {child_id}.')
    self.node_id = node_id
    self.child_id = child_id


class CycleDetectedError(utils.ParadopError, ValueError):
  """Raised when a node is its own ancestor."""

  def __init__(self, node_id: int):
    super().__init__(f'Node {node_id} is its own ancestor.')
    self.node_id = node_id


class NegativeEstimateError(utils.ParadopError, ValueError):
  """Raised when an optimizer estimate is negative."""


class UnknownModeError(utils.ParadopError, ValueError):
  """Raised when row_batch or parallel is outside its enumeration."""


class NotATreeError(utils.ParadopError, ValueError):
  """Raised when a node has several parents or is unreachable from root."""


Attrs = Tuple[Tuple[str, str], ...]


def _canonical_attrs(attrs: Iterable[Tuple[str, str]]) -> Attrs:
  return tuple(sorted((str(k), str(v)) for k, v in attrs))


@dataclasses.dataclass(frozen=True, order=True)
class CompositeKey:
  """Identity of an operator configuration.

  Attributes:
    operator: Physical operator name, e.g. "HashMatch".
    row_batch: Row or batch execution mode.
    parallel_serial: Parallel or serial execution.
    optional_attrs: (name, value) pairs sorted by name.
  """
  operator: str
  row_batch: str
  parallel_serial: str
  optional_attrs: Attrs = ()

  def slot_prefix(self) -> str:
    attrs = ';'.join(f'{k}={v}' for k, v in self.optional_attrs)
    return (f'{self.operator}/{self.row_batch}/{self.parallel_serial}/'
            f'{attrs}')

  def to_dict(self) -> Dict[str, Any]:
    return {
        'op': self.operator,
        'row_batch': self.row_batch,
        'parallel_serial': self.parallel_serial,
        'attrs': [list(a) for a in self.optional_attrs],
    }

  @classmethod
  def from_dict(cls, d: Mapping[str, Any]) -> 'CompositeKey':
    return cls(
        operator=d['op'],
        row_batch=d['row_batch'],
        parallel_serial=d['parallel_serial'],
        optional_attrs=_canonical_attrs(tuple(a) for a in d['attrs']))


@dataclasses.dataclass(frozen=True)
class OperatorNode:
  """A physical operator in a query plan.

  Attributes:
    node_id: Identifier, unique within the plan.
    operator: Physical operator name.
    row_batch: Execution mode.
    parallel_serial: Whether the operator runs in parallel.
    optional_attrs: (name, value) pairs sorted by name.
    est_output_bytes: Estimated output size in bytes.
    est_cpu_cost: Estimated CPU cost in optimizer units.
    est_io_cost: Estimated IO cost in optimizer units.
    children: Child node ids in plan order.
  """
  node_id: int
  operator: str
  row_batch: RowBatch
  parallel_serial: ParallelSerial
  optional_attrs: Attrs = ()
  est_output_bytes: float = 0.0
  est_cpu_cost: float = 0.0
  est_io_cost: float = 0.0
  children: Tuple[int, ...] = ()

  def __post_init__(self):
    object.__setattr__(self, 'optional_attrs',
                       _canonical_attrs(self.optional_attrs))

  @property
  def is_leaf(self) -> bool:
    return not self.children


@dataclasses.dataclass(frozen=True)
class QueryPlan:
  """An immutable, validated query plan tree."""
  plan_id: str
  root: int
  nodes: Tuple[OperatorNode, ...]
  template_id: Optional[str] = None
  corpus_id: Optional[str] = None

  def __post_init__(self):
    by_id = {n.node_id: n for n in self.nodes}
    object.__setattr__(self, '_by_id', by_id)

  def node(self, node_id: int) -> OperatorNode:
    return self._by_id[node_id]

  @property
  def node_ids(self) -> Sequence[int]:
    return [n.node_id for n in self.nodes]

  def postorder(self) -> List[int]:
    """Returns node ids with every child before its parent."""
    order = []
    stack = [(self.root, False)]
    while stack:
      node_id, expanded = stack.pop()
      if expanded:
        order.append(node_id)
        continue
      stack.append((node_id, True))
      for child in reversed(self.node(node_id).children):
        stack.append((child, False))
    return order


def composite_key(node: OperatorNode) -> CompositeKey:
  return CompositeKey(
      operator=node.operator,
      row_batch=node.row_batch.value,
      parallel_serial=node.parallel_serial.value,
      optional_attrs=_canonical_attrs(node.optional_attrs))


def plan_keys(plan: QueryPlan) -> List[CompositeKey]:
  """Returns the distinct composite keys of a plan in node-id order."""
  seen = {}
  for node in sorted(plan.nodes, key=lambda n: n.node_id):
    seen.setdefault(composite_key(node), None)
  return list(seen)


def _require(d: Mapping[str, Any], field: str, where: str) -> Any:
  if field not in d:
    raise MalformedDocumentError(f'Missing field "{field}" in {where}.')
  return d[field]


def _parse_estimate(raw: Any, field: str, node_id: int) -> float:
  if isinstance(raw, bool) or not isinstance(raw, (int, float)):
    raise MalformedDocumentError(
        f'Field "{field}" of node {node_id} must be a number.')
  value = float(raw)
  if not math.isfinite(value):
    raise MalformedDocumentError(
        f'Field "{field}" of node {node_id} must be finite.')
  if value < 0:
    raise NegativeEstimateError(
        f'Field "{field}" of node {node_id} is negative: {value}.')
  return value


def _parse_node(d: Mapping[str, Any]) -> OperatorNode:
  """Parses one node dictionary of the plan JSON schema."""
  if not isinstance(d, dict):
    raise MalformedDocumentError('Each node must be a JSON object.')
  node_id = _require(d, 'id', 'node')
  if isinstance(node_id, bool) or not isinstance(node_id, int):
    raise MalformedDocumentError(f'Node id must be an integer: {node_id!r}.')
  where = f'node {node_id}'
  operator = _require(d, 'op', where)
  if not isinstance(operator, str) or not operator:
    raise MalformedDocumentError(f'Operator of {where} must be a string.')

  raw_mode = _require(d, 'row_batch', where)
  try:
    row_batch = RowBatch(str(raw_mode).lower())
  except ValueError:
    raise UnknownModeError(
        f'row_batch of {where} must be "row" or "batch", got {raw_mode!r}.'
    ) from None
  parallel = _require(d, 'parallel', where)
  if not isinstance(parallel, bool):
    raise UnknownModeError(
        f'parallel of {where} must be a boolean, got {parallel!r}.')

  attrs = d.get('attrs') or {}
  if not isinstance(attrs, dict):
    raise MalformedDocumentError(f'attrs of {where} must be an object.')
  children = _require(d, 'children', where)
  if not isinstance(children, list) or any(
      isinstance(c, bool) or not isinstance(c, int) for c in children):
    raise MalformedDocumentError(
        f'children of {where} must be a list of integers.')

  return OperatorNode(
      node_id=node_id,
      operator=operator,
      row_batch=row_batch,
      parallel_serial=(ParallelSerial.PARALLEL if parallel
                       else ParallelSerial.SERIAL),
      optional_attrs=_canonical_attrs(attrs.items()),
      est_output_bytes=_parse_estimate(
          _require(d, 'est_output_bytes', where), 'est_output_bytes',
          node_id),
      est_cpu_cost=_parse_estimate(
          _require(d, 'est_cpu_cost', where), 'est_cpu_cost', node_id),
      est_io_cost=_parse_estimate(
          _require(d, 'est_io_cost', where), 'est_io_cost', node_id),
      children=tuple(children))


def _check_acyclic(nodes: Mapping[int, OperatorNode]) -> None:
  """Raises CycleDetectedError if any node reaches itself."""
  white, grey, black = 0, 1, 2
  color = {node_id: white for node_id in nodes}
  for start in sorted(nodes):
    if color[start] != white:
      continue
    stack = [(start, iter(nodes[start].children))]
    color[start] = grey
    while stack:
      node_id, it = stack[-1]
      child = next(it, None)
      if child is None:
        color[node_id] = black
        stack.pop()
      elif color[child] == grey:
        raise CycleDetectedError(child)
      elif color[child] == white:
        color[child] = grey
        stack.append((child, iter(nodes[child].children)))


def validate_plan(plan: QueryPlan) -> QueryPlan:
  """Checks the structural invariants of a plan.

  Args:
    plan: Plan to check.

  Returns:
    The same plan.

  Raises:
    MalformedDocumentError: duplicate node ids or a missing root.
    DanglingChildError: a child id that does not exist.
    CycleDetectedError: a node that is its own ancestor.
    NotATreeError: a node with two parents or unreachable from the root.
  """
  nodes = {}
  for node in plan.nodes:
    if node.node_id in nodes:
      raise MalformedDocumentError(
          f'Duplicate node id {node.node_id} in plan {plan.plan_id}.')
    nodes[node.node_id] = node
  if plan.root not in nodes:
    raise MalformedDocumentError(
        f'Root {plan.root} of plan {plan.plan_id} is not a node.')
  for node in plan.nodes:
    for child in node.children:
      if child not in nodes:
        raise DanglingChildError(node.node_id, child)
  _check_acyclic(nodes)

  parents = {}
  for node in plan.nodes:
    for child in node.children:
      if child in parents or child == plan.root:
        raise NotATreeError(
            f'Node {child} of plan {plan.plan_id} has more than one parent.')
      parents[child] = node.node_id
  unreachable = set(nodes) - set(parents) - {plan.root}
  if unreachable:
    raise NotATreeError(
        f'Nodes {sorted(unreachable)} of plan {plan.plan_id} are not '
        'reachable from the root.')

  if all(n.parallel_serial == ParallelSerial.SERIAL for n in plan.nodes):
    logging.warning('Plan %s has no parallel operator.', plan.plan_id)
  return plan


def plan_from_dict(d: Mapping[str, Any]) -> QueryPlan:
  """Builds and validates a plan from a decoded JSON object."""
  if not isinstance(d, dict):
    raise MalformedDocumentError('A plan must be a JSON object.')
  plan_id = _require(d, 'plan_id', 'plan')
  root = _require(d, 'root', f'plan {plan_id}')
  if isinstance(root, bool) or not isinstance(root, int):
    raise MalformedDocumentError(f'Root of plan {plan_id} must be an int.')
  raw_nodes = _require(d, 'nodes', f'plan {plan_id}')
  if not isinstance(raw_nodes, list) or not raw_nodes:
    raise MalformedDocumentError(
        f'Plan {plan_id} must have a non-empty node list.')
  template_id = d.get('template_id')
  corpus_id = d.get('corpus_id')
  plan = QueryPlan(
      plan_id=str(plan_id),
      root=root,
      nodes=tuple(_parse_node(n) for n in raw_nodes),
      template_id=None if template_id is None else str(template_id),
      corpus_id=None if corpus_id is None else str(corpus_id))
  return validate_plan(plan)


def plan_to_dict(plan: QueryPlan) -> Dict[str, Any]:
  d = {
      'plan_id': plan.plan_id,
      'root': plan.root,
      'nodes': [{
          'id': n.node_id,
          'op': n.operator,
          'row_batch': n.row_batch.value,
          'parallel': n.parallel_serial == ParallelSerial.PARALLEL,
          'attrs': dict(n.optional_attrs),
          'est_output_bytes': n.est_output_bytes,
          'est_cpu_cost': n.est_cpu_cost,
          'est_io_cost': n.est_io_cost,
          'children': list(n.children),
      } for n in plan.nodes],
  }
  if plan.template_id is not None:
    d['template_id'] = plan.template_id
  if plan.corpus_id is not None:
    d['corpus_id'] = plan.corpus_id
  return d


def _decode(document: bytes | str) -> str:
  if isinstance(document, bytes):
    try:
      return document.decode('utf-8')
    except UnicodeDecodeError as e:
      raise MalformedDocumentError(f'Plan document is not UTF-8: {e}') from e
  return document


def parse_plan(document: bytes | str) -> QueryPlan:
  """Parses a document holding exactly one plan.

  Args:
    document: UTF-8 plan JSON.

  Returns:
    Validated plan.

  Raises:
    MalformedDocumentError if the document is not a single JSON plan, and
    the validation errors of validate_plan.
  """
  try:
    d = json.loads(_decode(document))
  except json.JSONDecodeError as e:
    raise MalformedDocumentError(f'Invalid plan JSON: {e}') from e
  return plan_from_dict(d)


def parse_plans(document: bytes | str) -> List[QueryPlan]:
  """Parses a single plan, a JSON array of plans or one plan per line."""
  text = _decode(document)
  try:
    decoded = json.loads(text)
  except json.JSONDecodeError:
    decoded = None
  if isinstance(decoded, dict):
    return [plan_from_dict(decoded)]
  if isinstance(decoded, list):
    return [plan_from_dict(d) for d in decoded]
  plans = []
  for line_number, line in enumerate(text.splitlines(), start=1):
    if not line.strip():
      continue
    try:
      d = json.loads(line)
    except json.JSONDecodeError as e:
      raise MalformedDocumentError(
          f'Invalid plan JSON on line {line_number}: {e}') from e
    plans.append(plan_from_dict(d))
  if not plans:
    raise MalformedDocumentError('Document contains no plans.')
  return plans


def serialize_plan(plan: QueryPlan) -> bytes:
  return utils.canonical_json(plan_to_dict(plan)).encode('utf-8')


def read_plans_file(path: str) -> List[QueryPlan]:
  return parse_plans(utils.read_bytes(path))


def write_plans_file(path: str, plans: Iterable[QueryPlan]) -> None:
  """Writes plans as newline-delimited JSON sorted by plan id."""
  lines = [serialize_plan(p) for p in sorted(plans, key=lambda p: p.plan_id)]
  utils.write_bytes(b'\n'.join(lines) + b'\n', path)


@dataclasses.dataclass(frozen=True)
class PlanStatistics:
  size: int
  depth: int


def plan_statistics(plan: QueryPlan) -> PlanStatistics:
  """Returns the node count and the height of the root."""
  depth = {}
  for node_id in plan.postorder():
    children = plan.node(node_id).children
    depth[node_id] = 1 + max((depth[c] for c in children), default=0)
  return PlanStatistics(size=len(plan.nodes), depth=depth[plan.root])
