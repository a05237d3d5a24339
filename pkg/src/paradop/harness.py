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

"""Generalization splits and end-to-end experiments.

Four levels of generalization are supported:

  G1  plans are held out; train and test share templates, schema and scale
  G2  templates are held out
  G3  whole corpora are held out, e.g. a larger scale of the same schema
  G4  whole corpora are held out, e.g. a different schema

Every fold builds its feature registry from the training plans only, so keys
that only occur in test plans are dropped and tallied.
"""

import dataclasses
import enum
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from absl import logging
import numpy as np
import pandas as pd
from paradop import featurization
from paradop import metrics
from paradop import synth
from paradop import utils
from paradop.model import data
from paradop.model import models

REPORT_FILE = 'report.json'
FOLDS_FILE = 'folds.csv'


class MissingTemplateIdsError(utils.ParadopError, ValueError):
  """Raised when a template split meets plans without template_id."""


class MissingCorpusIdsError(utils.ParadopError, ValueError):
  """Raised when a corpus split meets plans without corpus_id."""


class TooFewTemplatesError(utils.ParadopError, ValueError):

  def __init__(self, templates: int, folds: int):
    super().__init__(
        f'{templates} templates cannot fill {folds} template folds.')


class TooFewPlansError(utils.ParadopError, ValueError):

  def __init__(self, plans: int, folds: int):
    super().__init__(f'{plans} plans cannot fill {folds} plan folds.')


class UnknownCorpusError(utils.ParadopError, ValueError):
  """Raised when a corpus pair names a corpus that is not loaded."""


class LeakageError(utils.ParadopError, ValueError):
  """Raised when a plan, template or corpus is on both sides of a fold."""


class InvalidSplitError(utils.ParadopError, ValueError):
  """Raised when a split spec is inconsistent."""


class SplitLevel(enum.Enum):
  G1 = 'G1'
  G2 = 'G2'
  G3 = 'G3'
  G4 = 'G4'


@dataclasses.dataclass(frozen=True)
class CorpusPair:
  train: Tuple[str, ...]
  test: Tuple[str, ...]

  @staticmethod
  def from_json(value: Any) -> 'CorpusPair':
    """Accepts {"train": ..., "test": ...} or a [train, test] pair."""
    if isinstance(value, Mapping):
      train, test = value['train'], value['test']
    else:
      train, test = value

    def as_tuple(v):
      return (v,) if isinstance(v, str) else tuple(v)

    return CorpusPair(train=as_tuple(train), test=as_tuple(test))

  def to_dict(self) -> Dict[str, List[str]]:
    return {'train': list(self.train), 'test': list(self.test)}


@dataclasses.dataclass(frozen=True)
class SplitSpec:
  """How to split plans into folds.

  Attributes:
    level: Generalization level.
    folds: Number of folds for G1 and G2.
    seed: Seed of the fold assignment.
    corpus_pairs: Train and test corpora of every G3/G4 fold.
  """
  level: SplitLevel = SplitLevel.G1
  folds: int = 5
  seed: int = 0
  corpus_pairs: Tuple[CorpusPair, ...] = ()

  def __post_init__(self):
    try:
      object.__setattr__(self, 'level', SplitLevel(self.level))
    except ValueError:
      raise InvalidSplitError(
          f'Unknown level {self.level!r}; expected one of '
          f'{[l.value for l in SplitLevel]}.') from None
    object.__setattr__(self, 'corpus_pairs', tuple(
        p if isinstance(p, CorpusPair) else CorpusPair.from_json(p)
        for p in self.corpus_pairs))
    if self.level in (SplitLevel.G1, SplitLevel.G2) and self.folds < 2:
      raise InvalidSplitError(f'Need at least 2 folds, got {self.folds}.')
    if self.level in (SplitLevel.G3, SplitLevel.G4) and not self.corpus_pairs:
      raise InvalidSplitError(
          f'Level {self.level.value} needs at least one corpus pair.')

  def to_dict(self) -> Dict[str, Any]:
    return {'level': self.level.value, 'folds': self.folds, 'seed': self.seed,
            'corpus_pairs': [p.to_dict() for p in self.corpus_pairs]}


@dataclasses.dataclass(frozen=True)
class _PlanInfo:
  plan_id: str
  template_id: Optional[str]
  corpus_id: Optional[str]


def _assign_folds(groups: Sequence[str], folds: int,
                  seed: int) -> Dict[str, int]:
  """Puts every group in fold stable_hash(seed, group) % folds.

  A group's fold does not depend on the other groups, so adding plans moves
  no existing plan. If the hash leaves a fold empty, the groups are dealt
  round-robin in hash order instead. Callers guarantee len(groups) >= folds.

  Args:
    groups: Distinct group names.
    folds: Number of folds.
    seed: Split seed.

  Returns:
    The fold of every group.
  """
  hashes = {g: utils.stable_hash(seed, g) for g in groups}
  assignment = {g: h % folds for g, h in hashes.items()}
  if len(set(assignment.values())) == folds:
    return assignment
  logging.warning('Hashing left a fold empty for %d groups in %d folds; '
                  'dealing the groups round-robin.', len(groups), folds)
  ranked = sorted(groups, key=lambda g: (hashes[g], g))
  return {g: i % folds for i, g in enumerate(ranked)}


def _fold_plan_ids(
    plans: Sequence[_PlanInfo],
    spec: SplitSpec) -> List[Tuple[List[str], List[str]]]:
  """Returns the train and test plan ids of every fold."""
  if spec.level == SplitLevel.G1:
    groups = {p.plan_id: p.plan_id for p in plans}
    if len(groups) < spec.folds:
      raise TooFewPlansError(len(groups), spec.folds)
  elif spec.level == SplitLevel.G2:
    missing = [p.plan_id for p in plans if not p.template_id]
    if missing:
      raise MissingTemplateIdsError(
          f'{len(missing)} plans have no template_id, e.g. {missing[0]}.')
    groups = {p.plan_id: p.template_id for p in plans}
    templates = len(set(groups.values()))
    if templates < spec.folds:
      raise TooFewTemplatesError(templates, spec.folds)
  else:
    missing = [p.plan_id for p in plans if not p.corpus_id]
    if missing:
      raise MissingCorpusIdsError(
          f'{len(missing)} plans have no corpus_id, e.g. {missing[0]}.')
    known = {p.corpus_id for p in plans}
    result = []
    for pair in spec.corpus_pairs:
      unknown = sorted((set(pair.train) | set(pair.test)) - known)
      if unknown:
        raise UnknownCorpusError(f'Corpus {unknown[0]} is not loaded.')
      overlap = sorted(set(pair.train) & set(pair.test))
      if overlap:
        raise LeakageError(f'Corpus {overlap[0]} is on both sides of a fold.')
      result.append(
          ([p.plan_id for p in plans if p.corpus_id in pair.train],
           [p.plan_id for p in plans if p.corpus_id in pair.test]))
    return result

  if len({p.corpus_id for p in plans}) > 1:
    logging.warning('Level %s split over plans from %d corpora.',
                    spec.level.value, len({p.corpus_id for p in plans}))
  assignment = _assign_folds(sorted(set(groups.values())), spec.folds,
                             spec.seed)
  result = []
  for fold in range(spec.folds):
    test = [p.plan_id for p in plans if assignment[groups[p.plan_id]] == fold]
    train = [p.plan_id for p in plans if assignment[groups[p.plan_id]] != fold]
    result.append((train, test))
  return result


def check_no_leakage(train: Sequence[_PlanInfo], test: Sequence[_PlanInfo],
                     level: SplitLevel) -> None:
  """Raises LeakageError if the sides share what the level holds out."""
  fields = {SplitLevel.G1: 'plan_id', SplitLevel.G2: 'template_id',
            SplitLevel.G3: 'corpus_id', SplitLevel.G4: 'corpus_id'}
  for field in sorted({'plan_id', fields[level]}):
    shared = ({getattr(p, field) for p in train} &
              {getattr(p, field) for p in test})
    if shared:
      raise LeakageError(
          f'{field} {sorted(shared)[0]} is on both sides of a fold.')


def _dataset_plans(dataset: data.Dataset) -> List[_PlanInfo]:
  seen = {}
  for p in dataset.points:
    seen.setdefault(p.plan_id, _PlanInfo(p.plan_id, p.template_id,
                                         p.corpus_id))
  return [seen[k] for k in sorted(seen)]


def _corpus_plans(corpus: data.Corpus) -> List[_PlanInfo]:
  return [_PlanInfo(p.plan_id, p.template_id, p.corpus_id)
          for p in corpus.plans]


def split(dataset: data.Dataset,
          spec: SplitSpec) -> List[Tuple[data.Dataset, data.Dataset]]:
  """Splits a dataset into (train, test) folds.

  All DOP rows of a plan land on the same side.

  Args:
    dataset: Points with provenance.
    spec: Split to perform.

  Returns:
    One (train, test) pair per fold.

  Raises:
    MissingTemplateIdsError, MissingCorpusIdsError, TooFewTemplatesError,
    TooFewPlansError, UnknownCorpusError or LeakageError.
  """
  plans = _dataset_plans(dataset)
  info = {p.plan_id: p for p in plans}
  folds = []
  for train_ids, test_ids in _fold_plan_ids(plans, spec):
    check_no_leakage([info[i] for i in train_ids],
                     [info[i] for i in test_ids], spec.level)
    folds.append((dataset.select_plans(train_ids),
                  dataset.select_plans(test_ids)))
  return folds


def split_corpus(corpus: data.Corpus,
                 spec: SplitSpec) -> List[Tuple[data.Corpus, data.Corpus]]:
  """Splits a corpus into (train, test) folds the way split does."""
  plans = _corpus_plans(corpus)
  info = {p.plan_id: p for p in plans}
  folds = []
  for train_ids, test_ids in _fold_plan_ids(plans, spec):
    check_no_leakage([info[i] for i in train_ids],
                     [info[i] for i in test_ids], spec.level)
    folds.append((corpus.select_plans(train_ids),
                  corpus.select_plans(test_ids)))
  return folds


def exclude_archetypes(corpus: data.Corpus,
                       archetypes: Sequence[str]) -> data.Corpus:
  """Drops plans whose template id carries one of the archetype tags."""
  if not archetypes:
    return corpus
  excluded = set(archetypes)
  kept = [p.plan_id for p in corpus.plans
          if synth.archetype_of(p.template_id) not in excluded]
  logging.info('Excluding archetypes %s drops %d of %d plans.',
               sorted(excluded), len(corpus) - len(kept), len(corpus))
  return corpus.select_plans(kept)


@dataclasses.dataclass
class FoldReport:
  """Metrics of one fold on both sides of the split."""
  fold: int
  train_plans: int
  test_plans: int
  dimension: int
  unknown_keys: int
  training_mae: float
  train: metrics.MetricsReport
  test: metrics.MetricsReport
  model_file: Optional[str] = None
  registry_file: Optional[str] = None

  def to_dict(self) -> Dict[str, Any]:
    d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
    d['train'] = self.train.to_dict()
    d['test'] = self.test.to_dict()
    return d

  def flat_rows(self) -> List[Dict[str, Any]]:
    rows = []
    for side, report in (('train', self.train), ('test', self.test)):
      row = {'fold': self.fold, 'side': side, 'dimension': self.dimension,
             'unknown_keys': self.unknown_keys}
      row.update(report.flat_row())
      rows.append(row)
    return rows


@dataclasses.dataclass
class ExperimentReport:
  """Per-fold results with the configuration that produced them."""
  label: str
  config: Dict[str, Any]
  folds: List[FoldReport]

  def to_dict(self) -> Dict[str, Any]:
    return {'label': self.label, 'config': self.config,
            'folds': [f.to_dict() for f in self.folds],
            'summary': self.summary()}

  def to_frame(self) -> pd.DataFrame:
    return pd.DataFrame([r for f in self.folds for r in f.flat_rows()])

  def summary(self) -> Dict[str, float]:
    """Averages of the headline test metrics over folds."""
    tests = [f.test for f in self.folds]
    return {
        'test_mae': float(np.mean([t.mae for t in tests])),
        'test_rpe_median': float(np.mean([t.rpe_median for t in tests])),
        'test_tq_ratio': float(np.mean(
            [t.throughputs['realized_tq'] / t.throughputs['oracle_tq']
             for t in tests])),
        'test_tw_ratio': float(np.mean(
            [t.throughputs['realized_tw'] / t.throughputs['oracle_tw']
             for t in tests])),
    }

  def write(self, output_dir: str) -> None:
    utils.write_json(self.to_dict(), os.path.join(output_dir, REPORT_FILE))
    self.to_frame().to_csv(os.path.join(output_dir, FOLDS_FILE), index=False)
    logging.info('Wrote %s report to %s.', self.label, output_dir)


def latency_table(model: models.Model,
                  dataset: data.Dataset) -> metrics.LatencyTable:
  """Pairs the dataset's latencies with the model's predictions."""
  predicted = model.predict_matrix(dataset.features())
  frame = pd.DataFrame({
      'plan_id': [p.plan_id for p in dataset.points],
      'dop': [p.dop for p in dataset.points],
      'actual_ms': dataset.targets(),
      'predicted_ms': predicted,
  })
  return metrics.LatencyTable(frame, dataset.dop_set)


def run_experiment(
    corpus: data.Corpus,
    split_spec: SplitSpec,
    model_spec: models.ModelSpec,
    channels: Sequence[featurization.Channel] = featurization.DEFAULT_CHANNELS,
    log_transform: bool = False,
    dop_set: Optional[Sequence[int]] = None,
    baseline_dop: int = metrics.DEFAULT_BASELINE_DOP,
    rpe_thresholds: Sequence[float] = metrics.DEFAULT_RPE_THRESHOLDS,
    spe_thresholds: Sequence[float] = metrics.DEFAULT_SPE_THRESHOLDS,
    output_dir: Optional[str] = None) -> ExperimentReport:
  """Trains and evaluates one model per fold.

  Args:
    corpus: Plans and latencies of every corpus involved.
    split_spec: How to split the plans.
    model_spec: What to train on every fold.
    channels: Feature channels.
    log_transform: Whether to log1p-transform magnitude channels.
    dop_set: DOPs to train and evaluate on; defaults to the corpus DOPs.
    baseline_dop: DOP of the normalized throughputs.
    rpe_thresholds: Thresholds of the RPE distribution.
    spe_thresholds: Thresholds of the SPE distribution.
    output_dir: If set, the report, models and registries are written here.

  Returns:
    The report.
  """
  channels = featurization.Channel.canonical(channels)
  dop_set = data.normalize_dop_set(dop_set or corpus.dop_set)
  label = featurization.channel_set_label(channels)
  config = {
      'channels': [c.value for c in channels],
      'log_transform': log_transform,
      'dop_set': list(dop_set),
      'baseline_dop': baseline_dop,
      'split': split_spec.to_dict(),
      'model': model_spec.to_dict(),
      'corpus_ids': corpus.corpus_ids,
      'plans': len(corpus),
  }
  fold_reports = []
  for fold, (train_corpus, test_corpus) in enumerate(
      split_corpus(corpus, split_spec)):
    logging.info('%s fold %d: %d train plans, %d test plans.', label, fold,
                 len(train_corpus), len(test_corpus))
    registry = featurization.build_registry(train_corpus.plans, channels,
                                            log_transform)
    train_data = data.featurize_corpus(train_corpus, registry, dop_set)
    test_data = data.featurize_corpus(test_corpus, registry, dop_set)
    model = models.train(model_spec, train_data)
    fold_report = FoldReport(
        fold=fold,
        train_plans=len(train_corpus),
        test_plans=len(test_corpus),
        dimension=registry.dimension,
        unknown_keys=sum({p.plan_id: p.features.unknown_keys
                          for p in test_data.points}.values()),
        training_mae=model.training_summary['training_mae'],
        train=metrics.summarize(latency_table(model, train_data),
                                baseline_dop, rpe_thresholds, spe_thresholds),
        test=metrics.summarize(latency_table(model, test_data), baseline_dop,
                               rpe_thresholds, spe_thresholds))
    if output_dir:
      fold_report.model_file = os.path.join('models', f'fold_{fold}.json')
      fold_report.registry_file = os.path.join('registries',
                                               f'fold_{fold}.json')
      models.write_model_file(
          model, os.path.join(output_dir, fold_report.model_file))
      registry.save(os.path.join(output_dir, fold_report.registry_file))
    logging.info('%s fold %d: test MAE %.4g, median RPE %.4g.', label, fold,
                 fold_report.test.mae, fold_report.test.rpe_median)
    fold_reports.append(fold_report)
  report = ExperimentReport(label=label, config=config, folds=fold_reports)
  if output_dir:
    report.write(output_dir)
  return report


def ablation_channel_sets(
    channels: Sequence[featurization.Channel] = featurization.ALL_CHANNELS
) -> List[Tuple[featurization.Channel, ...]]:
  """Returns the full set followed by the set without each channel."""
  channels = featurization.Channel.canonical(channels)
  sets = [channels]
  if len(channels) > 1:
    sets.extend(tuple(c for c in channels if c != dropped)
                for dropped in channels)
  return sets


def label_dirname(label: str) -> str:
  """Turns 'F' into 'all' and 'F\\{cost,card}' into 'without_card_cost'."""
  if label == 'F':
    return 'all'
  missing = label[len('F\\{'):-1].split(',')
  return 'without_' + '_'.join(sorted(missing))


def run_ablation(
    corpus: data.Corpus,
    split_spec: SplitSpec,
    model_spec: models.ModelSpec,
    channel_sets: Optional[Sequence[Sequence[featurization.Channel]]] = None,
    output_dir: Optional[str] = None,
    **kwargs) -> Dict[str, ExperimentReport]:
  """Runs one experiment per channel set, keyed by the set's label.

  Args:
    corpus: Plans and latencies.
    split_spec: How to split the plans.
    model_spec: What to train.
    channel_sets: Channel sets to compare; defaults to every channel and
      every channel but one.
    output_dir: If set, each experiment writes to a subdirectory named
      after its label.
    **kwargs: Passed on to run_experiment.

  Returns:
    Map from label to report.
  """
  channel_sets = channel_sets or ablation_channel_sets()
  reports = {}
  for channels in channel_sets:
    label = featurization.channel_set_label(channels)
    reports[label] = run_experiment(
        corpus, split_spec, model_spec, channels,
        output_dir=(os.path.join(output_dir, label_dirname(label))
                    if output_dir else None),
        **kwargs)
  return reports


@dataclasses.dataclass
class ExperimentConfig:
  """An experiment described by a JSON file.

  Every field but corpora has a default.
  """
  corpora: List[str]
  level: str = 'G1'
  folds: int = 5
  seed: int = 0
  dop_set: List[int] = dataclasses.field(
      default_factory=lambda: list(data.DEFAULT_DOP_SET))
  channels: List[str] = dataclasses.field(
      default_factory=lambda: [c.value for c in featurization.DEFAULT_CHANNELS])
  log_transform: bool = False
  model: Dict[str, Any] = dataclasses.field(
      default_factory=lambda: {'kind': 'random_forest'})
  corpus_pairs: List[Any] = dataclasses.field(default_factory=list)
  output_dir: Optional[str] = None
  baseline_dop: int = metrics.DEFAULT_BASELINE_DOP
  ablation: List[List[str]] = dataclasses.field(default_factory=list)
  exclude_archetypes: List[str] = dataclasses.field(default_factory=list)
  rpe_thresholds: List[float] = dataclasses.field(
      default_factory=lambda: list(metrics.DEFAULT_RPE_THRESHOLDS))
  spe_thresholds: List[float] = dataclasses.field(
      default_factory=lambda: list(metrics.DEFAULT_SPE_THRESHOLDS))

  @staticmethod
  def from_dict(d: Mapping[str, Any]) -> 'ExperimentConfig':
    """Builds a config, keeping defaults for missing fields.

    Args:
      d: Decoded JSON object.

    Returns:
      The config.

    Raises:
      KeyError if corpora is missing.
      ValueError if the JSON has a field the config does not know.
    """
    config = ExperimentConfig(corpora=list(d['corpora']))
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(d) - names)
    if unknown:
      raise ValueError(f'Unknown experiment config fields: {unknown}')
    for field in dataclasses.fields(ExperimentConfig):
      if field.name in d:
        setattr(config, field.name, d[field.name])
      else:
        logging.info('%s is not given in the experiment config; using %s.',
                     field.name, getattr(config, field.name))
    return config

  @staticmethod
  def init_from_json_path(json_path: str) -> 'ExperimentConfig':
    config = ExperimentConfig.from_dict(utils.read_json(json_path))
    # Corpus paths are relative to the config file.
    base = os.path.dirname(os.path.abspath(json_path))
    config.corpora = [os.path.join(base, c) for c in config.corpora]
    return config

  def split_spec(self) -> SplitSpec:
    return SplitSpec(level=self.level, folds=self.folds, seed=self.seed,
                     corpus_pairs=tuple(self.corpus_pairs))

  def model_spec(self) -> models.ModelSpec:
    return models.ModelSpec(
        kind=self.model['kind'],
        hyperparams=self.model.get('hyperparams', {}),
        seed=self.model.get('seed', self.seed),
        target_space=self.model.get('target_space', 'raw'))

  def channel_set(self) -> Tuple[featurization.Channel, ...]:
    return featurization.Channel.parse_set(self.channels)


def load_corpora(paths: Sequence[str]) -> data.Corpus:
  if not paths:
    raise data.EmptyDatasetError('corpus list')
  return data.merge_corpora([data.Corpus.load(p) for p in paths])


def run_from_config(
    config: ExperimentConfig,
    output_dir: Optional[str] = None) -> Dict[str, ExperimentReport]:
  """Runs the experiment or ablation a config describes.

  Args:
    config: Experiment config.
    output_dir: Overrides config.output_dir.

  Returns:
    Map from channel-set label to report.
  """
  corpus = exclude_archetypes(load_corpora(config.corpora),
                              config.exclude_archetypes)
  kwargs = dict(log_transform=config.log_transform, dop_set=config.dop_set,
                baseline_dop=config.baseline_dop,
                rpe_thresholds=config.rpe_thresholds,
                spe_thresholds=config.spe_thresholds)
  output_dir = output_dir or config.output_dir
  if config.ablation:
    return run_ablation(
        corpus, config.split_spec(), config.model_spec(),
        [featurization.Channel.parse_set(s) for s in config.ablation],
        output_dir=output_dir, **kwargs)
  report = run_experiment(corpus, config.split_spec(), config.model_spec(),
                          config.channel_set(), output_dir=output_dir,
                          **kwargs)
  return {report.label: report}
