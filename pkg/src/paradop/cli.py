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

r"""Command-line surface of paradop.

Usage:

  paradop_main.py <subcommand> [--flag=value ...]

Subcommands:

  featurize  --plans                          -> registry.json, features.csv
  train      --features --latencies --registry -> model.json
  predict    --model --registry --plans        -> predictions.csv
  recommend  --model --registry --plans        -> recommendations.json
  curve      --latencies, or --model --registry --plans
                                             -> workload_curve.csv,
                                                capped_curve.csv
  evaluate   --config (experiment JSON)       -> report.json, folds.csv, ...
  synth      --config (corpus spec JSON)      -> plans.jsonl, latencies.csv
  tune       --features --latencies --registry --grid
                                             -> best_spec.json, cv.csv

Outputs go to --output_dir, which defaults to $PARADOP_OUTPUT_DIR. Exit code
is 0 on success, 1 on a usage error and 2 when the work itself fails.
"""

import logging as native_logging
import os
import sys
from typing import Any, Callable, Dict, List, Sequence

from absl import flags
from absl import logging
import pandas as pd
from paradop import featurization
from paradop import harness
from paradop import plan as plan_lib
from paradop import selection
from paradop import synth
from paradop import utils
from paradop.model import data
from paradop.model import models

OUTPUT_DIR_ENV = 'PARADOP_OUTPUT_DIR'
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

REGISTRY_FILE = 'registry.json'
FEATURES_FILE = 'features.csv'
MODEL_FILE = 'model.json'
PREDICTIONS_FILE = 'predictions.csv'
RECOMMENDATIONS_FILE = 'recommendations.json'
WORKLOAD_CURVE_FILE = 'workload_curve.csv'
CAPPED_CURVE_FILE = 'capped_curve.csv'
BUDGET_FILE = 'budget.json'
BEST_SPEC_FILE = 'best_spec.json'
CV_FILE = 'cv.csv'


class UsageError(Exception):
  """Raised when flags are missing or inconsistent."""


def define_flags(flag_values: flags.FlagValues) -> None:
  """Defines every flag of the command line on flag_values."""
  # General flags.
  flags.DEFINE_string(
      'output_dir', os.environ.get(OUTPUT_DIR_ENV),
      f'Directory for every output file. Defaults to ${OUTPUT_DIR_ENV}.',
      flag_values=flag_values)
  flags.DEFINE_integer('seed', 0, 'Seed of every random draw.',
                       flag_values=flag_values)
  flags.DEFINE_list(
      'dop_set', [str(d) for d in data.DEFAULT_DOP_SET],
      'Comma-separated DOPs to predict, train and select over.',
      flag_values=flag_values)
  flags.DEFINE_list(
      'channels', [c.value for c in featurization.DEFAULT_CHANNELS],
      'Comma-separated feature channels: count, card, cost, weight.',
      flag_values=flag_values)
  flags.DEFINE_bool('log_transform', False,
                    'If true, log1p-transforms card, cost and weight slots.',
                    flag_values=flag_values)
  flags.DEFINE_integer('baseline_dop', 64,
                       'DOP that speedup and costup are relative to.',
                       flag_values=flag_values)
  flags.DEFINE_integer(
      'verbosity', 0,
      'Logging verbosity: -1 warnings only, 0 info, 1 debug.',
      flag_values=flag_values)
  flags.DEFINE_string('log_file', None,
                      'If set, logs are also written to this file.',
                      flag_values=flag_values)

  # Inputs.
  flags.DEFINE_string('plans', None, 'Plan file, one JSON plan per line.',
                      flag_values=flag_values)
  flags.DEFINE_string('latencies', None,
                      'Latency CSV with columns plan_id, dop, latency_ms.',
                      flag_values=flag_values)
  flags.DEFINE_string('features', None, 'Feature CSV written by featurize.',
                      flag_values=flag_values)
  flags.DEFINE_string('registry', None, 'Registry JSON written by featurize.',
                      flag_values=flag_values)
  flags.DEFINE_string('model', None, 'Model file written by train.',
                      flag_values=flag_values)
  flags.DEFINE_string('config', None,
                      'Experiment config (evaluate) or corpus spec (synth).',
                      flag_values=flag_values)
  flags.DEFINE_string('grid', None, 'Grid-search config JSON (tune).',
                      flag_values=flag_values)

  # Model flags.
  flags.DEFINE_enum('model_kind', models.ModelKind.RANDOM_FOREST.value,
                    [k.value for k in models.ModelKind], 'Model family.',
                    flag_values=flag_values)
  flags.DEFINE_list('hparams', [],
                    'Hyper-parameter overrides, e.g. n_trees=50,max_depth=8.',
                    flag_values=flag_values)
  flags.DEFINE_enum('target_space', models.TargetSpace.RAW.value,
                    [t.value for t in models.TargetSpace],
                    'Whether to fit raw or log latencies.',
                    flag_values=flag_values)

  # Curve flags.
  flags.DEFINE_enum('source', selection.CurveSource.PREDICTED.value,
                    [s.value for s in selection.CurveSource],
                    'Whether curves come from a model or measured latencies.',
                    flag_values=flag_values)
  flags.DEFINE_float(
      'max_costup', None,
      'If set, curve also picks the fastest DOP within this costup.',
      flag_values=flag_values)


class _Context:
  """Parsed flags shared by the subcommands."""

  def __init__(self, fv: flags.FlagValues):
    self.fv = fv
    if not fv.output_dir:
      raise UsageError(f'--output_dir or ${OUTPUT_DIR_ENV} must be set.')
    self.output_dir = fv.output_dir
    try:
      self.dop_set = data.normalize_dop_set(
          utils.parse_int_list(fv.dop_set))
      self.channels = featurization.Channel.parse_set(fv.channels)
      self.hparams = utils.parse_key_values(fv.hparams)
    except ValueError as e:
      raise UsageError(str(e)) from None

  def require(self, *names: str) -> None:
    missing = [f'--{n}' for n in names if not getattr(self.fv, n)]
    if missing:
      raise UsageError(f'Missing required flags: {", ".join(missing)}.')

  def path(self, name: str) -> str:
    return os.path.join(self.output_dir, name)

  def model_spec(self) -> models.ModelSpec:
    return models.ModelSpec(kind=self.fv.model_kind,
                            hyperparams=self.hparams, seed=self.fv.seed,
                            target_space=self.fv.target_space)


def _featurize(ctx: _Context) -> None:
  ctx.require('plans')
  plans = plan_lib.read_plans_file(ctx.fv.plans)
  if ctx.fv.registry:
    registry = featurization.FeatureRegistry.load(ctx.fv.registry)
  else:
    registry = featurization.build_registry(plans, ctx.channels,
                                            ctx.fv.log_transform)
  registry.save(ctx.path(REGISTRY_FILE))
  frame = featurization.feature_frame(plans, registry, ctx.dop_set)
  featurization.write_feature_matrix(frame, ctx.path(FEATURES_FILE))


def _load_dataset(ctx: _Context) -> data.Dataset:
  ctx.require('features', 'latencies', 'registry')
  registry = featurization.FeatureRegistry.load(ctx.fv.registry)
  features = featurization.read_feature_matrix(ctx.fv.features, registry)
  latencies = data.read_latencies(ctx.fv.latencies)
  latencies = latencies[latencies['dop'].isin(ctx.dop_set)]
  return data.dataset_from_frames(features, latencies, registry)


def _train(ctx: _Context) -> None:
  spec = ctx.model_spec()
  model = models.train(spec, _load_dataset(ctx))
  models.write_model_file(model, ctx.path(MODEL_FILE))


def _load_model(ctx: _Context):
  ctx.require('model', 'registry', 'plans')
  registry = featurization.FeatureRegistry.load(ctx.fv.registry)
  model = models.read_model_file(ctx.fv.model, registry.fingerprint)
  plans = sorted(plan_lib.read_plans_file(ctx.fv.plans),
                 key=lambda p: p.plan_id)
  return model, registry, plans


def _predicted_rows(ctx: _Context) -> Dict[str, Dict[int, float]]:
  model, registry, plans = _load_model(ctx)
  return {p.plan_id: selection.predict_row(model, registry, p, ctx.dop_set)
          for p in plans}


def _predict(ctx: _Context) -> None:
  rows = _predicted_rows(ctx)
  records = [(plan_id, dop, latency)
             for plan_id, row in rows.items() for dop, latency in row.items()]
  utils.ensure_dir(ctx.output_dir)
  pd.DataFrame.from_records(
      records, columns=['plan_id', 'dop', 'predicted_ms']).to_csv(
          ctx.path(PREDICTIONS_FILE), index=False)


def _recommend(ctx: _Context) -> None:
  rows = _predicted_rows(ctx)
  recommendations = [selection.recommend_row(p, row)
                     for p, row in rows.items()]
  recommendations.append(selection.recommend_workload(rows))
  selection.write_recommendations_json(recommendations,
                                       ctx.path(RECOMMENDATIONS_FILE))


def _curve(ctx: _Context) -> None:
  source = selection.CurveSource(ctx.fv.source)
  if source == selection.CurveSource.ACTUAL:
    ctx.require('latencies')
    latencies = data.read_latencies(ctx.fv.latencies)
    latencies = latencies[latencies['dop'].isin(ctx.dop_set)]
    rows = {}
    for plan_id, dop, latency in latencies.itertuples(index=False):
      rows.setdefault(plan_id, {})[int(dop)] = float(latency)
  else:
    rows = _predicted_rows(ctx)
  curve = selection.workload_curve(rows, ctx.fv.baseline_dop, source)
  selection.write_curves_csv([curve], ctx.path(WORKLOAD_CURVE_FILE))
  dops = sorted(next(iter(rows.values())))
  selection.per_query_capped_curve(rows, dops, ctx.fv.baseline_dop).to_csv(
      ctx.path(CAPPED_CURVE_FILE), index=False)
  if ctx.fv.max_costup is not None:
    dop = selection.select_for_budget(curve, ctx.fv.max_costup)
    utils.write_json({'max_costup': ctx.fv.max_costup, 'dop': dop},
                     ctx.path(BUDGET_FILE))


def _evaluate(ctx: _Context) -> None:
  ctx.require('config')
  config = harness.ExperimentConfig.init_from_json_path(ctx.fv.config)
  harness.run_from_config(config, ctx.output_dir)


def _synth(ctx: _Context) -> None:
  ctx.require('config')
  spec = synth.CorpusSpec.init_from_json_path(ctx.fv.config)
  if ctx.fv['seed'].present:
    spec.seed = ctx.fv.seed
  synth.write_corpus(ctx.output_dir, synth.generate_corpus(spec))


def _tune(ctx: _Context) -> None:
  """Grid-searches the candidates of a grid config.

  The grid config looks like

    {"folds": 5,
     "candidates": [{"kind": "random_forest", "grid": {"n_trees": [10, 50]}},
                    {"kind": "elastic_net", "grid": {"alpha": [0.1, 1.0]}}]}
  """
  ctx.require('grid')
  grid = utils.read_json(ctx.fv.grid)
  specs = []
  for candidate in grid['candidates']:
    specs.extend(models.expand_grid(
        candidate['kind'], candidate.get('grid', {}), ctx.fv.seed,
        candidate.get('target_space', ctx.fv.target_space)))
  best, report = models.grid_search(specs, _load_dataset(ctx),
                                    folds=int(grid.get('folds', 5)),
                                    seed=ctx.fv.seed)
  utils.write_json(best.to_dict(), ctx.path(BEST_SPEC_FILE))
  report.to_frame().to_csv(ctx.path(CV_FILE), index=False)
  logging.info('Best spec: %s.', best.label)


SUBCOMMANDS: Dict[str, Callable[[_Context], None]] = {
    'featurize': _featurize,
    'train': _train,
    'predict': _predict,
    'recommend': _recommend,
    'curve': _curve,
    'evaluate': _evaluate,
    'synth': _synth,
    'tune': _tune,
}


def _usage(fv: flags.FlagValues) -> str:
  return (f'{__doc__}\nFlags:\n{fv.get_help()}')


def _add_log_file(path: str) -> native_logging.Handler:
  utils.ensure_dir(os.path.dirname(path))
  handler = native_logging.FileHandler(path, mode='w')
  logging.get_absl_logger().addHandler(handler)
  return handler


def cli_dispatch(argv: Sequence[str]) -> int:
  """Runs the subcommand named in argv and returns the exit code.

  Args:
    argv: Program name, subcommand and flags.

  Returns:
    EXIT_OK, EXIT_USAGE or EXIT_RUNTIME.
  """
  fv = flags.FlagValues()
  define_flags(fv)
  if any(a in ('-h', '--help', '--helpfull') for a in argv[1:]):
    print(_usage(fv))
    return EXIT_OK
  try:
    positional: List[Any] = fv(list(argv))[1:]
  except flags.Error as e:
    print(f'Error: {e}\n', file=sys.stderr)
    return EXIT_USAGE
  if len(positional) != 1 or positional[0] not in SUBCOMMANDS:
    print(f'Error: expected one subcommand of {sorted(SUBCOMMANDS)}, got '
          f'{positional}.\n\n{_usage(fv)}', file=sys.stderr)
    return EXIT_USAGE

  logging.set_verbosity(fv.verbosity)
  handler = _add_log_file(fv.log_file) if fv.log_file else None
  try:
    ctx = _Context(fv)
    SUBCOMMANDS[positional[0]](ctx)
  except UsageError as e:
    print(f'Error: {e}', file=sys.stderr)
    return EXIT_USAGE
  except (utils.ParadopError, OSError, KeyError, TypeError, ValueError) as e:
    logging.error('%s failed with %s: %s', positional[0], type(e).__name__, e)
    return EXIT_RUNTIME
  finally:
    if handler:
      logging.get_absl_logger().removeHandler(handler)
      handler.close()
  logging.info('%s finished; outputs are in %s.', positional[0],
               ctx.output_dir)
  return EXIT_OK
