# Copyright 2026 The Storyreel Authors.
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
"""Command line of the film pipeline.

  python -m storyreel.pipeline.pipeline_main run --config pipeline.yaml
  python -m storyreel.pipeline.pipeline_main run --config pipeline.yaml \
      --workdir runs/no_rsg --no-rsg
  python -m storyreel.pipeline.pipeline_main resume runs/full
  python -m storyreel.pipeline.pipeline_main inspect runs/full
  python -m storyreel.pipeline.pipeline_main eval --config pipeline.yaml \
      --method full=runs/full --method no_rsg=runs/no_rsg --report reports/
  python -m storyreel.pipeline.pipeline_main dataset build \
      --corpus corpus.yaml --config dataset.yaml --out dataset/
  python -m storyreel.pipeline.pipeline_main study gen --cases study.yaml \
      --out study/ --seed 3

Exit codes: 0 success, 1 unexpected failure, 2 configuration, 3 stage
failure, 4 I/O.
"""

import argparse
import dataclasses
import os
import sys
from typing import List, Optional, Sequence, Tuple

from storyreel.agents import media
from storyreel.common import errors
from storyreel.common import utils
from storyreel.dataset import dataset_main
from storyreel.evaluation import external_metrics
from storyreel.evaluation import judge
from storyreel.evaluation import keyframes
from storyreel.evaluation import questionnaire
from storyreel.evaluation import report as report_lib
from storyreel.gateway import client
from storyreel.gateway import run_log
from storyreel.pipeline import config as config_lib
from storyreel.pipeline import stages
from storyreel.storyboard import storyboard as sb


def parse_methods(values: Sequence[str]) -> List[Tuple[str, str]]:
  """Parses repeated `NAME=WORKDIR` arguments, keeping their order."""
  methods = []
  for value in values:
    name, sep, workdir = value.partition('=')
    if not sep or not name.strip() or not workdir.strip():
      raise errors.ConfigError(
          f'--method expects NAME=WORKDIR, got {value!r}')
    methods.append((name.strip(), workdir.strip()))
  names = [n for n, _ in methods]
  if len(set(names)) != len(names):
    raise errors.ConfigError(f'Method names repeat: {names}')
  return methods


def run_evaluation(
    config: config_lib.PipelineConfig,
    methods: Sequence[Tuple[str, str]],
    report_dir: utils.PathLike,
    granularity: Optional[judge.Granularity] = None,
    metrics_csv: Optional[str] = None,
    gateway: Optional[client.ModelGateway] = None,
    extractor: Optional[keyframes.Extractor] = None,
) -> report_lib.EvalReport:
  """Judges each method's workdir and writes the comparison report.

  Raises:
    ConfigError: no judge endpoints.
    EvaluationError: a workdir has nothing to judge.
    MetricImportError: the metrics file is unreadable.
  """
  config_lib.require_endpoints(config, config_lib.Command.EVAL)
  granularity = judge.Granularity(
      granularity or config.evaluation.granularity)
  metrics = None
  if metrics_csv:
    metrics = external_metrics.import_external_metrics(metrics_csv)
  os.makedirs(report_dir, exist_ok=True)
  owns_gateway = gateway is None
  if gateway is None:
    gateway = client.ModelGateway(
        run_log=run_log.RunLog(
            os.path.join(report_dir, run_log.RUN_LOG_NAME)),
        concurrency_limit=config.concurrency,
        poll_interval=config.poll_interval, seed=config.seed)
  extractor = extractor or media.FrameExtractor(config.extractor)
  try:
    evaluator = judge.Evaluator(
        gateway, config.evaluation.judges, config.evaluation.criteria,
        workers=config.evaluation.workers,
        templates_dir=config.templates_dir)
    results = []
    for name, workdir in methods:
      items = judge.items_from_workdir(workdir, granularity, extractor)
      results.append(evaluator.evaluate_method(name, items, granularity))
  finally:
    if owns_gateway:
      gateway.close()
  report = report_lib.build_report(results, evaluator.evaluator_ids, metrics)
  report_lib.write_report(report, report_dir)
  return report


def run_command(args: argparse.Namespace) -> int:
  config = config_lib.load_config(args.config)
  overrides = {}
  if args.outline:
    overrides['outline'] = os.path.abspath(args.outline)
  if args.workdir:
    overrides['workdir'] = os.path.abspath(args.workdir)
  if args.seed is not None:
    overrides['seed'] = args.seed
  if args.no_rsg:
    overrides['recursion'] = dataclasses.replace(config.recursion,
                                                 recursive=False)
  if args.no_cli:
    overrides['inject_cinematic'] = False
  result = stages.run(config.with_overrides(**overrides),
                      stop_after=args.stop_after)
  _print_result(result)
  return errors.EXIT_OK


def resume_command(args: argparse.Namespace) -> int:
  result = stages.resume(args.workdir, stop_after=args.stop_after)
  _print_result(result)
  return errors.EXIT_OK


def _print_result(result: stages.RunResult) -> None:
  ran = ', '.join(result.executed) or 'nothing'
  print(f'{result.workdir}: ran {ran}')
  if result.manifest is not None:
    print(f'clips: {len(result.manifest.clip_paths)}  frames:'
          f' {result.manifest.total_frames}'
          f'  duration: {result.manifest.duration_s:.1f}s')
  if result.film:
    print(f'film: {result.film}')


def inspect_command(args: argparse.Namespace) -> int:
  print(stages.inspect(args.workdir), end='')
  return errors.EXIT_OK


def eval_command(args: argparse.Namespace) -> int:
  config = config_lib.load_config(args.config)
  methods = parse_methods(args.method)
  if not methods:
    if not config.workdir:
      raise errors.ConfigError('eval needs --method or a configured workdir')
    methods = [(os.path.basename(os.path.normpath(config.workdir)),
                config.workdir)]
  report = run_evaluation(
      config, methods, args.report,
      granularity=args.granularity, metrics_csv=args.metrics)
  print(report_lib.render_report(report), end='')
  return errors.EXIT_OK


def study_gen_command(args: argparse.Namespace) -> int:
  methods, cases = questionnaire.read_cases(args.cases)
  document = questionnaire.gen_questionnaire(methods, cases, args.seed)
  path = questionnaire.write_questionnaire(document, args.out,
                                           copy_videos=not args.no_copy)
  print(f'questionnaire: {path}')
  return errors.EXIT_OK


def study_score_command(args: argparse.Namespace) -> int:
  key = questionnaire.read_key(args.out)
  responses = questionnaire.read_responses(args.responses)
  scores = questionnaire.score_questionnaire(key, responses)
  print(questionnaire.render_scores(scores))
  return errors.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
  parser = argparse.ArgumentParser(
      prog='storyreel',
      description='Turn a story outline into a multi-shot film.')
  subparsers = parser.add_subparsers(dest='command', required=True)

  run = subparsers.add_parser('run', help='Start a new run.')
  run.add_argument('--config', required=True, help='Pipeline config YAML.')
  run.add_argument('--outline', default=None,
                   help='Story outline YAML; overrides the config.')
  run.add_argument('--workdir', default=None,
                   help='Run directory; overrides the config.')
  run.add_argument('--seed', type=int, default=None,
                   help='Sampling seed sent with every chat request.')
  run.add_argument('--stop-after', choices=sb.STAGES, default=None,
                   help='End the run after this stage.')
  run.add_argument('--no-rsg', action='store_true',
                   help='Plan every shot from its scene and script only.')
  run.add_argument('--no-cli', action='store_true',
                   help='Skip the cinematic rewrite of planned shots.')
  run.set_defaults(handler=run_command)

  resume = subparsers.add_parser(
      'resume', help='Continue a run from its first unfinished stage.')
  resume.add_argument('workdir')
  resume.add_argument('--stop-after', choices=sb.STAGES, default=None)
  resume.set_defaults(handler=resume_command)

  inspect = subparsers.add_parser('inspect', help='Summarize a run.')
  inspect.add_argument('workdir')
  inspect.set_defaults(handler=inspect_command)

  evaluate = subparsers.add_parser(
      'eval', help='Judge one or more runs and write a comparison report.')
  evaluate.add_argument('--config', required=True,
                        help='Pipeline config with an evaluation section.')
  evaluate.add_argument('--method', action='append', default=[],
                        help='NAME=WORKDIR; repeat to compare methods.')
  evaluate.add_argument('--report', required=True,
                        help='Directory for the report files.')
  evaluate.add_argument('--granularity', choices=[str(g) for g in
                                                   judge.Granularity],
                        default=None, help='Judge the film or every clip.')
  evaluate.add_argument('--metrics', default=None,
                        help='CSV of externally computed metrics to join.')
  evaluate.set_defaults(handler=eval_command)

  dataset = subparsers.add_parser(
      'dataset', help='Build or check the cinematic fine-tuning dataset.')
  dataset_main.add_subcommands(
      dataset.add_subparsers(dest='dataset_command', required=True))

  study = subparsers.add_parser('study', help='Blinded user studies.')
  study_commands = study.add_subparsers(dest='study_command', required=True)
  gen = study_commands.add_parser('gen', help='Write a questionnaire.')
  gen.add_argument('--cases', required=True, help='Study cases YAML.')
  gen.add_argument('--out', required=True, help='Questionnaire directory.')
  gen.add_argument('--seed', type=int, default=0)
  gen.add_argument('--no-copy', action='store_true',
                   help='Do not copy the renamed videos.')
  gen.set_defaults(handler=study_gen_command)
  score = study_commands.add_parser('score', help='Score collected answers.')
  score.add_argument('--out', required=True, help='Questionnaire directory.')
  score.add_argument('--responses', required=True, help='Responses CSV.')
  score.set_defaults(handler=study_score_command)
  return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
  return dataset_main.dispatch(build_parser().parse_args(argv))


if __name__ == '__main__':
  sys.exit(main())
