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
"""Stage runner of the film pipeline.

A run walks the stages script, scenes, references, shots, injection, render
and concat in that order. The storyboard is saved after every stage with a
checkpoint holding the digest of the stage's input, so an interrupted run
continues with `resume` from the first stage that is not done. Completed
stages are never re-run and their requests are never re-issued.

Workdir layout, next to the storyboard files:

  <workdir>/pipeline.yaml    resolved configuration of the run
  <workdir>/outline.yaml     the story outline the run started from
  <workdir>/run_log.jsonl    one line per model request
  <workdir>/concat.txt       muxer list of the rendered clips
  <workdir>/concat.json      the concat manifest
  <workdir>/film.mp4         the muxed film, when a muxer is configured
"""

import concurrent.futures
import dataclasses
import datetime
import json
import os
import time
from typing import Any, Callable, Dict, Optional, Tuple

from absl import logging
import filelock
from storyreel.agents import cinematography
from storyreel.agents import director
from storyreel.agents import media
from storyreel.agents import video
from storyreel.common import errors
from storyreel.common import utils
from storyreel.gateway import client
from storyreel.gateway import run_log
from storyreel.pipeline import config as config_lib
from storyreel.storyboard import store
from storyreel.storyboard import storyboard as sb
from storyreel.storyboard import validate
import tabulate
import yaml

RUN_LOCK_NAME = '.run.lock'
CONFIG_SNAPSHOT_NAME = 'pipeline.yaml'
OUTLINE_SNAPSHOT_NAME = 'outline.yaml'

DONE = sb.StageState.DONE


class RenderFailure(errors.StageError):
  """Rendering halted; `storyboard` carries the clips finished so far."""

  def __init__(self, message: str, storyboard: sb.Storyboard):
    super().__init__(message, stage='render')
    self.storyboard = storyboard


@dataclasses.dataclass(frozen=True)
class RunResult:
  """Outcome of run or resume.

  Attributes:
    workdir: the run's directory.
    storyboard: the storyboard as saved last.
    executed: stages that ran in this invocation, in order.
    manifest: the concat manifest once the concat stage is done.
    film: path of the muxed film, if one was produced.
  """

  workdir: str
  storyboard: sb.Storyboard
  executed: Tuple[str, ...]
  manifest: Optional[video.ConcatManifest] = None
  film: Optional[str] = None


def stages_until(stop_after: Optional[str] = None) -> Tuple[str, ...]:
  """Returns the stages up to and including `stop_after`."""
  if stop_after is None:
    return sb.STAGES
  if stop_after not in sb.STAGES:
    raise errors.ConfigError(
        f'Unknown stage {stop_after!r}; expected one of {list(sb.STAGES)}')
  return sb.STAGES[:sb.STAGES.index(stop_after) + 1]


def load_outline(path: utils.PathLike) -> sb.StoryOutline:
  """Reads a story outline YAML file.

  Relative reference image paths are made absolute against the file's
  directory.

  Raises:
    ConfigError: the file is unreadable or malformed.
  """
  try:
    with open(path, encoding='utf-8') as f:
      doc = yaml.safe_load(f)
    outline = sb.outline_from_dict(doc)
  except (OSError, yaml.YAMLError, ValueError, KeyError, TypeError) as e:
    raise errors.ConfigError(f'Cannot read story outline {path}: {e}') from e
  if outline.reference_images:
    base_dir = os.path.dirname(os.path.abspath(path))
    outline = dataclasses.replace(outline, reference_images={
        name: os.path.join(base_dir, image)
        for name, image in outline.reference_images.items()
    })
  return outline


def _digest(obj: Any) -> str:
  return utils.content_digest(
      json.dumps(obj, sort_keys=True, ensure_ascii=False))


def stage_input_digest(stage: str, storyboard: sb.Storyboard,
                       outline: sb.StoryOutline) -> str:
  """Returns the digest of what `stage` reads.

  Later stages leave these inputs untouched, so the digest recorded when a
  stage completed still matches on resume unless the storyboard was edited.
  """
  doc = sb.to_dict(storyboard)
  if stage == 'script':
    return director.outline_digest(outline)
  if stage == 'scenes':
    return _digest(doc['script'])
  if stage in ('references', 'shots'):
    return _digest([stage, doc['script'], doc['scenes']])
  if stage == 'injection':
    return _digest([
        [s.scene_index, s.shot_index,
         s.raw_content if s.raw_content is not None else s.content]
        for s in storyboard.shots
    ])
  if stage == 'render':
    return _digest([doc['shots'], doc['references']])
  if stage == 'concat':
    return _digest(doc['clips'])
  raise errors.ConfigError(f'Unknown stage {stage!r}')


class Pipeline:
  """Runs the stages of one workdir.

  Args:
    config: the run's configuration.
    workdir: storyboard directory.
    outline: the story outline.
    gateway: model gateway; by default one logging to the workdir's run log.
    probe: clip metadata probe; by default built from the config.
    muxer: object with `mux(manifest, output)`; by default the configured
      command, or none when the config has no muxer.
    clock: source of checkpoint timestamps.
  """

  def __init__(
      self,
      config: config_lib.PipelineConfig,
      workdir: utils.PathLike,
      outline: sb.StoryOutline,
      gateway: Optional[client.ModelGateway] = None,
      probe: Optional[client.Probe] = None,
      muxer: Optional[Any] = None,
      clock: Callable[[], float] = time.time,
  ):
    self._config = config
    self._workdir = os.fspath(workdir)
    self._outline = outline
    self._owns_gateway = gateway is None
    if gateway is None:
      gateway = client.ModelGateway(
          run_log=run_log.RunLog(
              os.path.join(self._workdir, run_log.RUN_LOG_NAME)),
          concurrency_limit=config.concurrency,
          poll_interval=config.poll_interval,
          seed=config.seed)
    self._gateway = gateway
    self._probe = probe
    if muxer is None and config.muxer:
      muxer = media.Muxer(config.muxer)
    self._muxer = muxer
    self._clock = clock
    self._handlers = {
        'script': self._script,
        'scenes': self._scenes,
        'references': self._references,
        'shots': self._shots,
        'injection': self._injection,
        'render': self._render,
        'concat': self._concat,
    }

  def close(self):
    if self._owns_gateway:
      self._gateway.close()

  def execute(self, storyboard: sb.Storyboard,
              stop_after: Optional[str] = None) -> RunResult:
    """Runs every stage up to `stop_after` that is not done yet.

    Raises:
      StageError: a stage failed; its checkpoint records the failure.
    """
    executed = []
    for stage in stages_until(stop_after):
      if storyboard.status(stage) == DONE:
        logging.info('Stage %s: already done', stage)
        continue
      storyboard = self._run_stage(stage, storyboard)
      executed.append(stage)
    if stop_after is not None and stop_after != sb.STAGES[-1]:
      logging.info('Stopped after stage %s', stop_after)
    manifest = None
    film = None
    if storyboard.status('concat') == DONE:
      manifest = video.read_concat(self._workdir)
      path = os.path.join(self._workdir, video.FILM_NAME)
      film = path if os.path.isfile(path) else None
    return RunResult(workdir=self._workdir, storyboard=storyboard,
                     executed=tuple(executed), manifest=manifest, film=film)

  def _run_stage(self, stage: str, storyboard: sb.Storyboard) -> sb.Storyboard:
    digest = stage_input_digest(stage, storyboard, self._outline)
    logging.info('Stage %s: starting', stage)
    storyboard = storyboard.with_stage(stage, sb.StageState.RUNNING)
    store.save(storyboard, self._workdir)
    try:
      result = self._handlers[stage](storyboard)
      violations = validate.validate(result, self._workdir)
      if violations:
        raise errors.StageError(
            f'Stage {stage} produced an invalid storyboard: '
            + '; '.join(str(v) for v in violations), stage=stage)
    except errors.StoryreelError as e:
      current = e.storyboard if isinstance(e, RenderFailure) else storyboard
      failed = current.with_stage(
          stage, sb.StageState.FAILED,
          sb.StageCheckpoint(stage=stage, status=sb.StageState.FAILED,
                             timestamp=self._clock(), input_digest=digest))
      store.save(failed, self._workdir)
      logging.error('Stage %s failed: %s', stage, e)
      raise
    result = result.with_stage(
        stage, DONE,
        sb.StageCheckpoint(stage=stage, status=DONE, timestamp=self._clock(),
                           input_digest=digest))
    store.save(result, self._workdir)
    logging.info('Stage %s: done', stage)
    return result

  # Footage construction.

  def _director(self) -> director.DirectorAgent:
    return director.DirectorAgent(
        self._gateway, self._config.chat, self._config.t2i,
        max_scenes=self._config.max_scenes,
        workers=self._config.concurrency,
        templates_dir=self._config.templates_dir)

  def _cinematographer(self) -> cinematography.CinematographyAgent:
    return cinematography.CinematographyAgent(
        self._gateway, self._config.chat, self._config.templates_dir)

  def _script(self, storyboard: sb.Storyboard) -> sb.Storyboard:
    script = self._director().expand_script(self._outline)
    return dataclasses.replace(storyboard, script=script)

  def _scenes(self, storyboard: sb.Storyboard) -> sb.Storyboard:
    scenes = self._director().decompose_scenes(storyboard.script)
    return dataclasses.replace(storyboard, scenes=tuple(scenes))

  def _references(self, storyboard: sb.Storyboard) -> sb.Storyboard:
    assets = self._director().build_references(
        storyboard.script, storyboard.scenes, self._config.reference_mode,
        self._workdir, outline=self._outline, outline_dir=self._workdir)
    return dataclasses.replace(storyboard, references=tuple(assets))

  def _shots(self, storyboard: sb.Storyboard) -> sb.Storyboard:
    agent = self._cinematographer()
    recursion = self._config.recursion
    if not recursion.recursive:
      logging.info('Planning shots without conditioning on previous shots')
    with concurrent.futures.ThreadPoolExecutor(
        max_workers=self._config.concurrency) as executor:
      planned = list(executor.map(
          lambda scene: agent.plan_shots(scene, storyboard.script, recursion),
          storyboard.scenes))
    shots = tuple(shot for scene_shots in planned for shot in scene_shots)
    logging.info('Planned %d shots in %d scenes', len(shots), len(planned))
    return dataclasses.replace(storyboard, shots=shots)

  def _injection(self, storyboard: sb.Storyboard) -> sb.Storyboard:
    if not self._config.inject_cinematic:
      logging.info('Cinematic injection disabled; shots keep their plan')
      return storyboard
    agent = self._cinematographer()
    contract = self._config.rewriter
    with concurrent.futures.ThreadPoolExecutor(
        max_workers=self._config.concurrency) as executor:
      shots = tuple(executor.map(
          lambda shot: agent.inject_cinematic(shot, contract),
          storyboard.shots))
    return dataclasses.replace(storyboard, shots=shots)

  # Shot generation.

  def _render(self, storyboard: sb.Storyboard) -> sb.Storyboard:
    """Renders every shot without a usable clip.

    Clips rendered by an earlier, interrupted attempt are kept. Jobs that
    have not started are cancelled once a clip fails when the config halts
    on render failures.
    """
    probe = self._probe or media.probe_from_config(self._config.probe)
    agent = video.VideoAgent(self._gateway, self._config.i2v, probe)
    kept = {
        c.key: c for c in storyboard.clips
        if c.status == sb.ClipStatus.RENDERED and
        os.path.isfile(os.path.join(self._workdir, c.video_path))
    }
    if kept:
      logging.info('Keeping %d clips from an earlier attempt', len(kept))
    plans = [
        video.plan_render(shot, storyboard, self._workdir)
        for shot in storyboard.shots if shot.key not in kept
    ]
    records = dict(kept)
    failed = []
    with concurrent.futures.ThreadPoolExecutor(
        max_workers=self._config.render_parallelism) as executor:
      futures = [(plan, executor.submit(agent.render_shot, plan,
                                        self._workdir)) for plan in plans]
      try:
        for plan, future in futures:
          if future.cancelled():
            continue
          record = self._checked(future.result())
          records[plan.key] = record
          if record.status != sb.ClipStatus.RENDERED:
            failed.append(record)
            if self._config.halt_on_render_failure:
              _cancel(futures)
      except BaseException:
        _cancel(futures)
        raise
    clips = tuple(records[k] for k in sorted(records))
    result = dataclasses.replace(storyboard, clips=clips)
    if failed and self._config.halt_on_render_failure:
      raise RenderFailure(
          'Rendering halted: ' + '; '.join(
              f'{r.key}: {r.reason}' for r in failed), result)
    for r in failed:
      logging.error('Clip %s failed and is left out: %s', r.key, r.reason)
    return result

  def _checked(self, record: sb.ClipRecord) -> sb.ClipRecord:
    if record.status != sb.ClipStatus.RENDERED:
      return record
    violations = video.validate_clip(record, self._config.expected_format)
    if not violations:
      return record
    reason = '; '.join(str(v) for v in violations)
    logging.error('Clip %s has the wrong format: %s', record.key, reason)
    return dataclasses.replace(record, status=sb.ClipStatus.FAILED,
                               reason=reason)

  def _concat(self, storyboard: sb.Storyboard) -> sb.Storyboard:
    rendered = [c for c in storyboard.clips
                if c.status == sb.ClipStatus.RENDERED]
    skipped = [c.key for c in storyboard.clips
               if c.status != sb.ClipStatus.RENDERED]
    if skipped:
      logging.warning('Concatenating without the failed clips %s', skipped)
    manifest = video.build_concat(rendered)
    list_path, _ = video.write_concat(manifest, self._workdir)
    if self._muxer is not None:
      self._muxer.mux(list_path, os.path.join(self._workdir, video.FILM_NAME))
    else:
      logging.info('No muxer configured; wrote the concat manifest only')
    return storyboard


def _cancel(futures) -> None:
  for _, future in futures:
    future.cancel()


def _run_lock(workdir: str) -> filelock.FileLock:
  return filelock.FileLock(os.path.join(workdir, RUN_LOCK_NAME), timeout=0)


def _locked(workdir: str, body: Callable[[], RunResult]) -> RunResult:
  try:
    with _run_lock(workdir):
      return body()
  except filelock.Timeout as e:
    raise errors.PreconditionError(
        f'Another pipeline run holds {workdir}') from e


def run(config: config_lib.PipelineConfig,
        stop_after: Optional[str] = None,
        gateway: Optional[client.ModelGateway] = None,
        probe: Optional[client.Probe] = None,
        muxer: Optional[Any] = None,
        clock: Callable[[], float] = time.time) -> RunResult:
  """Starts a new run in `config.workdir`.

  The resolved config and the outline are copied into the workdir first,
  so `resume` needs nothing but the workdir.

  Raises:
    ConfigError: no outline or workdir, or an endpoint the run needs is
      missing. Nothing has been requested yet.
    PreconditionError: the workdir already holds a storyboard, or its
      outline is invalid.
    StageError: a stage failed.
    PersistenceError: the workdir could not be written.
  """
  if not config.workdir:
    raise errors.ConfigError('No workdir configured')
  if not config.outline:
    raise errors.ConfigError('No story outline configured')
  stages = stages_until(stop_after)
  config_lib.require_endpoints(config, config_lib.Command.RUN, stages)
  config_lib.check_template_pins(config)
  outline = load_outline(config.outline)
  violations = validate.validate_outline(outline)
  if violations:
    raise errors.PreconditionError(
        'Invalid outline: ' + '; '.join(str(v) for v in violations))
  workdir = config.workdir
  if store.document_path(workdir).exists():
    raise errors.PreconditionError(
        f'{workdir} already holds a storyboard; use resume to continue it')
  try:
    os.makedirs(workdir, exist_ok=True)
  except OSError as e:
    raise errors.PersistenceError(f'Cannot create {workdir}: {e}',
                                  workdir) from e

  def body() -> RunResult:
    outline_path = os.path.join(workdir, OUTLINE_SNAPSHOT_NAME)
    utils.atomic_write(outline_path, yaml.safe_dump(
        sb.outline_to_dict(outline), sort_keys=False, allow_unicode=True))
    config_lib.dump_config(
        config.with_overrides(outline=outline_path, workdir=workdir),
        os.path.join(workdir, CONFIG_SNAPSHOT_NAME))
    storyboard = sb.Storyboard()
    store.save(storyboard, workdir)
    logging.info('Starting run in %s', workdir)
    pipeline = Pipeline(config, workdir, outline, gateway, probe, muxer,
                        clock)
    try:
      return pipeline.execute(storyboard, stop_after)
    finally:
      pipeline.close()

  return _locked(workdir, body)


def load_run_config(workdir: utils.PathLike) -> config_lib.PipelineConfig:
  path = os.path.join(workdir, CONFIG_SNAPSHOT_NAME)
  if not os.path.isfile(path):
    raise errors.ResumeError(
        f'{workdir} has no {CONFIG_SNAPSHOT_NAME}; start a fresh run')
  return config_lib.load_config(path)


def _check_checkpoints(storyboard: sb.Storyboard,
                       outline: sb.StoryOutline) -> None:
  """Checks that done stages form a prefix and their inputs are unchanged."""
  checkpoints = {c.stage: c for c in storyboard.checkpoints}
  seen_open = None
  for stage in sb.STAGES:
    if storyboard.status(stage) != DONE:
      seen_open = seen_open or stage
      continue
    if seen_open is not None:
      raise errors.ResumeError(
          f'Stage {stage} is done but {seen_open} is not; the checkpoint is'
          ' corrupt, start a fresh run')
    checkpoint = checkpoints.get(stage)
    if checkpoint is None or checkpoint.status != DONE:
      raise errors.ResumeError(
          f'Stage {stage} is done but has no checkpoint; start a fresh run')
    if checkpoint.input_digest != stage_input_digest(stage, storyboard,
                                                     outline):
      raise errors.ResumeError(
          f'The input of stage {stage} changed after it completed; start a'
          ' fresh run')


def resume(workdir: utils.PathLike,
           stop_after: Optional[str] = None,
           config: Optional[config_lib.PipelineConfig] = None,
           gateway: Optional[client.ModelGateway] = None,
           probe: Optional[client.Probe] = None,
           muxer: Optional[Any] = None,
           clock: Callable[[], float] = time.time) -> RunResult:
  """Continues the run in `workdir` from its first stage that is not done.

  Args:
    workdir: a directory written by `run`.
    stop_after: optional last stage to run.
    config: overrides the config snapshot of the workdir.
    gateway: see Pipeline.
    probe: see Pipeline.
    muxer: see Pipeline.
    clock: see Pipeline.

  Raises:
    ResumeError: the storyboard or its checkpoints are missing or corrupt.
    ConfigError: an endpoint the remaining stages need is missing.
    StageError: a stage failed.
  """
  workdir = os.fspath(workdir)
  config = config or load_run_config(workdir)
  try:
    outline = load_outline(os.path.join(workdir, OUTLINE_SNAPSHOT_NAME))
    storyboard = store.load(workdir)
  except (errors.ConfigError, errors.PersistenceError) as e:
    raise errors.ResumeError(
        f'Cannot resume {workdir}: {e}; start a fresh run') from e
  _check_checkpoints(storyboard, outline)
  remaining = tuple(s for s in stages_until(stop_after)
                    if storyboard.status(s) != DONE)
  if not remaining:
    logging.info('Nothing to resume in %s', workdir)
  config_lib.require_endpoints(config, config_lib.Command.RUN, remaining)
  config_lib.check_template_pins(config)

  def body() -> RunResult:
    logging.info('Resuming %s at %s', workdir,
                 remaining[0] if remaining else 'no stage')
    pipeline = Pipeline(config, workdir, outline, gateway, probe, muxer,
                        clock)
    try:
      return pipeline.execute(storyboard, stop_after)
    finally:
      pipeline.close()

  return _locked(workdir, body)


def _when(checkpoint: Optional[sb.StageCheckpoint]) -> str:
  if checkpoint is None:
    return ''
  return datetime.datetime.fromtimestamp(
      checkpoint.timestamp, datetime.timezone.utc).isoformat(
          timespec='seconds')


def inspect(workdir: utils.PathLike) -> str:
  """Returns a status summary of the run in `workdir`.

  Raises:
    PersistenceError: the workdir holds no readable storyboard.
  """
  storyboard = store.load(workdir)
  checkpoints = {c.stage: c for c in storyboard.checkpoints}
  stage_rows = [
      [stage, str(storyboard.status(stage)), _when(checkpoints.get(stage)),
       (checkpoints[stage].input_digest[:19] if stage in checkpoints
        else '')]
      for stage in sb.STAGES
  ]
  parts = [tabulate.tabulate(stage_rows,
                             headers=['stage', 'status', 'finished',
                                      'input digest'])]
  if storyboard.scenes:
    scene_rows = []
    for scene in storyboard.scenes:
      shots = storyboard.shots_for_scene(scene.index)
      clips = [storyboard.clip(s.key) for s in shots]
      scene_rows.append([
          scene.index, scene.location, len(shots),
          sum(1 for s in shots if s.raw_content is not None),
          sum(1 for c in clips
              if c is not None and c.status == sb.ClipStatus.RENDERED),
          sum(1 for c in clips
              if c is not None and c.status == sb.ClipStatus.FAILED),
      ])
    parts.append(tabulate.tabulate(
        scene_rows, headers=['scene', 'location', 'shots', 'injected',
                             'rendered', 'failed']))
  counts: Dict[str, int] = {str(s): 0 for s in sb.ClipStatus}
  for clip in storyboard.clips:
    counts[str(clip.status)] += 1
  pending = len(storyboard.shots) - len(storyboard.clips)
  counts[str(sb.ClipStatus.PENDING)] += max(pending, 0)
  frames = sum(c.frame_count for c in storyboard.clips
               if c.status == sb.ClipStatus.RENDERED)
  parts.append(
      f'Totals: {len(storyboard.scenes)} scenes, {len(storyboard.shots)}'
      f' shots, {len(storyboard.references)} references; clips '
      + ', '.join(f'{k} {v}' for k, v in counts.items())
      + f'; {frames} rendered frames')
  return '\n\n'.join(parts) + '\n'
