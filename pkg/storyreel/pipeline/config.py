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
"""Pipeline configuration.

A pipeline config is one YAML document. Relative paths resolve against the
directory holding it.

  outline: story.yaml
  workdir: runs/frozen
  seed: 0
  endpoints:
    chat: {base_url: https://api.example.com/v1, model_name: planner}
    rewrite: {base_url: ..., model_name: cine-specialist}  # defaults to chat
    t2i: {base_url: ..., model_name: ...}
    i2v: {base_url: ..., model_name: ...}
  recursion: {max_shots_per_scene: 12, recursive: true}
  inject_cinematic: true
  max_scenes: 10
  reference_mode: generate
  render:
    parallelism: 2
    halt_on_failure: true
    expected_format: {width: 832, height: 480, fps: 15}
  media:
    probe: {command: 'ffprobe ... {path}'}   # or {static: {...}}
    muxer: 'ffmpeg ... {manifest} ... {output}'   # null skips muxing
    extractor: 'ffmpeg ... {input} {select} {output_dir}'
  gateway: {concurrency: 4, poll_interval: 2.0}
  templates_dir: prompts/
  template_pins: {cinematography/inject: 1}
  evaluation:
    judges: [{name: judge-a, base_url: ..., model_name: ...}]
    criteria: [script_consistency, video_quality]
    granularity: film
    workers: 4
  dataset: {...}   # see storyreel.dataset.cine_dataset
"""

import dataclasses
import enum
import os
from typing import Any, Dict, Mapping, Optional, Tuple

from storyreel.agents import cinematography
from storyreel.agents import director
from storyreel.agents import media
from storyreel.agents import prompts
from storyreel.agents import video
from storyreel.common import errors
from storyreel.common import utils
from storyreel.dataset import cine_dataset
from storyreel.evaluation import judge
from storyreel.gateway import client
from storyreel.gateway import contract as contract_lib
import yaml

Role = contract_lib.Role

DEFAULT_RENDER_PARALLELISM = 2


@enum.unique
class Command(str, enum.Enum):
  """Commands whose endpoint requirements `require_endpoints` checks."""

  RUN = 'run'
  EVAL = 'eval'

  def __str__(self):
    return self.value


@dataclasses.dataclass(frozen=True)
class EvaluationConfig:
  """Judge endpoints and the evaluation grid."""

  judges: Tuple[contract_lib.EndpointContract, ...] = ()
  criteria: Tuple[judge.Criterion, ...] = tuple(judge.Criterion)
  granularity: judge.Granularity = judge.Granularity.FILM
  workers: int = 4

  def __post_init__(self):
    if self.workers < 1:
      raise errors.ConfigError(
          f'evaluation.workers must be >= 1, got {self.workers}')
    for contract in self.judges:
      if contract.role != Role.JUDGE:
        raise errors.ConfigError(
            f'Judge endpoint {contract.label} has role {contract.role}')


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
  """Everything a run, resume or eval needs besides the workdir contents.

  Attributes:
    outline: path of the story outline YAML.
    workdir: where the storyboard and its assets live.
    chat: planning endpoint (script, scenes and shots).
    rewrite: cinematic rewriting endpoint; None uses `chat`.
    t2i: reference image endpoint; needed in generate mode.
    i2v: clip rendering endpoint; needed from the render stage on.
    recursion: shot planning settings.
    inject_cinematic: False skips the rewrite of planned shots.
    max_scenes: scene cap of the decomposition.
    reference_mode: how reference assets are obtained.
    render_parallelism: concurrent render jobs.
    halt_on_render_failure: fail the render stage on the first failed clip
      instead of finishing the others first.
    expected_format: format every rendered clip must have.
    probe: probe settings, `{command: ...}` or `{static: {...}}`.
    muxer: muxer command template; None only writes the concat manifest.
    extractor: frame extraction command template used by eval.
    concurrency: gateway-wide limit of in-flight requests.
    poll_interval: seconds between polls of asynchronous render jobs.
    seed: sampling seed sent with every chat request; None sends none.
    templates_dir: prompt template root; None uses the bundled templates.
    template_pins: template name to required version.
    evaluation: judges and criteria for `eval`.
    dataset: dataset builder settings, when the config has a dataset section.
  """

  outline: Optional[str] = None
  workdir: Optional[str] = None
  chat: Optional[contract_lib.EndpointContract] = None
  rewrite: Optional[contract_lib.EndpointContract] = None
  t2i: Optional[contract_lib.EndpointContract] = None
  i2v: Optional[contract_lib.EndpointContract] = None
  recursion: cinematography.RecursionConfig = (
      cinematography.RecursionConfig())
  inject_cinematic: bool = True
  max_scenes: int = director.DEFAULT_MAX_SCENES
  reference_mode: director.ReferenceMode = director.ReferenceMode.GENERATE
  render_parallelism: int = DEFAULT_RENDER_PARALLELISM
  halt_on_render_failure: bool = True
  expected_format: video.ClipFormat = video.ClipFormat()
  probe: Mapping[str, Any] = dataclasses.field(default_factory=dict)
  muxer: Optional[str] = media.FFMPEG_CONCAT_TEMPLATE
  extractor: str = media.FFMPEG_FRAMES_TEMPLATE
  concurrency: int = client.DEFAULT_CONCURRENCY
  poll_interval: float = client.DEFAULT_POLL_INTERVAL
  seed: Optional[int] = None
  templates_dir: Optional[str] = None
  template_pins: Mapping[str, int] = dataclasses.field(default_factory=dict)
  evaluation: EvaluationConfig = EvaluationConfig()
  dataset: Optional[cine_dataset.DatasetConfig] = None

  def __post_init__(self):
    if self.render_parallelism < 1:
      raise errors.ConfigError(
          f'render.parallelism must be >= 1, got {self.render_parallelism}')
    if self.max_scenes < 1:
      raise errors.ConfigError(
          f'max_scenes must be >= 1, got {self.max_scenes}')
    if self.concurrency < 1:
      raise errors.ConfigError(
          f'gateway.concurrency must be >= 1, got {self.concurrency}')
    for name, contract, role in (('chat', self.chat, Role.CHAT),
                                 ('rewrite', self.rewrite, Role.CHAT),
                                 ('t2i', self.t2i, Role.T2I),
                                 ('i2v', self.i2v, Role.I2V)):
      if contract is not None and contract.role != role:
        raise errors.ConfigError(
            f'endpoints.{name} has role {contract.role}, expected {role}')

  @property
  def rewriter(self) -> Optional[contract_lib.EndpointContract]:
    return self.rewrite or self.chat

  def with_overrides(self, **changes: Any) -> 'PipelineConfig':
    return dataclasses.replace(self, **changes)


def require_endpoints(config: PipelineConfig, command: Command,
                      stages: Tuple[str, ...] = ()) -> None:
  """Checks that the endpoints `command` will call are configured.

  Args:
    config: the configuration.
    command: the command about to run.
    stages: for `run`, the stages that will execute.

  Raises:
    ConfigError: an endpoint is missing.
  """
  missing = []
  if command == Command.EVAL:
    if not config.evaluation.judges:
      missing.append('evaluation.judges')
  else:
    planning = {'script', 'scenes', 'shots'}
    if planning & set(stages) and config.chat is None:
      missing.append('endpoints.chat')
    if ('injection' in stages and config.inject_cinematic and
        config.rewriter is None):
      missing.append('endpoints.rewrite')
    if ('references' in stages and config.t2i is None and
        config.reference_mode == director.ReferenceMode.GENERATE):
      missing.append('endpoints.t2i')
    if 'render' in stages and config.i2v is None:
      missing.append('endpoints.i2v')
  if missing:
    raise errors.ConfigError(
        f'{command} needs endpoints that are not configured: {missing}')


def check_template_pins(config: PipelineConfig) -> None:
  """Fails when a pinned template has a different version on disk."""
  for name, version in sorted(config.template_pins.items()):
    template = prompts.load_template(name, config.templates_dir)
    if template.version != version:
      raise errors.ConfigError(
          f'Template {name} is at version {template.version}; the config'
          f' pins version {version}')


_TOP_KEYS = frozenset((
    'outline', 'workdir', 'seed', 'endpoints', 'recursion', 'inject_cinematic',
    'max_scenes', 'reference_mode', 'render', 'media', 'gateway',
    'templates_dir', 'template_pins', 'evaluation', 'dataset'))
_ENDPOINT_KEYS = frozenset(('chat', 'rewrite', 't2i', 'i2v'))
_ENDPOINT_ROLES = {'chat': Role.CHAT, 'rewrite': Role.CHAT, 't2i': Role.T2I,
                   'i2v': Role.I2V}
_RENDER_KEYS = frozenset(('parallelism', 'halt_on_failure', 'expected_format'))
_MEDIA_KEYS = frozenset(('probe', 'muxer', 'extractor'))
_GATEWAY_KEYS = frozenset(('concurrency', 'poll_interval'))
_RECURSION_KEYS = frozenset(
    f.name for f in dataclasses.fields(cinematography.RecursionConfig))
_EVALUATION_KEYS = frozenset(('judges', 'criteria', 'granularity', 'workers'))


def _section(doc: Mapping[str, Any], key: str,
             allowed: frozenset) -> Mapping[str, Any]:
  value = doc.get(key) or {}
  if not isinstance(value, Mapping):
    raise errors.ConfigError(f'{key} must be a mapping')
  unknown = set(value) - allowed
  if unknown:
    raise errors.ConfigError(f'Unknown {key} keys {sorted(unknown)}')
  return value


def _path(base_dir: str, value: Optional[str]) -> Optional[str]:
  if not value:
    return None
  return os.path.normpath(os.path.join(base_dir, os.path.expanduser(value)))


def _evaluation(doc: Mapping[str, Any], base_dir: str) -> EvaluationConfig:
  section = _section(doc, 'evaluation', _EVALUATION_KEYS)
  judges = section.get('judges') or []
  if not isinstance(judges, list):
    raise errors.ConfigError('evaluation.judges must be a list')
  contracts = []
  for n, entry in enumerate(judges):
    if not isinstance(entry, Mapping):
      raise errors.ConfigError(f'evaluation.judges[{n}] must be a mapping')
    contracts.append(contract_lib.contract_from_dict(
        entry, Role.JUDGE, entry.get('name') or f'judge{n + 1}', base_dir))
  try:
    criteria = tuple(judge.Criterion(c) for c in section['criteria']
                     ) if section.get('criteria') else tuple(judge.Criterion)
    granularity = judge.Granularity(section.get('granularity', 'film'))
  except ValueError as e:
    raise errors.ConfigError(f'evaluation: {e}') from e
  return EvaluationConfig(judges=tuple(contracts), criteria=criteria,
                          granularity=granularity,
                          workers=int(section.get('workers', 4)))


def config_from_dict(doc: Mapping[str, Any],
                     base_dir: str = '.') -> PipelineConfig:
  """Builds a PipelineConfig from its YAML document.

  Raises:
    ConfigError: unknown keys or invalid values.
  """
  if not isinstance(doc, Mapping):
    raise errors.ConfigError('A pipeline config must be a mapping')
  unknown = set(doc) - _TOP_KEYS
  if unknown:
    raise errors.ConfigError(f'Unknown config keys {sorted(unknown)}')
  base_dir = os.path.abspath(base_dir)
  endpoints = _section(doc, 'endpoints', _ENDPOINT_KEYS)
  contracts = {}
  for key, entry in endpoints.items():
    if entry is None:
      continue
    if not isinstance(entry, Mapping):
      raise errors.ConfigError(f'endpoints.{key} must be a mapping')
    contracts[key] = contract_lib.contract_from_dict(
        entry, _ENDPOINT_ROLES[key], entry.get('name') or key, base_dir)

  render = _section(doc, 'render', _RENDER_KEYS)
  media_doc = _section(doc, 'media', _MEDIA_KEYS)
  gateway = _section(doc, 'gateway', _GATEWAY_KEYS)
  recursion = _section(doc, 'recursion', _RECURSION_KEYS)
  expected = render.get('expected_format') or {}
  pins = doc.get('template_pins') or {}
  if not isinstance(pins, Mapping):
    raise errors.ConfigError('template_pins must be a mapping')
  dataset = None
  if doc.get('dataset'):
    dataset = cine_dataset.config_from_dict(doc['dataset'], base_dir)

  try:
    probe = dict(media_doc.get('probe') or {})
    # Validates the probe section up front.
    media.probe_from_config(probe)
    seed = doc.get('seed')
    return PipelineConfig(
        outline=_path(base_dir, doc.get('outline')),
        workdir=_path(base_dir, doc.get('workdir')),
        chat=contracts.get('chat'),
        rewrite=contracts.get('rewrite'),
        t2i=contracts.get('t2i'),
        i2v=contracts.get('i2v'),
        recursion=cinematography.RecursionConfig(**recursion),
        inject_cinematic=bool(doc.get('inject_cinematic', True)),
        max_scenes=int(doc.get('max_scenes', director.DEFAULT_MAX_SCENES)),
        reference_mode=director.ReferenceMode(
            doc.get('reference_mode', director.ReferenceMode.GENERATE)),
        render_parallelism=int(
            render.get('parallelism', DEFAULT_RENDER_PARALLELISM)),
        halt_on_render_failure=bool(render.get('halt_on_failure', True)),
        expected_format=video.ClipFormat(
            width=int(expected.get('width', video.ClipFormat.width)),
            height=int(expected.get('height', video.ClipFormat.height)),
            fps=float(expected.get('fps', video.ClipFormat.fps))),
        probe=probe,
        muxer=media_doc.get('muxer', media.FFMPEG_CONCAT_TEMPLATE),
        extractor=media_doc.get('extractor') or media.FFMPEG_FRAMES_TEMPLATE,
        concurrency=int(gateway.get('concurrency',
                                    client.DEFAULT_CONCURRENCY)),
        poll_interval=float(gateway.get('poll_interval',
                                        client.DEFAULT_POLL_INTERVAL)),
        seed=int(seed) if seed is not None else None,
        templates_dir=_path(base_dir, doc.get('templates_dir')),
        template_pins={str(k): int(v) for k, v in pins.items()},
        evaluation=_evaluation(doc, base_dir),
        dataset=dataset,
    )
  except (TypeError, ValueError) as e:
    if isinstance(e, errors.StoryreelError):
      raise
    raise errors.ConfigError(f'Invalid pipeline config: {e}') from e


def load_config(path: utils.PathLike) -> PipelineConfig:
  """Reads a pipeline config file.

  Raises:
    ConfigError: the file is unreadable or invalid.
  """
  try:
    with open(path, encoding='utf-8') as f:
      doc = yaml.safe_load(f) or {}
  except (OSError, yaml.YAMLError) as e:
    raise errors.ConfigError(f'Cannot read pipeline config {path}: {e}') from e
  return config_from_dict(doc, os.path.dirname(os.path.abspath(path)))


def _contract_to_dict(
    contract: Optional[contract_lib.EndpointContract]
) -> Optional[Dict[str, Any]]:
  if contract is None:
    return None
  doc = dataclasses.asdict(contract)
  doc['role'] = str(contract.role)
  return {k: v for k, v in doc.items() if v is not None}


def config_to_dict(config: PipelineConfig) -> Dict[str, Any]:
  """Returns the YAML document of `config` with every path absolute.

  The dataset section is not part of the document; runs never read it.
  """
  endpoints = {
      key: _contract_to_dict(getattr(config, key))
      for key in ('chat', 'rewrite', 't2i', 'i2v')
      if getattr(config, key) is not None
  }
  fmt = config.expected_format
  return {
      'outline': config.outline,
      'workdir': config.workdir,
      'seed': config.seed,
      'endpoints': endpoints,
      'recursion': dataclasses.asdict(config.recursion),
      'inject_cinematic': config.inject_cinematic,
      'max_scenes': config.max_scenes,
      'reference_mode': str(config.reference_mode),
      'render': {
          'parallelism': config.render_parallelism,
          'halt_on_failure': config.halt_on_render_failure,
          'expected_format': {'width': fmt.width, 'height': fmt.height,
                              'fps': fmt.fps},
      },
      'media': {'probe': dict(config.probe), 'muxer': config.muxer,
                'extractor': config.extractor},
      'gateway': {'concurrency': config.concurrency,
                  'poll_interval': config.poll_interval},
      'templates_dir': config.templates_dir,
      'template_pins': dict(config.template_pins),
      'evaluation': {
          'judges': [_contract_to_dict(j) for j in config.evaluation.judges],
          'criteria': [str(c) for c in config.evaluation.criteria],
          'granularity': str(config.evaluation.granularity),
          'workers': config.evaluation.workers,
      },
  }


def dump_config(config: PipelineConfig, path: utils.PathLike) -> None:
  utils.atomic_write(
      path, yaml.safe_dump(config_to_dict(config), sort_keys=False,
                           allow_unicode=True))
