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
"""Builds the cinematic-language instruction-tuning dataset.

Each corpus clip yields one training pair: an ordinary caption of the clip's
frames (objects and actions only), the clip's shot annotation, and a
cinematic caption that rewrites the ordinary one around the annotation. The
builder writes the pairs as instruction/response records plus a manifest for
an external fine-tuning job; it never trains anything itself.
"""

import concurrent.futures
import dataclasses
import json
import os
import pathlib
import re
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from absl import logging
from storyreel.agents import base
from storyreel.agents import prompts
from storyreel.common import errors
from storyreel.common import utils
from storyreel.gateway import client
from storyreel.gateway import contract as contract_lib
from storyreel.gateway import run_log
from storyreel.storyboard import validate
import yaml

DATASET_NAME = 'dataset.jsonl'
MANIFEST_NAME = 'manifest.json'

DEFAULT_STOPLIST = (
    'shot', 'close-up', 'wide', 'pan', 'tilt', 'zoom', 'dolly', 'tracking',
    'angle', 'framing', 'lighting', 'lens',
)

ANNOTATION_FIELDS = (
    'shot_size', 'camera_angle', 'framing', 'camera_motion', 'lighting',
)

HYPERPARAMETERS = {
    'adapter': 'lora',
    'adapter_rank': 8,
    'adapter_scale': 32,
    'learning_rate': 1e-4,
    'epochs': 20,
    'target_layers': 'all linear layers',
}

OBJECTIVE_NOTE = (
    'Maximize the log-likelihood of each response given its instruction,'
    ' summed over response tokens, with respect to the adapter weights only;'
    ' the base model stays frozen. The instruction embeds both the ordinary'
    ' caption and the annotation.'
)

CAPTION_REPROMPT = (
    'Your previous caption could not be used: {error}. Describe only the'
    ' people, objects and actions in plain words, without any camera or'
    ' lighting vocabulary.'
)
ENRICH_REPROMPT = (
    'Your previous description could not be used: {error}. Rewrite it so'
    ' that every annotation value appears verbatim.'
)

_STAGE = 'dataset'


@dataclasses.dataclass(frozen=True)
class ShotAnnotation:
  """Shot-level cinematic annotation of one corpus clip."""

  clip_id: str
  shot_size: str = ''
  camera_angle: str = ''
  framing: str = ''
  camera_motion: str = ''
  lighting: str = ''

  def __post_init__(self):
    if not self.values():
      raise errors.PreconditionError(
          f'Annotation of {self.clip_id} has no field set')

  def values(self) -> Dict[str, str]:
    """Returns the present fields in canonical order."""
    return {
        f: getattr(self, f) for f in ANNOTATION_FIELDS if getattr(self, f)
    }

  def serialized(self) -> str:
    return json.dumps(self.values(), sort_keys=True, ensure_ascii=False)

  def prompt_lines(self) -> str:
    return '\n'.join(
        f'- {f.replace("_", " ")}: {v}' for f, v in self.values().items())


def annotation_from_dict(clip_id: str,
                         doc: Mapping[str, Any]) -> ShotAnnotation:
  unknown = set(doc) - set(ANNOTATION_FIELDS)
  if unknown:
    raise errors.RecordError(
        f'{clip_id}: unknown annotation fields {sorted(unknown)}', _STAGE)
  fields = {k: str(v).strip() for k, v in doc.items() if v is not None}
  try:
    return ShotAnnotation(clip_id=clip_id, **fields)
  except errors.PreconditionError as e:
    raise errors.RecordError(str(e), _STAGE) from e


@dataclasses.dataclass(frozen=True)
class CorpusEntry:
  clip_id: str
  frames: Tuple[str, ...]
  annotation: Mapping[str, Any]


@dataclasses.dataclass(frozen=True)
class TrainingPair:
  clip_id: str
  ordinary_caption: str
  annotation: ShotAnnotation
  cinematic_caption: str


@dataclasses.dataclass(frozen=True)
class SkippedRecord:
  clip_id: str
  reason: str


@dataclasses.dataclass(frozen=True)
class FineTuneManifest:
  """What an external trainer needs to fine-tune the rewriting model.

  Attributes:
    pair_count: records in the dataset file.
    skip_count: corpus clips that produced no record.
    skipped: why each skipped clip failed, in corpus order.
    objective_note: the training objective, as documentation.
    hyperparameters: adapter and optimizer settings.
    dataset_path: the dataset file, relative to the manifest.
    dataset_digest: `sha256:<hex>` of the dataset file bytes.
  """

  pair_count: int
  skip_count: int
  skipped: Tuple[SkippedRecord, ...]
  objective_note: str
  hyperparameters: Mapping[str, Any]
  dataset_path: str
  dataset_digest: str

  def to_dict(self) -> Dict[str, Any]:
    doc = dataclasses.asdict(self)
    doc['skipped'] = [dataclasses.asdict(s) for s in self.skipped]
    doc['hyperparameters'] = dict(self.hyperparameters)
    return doc


def manifest_from_dict(doc: Mapping[str, Any]) -> FineTuneManifest:
  return FineTuneManifest(
      pair_count=int(doc['pair_count']),
      skip_count=int(doc['skip_count']),
      skipped=tuple(SkippedRecord(**s) for s in doc.get('skipped', ())),
      objective_note=doc['objective_note'],
      hyperparameters=dict(doc['hyperparameters']),
      dataset_path=doc['dataset_path'],
      dataset_digest=doc['dataset_digest'],
  )


def normalize_text(text: str) -> str:
  """Lower-cases, maps hyphens to spaces and collapses whitespace."""
  return ' '.join(text.lower().replace('-', ' ').split())


def missing_values(text: str, annotation: ShotAnnotation) -> List[str]:
  """Returns the annotation values that `text` does not contain."""
  haystack = normalize_text(text)
  return [
      v for v in annotation.values().values()
      if normalize_text(v) not in haystack
  ]


@dataclasses.dataclass(frozen=True)
class Stoplist:
  """Cinematic vocabulary that ordinary captions must not use.

  Terms match case-insensitively as whole words, plural forms included, so
  "pan" catches "pans" but not "panic".
  """

  terms: Tuple[str, ...] = DEFAULT_STOPLIST

  def __post_init__(self):
    if not self.terms or not all(t.strip() for t in self.terms):
      raise errors.ConfigError('The stoplist needs non-empty terms')
    alternatives = '|'.join(
        re.escape(t.strip()) for t in sorted(self.terms, key=len,
                                             reverse=True))
    object.__setattr__(self, '_pattern', re.compile(
        rf'(?<![\w-])(?:{alternatives})(?:s|es)?(?![\w-])', re.IGNORECASE))

  def find(self, text: str) -> List[str]:
    """Returns the stoplist words found in `text`, in order of appearance."""
    return [m.group(0) for m in self._pattern.finditer(text)]


def _frames_present(entry: CorpusEntry) -> None:
  if not entry.frames:
    raise errors.RecordError(f'{entry.clip_id}: no frames listed', _STAGE)
  missing = [f for f in entry.frames if not os.path.exists(f)]
  if missing:
    raise errors.RecordError(
        f'{entry.clip_id}: missing frames {missing}', _STAGE)


def read_corpus(path: utils.PathLike) -> List[CorpusEntry]:
  """Reads a corpus manifest.

  The manifest is YAML: `clips: [{clip_id, frames: [...], annotation: {...}}]`.
  Relative frame paths resolve against the manifest's directory. Malformed
  entries are kept as-is and fail later, one record at a time.

  Raises:
    PersistenceError: the manifest cannot be read or is not a clip list, or
      clip ids repeat.
  """
  path = pathlib.Path(path)
  try:
    doc = yaml.safe_load(path.read_text(encoding='utf-8'))
  except (OSError, yaml.YAMLError) as e:
    raise errors.PersistenceError(
        f'Cannot read corpus manifest: {e}', str(path)) from e
  if doc is None:
    doc = {}
  clips = doc.get('clips') if isinstance(doc, Mapping) else None
  if clips is None:
    clips = []
  if not isinstance(doc, Mapping) or not isinstance(clips, list):
    raise errors.PersistenceError(
        'A corpus manifest is a mapping with a `clips` list', str(path))
  entries = []
  seen = set()
  for n, clip in enumerate(clips):
    clip = clip if isinstance(clip, Mapping) else {}
    clip_id = str(clip.get('clip_id') or f'#{n}')
    if clip_id in seen:
      raise errors.PersistenceError(
          f'Duplicate clip_id {clip_id!r} in corpus manifest', str(path))
    seen.add(clip_id)
    frames = clip.get('frames') or []
    if isinstance(frames, str):
      frames = [frames]
    entries.append(CorpusEntry(
        clip_id=clip_id,
        frames=tuple(str(path.parent / f) for f in frames),
        annotation=clip.get('annotation') or {},
    ))
  return entries


class DatasetBuilder(base.Agent):
  """Turns corpus clips into training pairs and writes the dataset.

  Args:
    gateway: the model gateway.
    captioner: judge-role endpoint that captions frames.
    rewriter: chat endpoint that writes the cinematic caption.
    stoplist: vocabulary the ordinary caption must avoid.
    workers: clips processed concurrently.
    templates_dir: prompt template root override.
  """

  def __init__(
      self,
      gateway: client.ModelGateway,
      captioner: contract_lib.EndpointContract,
      rewriter: contract_lib.EndpointContract,
      stoplist: Stoplist = Stoplist(),
      workers: int = 4,
      templates_dir: Optional[str] = None,
  ):
    super().__init__(gateway, templates_dir)
    captioner.require_role(contract_lib.Role.JUDGE)
    rewriter.require_role(contract_lib.Role.CHAT)
    if workers < 1:
      raise errors.ConfigError(f'workers must be >= 1, got {workers}')
    self._captioner = captioner
    self._rewriter = rewriter
    self._stoplist = stoplist
    self._workers = workers

  def caption_clip(self, frames: Sequence[utils.PathLike]) -> str:
    """Returns the ordinary caption of a clip's frames.

    Raises:
      PreconditionError: no frames.
      RecordError: both replies were empty or used stoplist words.
    """
    if not frames:
      raise errors.PreconditionError('caption_clip needs at least one frame')
    template = self.template('dataset/caption')

    def check(text: str) -> Optional[str]:
      if not text:
        return 'empty caption'
      hits = self._stoplist.find(text)
      if hits:
        return f'cinematic vocabulary {hits}'
      return None

    return self._ask_text(
        self._captioner,
        contract_lib.ChatTurn.user(
            template.render(frame_count=len(frames)), images=frames),
        template.id, check, CAPTION_REPROMPT, 'caption')

  def enrich_caption(self, caption: str, annotation: ShotAnnotation) -> str:
    """Returns the cinematic caption for `caption` under `annotation`.

    Raises:
      RecordError: both replies left out an annotation value.
    """
    template = self.template('dataset/enrich')

    def check(text: str) -> Optional[str]:
      if not text:
        return 'empty description'
      missing = missing_values(text, annotation)
      if missing:
        return f'missing annotation values {missing}'
      return None

    return self._ask_text(
        self._rewriter,
        contract_lib.ChatTurn.user(template.render(
            caption=caption, annotation=annotation.prompt_lines())),
        template.id, check, ENRICH_REPROMPT, 'enrich')

  def _ask_text(self, contract, first_turn, template_id, check, reprompt,
                what) -> str:
    turns = [first_turn]
    for attempt in range(2):
      text = self._gateway.chat(contract, turns, template=template_id).strip()
      problem = check(text)
      if problem is None:
        return text
      if attempt == 1:
        raise errors.RecordError(f'{what}: {problem}', _STAGE)
      logging.warning('%s: unusable reply (%s); re-prompting once', what,
                      problem)
      if text:
        turns.append(contract_lib.ChatTurn.assistant(text))
      turns.append(contract_lib.ChatTurn.user(reprompt.format(error=problem)))
    raise AssertionError('unreachable')

  def build_pair(self, entry: CorpusEntry) -> TrainingPair:
    annotation = annotation_from_dict(entry.clip_id, entry.annotation)
    _frames_present(entry)
    caption = self.caption_clip(entry.frames)
    return TrainingPair(
        clip_id=entry.clip_id,
        ordinary_caption=caption,
        annotation=annotation,
        cinematic_caption=self.enrich_caption(caption, annotation),
    )

  def build(self, corpus_manifest: utils.PathLike,
            out: utils.PathLike) -> FineTuneManifest:
    """Builds the dataset file and manifest under `out`.

    Records keep corpus order whatever order the clips finish in.

    Raises:
      PersistenceError: the corpus manifest is unreadable.
    """
    entries = read_corpus(corpus_manifest)
    logging.info('Building dataset from %d corpus clips', len(entries))

    def attempt(entry: CorpusEntry):
      try:
        return self.build_pair(entry)
      except errors.StageError as e:
        logging.warning('Skipping clip %s: %s', entry.clip_id, e)
        return SkippedRecord(clip_id=entry.clip_id, reason=str(e))

    with concurrent.futures.ThreadPoolExecutor(
        max_workers=self._workers) as executor:
      results = list(executor.map(attempt, entries))
    pairs = [r for r in results if isinstance(r, TrainingPair)]
    skipped = tuple(r for r in results if isinstance(r, SkippedRecord))
    manifest = write_dataset(pairs, skipped, out, self._templates_dir)
    logging.info('Wrote %d pairs (%d skipped) to %s', manifest.pair_count,
                 manifest.skip_count, out)
    return manifest


def instruction_text(caption: str, annotation: ShotAnnotation,
                     templates_dir: Optional[str] = None) -> str:
  return prompts.load_template(
      'dataset/instruction', templates_dir).render(
          caption=caption, annotation=annotation.serialized())


def record_line(pair: TrainingPair,
                templates_dir: Optional[str] = None) -> str:
  return json.dumps(
      {
          'clip_id': pair.clip_id,
          'instruction': instruction_text(pair.ordinary_caption,
                                          pair.annotation, templates_dir),
          'response': pair.cinematic_caption,
      },
      sort_keys=True,
      ensure_ascii=False,
  ) + '\n'


def write_dataset(pairs: Sequence[TrainingPair],
                  skipped: Sequence[SkippedRecord],
                  out: utils.PathLike,
                  templates_dir: Optional[str] = None) -> FineTuneManifest:
  """Writes the dataset file and its manifest; returns the manifest."""
  out = pathlib.Path(out)
  out.mkdir(parents=True, exist_ok=True)
  data = ''.join(record_line(p, templates_dir) for p in pairs)
  utils.atomic_write(out / DATASET_NAME, data)
  manifest = FineTuneManifest(
      pair_count=len(pairs),
      skip_count=len(skipped),
      skipped=tuple(skipped),
      objective_note=OBJECTIVE_NOTE,
      hyperparameters=dict(HYPERPARAMETERS),
      dataset_path=DATASET_NAME,
      dataset_digest=utils.content_digest(data),
  )
  utils.atomic_write(
      out / MANIFEST_NAME,
      json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + '\n')
  return manifest


def read_manifest(out: utils.PathLike) -> FineTuneManifest:
  path = pathlib.Path(out) / MANIFEST_NAME
  try:
    return manifest_from_dict(json.loads(path.read_text(encoding='utf-8')))
  except (OSError, ValueError, KeyError, TypeError) as e:
    raise errors.PersistenceError(
        f'Cannot read dataset manifest: {e}', str(path)) from e


_CAPTION_MARK = '## Caption\n'
_ANNOTATION_MARK = '\n\n## Annotation\n'


def _split_instruction(instruction: str) -> Tuple[str, str]:
  head, sep, annotation = instruction.rpartition(_ANNOTATION_MARK)
  _, csep, caption = head.partition(_CAPTION_MARK)
  if not sep or not csep:
    raise ValueError('instruction lacks its caption or annotation section')
  return caption.strip(), annotation.strip()


def validate_dataset(out: utils.PathLike,
                     stoplist: Stoplist = Stoplist()
                     ) -> List[validate.Violation]:
  """Re-checks a written dataset against its manifest and pair rules.

  Returns:
    Every violation found; empty when the dataset is sound.

  Raises:
    PersistenceError: the manifest or the dataset file cannot be read.
  """
  manifest = read_manifest(out)
  path = pathlib.Path(out) / manifest.dataset_path
  try:
    data = path.read_bytes()
  except OSError as e:
    raise errors.PersistenceError(
        f'Cannot read dataset: {e}', str(path)) from e
  violations = []
  if utils.content_digest(data) != manifest.dataset_digest:
    violations.append(validate.Violation(
        'manifest', 'digest mismatch', manifest.dataset_digest))
  lines = data.decode('utf-8').splitlines()
  if len(lines) != manifest.pair_count:
    violations.append(validate.Violation(
        'manifest', 'pair_count mismatch',
        f'{manifest.pair_count} declared, {len(lines)} records'))
  for n, line in enumerate(lines, start=1):
    entity = f'record {n}'
    try:
      record = json.loads(line)
      caption, serialized = _split_instruction(record['instruction'])
      response = record['response']
      values = json.loads(serialized)
      annotation = ShotAnnotation(clip_id=record.get('clip_id', entity),
                                  **values)
    except (AttributeError, ValueError, KeyError, TypeError,
            errors.PreconditionError) as e:
      violations.append(validate.Violation(entity, 'malformed record', str(e)))
      continue
    hits = stoplist.find(caption)
    if hits:
      violations.append(validate.Violation(
          entity, 'cinematic vocabulary in caption', ', '.join(hits)))
    missing = missing_values(response, annotation)
    if missing:
      violations.append(validate.Violation(
          entity, 'annotation value missing from response',
          ', '.join(missing)))
  return violations


@dataclasses.dataclass(frozen=True)
class DatasetConfig:
  captioner: contract_lib.EndpointContract
  rewriter: contract_lib.EndpointContract
  stoplist: Stoplist = Stoplist()
  workers: int = 4
  templates_dir: Optional[str] = None


_CONFIG_KEYS = frozenset(f.name for f in dataclasses.fields(DatasetConfig))


def config_from_dict(doc: Mapping[str, Any],
                     base_dir: str = '.') -> DatasetConfig:
  """Builds the dataset configuration; relative paths use `base_dir`."""
  unknown = set(doc) - _CONFIG_KEYS
  if unknown:
    raise errors.ConfigError(f'Unknown dataset keys {sorted(unknown)}')
  for key in ('captioner', 'rewriter'):
    if not isinstance(doc.get(key), Mapping):
      raise errors.ConfigError(f'dataset.{key} endpoint is required')
  templates_dir = doc.get('templates_dir')
  if templates_dir:
    templates_dir = os.path.join(base_dir, templates_dir)
  return DatasetConfig(
      captioner=contract_lib.contract_from_dict(
          doc['captioner'], contract_lib.Role.JUDGE, 'captioner', base_dir),
      rewriter=contract_lib.contract_from_dict(
          doc['rewriter'], contract_lib.Role.CHAT, 'rewriter', base_dir),
      stoplist=Stoplist(tuple(doc['stoplist'])) if doc.get('stoplist')
      else Stoplist(),
      workers=int(doc.get('workers', 4)),
      templates_dir=templates_dir,
  )


def load_config(path: utils.PathLike) -> DatasetConfig:
  try:
    with open(path, encoding='utf-8') as f:
      doc = yaml.safe_load(f) or {}
  except (OSError, yaml.YAMLError) as e:
    raise errors.ConfigError(f'Cannot read dataset config {path}: {e}') from e
  if not isinstance(doc, Mapping):
    raise errors.ConfigError(f'{path}: expected a mapping')
  doc = doc.get('dataset', doc)
  return config_from_dict(doc, os.path.dirname(os.path.abspath(path)))


def build_dataset(corpus_manifest: utils.PathLike, config: DatasetConfig,
                  out: utils.PathLike,
                  gateway: Optional[client.ModelGateway] = None
                  ) -> FineTuneManifest:
  """Builds the dataset under `out` with the configured endpoints.

  Without a gateway, one is created that logs every request to
  `<out>/run_log.jsonl`.
  """
  os.makedirs(out, exist_ok=True)
  owns_gateway = gateway is None
  if gateway is None:
    gateway = client.ModelGateway(
        run_log=run_log.RunLog(os.path.join(out, run_log.RUN_LOG_NAME)))
  try:
    builder = DatasetBuilder(
        gateway, config.captioner, config.rewriter,
        stoplist=config.stoplist, workers=config.workers,
        templates_dir=config.templates_dir)
    return builder.build(corpus_manifest, out)
  finally:
    if owns_gateway:
      gateway.close()
