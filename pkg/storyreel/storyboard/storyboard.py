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
"""Hierarchical storyboard data model.

A storyboard is the single persisted source of truth of a run: the script,
its ordered scenes, the shot descriptions of every scene, the reference
images anchoring characters and scenes, the rendered clip records and the
per-stage status of the pipeline.

All values are immutable. Mutation happens by building a new value with
`dataclasses.replace` and re-saving it through `store.save`.

Asset paths (`ReferenceAsset.image_path`, `ClipRecord.video_path`) are kept
relative to the storyboard directory whenever the asset lives inside it, so a
workdir can be moved as a whole.
"""

import dataclasses
import enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

SCHEMA_VERSION = '1'

# Pipeline stages in execution order.
STAGES = (
    'script',
    'scenes',
    'references',
    'shots',
    'injection',
    'render',
    'concat',
)


@enum.unique
class ShotType(str, enum.Enum):
  SCENE_START = 'SceneStart'
  SCENE_MID = 'SceneMid'
  SCENE_END = 'SceneEnd'

  def __str__(self):
    return self.value


@enum.unique
class ReferenceKind(str, enum.Enum):
  CHARACTER = 'character'
  SCENE = 'scene'

  def __str__(self):
    return self.value


@enum.unique
class ClipStatus(str, enum.Enum):
  PENDING = 'pending'
  RENDERED = 'rendered'
  FAILED = 'failed'

  def __str__(self):
    return self.value


@enum.unique
class StageState(str, enum.Enum):
  PENDING = 'pending'
  RUNNING = 'running'
  DONE = 'done'
  FAILED = 'failed'

  def __str__(self):
    return self.value


@dataclasses.dataclass(frozen=True)
class OutlineCharacter:
  name: str
  description: str = ''


@dataclasses.dataclass(frozen=True)
class StoryOutline:
  """User-provided story outline.

  Attributes:
    title: story title.
    outline: the story itself; non-empty after trimming.
    character_profiles: named characters with free-text descriptions.
    reference_images: optional character name -> image path.
  """

  title: str
  outline: str
  character_profiles: Tuple[OutlineCharacter, ...] = ()
  reference_images: Optional[Mapping[str, str]] = None


@dataclasses.dataclass(frozen=True)
class CharacterProfile:
  name: str
  role: str = ''
  appearance: str = ''
  personality: str = ''


@dataclasses.dataclass(frozen=True)
class Script:
  """Script-level resources expanded from the outline."""

  genre: str
  logline: str
  characters: Tuple[CharacterProfile, ...]
  storyline: str
  source_outline_digest: str

  def character_names(self) -> List[str]:
    return [c.name for c in self.characters]


@dataclasses.dataclass(frozen=True)
class Scene:
  """One scene P^(j).

  `extras` holds scene properties the model returned beyond the typed ones.
  """

  index: int
  location: str
  time_of_day: str
  plot: str
  characters: Tuple[str, ...]
  objective: str = ''
  extras: Mapping[str, str] = dataclasses.field(default_factory=dict)


@dataclasses.dataclass(frozen=True)
class CinematicAttributes:
  shot_size: Optional[str] = None
  camera_angle: Optional[str] = None
  camera_motion: Optional[str] = None
  framing: Optional[str] = None
  lighting: Optional[str] = None

  def populated(self) -> Dict[str, str]:
    """Returns the non-empty fields."""
    return {
        f.name: getattr(self, f.name)
        for f in dataclasses.fields(self)
        if getattr(self, f.name)
    }

  def is_empty(self) -> bool:
    return not self.populated()


@dataclasses.dataclass(frozen=True)
class ShotDescription:
  """One shot, keyed by (scene_index, shot_index)."""

  scene_index: int
  shot_index: int
  shot_type: ShotType
  content: str
  characters: Tuple[str, ...] = ()
  cinematic: CinematicAttributes = CinematicAttributes()
  raw_content: Optional[str] = None

  @property
  def key(self) -> Tuple[int, int]:
    return (self.scene_index, self.shot_index)


@dataclasses.dataclass(frozen=True)
class ReferenceAsset:
  kind: ReferenceKind
  key: str
  image_path: str
  prompt_used: str = ''


@dataclasses.dataclass(frozen=True)
class ClipRecord:
  """A rendered (or attempted) clip of one shot."""

  scene_index: int
  shot_index: int
  video_path: str
  width: int = 0
  height: int = 0
  fps: float = 0.0
  frame_count: int = 0
  status: ClipStatus = ClipStatus.PENDING
  reason: Optional[str] = None

  @property
  def key(self) -> Tuple[int, int]:
    return (self.scene_index, self.shot_index)

  @property
  def duration_s(self) -> float:
    if not self.fps:
      return 0.0
    return self.frame_count / self.fps


@dataclasses.dataclass(frozen=True)
class StageCheckpoint:
  stage: str
  status: StageState
  timestamp: float
  input_digest: str = ''


@dataclasses.dataclass(frozen=True)
class Storyboard:
  """Script, scenes and shots of one film plus its references and clips."""

  script: Optional[Script] = None
  scenes: Tuple[Scene, ...] = ()
  shots: Tuple[ShotDescription, ...] = ()
  references: Tuple[ReferenceAsset, ...] = ()
  clips: Tuple[ClipRecord, ...] = ()
  stage_status: Mapping[str, StageState] = dataclasses.field(
      default_factory=lambda: {s: StageState.PENDING for s in STAGES}
  )
  checkpoints: Tuple[StageCheckpoint, ...] = ()

  def scene(self, index: int) -> Optional[Scene]:
    for s in self.scenes:
      if s.index == index:
        return s
    return None

  def shots_for_scene(self, index: int) -> List[ShotDescription]:
    return [s for s in self.shots if s.scene_index == index]

  def reference(self, kind: ReferenceKind,
                key: str) -> Optional[ReferenceAsset]:
    for r in self.references:
      if r.kind == kind and r.key == key:
        return r
    return None

  def clip(self, key: Tuple[int, int]) -> Optional[ClipRecord]:
    for c in self.clips:
      if c.key == key:
        return c
    return None

  def status(self, stage: str) -> StageState:
    return self.stage_status.get(stage, StageState.PENDING)

  def with_stage(self, stage: str, state: StageState,
                 checkpoint: Optional[StageCheckpoint] = None) -> 'Storyboard':
    """Returns a copy with `stage` moved to `state`."""
    status = dict(self.stage_status)
    status[stage] = state
    checkpoints = self.checkpoints
    if checkpoint is not None:
      checkpoints = tuple(
          c for c in checkpoints if c.stage != checkpoint.stage
      ) + (checkpoint,)
    return dataclasses.replace(
        self, stage_status=status, checkpoints=checkpoints
    )


# Serialization. The document mirrors the dataclass fields one to one.


def to_dict(storyboard: Storyboard) -> Dict[str, Any]:
  """Returns the JSON-compatible document of `storyboard`."""
  script = storyboard.script
  return {
      'schema_version': SCHEMA_VERSION,
      'script': None if script is None else {
          'genre': script.genre,
          'logline': script.logline,
          'characters': [dataclasses.asdict(c) for c in script.characters],
          'storyline': script.storyline,
          'source_outline_digest': script.source_outline_digest,
      },
      'scenes': [{
          'index': s.index,
          'location': s.location,
          'time_of_day': s.time_of_day,
          'plot': s.plot,
          'characters': list(s.characters),
          'objective': s.objective,
          'extras': dict(sorted(s.extras.items())),
      } for s in storyboard.scenes],
      'shots': [{
          'scene_index': s.scene_index,
          'shot_index': s.shot_index,
          'shot_type': s.shot_type.value,
          'content': s.content,
          'characters': list(s.characters),
          'cinematic': dataclasses.asdict(s.cinematic),
          'raw_content': s.raw_content,
      } for s in storyboard.shots],
      'references': [{
          'kind': r.kind.value,
          'key': r.key,
          'image_path': r.image_path,
          'prompt_used': r.prompt_used,
      } for r in storyboard.references],
      'clips': [{
          'scene_index': c.scene_index,
          'shot_index': c.shot_index,
          'video_path': c.video_path,
          'width': c.width,
          'height': c.height,
          'fps': c.fps,
          'frame_count': c.frame_count,
          'status': c.status.value,
          'reason': c.reason,
      } for c in storyboard.clips],
      'stage_status': {
          stage: storyboard.stage_status.get(stage, StageState.PENDING).value
          for stage in STAGES
      },
      'checkpoints': [{
          'stage': c.stage,
          'status': c.status.value,
          'timestamp': c.timestamp,
          'input_digest': c.input_digest,
      } for c in storyboard.checkpoints],
  }


def _require(doc: Mapping[str, Any], keys: Iterable[str], what: str) -> None:
  if not isinstance(doc, Mapping):
    raise ValueError(f'{what}: expected an object, got {type(doc).__name__}')
  missing = [k for k in keys if k not in doc]
  if missing:
    raise ValueError(f'{what}: missing fields {missing}')


def from_dict(doc: Mapping[str, Any]) -> Storyboard:
  """Builds a Storyboard from its document.

  Args:
    doc: a document produced by `to_dict`.

  Returns:
    The storyboard. No invariant checks are made here; see `validate`.

  Raises:
    ValueError: a field is missing or has the wrong shape.
  """
  _require(
      doc,
      ('script', 'scenes', 'shots', 'references', 'clips', 'stage_status'),
      'storyboard',
  )
  script = None
  if doc['script'] is not None:
    s = doc['script']
    _require(s, ('genre', 'logline', 'characters', 'storyline',
                 'source_outline_digest'), 'script')
    script = Script(
        genre=s['genre'],
        logline=s['logline'],
        characters=tuple(
            CharacterProfile(
                name=c['name'],
                role=c.get('role', ''),
                appearance=c.get('appearance', ''),
                personality=c.get('personality', ''),
            ) for c in s['characters']
        ),
        storyline=s['storyline'],
        source_outline_digest=s['source_outline_digest'],
    )

  scenes = []
  for s in doc['scenes']:
    _require(s, ('index', 'location', 'time_of_day', 'plot', 'characters'),
             'scene')
    scenes.append(Scene(
        index=int(s['index']),
        location=s['location'],
        time_of_day=s['time_of_day'],
        plot=s['plot'],
        characters=tuple(s['characters']),
        objective=s.get('objective', ''),
        extras=dict(s.get('extras') or {}),
    ))

  shots = []
  for s in doc['shots']:
    _require(s, ('scene_index', 'shot_index', 'shot_type', 'content'), 'shot')
    shots.append(ShotDescription(
        scene_index=int(s['scene_index']),
        shot_index=int(s['shot_index']),
        shot_type=ShotType(s['shot_type']),
        content=s['content'],
        characters=tuple(s.get('characters') or ()),
        cinematic=CinematicAttributes(**(s.get('cinematic') or {})),
        raw_content=s.get('raw_content'),
    ))

  references = []
  for r in doc['references']:
    _require(r, ('kind', 'key', 'image_path'), 'reference')
    references.append(ReferenceAsset(
        kind=ReferenceKind(r['kind']),
        key=str(r['key']),
        image_path=r['image_path'],
        prompt_used=r.get('prompt_used', ''),
    ))

  clips = []
  for c in doc['clips']:
    _require(c, ('scene_index', 'shot_index', 'video_path', 'status'), 'clip')
    clips.append(ClipRecord(
        scene_index=int(c['scene_index']),
        shot_index=int(c['shot_index']),
        video_path=c['video_path'],
        width=int(c.get('width', 0)),
        height=int(c.get('height', 0)),
        fps=float(c.get('fps', 0.0)),
        frame_count=int(c.get('frame_count', 0)),
        status=ClipStatus(c['status']),
        reason=c.get('reason'),
    ))

  stage_status = {}
  for stage, state in doc['stage_status'].items():
    if stage not in STAGES:
      raise ValueError(f'stage_status: unknown stage {stage!r}')
    stage_status[stage] = StageState(state)
  for stage in STAGES:
    stage_status.setdefault(stage, StageState.PENDING)

  checkpoints = tuple(
      StageCheckpoint(
          stage=c['stage'],
          status=StageState(c['status']),
          timestamp=float(c['timestamp']),
          input_digest=c.get('input_digest', ''),
      ) for c in doc.get('checkpoints') or ()
  )

  return Storyboard(
      script=script,
      scenes=tuple(scenes),
      shots=tuple(shots),
      references=tuple(references),
      clips=tuple(clips),
      stage_status=stage_status,
      checkpoints=checkpoints,
  )


def outline_from_dict(doc: Mapping[str, Any]) -> StoryOutline:
  """Builds a StoryOutline from a parsed YAML/JSON story file."""
  _require(doc, ('title', 'outline'), 'story')
  profiles = []
  for c in doc.get('characters') or ():
    if isinstance(c, str):
      profiles.append(OutlineCharacter(name=c))
    else:
      profiles.append(
          OutlineCharacter(name=c['name'], description=c.get('description', ''))
      )
  refs = doc.get('reference_images')
  return StoryOutline(
      title=doc['title'],
      outline=doc['outline'],
      character_profiles=tuple(profiles),
      reference_images=dict(refs) if refs else None,
  )


def outline_to_dict(outline: StoryOutline) -> Dict[str, Any]:
  doc = {
      'title': outline.title,
      'outline': outline.outline,
      'characters': [dataclasses.asdict(c) for c in outline.character_profiles],
  }
  if outline.reference_images:
    doc['reference_images'] = dict(outline.reference_images)
  return doc
