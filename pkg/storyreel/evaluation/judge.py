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
"""Vision-language judges scoring generated video on four criteria.

Each (video, criterion, evaluator) cell is one judge request: the criterion's
rubric prompt, the video's keyframes in index order and a context text (the
script, the camera-motion plan or the shot descriptions). A cell whose judge
fails twice is recorded as missing; no score is ever imputed.
"""

import concurrent.futures
import dataclasses
import enum
import json
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from absl import logging
from storyreel.agents import base
from storyreel.agents import prompts
from storyreel.agents import video
from storyreel.common import errors
from storyreel.common import utils
from storyreel.evaluation import keyframes as keyframes_lib
from storyreel.gateway import client
from storyreel.gateway import contract as contract_lib
from storyreel.gateway import structured
from storyreel.storyboard import store
from storyreel.storyboard import storyboard as sb

KEYFRAMES_DIR = os.path.join('eval', 'keyframes')

MIN_SCORE = 1
MAX_SCORE = 5


@enum.unique
class Criterion(str, enum.Enum):
  SCRIPT_CONSISTENCY = 'script_consistency'
  CAMERA_MOVEMENT_CONSISTENCY = 'camera_movement_consistency'
  VIDEO_QUALITY = 'video_quality'
  REAL_MOVIE_SIMILARITY = 'real_movie_similarity'

  def __str__(self):
    return self.value

  @property
  def title(self) -> str:
    return _TITLES[self]

  @property
  def template_name(self) -> str:
    return f'evaluation/{self.value}'


_TITLES = {
    Criterion.SCRIPT_CONSISTENCY: 'Script Consistency',
    Criterion.CAMERA_MOVEMENT_CONSISTENCY: 'Camera-Movement Consistency',
    Criterion.VIDEO_QUALITY: 'Video Quality',
    Criterion.REAL_MOVIE_SIMILARITY: 'Real-Movie Similarity',
}


@enum.unique
class Granularity(str, enum.Enum):
  """Whether judges see the whole film or one clip per shot."""

  FILM = 'film'
  SHOT = 'shot'

  def __str__(self):
    return self.value


@dataclasses.dataclass(frozen=True)
class JudgeScore:
  evaluator_id: str
  criterion: Criterion
  score: int
  explanation: str
  video_id: str = ''

  def __post_init__(self):
    if (not isinstance(self.score, int) or isinstance(self.score, bool)
        or not MIN_SCORE <= self.score <= MAX_SCORE):
      raise errors.PreconditionError(
          f'Judge score must be an integer from {MIN_SCORE} to {MAX_SCORE},'
          f' got {self.score!r}')


@dataclasses.dataclass(frozen=True)
class MissingCell:
  video_id: str
  criterion: Criterion
  evaluator_id: str
  reason: str


@dataclasses.dataclass(frozen=True)
class JudgePrompt:
  criterion: Criterion
  turns: Tuple[contract_lib.ChatTurn, ...]
  template_id: str

  @property
  def text(self) -> str:
    return contract_lib.request_text(self.turns)


def build_judge_prompt(criterion: Criterion,
                       keyframes: Sequence[utils.PathLike],
                       context_text: str,
                       templates_dir: Optional[str] = None) -> JudgePrompt:
  """Renders the judge request for one cell.

  The text carries, in order, the evaluator role, the criterion, the 1 to 5
  rubric, the context and the JSON reply format. Keyframes are attached in
  the given order.

  Raises:
    PreconditionError: no keyframes.
  """
  if not keyframes:
    raise errors.PreconditionError('A judge prompt needs at least one keyframe')
  template = prompts.load_template(criterion.template_name, templates_dir)
  text = template.render(keyframe_count=len(keyframes),
                         context=context_text.strip() or '(none)')
  return JudgePrompt(
      criterion=criterion,
      turns=(contract_lib.ChatTurn.user(text, images=keyframes),),
      template_id=template.id,
  )


def parse_judge_reply(obj: Dict[str, Any], evaluator_id: str,
                      criterion: Criterion, video_id: str = '') -> JudgeScore:
  """Converts a judge's JSON object; out-of-range scores are a ParseError."""
  structured.require_fields(obj, ('score', 'explanation'), 'judge reply')
  score = obj['score']
  if isinstance(score, float) and score.is_integer():
    score = int(score)
  try:
    return JudgeScore(evaluator_id=evaluator_id, criterion=criterion,
                      score=score, explanation=str(obj['explanation']).strip(),
                      video_id=video_id)
  except errors.PreconditionError as e:
    raise errors.ParseError(str(e), json.dumps(obj, ensure_ascii=False)) from e


class Judge(base.Agent):
  """Asks one judge endpoint to score one prompt."""

  def judge(self, contract: contract_lib.EndpointContract,
            prompt: JudgePrompt, video_id: str = '') -> JudgeScore:
    """Returns the judge's score, re-prompting once on an unusable reply.

    Raises:
      PreconditionError: the contract is not a judge.
      EvaluationError: both replies were unusable.
    """
    contract.require_role(contract_lib.Role.JUDGE)
    evaluator_id = contract.label
    try:
      return self.ask_turns(
          contract, prompt.turns, prompt.template_id,
          lambda obj: parse_judge_reply(obj, evaluator_id, prompt.criterion,
                                        video_id),
          what=f'{prompt.criterion} judge {evaluator_id}')
    except errors.ParseError as e:
      raise errors.EvaluationError(str(e), 'evaluate') from e


@dataclasses.dataclass(frozen=True)
class VideoItem:
  """One judged video with its keyframes and per-criterion context."""

  video_id: str
  keyframes: Tuple[str, ...]
  contexts: Mapping[Criterion, str]


@dataclasses.dataclass(frozen=True)
class MethodResult:
  method: str
  granularity: Granularity
  scores: Tuple[JudgeScore, ...]
  missing: Tuple[MissingCell, ...]


def script_context(script: sb.Script, scenes: Sequence[sb.Scene]) -> str:
  lines = [
      f'Genre: {script.genre}',
      f'Logline: {script.logline}',
      f'Storyline: {script.storyline}',
  ]
  lines.extend(
      f'Scene {s.index} ({s.location}, {s.time_of_day}): {s.plot}'
      for s in scenes)
  return '\n'.join(lines)


def camera_plan_context(shots: Sequence[sb.ShotDescription]) -> str:
  """Lists the planned cinematic attributes of each shot."""
  lines = []
  for shot in shots:
    attrs = shot.cinematic.populated()
    if attrs:
      plan = '; '.join(
          f'{k.replace("_", " ")}: {v}' for k, v in attrs.items())
    else:
      plan = f'no explicit camera plan; content: {shot.content}'
    lines.append(f'Shot ({shot.scene_index}, {shot.shot_index}): {plan}')
  return '\n'.join(lines)


def shot_context(shots: Sequence[sb.ShotDescription]) -> str:
  return '\n'.join(
      f'Shot ({s.scene_index}, {s.shot_index}): {s.content}' for s in shots)


def contexts_for(storyboard: sb.Storyboard,
                 shots: Sequence[sb.ShotDescription]) -> Dict[Criterion, str]:
  described = shot_context(shots)
  return {
      Criterion.SCRIPT_CONSISTENCY: script_context(storyboard.script,
                                                   storyboard.scenes),
      Criterion.CAMERA_MOVEMENT_CONSISTENCY: camera_plan_context(shots),
      Criterion.VIDEO_QUALITY: described,
      Criterion.REAL_MOVIE_SIMILARITY: described,
  }


def items_from_workdir(workdir: utils.PathLike, granularity: Granularity,
                       extractor: keyframes_lib.Extractor,
                       film: Optional[utils.PathLike] = None
                       ) -> List[VideoItem]:
  """Extracts keyframes for a pipeline workdir's film or clips.

  Args:
    workdir: a workdir whose concat stage has run.
    granularity: judge the muxed film, or every rendered clip.
    extractor: frame extraction command.
    film: the muxed film; defaults to `<workdir>/film.mp4`.

  Raises:
    EvaluationError: the film is missing, or no clip was rendered.
    PersistenceError: the storyboard or concat manifest is unreadable.
  """
  storyboard = store.load(workdir)
  base_dir = os.fspath(workdir)
  out_root = os.path.join(base_dir, KEYFRAMES_DIR)
  if granularity == Granularity.FILM:
    manifest = video.read_concat(base_dir)
    film = os.fspath(film or os.path.join(base_dir, video.FILM_NAME))
    if not os.path.isfile(film):
      raise errors.EvaluationError(
          f'Film granularity needs the muxed film at {film}', 'evaluate')
    frames = keyframes_lib.extract_keyframes(
        extractor, film, manifest.total_frames, manifest.duration_s,
        os.path.join(out_root, 'film'))
    return [VideoItem(video_id='film', keyframes=tuple(frames),
                      contexts=contexts_for(storyboard, storyboard.shots))]

  items = []
  for shot in storyboard.shots:
    clip = storyboard.clip(shot.key)
    if clip is None or clip.status != sb.ClipStatus.RENDERED:
      continue
    video_id = f's{shot.scene_index}_{shot.shot_index}'
    frames = keyframes_lib.extract_keyframes(
        extractor, os.path.join(base_dir, clip.video_path), clip.frame_count,
        clip.duration_s, os.path.join(out_root, video_id))
    items.append(VideoItem(video_id=video_id, keyframes=tuple(frames),
                           contexts=contexts_for(storyboard, [shot])))
  if not items:
    raise errors.EvaluationError(f'{workdir} has no rendered clips',
                                 'evaluate')
  return items


class Evaluator:
  """Runs every criterion and judge over a method's videos.

  Args:
    gateway: the model gateway; its concurrency limit bounds judge requests.
    judges: judge endpoints; their labels are the evaluator ids.
    criteria: criteria to score, all four by default.
    workers: cells evaluated concurrently.
    templates_dir: prompt template root override.
  """

  def __init__(
      self,
      gateway: client.ModelGateway,
      judges: Sequence[contract_lib.EndpointContract],
      criteria: Sequence[Criterion] = tuple(Criterion),
      workers: int = 4,
      templates_dir: Optional[str] = None,
  ):
    if not judges:
      raise errors.ConfigError('Evaluation needs at least one judge endpoint')
    labels = [j.label for j in judges]
    if len(set(labels)) != len(labels):
      raise errors.ConfigError(f'Judge endpoint names repeat: {labels}')
    for j in judges:
      j.require_role(contract_lib.Role.JUDGE)
    if workers < 1:
      raise errors.ConfigError(f'workers must be >= 1, got {workers}')
    self._judge = Judge(gateway, templates_dir)
    self._judges = tuple(judges)
    self._criteria = tuple(criteria)
    self._workers = workers
    self._templates_dir = templates_dir

  @property
  def evaluator_ids(self) -> List[str]:
    return [j.label for j in self._judges]

  def _cell(self, item: VideoItem, criterion: Criterion,
            contract: contract_lib.EndpointContract):
    try:
      prompt = build_judge_prompt(criterion, item.keyframes,
                                  item.contexts.get(criterion, ''),
                                  self._templates_dir)
      return self._judge.judge(contract, prompt, item.video_id)
    except errors.StageError as e:
      logging.warning('Missing cell (%s, %s, %s): %s', item.video_id,
                      criterion, contract.label, e)
      return MissingCell(video_id=item.video_id, criterion=criterion,
                         evaluator_id=contract.label, reason=str(e))

  def evaluate_method(self, method: str, items: Sequence[VideoItem],
                      granularity: Granularity) -> MethodResult:
    """Scores every (video, criterion, judge) cell of one method."""
    cells = [(item, criterion, contract)
             for item in items
             for criterion in self._criteria
             for contract in self._judges]
    logging.info('Judging %s: %d cells at %s granularity', method, len(cells),
                 granularity)
    with concurrent.futures.ThreadPoolExecutor(
        max_workers=self._workers) as executor:
      results = list(executor.map(lambda c: self._cell(*c), cells))
    return MethodResult(
        method=method,
        granularity=granularity,
        scores=tuple(r for r in results if isinstance(r, JudgeScore)),
        missing=tuple(r for r in results if isinstance(r, MissingCell)),
    )
