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
"""Cinematography agent: recursive shot planning and cinematic rewriting.

Shot i of scene j is planned from the scene, the script and (when recursion
is enabled) the content of shot i-1 only. Planning stops when the model marks
a shot terminal or the per-scene cap is reached. Rewriting into cinematic
language runs after a whole scene is planned, one shot at a time.
"""

import dataclasses
import json
from typing import Any, Dict, List, Optional, Sequence, Tuple

from absl import logging
from storyreel.agents import base
from storyreel.common import errors
from storyreel.common import utils
from storyreel.gateway import client
from storyreel.gateway import contract as contract_lib
from storyreel.gateway import structured
from storyreel.storyboard import storyboard as sb

DEFAULT_MAX_SHOTS = 12

CINEMATIC_FIELDS = tuple(
    f.name for f in dataclasses.fields(sb.CinematicAttributes))


@dataclasses.dataclass(frozen=True)
class ShotDraft:
  """A planned shot before typing.

  Attributes:
    content: the visual description; never empty.
    characters: names appearing in the shot.
    terminal: whether the model says this shot ends the scene.
  """

  content: str
  characters: Tuple[str, ...] = ()
  terminal: bool = False

  def __post_init__(self):
    if not self.content or not self.content.strip():
      raise errors.PreconditionError('ShotDraft content must be non-empty')


@dataclasses.dataclass(frozen=True)
class RecursionConfig:
  """Shot planning settings.

  Attributes:
    max_shots_per_scene: hard cap on shots per scene.
    reprompt_on_parse_failure: re-prompt once on an unusable reply.
    recursive: condition each shot on the previous one. When False, every
      shot is planned from the scene and script alone.
  """

  max_shots_per_scene: int = DEFAULT_MAX_SHOTS
  reprompt_on_parse_failure: bool = True
  recursive: bool = True

  def __post_init__(self):
    if self.max_shots_per_scene < 1:
      raise errors.ConfigError(
          f'max_shots_per_scene must be >= 1, got {self.max_shots_per_scene}')


def shot_types(n: int) -> List[sb.ShotType]:
  """Returns the positional types of a scene with n shots."""
  if n == 1:
    return [sb.ShotType.SCENE_END]
  return ([sb.ShotType.SCENE_START] + [sb.ShotType.SCENE_MID] * (n - 2) +
          [sb.ShotType.SCENE_END])


def _names(names: Sequence[str]) -> str:
  return ', '.join(names) if names else '(none)'


class CinematographyAgent(base.Agent):
  """Plans the shots of a scene and rewrites them in cinematic language."""

  def __init__(self, gateway: client.ModelGateway,
               chat: contract_lib.EndpointContract,
               templates_dir: Optional[str] = None):
    super().__init__(gateway, templates_dir)
    self._chat = chat

  def next_shot(self, scene: sb.Scene, script: sb.Script,
                prev: Optional[sb.ShotDescription],
                cfg: RecursionConfig) -> ShotDraft:
    """Plans the shot following `prev` (or the first shot if prev is None)."""
    shot_number = prev.shot_index + 1 if prev is not None else 1
    variables = dict(
        scene_index=scene.index,
        shot_number=shot_number,
        location=scene.location,
        time_of_day=scene.time_of_day or 'unspecified',
        plot=scene.plot,
        objective=scene.objective or 'unspecified',
        scene_characters=_names(scene.characters),
        genre=script.genre,
        logline=script.logline,
        storyline=script.storyline,
    )
    if prev is not None and cfg.recursive:
      template = self.template('cinematography/next_shot')
      variables['prev_content'] = prev.content
    else:
      template = self.template('cinematography/first_shot')
    return self.ask_json(
        self._chat, template, variables,
        lambda obj: self._to_draft(obj, script),
        what=f'next_shot ({scene.index}, {shot_number})',
        reprompt=cfg.reprompt_on_parse_failure,
    )

  def _to_draft(self, obj: Dict[str, Any], script: sb.Script) -> ShotDraft:
    structured.require_fields(obj, ('content', 'terminal'), 'shot')
    if not isinstance(obj['terminal'], bool):
      raise errors.ParseError('shot: terminal must be true or false',
                              json.dumps(obj))
    return ShotDraft(
        content=str(obj['content']).strip(),
        characters=tuple(self._canonical(obj.get('characters') or [], script)),
        terminal=obj['terminal'],
    )

  def _canonical(self, names, script: sb.Script) -> List[str]:
    known = {utils.normalize_name(n): n for n in script.character_names()}
    result = []
    for n in names:
      canonical = known.get(utils.normalize_name(str(n)))
      if canonical is None:
        raise errors.ParseError(f'shot: unknown character {n!r}',
                                json.dumps(names))
      if canonical not in result:
        result.append(canonical)
    return result

  def plan_shots(self, scene: sb.Scene, script: sb.Script,
                 cfg: RecursionConfig) -> List[sb.ShotDescription]:
    """Plans every shot of a scene.

    Returns:
      Shots indexed 1..N with types SceneEnd (N == 1) or SceneStart,
      SceneMid..., SceneEnd.

    Raises:
      StageError: a shot could not be planned; the message names its key.
    """
    drafts = []
    prev = None
    for shot_index in range(1, cfg.max_shots_per_scene + 1):
      try:
        draft = self.next_shot(scene, script, prev, cfg)
      except errors.StageError as e:
        raise errors.StageError(
            f'scene {scene.index} shot {shot_index}: {e}', stage='shots'
        ) from e
      drafts.append(draft)
      prev = sb.ShotDescription(
          scene_index=scene.index, shot_index=shot_index,
          shot_type=sb.ShotType.SCENE_MID, content=draft.content,
          characters=draft.characters)
      if draft.terminal:
        break
    else:
      logging.warning(
          'Scene %d reached the cap of %d shots without a terminal shot;'
          ' forcing SceneEnd', scene.index, cfg.max_shots_per_scene)
    types = shot_types(len(drafts))
    shots = [
        sb.ShotDescription(
            scene_index=scene.index, shot_index=i, shot_type=t,
            content=d.content, characters=d.characters)
        for i, (d, t) in enumerate(zip(drafts, types), start=1)
    ]
    logging.info('Scene %d: planned %d shots', scene.index, len(shots))
    return shots

  def inject_cinematic(
      self, draft_shot: sb.ShotDescription,
      contract: Optional[contract_lib.EndpointContract] = None,
  ) -> sb.ShotDescription:
    """Rewrites a planned shot with explicit cinematic attributes.

    Args:
      draft_shot: a shot that has not been rewritten yet.
      contract: the rewriting endpoint; defaults to the planning endpoint.

    Returns:
      The shot with the rewritten content, its cinematic attributes and the
      original content in raw_content.

    Raises:
      PreconditionError: the shot was already rewritten.
      ParseError: no cinematic attribute after one re-prompt.
      StageError: the rewrite changed the shot's characters.
    """
    if (not draft_shot.cinematic.is_empty() or
        draft_shot.raw_content is not None):
      raise errors.PreconditionError(
          f'Shot {draft_shot.key} already carries cinematic attributes')
    contract = contract or self._chat
    template = self.template('cinematography/inject')
    content, attributes, characters = self.ask_json(
        contract, template,
        dict(scene_index=draft_shot.scene_index,
             shot_number=draft_shot.shot_index, content=draft_shot.content,
             characters=_names(draft_shot.characters)),
        self._to_injection,
        what=f'inject_cinematic {draft_shot.key}',
    )
    self._check_characters(draft_shot, content, characters)
    return dataclasses.replace(
        draft_shot, content=content, cinematic=attributes,
        raw_content=draft_shot.content)

  def _to_injection(self, obj: Dict[str, Any]):
    structured.require_fields(obj, ('content',), 'injection')
    raw = obj.get('cinematic') or {}
    if not isinstance(raw, dict):
      raise errors.ParseError('injection: cinematic must be an object',
                              json.dumps(obj))
    values = {}
    for name in CINEMATIC_FIELDS:
      value = raw.get(name)
      if value is not None and str(value).strip():
        values[name] = str(value).strip()
    attributes = sb.CinematicAttributes(**values)
    if attributes.is_empty():
      raise errors.ParseError('injection produced no cinematic attributes',
                              json.dumps(obj))
    characters = obj.get('characters')
    if characters is not None:
      characters = [str(c) for c in characters]
    return str(obj['content']).strip(), attributes, characters

  def _check_characters(self, draft: sb.ShotDescription, content: str,
                        characters: Optional[List[str]]) -> None:
    before = {utils.normalize_name(c) for c in draft.characters}
    if characters is not None:
      after = {utils.normalize_name(c) for c in characters}
      if after != before:
        raise errors.StageError(
            f'injection changed the characters of shot {draft.key}:'
            f' {sorted(before)} -> {sorted(after)}', stage='injection')
    folded_before = draft.content.casefold()
    folded_after = content.casefold()
    dropped = [
        c for c in draft.characters
        if c.casefold() in folded_before and c.casefold() not in folded_after
    ]
    if dropped:
      raise errors.StageError(
          f'injection dropped {dropped} from shot {draft.key}',
          stage='injection')
