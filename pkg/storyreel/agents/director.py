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
"""Director agent: outline -> script -> scenes -> reference assets."""

import collections
import concurrent.futures
import enum
import json
import os
import re
import shutil
from typing import Any, Dict, List, Optional, Sequence

from absl import logging
from storyreel.agents import base
from storyreel.common import errors
from storyreel.common import utils
from storyreel.gateway import client
from storyreel.gateway import contract as contract_lib
from storyreel.gateway import structured
from storyreel.storyboard import store
from storyreel.storyboard import storyboard as sb
from storyreel.storyboard import validate

DEFAULT_MAX_SCENES = 10

_SCENE_FIELDS = ('index', 'location', 'time_of_day', 'plot', 'objective',
                 'characters')


@enum.unique
class ReferenceMode(str, enum.Enum):
  GENERATE = 'generate'
  USER_SUPPLIED = 'user_supplied'
  NONE = 'none'

  def __str__(self):
    return self.value


def outline_digest(outline: sb.StoryOutline) -> str:
  """Returns the digest recorded as a script's source_outline_digest."""
  return utils.content_digest(
      json.dumps(sb.outline_to_dict(outline), sort_keys=True,
                 ensure_ascii=False))


def slug(name: str) -> str:
  return re.sub(r'\W+', '_', utils.normalize_name(name)).strip('_') or 'x'


def character_stems(names: Sequence[str]) -> Dict[str, str]:
  """Maps each character name to a reference file stem unique in `names`.

  Names whose slugs collide get a short digest of the name appended.
  """
  slugs = {n: slug(n) for n in names}
  counts = collections.Counter(slugs.values())
  return {
      n: s if counts[s] == 1 else
      f'{s}_{utils.content_digest(n).split(":")[1][:8]}'
      for n, s in slugs.items()
  }


def _bullets(lines: Sequence[str]) -> str:
  return '\n'.join(f'- {line}' for line in lines) if lines else '(none)'


def _text(obj: Dict[str, Any], key: str) -> str:
  value = obj.get(key)
  return '' if value is None else str(value).strip()


class DirectorAgent(base.Agent):
  """Builds the script, scenes and reference assets of a storyboard."""

  def __init__(
      self,
      gateway: client.ModelGateway,
      chat: contract_lib.EndpointContract,
      t2i: Optional[contract_lib.EndpointContract] = None,
      max_scenes: int = DEFAULT_MAX_SCENES,
      workers: int = 4,
      templates_dir: Optional[str] = None,
  ):
    super().__init__(gateway, templates_dir)
    if max_scenes < 1:
      raise errors.ConfigError(f'max_scenes must be >= 1, got {max_scenes}')
    self._chat = chat
    self._t2i = t2i
    self._max_scenes = max_scenes
    self._workers = workers

  def expand_script(self, outline: sb.StoryOutline) -> sb.Script:
    """Expands the outline into genre, logline, cast and storyline.

    Raises:
      PreconditionError: the outline is invalid.
      ParseError: the reply stayed unusable after one re-prompt, or lacks a
        mandatory field.
      StageError: the reply dropped an outline character.
    """
    violations = validate.validate_outline(outline)
    if violations:
      raise errors.PreconditionError(
          'Invalid outline: ' + '; '.join(str(v) for v in violations))
    characters = [
        f'{c.name}: {c.description}' if c.description else c.name
        for c in outline.character_profiles
    ]
    template = self.template('director/script')
    script = self.ask_json(
        self._chat, template,
        dict(title=outline.title or '(untitled)', outline=outline.outline,
             characters=_bullets(characters)),
        lambda obj: self._to_script(obj, outline),
        what='expand_script',
    )
    logging.info('Script: %s, %d characters', script.genre,
                 len(script.characters))
    return script

  def _to_script(self, obj: Dict[str, Any],
                 outline: sb.StoryOutline) -> sb.Script:
    structured.require_fields(
        obj, ('genre', 'logline', 'storyline', 'characters'), 'script')
    if not isinstance(obj['characters'], list):
      raise errors.ParseError('script: characters must be a list',
                              json.dumps(obj))
    profiles = []
    seen = set()
    for c in obj['characters']:
      if not isinstance(c, dict) or not _text(c, 'name'):
        raise errors.ParseError('script: every character needs a name',
                                json.dumps(obj))
      name = _text(c, 'name')
      key = utils.normalize_name(name)
      if key in seen:
        raise errors.ParseError(f'script: duplicate character {name!r}',
                                json.dumps(obj))
      seen.add(key)
      profiles.append(sb.CharacterProfile(
          name=name, role=_text(c, 'role'), appearance=_text(c, 'appearance'),
          personality=_text(c, 'personality')))
    dropped = [
        c.name for c in outline.character_profiles
        if utils.normalize_name(c.name) not in seen
    ]
    if dropped:
      raise errors.StageError(f'character dropped from script: {dropped}')
    return sb.Script(
        genre=_text(obj, 'genre'),
        logline=_text(obj, 'logline'),
        characters=tuple(profiles),
        storyline=_text(obj, 'storyline'),
        source_outline_digest=outline_digest(outline),
    )

  def decompose_scenes(self, script: sb.Script) -> List[sb.Scene]:
    """Splits the script into scenes indexed 1..k, k <= max_scenes.

    Raises:
      ParseError: unusable reply after one re-prompt.
      StageError: no scenes, duplicate or non-contiguous indices, or an
        unknown character.
    """
    characters = [
        f'{c.name} ({c.role})' if c.role else c.name for c in script.characters
    ]
    template = self.template('director/scenes')
    scenes = self.ask_json(
        self._chat, template,
        dict(genre=script.genre, logline=script.logline,
             storyline=script.storyline, characters=_bullets(characters),
             max_scenes=self._max_scenes),
        lambda obj: self._to_scenes(obj, script),
        what='decompose_scenes',
    )
    if len(scenes) > self._max_scenes:
      logging.warning('Model returned %d scenes; keeping the first %d',
                      len(scenes), self._max_scenes)
      scenes = scenes[:self._max_scenes]
    logging.info('Decomposed script into %d scenes', len(scenes))
    return scenes

  def _to_scenes(self, obj: Dict[str, Any],
                 script: sb.Script) -> List[sb.Scene]:
    raw = obj.get('scenes')
    if not isinstance(raw, list):
      raise errors.ParseError("scenes: missing mandatory field 'scenes'",
                              json.dumps(obj))
    if not raw:
      raise errors.StageError('decompose_scenes: the model returned no scenes')
    names = {utils.normalize_name(n): n for n in script.character_names()}
    scenes = []
    for position, s in enumerate(raw, start=1):
      if not isinstance(s, dict):
        raise errors.ParseError('scenes: every scene must be an object',
                                json.dumps(obj))
      structured.require_fields(s, ('location', 'plot'), f'scene {position}')
      try:
        index = int(s.get('index', position))
      except (TypeError, ValueError) as e:
        raise errors.ParseError(f'scenes: bad index {s.get("index")!r}',
                                json.dumps(obj)) from e
      characters = []
      for n in s.get('characters') or []:
        canonical = names.get(utils.normalize_name(str(n)))
        if canonical is None:
          raise errors.StageError(
              f'unknown character {n!r} in scene {index}')
        characters.append(canonical)
      extras = {
          str(k): v if isinstance(v, str) else json.dumps(v, sort_keys=True)
          for k, v in s.items() if k not in _SCENE_FIELDS
      }
      scenes.append(sb.Scene(
          index=index,
          location=_text(s, 'location'),
          time_of_day=_text(s, 'time_of_day'),
          plot=_text(s, 'plot'),
          characters=tuple(characters),
          objective=_text(s, 'objective'),
          extras=extras,
      ))
    indices = [s.index for s in scenes]
    duplicates = sorted({i for i in indices if indices.count(i) > 1})
    if duplicates:
      raise errors.StageError(f'duplicate scene index {duplicates}')
    scenes.sort(key=lambda s: s.index)
    if [s.index for s in scenes] != list(range(1, len(scenes) + 1)):
      raise errors.StageError(
          f'non-contiguous scene indices {sorted(indices)}')
    return scenes

  def build_references(
      self,
      script: sb.Script,
      scenes: Sequence[sb.Scene],
      mode: ReferenceMode,
      out_dir: utils.PathLike,
      outline: Optional[sb.StoryOutline] = None,
      outline_dir: Optional[utils.PathLike] = None,
  ) -> List[sb.ReferenceAsset]:
    """Returns the reference assets of the storyboard.

    Args:
      script: the script whose characters get character assets.
      scenes: scenes that get scene assets.
      mode: generate with the T2I model, wrap the outline's images, or none.
      out_dir: storyboard directory; generated images go to its refs/.
      outline: required for user_supplied mode.
      outline_dir: directory relative user-supplied image paths resolve
        against; defaults to the working directory.

    Returns:
      Character assets in script order, then scene assets in scene order.
      Image paths are relative to out_dir when inside it.

    Raises:
      PreconditionError: user_supplied without images, or a missing file.
      StageError: generation failed; the message names the asset.
    """
    mode = ReferenceMode(mode)
    if mode == ReferenceMode.NONE:
      logging.info('Reference-free run: no reference assets')
      return []
    if mode == ReferenceMode.USER_SUPPLIED:
      return self._user_supplied(script, outline, outline_dir, out_dir)
    if self._t2i is None:
      raise errors.ConfigError('Reference generation needs a t2i endpoint')

    jobs = []
    stems = character_stems([c.name for c in script.characters])
    for c in script.characters:
      prompt = self.template('director/character_reference').render(
          name=c.name, appearance=c.appearance or 'unspecified appearance',
          personality=c.personality or 'unspecified', genre=script.genre)
      jobs.append((sb.ReferenceKind.CHARACTER, c.name, prompt,
                   f'character_{stems[c.name]}.png',
                   'director/character_reference'))
    for s in scenes:
      prompt = self.template('director/scene_reference').render(
          location=s.location, time_of_day=s.time_of_day or 'day',
          plot=s.plot, genre=script.genre)
      jobs.append((sb.ReferenceKind.SCENE, str(s.index), prompt,
                   f'scene_{s.index}.png', 'director/scene_reference'))

    def generate(job):
      kind, key, prompt, filename, template_name = job
      rel = f'{store.REFS_DIR}/{filename}'
      try:
        asset = self._gateway.generate_image(
            self._t2i, prompt, os.path.join(out_dir, rel), kind=kind, key=key,
            template=self.template(template_name).id)
      except errors.StageError as e:
        raise errors.StageError(
            f'reference {kind}:{key} failed: {e}', stage='references') from e
      return sb.ReferenceAsset(kind=asset.kind, key=asset.key, image_path=rel,
                               prompt_used=asset.prompt_used)

    with concurrent.futures.ThreadPoolExecutor(
        max_workers=self._workers) as executor:
      assets = list(executor.map(generate, jobs))
    logging.info('Generated %d reference assets', len(assets))
    return assets

  def _user_supplied(self, script: sb.Script,
                     outline: Optional[sb.StoryOutline],
                     outline_dir: Optional[utils.PathLike],
                     out_dir: utils.PathLike) -> List[sb.ReferenceAsset]:
    if outline is None or not outline.reference_images:
      raise errors.PreconditionError(
          'user_supplied references need reference_images in the outline')
    by_name = {
        utils.normalize_name(k): v for k, v in outline.reference_images.items()
    }
    stems = character_stems([c.name for c in script.characters])
    assets = []
    for c in script.characters:
      path = by_name.get(utils.normalize_name(c.name))
      if path is None:
        logging.warning('No reference image supplied for %s; omitted', c.name)
        continue
      full = os.path.join(outline_dir or os.getcwd(), path)
      if not os.path.isfile(full):
        raise errors.PreconditionError(
            f'Reference image for {c.name} not found: {full}')
      ext = os.path.splitext(full)[1] or '.png'
      rel = f'{store.REFS_DIR}/character_{stems[c.name]}{ext}'
      os.makedirs(os.path.join(out_dir, store.REFS_DIR), exist_ok=True)
      shutil.copyfile(full, os.path.join(out_dir, rel))
      assets.append(sb.ReferenceAsset(
          kind=sb.ReferenceKind.CHARACTER, key=c.name, image_path=rel,
          prompt_used=''))
    return assets
