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
"""Validate storyboards against their invariants.

Violations are returned as data. An empty list means every invariant holds.
Validation is pure: the same storyboard always yields the same list.
"""

import collections
import dataclasses
import os
from typing import List, Optional

from storyreel.common import utils
from storyreel.storyboard import storyboard as sb


@dataclasses.dataclass(frozen=True)
class Violation:
  """One broken invariant.

  Attributes:
    entity: what is wrong, e.g. `scene 3` or `shot (2, 1)`.
    rule: short rule name, e.g. `unknown character`.
    detail: optional human readable detail.
  """

  entity: str
  rule: str
  detail: str = ''

  def __str__(self):
    if self.detail:
      return f'{self.entity}: {self.rule} ({self.detail})'
    return f'{self.entity}: {self.rule}'


def validate_outline(outline: sb.StoryOutline) -> List[Violation]:
  """Validates a user-provided story outline."""
  violations = []
  if not outline.outline.strip():
    violations.append(Violation('outline', 'empty outline'))
  seen = set()
  for c in outline.character_profiles:
    key = utils.normalize_name(c.name)
    if not key:
      violations.append(Violation('outline', 'empty character name'))
    elif key in seen:
      violations.append(
          Violation(f'character {c.name!r}', 'duplicate character name')
      )
    seen.add(key)
  return violations


def _validate_script(script: sb.Script) -> List[Violation]:
  violations = []
  seen = set()
  for c in script.characters:
    key = utils.normalize_name(c.name)
    if key in seen:
      violations.append(
          Violation(f'character {c.name!r}', 'duplicate character name')
      )
    seen.add(key)
  if not script.source_outline_digest:
    violations.append(Violation('script', 'missing source outline digest'))
  return violations


def _validate_scenes(storyboard: sb.Storyboard) -> List[Violation]:
  violations = []
  indices = [s.index for s in storyboard.scenes]
  duplicates = sorted(i for i, n in collections.Counter(indices).items()
                      if n > 1)
  for i in duplicates:
    violations.append(Violation(f'scene {i}', 'duplicate scene index'))
  if indices != list(range(1, len(indices) + 1)) and not duplicates:
    violations.append(Violation(
        'scenes', 'non-contiguous scene indices', f'got {indices}'
    ))
  if storyboard.script is None:
    if storyboard.scenes:
      violations.append(Violation('scenes', 'scenes without a script'))
    return violations
  known = {utils.normalize_name(n) for n in storyboard.script.character_names()}
  for s in storyboard.scenes:
    for name in s.characters:
      if utils.normalize_name(name) not in known:
        violations.append(
            Violation(f'scene {s.index}', 'unknown character', name)
        )
  return violations


def _validate_shot_types(scene_index: int,
                         shots: List[sb.ShotDescription]) -> List[Violation]:
  """Checks the SceneEnd | SceneStart SceneMid* SceneEnd pattern."""
  violations = []
  entity = f'scene {scene_index}'
  indices = [s.shot_index for s in shots]
  if indices != list(range(1, len(shots) + 1)):
    violations.append(Violation(
        entity, 'non-contiguous shot indices', f'got {indices}'
    ))
    return violations
  ends = [s for s in shots if s.shot_type == sb.ShotType.SCENE_END]
  if len(ends) != 1:
    violations.append(Violation(
        entity, 'scene must have exactly one SceneEnd shot',
        f'found {len(ends)}'
    ))
  elif ends[0].shot_index != len(shots):
    violations.append(Violation(
        f'shot ({scene_index}, {ends[0].shot_index})',
        'SceneEnd is not the last shot',
    ))
  if len(shots) >= 2:
    if shots[0].shot_type != sb.ShotType.SCENE_START:
      violations.append(Violation(
          f'shot ({scene_index}, 1)', 'first shot must be SceneStart'
      ))
    for s in shots[1:-1]:
      if s.shot_type != sb.ShotType.SCENE_MID:
        violations.append(Violation(
            f'shot ({scene_index}, {s.shot_index})',
            'inner shot must be SceneMid',
        ))
  return violations


def _validate_shots(storyboard: sb.Storyboard) -> List[Violation]:
  violations = []
  scene_order = [s.index for s in storyboard.scenes]
  scene_set = set(scene_order)
  known = set()
  if storyboard.script is not None:
    known = {utils.normalize_name(n)
             for n in storyboard.script.character_names()}

  # Shots must be grouped contiguously, in scene order.
  runs = []
  for s in storyboard.shots:
    if not runs or runs[-1] != s.scene_index:
      runs.append(s.scene_index)
  ordered_runs = [i for i in runs if i in scene_set]
  if len(set(runs)) != len(runs) or ordered_runs != sorted(
      ordered_runs, key=scene_order.index):
    violations.append(Violation('shots', 'shots not grouped by scene'))

  for s in storyboard.shots:
    entity = f'shot ({s.scene_index}, {s.shot_index})'
    if s.scene_index not in scene_set:
      violations.append(Violation(entity, 'unknown scene', str(s.scene_index)))
    if not s.content.strip():
      violations.append(Violation(entity, 'empty content'))
    for name in s.characters:
      if utils.normalize_name(name) not in known:
        violations.append(Violation(entity, 'unknown character', name))
    if s.raw_content is not None and s.cinematic.is_empty():
      violations.append(Violation(entity, 'empty cinematic attributes'))

  for index in sorted(set(runs)):
    violations.extend(
        _validate_shot_types(index, storyboard.shots_for_scene(index))
    )
  return violations


def _exists(base_dir: Optional[str], path: str) -> bool:
  return os.path.exists(os.path.join(base_dir, path))


def _validate_assets(storyboard: sb.Storyboard,
                     base_dir: Optional[str]) -> List[Violation]:
  violations = []
  seen = set()
  known = set()
  if storyboard.script is not None:
    known = {utils.normalize_name(n)
             for n in storyboard.script.character_names()}
  scenes = {str(s.index) for s in storyboard.scenes}
  for r in storyboard.references:
    entity = f'reference ({r.kind}, {r.key})'
    ident = (r.kind, utils.normalize_name(r.key))
    if ident in seen:
      violations.append(Violation(entity, 'duplicate reference'))
    seen.add(ident)
    if r.kind == sb.ReferenceKind.CHARACTER and ident[1] not in known:
      violations.append(Violation(entity, 'unknown character', r.key))
    if r.kind == sb.ReferenceKind.SCENE and r.key not in scenes:
      violations.append(Violation(entity, 'unknown scene', r.key))
    if base_dir is not None and not _exists(base_dir, r.image_path):
      violations.append(Violation(entity, 'missing asset file', r.image_path))

  shot_keys = {s.key for s in storyboard.shots}
  clip_keys = set()
  for c in storyboard.clips:
    entity = f'clip ({c.scene_index}, {c.shot_index})'
    if c.key in clip_keys:
      violations.append(Violation(entity, 'duplicate clip'))
    clip_keys.add(c.key)
    if c.key not in shot_keys:
      violations.append(Violation(entity, 'clip without shot'))
    if c.status == sb.ClipStatus.RENDERED:
      if c.frame_count <= 0:
        violations.append(Violation(entity, 'rendered clip has no frames'))
      if base_dir is not None and not _exists(base_dir, c.video_path):
        violations.append(
            Violation(entity, 'missing asset file', c.video_path)
        )
  return violations


def _validate_stages(storyboard: sb.Storyboard) -> List[Violation]:
  violations = []
  all_done_so_far = True
  for stage in sb.STAGES:
    state = storyboard.status(stage)
    if state != sb.StageState.PENDING and not all_done_so_far:
      violations.append(Violation(
          f'stage {stage}', 'stage ran before its predecessors finished',
          str(state),
      ))
    all_done_so_far = all_done_so_far and state == sb.StageState.DONE
  return violations


def validate(storyboard: sb.Storyboard,
             base_dir: Optional[str] = None) -> List[Violation]:
  """Returns all invariant violations of `storyboard`.

  Args:
    storyboard: the storyboard to check.
    base_dir: the storyboard directory. When given, asset files are checked
      for existence relative to it.

  Returns:
    An empty list iff every invariant holds.
  """
  violations = []
  if storyboard.script is not None:
    violations.extend(_validate_script(storyboard.script))
  violations.extend(_validate_scenes(storyboard))
  violations.extend(_validate_shots(storyboard))
  violations.extend(_validate_assets(storyboard, base_dir))
  violations.extend(_validate_stages(storyboard))
  return violations
