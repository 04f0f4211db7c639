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
"""Video agent: reference selection, clip rendering and the concat manifest."""

import dataclasses
import json
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

from absl import logging
from storyreel.common import errors
from storyreel.common import utils
from storyreel.gateway import client
from storyreel.gateway import contract as contract_lib
from storyreel.storyboard import store
from storyreel.storyboard import storyboard as sb
from storyreel.storyboard import validate

CONCAT_LIST_NAME = 'concat.txt'
CONCAT_JSON_NAME = 'concat.json'
FILM_NAME = 'film.mp4'


@dataclasses.dataclass(frozen=True)
class ClipFormat:
  """Expected clip format; the defaults are the render target."""

  width: int = 832
  height: int = 480
  fps: float = 15.0


@dataclasses.dataclass(frozen=True)
class RenderPlan:
  """What to render for one shot.

  Attributes:
    scene_index: scene of the shot.
    shot_index: position of the shot in its scene.
    prompt: the final shot content.
    reference_paths: character references in name order, then the scene
      reference. Empty in reference-free runs.
  """

  scene_index: int
  shot_index: int
  prompt: str
  reference_paths: Tuple[str, ...] = ()

  @property
  def key(self) -> Tuple[int, int]:
    return (self.scene_index, self.shot_index)


@dataclasses.dataclass(frozen=True)
class ConcatManifest:
  clip_paths: Tuple[str, ...]
  width: int
  height: int
  fps: float
  total_frames: int

  @property
  def duration_s(self) -> float:
    return self.total_frames / self.fps if self.fps else 0.0

  def to_dict(self) -> Dict[str, Any]:
    return {
        'clip_paths': list(self.clip_paths),
        'width': self.width,
        'height': self.height,
        'fps': self.fps,
        'total_frames': self.total_frames,
    }


def select_references(shot: sb.ShotDescription, storyboard: sb.Storyboard,
                      base_dir: Optional[utils.PathLike] = None) -> List[str]:
  """Returns the reference images for a shot.

  Character assets come first, ordered by name, then the asset of the
  shot's scene. Characters without an asset are skipped with a notice.
  Paths are joined to `base_dir` when given.
  """
  paths = []
  for name in sorted(shot.characters, key=utils.normalize_name):
    asset = storyboard.reference(sb.ReferenceKind.CHARACTER, name)
    if asset is None:
      logging.info('Shot %s: no reference for %s; omitted', shot.key, name)
      continue
    paths.append(asset.image_path)
  scene_asset = storyboard.reference(sb.ReferenceKind.SCENE,
                                     str(shot.scene_index))
  if scene_asset is not None:
    paths.append(scene_asset.image_path)
  if base_dir is not None:
    paths = [os.path.join(base_dir, p) for p in paths]
  return paths


def plan_render(shot: sb.ShotDescription, storyboard: sb.Storyboard,
                base_dir: utils.PathLike) -> RenderPlan:
  return RenderPlan(
      scene_index=shot.scene_index,
      shot_index=shot.shot_index,
      prompt=shot.content,
      reference_paths=tuple(select_references(shot, storyboard, base_dir)),
  )


def clip_filename(scene_index: int, shot_index: int, ext: str = 'mp4') -> str:
  return f'{store.CLIPS_DIR}/s{scene_index}_{shot_index}.{ext}'


class VideoAgent:
  """Renders shots through the image-to-video endpoint."""

  def __init__(self, gateway: client.ModelGateway,
               i2v: contract_lib.EndpointContract, probe: client.Probe):
    self._gateway = gateway
    self._i2v = i2v
    self._probe = probe

  def render_shot(self, plan: RenderPlan,
                  out_dir: utils.PathLike) -> sb.ClipRecord:
    """Renders one shot to `<out_dir>/clips/s<j>_<i>.mp4`.

    Returns:
      A rendered record, or a failed one carrying the reason when generation
      or probing failed. The record's path is relative to out_dir.

    Raises:
      PreconditionError: a reference image is missing.
    """
    rel = clip_filename(plan.scene_index, plan.shot_index)
    try:
      clip = self._gateway.generate_video(
          self._i2v, plan.prompt, list(plan.reference_paths),
          os.path.join(out_dir, rel), self._probe,
          scene_index=plan.scene_index, shot_index=plan.shot_index)
    except errors.StageError as e:
      logging.error('Rendering shot %s failed: %s', plan.key, e)
      return sb.ClipRecord(
          scene_index=plan.scene_index, shot_index=plan.shot_index,
          video_path=rel, status=sb.ClipStatus.FAILED, reason=str(e))
    return dataclasses.replace(clip, video_path=rel)


def validate_clip(record: sb.ClipRecord,
                  expected: ClipFormat) -> List[validate.Violation]:
  """Returns one violation per field that differs from `expected`."""
  entity = f'clip {record.key}'
  if record.status != sb.ClipStatus.RENDERED:
    return [validate.Violation(entity, 'clip not rendered', str(record.status))]
  violations = []
  if record.frame_count < 1:
    violations.append(validate.Violation(
        entity, 'rendered clip has no frames', str(record.frame_count)))
  for field in ('width', 'height', 'fps'):
    actual = getattr(record, field)
    wanted = getattr(expected, field)
    if actual != wanted:
      violations.append(validate.Violation(
          entity, f'{field} mismatch', f'{actual} != {wanted}'))
  return violations


def build_concat(records: Sequence[sb.ClipRecord]) -> ConcatManifest:
  """Orders rendered clips scene-major and checks they share one format.

  Raises:
    ManifestError: no clips, an unrendered clip, or clips whose width,
      height or fps differ from the first clip's.
  """
  if not records:
    raise errors.ManifestError('No clips to concatenate', stage='concat')
  ordered = sorted(records, key=lambda r: r.key)
  unrendered = [r.key for r in ordered if r.status != sb.ClipStatus.RENDERED]
  if unrendered:
    raise errors.ManifestError(f'Clips not rendered: {unrendered}',
                               stage='concat')
  first = ordered[0]
  reference = ClipFormat(first.width, first.height, first.fps)
  offenders = []
  for r in ordered[1:]:
    violations = validate_clip(r, reference)
    if violations:
      offenders.append('; '.join(str(v) for v in violations))
  if offenders:
    raise errors.ManifestError(
        'Heterogeneous clips: ' + ' | '.join(offenders), stage='concat')
  return ConcatManifest(
      clip_paths=tuple(r.video_path for r in ordered),
      width=first.width,
      height=first.height,
      fps=first.fps,
      total_frames=sum(r.frame_count for r in ordered),
  )


def _concat_line(path: str) -> str:
  return "file '%s'" % path.replace("'", "'\\''")


def write_concat(manifest: ConcatManifest,
                 out_dir: utils.PathLike) -> Tuple[str, str]:
  """Writes the muxer list file and the JSON manifest into out_dir.

  Clip paths in the list are relative to out_dir, which is where the list
  lives.

  Returns:
    (list path, JSON path).
  """
  list_path = os.path.join(out_dir, CONCAT_LIST_NAME)
  json_path = os.path.join(out_dir, CONCAT_JSON_NAME)
  utils.atomic_write(
      list_path, ''.join(_concat_line(p) + '\n' for p in manifest.clip_paths))
  utils.atomic_write(
      json_path,
      json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + '\n')
  logging.info('Concat manifest: %d clips, %d frames (%.1fs)',
               len(manifest.clip_paths), manifest.total_frames,
               manifest.duration_s)
  return list_path, json_path


def read_concat(out_dir: utils.PathLike) -> ConcatManifest:
  path = os.path.join(out_dir, CONCAT_JSON_NAME)
  try:
    with open(path, encoding='utf-8') as f:
      doc = json.load(f)
    return ConcatManifest(
        clip_paths=tuple(doc['clip_paths']), width=int(doc['width']),
        height=int(doc['height']), fps=float(doc['fps']),
        total_frames=int(doc['total_frames']))
  except (OSError, ValueError, KeyError, TypeError) as e:
    raise errors.PersistenceError(f'Cannot read concat manifest: {e}',
                                  path) from e
