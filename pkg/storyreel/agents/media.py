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
"""External media tools: clip probing, muxing and frame extraction.

Each tool is a configured command template. Templates are split with shell
quoting rules and placeholders are substituted inside the resulting
arguments, so no shell is involved and paths with spaces are safe.
"""

import fractions
import json
import os
import shlex
import subprocess
from typing import Any, Dict, List, Mapping, Sequence

from absl import logging
from storyreel.common import errors
from storyreel.common import utils

FFPROBE_TEMPLATE = (
    'ffprobe -v error -select_streams v:0 -count_frames -show_entries'
    ' stream=width,height,r_frame_rate,nb_frames,nb_read_frames -of json'
    ' {path}'
)
FFMPEG_CONCAT_TEMPLATE = (
    'ffmpeg -y -loglevel error -f concat -safe 0 -i {manifest} -c copy'
    ' {output}'
)
FFMPEG_FRAMES_TEMPLATE = (
    "ffmpeg -y -loglevel error -i {input} -vf 'select={select}' -vsync 0"
    ' {output_dir}/frame_%04d.png'
)


class CommandTemplate:
  """A command line with `{name}` placeholders."""

  def __init__(self, template: str, placeholders: Sequence[str]):
    self.template = template
    self._args = shlex.split(template)
    if not self._args:
      raise errors.ConfigError('Empty command template')
    for name in placeholders:
      if not any('{%s}' % name in a for a in self._args):
        raise errors.ConfigError(
            f'Command template {template!r} lacks the {{{name}}} placeholder')
    self._placeholders = tuple(placeholders)

  def argv(self, **values: Any) -> List[str]:
    argv = []
    for arg in self._args:
      for name in self._placeholders:
        arg = arg.replace('{%s}' % name, str(values[name]))
      argv.append(arg)
    return argv

  def run(self, timeout: float, **values: Any) -> subprocess.CompletedProcess:
    argv = self.argv(**values)
    logging.info('Running %s', ' '.join(shlex.quote(a) for a in argv))
    try:
      return subprocess.run(argv, capture_output=True, text=True,
                            timeout=timeout, check=False)
    except (OSError, subprocess.TimeoutExpired) as e:
      raise errors.StageError(f'Cannot run {argv[0]}: {e}') from e


def parse_probe_output(text: str) -> Dict[str, Any]:
  """Parses probe output into {width, height, fps, frame_count}.

  Accepts a flat object with those keys or ffprobe's JSON, where the first
  stream carries width, height, r_frame_rate and nb_frames (or
  nb_read_frames).

  Raises:
    StageError: the output is not one of those forms.
  """
  try:
    doc = json.loads(text)
    if 'streams' in doc:
      stream = doc['streams'][0]
      frames = stream.get('nb_read_frames') or stream.get('nb_frames')
      return {
          'width': int(stream['width']),
          'height': int(stream['height']),
          'fps': float(fractions.Fraction(stream['r_frame_rate'])),
          'frame_count': int(frames),
      }
    return {
        'width': int(doc['width']),
        'height': int(doc['height']),
        'fps': float(fractions.Fraction(str(doc['fps']))),
        'frame_count': int(doc['frame_count']),
    }
  except (ValueError, KeyError, IndexError, TypeError, ZeroDivisionError) as e:
    raise errors.StageError(f'Unparseable probe output: {e!r}') from e


class CommandProbe:
  """Probes clips with an external command printing JSON metadata."""

  def __init__(self, template: str = FFPROBE_TEMPLATE, timeout: float = 60.0):
    self._command = CommandTemplate(template, ('path',))
    self._timeout = timeout

  def __call__(self, path: str) -> Dict[str, Any]:
    proc = self._command.run(self._timeout, path=path)
    if proc.returncode != 0:
      raise errors.StageError(
          f'Probe of {path} exited with {proc.returncode}: {proc.stderr}')
    return parse_probe_output(proc.stdout)


class StaticProbe:
  """Reports fixed metadata for every clip."""

  def __init__(self, width: int, height: int, fps: float, frame_count: int):
    self._meta = {'width': width, 'height': height, 'fps': float(fps),
                  'frame_count': frame_count}

  def __call__(self, path: str) -> Dict[str, Any]:
    return dict(self._meta)


def probe_from_config(doc: Mapping[str, Any]):
  """Builds a probe from `{command: ...}` or `{static: {...}}`."""
  if 'static' in doc:
    s = doc['static']
    try:
      return StaticProbe(int(s['width']), int(s['height']), float(s['fps']),
                         int(s['frame_count']))
    except (KeyError, TypeError, ValueError) as e:
      raise errors.ConfigError(f'Invalid static probe {s!r}') from e
  return CommandProbe(doc.get('command', FFPROBE_TEMPLATE),
                      float(doc.get('timeout', 60.0)))


class Muxer:
  """Concatenates clips listed in a manifest file into one video."""

  def __init__(self, template: str = FFMPEG_CONCAT_TEMPLATE,
               timeout: float = 600.0):
    self._command = CommandTemplate(template, ('manifest', 'output'))
    self._timeout = timeout

  def mux(self, manifest: utils.PathLike, output: utils.PathLike) -> str:
    """Runs the muxer and checks the output exists.

    Raises:
      MuxError: nonzero exit or no output file; carries the tool's output.
    """
    proc = self._command.run(self._timeout, manifest=manifest, output=output)
    captured = (proc.stdout or '') + (proc.stderr or '')
    if proc.returncode != 0:
      raise errors.MuxError(
          f'Muxer exited with {proc.returncode}', output=captured)
    if not os.path.isfile(output):
      raise errors.MuxError(f'Muxer produced no file at {output}',
                            output=captured)
    logging.info('Muxed film to %s', output)
    return str(output)


def select_expression(indices: Sequence[int]) -> str:
  """Returns the ffmpeg select filter expression picking `indices`."""
  return '+'.join(f'eq(n\\,{i})' for i in indices)


class FrameExtractor:
  """Extracts frames by index into `<output_dir>/frame_NNNN.png`.

  The command must number its outputs frame_0001.png, frame_0002.png, ...
  in index order, the way ffmpeg's image2 muxer does.
  """

  def __init__(self, template: str = FFMPEG_FRAMES_TEMPLATE,
               timeout: float = 300.0):
    self._command = CommandTemplate(template,
                                    ('input', 'select', 'output_dir'))
    self._timeout = timeout

  def __call__(self, video: utils.PathLike, indices: Sequence[int],
               output_dir: utils.PathLike) -> List[str]:
    os.makedirs(output_dir, exist_ok=True)
    proc = self._command.run(self._timeout, input=video,
                             select=select_expression(indices),
                             output_dir=output_dir)
    if proc.returncode != 0:
      raise errors.StageError(
          f'Frame extraction from {video} exited with {proc.returncode}:'
          f' {proc.stderr}')
    frames = [
        os.path.join(output_dir, f'frame_{n:04d}.png')
        for n in range(1, len(indices) + 1)
    ]
    missing = [f for f in frames if not os.path.isfile(f)]
    if missing:
      raise errors.StageError(
          f'Frame extraction from {video} produced {len(frames) - len(missing)}'
          f' of {len(frames)} frames')
    return frames
