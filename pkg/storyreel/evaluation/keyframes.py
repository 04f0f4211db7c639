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
"""Uniform keyframe sampling for judge prompts."""

import math
from typing import Callable, List, Sequence

import numpy as np
from storyreel.common import errors
from storyreel.common import utils

MIN_KEYFRAMES = 8
MAX_KEYFRAMES = 12

# (video, indices, output_dir) -> frame paths in index order.
Extractor = Callable[[utils.PathLike, Sequence[int], utils.PathLike],
                     List[str]]


def keyframe_count(frame_count: int, duration_s: float) -> int:
  """One keyframe per second of video, within [8, 12] and the frame count."""
  if not math.isfinite(duration_s):
    raise errors.PreconditionError(f'Invalid duration {duration_s}')
  k = min(max(math.floor(duration_s), MIN_KEYFRAMES), MAX_KEYFRAMES)
  return min(k, frame_count)


def sample_keyframes(frame_count: int, duration_s: float) -> List[int]:
  """Returns uniformly spaced frame indices, first and last included.

  Raises:
    PreconditionError: frame_count < 1.
  """
  if frame_count < 1:
    raise errors.PreconditionError(
        f'frame_count must be >= 1, got {frame_count}')
  k = keyframe_count(frame_count, duration_s)
  if k == 1:
    return [0]
  indices = np.arange(k, dtype=np.int64) * (frame_count - 1) // (k - 1)
  return [int(i) for i in indices]


def extract_keyframes(extractor: Extractor, video: utils.PathLike,
                      frame_count: int, duration_s: float,
                      output_dir: utils.PathLike) -> List[str]:
  """Samples keyframe indices for `video` and extracts them as images."""
  return extractor(video, sample_keyframes(frame_count, duration_s),
                   output_dir)
