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
"""Utilities routines."""

import hashlib
import os
import pathlib
import tempfile
import threading
import unicodedata
from typing import Tuple, Union

PathLike = Union[str, os.PathLike]


def normalize_name(name: str) -> str:
  """Returns the matching key for a character name (NFC, case-folded)."""
  return unicodedata.normalize('NFC', name).strip().casefold()


def content_digest(data: Union[str, bytes]) -> str:
  """Returns a `sha256:<hex>` digest of text (UTF-8) or bytes."""
  if isinstance(data, str):
    data = data.encode('utf-8')
  return 'sha256:' + hashlib.sha256(data).hexdigest()


def file_digest(path: PathLike) -> str:
  return content_digest(pathlib.Path(path).read_bytes())


def atomic_write(path: PathLike, data: Union[str, bytes]) -> None:
  """Writes `data` to `path` via a temporary file and a rename.

  Readers either see the previous content or the new one, never a partial
  write.

  Args:
    path: destination file. Its parent directory must exist.
    data: text (written as UTF-8) or bytes.

  Raises:
    OSError: the temporary file could not be written or renamed.
  """
  path = pathlib.Path(path)
  if isinstance(data, str):
    data = data.encode('utf-8')
  fd, tmp_name = tempfile.mkstemp(
      dir=str(path.parent), prefix=f'.{path.name}.', suffix='.tmp'
  )
  try:
    with os.fdopen(fd, 'wb') as f:
      f.write(data)
      f.flush()
      os.fsync(f.fileno())
    os.replace(tmp_name, path)
  except BaseException:
    if os.path.exists(tmp_name):
      os.unlink(tmp_name)
    raise


class Admissioner:
  """A semaphore with a shutdown method.

  Bounds the number of in-flight model requests across all worker threads.
  """

  def __init__(self, limit: int):
    if limit < 1:
      raise ValueError(f'Admission limit must be >= 1, got {limit}')
    self._limit = limit
    self._count = 0
    self._cv = threading.Condition()
    self._active = True

  @property
  def limit(self) -> int:
    return self._limit

  def acquire(self, blocking: bool = True) -> Tuple[bool, bool]:
    """Acquires resource.

    Args:
      blocking: whether the invocation is blocking.

    Returns:
      A tuple of 2 bools. The first indicates if it's successful, and the second
      indicates if the resource is still active.
    """
    with self._cv:
      while self._count >= self._limit:
        if not blocking:
          return False, self._active
        self._cv.wait()
      if not self._active:
        return False, False
      self._count += 1
      return True, True

  def release(self):
    with self._cv:
      self._count -= 1
      self._cv.notify_all()

  def in_flight(self) -> int:
    with self._cv:
      return self._count

  def shutdown(self):
    with self._cv:
      self._active = False
      while self._count > 0:
        self._cv.wait()

  def __enter__(self):
    ok, active = self.acquire()
    if not ok:
      raise RuntimeError(f'Admissioner is shut down (active={active}).')
    return self

  def __exit__(self, *exc):
    self.release()
    return False
