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
"""On-disk persistence of storyboards.

Layout of a storyboard directory:

  <dir>/storyboard.json   the versioned document
  <dir>/refs/             reference images
  <dir>/clips/            rendered clips

Writers serialize on an advisory lock file; readers never take the lock
because documents are replaced atomically.
"""

import json
import os
import pathlib

from absl import logging
import filelock
from storyreel.common import errors
from storyreel.common import utils
from storyreel.storyboard import storyboard as sb
from storyreel.storyboard import validate as validate_lib

DOCUMENT_NAME = 'storyboard.json'
REFS_DIR = 'refs'
CLIPS_DIR = 'clips'
LOCK_NAME = '.storyboard.lock'

SUPPORTED_SCHEMA_VERSIONS = frozenset([sb.SCHEMA_VERSION])

_LOCK_TIMEOUT_SECONDS = 30


def document_path(directory: utils.PathLike) -> pathlib.Path:
  return pathlib.Path(directory) / DOCUMENT_NAME


def dumps(storyboard: sb.Storyboard) -> str:
  """Returns the canonical document text of `storyboard`."""
  return json.dumps(sb.to_dict(storyboard), indent=2, ensure_ascii=False) + '\n'


def writer_lock(directory: utils.PathLike,
                timeout: float = _LOCK_TIMEOUT_SECONDS) -> filelock.FileLock:
  return filelock.FileLock(
      str(pathlib.Path(directory) / LOCK_NAME), timeout=timeout
  )


def save(storyboard: sb.Storyboard, directory: utils.PathLike) -> None:
  """Writes `storyboard` into `directory`.

  Args:
    storyboard: the storyboard to persist.
    directory: the storyboard directory; created when missing.

  Raises:
    PersistenceError: the directory or document could not be written.
  """
  directory = pathlib.Path(directory)
  path = document_path(directory)
  try:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / REFS_DIR).mkdir(exist_ok=True)
    (directory / CLIPS_DIR).mkdir(exist_ok=True)
    with writer_lock(directory):
      utils.atomic_write(path, dumps(storyboard))
  except filelock.Timeout as e:
    raise errors.PersistenceError(
        f'Another writer holds the lock on {directory}', str(path)
    ) from e
  except OSError as e:
    raise errors.PersistenceError(
        f'Failed to save storyboard to {path}: {e}', str(path)
    ) from e
  logging.info('Saved storyboard to %s', path)


def load(directory: utils.PathLike) -> sb.Storyboard:
  """Loads and validates the storyboard in `directory`.

  Args:
    directory: the storyboard directory.

  Returns:
    A storyboard satisfying every invariant.

  Raises:
    PersistenceError: the document is missing, unreadable or has an
      unsupported schema version.
    InvariantError: the document parses but violates invariants.
  """
  path = document_path(directory)
  if not path.exists():
    raise errors.PersistenceError(f'No storyboard at {path}', str(path))
  try:
    doc = json.loads(path.read_text(encoding='utf-8'))
  except (OSError, json.JSONDecodeError) as e:
    raise errors.PersistenceError(
        f'Failed to read storyboard {path}: {e}', str(path)
    ) from e
  if not isinstance(doc, dict):
    raise errors.PersistenceError(
        f'Storyboard {path} is not a JSON object', str(path)
    )
  version = doc.get('schema_version')
  if version not in SUPPORTED_SCHEMA_VERSIONS:
    raise errors.PersistenceError(
        f'Unsupported schema_version {version!r} in {path}; supported:'
        f' {sorted(SUPPORTED_SCHEMA_VERSIONS)}',
        str(path),
    )
  try:
    storyboard = sb.from_dict(doc)
  except (ValueError, KeyError, TypeError) as e:
    raise errors.InvariantError(
        f'Malformed storyboard {path}: {e}', path=str(path)
    ) from e
  violations = validate_lib.validate(storyboard, base_dir=os.fspath(directory))
  if violations:
    raise errors.InvariantError(
        f'Storyboard {path} violates invariants: '
        + '; '.join(str(v) for v in violations),
        violations,
        str(path),
    )
  return storyboard
