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
"""Deterministic scripted backends for offline runs.

A mock script is a YAML file holding an ordered list of entries:

  entries:
    - match: 'Expand the outline'     # substring of the request text
      response: '{"genre": "fantasy", ...}'
    - position: 0                     # 0-based request ordinal
      response_file: clip.mp4         # binary payload, relative to the script
    - match: 'Shot number: 3'
      error: 'simulated outage'       # forced transport failure

An entry carries a `match` substring, a `position`, or both, plus exactly one
of `response`, `response_b64`, `response_file` or `error`.

A request is answered by the single position entry whose ordinal equals the
request's ordinal (and whose substring, if any, occurs in the request); if
there is none, by the single substring entry occurring in the request.
Anything else, no match or an ambiguous one, is a `MockError`. Runs that
issue requests concurrently should rely on substring entries only, since
ordinals then depend on scheduling.
"""

import base64
import dataclasses
import os
import pathlib
import threading
from typing import Any, List, Mapping, Optional, Sequence, Tuple, Union

from absl import logging
from storyreel.common import errors
from storyreel.common import utils
import yaml

_RESPONSE_KEYS = ('response', 'response_b64', 'response_file', 'error')
_ENTRY_KEYS = frozenset(('match', 'position') + _RESPONSE_KEYS)


@dataclasses.dataclass(frozen=True)
class MockEntry:
  """One matcher/response pair.

  Attributes:
    match: substring the request text must contain.
    position: request ordinal this entry answers.
    text: textual response.
    data: binary response.
    error: when set, the request fails as a transport failure.
  """

  match: Optional[str] = None
  position: Optional[int] = None
  text: Optional[str] = None
  data: Optional[bytes] = None
  error: Optional[str] = None

  def __post_init__(self):
    if self.match is None and self.position is None:
      raise errors.ConfigError('Mock entry needs a match or a position')
    if self.match is not None and not self.match:
      raise errors.ConfigError('Mock entry match must be non-empty')
    answers = [x for x in (self.text, self.data, self.error) if x is not None]
    if len(answers) != 1:
      raise errors.ConfigError(
          'Mock entry needs exactly one of response, response_b64,'
          f' response_file or error (match={self.match!r},'
          f' position={self.position})'
      )

  @property
  def payload(self) -> Union[str, bytes, None]:
    return self.text if self.text is not None else self.data

  def hits(self, text: str) -> bool:
    return self.match is None or self.match in text


@dataclasses.dataclass(frozen=True)
class MockScript:
  entries: Tuple[MockEntry, ...] = ()


def _entry_from_dict(doc: Mapping[str, Any], base_dir: str) -> MockEntry:
  unknown = set(doc) - _ENTRY_KEYS
  if unknown:
    raise errors.ConfigError(f'Unknown mock entry keys {sorted(unknown)}')
  data = None
  if 'response_b64' in doc:
    data = base64.b64decode(doc['response_b64'])
  elif 'response_file' in doc:
    path = os.path.join(base_dir, doc['response_file'])
    try:
      data = pathlib.Path(path).read_bytes()
    except OSError as e:
      raise errors.ConfigError(f'Cannot read mock response {path}: {e}') from e
  position = doc.get('position')
  return MockEntry(
      match=doc.get('match'),
      position=int(position) if position is not None else None,
      text=doc.get('response'),
      data=data,
      error=doc.get('error'),
  )


def script_from_dict(doc: Any, base_dir: utils.PathLike = '.') -> MockScript:
  """Builds a script from its YAML document (a list or `{entries: [...]}`)."""
  if isinstance(doc, Mapping):
    doc = doc.get('entries') or []
  if doc is None:
    doc = []
  if not isinstance(doc, list):
    raise errors.ConfigError('A mock script must be a list of entries')
  return MockScript(tuple(_entry_from_dict(e, str(base_dir)) for e in doc))


def load_script(path: utils.PathLike) -> MockScript:
  try:
    with open(path, encoding='utf-8') as f:
      doc = yaml.safe_load(f)
  except (OSError, yaml.YAMLError) as e:
    raise errors.ConfigError(f'Cannot load mock script {path}: {e}') from e
  return script_from_dict(doc, os.path.dirname(os.path.abspath(path)))


class MockBackend:
  """Answers requests from a `MockScript` and records them.

  Thread-safe. `requests` keeps every request text in arrival order for test
  oracles.
  """

  def __init__(self, script: MockScript, label: str = 'mock'):
    self._script = script
    self._label = label
    self._lock = threading.Lock()
    self.requests: List[str] = []

  def answer(self, text: str) -> MockEntry:
    """Returns the entry answering `text`.

    Raises:
      MockError: no entry or more than one entry matches.
    """
    with self._lock:
      ordinal = len(self.requests)
      self.requests.append(text)
    entry = self._select(ordinal, text)
    logging.info('%s answered request #%d from its script', self._label,
                 ordinal)
    return entry

  def _select(self, ordinal: int, text: str) -> MockEntry:
    entries = self._script.entries
    positional = [
        e for e in entries if e.position == ordinal and e.hits(text)
    ]
    if len(positional) > 1:
      raise errors.MockError(
          f'{self._label}: {len(positional)} entries claim request'
          f' #{ordinal}', text)
    if positional:
      return positional[0]
    by_substring = [
        e for e in entries if e.position is None and e.hits(text)
    ]
    if not by_substring:
      raise errors.MockError(
          f'{self._label}: no mock entry matches request #{ordinal}:'
          f' {_excerpt(text)}', text)
    if len(by_substring) > 1:
      raise errors.MockError(
          f'{self._label}: request #{ordinal} matches'
          f' {[e.match for e in by_substring]}: {_excerpt(text)}', text)
    return by_substring[0]


def _excerpt(text: str, limit: int = 200) -> str:
  flat = ' '.join(text.split())
  return flat if len(flat) <= limit else flat[:limit] + '...'


def text_entry(match: Optional[str], response: str,
               position: Optional[int] = None) -> MockEntry:
  return MockEntry(match=match, position=position, text=response)


def binary_entry(match: Optional[str], data: bytes,
                 position: Optional[int] = None) -> MockEntry:
  return MockEntry(match=match, position=position, data=data)


def entries_to_script(entries: Sequence[MockEntry]) -> MockScript:
  return MockScript(tuple(entries))
