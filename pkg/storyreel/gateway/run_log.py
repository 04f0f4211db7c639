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
"""Append-only log of every issued model request."""

import json
import threading
import time
from typing import Any, Dict, List, Optional

from storyreel.common import utils

RUN_LOG_NAME = 'run_log.jsonl'


class RunLog:
  """Records one JSON line per request, in issue order.

  A sequence number is reserved when a request is issued; the entry is
  written once the request completes. Completed entries are held back until
  every earlier sequence number has been written, so the file is always
  ordered by issue time even with concurrent producers.
  """

  def __init__(self, path: Optional[utils.PathLike] = None):
    self._path = path
    self._lock = threading.Lock()
    self._next_seq = 0
    self._next_write = 0
    self._pending: Dict[int, Dict[str, Any]] = {}
    self._entries: List[Dict[str, Any]] = []

  def reserve(self) -> int:
    """Reserves the sequence number of a newly issued request."""
    with self._lock:
      seq = self._next_seq
      self._next_seq += 1
      return seq

  def record(self, seq: int, **fields: Any) -> None:
    """Completes the entry of request `seq`."""
    entry = {'seq': seq, 'timestamp': time.time()}
    entry.update(fields)
    with self._lock:
      self._pending[seq] = entry
      ready = []
      while self._next_write in self._pending:
        ready.append(self._pending.pop(self._next_write))
        self._next_write += 1
      if not ready:
        return
      self._entries.extend(ready)
      if self._path is not None:
        with open(self._path, 'a', encoding='utf-8') as f:
          for e in ready:
            f.write(json.dumps(e, ensure_ascii=False, sort_keys=True) + '\n')

  def entries(self) -> List[Dict[str, Any]]:
    with self._lock:
      return list(self._entries)

  def __len__(self) -> int:
    with self._lock:
      return len(self._entries)


def read_run_log(path: utils.PathLike) -> List[Dict[str, Any]]:
  with open(path, encoding='utf-8') as f:
    return [json.loads(line) for line in f if line.strip()]
