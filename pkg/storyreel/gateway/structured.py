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
"""Extract the structured object from a model reply.

Repair is deliberately minimal: code fences are stripped and the first
balanced top-level `{...}` object is parsed. Nothing is guessed, so model
failures surface as `ParseError` instead of being hidden.
"""

import json
import re
from typing import Any, Dict, Iterable, Optional

from storyreel.common import errors

_FENCE_RE = re.compile(r'```[a-zA-Z0-9_-]*[ \t]*\n(.*?)```', re.DOTALL)


def strip_code_fences(raw: str) -> str:
  """Returns the body of the first fenced block, or `raw` unchanged."""
  match = _FENCE_RE.search(raw)
  if match:
    return match.group(1)
  return raw


def find_balanced_object(text: str) -> Optional[str]:
  """Returns the first balanced top-level `{...}` span of `text`.

  Braces inside JSON string literals are ignored.
  """
  start = text.find('{')
  if start < 0:
    return None
  depth = 0
  in_string = False
  escaped = False
  for i in range(start, len(text)):
    ch = text[i]
    if in_string:
      if escaped:
        escaped = False
      elif ch == '\\':
        escaped = True
      elif ch == '"':
        in_string = False
      continue
    if ch == '"':
      in_string = True
    elif ch == '{':
      depth += 1
    elif ch == '}':
      depth -= 1
      if depth == 0:
        return text[start:i + 1]
  return None


def extract_structured(raw: str) -> Dict[str, Any]:
  """Parses the structured object embedded in a model reply.

  Args:
    raw: the reply text.

  Returns:
    The parsed object.

  Raises:
    ParseError: no balanced object was found or it is not valid JSON. The
      error carries the raw text.
  """
  body = strip_code_fences(raw)
  span = find_balanced_object(body)
  if span is None and body is not raw:
    span = find_balanced_object(raw)
  if span is None:
    raise errors.ParseError('No balanced JSON object in model reply', raw)
  try:
    obj = json.loads(span)
  except json.JSONDecodeError as e:
    raise errors.ParseError(f'Invalid JSON object in model reply: {e}',
                            raw) from e
  return obj


def require_fields(obj: Dict[str, Any], fields: Iterable[str],
                   what: str) -> None:
  """Raises ParseError naming the first missing or empty mandatory field."""
  for field in fields:
    value = obj.get(field)
    if value is None or (isinstance(value, str) and not value.strip()):
      raise errors.ParseError(
          f'{what}: reply is missing mandatory field {field!r}',
          json.dumps(obj, ensure_ascii=False),
      )
