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
"""Endpoint contracts and request turns.

A contract declares one remote model role. All four roles speak the same
request shape (chat-style turns with optional image attachments); text-to-
image and image-to-video roles answer with binary payloads instead of text.
"""

import dataclasses
import enum
import os
from typing import Any, Mapping, Optional, Tuple

from storyreel.common import errors


@enum.unique
class Role(str, enum.Enum):
  CHAT = 'chat'
  T2I = 't2i'
  I2V = 'i2v'
  JUDGE = 'judge'

  def __str__(self):
    return self.value

  @property
  def binary(self) -> bool:
    return self in (Role.T2I, Role.I2V)


@dataclasses.dataclass(frozen=True)
class EndpointContract:
  """Declarative description of a remote model role.

  Attributes:
    role: which of the four roles this endpoint plays.
    base_url: endpoint root, e.g. `https://api.example.com/v1`.
    model_name: model identifier sent with every request.
    timeout: per-request timeout in seconds.
    max_retries: retries after the first attempt on transient failures.
    backoff_base: the n-th retry waits backoff_base * 2**n seconds.
    mock_script: when set, requests are answered from this script and never
      reach the network.
    api_key_env: name of the environment variable holding the API key.
    name: a label for logs, e.g. the evaluator id of a judge.
  """

  role: Role
  base_url: str = ''
  model_name: str = ''
  timeout: float = 120.0
  max_retries: int = 3
  backoff_base: float = 1.0
  mock_script: Optional[str] = None
  api_key_env: Optional[str] = None
  name: str = ''

  def __post_init__(self):
    if self.max_retries < 0:
      raise errors.ConfigError(
          f'max_retries must be >= 0, got {self.max_retries}'
      )
    if self.timeout <= 0:
      raise errors.ConfigError(f'timeout must be > 0, got {self.timeout}')
    if self.backoff_base < 0:
      raise errors.ConfigError(
          f'backoff_base must be >= 0, got {self.backoff_base}'
      )
    if self.mock_script is None and not self.base_url:
      raise errors.ConfigError(
          f'{self.label}: either base_url or mock_script is required'
      )

  @property
  def mocked(self) -> bool:
    return self.mock_script is not None

  @property
  def label(self) -> str:
    return self.name or f'{self.role}:{self.model_name}'

  def require_role(self, *roles: Role) -> None:
    if self.role not in roles:
      raise errors.PreconditionError(
          f'Endpoint {self.label} has role {self.role}; expected one of'
          f' {[str(r) for r in roles]}'
      )


_CONTRACT_KEYS = frozenset(f.name for f in dataclasses.fields(EndpointContract))


def contract_from_dict(doc: Mapping[str, Any],
                       default_role: Optional[Role] = None,
                       name: str = '',
                       base_dir: Optional[str] = None) -> EndpointContract:
  """Builds a contract from its configuration mapping.

  A relative `mock_script` path resolves against `base_dir` when given.
  """
  unknown = set(doc) - _CONTRACT_KEYS
  if unknown:
    raise errors.ConfigError(
        f'Unknown endpoint keys {sorted(unknown)} in {name or "endpoint"}'
    )
  fields = dict(doc)
  role = fields.pop('role', None) or default_role
  if role is None:
    raise errors.ConfigError(f'Endpoint {name!r} has no role')
  try:
    role = Role(role)
  except ValueError as e:
    raise errors.ConfigError(f'Endpoint {name!r}: unknown role {role!r}') from e
  fields.setdefault('name', name)
  mock = fields.get('mock_script')
  if mock and base_dir is not None and not os.path.isabs(mock):
    fields['mock_script'] = os.path.join(base_dir, mock)
  return EndpointContract(role=role, **fields)


@enum.unique
class Speaker(str, enum.Enum):
  SYSTEM = 'system'
  USER = 'user'
  ASSISTANT = 'assistant'

  def __str__(self):
    return self.value


@dataclasses.dataclass(frozen=True)
class ChatTurn:
  """One turn of a request.

  Attributes:
    role: who speaks.
    content: the text; never empty.
    images: image paths attached to the turn, in order.
  """

  role: Speaker
  content: str
  images: Tuple[str, ...] = ()

  def __post_init__(self):
    if not self.content or not self.content.strip():
      raise errors.PreconditionError('ChatTurn content must be non-empty')

  @classmethod
  def system(cls, content: str) -> 'ChatTurn':
    return cls(Speaker.SYSTEM, content)

  @classmethod
  def user(cls, content: str, images=()) -> 'ChatTurn':
    return cls(Speaker.USER, content, tuple(str(i) for i in images))

  @classmethod
  def assistant(cls, content: str) -> 'ChatTurn':
    return cls(Speaker.ASSISTANT, content)


def request_text(turns) -> str:
  """Returns the canonical text form of a request.

  Mock matching and the run log both use this form. Image attachments are
  rendered as `<image:PATH>` markers after the turn content.
  """
  parts = []
  for turn in turns:
    lines = [f'[{turn.role}]', turn.content]
    lines.extend(f'<image:{p}>' for p in turn.images)
    parts.append('\n'.join(lines))
  return '\n\n'.join(parts)
