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
"""Shared request/parse loop of the planning agents."""

from typing import Any, Callable, Dict, Optional, Sequence, TypeVar

from absl import logging
from storyreel.agents import prompts
from storyreel.common import errors
from storyreel.gateway import client
from storyreel.gateway import contract as contract_lib
from storyreel.gateway import structured

T = TypeVar('T')

REPROMPT = (
    'Your previous reply could not be used: {error}. Reply again with only'
    ' the JSON object in the requested format.'
)


class Agent:
  """Base class of agents that ask a chat model for one JSON object."""

  def __init__(self, gateway: client.ModelGateway,
               templates_dir: Optional[str] = None):
    self._gateway = gateway
    self._templates_dir = templates_dir

  def template(self, name: str) -> prompts.PromptTemplate:
    return prompts.load_template(name, self._templates_dir)

  def ask_json(
      self,
      contract: contract_lib.EndpointContract,
      template: prompts.PromptTemplate,
      variables: Dict[str, Any],
      convert: Callable[[Dict[str, Any]], T],
      what: str,
      reprompt: bool = True,
      images=(),
  ) -> T:
    """Sends a rendered template and converts the structured reply.

    `convert` raises ParseError for replies worth one re-prompt (unparseable
    text, missing or invalid fields); any other StageError propagates at
    once. A "reasoning" field is logged and dropped before `convert` sees the
    object.

    Raises:
      ParseError: the reply (and the re-prompt's reply) could not be used.
    """
    turns = [contract_lib.ChatTurn.user(template.render(**variables),
                                        images=images)]
    return self.ask_turns(contract, turns, template.id, convert, what,
                          reprompt)

  def ask_turns(
      self,
      contract: contract_lib.EndpointContract,
      turns: Sequence[contract_lib.ChatTurn],
      template_id: Optional[str],
      convert: Callable[[Dict[str, Any]], T],
      what: str,
      reprompt: bool = True,
  ) -> T:
    """Like `ask_json`, for a request that is already rendered."""
    turns = list(turns)
    attempts = 2 if reprompt else 1
    for attempt in range(attempts):
      raw = self._gateway.chat(contract, turns, template=template_id)
      try:
        obj = structured.extract_structured(raw)
        if not isinstance(obj, dict):
          raise errors.ParseError(f'{what}: reply is not a JSON object', raw)
        reasoning = obj.pop('reasoning', None)
        if reasoning:
          logging.info('%s reasoning: %s', what, reasoning)
        return convert(obj)
      except errors.ParseError as e:
        if attempt + 1 == attempts:
          raise errors.ParseError(f'{what}: {e}', e.raw or raw) from e
        logging.warning('%s: unusable reply (%s); re-prompting once', what, e)
        if raw.strip():
          turns.append(contract_lib.ChatTurn.assistant(raw))
        turns.append(contract_lib.ChatTurn.user(REPROMPT.format(error=e)))
    raise AssertionError('unreachable')
