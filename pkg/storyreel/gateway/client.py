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
"""Uniform client for the chat, text-to-image, image-to-video and judge roles.

Every role is addressed with the same request shape: a list of chat turns,
each optionally carrying image attachments, POSTed to
`{base_url}/chat/completions`. Text roles answer with a chat completion;
binary roles answer with raw bytes, a JSON `{"b64_data": ...}` object, or a
JSON `{"job_id": ...}` that is polled at `{base_url}/jobs/{job_id}` until it
reports `succeeded` or `failed`.

Contracts with a mock script never reach the network.
"""

import base64
import dataclasses
import mimetypes
import os
import pathlib
import threading
import time
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Union

from absl import logging
import requests
from storyreel.common import errors
from storyreel.common import utils
from storyreel.gateway import contract as contract_lib
from storyreel.gateway import mock_script
from storyreel.gateway import run_log as run_log_lib
from storyreel.storyboard import storyboard as sb

Role = contract_lib.Role
ChatTurn = contract_lib.ChatTurn
EndpointContract = contract_lib.EndpointContract

# Maps a clip path to its measured {width, height, fps, frame_count}.
Probe = Callable[[str], Mapping[str, Any]]

DEFAULT_CONCURRENCY = 4
DEFAULT_POLL_INTERVAL = 2.0
DEFAULT_MAX_POLLS = 900


class _TransientFailure(Exception):
  """A failure worth retrying: connection error, timeout, 429 or 5xx."""


def _data_uri(path: str) -> str:
  mime = mimetypes.guess_type(path)[0] or 'application/octet-stream'
  payload = base64.b64encode(pathlib.Path(path).read_bytes()).decode('ascii')
  return f'data:{mime};base64,{payload}'


def _wire_message(turn: ChatTurn) -> Dict[str, Any]:
  if not turn.images:
    return {'role': str(turn.role), 'content': turn.content}
  content = [{'type': 'text', 'text': turn.content}]
  for path in turn.images:
    content.append({'type': 'image_url', 'image_url': {'url': _data_uri(path)}})
  return {'role': str(turn.role), 'content': content}


class ModelGateway:
  """Issues model requests with retries, admission control and logging.

  Thread-safe; one gateway is shared by all pipeline workers.
  """

  def __init__(
      self,
      run_log: Optional[run_log_lib.RunLog] = None,
      concurrency_limit: int = DEFAULT_CONCURRENCY,
      poll_interval: float = DEFAULT_POLL_INTERVAL,
      max_polls: int = DEFAULT_MAX_POLLS,
      session: Optional[requests.Session] = None,
      sleep: Callable[[float], None] = time.sleep,
      environ: Optional[Mapping[str, str]] = None,
      seed: Optional[int] = None,
  ):
    self._run_log = run_log if run_log is not None else run_log_lib.RunLog()
    self._admissioner = utils.Admissioner(concurrency_limit)
    self._poll_interval = poll_interval
    self._max_polls = max_polls
    self._session = session
    self._sleep = sleep
    self._environ = environ if environ is not None else os.environ
    self._lock = threading.Lock()
    self._mocks: Dict[str, mock_script.MockBackend] = {}
    self._seed = seed

  @property
  def run_log(self) -> run_log_lib.RunLog:
    return self._run_log

  def register_mock(self, path: str,
                    script: mock_script.MockScript) -> mock_script.MockBackend:
    """Installs an in-memory script for contracts mocked at `path`."""
    backend = mock_script.MockBackend(script, label=f'mock:{path}')
    with self._lock:
      self._mocks[os.path.abspath(path)] = backend
    return backend

  def mock_backend(self, path: str) -> mock_script.MockBackend:
    key = os.path.abspath(path)
    with self._lock:
      backend = self._mocks.get(key)
      if backend is None:
        backend = mock_script.MockBackend(
            mock_script.load_script(path), label=f'mock:{path}')
        self._mocks[key] = backend
      return backend

  def close(self):
    if self._session is not None:
      self._session.close()

  # Public operations.

  def chat(self, contract: EndpointContract, turns: Sequence[ChatTurn],
           template: Optional[str] = None) -> str:
    """Returns the assistant text answering `turns`.

    Args:
      contract: a chat or judge endpoint.
      turns: the request; non-empty.
      template: `name@version` of the prompt template, for the run log.

    Raises:
      PreconditionError: empty turns or wrong role.
      TransportError: retries exhausted or a non-retriable HTTP status.
      MockError: the mock script does not cover the request.
    """
    contract.require_role(Role.CHAT, Role.JUDGE)
    payload = self._issue(contract, turns, template)
    if isinstance(payload, bytes):
      return payload.decode('utf-8')
    return payload

  def generate_image(
      self,
      contract: EndpointContract,
      prompt: str,
      out: utils.PathLike,
      kind: sb.ReferenceKind = sb.ReferenceKind.CHARACTER,
      key: str = '',
      template: Optional[str] = None,
  ) -> sb.ReferenceAsset:
    """Generates one image and writes it to `out`."""
    contract.require_role(Role.T2I)
    data = self._binary(self._issue(contract, [ChatTurn.user(prompt)],
                                    template), contract)
    _write_output(out, data)
    logging.info('Wrote %d-byte image to %s', len(data), out)
    return sb.ReferenceAsset(kind=kind, key=key, image_path=str(out),
                             prompt_used=prompt)

  def generate_video(
      self,
      contract: EndpointContract,
      prompt: str,
      reference_paths: Sequence[utils.PathLike],
      out: utils.PathLike,
      probe: Probe,
      scene_index: int = 0,
      shot_index: int = 0,
      template: Optional[str] = None,
  ) -> sb.ClipRecord:
    """Generates one clip conditioned on the reference images.

    An empty `reference_paths` is a reference-free request.

    Raises:
      PreconditionError: wrong role, or a reference path does not exist. This
        is checked before any request is issued.
    """
    contract.require_role(Role.I2V)
    missing = [str(p) for p in reference_paths if not os.path.isfile(p)]
    if missing:
      raise errors.PreconditionError(f'Missing reference images: {missing}')
    turns = [ChatTurn.user(prompt, images=reference_paths)]
    data = self._binary(self._issue(contract, turns, template), contract)
    _write_output(out, data)
    meta = probe(str(out))
    logging.info('Wrote clip %s: %sx%s @ %s fps, %s frames', out,
                 meta['width'], meta['height'], meta['fps'],
                 meta['frame_count'])
    frame_count = int(meta['frame_count'])
    record = sb.ClipRecord(
        scene_index=scene_index,
        shot_index=shot_index,
        video_path=str(out),
        width=int(meta['width']),
        height=int(meta['height']),
        fps=float(meta['fps']),
        frame_count=frame_count,
        status=sb.ClipStatus.RENDERED,
    )
    if frame_count < 1:
      logging.error('Clip %s has no frames', out)
      return dataclasses.replace(
          record, status=sb.ClipStatus.FAILED,
          reason=f'probe reported {frame_count} frames')
    return record

  # Request plumbing.

  def _binary(self, payload: Union[str, bytes],
              contract: EndpointContract) -> bytes:
    if isinstance(payload, str):
      payload = payload.encode('utf-8')
    if not payload:
      raise errors.TransportError(f'{contract.label}: empty binary payload')
    return payload

  def _issue(self, contract: EndpointContract, turns: Sequence[ChatTurn],
             template: Optional[str]) -> Union[str, bytes]:
    if not turns:
      raise errors.PreconditionError('A request needs at least one turn')
    text = contract_lib.request_text(turns)
    seq = self._run_log.reserve()
    entry = {
        'role': str(contract.role),
        'endpoint': contract.label,
        'model': contract.model_name,
        'template': template,
        'mocked': contract.mocked,
        'request': text,
    }
    attempts = [0]
    try:
      with self._admissioner:
        if contract.mocked:
          backend = self.mock_backend(contract.mock_script)
          send = lambda: self._mock_send(backend, text)
        else:
          send = lambda: self._http_send(contract, turns)
        payload = self._with_retries(contract, send, attempts)
    except errors.StoryreelError as e:
      entry.update(attempts=attempts[0], error=str(e))
      self._run_log.record(seq, **entry)
      raise
    except Exception as e:  # pylint: disable=broad-except
      failure = errors.TransportError(
          f'{contract.label}: {type(e).__name__}: {e}')
      entry.update(attempts=attempts[0], error=str(failure))
      self._run_log.record(seq, **entry)
      raise failure from e
    if isinstance(payload, bytes):
      entry.update(response_bytes=len(payload),
                   response_sha256=utils.content_digest(payload))
    else:
      entry.update(response=payload)
    entry.update(attempts=attempts[0])
    self._run_log.record(seq, **entry)
    return payload

  def _with_retries(self, contract: EndpointContract,
                    send: Callable[[], Union[str, bytes]],
                    attempts) -> Union[str, bytes]:
    last = None
    for attempt in range(contract.max_retries + 1):
      attempts[0] = attempt + 1
      try:
        return send()
      except _TransientFailure as e:
        last = e
        if attempt == contract.max_retries:
          break
        delay = contract.backoff_base * 2**attempt
        logging.warning('%s: transient failure on attempt %d (%s); retrying'
                        ' in %.1fs', contract.label, attempt + 1, e, delay)
        self._sleep(delay)
    logging.error('%s: giving up after %d attempts', contract.label,
                  contract.max_retries + 1)
    raise errors.TransportError(
        f'{contract.label}: failed after {contract.max_retries + 1} attempts:'
        f' {last}')

  def _mock_send(self, backend: mock_script.MockBackend,
                 text: str) -> Union[str, bytes]:
    entry = backend.answer(text)
    if entry.error is not None:
      raise _TransientFailure(entry.error)
    return entry.payload

  def _http_session(self) -> requests.Session:
    with self._lock:
      if self._session is None:
        self._session = requests.Session()
      return self._session

  def _headers(self, contract: EndpointContract) -> Dict[str, str]:
    if not contract.api_key_env:
      return {}
    key = self._environ.get(contract.api_key_env)
    if not key:
      raise errors.ConfigError(
          f'{contract.label}: environment variable {contract.api_key_env} is'
          ' not set')
    return {'Authorization': f'Bearer {key}'}

  def _request(self, contract: EndpointContract, method: str, url: str,
               **kwargs) -> requests.Response:
    try:
      resp = self._http_session().request(
          method, url, headers=self._headers(contract),
          timeout=contract.timeout, **kwargs)
    except (requests.ConnectionError, requests.Timeout) as e:
      raise _TransientFailure(f'{type(e).__name__}: {e}') from e
    except requests.RequestException as e:
      raise errors.TransportError(
          f'{contract.label}: {type(e).__name__}: {e}') from e
    if resp.status_code == 429 or resp.status_code >= 500:
      raise _TransientFailure(f'HTTP {resp.status_code} from {url}')
    if resp.status_code >= 400:
      raise errors.TransportError(
          f'{contract.label}: HTTP {resp.status_code} from {url}:'
          f' {resp.text[:200]}')
    return resp

  def _http_send(self, contract: EndpointContract,
                 turns: Sequence[ChatTurn]) -> Union[str, bytes]:
    base = contract.base_url.rstrip('/')
    body = {
        'model': contract.model_name,
        'messages': [_wire_message(t) for t in turns],
    }
    if self._seed is not None:
      body['seed'] = self._seed
    resp = self._request(contract, 'POST', f'{base}/chat/completions',
                         json=body)
    if not contract.role.binary:
      try:
        return resp.json()['choices'][0]['message']['content']
      except (ValueError, KeyError, IndexError, TypeError) as e:
        raise errors.TransportError(
            f'{contract.label}: malformed chat completion: {e}') from e
    if not resp.headers.get('Content-Type', '').startswith('application/json'):
      return resp.content
    doc = _json_reply(contract, resp)
    if 'b64_data' in doc:
      return _b64_payload(contract, doc)
    if 'job_id' in doc:
      return self._poll_job(contract, f'{base}/jobs/{doc["job_id"]}')
    raise errors.TransportError(
        f'{contract.label}: binary reply has neither b64_data nor job_id')

  def _poll_job(self, contract: EndpointContract, url: str) -> bytes:
    for _ in range(self._max_polls):
      doc = _json_reply(contract, self._request(contract, 'GET', url))
      status = doc.get('status')
      if status == 'succeeded':
        return _b64_payload(contract, doc)
      if status == 'failed':
        raise errors.TransportError(
            f'{contract.label}: job {url} failed: {doc.get("error", "")}')
      self._sleep(self._poll_interval)
    raise errors.TransportError(
        f'{contract.label}: job {url} unfinished after {self._max_polls}'
        ' polls')


def _json_reply(contract: EndpointContract,
                resp: requests.Response) -> Dict[str, Any]:
  try:
    doc = resp.json()
  except ValueError as e:
    raise errors.TransportError(
        f'{contract.label}: reply is not JSON: {e}') from e
  if not isinstance(doc, dict):
    raise errors.TransportError(f'{contract.label}: reply is not an object')
  return doc


def _b64_payload(contract: EndpointContract, doc: Dict[str, Any]) -> bytes:
  try:
    return base64.b64decode(doc['b64_data'], validate=True)
  except (KeyError, TypeError, ValueError) as e:
    raise errors.TransportError(
        f'{contract.label}: bad b64_data in reply: {e!r}') from e


def _write_output(out: utils.PathLike, data: bytes) -> None:
  pathlib.Path(out).parent.mkdir(parents=True, exist_ok=True)
  utils.atomic_write(out, data)
