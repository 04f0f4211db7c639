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
"""Exception types shared across storyreel.

Every error carries the process exit code the command-line entry points map
it to: 2 for configuration problems, 3 for stage failures and 4 for
persistence (I/O) failures.
"""

from typing import Optional, Sequence

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_IO = 4


class StoryreelError(Exception):
  """Base class of all storyreel errors."""

  exit_code: int = EXIT_UNEXPECTED


class ConfigError(StoryreelError):
  """The pipeline configuration is invalid or incomplete."""

  exit_code = EXIT_CONFIG


class PreconditionError(StoryreelError, ValueError):
  """An operation was called with arguments that violate its precondition."""

  exit_code = EXIT_CONFIG


class StageError(StoryreelError):
  """A pipeline stage could not produce its output."""

  exit_code = EXIT_STAGE

  def __init__(self, message: str, stage: Optional[str] = None):
    super().__init__(message)
    self.stage = stage


class TransportError(StageError):
  """A model endpoint could not be reached after all retries."""


class MockError(StageError):
  """A mocked endpoint received a request its script does not cover."""

  def __init__(self, message: str, request_text: str = ''):
    super().__init__(message)
    self.request_text = request_text


class ParseError(StageError):
  """A model reply did not contain a parseable structured object."""

  def __init__(self, message: str, raw: str = ''):
    super().__init__(message)
    self.raw = raw


class ManifestError(StageError):
  """Rendered clips cannot be concatenated into one manifest."""


class MuxError(StageError):
  """The external muxer failed."""

  def __init__(self, message: str, output: str = ''):
    super().__init__(message)
    self.output = output


class EvaluationError(StageError):
  """A judge cell could not be scored."""


class RecordError(StageError):
  """One dataset record could not be built; the record is skipped."""


class MetricImportError(StoryreelError):
  """An external metric table does not match the declared schema."""

  exit_code = EXIT_IO


class PersistenceError(StoryreelError):
  """Reading or writing an on-disk artifact failed."""

  exit_code = EXIT_IO

  def __init__(self, message: str, path: Optional[str] = None):
    super().__init__(message)
    self.path = path


class InvariantError(PersistenceError):
  """A loaded document violates storyboard invariants."""

  def __init__(self, message: str, violations: Sequence[object] = (),
               path: Optional[str] = None):
    super().__init__(message, path)
    self.violations = list(violations)


class ResumeError(StoryreelError):
  """A workdir cannot be resumed; a fresh run is required."""

  exit_code = EXIT_IO
