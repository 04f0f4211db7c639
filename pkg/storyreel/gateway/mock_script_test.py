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
"""Tests for mock_script."""

import base64
import os
import shutil
import tempfile
import textwrap

from absl.testing import absltest
from storyreel.common import errors
from storyreel.gateway import mock_script


class LoadScriptTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.tmp = tempfile.mkdtemp()
    self.addCleanup(shutil.rmtree, self.tmp)

  def _write(self, name, text):
    path = os.path.join(self.tmp, name)
    with open(path, 'w') as f:
      f.write(textwrap.dedent(text))
    return path

  def test_all_response_kinds(self):
    with open(os.path.join(self.tmp, 'clip.bin'), 'wb') as f:
      f.write(b'\x00\x01')
    path = self._write('script.yaml', f"""\
        entries:
          - match: hello
            response: world
          - position: 0
            response_b64: {base64.b64encode(b'png').decode()}
          - match: clip
            response_file: clip.bin
          - match: outage
            error: simulated
        """)
    script = mock_script.load_script(path)
    self.assertEqual([e.payload for e in script.entries],
                     ['world', b'png', b'\x00\x01', None])
    self.assertEqual(script.entries[3].error, 'simulated')

  def test_plain_list_and_empty(self):
    self.assertLen(
        mock_script.load_script(
            self._write('a.yaml', '- {match: x, response: y}\n')).entries, 1)
    self.assertEmpty(
        mock_script.load_script(self._write('b.yaml', '')).entries)

  def test_invalid_entries(self):
    for text in ('- {response: y}\n', '- {match: x}\n',
                 '- {match: x, response: y, error: z}\n',
                 '- {match: x, reply: y}\n'):
      with self.assertRaises(errors.ConfigError, msg=text):
        mock_script.load_script(self._write('bad.yaml', text))

  def test_missing_file(self):
    with self.assertRaises(errors.ConfigError):
      mock_script.load_script(os.path.join(self.tmp, 'nope.yaml'))


class MockBackendTest(absltest.TestCase):

  def test_substring_match(self):
    backend = mock_script.MockBackend(mock_script.MockScript((
        mock_script.text_entry('outline', 'script reply'),
        mock_script.text_entry('Shot number', 'shot reply'),
    )))
    self.assertEqual(backend.answer('expand the outline').payload,
                     'script reply')
    self.assertEqual(backend.requests, ['expand the outline'])

  def test_empty_script_fails(self):
    backend = mock_script.MockBackend(mock_script.MockScript())
    with self.assertRaises(errors.MockError) as cm:
      backend.answer('anything')
    self.assertEqual(cm.exception.request_text, 'anything')

  def test_ambiguous_substrings_fail(self):
    backend = mock_script.MockBackend(mock_script.MockScript((
        mock_script.text_entry('scene', 'a'),
        mock_script.text_entry('Scene index', 'b'),
    )))
    with self.assertRaisesRegex(errors.MockError, 'matches'):
      backend.answer('scene ... Scene index: 1')

  def test_position_takes_precedence(self):
    backend = mock_script.MockBackend(mock_script.MockScript((
        mock_script.text_entry(None, 'first', position=0),
        mock_script.text_entry('q', 'later'),
    )))
    self.assertEqual(backend.answer('q').payload, 'first')
    self.assertEqual(backend.answer('q').payload, 'later')

  def test_position_with_substring(self):
    backend = mock_script.MockBackend(mock_script.MockScript((
        mock_script.text_entry('judge', 'scored', position=0),
    )))
    with self.assertRaises(errors.MockError):
      backend.answer('not it')


if __name__ == '__main__':
  absltest.main()
