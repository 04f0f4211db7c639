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
"""Tests for structured."""

import json

from absl.testing import absltest
from absl.testing import parameterized
from storyreel.common import errors
from storyreel.gateway import structured


class ExtractStructuredTest(parameterized.TestCase):

  def test_fenced(self):
    self.assertEqual(
        structured.extract_structured('```json\n{"score": 4}\n```'),
        {'score': 4},
    )

  def test_fenced_and_bare_agree(self):
    bare = '{"genre": "fantasy", "characters": [{"name": "Anna"}]}'
    self.assertEqual(
        structured.extract_structured(f'Here it is:\n```\n{bare}\n```\nok'),
        structured.extract_structured(bare),
    )

  def test_prose_around_nested_object(self):
    self.assertEqual(
        structured.extract_structured(
            'prose then {"a": {"b": 1}} trailing'),
        {'a': {'b': 1}},
    )

  def test_braces_inside_strings(self):
    self.assertEqual(
        structured.extract_structured('x {"a": "}{", "b": "\\"}"} y'),
        {'a': '}{', 'b': '"}'},
    )

  def test_first_object_wins(self):
    self.assertEqual(
        structured.extract_structured('{"a": 1} {"a": 2}'), {'a': 1}
    )

  @parameterized.parameters('no braces here', '{"a": 1', '')
  def test_no_object(self, raw):
    with self.assertRaises(errors.ParseError) as cm:
      structured.extract_structured(raw)
    self.assertEqual(cm.exception.raw, raw)

  def test_invalid_json_is_not_repaired(self):
    with self.assertRaises(errors.ParseError):
      structured.extract_structured("{'a': 1}")

  @parameterized.parameters(
      ({'score': 4, 'explanation': 'fine'},),
      ({'a': {'b': [1, 2, {'c': None}]}, 'd': 'x{y}'},),
      ({},),
  )
  def test_idempotent(self, obj):
    once = structured.extract_structured(json.dumps(obj))
    self.assertEqual(once, obj)
    self.assertEqual(structured.extract_structured(json.dumps(once)), once)

  def test_balanced_scanner_matches_bruteforce(self):
    # The balanced span is the shortest prefix (from the first brace) that
    # parses as JSON when no string contains braces.
    for text in ['a {"x": {"y": {"z": 1}}} b', '{"k": [1, {"m": 2}]}tail']:
      start = text.index('{')
      expected = next(
          text[start:end] for end in range(start + 1, len(text) + 1)
          if _parses(text[start:end])
      )
      self.assertEqual(structured.find_balanced_object(text), expected)


def _parses(s):
  try:
    json.loads(s)
    return True
  except json.JSONDecodeError:
    return False


class RequireFieldsTest(absltest.TestCase):

  def test_missing(self):
    with self.assertRaisesRegex(errors.ParseError, "'logline'"):
      structured.require_fields({'genre': 'x', 'logline': ' '},
                                ['genre', 'logline'], 'script')

  def test_present(self):
    structured.require_fields({'terminal': False}, ['terminal'], 'shot')


if __name__ == '__main__':
  absltest.main()
