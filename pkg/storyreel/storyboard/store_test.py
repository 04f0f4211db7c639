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
"""Tests for store."""

import dataclasses
import json
import os
import pathlib
import random
import shutil
import stat
import tempfile

from absl.testing import absltest
from absl.testing import parameterized
from storyreel.common import errors
from storyreel.common import testutil
from storyreel.storyboard import storyboard as sb
from storyreel.storyboard import store


class StoreTest(parameterized.TestCase):

  def setUp(self):
    super().setUp()
    self.tmp = pathlib.Path(tempfile.mkdtemp())
    self.addCleanup(shutil.rmtree, self.tmp, True)

  def test_layout(self):
    store.save(sb.Storyboard(), self.tmp)
    self.assertTrue((self.tmp / 'storyboard.json').is_file())
    self.assertTrue((self.tmp / 'refs').is_dir())
    self.assertTrue((self.tmp / 'clips').is_dir())
    doc = json.loads((self.tmp / 'storyboard.json').read_text())
    self.assertEqual(doc['schema_version'], '1')

  def test_empty_storyboard_resave_is_byte_identical(self):
    store.save(sb.Storyboard(), self.tmp)
    first = (self.tmp / 'storyboard.json').read_bytes()
    store.save(store.load(self.tmp), self.tmp)
    self.assertEqual((self.tmp / 'storyboard.json').read_bytes(), first)

  @parameterized.parameters(range(25))
  def test_round_trip(self, seed):
    board = testutil.random_storyboard(random.Random(seed), self.tmp)
    store.save(board, self.tmp)
    self.assertEqual(store.load(self.tmp), board)

  def test_relocation(self):
    board = testutil.random_storyboard(random.Random(3), self.tmp)
    store.save(board, self.tmp)
    moved = pathlib.Path(tempfile.mkdtemp()) / 'moved'
    self.addCleanup(shutil.rmtree, moved.parent, True)
    shutil.move(str(self.tmp), str(moved))
    self.assertEqual(store.load(moved), board)

  def test_unwritable_dir(self):
    if os.geteuid() == 0:
      self.skipTest('permission bits are not enforced for root')
    locked = self.tmp / 'locked'
    locked.mkdir()
    os.chmod(locked, stat.S_IRUSR | stat.S_IXUSR)
    self.addCleanup(os.chmod, locked, stat.S_IRWXU)
    with self.assertRaises(errors.PersistenceError) as cm:
      store.save(sb.Storyboard(), locked / 'board')
    self.assertIn('board', cm.exception.path)

  def test_save_onto_a_file_fails(self):
    target = self.tmp / 'file'
    target.write_text('x')
    with self.assertRaises(errors.PersistenceError):
      store.save(sb.Storyboard(), target)

  def test_missing_document(self):
    with self.assertRaisesRegex(errors.PersistenceError, 'No storyboard'):
      store.load(self.tmp)

  def test_unsupported_version(self):
    store.save(sb.Storyboard(), self.tmp)
    path = self.tmp / 'storyboard.json'
    doc = json.loads(path.read_text())
    doc['schema_version'] = '2'
    path.write_text(json.dumps(doc))
    with self.assertRaisesRegex(errors.PersistenceError, 'schema_version'):
      store.load(self.tmp)

  def test_shot_in_missing_scene(self):
    board = sb.Storyboard(
        script=testutil.make_script(),
        scenes=(sb.Scene(1, 'a', 'b', 'c', ()), sb.Scene(2, 'a', 'b', 'c', ())),
        shots=testutil.typed_shots(1, ['x']) + testutil.typed_shots(3, ['y']),
    )
    store.save(board, self.tmp)
    with self.assertRaises(errors.InvariantError) as cm:
      store.load(self.tmp)
    self.assertIn('unknown scene', [v.rule for v in cm.exception.violations])

  def test_two_scene_ends(self):
    shots = list(testutil.typed_shots(1, ['x', 'y', 'z']))
    shots[0] = dataclasses.replace(shots[0], shot_type=sb.ShotType.SCENE_END)
    board = sb.Storyboard(
        script=testutil.make_script(),
        scenes=(sb.Scene(1, 'a', 'b', 'c', ()),),
        shots=tuple(shots),
    )
    store.save(board, self.tmp)
    with self.assertRaisesRegex(errors.InvariantError, 'SceneEnd'):
      store.load(self.tmp)

  def test_malformed_document(self):
    (self.tmp / 'storyboard.json').write_text('{"schema_version": "1"}')
    with self.assertRaises(errors.InvariantError):
      store.load(self.tmp)


if __name__ == '__main__':
  absltest.main()
