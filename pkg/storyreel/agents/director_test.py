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
"""Tests for director."""

import json
import os
import random
import shutil
import tempfile

from absl.testing import absltest
from storyreel.agents import director
from storyreel.common import errors
from storyreel.common import testutil
from storyreel.gateway import client
from storyreel.gateway import contract
from storyreel.gateway import mock_script
from storyreel.storyboard import storyboard as sb
from storyreel.storyboard import validate

Role = contract.Role

_OUTLINE = sb.StoryOutline(
    title='Frozen Path',
    outline='Two sisters cross a frozen forest.',
    character_profiles=(sb.OutlineCharacter('Anna', 'the younger sister'),
                        sb.OutlineCharacter('Elsa')),
)

_SCRIPT_REPLY = {
    'reasoning': 'A fantasy about sisters.',
    'genre': 'fantasy',
    'logline': 'Two sisters face an endless winter.',
    'storyline': 'The sisters cross the forest to end the winter.',
    'characters': [
        {'name': 'Anna', 'role': 'lead', 'appearance': 'red braids',
         'personality': 'brave'},
        {'name': 'Elsa', 'role': 'lead', 'appearance': 'silver hair',
         'personality': 'reserved'},
        {'name': 'Olaf', 'role': 'sidekick', 'appearance': 'snowman',
         'personality': 'cheerful'},
    ],
}


def _scenes_reply(scenes):
  return json.dumps({'reasoning': 'three acts', 'scenes': scenes})


def _scene(index, characters=('Anna',), **extra):
  scene = {'index': index, 'location': f'place {index}',
           'time_of_day': 'dusk', 'plot': f'plot {index}',
           'objective': f'goal {index}', 'characters': list(characters)}
  scene.update(extra)
  return scene


class DirectorTestCase(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.tmp = tempfile.mkdtemp()
    self.addCleanup(shutil.rmtree, self.tmp)
    self.gateway = client.ModelGateway(sleep=lambda s: None)

  def director(self, chat_entries, t2i_entries=(), **kwargs):
    chat, self.chat_backend = testutil.mock_contract(
        self.gateway, Role.CHAT, chat_entries)
    t2i, self.t2i_backend = testutil.mock_contract(
        self.gateway, Role.T2I, t2i_entries)
    return director.DirectorAgent(self.gateway, chat, t2i, **kwargs)


class ExpandScriptTest(DirectorTestCase):

  def test_passthrough(self):
    agent = self.director([mock_script.text_entry(
        'Expand the story outline', json.dumps(_SCRIPT_REPLY))])
    script = agent.expand_script(_OUTLINE)
    self.assertEqual(script.genre, 'fantasy')
    self.assertEqual(script.character_names(), ['Anna', 'Elsa', 'Olaf'])
    self.assertEqual(script.source_outline_digest,
                     director.outline_digest(_OUTLINE))
    self.assertIn('Anna: the younger sister', self.chat_backend.requests[0])

  def test_fenced_reply_parses_like_bare(self):
    fenced = f'Here you go:\n```json\n{json.dumps(_SCRIPT_REPLY)}\n```'
    bare = self.director([mock_script.text_entry(
        'Expand', json.dumps(_SCRIPT_REPLY))]).expand_script(_OUTLINE)
    self.gateway = client.ModelGateway()
    from_fence = self.director([mock_script.text_entry(
        'Expand', fenced)]).expand_script(_OUTLINE)
    self.assertEqual(bare, from_fence)

  def test_dropped_character(self):
    reply = dict(_SCRIPT_REPLY, characters=_SCRIPT_REPLY['characters'][:1])
    agent = self.director([mock_script.text_entry('Expand',
                                                  json.dumps(reply))])
    with self.assertRaisesRegex(errors.StageError, 'character dropped'):
      agent.expand_script(_OUTLINE)
    self.assertLen(self.chat_backend.requests, 1)

  def test_character_names_match_case_insensitively(self):
    reply = json.loads(json.dumps(_SCRIPT_REPLY))
    reply['characters'][1]['name'] = 'ELSA'
    agent = self.director([mock_script.text_entry('Expand',
                                                  json.dumps(reply))])
    self.assertIn('ELSA', agent.expand_script(_OUTLINE).character_names())

  def test_missing_field_after_reprompt(self):
    reply = {k: v for k, v in _SCRIPT_REPLY.items() if k != 'logline'}
    agent = self.director([mock_script.text_entry('Expand',
                                                  json.dumps(reply))])
    with self.assertRaisesRegex(errors.ParseError, 'logline'):
      agent.expand_script(_OUTLINE)
    self.assertLen(self.chat_backend.requests, 2)
    self.assertIn('could not be used', self.chat_backend.requests[1])

  def test_reprompt_recovers(self):
    agent = self.director([
        mock_script.text_entry(None, 'I am not sure.', position=0),
        mock_script.text_entry(None, json.dumps(_SCRIPT_REPLY), position=1),
    ])
    self.assertEqual(agent.expand_script(_OUTLINE).genre, 'fantasy')

  def test_invalid_outline(self):
    agent = self.director([])
    with self.assertRaises(errors.PreconditionError):
      agent.expand_script(sb.StoryOutline(title='t', outline='  '))
    self.assertEmpty(self.chat_backend.requests)


class DecomposeScenesTest(DirectorTestCase):

  def test_three_scenes(self):
    agent = self.director([mock_script.text_entry(
        'Decompose the script',
        _scenes_reply([_scene(1), _scene(2, ('Elsa', 'anna')),
                       _scene(3, (), mood='tense')]))])
    scenes = agent.decompose_scenes(testutil.make_script())
    self.assertEqual([s.index for s in scenes], [1, 2, 3])
    self.assertEqual(scenes[1].characters, ('Elsa', 'Anna'))
    self.assertEqual(dict(scenes[2].extras), {'mood': 'tense'})
    self.assertEqual(scenes[0].objective, 'goal 1')

  def test_duplicate_index(self):
    agent = self.director([mock_script.text_entry(
        'Decompose', _scenes_reply([_scene(1), _scene(2), _scene(2)]))])
    with self.assertRaisesRegex(errors.StageError, 'duplicate scene index'):
      agent.decompose_scenes(testutil.make_script())

  def test_unknown_character(self):
    agent = self.director([mock_script.text_entry(
        'Decompose', _scenes_reply([_scene(1, ('Hans',))]))])
    with self.assertRaisesRegex(errors.StageError, 'unknown character'):
      agent.decompose_scenes(testutil.make_script())

  def test_empty(self):
    agent = self.director([mock_script.text_entry('Decompose',
                                                  _scenes_reply([]))])
    with self.assertRaises(errors.StageError):
      agent.decompose_scenes(testutil.make_script())

  def test_cap_truncates(self):
    agent = self.director(
        [mock_script.text_entry(
            'Decompose', _scenes_reply([_scene(i) for i in (1, 2, 3)]))],
        max_scenes=2)
    with self.assertLogs('absl', level='WARNING') as logs:
      scenes = agent.decompose_scenes(testutil.make_script())
    self.assertLen(scenes, 2)
    self.assertIn('keeping the first 2', logs.output[0])

  def test_random_replies_validate(self):
    rng = random.Random(11)
    script = testutil.make_script(('Anna', 'Elsa', 'Olaf'))
    for _ in range(20):
      self.gateway = client.ModelGateway()
      k = rng.randint(1, 6)
      raw = [
          _scene(i, rng.sample(script.character_names(), rng.randint(0, 3)))
          for i in range(1, k + 1)
      ]
      rng.shuffle(raw)
      agent = self.director([mock_script.text_entry('Decompose',
                                                    _scenes_reply(raw))])
      scenes = agent.decompose_scenes(script)
      storyboard = sb.Storyboard(script=script, scenes=tuple(scenes))
      self.assertEqual(validate.validate(storyboard), [])


class BuildReferencesTest(DirectorTestCase):

  def test_generate(self):
    agent = self.director([], [
        mock_script.binary_entry('character reference', testutil.PNG_1X1),
        mock_script.binary_entry('Establishing view', testutil.PNG_1X1),
    ])
    scenes = [sb.Scene(index=i, location=f'loc {i}', time_of_day='dawn',
                       plot='p', characters=()) for i in (1, 2, 3)]
    assets = agent.build_references(testutil.make_script(), scenes,
                                    director.ReferenceMode.GENERATE, self.tmp)
    self.assertLen(assets, 5)
    self.assertLen({(a.kind, a.key) for a in assets}, 5)
    self.assertEqual(assets[0].image_path, 'refs/character_anna.png')
    self.assertEqual(assets[-1].image_path, 'refs/scene_3.png')
    for a in assets:
      self.assertTrue(os.path.isfile(os.path.join(self.tmp, a.image_path)))
    self.assertIn('loc 2', assets[3].prompt_used)

  def test_colliding_names_get_distinct_files(self):
    agent = self.director([], [
        mock_script.binary_entry('character reference', testutil.PNG_1X1),
    ])
    script = testutil.make_script(names=('Anna-Marie', 'Anna Marie', 'Elsa'))
    assets = agent.build_references(script, [],
                                    director.ReferenceMode.GENERATE, self.tmp)
    paths = [a.image_path for a in assets]
    self.assertLen(set(paths), 3)
    self.assertEqual(paths[2], 'refs/character_elsa.png')
    for path in paths[:2]:
      self.assertRegex(path, r'^refs/character_anna_marie_[0-9a-f]{8}\.png$')

  def test_character_stems(self):
    self.assertEqual(director.character_stems(['Anna', 'Elsa']),
                     {'Anna': 'anna', 'Elsa': 'elsa'})
    stems = director.character_stems(['Anna-Marie', 'Anna Marie'])
    self.assertNotEqual(stems['Anna-Marie'], stems['Anna Marie'])
    self.assertEqual(stems, director.character_stems(
        ['Anna Marie', 'Anna-Marie']))

  def test_none(self):
    agent = self.director([])
    self.assertEqual(
        agent.build_references(testutil.make_script(), [],
                               director.ReferenceMode.NONE, self.tmp), [])

  def test_user_supplied(self):
    with open(os.path.join(self.tmp, 'anna.jpg'), 'wb') as f:
      f.write(b'jpeg')
    outline = sb.StoryOutline(title='t', outline='o',
                              reference_images={'anna': 'anna.jpg'})
    out_dir = os.path.join(self.tmp, 'run')
    with self.assertLogs('absl', level='WARNING'):
      assets = self.director([]).build_references(
          testutil.make_script(), [], 'user_supplied', out_dir,
          outline=outline, outline_dir=self.tmp)
    self.assertEqual([(a.key, a.image_path) for a in assets],
                     [('Anna', 'refs/character_anna.jpg')])
    self.assertTrue(os.path.isfile(os.path.join(out_dir, assets[0].image_path)))

  def test_user_supplied_missing_file(self):
    outline = sb.StoryOutline(title='t', outline='o',
                              reference_images={'Anna': 'nope.png'})
    with self.assertRaises(errors.PreconditionError):
      self.director([]).build_references(
          testutil.make_script(), [], director.ReferenceMode.USER_SUPPLIED,
          self.tmp, outline=outline, outline_dir=self.tmp)

  def test_failure_names_asset(self):
    agent = self.director([], [
        mock_script.binary_entry('character reference', testutil.PNG_1X1),
        mock_script.MockEntry(match='Establishing view', error='down'),
    ])
    scenes = [sb.Scene(index=1, location='l', time_of_day='', plot='p',
                       characters=())]
    with self.assertRaisesRegex(errors.StageError, 'scene:1'):
      agent.build_references(testutil.make_script(), scenes,
                             director.ReferenceMode.GENERATE, self.tmp)


if __name__ == '__main__':
  absltest.main()
