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
"""Tests for judge."""

import os
import pathlib
import random
import shutil
import tempfile

from absl.testing import absltest
from absl.testing import parameterized
from storyreel.agents import video
from storyreel.common import errors
from storyreel.common import testutil
from storyreel.evaluation import judge
from storyreel.evaluation import keyframes
from storyreel.gateway import client
from storyreel.gateway import mock_script
from storyreel.storyboard import store
from storyreel.storyboard import storyboard as sb

_GOLDEN_DIR = os.path.join(os.path.dirname(__file__), 'testdata', 'golden')

_SCENE = sb.Scene(index=1, location='Frozen lake', time_of_day='dusk',
                  plot='Elsa confronts Anna on the ice.',
                  characters=('Anna', 'Elsa'))
_FRAMES = tuple(f'/frames/frame_{n:04d}.png' for n in range(1, 9))


def _golden(name):
  with open(os.path.join(_GOLDEN_DIR, name), encoding='utf-8') as f:
    return f.read()


class JudgePromptTest(parameterized.TestCase):

  def test_script_consistency_golden(self):
    prompt = judge.build_judge_prompt(
        judge.Criterion.SCRIPT_CONSISTENCY, _FRAMES,
        judge.script_context(testutil.make_script(), [_SCENE]))
    self.assertLen(prompt.turns, 1)
    self.assertEqual(prompt.turns[0].content,
                     _golden('judge_script_consistency.txt'))
    self.assertEqual(prompt.turns[0].images, _FRAMES)
    self.assertEqual(prompt.template_id, 'evaluation/script_consistency@1')

  @parameterized.parameters(*judge.Criterion)
  def test_components_in_order(self, criterion):
    text = judge.build_judge_prompt(criterion, _FRAMES[:2], 'ctx').text
    positions = [text.index(h) for h in
                 ('## Role', '## Criterion', '## Rubric', '## Output')]
    self.assertEqual(positions, sorted(positions))
    self.assertIn('1: ', text)
    self.assertIn('5: ', text)
    self.assertIn('"score"', text)
    self.assertIn('"explanation"', text)
    self.assertIn(criterion.title, text)

  def test_camera_plan_context(self):
    shots = (
        sb.ShotDescription(
            scene_index=1, shot_index=1, shot_type=sb.ShotType.SCENE_START,
            content='Anna steps onto the ice. Slow push-in.',
            cinematic=sb.CinematicAttributes(shot_size='wide shot',
                                             camera_motion='slow push-in')),
        sb.ShotDescription(
            scene_index=1, shot_index=2, shot_type=sb.ShotType.SCENE_END,
            content='Elsa turns away.'),
    )
    prompt = judge.build_judge_prompt(
        judge.Criterion.CAMERA_MOVEMENT_CONSISTENCY, _FRAMES,
        judge.camera_plan_context(shots))
    self.assertIn(
        '## Camera-motion plan\n'
        'Shot (1, 1): shot size: wide shot; camera motion: slow push-in\n'
        'Shot (1, 2): no explicit camera plan; content: Elsa turns away.\n',
        prompt.text)

  def test_contexts_for(self):
    storyboard = sb.Storyboard(
        script=testutil.make_script(), scenes=(_SCENE,),
        shots=testutil.typed_shots(1, ['Anna slips.', 'Elsa turns.']))
    contexts = judge.contexts_for(storyboard, storyboard.shots)
    self.assertIn('Logline:', contexts[judge.Criterion.SCRIPT_CONSISTENCY])
    self.assertEqual(contexts[judge.Criterion.VIDEO_QUALITY],
                     'Shot (1, 1): Anna slips.\nShot (1, 2): Elsa turns.')
    self.assertEqual(contexts[judge.Criterion.REAL_MOVIE_SIMILARITY],
                     contexts[judge.Criterion.VIDEO_QUALITY])

  def test_needs_keyframes(self):
    with self.assertRaises(errors.PreconditionError):
      judge.build_judge_prompt(judge.Criterion.VIDEO_QUALITY, [], 'ctx')


class JudgeTest(parameterized.TestCase):

  def setUp(self):
    super().setUp()
    self.gateway = client.ModelGateway()
    self.prompt = judge.build_judge_prompt(
        judge.Criterion.SCRIPT_CONSISTENCY, _FRAMES, 'The script.')

  def test_accepts_score(self):
    contract, _ = testutil.mock_contract(self.gateway, 'judge', [
        mock_script.text_entry(
            '## Rubric', '{"score": 4, "explanation": "Mostly follows."}'),
    ], name='gpt')
    score = judge.Judge(self.gateway).judge(contract, self.prompt, 'film')
    self.assertEqual(score, judge.JudgeScore(
        evaluator_id='gpt', criterion=judge.Criterion.SCRIPT_CONSISTENCY,
        score=4, explanation='Mostly follows.', video_id='film'))

  def test_out_of_range_reprompts(self):
    contract, backend = testutil.mock_contract(self.gateway, 'judge', [
        mock_script.text_entry(
            None, '{"score": 6, "explanation": "Great."}', position=0),
        mock_script.text_entry(
            None, '```json\n{"score": 5, "explanation": "Great."}\n```',
            position=1),
    ], name='gpt')
    with self.assertLogs('absl', level='WARNING'):
      score = judge.Judge(self.gateway).judge(contract, self.prompt)
    self.assertEqual(score.score, 5)
    self.assertLen(backend.requests, 2)

  def test_double_failure(self):
    contract, _ = testutil.mock_contract(self.gateway, 'judge', [
        mock_script.text_entry('## Rubric', 'I liked it.'),
    ], name='gpt')
    with self.assertRaises(errors.EvaluationError):
      judge.Judge(self.gateway).judge(contract, self.prompt)

  def test_requires_judge_role(self):
    contract, _ = testutil.mock_contract(self.gateway, 'chat', [], name='c')
    with self.assertRaises(errors.PreconditionError):
      judge.Judge(self.gateway).judge(contract, self.prompt)

  def test_integral_float_accepted(self):
    score = judge.parse_judge_reply(
        {'score': 3.0, 'explanation': 'ok'}, 'gpt',
        judge.Criterion.VIDEO_QUALITY)
    self.assertEqual(score.score, 3)

  @parameterized.parameters(0, 6, True, 3.5, '4')
  def test_invalid_scores(self, value):
    with self.assertRaises(errors.PreconditionError):
      judge.JudgeScore(evaluator_id='gpt',
                       criterion=judge.Criterion.VIDEO_QUALITY, score=value,
                       explanation='')
    with self.assertRaises(errors.ParseError):
      judge.parse_judge_reply({'score': value, 'explanation': 'x'}, 'gpt',
                              judge.Criterion.VIDEO_QUALITY)


class EvaluatorTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.gateway = client.ModelGateway()
    self.item = judge.VideoItem(
        video_id='film', keyframes=_FRAMES,
        contexts={c: f'context for {c}' for c in judge.Criterion})

  def test_grid_with_missing_cells(self):
    gpt, gpt_backend = testutil.mock_contract(self.gateway, 'judge', [
        mock_script.text_entry(
            '## Rubric', '{"score": 4, "explanation": "Fine."}'),
    ], name='gpt')
    qwen, _ = testutil.mock_contract(self.gateway, 'judge', [
        mock_script.text_entry('## Rubric', 'no idea'),
    ], name='qwen')
    evaluator = judge.Evaluator(self.gateway, [gpt, qwen])
    with self.assertLogs('absl', level='WARNING') as logs:
      result = evaluator.evaluate_method('Ours', [self.item],
                                         judge.Granularity.FILM)
    self.assertEqual(result.method, 'Ours')
    self.assertEqual(result.granularity, judge.Granularity.FILM)
    self.assertLen(result.scores, 4)
    self.assertTrue(all(s.evaluator_id == 'gpt' for s in result.scores))
    self.assertEqual([s.criterion for s in result.scores],
                     list(judge.Criterion))
    self.assertEqual(
        [(m.evaluator_id, m.criterion) for m in result.missing],
        [('qwen', c) for c in judge.Criterion])
    self.assertTrue(any('Missing cell' in l for l in logs.output))
    requests = '\n'.join(gpt_backend.requests)
    for c in judge.Criterion:
      self.assertIn(f'context for {c}', requests)

  def test_rejects_bad_judges(self):
    with self.assertRaises(errors.ConfigError):
      judge.Evaluator(self.gateway, [])
    gpt, _ = testutil.mock_contract(self.gateway, 'judge', [], name='gpt')
    with self.assertRaises(errors.ConfigError):
      judge.Evaluator(self.gateway, [gpt, gpt])


class ItemsFromWorkdirTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.workdir = pathlib.Path(tempfile.mkdtemp())
    self.addCleanup(shutil.rmtree, self.workdir)
    self.storyboard = testutil.random_storyboard(random.Random(7),
                                                 self.workdir)
    store.save(self.storyboard, self.workdir)

  def test_shot_granularity(self):
    calls = []
    items = judge.items_from_workdir(
        self.workdir, judge.Granularity.SHOT, testutil.fake_extractor(calls))
    self.assertEqual(
        [i.video_id for i in items],
        [f's{s.scene_index}_{s.shot_index}' for s in self.storyboard.shots])
    for item, shot in zip(items, self.storyboard.shots):
      clip = self.storyboard.clip(shot.key)
      self.assertLen(item.keyframes,
                     len(keyframes.sample_keyframes(clip.frame_count,
                                                    clip.duration_s)))
      self.assertTrue(all(os.path.isfile(f) for f in item.keyframes))
      self.assertIn(shot.content,
                    item.contexts[judge.Criterion.VIDEO_QUALITY])
    self.assertEqual(calls[0][0], str(self.workdir / 'clips' / 's1_1.mp4'))

  def test_film_granularity(self):
    manifest = video.build_concat(self.storyboard.clips)
    video.write_concat(manifest, self.workdir)
    (self.workdir / video.FILM_NAME).write_bytes(b'film')
    calls = []
    items = judge.items_from_workdir(
        self.workdir, judge.Granularity.FILM, testutil.fake_extractor(calls))
    self.assertLen(items, 1)
    self.assertEqual(items[0].video_id, 'film')
    self.assertEqual(
        calls[0][1],
        keyframes.sample_keyframes(manifest.total_frames,
                                   manifest.duration_s))

  def test_film_missing(self):
    video.write_concat(video.build_concat(self.storyboard.clips), self.workdir)
    with self.assertRaises(errors.EvaluationError):
      judge.items_from_workdir(self.workdir, judge.Granularity.FILM,
                               testutil.fake_extractor())


if __name__ == '__main__':
  absltest.main()
