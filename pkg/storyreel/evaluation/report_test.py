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
"""Tests for report."""

import decimal
import json
import random
import shutil
import tempfile

from absl.testing import absltest
from absl.testing import parameterized
from storyreel.evaluation import judge
from storyreel.evaluation import report

D = decimal.Decimal
SC = judge.Criterion.SCRIPT_CONSISTENCY
CMC = judge.Criterion.CAMERA_MOVEMENT_CONSISTENCY


def _scores(evaluator, criterion, values):
  return [
      judge.JudgeScore(evaluator_id=evaluator, criterion=criterion, score=v,
                       explanation='', video_id=f'v{n}')
      for n, v in enumerate(values)
  ]


class MeanTest(parameterized.TestCase):

  @parameterized.parameters(
      (['4.50', '4.00', '3.20'], '3.90'),
      (['3.33', '3.00', '2.17'], '2.83'),
      ([5, 5, 5], '5.00'),
      (['1.005'], '1.01'),
      ([2, 3], '2.50'),
      ([1, 1, 2], '1.33'),
      ([2, 2, 1], '1.67'),
  )
  def test_mean_half_up(self, values, expected):
    self.assertEqual(report.mean_half_up(values), D(expected))

  def test_empty_is_absent(self):
    self.assertIsNone(report.mean_half_up([]))


class AggregateTest(absltest.TestCase):

  def test_table_row(self):
    # Per-evaluator cells 4.50, 4.00 and 3.20 average to 3.90.
    scores = (_scores('gpt', SC, [5, 4]) + _scores('qwen', SC, [4, 4])
              + _scores('gemini', SC, [3, 3, 3, 4, 3]))
    rows = report.aggregate(scores, evaluators=['gpt', 'qwen', 'gemini'])
    row = rows[SC]
    self.assertEqual(dict(row.per_evaluator),
                     {'gpt': D('4.50'), 'qwen': D('4.00'), 'gemini': D('3.20')})
    self.assertEqual(row.average, D('3.90'))
    self.assertEqual(row.score_count, 9)
    self.assertIsNone(rows[CMC].average)
    self.assertEqual(rows[CMC].score_count, 0)

  def test_missing_cells_excluded_and_counted(self):
    scores = _scores('gpt', SC, [4, 2])
    missing = [judge.MissingCell(video_id='v0', criterion=SC,
                                 evaluator_id='qwen', reason='unparseable')]
    row = report.aggregate(scores, missing)[SC]
    self.assertEqual(dict(row.per_evaluator), {'gpt': D('3.00'), 'qwen': None})
    self.assertEqual(row.average, D('3.00'))
    self.assertEqual(row.missing_count, 1)

  def test_permutation_invariant(self):
    rng = random.Random(3)
    scores = []
    for evaluator in ('a', 'b', 'c'):
      for criterion in judge.Criterion:
        scores += _scores(evaluator, criterion,
                          [rng.randint(1, 5) for _ in range(rng.randint(1, 7))])
    expected = report.aggregate(scores)
    for _ in range(20):
      rng.shuffle(scores)
      self.assertEqual(report.aggregate(scores), expected)


class ReportTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    ours = judge.MethodResult(
        method='Ours', granularity=judge.Granularity.FILM,
        scores=tuple(_scores('gpt', SC, [5]) + _scores('qwen', SC, [4])),
        missing=(judge.MissingCell('film', CMC, 'qwen', 'bad reply'),))
    base = judge.MethodResult(
        method='Base', granularity=judge.Granularity.SHOT,
        scores=tuple(_scores('gpt', SC, [3]) + _scores('qwen', SC, [2])),
        missing=())
    third = judge.MethodResult(
        method='Third', granularity=judge.Granularity.SHOT,
        scores=tuple(_scores('gpt', SC, [1]) + _scores('qwen', SC, [1])),
        missing=())
    with self.assertLogs('absl', level='WARNING'):
      self.report = report.build_report([ours, base, third], ['gpt', 'qwen'])

  def test_rank_marks(self):
    self.assertEqual(
        report.rank_marks([D('3.90'), D('2.83'), None, D('3.90'), D('1.00')]),
        ['**3.90**', '_2.83_', 'n/a', '**3.90**', '1.00'])
    self.assertEqual(report.rank_marks([D('2.00')]), ['2.00'])

  def test_render(self):
    text = report.render_report(self.report)
    self.assertIn('## Script Consistency', text)
    self.assertIn('**4.50**', text)
    self.assertIn('_2.50_', text)
    self.assertIn('Missing cells: Ours 1', text)
    self.assertIn('Granularity: Ours: film, Base: shot, Third: shot', text)
    self.assertNotIn('External metrics', text)

  def test_to_dict(self):
    doc = report.report_to_dict(self.report)
    ours = doc['methods'][0]
    self.assertEqual(ours['granularity'], 'film')
    self.assertEqual(ours['criteria']['script_consistency']['average'], '4.50')
    self.assertEqual(
        ours['criteria']['script_consistency']['per_evaluator'],
        {'gpt': '5.00', 'qwen': '4.00'})
    self.assertIsNone(ours['criteria']['video_quality']['average'])
    self.assertEqual(ours['missing'][0]['evaluator_id'], 'qwen')
    json.dumps(doc)

  def test_write(self):
    out = tempfile.mkdtemp()
    self.addCleanup(shutil.rmtree, out)
    json_path, text_path = report.write_report(self.report, out)
    with open(json_path) as f:
      self.assertEqual(json.load(f), report.report_to_dict(self.report))
    with open(text_path) as f:
      self.assertEqual(f.read(), report.render_report(self.report))

  def test_external_metrics_table(self):
    metrics = {
        'Ours': {c: D('80.00') for c in (
            'clip_t', 'subject_consistency', 'background_consistency',
            'motion_smoothness', 'dynamic_degree', 'aesthetic_score')},
        'Baseline': {c: D('16.67') for c in (
            'clip_t', 'subject_consistency', 'background_consistency',
            'motion_smoothness', 'dynamic_degree', 'aesthetic_score')},
    }
    text = report.render_metrics(metrics)
    self.assertIn('CLIP-T', text)
    self.assertIn('**80.00**', text)
    self.assertIn('_16.67_', text)


if __name__ == '__main__':
  absltest.main()
