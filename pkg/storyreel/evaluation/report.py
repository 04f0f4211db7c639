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
"""Aggregates judge scores into comparison tables.

A method's cell for (criterion, evaluator) is the mean of that evaluator's
scores over the method's videos. The criterion's average is the mean of the
method's evaluator cells. Both are rounded half-up to two decimals. Missing
cells are left out of every mean and counted.
"""

import dataclasses
import decimal
import json
import os
from typing import (Any, Dict, Iterable, List, Mapping, Optional, Sequence,
                    Tuple, Union)

from absl import logging
from storyreel.common import utils
from storyreel.evaluation import external_metrics
from storyreel.evaluation import judge as judge_lib
import tabulate

REPORT_JSON_NAME = 'eval_report.json'
REPORT_TEXT_NAME = 'eval_report.md'

TWO_PLACES = decimal.Decimal('0.01')
ABSENT = 'n/a'

Number = Union[int, str, decimal.Decimal]


def mean_half_up(values: Iterable[Number]) -> Optional[decimal.Decimal]:
  """Returns the mean rounded half-up to 2 decimals; None for no values."""
  values = [decimal.Decimal(str(v)) for v in values]
  if not values:
    return None
  return (sum(values) / len(values)).quantize(
      TWO_PLACES, rounding=decimal.ROUND_HALF_UP)


@dataclasses.dataclass(frozen=True)
class CriterionRow:
  """Aggregated scores of one method for one criterion.

  Attributes:
    per_evaluator: evaluator id -> mean score, None when all its cells are
      missing.
    average: mean of the present evaluator means, None when none is present.
    score_count: scores that went into the means.
    missing_count: cells recorded as missing.
  """

  per_evaluator: Mapping[str, Optional[decimal.Decimal]]
  average: Optional[decimal.Decimal]
  score_count: int
  missing_count: int


def aggregate(
    scores: Sequence[judge_lib.JudgeScore],
    missing: Sequence[judge_lib.MissingCell] = (),
    evaluators: Optional[Sequence[str]] = None,
) -> Dict[judge_lib.Criterion, CriterionRow]:
  """Aggregates one method's scores per criterion.

  The result does not depend on the order of `scores`.

  Args:
    scores: the method's judge scores.
    missing: the method's missing cells.
    evaluators: column order; defaults to the sorted evaluator ids seen.
  """
  if evaluators is None:
    evaluators = sorted({s.evaluator_id for s in scores}
                        | {m.evaluator_id for m in missing})
  rows = {}
  for criterion in judge_lib.Criterion:
    group = [s for s in scores if s.criterion == criterion]
    per_evaluator = {
        e: mean_half_up(s.score for s in group if s.evaluator_id == e)
        for e in evaluators
    }
    rows[criterion] = CriterionRow(
        per_evaluator=per_evaluator,
        average=mean_half_up(
            v for v in per_evaluator.values() if v is not None),
        score_count=len(group),
        missing_count=sum(1 for m in missing if m.criterion == criterion),
    )
  return rows


@dataclasses.dataclass(frozen=True)
class MethodRow:
  method: str
  granularity: judge_lib.Granularity
  criteria: Mapping[judge_lib.Criterion, CriterionRow]
  missing: Tuple[judge_lib.MissingCell, ...] = ()


@dataclasses.dataclass(frozen=True)
class EvalReport:
  evaluators: Tuple[str, ...]
  rows: Tuple[MethodRow, ...]
  metrics: Optional[external_metrics.MetricTable] = None


def build_report(
    results: Sequence[judge_lib.MethodResult],
    evaluators: Sequence[str],
    metrics: Optional[external_metrics.MetricTable] = None,
) -> EvalReport:
  rows = []
  for result in results:
    rows.append(MethodRow(
        method=result.method,
        granularity=result.granularity,
        criteria=aggregate(result.scores, result.missing, evaluators),
        missing=result.missing,
    ))
    if result.missing:
      logging.warning('%s: %d judge cells missing', result.method,
                      len(result.missing))
  return EvalReport(evaluators=tuple(evaluators), rows=tuple(rows),
                    metrics=metrics)


def _text(value: Optional[decimal.Decimal]) -> Optional[str]:
  return None if value is None else str(value)


def report_to_dict(report: EvalReport) -> Dict[str, Any]:
  """Returns the machine-readable report; decimals are written as strings."""
  doc: Dict[str, Any] = {
      'evaluators': list(report.evaluators),
      'methods': [],
  }
  for row in report.rows:
    doc['methods'].append({
        'method': row.method,
        'granularity': str(row.granularity),
        'criteria': {
            str(c): {
                'per_evaluator': {
                    e: _text(v) for e, v in r.per_evaluator.items()
                },
                'average': _text(r.average),
                'score_count': r.score_count,
                'missing_count': r.missing_count,
            } for c, r in row.criteria.items()
        },
        'missing': [
            {'video_id': m.video_id, 'criterion': str(m.criterion),
             'evaluator_id': m.evaluator_id, 'reason': m.reason}
            for m in row.missing
        ],
    })
  if report.metrics is not None:
    doc['external_metrics'] = {
        method: {k: str(v) for k, v in values.items()}
        for method, values in report.metrics.items()
    }
  return doc


def rank_marks(values: Sequence[Optional[decimal.Decimal]]) -> List[str]:
  """Formats a column, bolding the best value and italicizing the second.

  Ties share a mark. Nothing is marked when fewer than two values exist.
  """
  present = sorted({v for v in values if v is not None}, reverse=True)
  out = []
  for v in values:
    if v is None:
      out.append(ABSENT)
    elif len([x for x in values if x is not None]) < 2:
      out.append(str(v))
    elif v == present[0]:
      out.append(f'**{v}**')
    elif len(present) > 1 and v == present[1]:
      out.append(f'_{v}_')
    else:
      out.append(str(v))
  return out


def marked_table(headers: Sequence[str], first_column: Sequence[str],
                  columns: Sequence[Sequence[Optional[decimal.Decimal]]],
                  tablefmt: str) -> str:
  marked = [rank_marks(c) for c in columns]
  rows = [[name, *(c[n] for c in marked)]
          for n, name in enumerate(first_column)]
  return tabulate.tabulate(rows, headers=headers, tablefmt=tablefmt,
                           disable_numparse=True)


def render_report(report: EvalReport, tablefmt: str = 'github') -> str:
  """Renders one table per criterion plus the external metrics, if any."""
  methods = [r.method for r in report.rows]
  blocks = []
  for criterion in judge_lib.Criterion:
    columns = [
        [r.criteria[criterion].per_evaluator.get(e) for r in report.rows]
        for e in report.evaluators
    ]
    columns.append([r.criteria[criterion].average for r in report.rows])
    table = marked_table(['Method', *report.evaluators, 'Avg.'], methods,
                          columns, tablefmt)
    missing = [r.criteria[criterion].missing_count for r in report.rows]
    note = ''
    if any(missing):
      note = '\nMissing cells: ' + ', '.join(
          f'{m} {n}' for m, n in zip(methods, missing) if n)
    blocks.append(f'## {criterion.title}\n\n{table}{note}')
  granularities = ', '.join(f'{r.method}: {r.granularity}'
                            for r in report.rows)
  blocks.append(f'Granularity: {granularities}')
  if report.metrics:
    blocks.append('## External metrics\n\n' + render_metrics(report.metrics,
                                                             tablefmt))
  return '\n\n'.join(blocks) + '\n'


def render_metrics(metrics: external_metrics.MetricTable,
                   tablefmt: str = 'github') -> str:
  methods = list(metrics)
  columns = [[metrics[m][c] for m in methods]
             for c in external_metrics.METRIC_COLUMNS]
  headers = ['Method', *(external_metrics.METRIC_TITLES[c]
                         for c in external_metrics.METRIC_COLUMNS)]
  return marked_table(headers, methods, columns, tablefmt)


def write_report(report: EvalReport,
                 out_dir: utils.PathLike) -> Tuple[str, str]:
  """Writes the JSON and text forms of `report`; returns their paths."""
  os.makedirs(out_dir, exist_ok=True)
  json_path = os.path.join(out_dir, REPORT_JSON_NAME)
  text_path = os.path.join(out_dir, REPORT_TEXT_NAME)
  utils.atomic_write(
      json_path, json.dumps(report_to_dict(report), indent=2) + '\n')
  utils.atomic_write(text_path, render_report(report))
  logging.info('Wrote evaluation report to %s', out_dir)
  return json_path, text_path
