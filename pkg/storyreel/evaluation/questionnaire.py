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
"""Blinded user-study questionnaires and their scoring.

Every case shows the input script and one video per method. Methods are
relabeled A, B, C, ... under a seeded permutation drawn per case, and the
unblinding key is written to a separate file.
"""

import dataclasses
import decimal
import json
import os
import shutil
import string
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from absl import logging
import numpy as np
import pandas as pd
from storyreel.common import errors
from storyreel.common import utils
from storyreel.evaluation import judge as judge_lib
from storyreel.evaluation import report
import yaml

DOCUMENT_NAME = 'questionnaire.txt'
KEY_NAME = 'questionnaire_key.json'
VIDEOS_DIR = 'videos'

QUESTIONS = {
    judge_lib.Criterion.SCRIPT_CONSISTENCY: (
        'How well does the video follow the given script regarding main'
        ' events, characters, and narrative logic?'),
    judge_lib.Criterion.CAMERA_MOVEMENT_CONSISTENCY: (
        'How well the camera operations (zoom, pan, tilt, tracking, angle'
        ' changes, etc.) align with the intended cinematic description and'
        ' narrative context.'),
    judge_lib.Criterion.VIDEO_QUALITY: (
        'How would you judge the visual quality, clarity, stability, and'
        ' presence of artifacts?'),
    judge_lib.Criterion.REAL_MOVIE_SIMILARITY: (
        'To what extent does the video resemble a real film in'
        ' cinematography, editing rhythm, color tone, and overall style?'),
}
SCALE = 'Rate each video from 1 (very poor) to 5 (excellent).'
LABELS = string.ascii_uppercase

RESPONSE_COLUMNS = ('participant', 'case_id', 'label', 'criterion', 'score')


@dataclasses.dataclass(frozen=True)
class StudyCase:
  """One test case: a script and each method's video for it."""

  case_id: str
  script: str
  videos: Mapping[str, str]


@dataclasses.dataclass(frozen=True)
class Questionnaire:
  """A printable questionnaire and the key that unblinds it.

  Attributes:
    document: the text handed to participants.
    key: case id -> label -> method.
    videos: case id -> label -> source video path.
    seed: the permutation seed.
  """

  document: str
  key: Mapping[str, Mapping[str, str]]
  videos: Mapping[str, Mapping[str, str]]
  seed: int


def read_cases(path: utils.PathLike) -> Tuple[List[str], List[StudyCase]]:
  """Reads a study file listing the methods and one entry per case.

    methods: [full, no_rsg]
    cases:
      - case_id: c1
        script: Two sisters cross a frozen forest.
        videos: {full: runs/full/film.mp4, no_rsg: runs/no_rsg/film.mp4}

  Video paths resolve against the file's directory.

  Raises:
    ConfigError: unreadable or malformed file.
  """
  base_dir = os.path.dirname(os.path.abspath(path))
  try:
    with open(path, encoding='utf-8') as f:
      doc = yaml.safe_load(f) or {}
    methods = [str(m) for m in doc['methods']]
    cases = [
        StudyCase(
            case_id=str(c['case_id']), script=str(c['script']),
            videos={str(m): os.path.join(base_dir, v)
                    for m, v in c['videos'].items()})
        for c in doc['cases']
    ]
  except (OSError, yaml.YAMLError, KeyError, TypeError, AttributeError) as e:
    raise errors.ConfigError(f'Cannot read study cases {path}: {e!r}') from e
  return methods, cases


def anonymized_name(case_id: str, label: str, source: str) -> str:
  return f'{case_id}_{label}{os.path.splitext(source)[1] or ".mp4"}'


def gen_questionnaire(methods: Sequence[str], cases: Sequence[StudyCase],
                      seed: int) -> Questionnaire:
  """Builds the questionnaire; identical inputs give identical output.

  Raises:
    PreconditionError: fewer than two methods, repeated methods, more methods
      than labels, or a case lacking a method's video.
  """
  methods = list(methods)
  if len(methods) < 2:
    raise errors.PreconditionError(
        'A questionnaire compares at least two methods')
  if len(set(methods)) != len(methods):
    raise errors.PreconditionError(f'Methods repeat: {methods}')
  if len(methods) > len(LABELS):
    raise errors.PreconditionError(
        f'At most {len(LABELS)} methods can be labeled')
  rng = np.random.default_rng(seed)
  key: Dict[str, Dict[str, str]] = {}
  videos: Dict[str, Dict[str, str]] = {}
  lines = [
      'User study',
      '',
      'Method names are hidden and the order of the videos changes from case'
      ' to case.',
      SCALE,
  ]
  for case in cases:
    absent = [m for m in methods if m not in case.videos]
    if absent:
      raise errors.PreconditionError(
          f'Case {case.case_id} has no video for {absent}')
    order = [methods[i] for i in rng.permutation(len(methods))]
    key[case.case_id] = {LABELS[n]: m for n, m in enumerate(order)}
    videos[case.case_id] = {
        LABELS[n]: case.videos[m] for n, m in enumerate(order)
    }
    lines += ['', f'Case {case.case_id}', '', 'Script:', case.script.strip(),
              '']
    lines += [
        f'Video {label}: {anonymized_name(case.case_id, label, path)}'
        for label, path in videos[case.case_id].items()
    ]
    for n, (criterion, question) in enumerate(QUESTIONS.items(), start=1):
      lines += ['', f'{n}. {criterion.title}: {question}']
      lines += [f'   Video {label}: 1  2  3  4  5'
                for label in key[case.case_id]]
  return Questionnaire(document='\n'.join(lines) + '\n', key=key,
                       videos=videos, seed=seed)


def write_questionnaire(questionnaire: Questionnaire,
                        out_dir: utils.PathLike,
                        copy_videos: bool = True) -> str:
  """Writes the document, the key and (optionally) the renamed videos.

  Returns:
    The document path.
  """
  os.makedirs(out_dir, exist_ok=True)
  if copy_videos:
    videos_dir = os.path.join(out_dir, VIDEOS_DIR)
    os.makedirs(videos_dir, exist_ok=True)
    for case_id, by_label in questionnaire.videos.items():
      for label, source in by_label.items():
        shutil.copyfile(source, os.path.join(
            videos_dir, anonymized_name(case_id, label, source)))
  document = os.path.join(out_dir, DOCUMENT_NAME)
  utils.atomic_write(document, questionnaire.document)
  utils.atomic_write(
      os.path.join(out_dir, KEY_NAME),
      json.dumps({'seed': questionnaire.seed, 'key': questionnaire.key},
                 indent=2, sort_keys=True) + '\n')
  logging.info('Wrote questionnaire for %d cases to %s',
               len(questionnaire.key), out_dir)
  return document


def read_key(out_dir: utils.PathLike) -> Dict[str, Dict[str, str]]:
  path = os.path.join(out_dir, KEY_NAME)
  try:
    with open(path, encoding='utf-8') as f:
      return json.load(f)['key']
  except (OSError, ValueError, KeyError) as e:
    raise errors.PersistenceError(
        f'Cannot read questionnaire key: {e}', path) from e


@dataclasses.dataclass(frozen=True)
class Response:
  participant: str
  case_id: str
  label: str
  criterion: judge_lib.Criterion
  score: int


def read_responses(csv_path: utils.PathLike) -> List[Response]:
  """Reads collected ratings, one row per (participant, case, video, question).

  Raises:
    MetricImportError: unreadable file or wrong header.
  """
  try:
    frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False)
  except (OSError, ValueError) as e:
    raise errors.MetricImportError(f'Cannot read {csv_path}: {e}') from e
  if tuple(c.strip() for c in frame.columns) != RESPONSE_COLUMNS:
    raise errors.MetricImportError(
        f'{csv_path}: expected columns {list(RESPONSE_COLUMNS)}, got'
        f' {list(frame.columns)}')
  frame.columns = list(RESPONSE_COLUMNS)
  responses = []
  for n, row in enumerate(frame.itertuples(index=False), start=2):
    try:
      responses.append(Response(
          participant=row.participant.strip(),
          case_id=row.case_id.strip(),
          label=row.label.strip(),
          criterion=judge_lib.Criterion(row.criterion.strip()),
          score=int(row.score),
      ))
    except ValueError as e:
      raise errors.MetricImportError(f'{csv_path}:{n}: {e}') from e
  return responses


def score_questionnaire(
    key: Mapping[str, Mapping[str, str]], responses: Sequence[Response]
) -> Dict[str, Dict[judge_lib.Criterion, decimal.Decimal]]:
  """Unblinds responses and averages them per method and criterion.

  Raises:
    PreconditionError: a response names an unknown case or label, or a score
      outside 1 to 5.
  """
  collected: Dict[str, Dict[judge_lib.Criterion, List[int]]] = {}
  for r in responses:
    method = key.get(r.case_id, {}).get(r.label)
    if method is None:
      raise errors.PreconditionError(
          f'Unknown video {r.label} of case {r.case_id}')
    if not judge_lib.MIN_SCORE <= r.score <= judge_lib.MAX_SCORE:
      raise errors.PreconditionError(
          f'{r.participant}: score {r.score} outside 1 to 5')
    collected.setdefault(method, {}).setdefault(r.criterion, []).append(
        r.score)
  return {
      method: {
          c: report.mean_half_up(by_criterion[c])
          for c in judge_lib.Criterion if c in by_criterion
      }
      for method, by_criterion in sorted(collected.items())
  }


def render_scores(
    scores: Mapping[str, Mapping[judge_lib.Criterion,
                                 Optional[decimal.Decimal]]],
    tablefmt: str = 'github') -> str:
  methods = list(scores)
  columns = [[scores[m].get(c) for m in methods] for c in judge_lib.Criterion]
  return report.marked_table(
      ['Method', *(c.title for c in judge_lib.Criterion)], methods, columns,
      tablefmt)
