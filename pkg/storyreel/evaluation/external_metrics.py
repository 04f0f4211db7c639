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
"""Imports automatic video metrics computed by external toolkits.

The CSV has one row per method and exactly these columns:

  method,clip_t,subject_consistency,background_consistency,
  motion_smoothness,dynamic_degree,aesthetic_score

Values are kept as decimals so tables print them exactly as supplied.
"""

import decimal
from typing import Dict, Mapping

import pandas as pd
from storyreel.common import errors
from storyreel.common import utils

METHOD_COLUMN = 'method'
METRIC_COLUMNS = (
    'clip_t',
    'subject_consistency',
    'background_consistency',
    'motion_smoothness',
    'dynamic_degree',
    'aesthetic_score',
)
METRIC_TITLES = {
    'clip_t': 'CLIP-T',
    'subject_consistency': 'Subj.',
    'background_consistency': 'Bg.',
    'motion_smoothness': 'Motion',
    'dynamic_degree': 'Dyn.',
    'aesthetic_score': 'Aesth.',
}

# method -> metric column -> value, in file order.
MetricTable = Mapping[str, Mapping[str, decimal.Decimal]]


def import_external_metrics(csv_path: utils.PathLike) -> MetricTable:
  """Reads a metric CSV.

  Raises:
    MetricImportError: the file is empty or unreadable, the header does not
      match the declared columns, a method repeats, or a value is not a
      number.
  """
  try:
    frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False)
  except pd.errors.EmptyDataError as e:
    raise errors.MetricImportError(f'{csv_path} is empty') from e
  except (OSError, pd.errors.ParserError, UnicodeDecodeError) as e:
    raise errors.MetricImportError(f'Cannot read {csv_path}: {e}') from e

  columns = [c.strip() for c in frame.columns]
  expected = [METHOD_COLUMN, *METRIC_COLUMNS]
  if columns != expected:
    missing = [c for c in expected if c not in columns]
    unexpected = [c for c in columns if c not in expected]
    raise errors.MetricImportError(
        f'{csv_path}: header mismatch; missing columns {missing}, unexpected'
        f' columns {unexpected}, expected {expected}')
  frame.columns = columns

  table: Dict[str, Dict[str, decimal.Decimal]] = {}
  for n, row in enumerate(frame.itertuples(index=False), start=2):
    method = getattr(row, METHOD_COLUMN).strip()
    if not method:
      raise errors.MetricImportError(f'{csv_path}:{n}: empty method name')
    if method in table:
      raise errors.MetricImportError(
          f'{csv_path}:{n}: method {method!r} repeats')
    values = {}
    for column in METRIC_COLUMNS:
      raw = getattr(row, column).strip()
      try:
        value = decimal.Decimal(raw)
      except decimal.InvalidOperation as e:
        raise errors.MetricImportError(
            f'{csv_path}:{n}: {column} value {raw!r} is not a number') from e
      if not value.is_finite():
        raise errors.MetricImportError(
            f'{csv_path}:{n}: {column} value {raw!r} is not finite')
      values[column] = value
    table[method] = values
  if not table:
    raise errors.MetricImportError(f'{csv_path} has a header but no rows')
  return table
