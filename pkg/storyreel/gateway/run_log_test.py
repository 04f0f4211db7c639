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
"""Tests for run_log."""

import concurrent.futures
import os
import random
import shutil
import tempfile
import time

from absl.testing import absltest
from storyreel.gateway import run_log


class RunLogTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.tmp = tempfile.mkdtemp()
    self.addCleanup(shutil.rmtree, self.tmp)

  def test_out_of_order_completion_is_written_in_issue_order(self):
    path = os.path.join(self.tmp, run_log.RUN_LOG_NAME)
    log = run_log.RunLog(path)
    first, second = log.reserve(), log.reserve()
    log.record(second, request='b')
    self.assertEmpty(log.entries())
    log.record(first, request='a')
    self.assertEqual([e['request'] for e in run_log.read_run_log(path)],
                     ['a', 'b'])

  def test_concurrent_producers(self):
    path = os.path.join(self.tmp, 'log.jsonl')
    log = run_log.RunLog(path)
    rng = random.Random(3)
    delays = [rng.random() / 200 for _ in range(40)]

    def issue(delay):
      seq = log.reserve()
      time.sleep(delay)
      log.record(seq, request=str(seq))

    with concurrent.futures.ThreadPoolExecutor(max_workers=8) as executor:
      list(executor.map(issue, delays))
    seqs = [e['seq'] for e in run_log.read_run_log(path)]
    self.assertEqual(seqs, list(range(40)))
    self.assertLen(log, 40)

  def test_in_memory(self):
    log = run_log.RunLog()
    log.record(log.reserve(), role='chat')
    self.assertEqual(log.entries()[0]['role'], 'chat')


if __name__ == '__main__':
  absltest.main()
