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
"""Tests for config."""

import os
import shutil
import tempfile

from absl.testing import absltest
from storyreel.agents import director
from storyreel.agents import media
from storyreel.agents import video
from storyreel.common import errors
from storyreel.gateway import contract
from storyreel.pipeline import config as config_lib

Role = contract.Role

_CONFIG = """
outline: stories/frozen.yaml
workdir: runs/frozen
seed: 3
endpoints:
  chat: {model_name: planner, mock_script: mocks/chat.yaml}
  t2i: {model_name: painter, mock_script: mocks/t2i.yaml, max_retries: 1}
  i2v: {base_url: 'https://video.example.com/v1', model_name: animator}
recursion: {max_shots_per_scene: 6, recursive: false}
inject_cinematic: false
reference_mode: none
render:
  parallelism: 3
  halt_on_failure: false
  expected_format: {width: 1280, height: 720, fps: 24}
media:
  probe: {static: {width: 1280, height: 720, fps: 24, frame_count: 48}}
  muxer: null
gateway: {concurrency: 2}
template_pins: {cinematography/inject: 1}
evaluation:
  judges: [{name: judge-a, model_name: j, mock_script: mocks/judge.yaml}]
  criteria: [video_quality]
  granularity: shot
"""


class ConfigTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.dir = tempfile.mkdtemp()
    self.addCleanup(shutil.rmtree, self.dir)

  def _write(self, text, name='pipeline.yaml'):
    path = os.path.join(self.dir, name)
    with open(path, 'w') as f:
      f.write(text)
    return path

  def test_load(self):
    config = config_lib.load_config(self._write(_CONFIG))
    self.assertEqual(config.outline,
                     os.path.join(self.dir, 'stories/frozen.yaml'))
    self.assertEqual(config.workdir, os.path.join(self.dir, 'runs/frozen'))
    self.assertEqual(config.seed, 3)
    self.assertEqual(config.chat.mock_script,
                     os.path.join(self.dir, 'mocks/chat.yaml'))
    self.assertEqual(config.chat.name, 'chat')
    self.assertEqual(config.t2i.role, Role.T2I)
    self.assertEqual(config.t2i.max_retries, 1)
    self.assertEqual(config.i2v.base_url, 'https://video.example.com/v1')
    self.assertIsNone(config.rewrite)
    self.assertEqual(config.rewriter, config.chat)
    self.assertEqual(config.recursion.max_shots_per_scene, 6)
    self.assertFalse(config.recursion.recursive)
    self.assertFalse(config.inject_cinematic)
    self.assertEqual(config.reference_mode, director.ReferenceMode.NONE)
    self.assertEqual(config.render_parallelism, 3)
    self.assertFalse(config.halt_on_render_failure)
    self.assertEqual(config.expected_format,
                     video.ClipFormat(width=1280, height=720, fps=24.0))
    self.assertIsNone(config.muxer)
    self.assertEqual(config.extractor, media.FFMPEG_FRAMES_TEMPLATE)
    self.assertEqual(config.concurrency, 2)
    self.assertEqual(config.template_pins, {'cinematography/inject': 1})
    self.assertEqual(config.evaluation.judges[0].label, 'judge-a')
    self.assertEqual(config.evaluation.judges[0].role, Role.JUDGE)
    self.assertIsNone(config.dataset)

  def test_defaults(self):
    config = config_lib.load_config(self._write('outline: story.yaml\n'))
    self.assertTrue(config.inject_cinematic)
    self.assertTrue(config.recursion.recursive)
    self.assertTrue(config.halt_on_render_failure)
    self.assertEqual(config.muxer, media.FFMPEG_CONCAT_TEMPLATE)
    self.assertEqual(config.expected_format, video.ClipFormat())
    self.assertEqual(config.reference_mode, director.ReferenceMode.GENERATE)
    self.assertIsNone(config.workdir)

  def test_round_trip(self):
    config = config_lib.load_config(self._write(_CONFIG))
    path = os.path.join(self.dir, 'snapshot', 'pipeline.yaml')
    os.makedirs(os.path.dirname(path))
    config_lib.dump_config(config, path)
    self.assertEqual(config_lib.load_config(path), config)

  def test_rejects(self):
    for text in ('outlines: story.yaml\n',
                 'endpoints: {planner: {model_name: x}}\n',
                 'endpoints: {chat: {model: x}}\n',
                 'endpoints: {t2i: {role: chat, model_name: x}}\n',
                 'render: {parallelism: 0}\n',
                 'render: {parallelism: many}\n',
                 'reference_mode: sketch\n',
                 'recursion: {depth: 3}\n',
                 'media: {probe: {static: {width: 1}}}\n',
                 'evaluation: {criteria: [beauty]}\n',
                 '- a list\n'):
      with self.subTest(text=text):
        with self.assertRaises(errors.ConfigError):
          config_lib.load_config(self._write(text))

  def test_unreadable(self):
    with self.assertRaises(errors.ConfigError):
      config_lib.load_config(os.path.join(self.dir, 'missing.yaml'))
    with self.assertRaises(errors.ConfigError):
      config_lib.load_config(self._write('endpoints: [\n'))


class RequireEndpointsTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.chat = contract.EndpointContract(role=Role.CHAT, model_name='c')
    self.t2i = contract.EndpointContract(role=Role.T2I, model_name='t')

  def test_render_needs_i2v(self):
    config = config_lib.PipelineConfig(chat=self.chat, t2i=self.t2i)
    config_lib.require_endpoints(config, config_lib.Command.RUN,
                                 ('script', 'scenes', 'references', 'shots',
                                  'injection'))
    with self.assertRaisesRegex(errors.ConfigError, 'endpoints.i2v'):
      config_lib.require_endpoints(config, config_lib.Command.RUN,
                                   ('render', 'concat'))

  def test_t2i_only_when_generating(self):
    config = config_lib.PipelineConfig(chat=self.chat)
    with self.assertRaisesRegex(errors.ConfigError, 'endpoints.t2i'):
      config_lib.require_endpoints(config, config_lib.Command.RUN,
                                   ('references',))
    config_lib.require_endpoints(
        config.with_overrides(
            reference_mode=director.ReferenceMode.USER_SUPPLIED),
        config_lib.Command.RUN, ('references',))

  def test_rewrite_only_when_injecting(self):
    config = config_lib.PipelineConfig()
    with self.assertRaisesRegex(errors.ConfigError, 'endpoints.rewrite'):
      config_lib.require_endpoints(config, config_lib.Command.RUN,
                                   ('injection',))
    config_lib.require_endpoints(
        config.with_overrides(inject_cinematic=False),
        config_lib.Command.RUN, ('injection',))

  def test_eval_needs_judges(self):
    with self.assertRaisesRegex(errors.ConfigError, 'evaluation.judges'):
      config_lib.require_endpoints(config_lib.PipelineConfig(chat=self.chat),
                                   config_lib.Command.EVAL)

  def test_role_mismatch(self):
    with self.assertRaises(errors.ConfigError):
      config_lib.PipelineConfig(i2v=self.t2i)


class TemplatePinTest(absltest.TestCase):

  def test_pins(self):
    config_lib.check_template_pins(config_lib.PipelineConfig(
        template_pins={'cinematography/inject': 1}))
    with self.assertRaisesRegex(errors.ConfigError, 'pins version 2'):
      config_lib.check_template_pins(config_lib.PipelineConfig(
          template_pins={'cinematography/inject': 2}))


if __name__ == '__main__':
  absltest.main()
