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
"""Shared test fixtures."""

import base64
import json
import os
import pathlib
import random
from typing import Dict, List, Optional, Sequence

from storyreel.gateway import contract as contract_lib
from storyreel.gateway import mock_script
from storyreel.storyboard import storyboard as sb
import yaml

# A 1x1 transparent PNG.
PNG_1X1 = bytes.fromhex(
    '89504e470d0a1a0a0000000d4948445200000001000000010806000000'
    '1f15c4890000000d49444154789c6300010000000500010d0a2db40000'
    '000049454e44ae426082'
)

_NAMES = ('Anna', 'Elsa', 'Kristoff', 'Olaf', 'Judy', 'Nick', 'Zoé')
_WORDS = ('forest', 'river', 'castle', 'snow', 'lantern', 'truck', 'radio',
          'night', 'bridge', 'crowd', 'whisper', 'storm')


def _sentence(rng: random.Random, n: int = 6) -> str:
  return ' '.join(rng.choice(_WORDS) for _ in range(n)).capitalize() + '.'


def make_script(names=('Anna', 'Elsa'), digest: str = 'sha256:00') -> sb.Script:
  return sb.Script(
      genre='fantasy',
      logline='Two sisters face an endless winter.',
      characters=tuple(
          sb.CharacterProfile(name=n, role='lead', appearance='tall',
                              personality='brave') for n in names
      ),
      storyline='The sisters cross the forest to end the winter.',
      source_outline_digest=digest,
  )


def typed_shots(scene_index: int, contents, characters=()) -> tuple:
  """Returns shots with positional types for one scene."""
  n = len(contents)
  shots = []
  for i, content in enumerate(contents, start=1):
    if i == n:
      shot_type = sb.ShotType.SCENE_END
    elif i == 1:
      shot_type = sb.ShotType.SCENE_START
    else:
      shot_type = sb.ShotType.SCENE_MID
    shots.append(sb.ShotDescription(
        scene_index=scene_index, shot_index=i, shot_type=shot_type,
        content=content, characters=tuple(characters),
    ))
  return tuple(shots)


def random_storyboard(rng: random.Random,
                      asset_dir: Optional[pathlib.Path] = None
                      ) -> sb.Storyboard:
  """Returns a random storyboard satisfying every invariant.

  Args:
    rng: source of randomness.
    asset_dir: when given, reference and clip files are written below it and
      the storyboard carries them.
  """
  names = rng.sample(_NAMES, rng.randint(1, 4))
  script = make_script(names, digest=f'sha256:{rng.getrandbits(64):016x}')
  scenes = []
  shots = []
  for j in range(1, rng.randint(1, 4) + 1):
    scene_chars = tuple(rng.sample(names, rng.randint(0, len(names))))
    scenes.append(sb.Scene(
        index=j,
        location=rng.choice(_WORDS),
        time_of_day=rng.choice(('dawn', 'noon', 'dusk', 'night')),
        plot=_sentence(rng),
        characters=scene_chars,
        objective=_sentence(rng, 3),
        extras={'mood': rng.choice(('tense', 'calm'))} if rng.random() < 0.5
        else {},
    ))
    contents = [_sentence(rng) for _ in range(rng.randint(1, 5))]
    scene_shots = typed_shots(j, contents, scene_chars)
    if rng.random() < 0.5:
      scene_shots = tuple(
          sb.ShotDescription(
              scene_index=s.scene_index, shot_index=s.shot_index,
              shot_type=s.shot_type,
              content=s.content + ' Slow push-in.',
              characters=s.characters,
              cinematic=sb.CinematicAttributes(camera_motion='slow push-in'),
              raw_content=s.content,
          ) for s in scene_shots
      )
    shots.extend(scene_shots)

  references = []
  clips = []
  if asset_dir is not None:
    (asset_dir / 'refs').mkdir(parents=True, exist_ok=True)
    (asset_dir / 'clips').mkdir(parents=True, exist_ok=True)
    for n in names:
      rel = f'refs/character_{n.lower()}.png'
      (asset_dir / rel).write_bytes(PNG_1X1)
      references.append(sb.ReferenceAsset(
          kind=sb.ReferenceKind.CHARACTER, key=n, image_path=rel,
          prompt_used=f'portrait of {n}',
      ))
    for s in scenes:
      rel = f'refs/scene_{s.index}.png'
      (asset_dir / rel).write_bytes(PNG_1X1)
      references.append(sb.ReferenceAsset(
          kind=sb.ReferenceKind.SCENE, key=str(s.index), image_path=rel,
          prompt_used=s.location,
      ))
    for shot in shots:
      rel = f'clips/s{shot.scene_index}_{shot.shot_index}.mp4'
      (asset_dir / rel).write_bytes(b'clip')
      clips.append(sb.ClipRecord(
          scene_index=shot.scene_index, shot_index=shot.shot_index,
          video_path=rel, width=832, height=480, fps=15.0,
          frame_count=rng.randint(1, 150), status=sb.ClipStatus.RENDERED,
      ))

  done = rng.randint(0, len(sb.STAGES))
  stage_status = {
      stage: sb.StageState.DONE if i < done else sb.StageState.PENDING
      for i, stage in enumerate(sb.STAGES)
  }
  checkpoints = tuple(
      sb.StageCheckpoint(stage=stage, status=sb.StageState.DONE,
                         timestamp=1.7e9 + i, input_digest='sha256:ab')
      for i, stage in enumerate(sb.STAGES[:done])
  )
  return sb.Storyboard(
      script=script,
      scenes=tuple(scenes),
      shots=tuple(shots),
      references=tuple(references),
      clips=tuple(clips),
      stage_status=stage_status,
      checkpoints=checkpoints,
  )


def mock_contract(gateway, role, entries, name: Optional[str] = None,
                  max_retries: int = 0):
  """Registers a scripted backend on `gateway` and returns its contract.

  Returns:
    A (contract, backend) pair; `backend.requests` captures every request.
  """
  name = name or str(role)
  path = f'/mock/{name}.yaml'
  backend = gateway.register_mock(path, mock_script.MockScript(tuple(entries)))
  contract = contract_lib.EndpointContract(
      role=contract_lib.Role(role), model_name=f'{name}-model',
      mock_script=path, max_retries=max_retries, backoff_base=0.0, name=name,
  )
  return contract, backend


def static_probe(width=832, height=480, fps=15.0, frame_count=75):
  """Returns a probe reporting the same metadata for every clip."""
  meta = {'width': width, 'height': height, 'fps': fps,
          'frame_count': frame_count}
  return lambda path: dict(meta)


def fake_extractor(calls: Optional[list] = None):
  """Returns a frame extractor writing 1x1 PNGs named like ffmpeg does."""

  def extract(video, indices, output_dir):
    if calls is not None:
      calls.append((str(video), list(indices)))
    os.makedirs(output_dir, exist_ok=True)
    frames = []
    for n in range(1, len(indices) + 1):
      frame = os.path.join(output_dir, f'frame_{n:04d}.png')
      with open(frame, 'wb') as f:
        f.write(PNG_1X1)
      frames.append(frame)
    return frames

  return extract


class FakeMuxer:
  """Writes the concat list it is given to the output path."""

  def __init__(self):
    self.calls = []

  def mux(self, manifest, output) -> str:
    self.calls.append((str(manifest), str(output)))
    with open(manifest, 'rb') as src, open(output, 'wb') as dst:
      dst.write(src.read())
    return str(output)


FILM_TERMINALS = (2, 3, 2)
FILM_CHARACTERS = ('Anna', 'Elsa')


def write_outline(directory: str, name: str = 'story.yaml') -> str:
  path = os.path.join(directory, name)
  with open(path, 'w', encoding='utf-8') as f:
    yaml.safe_dump({
        'title': 'Frozen Path',
        'outline': 'Two sisters cross a frozen forest to end the winter.',
        'characters': [{'name': 'Anna', 'description': 'the younger sister'},
                       'Elsa'],
    }, f)
  return path


def shot_content(scene_index: int, shot_index: int) -> str:
  return f'Shot {scene_index}.{shot_index}: Anna and Elsa walk on.'


def film_entries(
    terminals: Sequence[int] = FILM_TERMINALS
) -> Dict[str, List[mock_script.MockEntry]]:
  """Scripted replies for a whole run, keyed by endpoint name.

  Scene j ends at shot terminals[j - 1]. Every reply is matched by substring,
  so the entries hold under any request order.
  """
  script = {
      'reasoning': 'A winter tale.',
      'genre': 'fantasy',
      'logline': 'Two sisters face an endless winter.',
      'storyline': 'The sisters cross the forest to end the winter.',
      'characters': [
          {'name': n, 'role': 'lead', 'appearance': 'tall',
           'personality': 'brave'} for n in FILM_CHARACTERS
      ],
  }
  scenes = {
      'reasoning': 'One scene per act.',
      'scenes': [
          {'index': j, 'location': f'place {j}', 'time_of_day': 'dusk',
           'plot': f'plot {j}', 'objective': f'goal {j}',
           'characters': list(FILM_CHARACTERS)}
          for j in range(1, len(terminals) + 1)
      ],
  }
  chat = [
      mock_script.text_entry('Expand the story outline', json.dumps(script)),
      mock_script.text_entry('Decompose the script', json.dumps(scenes)),
  ]
  rewrite = []
  t2i = [
      mock_script.binary_entry(f'reference of {n},', PNG_1X1)
      for n in FILM_CHARACTERS
  ]
  i2v = []
  for j, terminal in enumerate(terminals, start=1):
    t2i.append(mock_script.binary_entry(f'view of place {j} at', PNG_1X1))
    for i in range(1, terminal + 1):
      content = shot_content(j, i)
      chat.append(mock_script.text_entry(
          f'Shot key: ({j}, {i})',
          json.dumps({'reasoning': 'continue', 'content': content,
                      'characters': list(FILM_CHARACTERS),
                      'terminal': i == terminal})))
      rewrite.append(mock_script.text_entry(
          f'Shot key: ({j}, {i})',
          json.dumps({'reasoning': 'wide', 'content': 'Wide shot, slow pan. '
                      + content, 'characters': list(FILM_CHARACTERS),
                      'cinematic': {'shot_size': 'wide shot',
                                    'camera_motion': 'slow pan'}})))
      i2v.append(mock_script.binary_entry(
          f'Shot {j}.{i}:', f'clip {j} {i}'.encode()))
  return {'chat': chat, 'rewrite': rewrite, 't2i': t2i, 'i2v': i2v}


def write_mock_scripts(
    directory: str, entries: Dict[str, Sequence[mock_script.MockEntry]]
) -> Dict[str, str]:
  """Writes one YAML mock script per endpoint name; returns their paths."""
  paths = {}
  for name, items in entries.items():
    doc = []
    for e in items:
      item = {}
      if e.match is not None:
        item['match'] = e.match
      if e.position is not None:
        item['position'] = e.position
      if e.text is not None:
        item['response'] = e.text
      elif e.data is not None:
        item['response_b64'] = base64.b64encode(e.data).decode('ascii')
      else:
        item['error'] = e.error
      doc.append(item)
    path = os.path.join(directory, f'{name}.yaml')
    with open(path, 'w', encoding='utf-8') as f:
      yaml.safe_dump({'entries': doc}, f, allow_unicode=True)
    paths[name] = path
  return paths
