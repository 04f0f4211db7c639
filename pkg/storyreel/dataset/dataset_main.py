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
"""Command line for building and checking the fine-tuning dataset.

  python -m storyreel.dataset.dataset_main build \
      --corpus corpus.yaml --config dataset.yaml --out out/
  python -m storyreel.dataset.dataset_main validate --out out/
"""

import argparse
import sys
from typing import Optional, Sequence

from absl import logging
from storyreel.common import errors
from storyreel.dataset import cine_dataset


def add_subcommands(subparsers) -> None:
  """Registers `build` and `validate` on an argparse subparser group."""
  build = subparsers.add_parser(
      'build', help='Caption and enrich a corpus into a training file.')
  build.add_argument(
      '--corpus', required=True,
      help='YAML corpus manifest listing clip ids, frames and annotations.')
  build.add_argument(
      '--config', required=True,
      help='YAML file with the captioner and rewriter endpoints.')
  build.add_argument(
      '--out', required=True, help='Directory for the dataset and manifest.')
  build.set_defaults(handler=build_command)

  check = subparsers.add_parser(
      'validate', help='Re-check a written dataset and its manifest.')
  check.add_argument('--out', required=True, help='Dataset directory.')
  check.add_argument(
      '--config', default=None,
      help='Optional dataset config; its stoplist replaces the default.')
  check.set_defaults(handler=validate_command)


def build_command(args: argparse.Namespace) -> int:
  config = cine_dataset.load_config(args.config)
  manifest = cine_dataset.build_dataset(args.corpus, config, args.out)
  print(f'pairs: {manifest.pair_count}  skipped: {manifest.skip_count}'
        f'  digest: {manifest.dataset_digest}')
  return errors.EXIT_OK


def validate_command(args: argparse.Namespace) -> int:
  stoplist = cine_dataset.Stoplist()
  if args.config:
    stoplist = cine_dataset.load_config(args.config).stoplist
  violations = cine_dataset.validate_dataset(args.out, stoplist)
  for v in violations:
    print(v)
  if violations:
    logging.error('%d dataset violations in %s', len(violations), args.out)
    return errors.EXIT_STAGE
  print('dataset ok')
  return errors.EXIT_OK


def dispatch(args: argparse.Namespace) -> int:
  """Runs the selected handler and maps errors to exit codes."""
  try:
    return args.handler(args)
  except errors.StoryreelError as e:
    logging.exception('%s failed: %s', args.command, e)
    return e.exit_code
  except Exception:  # pylint: disable=broad-exception-caught
    logging.exception('%s failed unexpectedly', args.command)
    return errors.EXIT_UNEXPECTED


def main(argv: Optional[Sequence[str]] = None) -> int:
  parser = argparse.ArgumentParser(
      prog='cine-dataset',
      description='Build the cinematic-language fine-tuning dataset.')
  subparsers = parser.add_subparsers(dest='command', required=True)
  add_subcommands(subparsers)
  return dispatch(parser.parse_args(argv))


if __name__ == '__main__':
  sys.exit(main())
