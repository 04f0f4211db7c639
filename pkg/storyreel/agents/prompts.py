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
"""Versioned prompt templates.

A template is a YAML file under `storyreel/templates/<agent>/`:

  name: director/script
  version: 1
  required_placeholders: [title, outline, characters]
  sections:
    - heading: Story outline
      body: |
        Title: {{ title }}
        {{ outline }}
  output_schema: |
    {"reasoning": "...", "genre": "..."}

Section bodies are jinja2 templates restricted to plain `{{ name }}`
substitution. Every placeholder a body uses must be declared required.
Templates with an `output_schema` end with a standard output section that
asks the model to reason step by step before emitting the JSON object.
"""

import dataclasses
import functools
import pathlib
from typing import Any, Mapping, Optional, Tuple

import jinja2
from jinja2 import meta as jinja2_meta
from storyreel.common import errors
import yaml

TEMPLATES_DIR = pathlib.Path(__file__).resolve().parent.parent / 'templates'

OUTPUT_HEADING = 'Output'
STEPWISE_INSTRUCTION = (
    'Think first, then produce: reason step by step in the "reasoning" field'
    ' before you fill in the other fields.'
)
FORMAT_INSTRUCTION = 'Reply with one JSON object in exactly this format:'

_ENV = jinja2.Environment(
    undefined=jinja2.StrictUndefined,
    autoescape=False,
    keep_trailing_newline=True,
)


@dataclasses.dataclass(frozen=True)
class Section:
  heading: str
  body: str


@dataclasses.dataclass(frozen=True)
class PromptTemplate:
  """A named, versioned prompt made of ordered sections.

  Attributes:
    name: e.g. `cinematography/next_shot`.
    version: bumped whenever the rendered text changes.
    sections: (heading, body) pairs; an empty heading renders the body alone.
    required_placeholders: names that must be bound when rendering.
    output_schema: description of the expected JSON reply; None for prompts
      sent to image or video models.
  """

  name: str
  version: int
  sections: Tuple[Section, ...]
  required_placeholders: frozenset = frozenset()
  output_schema: Optional[str] = None

  @property
  def id(self) -> str:
    return f'{self.name}@{self.version}'

  def render(self, **variables: Any) -> str:
    """Renders the prompt.

    Raises:
      PreconditionError: a required placeholder is unbound.
    """
    missing = sorted(self.required_placeholders - set(variables))
    if missing:
      raise errors.PreconditionError(
          f'{self.id}: unbound placeholders {missing}')
    blocks = []
    for section in self.sections:
      try:
        body = _ENV.from_string(section.body).render(**variables)
      except jinja2.UndefinedError as e:
        raise errors.PreconditionError(f'{self.id}: {e}') from e
      body = body.rstrip('\n')
      blocks.append(f'## {section.heading}\n{body}' if section.heading
                    else body)
    if self.output_schema is not None:
      blocks.append('\n'.join([
          f'## {OUTPUT_HEADING}',
          STEPWISE_INSTRUCTION,
          FORMAT_INSTRUCTION,
          self.output_schema.rstrip('\n'),
      ]))
    return '\n\n'.join(blocks) + '\n'


def template_from_dict(doc: Mapping[str, Any]) -> PromptTemplate:
  """Builds a template and checks its placeholders against its bodies."""
  try:
    template = PromptTemplate(
        name=doc['name'],
        version=int(doc['version']),
        sections=tuple(
            Section(heading=s.get('heading', ''), body=s['body'])
            for s in doc['sections']),
        required_placeholders=frozenset(doc.get('required_placeholders', ())),
        output_schema=doc.get('output_schema'),
    )
  except (KeyError, TypeError, ValueError) as e:
    raise errors.ConfigError(f'Malformed prompt template: {e!r}') from e
  used = set()
  for section in template.sections:
    try:
      used |= jinja2_meta.find_undeclared_variables(_ENV.parse(section.body))
    except jinja2.TemplateSyntaxError as e:
      raise errors.ConfigError(f'{template.id}: {e}') from e
  if used != template.required_placeholders:
    raise errors.ConfigError(
        f'{template.id}: placeholders used {sorted(used)} but declared'
        f' {sorted(template.required_placeholders)}')
  return template


@functools.lru_cache(maxsize=None)
def load_template(name: str,
                  templates_dir: Optional[str] = None) -> PromptTemplate:
  """Loads `<templates_dir>/<name>.yaml`, e.g. name `director/script`."""
  path = pathlib.Path(templates_dir or TEMPLATES_DIR) / f'{name}.yaml'
  try:
    with open(path, encoding='utf-8') as f:
      doc = yaml.safe_load(f)
  except (OSError, yaml.YAMLError) as e:
    raise errors.ConfigError(f'Cannot load prompt template {path}: {e}') from e
  template = template_from_dict(doc)
  if template.name != name:
    raise errors.ConfigError(
        f'{path} declares name {template.name!r}, expected {name!r}')
  return template
