# Copyright 2026 The paradop Authors.
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

"""Utility functions for paradop package."""

import hashlib
import json
import os
from typing import Any, Iterable, List


class ParadopError(Exception):
  """Base class for all errors raised by paradop."""


def canonical_json(value: Any) -> str:
  """Serializes a value to JSON with sorted keys and no extra whitespace.

  Floats are written with Python's shortest round-tripping repr, so loading
  the output reproduces every value bit for bit.

  Args:
    value: JSON-compatible value.

  Returns:
    Canonical JSON string.
  """
  return json.dumps(value, sort_keys=True, separators=(',', ':'),
                    allow_nan=False)


def fingerprint(value: Any) -> str:
  return hashlib.sha256(canonical_json(value).encode('utf-8')).hexdigest()


def stable_hash(*parts: Any) -> int:
  """Returns a 64-bit hash of the parts that is stable across processes."""
  text = '\x1f'.join(str(p) for p in parts)
  digest = hashlib.sha256(text.encode('utf-8')).digest()
  return int.from_bytes(digest[:8], 'big')


def ensure_dir(path: str) -> None:
  if path and not os.path.exists(path):
    os.makedirs(path)


def write_json(value: Any, path: str, indent: int = 2) -> None:
  """Writes JSON with sorted keys, creating the parent directory."""
  ensure_dir(os.path.dirname(path))
  with open(path, 'w', encoding='utf-8') as f:
    json.dump(value, f, sort_keys=True, indent=indent, allow_nan=False)
    f.write('\n')


def read_json(path: str) -> Any:
  with open(path, 'r', encoding='utf-8') as f:
    return json.load(f)


def write_bytes(data: bytes, path: str) -> None:
  ensure_dir(os.path.dirname(path))
  with open(path, 'wb') as f:
    f.write(data)


def read_bytes(path: str) -> bytes:
  with open(path, 'rb') as f:
    return f.read()


def parse_int_list(values: Iterable[str]) -> List[int]:
  """Parses flag values such as ['1', '2', '4'] into sorted unique ints.

  Args:
    values: String values, e.g. from a comma-separated list flag.

  Returns:
    Sorted list of distinct integers.

  Raises:
    ValueError if a value is not an integer.
  """
  return sorted({int(v) for v in values if str(v).strip()})


def parse_key_values(items: Iterable[str]) -> dict[str, Any]:
  """Parses ['n_trees=10', 'bootstrap=false'] into a dictionary.

  Values are decoded as JSON when possible, so numbers and booleans keep
  their types; anything else stays a string.

  Args:
    items: Strings of the form "name=value".

  Returns:
    Dictionary from name to decoded value.

  Raises:
    ValueError if an item has no "=".
  """
  parsed = {}
  for item in items:
    if '=' not in item:
      raise ValueError(f'Expected name=value, got "{item}".')
    name, raw = item.split('=', 1)
    raw = raw.strip()
    try:
      value = json.loads(raw)
    except json.JSONDecodeError:
      value = raw
    parsed[name.strip()] = value
  return parsed
