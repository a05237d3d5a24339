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

r"""Runs a paradop subcommand.

Example invocations:

python paradop_main.py synth \
  --config=/path/to/corpus_spec.json \
  --output_dir=/path/to/corpus

python paradop_main.py evaluate \
  --config=/path/to/experiment.json \
  --output_dir=/path/to/reports

python paradop_main.py featurize \
  --plans=/path/to/plans.jsonl \
  --channels=count,card,weight \
  --output_dir=/path/to/features

Run with --help for every subcommand and flag.
"""

import sys

from absl import logging
from paradop import cli


def main() -> None:
  logging.use_absl_handler()
  sys.exit(cli.cli_dispatch(sys.argv))


if __name__ == '__main__':
  main()
