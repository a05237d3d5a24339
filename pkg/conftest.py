"""Pytest wiring: absltest-based tests expect absl flags to be parsed."""

from absl import flags


def pytest_configure(config):
  del config
  if not flags.FLAGS.is_parsed():
    flags.FLAGS.mark_as_parsed()
