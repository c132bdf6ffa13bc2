"""Python access to the goalnav simulator, trainer and evaluator.

Configs are plain dicts with the same layout as the JSON run configs used by
the ``goalnav`` command-line tool.
"""

import json

from . import _goalnav
from ._goalnav import ConfigurationError, UsageError, gae, geodesic_distance, render, world_occupancy

__all__ = [
    "ConfigurationError",
    "UsageError",
    "config_hash",
    "default_config",
    "evaluate",
    "gae",
    "gen_episodes",
    "geodesic_distance",
    "param_count",
    "render",
    "train",
    "world_occupancy",
]


def default_config():
    return json.loads(_goalnav.default_config())


def normalize_config(cfg):
    """Fills defaults and validates; raises ConfigurationError."""
    return json.loads(_goalnav.normalize_config(json.dumps(cfg)))


def config_hash(cfg):
    return _goalnav.config_hash(json.dumps(cfg))


def param_count(cfg):
    return _goalnav.param_count(json.dumps(cfg))


def gen_episodes(cfg, count, split, path):
    return _goalnav.gen_episodes(json.dumps(cfg), count, split, str(path))


def train(cfg, resume=False):
    return _goalnav.train(json.dumps(cfg), resume)


def evaluate(checkpoint, episodes, report, workers=1):
    return json.loads(_goalnav.evaluate(str(checkpoint), str(episodes), str(report), workers))
