"""Act-or-repeat reinforcement learning agent.

Configs are plain dicts with "run", "agent" and "optimizer" sections, as produced by `preset`.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    Env,
    EpisodeTrace,
    IoError,
    afr,
    apr,
    auc,
    best_normalized,
    builtin_env_names,
    check_names,
    config_keys,
    n_score,
    preset_names,
    set_log_level,
)

__all__ = [
    "ConfigError", "Env", "EpisodeTrace", "IoError", "Trainer", "afr", "apr", "auc", "best_normalized",
    "builtin_env_names", "check_names", "config_hash", "config_keys", "config_text", "evaluate", "n_score",
    "parse_config", "preset", "preset_names", "read_run_log", "run_check", "set_log_level", "train", "with_settings",
]


def preset(name="default"):
    return json.loads(_core.preset(name))


def parse_config(text, base=None):
    """Parse [run] / [agent] / [optimizer] config text on top of `base` (defaults if None)."""
    return json.loads(_core.parse_config(text, json.dumps(base) if base is not None else ""))


def with_settings(config, **sections):
    """Copy of `config` with overrides, e.g. with_settings(c, run={"seed": 3}, agent={"lambda": 0.4})."""
    text = json.dumps(config)
    for section, values in sections.items():
        for key, value in values.items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, (list, tuple)):
                value = "[" + ", ".join(str(v) for v in value) + "]"
            text = _core.apply_setting(text, section, key, str(value))
    return json.loads(text)


def config_hash(config):
    return _core.config_hash(json.dumps(config))


def config_text(config):
    return _core.config_text(json.dumps(config))


def train(config, out_dir="", stop_at=-1, resume="", stop_at_return=None):
    return json.loads(_core.train(json.dumps(config), out_dir, stop_at, resume, stop_at_return))


def evaluate(checkpoint, episodes=10, seed=0, deterministic=True, traces_out=""):
    return json.loads(_core.evaluate(checkpoint, episodes, seed, deterministic, traces_out))


def read_run_log(path):
    return json.loads(_core.read_run_log(path))


def run_check(name, scratch):
    passed, detail, seconds = _core.run_check(name, scratch)
    return {"name": name, "passed": passed, "detail": detail, "seconds": seconds}


class Trainer:
    """In-process double-precision trainer."""

    def __init__(self, config):
        self._t = _core.Trainer(json.dumps(config))

    def train(self, until=-1):
        """Run to step `until` (total_steps if negative); returns the evaluation records made."""
        return json.loads(self._t.train(until))

    def evaluate(self):
        return json.loads(self._t.evaluate())

    def act(self, obs, a_prev, deterministic=False, episode_start=False):
        """One two-stage decision: returns (action, schema) with schema[i] == 1 for act."""
        return self._t.act(list(obs), list(a_prev), deterministic, episode_start)

    @property
    def step(self):
        return self._t.step

    @property
    def env_spec(self):
        return self._t.env_spec

    @property
    def temperatures(self):
        return self._t.temperatures

    @property
    def config(self):
        return json.loads(self._t.config())
