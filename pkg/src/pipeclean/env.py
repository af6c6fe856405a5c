"""Fixed-horizon cleaning environment.

One episode: T steps over a working copy of a single dirty table. Repeating an
action family costs the repeat penalty and skips cleaning; a row-deleting
action that would leave fewer than ``min_rows`` rows is applied as identity;
every reward is clipped to [-1, 1]. Deduplication tracks its own internal
history bit but the exported observation keeps the 9-component layout, with
the third bit covering scaler-or-dedup.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .actions import ActionSuite, DEDUP, IMPUTER, OUTLIER, SCALER, apply_action
from .errors import InputError
from .evaluators import EvaluationHarness
from .observer import QualityState, observe, reset as observer_reset
from .rewards import clip_reward, compute_reward, make_context
from .table import Table

HISTORY_FAMILIES = (IMPUTER, OUTLIER, SCALER, DEDUP)


@dataclass(frozen=True)
class EnvConfig:
    horizon: int = 6
    gamma: float = 0.99
    repeat_penalty: float = -0.5
    min_rows: int = 10
    reward_kind: str = "R3"
    suite: ActionSuite = field(default_factory=ActionSuite.discrete7)
    seed: int = 42

    def __post_init__(self):
        if self.horizon < 1:
            raise InputError("horizon must be >= 1")
        if not -1.0 <= self.repeat_penalty < 0.0:
            raise InputError("repeat penalty must lie in [-1, 0)")
        if self.min_rows < 1:
            raise InputError("min_rows must be >= 1")


@dataclass(frozen=True)
class StepOutcome:
    observation: QualityState
    reward: float
    done: bool
    info: dict


class CleaningEnv:
    """Deterministic episodic environment over one dirty table."""

    def __init__(self, config: EnvConfig, dirty: Table | None = None,
                 harness: EvaluationHarness | None = None,
                 rf_cache: dict | None = None):
        self.config = config
        self.harness = harness
        self._rf_cache = rf_cache if rf_cache is not None else {}
        self._dirty = dirty
        self._table = None
        self._ref = None
        self._ctx = None
        self._bits = {}
        self._step = 0

    @property
    def action_count(self) -> int:
        return len(self.config.suite.actions)

    def reset(self, dirty: Table | None = None) -> QualityState:
        if dirty is not None:
            self._dirty = dirty
        if self._dirty is None:
            raise InputError("reset needs a dirty table on first call")
        self._table = self._dirty
        self._ref = observer_reset(self._dirty)
        self._ctx = make_context(self._dirty, harness=self.harness,
                                 rf_seed=self.config.seed, rf_cache=self._rf_cache)
        self._bits = {f: 0 for f in HISTORY_FAMILIES}
        self._step = 0
        return self._observe()

    def _exported_history(self):
        return (self._bits[IMPUTER], self._bits[OUTLIER],
                max(self._bits[SCALER], self._bits[DEDUP]))

    def _observe(self) -> QualityState:
        return observe(self._table, self._ref, self._exported_history())

    def step(self, action_index: int) -> StepOutcome:
        if self._table is None:
            raise InputError("call reset before step")
        if self._step >= self.config.horizon:
            raise InputError("episode already finished")
        if not 0 <= action_index < self.action_count:
            raise InputError(f"action index {action_index} outside suite of "
                             f"{self.action_count}")
        self._step += 1
        done = self._step == self.config.horizon
        action = self.config.suite.actions[action_index]
        info = {"step": self._step, "action": action.canonical(), "guards": []}

        if self._bits[action.family]:
            info["guards"].append("repeat-family")
            return StepOutcome(self._observe(), self.config.repeat_penalty, done, info)

        candidate = apply_action(self._table, action)
        if (action.family in (OUTLIER, DEDUP)
                and candidate.n_rows < self.config.min_rows):
            info["guards"].append("min-rows")
            candidate = self._table
        self._bits[action.family] = 1
        if candidate.n_rows == 0:
            info["guards"].append("empty-table")
            reward = -1.0
        else:
            self._table = candidate
            reward = clip_reward(compute_reward(self.config.reward_kind,
                                                self._table, self._ctx))
        return StepOutcome(self._observe(), reward, done, info)

    @property
    def table(self) -> Table:
        return self._table


def episode_return(rewards, gamma: float) -> float:
    """Discounted sum: G = sum gamma^(t-1) * r_t."""
    return float(sum(r * gamma ** i for i, r in enumerate(rewards)))


def run_episode(env: CleaningEnv, action_fn, recorder=None):
    """Roll one episode; action_fn maps observation array -> action index.
    Returns (rewards, outcomes)."""
    obs = env.reset()
    rewards = []
    outcomes = []
    done = False
    while not done:
        a = action_fn(obs.as_array())
        out = env.step(a)
        rewards.append(out.reward)
        outcomes.append(out)
        if recorder is not None:
            recorder.write(out)
        obs = out.observation
        done = out.done
    return rewards, outcomes


class TrajectoryRecorder:
    """Writes one JSON line per step: step, action, guard tags, reward, state."""

    def __init__(self, fh):
        self._fh = fh

    def write(self, outcome: StepOutcome) -> None:
        rec = {
            "step": outcome.info["step"],
            "action": outcome.info["action"],
            "guards": outcome.info["guards"],
            "reward": outcome.reward,
            "state": outcome.observation.as_array().tolist(),
        }
        self._fh.write(json.dumps(rec) + "\n")
