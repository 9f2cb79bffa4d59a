"""SignalLever: a fully enumerable three-agent coordination game.

Agents 0 and 2 share group A and agent 1 sits between them in group B, so a
sequential update touches A, then B, then A again. Action 0 is the no-op.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from .base import Env, GroupSpec

MAX_ENUMERATION = 10 ** 6

OPTIMAL_ACTION = (2, 1, 2)
OPTIMAL_VALUE = 10.0


@dataclass(frozen=True)
class ExactGame:
    payoff: np.ndarray          # shape (m,) * n
    groups: GroupSpec
    horizon: int = 1

    def __post_init__(self):
        payoff = np.asarray(self.payoff, dtype=np.float64)
        object.__setattr__(self, "payoff", payoff)
        if payoff.ndim != self.groups.n_agents:
            raise ShapeError("payoff tensor rank must equal the number of agents")
        if len(set(payoff.shape)) != 1:
            raise ShapeError("every agent needs the same number of actions")
        if not np.isfinite(payoff).all():
            raise ShapeError("payoff tensor must be finite")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")

    @property
    def n_agents(self) -> int:
        return self.payoff.ndim

    @property
    def n_actions(self) -> int:
        return self.payoff.shape[0]


def enumerate_game(game: ExactGame) -> tuple[np.ndarray, tuple[int, ...], float]:
    """Full payoff view, the lexicographically smallest maximiser, and its value."""
    if game.payoff.size > MAX_ENUMERATION:
        raise ConfigError(f"{game.payoff.size} joint actions exceed the enumeration bound")
    best, best_value = None, -np.inf
    for a in itertools.product(range(game.n_actions), repeat=game.n_agents):
        v = game.payoff[a]
        if v > best_value:
            best, best_value = a, v
    view = game.payoff.view()
    view.flags.writeable = False
    return view, best, float(best_value)


def signal_lever_payoff() -> np.ndarray:
    """Payoff for the default instance.

    Each agent earns an individual term that already points at its part of
    the optimum, agent 1 preferring a different action from its A-group
    neighbours. Group A disagreeing (both active, different actions) costs 2,
    and the full optimum (2, 1, 2) carries a coordination bonus of 4, which
    lifts it to exactly 10.
    """
    own = np.array([[0.0, 1.0, 2.0],
                    [0.0, 2.0, 1.0],
                    [0.0, 1.0, 2.0]])
    R = np.zeros((3, 3, 3))
    for a in itertools.product(range(3), repeat=3):
        v = own[0, a[0]] + own[1, a[1]] + own[2, a[2]]
        if a[0] and a[2] and a[0] != a[2]:
            v -= 2.0
        if a == OPTIMAL_ACTION:
            v += 4.0
        R[a] = v
    return R


def signal_lever_game(horizon: int = 1) -> ExactGame:
    return ExactGame(signal_lever_payoff(), GroupSpec((0, 1, 0)), horizon)


@dataclass(frozen=True)
class LeverState:
    t: int


class SignalLever(Env):
    """Stateless repeated matrix game. Observation of agent i is one-hot(i)."""

    discrete = True

    def __init__(self, game: ExactGame | None = None, horizon: int | None = None):
        if game is None:
            game = signal_lever_game(horizon or 1)
        elif horizon is not None:
            game = ExactGame(game.payoff, game.groups, horizon)
        self.game = game
        self.groups = game.groups
        self.n_agents = game.n_agents
        self.action_dim = game.n_actions
        self.obs_dim = game.n_agents
        self.state_dim = 1
        self.horizon = game.horizon
        _, self.best_action, self.best_value = enumerate_game(game)

    def _obs(self) -> np.ndarray:
        return np.eye(self.n_agents)

    def reset(self, seed: int = 0):
        return LeverState(0), self._obs()

    def step(self, state: LeverState, joint_action):
        if state.t >= self.horizon:
            raise ConfigError("episode already finished")
        a = np.asarray(joint_action)
        if a.shape != (self.n_agents,) or not np.issubdtype(a.dtype, np.integer):
            raise ShapeError(f"expected {self.n_agents} integer actions, got {joint_action!r}")
        if (a < 0).any() or (a >= self.action_dim).any():
            raise ValueError(f"action index out of range in {a.tolist()}")
        reward = float(self.game.payoff[tuple(int(x) for x in a)])
        t = state.t + 1
        return LeverState(t), self._obs(), reward, t == self.horizon

    def state_vector(self, state: LeverState) -> np.ndarray:
        return np.array([state.t / self.horizon])

    def success(self, episode_return: float):
        return bool(episode_return >= self.horizon * self.best_value - 1e-9)
