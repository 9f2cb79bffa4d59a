from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class GroupSpec:
    """Which actors share parameters, and the order used for marginal credit.

    ``assignment[i]`` is agent i's group (0-based). ``ordering`` lists agent
    indices in the order agents are credited: positions before p form the
    prefix, positions after p the greedy completion.
    """

    assignment: tuple[int, ...]
    ordering: tuple[int, ...] | None = None

    def __post_init__(self):
        assignment = tuple(int(g) for g in self.assignment)
        object.__setattr__(self, "assignment", assignment)
        n = len(assignment)
        if n == 0:
            raise ConfigError("a group spec needs at least one agent")
        if sorted(set(assignment)) != list(range(max(assignment) + 1)):
            raise ConfigError(f"group labels must be 0..K-1 without gaps, got {assignment}")
        ordering = tuple(range(n)) if self.ordering is None else tuple(int(i) for i in self.ordering)
        if sorted(ordering) != list(range(n)):
            raise ConfigError(f"ordering {ordering} is not a permutation of {n} agents")
        object.__setattr__(self, "ordering", ordering)

    @property
    def n_agents(self) -> int:
        return len(self.assignment)

    @property
    def n_groups(self) -> int:
        return max(self.assignment) + 1

    def members(self, group: int) -> list[int]:
        return [i for i, g in enumerate(self.assignment) if g == group]

    @classmethod
    def nops(cls, n: int, ordering=None) -> "GroupSpec":
        return cls(tuple(range(n)), ordering)

    @classmethod
    def fups(cls, n: int, ordering=None) -> "GroupSpec":
        return cls((0,) * n, ordering)

    def regime(self, sharing: str) -> "GroupSpec":
        """This spec re-partitioned as ``nops`` / ``parps`` / ``fups``, ordering kept."""
        if sharing == "parps":
            return self
        if sharing == "nops":
            return GroupSpec.nops(self.n_agents, self.ordering)
        if sharing == "fups":
            return GroupSpec.fups(self.n_agents, self.ordering)
        raise ConfigError(f"unknown sharing regime {sharing!r}")


class Env:
    """Cooperative Dec-POMDP with a single shared reward.

    Subclasses are stateless apart from their fixed parameters: the episode
    state travels explicitly through ``reset`` and ``step``.
    """

    n_agents: int
    obs_dim: int
    state_dim: int
    action_dim: int        # encoded width of one agent's action
    discrete: bool
    horizon: int
    groups: GroupSpec

    def reset(self, seed: int):
        raise NotImplementedError

    def step(self, state, joint_action):
        raise NotImplementedError

    def state_vector(self, state) -> np.ndarray:
        raise NotImplementedError

    def no_op(self) -> np.ndarray:
        """Encoded zero action used as the marginal-contribution baseline."""
        if self.discrete:
            v = np.zeros(self.action_dim)
            v[0] = 1.0
            return v
        return np.zeros(self.action_dim)

    def encode(self, joint_action) -> np.ndarray:
        """Joint action as an (n_agents, action_dim) float array."""
        if self.discrete:
            return np.eye(self.action_dim)[np.asarray(joint_action, dtype=int)]
        return np.asarray(joint_action, dtype=np.float64).reshape(self.n_agents, self.action_dim)

    def random_action(self, rng: np.random.Generator):
        if self.discrete:
            return rng.integers(0, self.action_dim, size=self.n_agents)
        return rng.uniform(-1.0, 1.0, size=(self.n_agents, self.action_dim))

    def success(self, episode_return: float):
        """Whether an episode counts as solved; None when the env has no notion of it."""
        return None
