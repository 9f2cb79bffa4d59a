"""Uniform ring-buffer experience replay."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotReady, ShapeError
from .serialize import read_arrays, write_arrays

MAGIC = b"OMDPGBUF"
FIELDS = ("state", "obs", "action", "reward", "next_state", "next_obs", "done")


@dataclass
class Transition:
    state: np.ndarray        # (state_dim,)
    obs: np.ndarray          # (n, obs_dim)
    action: np.ndarray       # (n, action_dim), encoded
    reward: float
    next_state: np.ndarray
    next_obs: np.ndarray
    done: bool


@dataclass
class Batch:
    state: np.ndarray        # (B, state_dim)
    obs: np.ndarray          # (B, n, obs_dim)
    action: np.ndarray       # (B, n, action_dim)
    reward: np.ndarray       # (B,)
    next_state: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray         # (B,) float 0/1
    index: np.ndarray | None = None

    def __len__(self):
        return len(self.reward)


class ReplayBuffer:
    def __init__(self, capacity: int, state_dim: int, n_agents: int, obs_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.dims = (int(state_dim), int(n_agents), int(obs_dim), int(action_dim))
        n = n_agents
        self._data = {
            "state": np.zeros((capacity, state_dim)),
            "obs": np.zeros((capacity, n, obs_dim)),
            "action": np.zeros((capacity, n, action_dim)),
            "reward": np.zeros(capacity),
            "next_state": np.zeros((capacity, state_dim)),
            "next_obs": np.zeros((capacity, n, obs_dim)),
            "done": np.zeros(capacity),
        }
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, tr: Transition) -> None:
        k = self.cursor
        for name in FIELDS:
            value = getattr(tr, name)
            slot = self._data[name]
            if np.shape(value) != slot.shape[1:]:
                raise ShapeError(f"{name} has shape {np.shape(value)}, buffer expects {slot.shape[1:]}")
            slot[k] = value
        self.cursor = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ready(self, batch_size: int) -> bool:
        return self.size >= batch_size

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draw with replacement over the live entries.

        Drawing more items than are stored is allowed (replacement); callers
        that want a warm buffer gate on :meth:`ready` first.
        """
        if self.size == 0:
            raise NotReady("buffer is empty")
        idx = rng.integers(0, self.size, size=batch_size)
        return self.gather(idx)

    def gather(self, idx) -> Batch:
        idx = np.asarray(idx)
        d = self._data
        return Batch(d["state"][idx], d["obs"][idx], d["action"][idx], d["reward"][idx],
                     d["next_state"][idx], d["next_obs"][idx], d["done"][idx], idx)

    def contents(self) -> Batch:
        """All live transitions, oldest first."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = (np.arange(self.capacity) + self.cursor) % self.capacity
        return self.gather(order)

    def dump(self, path):
        """Write the live slots in storage order, so a restored buffer samples identically."""
        arrays = {name: self._data[name][:self.size] for name in FIELDS}
        meta = {"capacity": self.capacity, "dims": list(self.dims), "cursor": self.cursor}
        return write_arrays(path, MAGIC, arrays, meta)

    @classmethod
    def restore(cls, path) -> "ReplayBuffer":
        arrays, meta = read_arrays(path, MAGIC)
        buf = cls(meta["capacity"], *meta["dims"])
        size = len(arrays["reward"])
        for name in FIELDS:
            if arrays[name].shape[1:] != buf._data[name].shape[1:] or size > buf.capacity:
                raise ShapeError(f"snapshot field {name} does not fit the buffer")
            buf._data[name][:size] = arrays[name]
        buf.size = size
        buf.cursor = int(meta["cursor"])
        return buf
