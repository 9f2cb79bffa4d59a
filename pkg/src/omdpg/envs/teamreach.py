"""TeamReach-Het: heterogeneous landmark coverage with group gear ratios.

Four point agents with double-integrator dynamics must cover four landmarks.
Scouts (group 0) have gear 1.0, haulers (group 1) gear 0.4, so good teams
send haulers to nearby landmarks and scouts to far ones.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from .base import Env, GroupSpec


@dataclass(frozen=True)
class ReachState:
    pos: np.ndarray        # (n, 2)
    vel: np.ndarray        # (n, 2)
    landmarks: np.ndarray  # (L, 2)
    t: int


class TeamReachHet(Env):
    discrete = False

    def __init__(self, group_sizes=(2, 2), gears=(1.0, 0.4), n_landmarks=4, horizon=25,
                 damping=0.25, accel=0.05, collision_radius=0.15, visibility=0.6,
                 collision_penalty=1.0, arena=1.0):
        if len(group_sizes) != len(gears):
            raise ConfigError("one gear per group")
        if not 0.0 <= damping < 1.0:
            raise ConfigError("damping must lie in [0, 1)")
        assignment = tuple(g for g, size in enumerate(group_sizes) for _ in range(size))
        self.groups = GroupSpec(assignment)
        self.gear_by_group = tuple(float(g) for g in gears)
        self.gears = np.array([self.gear_by_group[g] for g in assignment])
        self.n_agents = len(assignment)
        self.n_landmarks = int(n_landmarks)
        self.horizon = int(horizon)
        self.damping = float(damping)
        self.accel = float(accel)
        self.collision_radius = float(collision_radius)
        self.visibility = float(visibility)
        self.collision_penalty = float(collision_penalty)
        self.arena = float(arena)
        self.action_dim = 2
        n, L = self.n_agents, self.n_landmarks
        # own pos, own vel, landmark offsets, (dx, dy, visible) per other agent
        self.obs_dim = 4 + 2 * L + 3 * (n - 1)
        self.state_dim = 4 * n + 2 * L + 1

    def reset(self, seed: int):
        rng = np.random.default_rng(seed)
        n = self.n_agents
        while True:
            pos = rng.uniform(-self.arena, self.arena, size=(n, 2))
            d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
            if (d[np.triu_indices(n, 1)] > self.collision_radius).all():
                break
        landmarks = rng.uniform(-self.arena, self.arena, size=(self.n_landmarks, 2))
        state = ReachState(pos, np.zeros((n, 2)), landmarks, 0)
        return state, self.observe(state)

    def observe(self, state: ReachState) -> np.ndarray:
        n = self.n_agents
        obs = np.zeros((n, self.obs_dim))
        for i in range(n):
            p = state.pos[i]
            row = [p, state.vel[i], (state.landmarks - p).ravel()]
            for j in range(n):
                if j == i:
                    continue
                rel = state.pos[j] - p
                if np.linalg.norm(rel) <= self.visibility:
                    row.append(np.array([rel[0], rel[1], 1.0]))
                else:
                    row.append(np.zeros(3))
            obs[i] = np.concatenate(row)
        return obs

    def _reward(self, pos, landmarks) -> float:
        d = np.linalg.norm(landmarks[:, None] - pos[None], axis=-1)
        coverage = d.min(axis=1).sum()
        pair = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
        collisions = int((pair[np.triu_indices(self.n_agents, 1)] < self.collision_radius).sum())
        return float(-coverage - self.collision_penalty * collisions)

    def step(self, state: ReachState, joint_action):
        if state.t >= self.horizon:
            raise ConfigError("episode already finished")
        a = np.asarray(joint_action, dtype=np.float64)
        if a.shape != (self.n_agents, 2):
            raise ShapeError(f"expected actions of shape ({self.n_agents}, 2), got {a.shape}")
        a = np.clip(a, -1.0, 1.0)
        vel = (1.0 - self.damping) * state.vel + self.accel * self.gears[:, None] * a
        pos = state.pos + vel
        nxt = ReachState(pos, vel, state.landmarks, state.t + 1)
        return nxt, self.observe(nxt), self._reward(pos, state.landmarks), nxt.t == self.horizon

    def state_vector(self, state: ReachState) -> np.ndarray:
        return np.concatenate([state.pos.ravel(), state.vel.ravel(), state.landmarks.ravel(),
                               [state.t / self.horizon]])

    def assign_landmarks(self, state: ReachState) -> tuple[int, ...]:
        """Agent-to-landmark matching minimising the summed squared distance / gear.

        For an agent cruising at a speed proportional to its gear, the
        accumulated distance to its landmark grows like d^2 / speed, so this
        is the matching a speed-aware dispatcher would choose.
        """
        d = np.linalg.norm(state.pos[:, None] - state.landmarks[None], axis=-1)
        cost = d ** 2 / self.gears[:, None]
        n, L = self.n_agents, self.n_landmarks
        best, best_cost = None, np.inf
        for perm in itertools.permutations(range(L), n):
            c = cost[np.arange(n), list(perm)].sum()
            if c < best_cost:
                best, best_cost = perm, c
        return best


def scripted_controller(env: TeamReachHet, state: ReachState, assignment, gain=0.6, damp=0.6):
    """PD controller towards assigned landmarks, gains normalised by each agent's gear."""
    k = env.accel * env.gears[:, None]
    err = state.landmarks[list(assignment)] - state.pos
    a = (gain * err - damp * state.vel) / k
    return np.clip(a, -1.0, 1.0)


def scripted_oracle_return(env: TeamReachHet, seed: int) -> float:
    return scripted_episode(env, env.reset(seed)[0])


def scripted_episode(env: TeamReachHet, state: ReachState) -> float:
    """Return of the scripted controller from ``state`` to the end of the episode."""
    assignment = env.assign_landmarks(state)
    total = 0.0
    for _ in range(env.horizon - state.t):
        state, _, r, done = env.step(state, scripted_controller(env, state, assignment))
        total += r
        if done:
            break
    return total


def random_policy_return(env: Env, seed: int, rng: np.random.Generator) -> float:
    state, _ = env.reset(seed)
    total = 0.0
    for _ in range(env.horizon):
        state, _, r, done = env.step(state, env.random_action(rng))
        total += r
        if done:
            break
    return total
