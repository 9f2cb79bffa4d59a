"""Grouped deterministic actors with intra-group parameter sharing.

Every group owns exactly one parameter set; all of its member agents are
evaluated with that same set by stacking their observations into one batch,
so gradients from all members land in the shared parameters automatically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs.base import GroupSpec
from .errors import ShapeError
from .numkit import MlpParams, OptState, adam_init, init_mlp, mlp_backward, mlp_forward, soft_update


@dataclass
class GroupedActors:
    groups: GroupSpec
    online: list[MlpParams]
    target: list[MlpParams]
    opt: list[OptState]
    discrete: bool
    action_dim: int
    explore_sigma: float = 0.1

    def net_for(self, agent: int, which: str = "online") -> MlpParams:
        nets = self.online if which == "online" else self.target
        return nets[self.groups.assignment[agent]]


def make_actors(groups: GroupSpec, obs_dim: int, action_dim: int, discrete: bool,
                rng: np.random.Generator, hidden=(64, 64), lr: float = 1e-4,
                explore_sigma: float = 0.1) -> GroupedActors:
    sizes = [obs_dim, *hidden, action_dim]
    acts = ["tanh"] * len(hidden) + ["identity" if discrete else "tanh"]
    online = [init_mlp(sizes, acts, rng) for _ in range(groups.n_groups)]
    return GroupedActors(groups, online, [p.copy() for p in online], [adam_init(p, lr) for p in online],
                         discrete, action_dim, explore_sigma)


def tabular_actors(groups: GroupSpec, logits) -> GroupedActors:
    """Discrete actors that reproduce a per-agent logit table exactly.

    Assumes observation i is one-hot(i), as in SignalLever: a single linear
    layer whose column i holds agent i's logits. Agents of one group share
    the matrix but read different columns.
    """
    logits = np.asarray(logits, dtype=np.float64)
    n, m = logits.shape
    if n != groups.n_agents:
        raise ShapeError("need one logit row per agent")
    nets = []
    for g in range(groups.n_groups):
        w = np.zeros((m, n))
        for i in groups.members(g):
            w[:, i] = logits[i]
        nets.append(MlpParams([w], [np.zeros(m)], ("identity",)))
    return GroupedActors(groups, nets, [p.copy() for p in nets], [adam_init(p) for p in nets], True, m)


def policy_forward(nets: list[MlpParams], groups: GroupSpec, obs):
    """Raw network outputs for every agent: (B, n, d), or (n, d) for one joint observation.

    Returns the outputs and per-group ``(members, cache)`` pairs for backprop.
    """
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 2
    if single:
        obs = obs[None]
    if obs.ndim != 3 or obs.shape[1] != groups.n_agents:
        raise ShapeError(f"joint observation of shape {obs.shape} does not match {groups.n_agents} agents")
    B = obs.shape[0]
    out = None
    caches = []
    for g, net in enumerate(nets):
        members = groups.members(g)
        x = obs[:, members].reshape(B * len(members), -1)
        y, cache = mlp_forward(net, x)
        if out is None:
            out = np.empty((B, groups.n_agents, y.shape[-1]))
        out[:, members] = y.reshape(B, len(members), -1)
        caches.append((members, cache))
    return (out[0] if single else out), caches


def policy_backward(nets: list[MlpParams], caches, grad_out) -> list[MlpParams]:
    """Backprop (B, n, d) output gradients into each group's shared parameters."""
    grad_out = np.asarray(grad_out)
    B = grad_out.shape[0]
    grads = []
    for net, (members, cache) in zip(nets, caches):
        g = grad_out[:, members].reshape(B * len(members), -1)
        gp, _ = mlp_backward(net, cache, g)
        grads.append(gp)
    return grads


def one_hot(idx, m: int) -> np.ndarray:
    return np.eye(m)[np.asarray(idx, dtype=int)]


def greedy_actions(actors: GroupedActors, obs, which: str = "online") -> np.ndarray:
    """Encoded greedy joint action: tanh outputs, or one-hot argmax of the logits."""
    nets = actors.online if which == "online" else actors.target
    out, _ = policy_forward(nets, actors.groups, obs)
    if actors.discrete:
        return one_hot(out.argmax(axis=-1), actors.action_dim)
    return out


def smoothed_target_actions(actors: GroupedActors, obs, sigma: float, clip: float,
                            rng: np.random.Generator) -> np.ndarray:
    """Target-policy actions plus clipped Gaussian noise, kept inside the action box.

    Discrete actors get the noise on their logits and return the one-hot argmax.
    """
    out, _ = policy_forward(actors.target, actors.groups, obs)
    noise = np.clip(sigma * rng.standard_normal(out.shape), -clip, clip)
    if actors.discrete:
        return one_hot((out + noise).argmax(axis=-1), actors.action_dim)
    return np.clip(out + noise, -1.0, 1.0)


def softmax(z, temperature: float = 1.0, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64) / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def relaxed_one_hot(logits, rng: np.random.Generator | None, temperature: float = 1.0,
                    hard: bool = True):
    """Gumbel-softmax sample. Returns ``(value, soft)``.

    With ``hard=True`` the value is the one-hot argmax (straight-through);
    gradients always go through ``soft``. ``rng=None`` drops the Gumbel noise.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if rng is not None:
        u = rng.uniform(np.finfo(float).tiny, 1.0, size=logits.shape)
        logits = logits - np.log(-np.log(u))
    soft = softmax(logits, temperature)
    if not hard:
        return soft, soft
    return one_hot(soft.argmax(axis=-1), logits.shape[-1]), soft


def relaxed_backward(soft, grad_value, temperature: float) -> np.ndarray:
    """d loss / d logits for a softmax output with upstream gradient ``grad_value``."""
    inner = (soft * grad_value).sum(axis=-1, keepdims=True)
    return soft * (grad_value - inner) / temperature


def act(actors: GroupedActors, joint_obs, mode: str = "greedy", rng: np.random.Generator | None = None,
        temperature: float = 1.0):
    """Actions for one joint observation.

    Continuous: (n, d) array in [-1, 1]. Discrete: (n,) integer indices.
    Explore mode adds Gaussian noise truncated at two standard deviations
    (continuous), or samples the tempered categorical with an epsilon share
    of uniform actions equal to ``explore_sigma`` (discrete).
    """
    out, _ = policy_forward(actors.online, actors.groups, joint_obs)
    if mode == "greedy":
        if actors.discrete:
            return out.argmax(axis=-1)
        return np.clip(out, -1.0, 1.0)
    if mode != "explore":
        raise ValueError(f"unknown mode {mode!r}")
    sigma = actors.explore_sigma
    if actors.discrete:
        hard, _ = relaxed_one_hot(out, rng, temperature)
        idx = hard.argmax(axis=-1)
        flip = rng.random(idx.shape) < sigma
        return np.where(flip, rng.integers(0, actors.action_dim, size=idx.shape), idx)
    noise = np.clip(sigma * rng.standard_normal(out.shape), -2.0 * sigma, 2.0 * sigma)
    return np.clip(out + noise, -1.0, 1.0)


def update_actor_targets(actors: GroupedActors, tau: float) -> None:
    actors.target = [soft_update(t, o, tau) for t, o in zip(actors.target, actors.online)]
