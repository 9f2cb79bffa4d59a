"""Centralized critic ensemble with pessimistic-uncertainty regularisation.

All heads score (global state, full encoded joint action). Each head
regresses towards its own bootstrapped target on real transitions and, with
weight ``lambda_pu``, towards a pessimistic target on out-of-distribution
joint actions: a replayed prefix followed by the target policy's greedy
completion. The pessimistic target is the head's target-network value minus
``beta`` times the spread of all target heads at that input.

A head is either an :class:`MlpParams` or any callable mapping critic input
rows ``(B, in_dim)`` to values ``(B,)``; callables make exact tables and
closed-form stubs usable wherever a learned head is.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actors import GroupedActors, greedy_actions, smoothed_target_actions
from .envs.base import GroupSpec
from .errors import ConfigError, NumericalError, ShapeError
from .numkit import MlpParams, OptState, adam_init, init_mlp, mlp_backward, mlp_forward, opt_step, soft_update
from .replay import Batch
from .serialize import read_arrays, write_arrays

CHECKPOINT_MAGIC = b"OMDPGCKP"


@dataclass
class PUConfig:
    beta: float = 0.5
    lambda_pu: float = 0.1
    sigma: float = 0.2
    clip: float = 0.5

    def __post_init__(self):
        for name in ("beta", "lambda_pu", "sigma", "clip"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ConfigError(f"{name} must be finite")
        if self.beta < 0 or self.lambda_pu < 0:
            raise ConfigError("beta and lambda_pu must be non-negative")
        if self.sigma <= 0 or self.clip <= 0:
            raise ConfigError("target noise sigma and clip must be positive")


@dataclass
class CriticEnsemble:
    online: list
    target: list
    opt: list[OptState] = field(default_factory=list)

    def __post_init__(self):
        if len(self.online) < 2:
            raise ConfigError("an ensemble needs at least two heads")
        if len(self.online) != len(self.target):
            raise ConfigError("online and target head counts differ")
        for o, t in zip(self.online, self.target):
            if isinstance(o, MlpParams) and isinstance(t, MlpParams):
                if [a.shape for a in o.arrays()] != [a.shape for a in t.arrays()]:
                    raise ShapeError("online/target head shapes differ")

    @property
    def n_heads(self) -> int:
        return len(self.online)


def make_ensemble(in_dim: int, n_heads: int, rng: np.random.Generator, hidden=(128, 128),
                  lr: float = 1e-3) -> CriticEnsemble:
    sizes = [in_dim, *hidden, 1]
    acts = ["relu"] * len(hidden) + ["identity"]
    online = [init_mlp(sizes, acts, rng) for _ in range(n_heads)]
    return CriticEnsemble(online, [p.copy() for p in online], [adam_init(p, lr) for p in online])


def critic_input(state, joint_action) -> np.ndarray:
    """Concatenate state (B, ds) with the flattened joint action (B, n, da)."""
    state = np.asarray(state, dtype=np.float64)
    joint_action = np.asarray(joint_action, dtype=np.float64)
    if state.ndim == 1:
        return np.concatenate([state, joint_action.ravel()])
    return np.concatenate([state, joint_action.reshape(len(state), -1)], axis=1)


def head_forward(head, x):
    if isinstance(head, MlpParams):
        y, _ = mlp_forward(head, x)
        return y[..., 0]
    return np.asarray(head(x), dtype=np.float64)


def ensemble_q(ensemble: CriticEnsemble, s, joint_action, which: str = "online") -> np.ndarray:
    """(C,) for one input, (C, B) for a batch."""
    heads = ensemble.online if which == "online" else ensemble.target
    x = critic_input(s, joint_action)
    return np.stack([head_forward(h, x) for h in heads])


def uncertainty(q_values, axis: int = 0) -> np.ndarray:
    """Population standard deviation across heads (divides by C, not C-1)."""
    q = np.moveaxis(np.asarray(q_values, dtype=np.float64), axis, 0)
    if q.shape[0] < 2:
        raise ConfigError("uncertainty needs at least two heads")
    # Spread of offsets from the first head, rescaled by their largest magnitude:
    # agreeing heads give exactly 0 and tiny disagreements do not underflow.
    d = q - q[0]
    scale = np.abs(d).max(axis=0)
    safe = np.where(scale > 0, scale, 1.0)
    z = d / safe
    return scale * np.sqrt(((z - z.mean(axis=0)) ** 2).mean(axis=0))


def true_target(batch: Batch, ensemble: CriticEnsemble, target_actors: GroupedActors, pu: PUConfig,
                gamma: float, rng: np.random.Generator, head: int | None = None, mode: str = "own",
                next_action=None) -> np.ndarray:
    """Bootstrapped regression target on real transitions.

    ``mode="own"`` bootstraps each head from its own target network (the
    ensemble form); ``mode="min"`` takes the minimum over all target heads
    (clipped double Q). Terminal transitions keep only the reward.
    """
    if next_action is None:
        next_action = smoothed_target_actions(target_actors, batch.next_obs, pu.sigma, pu.clip, rng)
    x = critic_input(batch.next_state, next_action)
    if mode == "own":
        if head is None:
            raise ConfigError("own-head targets need a head index")
        q2 = head_forward(ensemble.target[head], x)
    elif mode == "min":
        q2 = np.min([head_forward(h, x) for h in ensemble.target], axis=0)
    else:
        raise ConfigError(f"unknown target mode {mode!r}")
    return batch.reward + gamma * (1.0 - batch.done) * q2


def ood_joint_actions(batch: Batch, target_actors: GroupedActors, order, rng: np.random.Generator,
                      completion=None) -> tuple[np.ndarray, np.ndarray]:
    """Replayed prefix up to a random position, greedy target-policy completion after it.

    One position per transition, uniform over all n positions. Returns the
    joint actions and the drawn positions.
    """
    B, n, _ = batch.action.shape
    if completion is None:
        completion = greedy_actions(target_actors, batch.obs, which="target")
    pos = rng.integers(0, n, size=B)
    rank = np.empty(n, dtype=int)
    rank[list(order)] = np.arange(n)
    keep = rank[None, :] <= pos[:, None]            # (B, n): agent is in the prefix
    ood = np.where(keep[..., None], batch.action, completion)
    return ood, pos


def pu_target(ensemble: CriticEnsemble, s, ood_action, head: int, pu: PUConfig) -> np.ndarray:
    """Head's target value at the OOD input minus beta times the target-head spread there."""
    q = ensemble_q(ensemble, s, ood_action, which="target")
    return q[head] - pu.beta * uncertainty(q)


def gqc_loss(head: MlpParams, x_true, y_true, x_ood=None, y_pu=None, lambda_pu: float = 0.0):
    """MSE to real-transition targets plus lambda_pu times MSE to the PU targets.

    Targets are constants here; gradients only reach ``head``.
    """
    x_true = np.atleast_2d(x_true)
    y_true = np.atleast_1d(y_true)
    use_ood = lambda_pu > 0 and x_ood is not None
    x = np.concatenate([x_true, np.atleast_2d(x_ood)]) if use_ood else x_true
    out, cache = mlp_forward(head, x)
    q = out[:, 0]
    nt = len(y_true)
    err_t = q[:nt] - y_true
    loss = np.mean(err_t ** 2)
    g = np.zeros_like(out)
    g[:nt, 0] = 2.0 * err_t / nt
    if use_ood:
        y_pu = np.atleast_1d(y_pu)
        err_o = q[nt:] - y_pu
        loss = loss + lambda_pu * np.mean(err_o ** 2)
        g[nt:, 0] = 2.0 * lambda_pu * err_o / len(y_pu)
    if not np.isfinite(loss):
        raise NumericalError("non-finite critic loss", {"q_max": float(np.nanmax(np.abs(q))) if q.size else 0.0})
    grads, _ = mlp_backward(head, cache, g)
    return float(loss), grads


@dataclass
class CriticRngs:
    noise: np.random.Generator
    ood: np.random.Generator


def critic_update(ensemble: CriticEnsemble, batches: list[Batch], target_actors: GroupedActors,
                  pu: PUConfig, gamma: float, rngs: CriticRngs, order, mode: str = "own") -> dict:
    """One optimizer step on every online head.

    ``batches`` holds one minibatch per head. When several heads receive the
    very same Batch object (twin-critic training), its targets and OOD
    inputs are built once and shared, as clipped double-Q does.
    """
    C = ensemble.n_heads
    if len(batches) != C:
        raise ConfigError(f"need {C} batches, got {len(batches)}")
    use_pu = pu.lambda_pu > 0
    # distinct batches in first-use order; targets and OOD inputs built once each
    distinct: dict[int, int] = {}
    for b in batches:
        distinct.setdefault(id(b), len(distinct))
    uniq = [None] * len(distinct)
    for b in batches:
        uniq[distinct[id(b)]] = b
    prepared = []
    for batch in uniq:
        a2 = smoothed_target_actions(target_actors, batch.next_obs, pu.sigma, pu.clip, rngs.noise)
        x_ood = None
        if use_pu:
            ood, _ = ood_joint_actions(batch, target_actors, order, rngs.ood)
            x_ood = critic_input(batch.state, ood)
        shared_y = true_target(batch, ensemble, target_actors, pu, gamma, rngs.noise, mode="min",
                               next_action=a2) if mode == "min" else None
        prepared.append([a2, x_ood, None, shared_y])
    if use_pu:
        # every target head scores all OOD rows in one pass
        stacked = np.concatenate([p[1] for p in prepared])
        q_all = np.stack([head_forward(t, stacked) for t in ensemble.target])
        start = 0
        for p in prepared:
            p[2] = q_all[:, start:start + len(p[1])]
            start += len(p[1])
    losses, spreads = [], []
    new_online, new_opt = [], []
    for h in range(C):
        batch = batches[h]
        a2, x_ood, q_ood, shared_y = prepared[distinct[id(batch)]]
        if mode == "min":
            y = shared_y
        else:
            y = true_target(batch, ensemble, target_actors, pu, gamma, rngs.noise, head=h, mode=mode,
                            next_action=a2)
        y_pu = None
        if use_pu:
            spread = uncertainty(q_ood)
            y_pu = q_ood[h] - pu.beta * spread
            spreads.append(float(spread.mean()))
        loss, grads = gqc_loss(ensemble.online[h], critic_input(batch.state, batch.action), y,
                               x_ood, y_pu, pu.lambda_pu)
        params, opt = opt_step(ensemble.opt[h], ensemble.online[h], grads)
        new_online.append(params)
        new_opt.append(opt)
        losses.append(loss)
    ensemble.online = new_online
    ensemble.opt = new_opt
    return {"critic_loss": float(np.mean(losses)),
            "uncertainty": float(np.mean(spreads)) if spreads else 0.0}


def update_targets(ensemble: CriticEnsemble, tau: float) -> None:
    ensemble.target = [soft_update(t, o, tau) for t, o in zip(ensemble.target, ensemble.online)]


def _pack_net(prefix: str, net: MlpParams, arrays: dict, meta: dict):
    for j, a in enumerate(net.arrays()):
        arrays[f"{prefix}/{j}"] = a
    meta[prefix] = list(net.activations)


def _unpack_net(prefix: str, arrays: dict, meta: dict) -> MlpParams:
    acts = tuple(meta[prefix])
    parts = [arrays[f"{prefix}/{j}"] for j in range(2 * len(acts))]
    return MlpParams(parts[0::2], parts[1::2], acts)


def _pack_opt(prefix: str, opt: OptState, arrays: dict, meta: dict):
    for j, (m, v) in enumerate(zip(opt.m, opt.v)):
        arrays[f"{prefix}/m{j}"] = m
        arrays[f"{prefix}/v{j}"] = v
    meta[prefix] = {"step": opt.step, "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2,
                    "eps": opt.eps, "n": len(opt.m)}


def _unpack_opt(prefix: str, arrays: dict, meta: dict) -> OptState:
    info = meta[prefix]
    n = info["n"]
    return OptState([arrays[f"{prefix}/m{j}"] for j in range(n)], [arrays[f"{prefix}/v{j}"] for j in range(n)],
                    info["step"], info["lr"], info["beta1"], info["beta2"], info["eps"])


def save_checkpoint(path, ensemble: CriticEnsemble, actors: GroupedActors | None = None):
    """All learned heads, actor groups and optimizer moments in one binary file."""
    arrays: dict = {}
    meta: dict = {"n_heads": ensemble.n_heads}
    for h in range(ensemble.n_heads):
        _pack_net(f"critic/{h}/online", ensemble.online[h], arrays, meta)
        _pack_net(f"critic/{h}/target", ensemble.target[h], arrays, meta)
        _pack_opt(f"critic/{h}/opt", ensemble.opt[h], arrays, meta)
    if actors is not None:
        meta["actors"] = {"assignment": list(actors.groups.assignment), "ordering": list(actors.groups.ordering),
                          "discrete": actors.discrete, "action_dim": actors.action_dim,
                          "explore_sigma": actors.explore_sigma}
        for g in range(actors.groups.n_groups):
            _pack_net(f"actor/{g}/online", actors.online[g], arrays, meta)
            _pack_net(f"actor/{g}/target", actors.target[g], arrays, meta)
            _pack_opt(f"actor/{g}/opt", actors.opt[g], arrays, meta)
    return write_arrays(path, CHECKPOINT_MAGIC, arrays, meta)


def load_checkpoint(path) -> tuple[CriticEnsemble, GroupedActors | None]:
    arrays, meta = read_arrays(path, CHECKPOINT_MAGIC)
    C = meta["n_heads"]
    ens = CriticEnsemble([_unpack_net(f"critic/{h}/online", arrays, meta) for h in range(C)],
                         [_unpack_net(f"critic/{h}/target", arrays, meta) for h in range(C)],
                         [_unpack_opt(f"critic/{h}/opt", arrays, meta) for h in range(C)])
    actors = None
    if "actors" in meta:
        info = meta["actors"]
        groups = GroupSpec(tuple(info["assignment"]), tuple(info["ordering"]))
        K = groups.n_groups
        actors = GroupedActors(groups,
                               [_unpack_net(f"actor/{g}/online", arrays, meta) for g in range(K)],
                               [_unpack_net(f"actor/{g}/target", arrays, meta) for g in range(K)],
                               [_unpack_opt(f"actor/{g}/opt", arrays, meta) for g in range(K)],
                               info["discrete"], info["action_dim"], info["explore_sigma"])
    return ens, actors
