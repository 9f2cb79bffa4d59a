"""Centralized critic, grouped actors: marginal-Q credit and the actor objective.

Positions below refer to places in an agent ordering (``GroupSpec.ordering``
unless overridden): for position p, agents ``order[:p]`` form the prefix,
``order[p]`` is the agent being credited and ``order[p+1:]`` are completed
with greedy policy actions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actors import (GroupedActors, act, greedy_actions, make_actors, one_hot, policy_backward,
                     policy_forward, relaxed_backward, relaxed_one_hot, tabular_actors,
                     update_actor_targets)
from .envs.base import GroupSpec
from .errors import ConfigError, NumericalError
from .gqc import CriticEnsemble, CriticRngs, PUConfig, critic_input, critic_update, head_forward, update_targets
from .numkit import MlpParams, mlp_backward, mlp_forward, opt_step

__all__ = ["GroupedActors", "OmqValue", "act", "actor_loss", "actor_update", "greedy_completion",
           "make_actors", "omdpg_update", "omq", "sequential_order", "tabular_actors",
           "update_actor_targets"]


@dataclass
class OmqValue:
    values: np.ndarray        # (C,) or (C, B)
    position: int
    completion: np.ndarray


def _order(actors_or_groups, order):
    if order is not None:
        return tuple(order)
    groups = actors_or_groups.groups if isinstance(actors_or_groups, GroupedActors) else actors_or_groups
    return groups.ordering


def sequential_order(groups: GroupSpec, mode: str = "fixed", rng: np.random.Generator | None = None):
    if mode == "fixed":
        return groups.ordering
    if mode == "shuffled":
        return tuple(int(i) for i in rng.permutation(groups.n_agents))
    raise ConfigError(f"unknown order mode {mode!r}")


def greedy_completion(actors: GroupedActors, joint_obs, position: int, order=None) -> np.ndarray:
    """Encoded greedy actions of the agents after ``position``; empty at the last position."""
    order = _order(actors, order)
    n = len(order)
    if not 0 <= position < n:
        raise ConfigError(f"position {position} outside 0..{n - 1}")
    greedy = greedy_actions(actors, joint_obs)
    rest = list(order[position + 1:])
    return greedy[..., rest, :]


def _heads(critic):
    return critic.online if isinstance(critic, CriticEnsemble) else list(critic)


def omq(critic, s, joint_action, position: int, completion, order, no_op) -> OmqValue:
    """Per-head marginal value of agent ``order[position]`` against the no-op.

    Both evaluations share the prefix and completion and differ only in the
    credited agent's slot. ``critic`` is a CriticEnsemble (online heads) or a
    list of heads.
    """
    order = tuple(order)
    joint = np.array(joint_action, dtype=np.float64, copy=True)
    rest = list(order[position + 1:])
    if rest:
        joint[..., rest, :] = completion
    base = joint.copy()
    base[..., order[position], :] = no_op
    x1 = critic_input(s, joint)
    x0 = critic_input(s, base)
    heads = _heads(critic)
    values = np.stack([head_forward(h, x1) - head_forward(h, x0) for h in heads])
    return OmqValue(values, position, np.asarray(completion))


def _forward_keep(head, x):
    if isinstance(head, MlpParams):
        y, cache = mlp_forward(head, x)
        return y[:, 0], cache
    return head_forward(head, x), None


def _backward_input(head, cache, grad_out) -> np.ndarray:
    if cache is None:
        raise ConfigError("actor gradients need differentiable (MlpParams) critic heads")
    _, gx = mlp_backward(head, cache, grad_out[:, None], param_grads=False)
    return gx


def actor_loss(actors: GroupedActors, critic, batch, objective: str = "omq", order=None,
               rng: np.random.Generator | None = None, temperature: float = 1.0, hard: bool = True,
               context=None, no_op=None):
    """Actor objective and its gradients for every group.

    ``objective="omq"``: minus the batch/agent mean of min over heads of the
    marginal value, with prefix and completion taken from the current greedy
    policies. ``objective="dpg"``: minus the mean of min over heads of Q with
    agent i's replayed action swapped for its current policy action.

    Only the credited agent's own action carries gradient; context actions
    are constants. ``context`` overrides the greedy context, which lets a
    finite-difference check hold it fixed while parameters move. Discrete
    actors use a Gumbel straight-through sample (``hard=False`` gives the
    plain relaxed sample). Returns ``(loss, grads_per_group, info)``.
    """
    order = _order(actors, order)
    heads = _heads(critic)
    C = len(heads)
    s = batch.state
    B, n, d = batch.action.shape
    out, caches = policy_forward(actors.online, actors.groups, batch.obs)
    if actors.discrete:
        slot, soft = relaxed_one_hot(out, rng, temperature, hard=hard)
        if context is None:
            context = one_hot(out.argmax(axis=-1), d)
    else:
        slot = out
        soft = None
        if context is None:
            context = out
    if no_op is None:
        no_op = np.zeros(d)
        if actors.discrete:
            no_op[0] = 1.0
    if objective == "omq":
        base = context
    elif objective == "dpg":
        base = batch.action
    else:
        raise ConfigError(f"unknown actor objective {objective!r}")

    # Rows for agent i: base joint action with slot i replaced (x1) or zeroed (x0).
    shared_x1 = objective == "omq" and not actors.discrete and np.array_equal(context, slot)
    agents = list(order)
    x1_rows, x0_rows = [], []
    for i in agents:
        j1 = base.copy()
        j1[:, i] = slot[:, i]
        if not shared_x1:
            x1_rows.append(critic_input(s, j1))
        if objective == "omq":
            j0 = base.copy()
            j0[:, i] = no_op
            x0_rows.append(critic_input(s, j0))
    x1 = critic_input(s, slot) if shared_x1 else np.concatenate(x1_rows)

    fwd = [_forward_keep(h, x1) for h in heads]
    q1 = np.stack([q for q, _ in fwd])                             # (C, B) or (C, nB)
    if shared_x1:
        q1 = np.tile(q1, (1, n))
    vals = q1
    if objective == "omq":
        x0 = np.concatenate(x0_rows)
        vals = q1 - np.stack([head_forward(h, x0) for h in heads])
    vals = vals.reshape(C, n, B)
    pick = vals.argmin(axis=0)                                     # (n, B)
    best = np.take_along_axis(vals, pick[None], axis=0)[0]
    loss = -float(best.mean())
    if not np.isfinite(loss):
        raise NumericalError("non-finite actor loss", {"objective": objective})

    ds = s.shape[1]
    grad_slot = np.zeros((B, n, d))
    scale = -1.0 / (n * B)
    for h, head in enumerate(heads):
        mask = (pick == h)                                         # (n, B)
        if not mask.any():
            continue
        if shared_x1:
            gx = _backward_input(head, fwd[h][1], np.ones(B))             # (B, in)
            ga = gx[:, ds:].reshape(B, n, d)
            for k, i in enumerate(agents):
                grad_slot[:, i] += scale * mask[k][:, None] * ga[:, i]
        else:
            gx = _backward_input(head, fwd[h][1], scale * mask.reshape(-1).astype(float))
            ga = gx[:, ds:].reshape(n, B, n, d)
            for k, i in enumerate(agents):
                grad_slot[:, i] += ga[k, :, i]
    grad_out = relaxed_backward(soft, grad_slot, temperature) if actors.discrete else grad_slot
    grads = policy_backward(actors.online, caches, grad_out)
    info = {"actor_loss": loss, "min_head_value": float(best.mean())}
    return loss, grads, info


def actor_update(actors: GroupedActors, critic, batch, objective: str = "omq", order=None,
                 rng: np.random.Generator | None = None, temperature: float = 1.0) -> dict:
    loss, grads, info = actor_loss(actors, critic, batch, objective, order, rng, temperature)
    new_online, new_opt = [], []
    for net, opt, g in zip(actors.online, actors.opt, grads):
        p, o = opt_step(opt, net, g)
        new_online.append(p)
        new_opt.append(o)
    actors.online = new_online
    actors.opt = new_opt
    return info


@dataclass
class UpdateParams:
    """Everything a learner step needs besides networks, batches and rngs."""

    pu: PUConfig
    gamma: float = 0.95
    tau: float = 0.005
    temperature: float = 1.0
    order: tuple | None = None


@dataclass
class UpdateRngs:
    noise: np.random.Generator
    ood: np.random.Generator
    actor: np.random.Generator


def omdpg_update(actors: GroupedActors, ensemble: CriticEnsemble, batches, hp: UpdateParams,
                 rngs: UpdateRngs, do_actor: bool = True) -> dict:
    """One OMDPG learner step.

    Every head trains on its own minibatch against its own target plus the
    pessimistic OOD term; then (when ``do_actor``) the grouped actors ascend
    the min-over-heads marginal value and all targets move by ``tau``.
    """
    order = _order(actors, hp.order)
    info = critic_update(ensemble, batches, actors, hp.pu, hp.gamma, CriticRngs(rngs.noise, rngs.ood),
                         order, mode="own")
    if do_actor:
        info.update(actor_update(actors, ensemble, batches[0], "omq", order, rngs.actor, hp.temperature))
        update_actor_targets(actors, hp.tau)
        update_targets(ensemble, hp.tau)
    return info
