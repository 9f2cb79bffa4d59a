"""Finite-difference verification of every differentiable path in the package."""
from __future__ import annotations

import numpy as np

from .actors import GroupedActors, make_actors, one_hot, policy_forward
from .ccga import actor_loss
from .envs.base import GroupSpec
from .gqc import gqc_loss, make_ensemble
from .numkit import fd_gradcheck, flatten, init_mlp, mlp_backward, mlp_forward, unflatten
from .replay import Batch

# activation stacks the package builds: continuous actor, discrete actor, critic head
NET_KINDS = {
    "actor_continuous": ("tanh", "tanh", "tanh"),
    "actor_discrete": ("tanh", "tanh", "identity"),
    "critic": ("relu", "relu", "identity"),
}


def _coords(rng, size, k):
    return rng.choice(size, size=min(k, size), replace=False)


def check_mlp(seed: int, acts, n_coords: int = 40) -> float:
    """Parameter and input gradients of ``sum(out * G)`` for a random net."""
    rng = np.random.default_rng(seed)
    net = init_mlp([5, 8, 7, 3], acts, rng)
    for b in net.biases:
        b[:] = rng.normal(scale=0.3, size=b.shape)
    x = rng.normal(size=(6, 5))
    g_out = rng.normal(size=(6, 3))

    def by_params(vec):
        p = unflatten(net, vec)
        out, cache = mlp_forward(p, x)
        grads, _ = mlp_backward(p, cache, g_out)
        return float((out * g_out).sum()), flatten(grads)

    def by_input(vec):
        xi = vec.reshape(x.shape)
        out, cache = mlp_forward(net, xi)
        _, gx = mlp_backward(net, cache, g_out, param_grads=False)
        return float((out * g_out).sum()), gx.ravel()

    theta = flatten(net)
    return max(fd_gradcheck(by_params, theta, coords=_coords(rng, theta.size, n_coords)),
               fd_gradcheck(by_input, x.ravel()))


def check_gqc_loss(seed: int, lambda_pu: float = 0.1, n_coords: int = 40) -> float:
    """Combined real-transition + pessimistic loss w.r.t. one critic head."""
    rng = np.random.default_rng(seed)
    head = make_ensemble(9, 2, rng, hidden=(16, 16)).online[0]
    x_true, x_ood = rng.normal(size=(12, 9)), rng.normal(size=(12, 9))
    y_true, y_pu = rng.normal(size=12), rng.normal(size=12)

    def fn(vec):
        loss, grads = gqc_loss(unflatten(head, vec), x_true, y_true, x_ood, y_pu, lambda_pu)
        return loss, flatten(grads)

    theta = flatten(head)
    return fd_gradcheck(fn, theta, coords=_coords(rng, theta.size, n_coords))


def _toy_batch(rng, B, n, obs_dim, d, state_dim, discrete):
    if discrete:
        action = np.eye(d)[rng.integers(0, d, size=(B, n))]
    else:
        action = rng.uniform(-1, 1, size=(B, n, d))
    return Batch(rng.normal(size=(B, state_dim)), rng.normal(size=(B, n, obs_dim)), action,
                 rng.normal(size=B), rng.normal(size=(B, state_dim)), rng.normal(size=(B, n, obs_dim)),
                 np.zeros(B))


def check_actor_pipeline(seed: int, discrete: bool = False, objective: str = "omq", n_coords: int = 30) -> float:
    """Min-over-heads marginal-value actor loss w.r.t. every group's parameters.

    The greedy context is frozen at the base point; discrete actors use the
    soft relaxed sample with fixed Gumbel noise so the loss is smooth.
    """
    rng = np.random.default_rng(seed)
    n, obs_dim, d, state_dim, B = 3, 4, 3, 5, 8
    groups = GroupSpec((0, 1, 0))
    actors = make_actors(groups, obs_dim, d, discrete, rng, hidden=(8, 8))
    critic = make_ensemble(state_dim + n * d, 3, rng, hidden=(16, 16))
    batch = _toy_batch(rng, B, n, obs_dim, d, state_dim, discrete)
    noise_seed = int(rng.integers(2 ** 31))
    # freeze the context at the base parameters
    out0, _ = policy_forward(actors.online, groups, batch.obs)
    context = one_hot(out0.argmax(-1), d) if discrete else out0.copy()
    sizes = [flatten(p).size for p in actors.online]
    worst = 0.0
    for g in range(groups.n_groups):
        def fn(vec, g=g):
            nets = list(actors.online)
            nets[g] = unflatten(nets[g], vec)
            trial = GroupedActors(groups, nets, actors.target, actors.opt, discrete, d)
            loss, grads, _ = actor_loss(trial, critic, batch, objective, rng=np.random.default_rng(noise_seed),
                                        hard=False, context=context)
            return loss, flatten(grads[g])
        theta = flatten(actors.online[g])
        worst = max(worst, fd_gradcheck(fn, theta, coords=_coords(rng, sizes[g], n_coords)))
    return worst


def gradcheck_suite(seeds=range(20)) -> dict[str, float]:
    """Worst relative error per check over ``seeds``."""
    results: dict[str, float] = {}

    def record(name, err):
        results[name] = max(results.get(name, 0.0), float(err))

    for seed in seeds:
        for kind, acts in NET_KINDS.items():
            record(f"mlp/{kind}", check_mlp(seed, acts))
        record("gqc_loss", check_gqc_loss(seed))
        record("actor/omq_continuous", check_actor_pipeline(seed, False, "omq"))
        record("actor/omq_discrete", check_actor_pipeline(seed, True, "omq"))
        record("actor/dpg_continuous", check_actor_pipeline(seed, False, "dpg"))
    return results
