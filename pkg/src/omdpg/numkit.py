"""Dense-network numerics in float64: forward/backward, Adam, soft updates.

Networks are stored as plain lists of weight and bias arrays. Every function
here returns new arrays instead of mutating its arguments, so the same
parameters can be shared between threads or processes without locking.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError

ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[str, ...]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations must have equal length")
        for j, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {act!r}")
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {j}: weight {w.shape} and bias {b.shape} disagree")
            if j and w.shape[1] != self.weights[j - 1].shape[0]:
                raise ShapeError(f"layer {j} expects {w.shape[1]} inputs, "
                                 f"previous layer emits {self.weights[j - 1].shape[0]}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def depth(self) -> int:
        return len(self.weights)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "MlpParams":
        return MlpParams(list(arrays[0::2]), list(arrays[1::2]), self.activations)

    def copy(self) -> "MlpParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]   # input to each layer
    pre: list[np.ndarray]      # pre-activation of each layer
    post: list[np.ndarray]     # post-activation of each layer
    squeeze: bool = False

    @property
    def depth(self) -> int:
        return len(self.pre)


def init_mlp(sizes: Sequence[int], activations: Sequence[str], rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases. ``sizes`` includes input and output widths."""
    if len(activations) != len(sizes) - 1:
        raise ConfigError("need one activation per layer")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, tuple(activations))


def _activate(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_backward(name, z, a, g):
    if name == "tanh":
        return g * (1.0 - a * a)
    if name == "relu":
        return g * (z > 0.0)
    return g


def mlp_forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on one input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ShapeError(f"input of shape {x.shape} does not match network input width {params.in_dim}")
    inputs, pre, post = [], [], []
    h = x
    for w, b, act in zip(params.weights, params.biases, params.activations):
        inputs.append(h)
        z = h @ w.T + b
        h = _activate(act, z)
        pre.append(z)
        post.append(h)
    out = h[0] if squeeze else h
    return out, ForwardCache(inputs, pre, post, squeeze)


def mlp_backward(params: MlpParams, cache: ForwardCache, grad_output, param_grads: bool = True):
    """Gradients of ``sum(output * grad_output)``.

    Returns ``(grad_params, grad_input)``; parameter gradients are summed over
    the batch. With ``param_grads=False`` only the input gradient is formed,
    which roughly halves the cost when the caller only needs dQ/da.
    """
    if cache.depth != params.depth:
        raise ShapeError("forward cache depth does not match the network")
    g = np.asarray(grad_output, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.post[-1].shape:
        raise ShapeError(f"grad_output {g.shape} does not match cached output {cache.post[-1].shape}")
    gw = [None] * params.depth
    gb = [None] * params.depth
    for j in range(params.depth - 1, -1, -1):
        w = params.weights[j]
        if cache.inputs[j].shape[1] != w.shape[1]:
            raise ShapeError("stale forward cache")
        g = _activation_backward(params.activations[j], cache.pre[j], cache.post[j], g)
        if param_grads:
            gw[j] = g.T @ cache.inputs[j]
            gb[j] = g.sum(axis=0)
        g = g @ w
    grad_input = g[0] if cache.squeeze else g
    grads = MlpParams(gw, gb, params.activations) if param_grads else None
    return grads, grad_input


@dataclass
class OptState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: MlpParams, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> OptState:
    if lr <= 0:
        raise ConfigError("learning rate must be positive")
    zeros = [np.zeros_like(a) for a in params.arrays()]
    return OptState([z.copy() for z in zeros], zeros, 0, lr, beta1, beta2, eps)


def opt_step(state: OptState, params: MlpParams, grads: MlpParams) -> tuple[MlpParams, OptState]:
    """One Adam step. Non-finite gradients are rejected before anything changes."""
    garr = grads.arrays()
    parr = params.arrays()
    if len(garr) != len(parr) or len(state.m) != len(parr):
        raise ShapeError("optimizer state, parameters and gradients disagree")
    for j, (g, p) in enumerate(zip(garr, parr)):
        if g.shape != p.shape:
            raise ShapeError(f"gradient {j} has shape {g.shape}, parameter has {p.shape}")
        if not np.isfinite(g).all():
            raise NumericalError("non-finite gradient", {"array": j, "step": state.step,
                                                         "n_bad": int((~np.isfinite(g)).sum())})
    t = state.step + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    new_p, new_m, new_v = [], [], []
    for g, p, m, v in zip(garr, parr, state.m, state.v):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_p.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = OptState(new_m, new_v, t, state.lr, state.beta1, state.beta2, state.eps)
    return params.with_arrays(new_p), new_state


def soft_update(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    if not 0.0 < tau <= 1.0:
        raise ConfigError(f"tau must lie in (0, 1], got {tau}")
    tarr, oarr = target.arrays(), online.arrays()
    if [a.shape for a in tarr] != [a.shape for a in oarr]:
        raise ShapeError("target and online networks differ in shape")
    if tau == 1.0:
        return online.copy()
    return target.with_arrays([(1.0 - tau) * t + tau * o for t, o in zip(tarr, oarr)])


def add_params(a: MlpParams, b: MlpParams) -> MlpParams:
    return a.with_arrays([x + y for x, y in zip(a.arrays(), b.arrays())])


def zeros_like(params: MlpParams) -> MlpParams:
    return params.with_arrays([np.zeros_like(a) for a in params.arrays()])


def flatten(params: MlpParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.arrays()])


def unflatten(template: MlpParams, vec: np.ndarray) -> MlpParams:
    if sum(a.size for a in template.arrays()) != len(vec):
        raise ShapeError("vector length does not match parameter count")
    out, k = [], 0
    for a in template.arrays():
        out.append(np.asarray(vec[k:k + a.size], dtype=np.float64).reshape(a.shape))
        k += a.size
    return template.with_arrays(out)


def fd_gradcheck(fn: Callable[[np.ndarray], tuple[float, np.ndarray]], point, h: float = 1e-5,
                 coords: Sequence[int] | None = None) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``fn`` maps a flat point to ``(value, analytic_gradient)``. ``coords``
    restricts the check to a subset of coordinates for large parameter vectors.
    """
    if h <= 0:
        raise ConfigError("step h must be positive")
    x = np.array(point, dtype=np.float64).ravel()
    value, grad = fn(x.copy())
    grad = np.asarray(grad, dtype=np.float64).ravel()
    if not np.isfinite(value) or not np.isfinite(grad).all():
        raise NumericalError("non-finite evaluation at the base point")
    idx = range(x.size) if coords is None else coords
    worst = 0.0
    for k in idx:
        xp = x.copy()
        xp[k] += h
        xm = x.copy()
        xm[k] -= h
        fp, _ = fn(xp)
        fm, _ = fn(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError("non-finite evaluation during finite differencing", {"coord": int(k)})
        fd = (fp - fm) / (2.0 * h)
        worst = max(worst, abs(grad[k] - fd) / max(1.0, abs(grad[k])))
    return worst
