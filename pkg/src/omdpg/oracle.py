"""Exact ground truth on enumerable games.

Sequential Q tables, exact marginal values, and a tabular reproduction of
how parameter sharing corrupts the sequential policy-ratio weights.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .actors import softmax
from .envs.base import GroupSpec
from .envs.signal_lever import MAX_ENUMERATION, ExactGame, enumerate_game
from .errors import ConfigError

SCHEMES = ("nops", "parps_drift", "parps_fpb")


@dataclass
class TabularPolicy:
    """Softmax policies over m actions; ``owner[i]`` is the logit row agent i reads.

    Agents pointing at the same row share parameters.
    """

    logits: np.ndarray
    owner: tuple[int, ...]

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=np.float64)
        self.owner = tuple(int(k) for k in self.owner)

    @classmethod
    def independent(cls, logits) -> "TabularPolicy":
        logits = np.asarray(logits, dtype=np.float64)
        return cls(logits, tuple(range(len(logits))))

    @classmethod
    def shared(cls, group_logits, groups: GroupSpec) -> "TabularPolicy":
        return cls(group_logits, groups.assignment)

    @property
    def n_agents(self) -> int:
        return len(self.owner)

    def probs(self, agent: int) -> np.ndarray:
        return softmax(self.logits[self.owner[agent]])

    def greedy(self, agent: int) -> int:
        return int(self.logits[self.owner[agent]].argmax())

    def copy(self) -> "TabularPolicy":
        return TabularPolicy(self.logits.copy(), self.owner)


def _check_size(game: ExactGame):
    if game.payoff.size > MAX_ENUMERATION:
        raise ConfigError("game too large to enumerate")


def exact_q(game: ExactGame, policy: TabularPolicy, order=None) -> list[np.ndarray]:
    """Sequential Q tables ``Q[i]`` over the first i agents in ``order``.

    ``Q[n]`` is the payoff (axes permuted into ``order``), ``Q[i]`` averages
    the remaining agents under ``policy`` and ``Q[0]`` is the state value V.
    """
    _check_size(game)
    order = tuple(range(game.n_agents)) if order is None else tuple(order)
    tables = [None] * (game.n_agents + 1)
    q = np.transpose(game.payoff, order)
    tables[-1] = q
    for k in range(game.n_agents - 1, -1, -1):
        q = q @ policy.probs(order[k])
        tables[k] = q
    return tables


def exact_omq(game: ExactGame, policy: TabularPolicy, position: int, prefix, order=None) -> float:
    """Exact marginal value of agent ``order[position]`` for prefix actions ``prefix``.

    ``prefix`` lists the actions of ``order[:position + 1]``. Later agents
    play their greedy (argmax) actions; the baseline puts action 0 in the
    credited slot.
    """
    order = tuple(range(game.n_agents)) if order is None else tuple(order)
    if len(prefix) != position + 1:
        raise ConfigError("prefix must cover positions 0..position")
    a = np.zeros(game.n_agents, dtype=int)
    for k, agent in enumerate(order):
        a[agent] = prefix[k] if k <= position else policy.greedy(agent)
    base = a.copy()
    base[order[position]] = 0
    return float(game.payoff[tuple(a)] - game.payoff[tuple(base)])


def _ascent_direction(game, old: TabularPolicy, updated: list, position: int, order, tables):
    """Gradient of agent order[position]'s exact surrogate w.r.t. its own logits.

    Surrogate: sum over a_{1:k} of pi_bar_{1:k-1} * pi_k(a_k) * (Q_k - V), with
    Q_k taken under the pre-update joint policy and pi_bar the updated
    policies of the agents already processed.
    """
    k = position
    adv = tables[k + 1] - tables[0]
    for j in range(k):
        adv = np.tensordot(updated[j], adv, axes=([0], [0]))
    return adv


def _softmax_grad(logits, g):
    p = softmax(logits)
    return p * (g - p @ g)


@dataclass
class RatioReport:
    joint_action: tuple[int, ...]
    order: tuple[int, ...]
    groups: tuple[int, ...]
    lr: float
    ratios: dict = field(default_factory=dict)     # scheme -> (n,) F per agent

    def log_gap(self, agent: int, scheme: str = "parps_drift", reference: str = "parps_fpb") -> float:
        return float(abs(np.log(self.ratios[scheme][agent]) - np.log(self.ratios[reference][agent])))

    @property
    def drift_gap(self) -> float:
        """|log F - log F_FPB| for the agent in the third position under drift."""
        return self.log_gap(self.order[2])

    @property
    def nops_gap(self) -> float:
        return max(self.log_gap(i, "nops") for i in range(len(self.order)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["agent", "position", "group", "scheme", "F", "log_F"])
        pos = {a: k for k, a in enumerate(self.order)}
        for i in range(len(self.order)):
            for scheme in SCHEMES:
                f = float(self.ratios[scheme][i])
                w.writerow([i, pos[i], self.groups[i], scheme, repr(f), repr(float(np.log(f)))])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"joint action {self.joint_action}, order {self.order}, groups {self.groups}, lr {self.lr}"]
        for i in self.order:
            cells = ", ".join(f"{s}={self.ratios[s][i]:.6f}" for s in SCHEMES)
            lines.append(f"agent {i}: {cells}")
        lines.append(f"|log F_drift - log F_fpb| at position 3: {self.drift_gap:.6g}")
        lines.append(f"max |log F_nops - log F_fpb|: {self.nops_gap:.6g}")
        return "\n".join(lines) + "\n"


def ratio_diagnostic(game: ExactGame, group_logits=None, lr: float = 0.1, joint_action=None,
                     order=None) -> RatioReport:
    """Sequential-ratio weights F_i under three update schemes.

    One exact gradient-ascent step per agent, in order. ``nops`` gives every
    agent private logits. Under parameter sharing, the update of an earlier
    group-mate moves a later agent's policy before its turn; ``parps_drift``
    forms that agent's weight from the drifted pre-update policy it actually
    starts from (prefix ratio times its own drift pi'(a_i) / pi(a_i)), while
    ``parps_fpb`` forms every weight from pre-update snapshots taken before
    any update. All schemes start from the same per-group logits.
    """
    groups = game.groups
    n, m = game.n_agents, game.n_actions
    order = groups.ordering if order is None else tuple(order)
    if group_logits is None:
        group_logits = np.zeros((groups.n_groups, m))
    group_logits = np.asarray(group_logits, dtype=np.float64)
    if joint_action is None:
        joint_action = enumerate_game(game)[1]
    joint_action = tuple(int(a) for a in joint_action)

    old_shared = TabularPolicy.shared(group_logits, groups)
    old_private = TabularPolicy.independent(group_logits[list(groups.assignment)])
    report = RatioReport(joint_action, tuple(order), groups.assignment, lr)

    for scheme in SCHEMES:
        old = old_private if scheme == "nops" else old_shared
        tables = exact_q(game, old, order)
        live = old.copy()
        updated = []          # post-update probability vectors, by position
        F = np.ones(n)
        for k, agent in enumerate(order):
            a = joint_action
            prefix = 1.0
            for j in range(k):
                prefix *= updated[j][a[order[j]]] / old.probs(order[j])[a[order[j]]]
            if scheme == "parps_drift":
                prefix *= live.probs(agent)[a[agent]] / old.probs(agent)[a[agent]]
            F[agent] = prefix
            g = _ascent_direction(game, old, updated, k, order, tables)
            row = live.owner[agent]
            live.logits[row] = live.logits[row] + lr * _softmax_grad(live.logits[row], g)
            updated.append(live.probs(agent))
        report.ratios[scheme] = F
    return report


def exact_q_head(game: ExactGame, policy: TabularPolicy, state_dim: int = 1):
    """Critic head backed by the exact full-joint Q table of ``game`` under ``policy``.

    Rows are ``[state (state_dim), one-hot action of agent 0, ..., agent n-1]``;
    the state part is ignored because the game is stateless.
    """
    table = exact_q(game, policy)[-1]
    n, m = game.n_agents, game.n_actions

    def head(x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        onehots = x[:, state_dim:].reshape(len(x), n, m)
        if not np.isin(onehots, (0.0, 1.0)).all() or not (onehots.sum(axis=-1) == 1.0).all():
            raise ConfigError("exact table head needs one-hot joint actions")
        idx = onehots.argmax(axis=-1)
        return table[tuple(idx.T)]
    return head
