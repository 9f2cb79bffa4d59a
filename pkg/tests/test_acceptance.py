"""End-to-end acceptance checks, one test per criterion.

Each test records a single ``criterion N: PASS|FAIL | detail`` line that is
echoed in the pytest terminal summary. The learning criteria (6 to 8) read
cached multi-seed runs from ``acceptance_runs/`` (see tests/acceptance_runs.py)
and train them first if the cache is cold, which takes a few hours on one core.
"""
import itertools
import time

import numpy as np
import pytest

from acceptance_runs import RUN_SETS, SEEDS, ensure, seed_scores
from omdpg.actors import tabular_actors
from omdpg.ccga import greedy_completion, omq
from omdpg.envs import ExactGame, GroupSpec, TeamReachHet, signal_lever_game
from omdpg.envs.teamreach import random_policy_return, scripted_oracle_return
from omdpg.gqc import CriticEnsemble, PUConfig, pu_target, uncertainty
from omdpg.harness import RunConfig, run_training, sweep
from omdpg.harness.training import eval_seeds
from omdpg.oracle import TabularPolicy, exact_omq, exact_q, exact_q_head, ratio_diagnostic
from omdpg.verify import gradcheck_suite

REACH_WINDOW = 5        # eval records averaged per seed for TeamReach scores


def test_criterion_1_gradient_suite(verdict):
    t = time.perf_counter()
    errors = gradcheck_suite(range(20))
    elapsed = time.perf_counter() - t
    worst = max(errors.values())
    ok = worst < 1e-4 and elapsed < 60
    verdict(1, ok, f"max relative error {worst:.2e} over {len(errors)} checks x 20 seeds, {elapsed:.1f}s")
    assert ok


def test_criterion_2_omq_equivalence(verdict):
    t = time.perf_counter()
    game = signal_lever_game()
    n, m = game.n_agents, game.n_actions
    logits = np.random.default_rng(11).normal(size=(n, m))
    policy = TabularPolicy.independent(logits)
    head = exact_q_head(game, policy)
    actors = tabular_actors(game.groups, logits)
    order = tuple(range(n))
    obs, eye = np.eye(n), np.eye(m)
    worst, cases = 0.0, 0
    for pos in range(n):
        completion = greedy_completion(actors, obs, pos, order)
        for prefix in itertools.product(range(m), repeat=pos + 1):
            joint = np.zeros((n, m))
            for k, act in enumerate(prefix):
                joint[order[k]] = eye[act]
            got = omq([head, head], np.zeros(1), joint, pos, completion, order, eye[0]).values
            worst = max(worst, float(np.abs(got - exact_omq(game, policy, pos, prefix, order)).max()))
            cases += 1
    elapsed = time.perf_counter() - t
    ok = worst <= 1e-12 and elapsed < 10
    verdict(2, ok, f"max |omq - exact| {worst:.1e} over {cases} (position, prefix) cases, {elapsed:.2f}s")
    assert ok


def test_criterion_3_drift(verdict):
    t = time.perf_counter()
    game = signal_lever_game()
    big = ratio_diagnostic(game, lr=0.1)
    tiny = ratio_diagnostic(game, lr=1e-6)
    elapsed = time.perf_counter() - t
    ok = big.drift_gap > 0.01 and big.nops_gap == 0.0 and tiny.drift_gap < big.drift_gap and elapsed < 1
    verdict(3, ok, f"ParPS gap {big.drift_gap:.5f} at lr 0.1, {tiny.drift_gap:.2e} at lr 1e-6, "
                   f"NoPS gap {big.nops_gap}, {elapsed:.3f}s")
    assert ok


def _const(c):
    return lambda x: np.full(len(np.atleast_2d(x)), float(c))


def test_criterion_4_pu_properties(verdict):
    t = time.perf_counter()
    rng = np.random.default_rng(4)
    failures = 0
    for _ in range(200):
        q = rng.normal(size=(int(rng.integers(2, 7)), 8))
        q[:, :3] = q[0, :3]                       # some columns where every head agrees
        u = uncertainty(q)
        failures += int((u < 0).any() or (u[:3] != 0).any() or (u[3:] <= 0).any())
    s, a = np.zeros((1, 5)), np.zeros((1, 3, 2))
    betas = np.linspace(0.0, 2.0, 21)
    for _ in range(50):
        values = rng.normal(size=int(rng.integers(2, 7)))
        ens = CriticEnsemble([_const(v) for v in values], [_const(v) for v in values])
        head = int(rng.integers(len(values)))
        ys = [pu_target(ens, s, a, head, PUConfig(beta=b))[0] for b in betas]
        failures += int(any(y2 > y1 for y1, y2 in zip(ys, ys[1:])) or ys[0] != values[head])
    elapsed = time.perf_counter() - t
    ok = failures == 0 and elapsed < 1
    verdict(4, ok, f"{failures} violations over 200 spread and 50 beta-grid cases, {elapsed:.3f}s")
    assert ok


def test_criterion_5_telescoping(verdict):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        n, m = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        _, labels = np.unique(rng.integers(0, 2, size=n), return_inverse=True)
        game = ExactGame(rng.normal(size=(m,) * n), GroupSpec(tuple(int(g) for g in labels)))
        policy = TabularPolicy.independent(rng.normal(size=(n, m)))
        order = tuple(int(i) for i in rng.permutation(n))
        tables = exact_q(game, policy, order)
        a = tuple(int(x) for x in rng.integers(0, m, size=n))
        a_ord = tuple(a[i] for i in order)
        steps = sum(tables[k + 1][a_ord[:k + 1]] - tables[k][a_ord[:k]] for k in range(n))
        worst = max(worst, abs(steps - (game.payoff[a] - tables[0])))
    ok = worst < 1e-10
    verdict(5, ok, f"max telescoping error {worst:.1e} over 100 random games")
    assert ok


@pytest.mark.slow
def test_criterion_6_signal_lever_learning(verdict):
    ours = seed_scores("signal-omdpg", "success")
    base = seed_scores("signal-matd3-parps", "success")
    cfg = RunConfig(**RUN_SETS["signal-omdpg"])
    wall = sum(ensure("signal-omdpg")["wall_clock"].values()) + sum(ensure("signal-matd3-parps")["wall_clock"].values())
    ok = ours.mean() >= 0.95 and ours.mean() >= base.mean() and cfg.total_steps <= 50_000 and wall < 600
    verdict(6, ok, f"OMDPG success {ours.mean():.3f} (per seed {np.round(ours, 2).tolist()}), "
                   f"MATD3-ParPS {base.mean():.3f}, {cfg.total_steps} steps, {wall:.0f}s for both")
    assert ok


def reach_references():
    env = TeamReachHet()
    seeds = eval_seeds(100)
    rng = np.random.default_rng(0)
    oracle = float(np.mean([scripted_oracle_return(env, s) for s in seeds]))
    random = float(np.mean([random_policy_return(env, s, rng) for s in seeds]))
    return oracle, random


@pytest.mark.slow
def test_criterion_7_teamreach_learning(verdict):
    ours = seed_scores("reach-omdpg", "eval_return", REACH_WINDOW)
    base = seed_scores("reach-matd3-parps", "eval_return", REACH_WINDOW)
    oracle, random = reach_references()
    score = (ours.mean() - random) / (oracle - random)
    steps = RunConfig(**RUN_SETS["reach-omdpg"]).total_steps
    per_seed = {name: max(ensure(name)["wall_clock"].values()) for name in ("reach-omdpg", "reach-matd3-parps")}
    ok = score >= 0.85 and ours.mean() > base.mean() and max(per_seed.values()) < 1800
    verdict(7, ok, f"OMDPG return {ours.mean():.2f} (normalised {score:.3f} of scripted oracle {oracle:.2f} "
                   f"over random {random:.2f}, needs 0.85), MATD3-ParPS {base.mean():.2f}, {steps} steps, "
                   f"slowest seed {max(per_seed.values()):.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_8_ablation_direction(verdict):
    c5 = seed_scores("reach-omdpg", "eval_return", REACH_WINDOW).mean()
    c2 = seed_scores("reach-omdpg-c2", "eval_return", REACH_WINDOW).mean()
    pu_low = seed_scores("reach-omdpg-pu001", "eval_return", REACH_WINDOW).mean()
    ok = c5 >= c2 and c5 >= pu_low
    verdict(8, ok, f"5 heads {c5:.2f} vs 2 heads {c2:.2f}; PU weight 0.1 {c5:.2f} vs 0.01 {pu_low:.2f} "
                   f"({len(SEEDS)} seeds each)")
    assert ok


def test_criterion_9_determinism(tmp_path, verdict):
    short = dict(total_steps=400, warmup_steps=100, eval_interval=100, eval_episodes=2,
                 critic_hidden=[32, 32], actor_hidden=[32, 32], batch_size=32)
    configs = [RunConfig(env="signal_lever", algo="omdpg", **short),
               RunConfig(env="signal_lever", algo="matd3-nops", **short),
               RunConfig(env="teamreach_het", algo="omdpg", env_params={"horizon": 10}, **short),
               RunConfig(env="teamreach_het", algo="matd3-parps-gqc", env_params={"horizon": 10}, **short)]
    mismatches = 0
    for k, cfg in enumerate(configs):
        a = run_training(cfg, 7, tmp_path / f"a{k}").read_bytes()
        b = run_training(cfg, 7, tmp_path / f"b{k}").read_bytes()
        mismatches += a != b
    serial = sweep(configs[2], [0, 1, 2], tmp_path / "serial", workers=1)
    pooled = sweep(configs[2], [0, 1, 2], tmp_path / "pooled", workers=3)
    sweep_diff = sum(serial.paths[s].read_bytes() != pooled.paths[s].read_bytes() for s in (0, 1, 2))
    ok = mismatches == 0 and sweep_diff == 0 and serial.ok and pooled.ok
    verdict(9, ok, f"{mismatches}/{len(configs)} reruns differ, {sweep_diff}/3 files differ between "
                   f"serial and 3-worker sweeps")
    assert ok
