"""Rollout / update loop for one (config, seed) pair.

Every random draw comes from a named substream of the run seed, so a run
is a pure function of its config and seed. Metrics go to a JSON-lines file
whose first line is a versioned header; wall-clock time is kept out of it
(in a ``.timing.json`` sidecar) so reruns are byte-identical.
"""
from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from ..actors import act, make_actors
from ..baselines import baseline_config, baseline_update, independent_batches
from ..ccga import UpdateParams, UpdateRngs, omdpg_update, sequential_order
from ..errors import NumericalError
from ..gqc import PUConfig, make_ensemble, save_checkpoint
from ..replay import ReplayBuffer, Transition
from .config import RunConfig

log = logging.getLogger(__name__)

SCHEMA = "omdpg.metrics/1"
EVAL_SEED_BASE = 1_000_000
STREAMS = ("init", "env", "explore", "noise", "ood", "actor", "order", "warmup")


class Streams:
    """Independent generators derived from one run seed."""

    def __init__(self, seed: int, n_heads: int):
        for k, name in enumerate(STREAMS):
            setattr(self, name, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,))))
        self.replay = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(100 + h,)))
                       for h in range(n_heads)]


def eval_seeds(count: int) -> list[int]:
    return [EVAL_SEED_BASE + k for k in range(count)]


def evaluate(env, actors, episodes: int) -> dict:
    returns, wins = [], []
    for seed in eval_seeds(episodes):
        state, obs = env.reset(seed)
        total = 0.0
        for _ in range(env.horizon):
            state, obs, r, done = env.step(state, act(actors, obs, "greedy"))
            total += r
            if done:
                break
        returns.append(total)
        wins.append(env.success(total))
    success = None if wins[0] is None else float(np.mean(wins))
    return {"eval_return": float(np.mean(returns)), "eval_return_std": float(np.std(returns)),
            "success": success}


def metrics_path(cfg: RunConfig, seed: int, out_dir) -> Path:
    return Path(out_dir) / f"{cfg.name}_seed{seed}.jsonl"


def run_training(cfg: RunConfig, seed: int, out_dir, fault_hook=None, checkpoint: bool = True) -> Path:
    """Train one seed and return the metrics file path.

    ``fault_hook(step, actors, ensemble)`` runs before every learner step;
    tests use it to corrupt parameters. A non-finite loss or gradient raises
    :class:`NumericalError` after an ``.abort.json`` dump is written and the
    partial metrics file removed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    final = metrics_path(cfg, seed, out_dir)
    partial = final.with_suffix(".jsonl.partial")
    started = time.perf_counter()

    env = cfg.make_env()
    variant = baseline_config(cfg.algo, cfg.n_critics)
    groups = env.groups.regime(variant.sharing)
    streams = Streams(seed, variant.n_critics)
    actors = make_actors(groups, env.obs_dim, env.action_dim, env.discrete, streams.init,
                         tuple(cfg.actor_hidden), cfg.actor_lr, cfg.explore_sigma)
    ensemble = make_ensemble(env.state_dim + env.n_agents * env.action_dim, variant.n_critics, streams.init,
                             tuple(cfg.critic_hidden), cfg.critic_lr)
    capacity, batch_size = cfg.replay_sizes()
    buffer = ReplayBuffer(capacity, env.state_dim, env.n_agents, env.obs_dim, env.action_dim)
    pu = PUConfig(cfg.beta, cfg.lambda_pu, cfg.target_sigma, cfg.target_clip)
    rngs = UpdateRngs(streams.noise, streams.ood, streams.actor)
    separate = independent_batches(variant)

    header = {"schema": SCHEMA, "label": cfg.name, "algo": cfg.algo, "env": cfg.env, "seed": seed,
              "groups": list(groups.assignment), "n_critics": variant.n_critics, "config": cfg.to_dict()}
    records = []
    losses: dict[str, list] = {}
    n_updates = 0
    step = 0

    def temperature(t):
        frac = t / max(cfg.total_steps, 1)
        return cfg.temperature_start + (cfg.temperature_end - cfg.temperature_start) * frac

    try:
        with open(partial, "w") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            state, obs = env.reset(int(streams.env.integers(2 ** 31)))
            for step in range(1, cfg.total_steps + 1):
                if step <= cfg.warmup_steps:
                    action = env.random_action(streams.warmup)
                else:
                    action = act(actors, obs, "explore", streams.explore, temperature(step))
                nstate, nobs, reward, done = env.step(state, action)
                buffer.push(Transition(env.state_vector(state), obs, env.encode(action), reward,
                                       env.state_vector(nstate), nobs, done))
                state, obs = nstate, nobs
                if done:
                    state, obs = env.reset(int(streams.env.integers(2 ** 31)))

                if step > cfg.warmup_steps and step % cfg.update_every == 0 and buffer.ready(batch_size):
                    if fault_hook is not None:
                        fault_hook(step, actors, ensemble)
                    if separate:
                        batches = [buffer.sample(batch_size, r) for r in streams.replay]
                    else:
                        batches = [buffer.sample(batch_size, streams.replay[0])] * variant.n_critics
                    order = sequential_order(groups, cfg.order_mode, streams.order)
                    hp = UpdateParams(pu, cfg.gamma, cfg.tau, temperature(step), order)
                    do_actor = n_updates % cfg.policy_delay == 0
                    # non-finite values are caught explicitly and raise NumericalError
                    with np.errstate(over="ignore", invalid="ignore"):
                        if cfg.algo == "omdpg":
                            info = omdpg_update(actors, ensemble, batches, hp, rngs, do_actor)
                        else:
                            info = baseline_update(variant, actors, ensemble, batches, hp, rngs, do_actor)
                    n_updates += 1
                    for k, v in info.items():
                        losses.setdefault(k, []).append(v)

                if step % cfg.eval_interval == 0:
                    rec = {"step": step, "updates": n_updates}
                    rec.update(evaluate(env, actors, cfg.eval_episodes))
                    for k in ("critic_loss", "actor_loss", "uncertainty"):
                        vals = losses.get(k)
                        rec[k] = float(np.mean(vals)) if vals else None
                    losses = {}
                    records.append(rec)
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
    except NumericalError as exc:
        dump = final.with_suffix(".abort.json")
        dump.write_text(json.dumps({"error": str(exc), "step": step, "seed": seed,
                                    "diagnostics": exc.diagnostics, "records": records},
                                   sort_keys=True, indent=1, default=str))
        partial.unlink(missing_ok=True)
        exc.diagnostics.setdefault("dump", str(dump))
        raise
    partial.replace(final)
    if checkpoint:
        save_checkpoint(final.with_suffix(".ckpt"), ensemble, actors)
    elapsed = time.perf_counter() - started
    final.with_suffix(".timing.json").write_text(json.dumps(
        {"seed": seed, "label": cfg.name, "wall_clock_s": elapsed, "steps": cfg.total_steps,
         "updates": n_updates}, sort_keys=True))
    log.info("%s seed %d finished in %.1fs", cfg.name, seed, elapsed)
    return final


def read_metrics(path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("schema") != SCHEMA:
        raise ValueError(f"{path}: unexpected schema {header.get('schema')!r}")
    return header, [json.loads(x) for x in lines[1:]]
