import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omdpg.actors import (act, greedy_actions, make_actors, policy_forward, relaxed_backward, relaxed_one_hot,
                          smoothed_target_actions, softmax, tabular_actors)
from omdpg.baselines import (VARIANTS, baseline_config, baseline_update, effective_pu, independent_batches)
from omdpg.ccga import (UpdateParams, UpdateRngs, actor_loss, greedy_completion, omdpg_update, omq,
                        sequential_order)
from omdpg.envs.base import GroupSpec
from omdpg.errors import ConfigError
from omdpg.gqc import CriticEnsemble, PUConfig, make_ensemble
from omdpg.numkit import flatten
from omdpg.replay import Batch
from omdpg.verify import check_actor_pipeline

N, OBS, D, SD = 3, 4, 2, 5
GROUPS = GroupSpec((0, 1, 0))


def make_batch(rng, B=16, discrete=False):
    if discrete:
        action = np.eye(D)[rng.integers(0, D, size=(B, N))]
    else:
        action = rng.uniform(-1, 1, size=(B, N, D))
    return Batch(rng.normal(size=(B, SD)), rng.normal(size=(B, N, OBS)), action, rng.normal(size=B),
                 rng.normal(size=(B, SD)), rng.normal(size=(B, N, OBS)), np.zeros(B))


def setup(seed=0, discrete=False, heads=3, groups=GROUPS):
    rng = np.random.default_rng(seed)
    actors = make_actors(groups, OBS, D, discrete, rng, hidden=(8,))
    ens = make_ensemble(SD + N * D, heads, rng, hidden=(16,))
    return rng, actors, ens


# ---- actors ------------------------------------------------------------------------------

def test_shared_group_members_use_one_network():
    rng, actors, _ = setup()
    obs = rng.normal(size=(N, OBS))
    obs[2] = obs[0]
    out, _ = policy_forward(actors.online, GROUPS, obs)
    np.testing.assert_array_equal(out[0], out[2])
    assert not np.array_equal(out[0], out[1])
    assert actors.net_for(0) is actors.net_for(2)


def test_continuous_actions_in_box():
    rng, actors, _ = setup()
    obs = rng.normal(size=(N, OBS)) * 50
    for mode in ("greedy", "explore"):
        a = act(actors, obs, mode, rng)
        assert a.shape == (N, D) and (np.abs(a) <= 1.0).all()


def test_explore_noise_is_truncated():
    rng, actors, _ = setup()
    actors.explore_sigma = 0.1
    obs = rng.normal(size=(N, OBS))
    greedy = act(actors, obs, "greedy")
    for _ in range(200):
        diff = act(actors, obs, "explore", rng) - greedy
        assert (np.abs(diff) <= 0.2 + 1e-12).all()


def test_discrete_actions_are_indices():
    rng, actors, _ = setup(discrete=True)
    obs = rng.normal(size=(N, OBS))
    g = act(actors, obs, "greedy")
    assert g.dtype.kind == "i" and g.shape == (N,)
    e = act(actors, obs, "explore", rng)
    assert ((0 <= e) & (e < D)).all()


def test_target_smoothing_clip():
    rng, actors, _ = setup()
    obs = rng.normal(size=(500, N, OBS))
    base = greedy_actions(actors, obs, "target")
    noisy = smoothed_target_actions(actors, obs, sigma=10.0, clip=0.05, rng=rng)
    assert (np.abs(noisy - base) <= 0.05 + 1e-12).all()


def test_relaxed_one_hot_and_backward():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(5, 4))
    hard, soft = relaxed_one_hot(logits, None, 0.7)
    np.testing.assert_array_equal(hard.argmax(-1), logits.argmax(-1))
    np.testing.assert_allclose(soft, softmax(logits, 0.7))
    g = rng.normal(size=(5, 4))
    # analytic softmax Jacobian-vector product against central differences
    eps = 1e-6
    fd = np.zeros_like(logits)
    for idx in np.ndindex(logits.shape):
        lp, lm = logits.copy(), logits.copy()
        lp[idx] += eps
        lm[idx] -= eps
        fd[idx] = ((softmax(lp, 0.7) - softmax(lm, 0.7)) * g).sum() / (2 * eps)
    np.testing.assert_allclose(relaxed_backward(soft, g, 0.7), fd, atol=1e-8)


def test_tabular_actors_reproduce_logits():
    logits = np.arange(9.0).reshape(3, 3)[:, ::-1]
    actors = tabular_actors(GROUPS, logits)
    out, _ = policy_forward(actors.online, GROUPS, np.eye(3))
    np.testing.assert_array_equal(out, logits)


# ---- sequential order and OMQ ------------------------------------------------------------

def test_sequential_order_modes():
    g = GroupSpec((0, 1, 0), ordering=(2, 0, 1))
    assert sequential_order(g) == (2, 0, 1)
    rng = np.random.default_rng(0)
    seen = {sequential_order(g, "shuffled", rng) for _ in range(200)}
    assert len(seen) == 6
    with pytest.raises(ConfigError):
        sequential_order(g, "sorted")


def test_greedy_completion_positions():
    rng, actors, _ = setup()
    obs = rng.normal(size=(N, OBS))
    greedy = greedy_actions(actors, obs)
    order = (1, 2, 0)
    np.testing.assert_array_equal(greedy_completion(actors, obs, 0, order), greedy[[2, 0]])
    assert greedy_completion(actors, obs, 2, order).shape == (0, D)
    with pytest.raises(ConfigError):
        greedy_completion(actors, obs, 3, order)


def test_omq_no_op_gives_zero():
    rng, actors, ens = setup()
    s = rng.normal(size=SD)
    joint = rng.uniform(-1, 1, size=(N, D))
    joint[1] = 0.0
    comp = greedy_completion(actors, np.zeros((N, OBS)), 1)
    v = omq(ens, s, joint, 1, comp, (0, 1, 2), np.zeros(D)).values
    np.testing.assert_array_equal(v, np.zeros(3))


def test_omq_linear_critic_closed_form():
    w = np.random.default_rng(1).normal(size=SD + N * D)
    head = lambda x: np.atleast_2d(x) @ w  # noqa: E731
    joint = np.random.default_rng(2).uniform(-1, 1, size=(N, D))
    for pos, agent in enumerate((2, 0, 1)):
        comp = np.zeros((N - pos - 1, D))
        v = omq([head, head], np.zeros(SD), joint, pos, comp, (2, 0, 1), np.zeros(D)).values
        expected = w[SD + agent * D:SD + (agent + 1) * D] @ joint[agent]
        np.testing.assert_allclose(v, expected, atol=1e-12)


# ---- actor objective ---------------------------------------------------------------------

@pytest.mark.parametrize("discrete,objective", [(False, "omq"), (True, "omq"), (False, "dpg")])
def test_actor_gradient_matches_fd(discrete, objective):
    for seed in range(3):
        assert check_actor_pipeline(seed, discrete, objective) < 1e-4


def test_actor_loss_takes_min_over_heads():
    rng, actors, ens = setup()
    batch = make_batch(rng)
    loss, _, info = actor_loss(actors, ens, batch, "dpg")
    # recompute with explicit loops
    out, _ = policy_forward(actors.online, GROUPS, batch.obs)
    total = 0.0
    for i in range(N):
        joint = batch.action.copy()
        joint[:, i] = out[:, i]
        x = np.concatenate([batch.state, joint.reshape(len(joint), -1)], axis=1)
        qs = np.stack([_q(h, x) for h in ens.online])
        total += qs.min(axis=0).sum()
    assert loss == pytest.approx(-total / (N * len(batch)), rel=1e-12)
    assert info["actor_loss"] == loss


def _q(head, x):
    h = x
    for w, b, a in zip(head.weights, head.biases, head.activations):
        h = h @ w.T + b
        if a == "relu":
            h = np.maximum(h, 0.0)
    return h[:, 0]


def test_unknown_actor_objective():
    rng, actors, ens = setup()
    with pytest.raises(ConfigError):
        actor_loss(actors, ens, make_batch(rng), "ppo")


def test_stub_heads_cannot_drive_actor_gradients():
    rng, actors, _ = setup()
    stub = CriticEnsemble([lambda x: np.zeros(len(x))] * 2, [lambda x: np.zeros(len(x))] * 2)
    with pytest.raises(ConfigError):
        actor_loss(actors, stub, make_batch(rng))


def test_default_context_is_current_greedy_action():
    rng, actors, ens = setup()
    batch = make_batch(rng)
    out, _ = policy_forward(actors.online, actors.groups, batch.obs)
    loss, grads, _ = actor_loss(actors, ens, batch, "omq")
    loss2, grads2, _ = actor_loss(actors, ens, batch, "omq", context=out.copy())
    assert loss == loss2
    for a, b in zip(grads, grads2):
        np.testing.assert_allclose(flatten(a), flatten(b), atol=1e-12)


# ---- update steps and baselines ----------------------------------------------------------

def hp(lam=0.1, order=None):
    return UpdateParams(PUConfig(lambda_pu=lam), gamma=0.9, tau=0.01, order=order)


def rngs(seed=0):
    return UpdateRngs(*(np.random.default_rng(seed + k) for k in range(3)))


def test_omdpg_update_moves_everything():
    rng, actors, ens = setup()
    before_a = [flatten(p) for p in actors.online]
    before_t = [flatten(p) for p in ens.target]
    info = omdpg_update(actors, ens, [make_batch(rng) for _ in range(3)], hp(), rngs())
    assert set(info) >= {"critic_loss", "uncertainty", "actor_loss"}
    assert all(not np.array_equal(a, flatten(p)) for a, p in zip(before_a, actors.online))
    assert all(not np.array_equal(a, flatten(p)) for a, p in zip(before_t, ens.target))


def test_delayed_step_skips_actor_and_targets():
    rng, actors, ens = setup()
    before_a = [flatten(p) for p in actors.online]
    before_t = [flatten(p) for p in ens.target]
    info = omdpg_update(actors, ens, [make_batch(rng) for _ in range(3)], hp(), rngs(), do_actor=False)
    assert "actor_loss" not in info
    for a, p in zip(before_a, actors.online):
        np.testing.assert_array_equal(a, flatten(p))
    for a, p in zip(before_t, ens.target):
        np.testing.assert_array_equal(a, flatten(p))


def test_variant_table():
    table = {v: (c.sharing, c.actor_objective, c.critic_objective, c.n_critics)
             for v in VARIANTS for c in [baseline_config(v, 5)]}
    assert table["omdpg"] == ("parps", "omq", "gqc", 5)
    assert table["matd3-nops"] == ("nops", "dpg", "twin", 2)
    assert table["matd3-fups"] == ("fups", "dpg", "twin", 2)
    assert table["matd3-parps-omq"] == ("parps", "omq", "twin", 2)
    assert table["matd3-parps-gqc"] == ("parps", "dpg", "gqc", 5)
    assert independent_batches(baseline_config("omdpg")) and not independent_batches(baseline_config("matd3-parps"))
    with pytest.raises(ConfigError):
        baseline_config("maddpg")
    with pytest.raises(ConfigError):
        baseline_config("omdpg", 1)


def test_plain_matd3_ignores_pu():
    assert effective_pu(baseline_config("matd3-parps"), PUConfig(lambda_pu=0.5)).lambda_pu == 0.0
    assert effective_pu(baseline_config("matd3-parps-omq"), PUConfig(lambda_pu=0.5)).lambda_pu == 0.5


def _critic_after(variant, lam, seed=3):
    cfg = baseline_config(variant)
    rng, actors, ens = setup(seed, heads=cfg.n_critics)
    batch = make_batch(np.random.default_rng(seed + 100))
    baseline_update(cfg, actors, ens, [batch] * cfg.n_critics, hp(lam), rngs(seed), do_actor=False)
    return [flatten(h) for h in ens.online]


def test_omq_variant_with_zero_pu_matches_matd3_critic():
    a = _critic_after("matd3-parps-omq", 0.0)
    b = _critic_after("matd3-parps", 0.3)
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()


def test_omq_variant_with_pu_differs():
    a = _critic_after("matd3-parps-omq", 0.3)
    b = _critic_after("matd3-parps", 0.3)
    assert any(not np.array_equal(x, y) for x, y in zip(a, b))


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(VARIANTS), st.integers(0, 1000))
def test_every_variant_updates_finitely(variant, seed):
    cfg = baseline_config(variant, 3)
    groups = GROUPS.regime(cfg.sharing)
    rng, actors, ens = setup(seed, heads=cfg.n_critics, groups=groups)
    batches = [make_batch(rng) for _ in range(cfg.n_critics)]
    info = baseline_update(cfg, actors, ens, batches, hp(), rngs(seed))
    assert np.isfinite(info["critic_loss"]) and np.isfinite(info["actor_loss"])
    assert len(actors.online) == groups.n_groups
