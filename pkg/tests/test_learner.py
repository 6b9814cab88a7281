import dataclasses

import numpy as np
import pytest

from dronepatrol import env as E
from dronepatrol.learner import (Adam, DivergenceError, NetworkParams, ReplayMemory,
                                 TabularMDP, TrainConfig, Transition, batch_targets,
                                 double_dqn_target, epsilon_at, forward, init_params,
                                 load_weights, loss_and_grads, q_iteration, save_weights,
                                 select_action, soft_update, target_network_target,
                                 train_batch, train_run)
from dronepatrol.learner.network import LAYERS, conv_output_size

from oracles import naive_forward

TINY = dict(obs_size=8, filters=2, kernel=4, stride=2, hidden=(8, 8))


def const_q_net(q, channels=2, obs_size=8):
    """Network whose output is ``q`` for every input (all weights zero)."""
    p = init_params(channels, np.random.default_rng(0), obs_size=obs_size, filters=2,
                    kernel=4, hidden=(4, 4))
    for name in LAYERS:
        getattr(p, name)[...] = 0
    p.out_b[...] = q
    return p


def pad_q(head):
    q = np.full(12, -100.0, dtype=np.float32)
    q[:len(head)] = head
    return q


# ---------------------------------------------------------------------------
# network


def test_conv_output_size():
    assert conv_output_size(64, 8, 2) == 29
    p = init_params(2, np.random.default_rng(0))
    assert p.fc1_w.shape == (29 * 29 * 16, 1024)
    assert p.out_w.shape == (1024, 12)
    assert p.input_size == 64 and p.channels == 2


def test_zero_weights_zero_output():
    p = const_q_net(np.zeros(12))
    obs = np.random.default_rng(1).random((8, 8, 2))
    assert np.array_equal(forward(p, obs), np.zeros(12, np.float32))


def test_forward_matches_naive_loops():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        p = init_params(3, rng, obs_size=12, filters=3, kernel=4, stride=2, hidden=(10, 7))
        for name in ("conv_b", "fc1_b", "fc2_b", "out_b"):
            getattr(p, name)[...] = rng.normal(0, 0.1, getattr(p, name).shape)
        obs = rng.random((12, 12, 3)).astype(np.float32)
        np.testing.assert_allclose(forward(p, obs), naive_forward(p, obs), rtol=1e-5, atol=1e-6)
        batch = rng.random((5, 12, 12, 3)).astype(np.float32)
        q = forward(p, batch)
        for i in range(5):
            np.testing.assert_allclose(q[i], naive_forward(p, batch[i]), rtol=1e-5, atol=1e-6)


def test_forward_shape_errors():
    p = init_params(2, np.random.default_rng(0), **TINY)
    with pytest.raises(ValueError):
        forward(p, np.zeros((8, 8, 3)))
    with pytest.raises(ValueError):
        forward(p, np.zeros((9, 9, 2)))


def grad_check_error(seed):
    rng = np.random.default_rng(seed)
    p = init_params(2, rng, dtype=np.float64, **TINY)
    for name in ("conv_b", "fc1_b", "fc2_b", "out_b"):
        getattr(p, name)[...] = rng.normal(0, 0.1, getattr(p, name).shape)
    obs = rng.random((4, 8, 8, 2))
    actions = rng.integers(0, 12, 4)
    targets = rng.normal(0, 1, 4)
    _, grads = loss_and_grads(p, obs, actions, targets)
    h = 1e-6
    worst = 0.0
    for name in LAYERS:
        w = getattr(p, name)
        num = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            lp, _ = loss_and_grads(p, obs, actions, targets)
            w[idx] = old - h
            lm, _ = loss_and_grads(p, obs, actions, targets)
            w[idx] = old
            num[idx] = (lp - lm) / (2 * h)
        a = grads[name]
        denom = np.linalg.norm(a) + np.linalg.norm(num)
        if denom > 0:
            worst = max(worst, float(np.linalg.norm(a - num) / denom))
    return worst


def test_gradient_check_float64():
    assert grad_check_error(0) < 1e-6


def test_single_transition_loss_by_hand():
    p = init_params(2, np.random.default_rng(3), **TINY)
    obs = np.random.default_rng(4).random((1, 8, 8, 2)).astype(np.float32)
    q = forward(p, obs)[0]
    loss, _ = loss_and_grads(p, obs, np.array([5]), np.array([0.75]))
    assert loss == pytest.approx((0.75 - float(q[5])) ** 2, rel=1e-6)


def test_adam_zero_gradient_is_noop():
    p = init_params(2, np.random.default_rng(0), **TINY)
    before = p.copy()
    obs = np.random.default_rng(1).random((3, 8, 8, 2)).astype(np.float32)
    acts = np.array([0, 4, 11])
    y = forward(p, obs)[np.arange(3), acts].astype(np.float64)
    loss, grads = loss_and_grads(p, obs, acts, y)
    assert loss == 0.0
    Adam(p).step(p, grads)
    for name in LAYERS:
        assert np.abs(getattr(p, name) - getattr(before, name)).max() <= 1e-10


def test_adam_first_step_magnitude():
    p = init_params(2, np.random.default_rng(0), **TINY)
    before = p.copy()
    g = {k: np.full_like(v, 0.5) for k, v in p.arrays().items()}
    Adam(p, lr=1e-3).step(p, g)
    # the bias-corrected first step moves every weight by ~lr
    np.testing.assert_allclose(before.fc1_w - p.fc1_w, 1e-3, rtol=1e-4)


# ---------------------------------------------------------------------------
# targets, selection, soft update


def test_double_dqn_fixture():
    online = const_q_net(pad_q([1, 3, 2]))
    target = const_q_net(pad_q([5, 0, 7]))
    obs = np.zeros((8, 8, 2), np.float32)
    tr = Transition(obs, 0, 1.0, obs)
    assert double_dqn_target(online, target, tr, 0.99) == 1.0
    assert double_dqn_target(online, target, tr, 0.0) == 1.0
    assert target_network_target(target, tr, 0.99) == pytest.approx(1 + 0.99 * 7)
    y = batch_targets(online, target, np.array([1.0, 2.0]), np.stack([obs, obs]), 0.99)
    np.testing.assert_array_equal(y, [1.0, 2.0])
    y = batch_targets(online, target, np.array([1.0]), obs[None], 0.99, rule="target")
    assert y[0] == pytest.approx(1 + 0.99 * 7)


def test_double_equals_target_rule_for_identical_nets():
    p = init_params(2, np.random.default_rng(5), **TINY)
    rng = np.random.default_rng(6)
    for _ in range(10):
        tr = Transition(rng.random((8, 8, 2)), int(rng.integers(12)), float(rng.normal()),
                        rng.random((8, 8, 2)))
        assert double_dqn_target(p, p, tr, 0.9) == target_network_target(p, tr, 0.9)


def test_select_action_greedy_and_ties():
    obs = np.zeros((8, 8, 2), np.float32)
    rng = np.random.default_rng(0)
    q = np.zeros(12)
    q[11] = 5
    assert select_action(const_q_net(q), obs, 0.0, rng) == 11
    q = np.zeros(12)
    q[2] = q[7] = 3
    assert select_action(const_q_net(q), obs, 0.0, rng) == 2


def test_select_action_uniform_when_exploring():
    obs = np.zeros((8, 8, 2), np.float32)
    p = const_q_net(np.arange(12.0))
    rng = np.random.default_rng(1)
    counts = np.bincount([select_action(p, obs, 1.0, rng) for _ in range(10_000)], minlength=12)
    expected = 10_000 / 12
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 31.26  # 99.9th percentile, 11 dof


def test_soft_update():
    rng = np.random.default_rng(0)
    online = init_params(2, rng, **TINY)
    target = init_params(2, rng, **TINY)
    keep = target.copy()
    soft_update(target, online, 0.0)
    assert all(np.array_equal(getattr(target, n), getattr(keep, n)) for n in LAYERS)
    t2 = target.copy()
    soft_update(t2, online, 1.0)
    assert all(np.array_equal(getattr(t2, n), getattr(online, n)) for n in LAYERS)
    zeros = dataclasses.replace(online, **{n: np.zeros_like(getattr(online, n)) for n in LAYERS})
    ones = dataclasses.replace(online, **{n: np.ones_like(getattr(online, n)) for n in LAYERS})
    soft_update(zeros, ones, 0.001)
    assert np.allclose(zeros.fc1_w, 0.001, rtol=1e-6)
    t3 = target.copy()
    soft_update(t3, online, 0.25)
    for n in LAYERS:
        np.testing.assert_allclose(np.abs(getattr(t3, n) - getattr(online, n)),
                                   0.75 * np.abs(getattr(target, n) - getattr(online, n)),
                                   rtol=1e-5, atol=1e-7)
    with pytest.raises(ValueError):
        soft_update(t3, online, 1.5)


def test_epsilon_schedule():
    assert epsilon_at(0, 101) == 1.0
    assert epsilon_at(100, 101) == 0.1
    assert epsilon_at(50, 101) == pytest.approx(0.55, abs=1e-15)
    vals = [epsilon_at(e, 101) for e in range(101)]
    diffs = np.diff(vals)
    np.testing.assert_allclose(diffs, -0.009, atol=1e-15)


# ---------------------------------------------------------------------------
# replay


def transition(i, shape=(2, 2, 1)):
    return Transition(np.full(shape, i, np.float32), i % 12, float(i), np.full(shape, -i, np.float32))


def test_replay_ring_buffer():
    mem = ReplayMemory(5, np.random.default_rng(0))
    for i in range(8):
        mem.push(transition(i))
    assert len(mem) == 5
    assert [mem[j].reward for j in range(5)] == [3.0, 4.0, 5.0, 6.0, 7.0]
    obs, acts, rew, nxt = mem.sample(5)
    assert sorted(rew.tolist()) == [3.0, 4.0, 5.0, 6.0, 7.0]
    assert np.array_equal(obs[:, 0, 0, 0], rew) and np.array_equal(nxt[:, 0, 0, 0], -rew)


def test_replay_uniform_sampling():
    mem = ReplayMemory(100, np.random.default_rng(7))
    for i in range(100):
        mem.push(transition(i))
    idx = np.concatenate([mem.sample_indices(10) for _ in range(10_000)])
    counts = np.bincount(idx, minlength=100)
    sigma = np.sqrt(1e5 * 0.01 * 0.99)
    assert np.all(np.abs(counts - 1000) < 5 * sigma)


def test_transition_validation():
    with pytest.raises(ValueError):
        Transition(np.zeros(1), 12, 0.0, np.zeros(1))
    with pytest.raises(ValueError):
        Transition(np.zeros(1), 0, float("nan"), np.zeros(1))
    with pytest.raises(ValueError):
        ReplayMemory(4).sample(1)


# ---------------------------------------------------------------------------
# tabular oracle


def test_q_iteration_self_loop():
    mdp = TabularMDP(np.array([[0]]), np.array([[1.0]]))
    assert q_iteration(mdp, 0.5)[0, 0] == pytest.approx(2.0, abs=1e-9)


def test_q_iteration_gamma_zero():
    r = np.array([[1.0, -2.0], [0.5, 3.0]])
    mdp = TabularMDP(np.array([[1, 0], [0, 1]]), r)
    history = []
    q = q_iteration(mdp, 0.0, history=history)
    assert np.array_equal(history[0], r) and np.array_equal(q, r)


def test_q_iteration_chain_backward_induction():
    # s0 --a0 (r=1)--> s1 --any (r=0)--> s1 (absorbing); a1 at s0 loops with r=0.2
    mdp = TabularMDP(np.array([[1, 0], [1, 1]]), np.array([[1.0, 0.2], [0.0, 0.0]]))
    g = 0.9
    q = q_iteration(mdp, g)
    # V(s1) = 0; Q(s0,a0) = 1; V(s0) = max(1, 0.2/(1-g)=2) = 2 -> Q(s0,a1) = 0.2 + g*2
    expect = np.array([[1.0, 0.2 + g * 2.0], [0.0, 0.0]])
    assert np.abs(q - expect).max() < 1e-6


def test_q_iteration_monotone_error():
    mdp = TabularMDP(np.array([[0]]), np.array([[1.0]]))
    history = []
    q_iteration(mdp, 0.5, history=history)
    errs = [abs(h[0, 0] - 2.0) for h in history]
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_tabular_size_limit():
    with pytest.raises(ValueError):
        TabularMDP(np.zeros((101, 10), int), np.zeros((101, 10)))


# ---------------------------------------------------------------------------
# training loop

SMALL_ENV = E.EnvConfig(side=512.0, grid_cells=32, disc=16, obs_size=16)
SMALL_TRAIN = TrainConfig(batch_size=16, replay_capacity=1000, filters=2, hidden=(16, 16),
                          epochs=10)


def test_train_run_deterministic(tmp_path):
    a = train_run("greedy", SMALL_TRAIN, SMALL_ENV, seed=3)
    b = train_run("greedy", SMALL_TRAIN, SMALL_ENV, seed=3)
    save_weights(a.params, tmp_path / "a.dqnw")
    save_weights(b.params, tmp_path / "b.dqnw")
    assert (tmp_path / "a.dqnw").read_bytes() == (tmp_path / "b.dqnw").read_bytes()
    assert [e.loss for e in a.log] == [e.loss for e in b.log]
    c = train_run("greedy", SMALL_TRAIN, SMALL_ENV, seed=4)
    assert not np.array_equal(c.params.out_w, a.params.out_w)


def test_train_run_replay_accounting():
    res = train_run("coop", SMALL_TRAIN, SMALL_ENV, seed=1, epochs=3)
    assert res.params.channels == 3
    assert len(res.replay) == sum(e.drones for e in res.log) * SMALL_ENV.episode_length
    fixed = dataclasses.replace(SMALL_TRAIN, drones=(2, 2))
    res = train_run("greedy", fixed, SMALL_ENV, seed=1, epochs=3)
    assert len(res.replay) == 3 * 2 * 20
    assert [e.epsilon for e in res.log] == [1.0, 0.55, 0.1]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_batch_divergence():
    p = init_params(2, np.random.default_rng(0), **TINY)
    t = p.copy()
    obs = np.zeros((2, 8, 8, 2), np.float32)
    batch = (obs, np.array([0, 1]), np.array([np.inf, 0.0]), obs)
    with pytest.raises(DivergenceError):
        train_batch(p, t, batch, SMALL_TRAIN, Adam(p))


def test_train_batch_reduces_loss_on_fixed_batch():
    rng = np.random.default_rng(2)
    p = init_params(2, rng, **TINY)
    t = p.copy()
    obs = rng.random((16, 8, 8, 2)).astype(np.float32)
    batch = (obs, rng.integers(0, 12, 16), rng.normal(0, 1, 16), obs)
    cfg = dataclasses.replace(SMALL_TRAIN, gamma=0.1, lr=1e-3)
    adam = Adam(p, lr=1e-3)
    first = train_batch(p, t, batch, cfg, adam)
    for _ in range(200):
        last = train_batch(p, t, batch, cfg, adam)
    assert last < 0.5 * first


def test_weight_file_roundtrip(tmp_path):
    p = init_params(3, np.random.default_rng(0), **TINY)
    save_weights(p, tmp_path / "w.dqnw")
    raw = (tmp_path / "w.dqnw").read_bytes()
    assert raw[:4] == b"DQNW"
    assert int.from_bytes(raw[4:8], "little") == 1 and int.from_bytes(raw[8:12], "little") == 3
    q = load_weights(tmp_path / "w.dqnw")
    assert isinstance(q, NetworkParams)
    assert all(np.array_equal(getattr(p, n), getattr(q, n)) for n in LAYERS)
    (tmp_path / "bad.dqnw").write_bytes(raw + b"\0")
    with pytest.raises(ValueError):
        load_weights(tmp_path / "bad.dqnw")
    (tmp_path / "bad2.dqnw").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_weights(tmp_path / "bad2.dqnw")


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(gamma=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=20_000)
    with pytest.raises(ValueError):
        TrainConfig(target_rule="sarsa")
