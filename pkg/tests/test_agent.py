import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stiffq.agent import (
    Adam, AgentConfig, Batch, CheckpointMismatch, DQNAgent, ExplorationSchedule, QNetwork, ReplayBuffer, agent_tick,
    cumulative_return, load_checkpoint, q_forward, reward, save_checkpoint, select_action, td_gradients, td_loss,
    td_targets, td_update,
)
from stiffq.simenv import TaskPhase, observe, scenario
from stiffq.stiffness import builtin_catalogs

from oracles import discounted_sum, relu_mlp_loss

PEG, GEAR = builtin_catalogs()

# upper 0.1% point of chi-square with 49 degrees of freedom
CHI2_49_999 = 85.351


def random_batch(rng, n, m=4, dim=8):
    return Batch(rng.normal(size=(n, dim)), rng.integers(0, m, n), rng.uniform(-1, 1, n),
                 rng.normal(size=(n, dim)), rng.random(n) < 0.3)


def linear_net(w, b):
    return QNetwork([np.array(w, dtype=float)], [np.array(b, dtype=float)])


# -- forward pass ----------------------------------------------------------------

def test_zero_network():
    net = QNetwork.zeros([8, 16, 16, 4])
    assert not q_forward(net, np.arange(8.0)).any()


def test_seeded_init_is_reproducible():
    a = QNetwork.init([8, 64, 64, 4], np.random.default_rng(5))
    b = QNetwork.init([8, 64, 64, 4], np.random.default_rng(5))
    s = np.linspace(-1, 1, 8)
    assert np.array_equal(q_forward(a, s), q_forward(b, s))
    assert a.sizes == [8, 64, 64, 4] and a.n_actions == 4
    assert np.all(np.abs(a.weights[0]) <= 1 / math.sqrt(8))


def test_linear_forward_by_hand():
    w = [[1, 0, 0, 0, 0, 0, 0, 2], [0, -1, 0, 0, 0, 0, 0, 0], [0.5] * 8, [0, 0, 0, 0, 0, 0, 3, 0]]
    net = linear_net(w, [0.1, 0.2, 0.3, 0.4])
    s = np.array([1, 2, 3, 4, 5, 6, 7, 8.0])
    # row 0: 1 + 16 + 0.1; row 1: -2 + 0.2; row 2: 0.5 * 36 + 0.3; row 3: 21 + 0.4
    assert q_forward(net, s).tolist() == pytest.approx([17.1, -1.8, 18.3, 21.4], abs=1e-12)


def test_batch_forward_matches_rows():
    net = QNetwork.init([8, 16, 16, 4], np.random.default_rng(0))
    s = np.random.default_rng(1).normal(size=(5, 8))
    q = q_forward(net, s)
    for i in range(5):
        assert np.allclose(q[i], q_forward(net, s[i]), rtol=1e-14)


# -- action selection ------------------------------------------------------------

def test_greedy_and_ties():
    rng = np.random.default_rng(0)
    assert select_action([0.1, 0.9, 0.3, 0.2], 0.0, rng) == 1
    assert select_action([0.5, 0.5, 0.5, 0.5], 0.0, rng) == 0
    assert select_action([0.0, 0.7, 0.7, 0.1], 0.0, rng) == 1


def test_uniform_exploration():
    rng = np.random.default_rng(42)
    counts = np.bincount([select_action([0.1, 0.9, 0.3, 0.2], 1.0, rng) for _ in range(10_000)], minlength=4)
    assert np.all(np.abs(counts / 10_000 - 0.25) <= 0.02)


@given(arrays(float, 5, elements=st.floats(-10, 10)), st.floats(-1e3, 1e3))
def test_argmax_shift_invariance(q, c):
    rng = np.random.default_rng(0)
    shifted = q + c
    # a shift may merge values that differ by less than one ulp of the shift
    if len(set(shifted)) == len(set(q)):
        assert select_action(q, 0.0, rng) == select_action(shifted, 0.0, rng)


def test_schedule_monotone():
    s = ExplorationSchedule(1.0, 0.99)
    values = [s.epsilon] + [s.decay() for _ in range(500)]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert values[100] == pytest.approx(0.99 ** 100)
    with pytest.raises(ValueError):
        ExplorationSchedule(1.5, 0.99)
    with pytest.raises(ValueError):
        ExplorationSchedule(1.0, 1.0)


def test_agent_tick_returns_catalog_entry():
    net = linear_net(np.zeros((4, 8)), [0, 0, 0, 1.0])
    a, k = agent_tick(net, 0.0, np.zeros(8), np.random.default_rng(0), PEG)
    assert a == 3 and k is PEG[3]


# -- reward and return -------------------------------------------------------------

def test_reward_cases():
    assert reward(0, TaskPhase.DONE) == 1.0
    assert reward(250, TaskPhase.DONE, 500) == 0.5
    assert reward(17, TaskPhase.FAILED) == -1.0
    assert reward(17, TaskPhase.SEARCH) == 0.0
    assert reward(17, TaskPhase.TEETH_ALIGNMENT) == 0.0


def test_cumulative_return_examples():
    assert cumulative_return([1.0], 0.3) == 1.0
    assert cumulative_return([0, 0, 1], 0.9) == pytest.approx(0.81)
    with pytest.raises(ValueError):
        cumulative_return([1.0], 1.5)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_cumulative_return_matches_oracle(seed, gamma):
    r = np.random.default_rng(seed).uniform(-1, 1, 100).tolist()
    assert cumulative_return(r, gamma) == pytest.approx(discounted_sum(r, gamma), abs=1e-12)


# -- gradients -------------------------------------------------------------------

def flat(params):
    return np.concatenate([p.ravel() for p in params])


def numeric_gradient(net, batch, targets, h=1e-6):
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = td_loss(net, batch, targets)
            p[i] = old - h
            down = td_loss(net, batch, targets)
            p[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(a, b):
    a, b = flat(a), flat(b)
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


def test_gradient_small_net_finite_difference():
    rng = np.random.default_rng(7)
    net = QNetwork.init([8, 4, 4], rng)
    target = QNetwork.init([8, 4, 4], rng)
    batch = random_batch(rng, 16)
    y = td_targets(batch, 0.99, target)
    assert max_rel_error(td_gradients(net, batch, y), numeric_gradient(net, batch, y)) <= 1e-5


def test_loss_matches_plain_python_oracle():
    rng = np.random.default_rng(3)
    net = QNetwork.init([8, 6, 5, 4], rng)
    batch = random_batch(rng, 7)
    y = rng.normal(size=7)
    ref = relu_mlp_loss([w.tolist() for w in net.weights], [b.tolist() for b in net.biases],
                        batch.s.tolist(), batch.a.tolist(), y.tolist())
    assert td_loss(net, batch, y) == pytest.approx(ref, rel=1e-12)


def test_zero_td_error_leaves_parameters():
    rng = np.random.default_rng(0)
    net = QNetwork.init([8, 16, 16, 4], rng)
    batch = random_batch(rng, 8)
    batch.terminal[:] = True
    batch.r[:] = net.forward(batch.s)[np.arange(8), batch.a]
    before = flat(net.params())
    td_update(net, batch, alpha=0.1, gamma=0.99)
    assert np.array_equal(before, flat(net.params()))


def test_single_transition_linear_by_hand():
    w = np.zeros((2, 8))
    w[0, 0] = 0.5
    net = linear_net(w, [0.0, 0.0])
    s = np.array([2.0, 0, 0, 0, 0, 0, 0, 1.0])
    batch = Batch(s[None], np.array([0]), np.array([1.5]), np.zeros((1, 8)), np.array([True]))
    td_update(net, batch, alpha=0.1, gamma=0.9)
    # Q = 0.5 * 2 = 1, delta = 0.5, dQ/dw0 = s, dQ/db0 = 1
    expected_w = w.copy()
    expected_w[0] += 0.1 * 0.5 * s
    assert np.allclose(net.weights[0], expected_w, atol=1e-12, rtol=0)
    assert np.allclose(net.biases[0], [0.05, 0.0], atol=1e-12, rtol=0)


def test_bootstrap_uses_target_max():
    net = linear_net(np.zeros((2, 8)), [0.0, 0.0])
    target = linear_net(np.zeros((2, 8)), [0.3, 0.7])
    batch = Batch(np.zeros((1, 8)), np.array([1]), np.array([0.1]), np.zeros((1, 8)), np.array([False]))
    assert td_targets(batch, 0.5, target)[0] == pytest.approx(0.1 + 0.5 * 0.7)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_terminal_ignores_next_state(seed):
    rng = np.random.default_rng(seed)
    net = QNetwork.init([8, 8, 3], rng)
    batch = random_batch(rng, 6, m=3)
    batch.terminal[:] = True
    other = Batch(batch.s, batch.a, batch.r, rng.normal(size=(6, 8)) * 100, batch.terminal)
    a, b = net.copy(), net.copy()
    td_update(a, batch, 0.01, 0.99)
    td_update(b, other, 0.01, 0.99)
    assert np.array_equal(flat(a.params()), flat(b.params()))


def test_only_taken_action_is_trained():
    rng = np.random.default_rng(1)
    net = QNetwork.init([8, 3], rng)
    batch = Batch(rng.normal(size=(4, 8)), np.array([2, 2, 2, 2]), np.ones(4), np.zeros((4, 8)), np.ones(4, bool))
    before = net.copy()
    td_update(net, batch, 0.05, 0.9)
    assert np.array_equal(net.weights[0][:2], before.weights[0][:2])
    assert not np.array_equal(net.weights[0][2], before.weights[0][2])


def test_adam_reduces_loss():
    rng = np.random.default_rng(2)
    agent = DQNAgent.create(4, AgentConfig(hidden=(16, 16), optimizer="adam", batch_size=8), seed=0)
    batch = random_batch(rng, 8)
    batch.terminal[:] = True
    y = td_targets(batch, 0.99, agent.net)
    first = td_loss(agent.net, batch, y)
    for _ in range(50):
        td_update(agent.net, batch, 1e-3, 0.99, optimizer=agent.optimizer)
    assert td_loss(agent.net, batch, y) < first


# -- replay ----------------------------------------------------------------------

def test_replay_ring_and_empty():
    buf = ReplayBuffer(3, state_dim=2)
    with pytest.raises(ValueError):
        buf.sample(1, np.random.default_rng(0))
    for i in range(5):
        buf.add([i, i], i % 2, float(i), [i, i], False)
    assert len(buf) == 3
    assert sorted(buf.r.tolist()) == [2.0, 3.0, 4.0]


def test_replay_sampling_is_uniform():
    buf = ReplayBuffer(50, state_dim=1)
    for i in range(50):
        buf.add([i], 0, 0.0, [i], False)
    idx = np.concatenate([buf.sample_indices(64, np.random.default_rng(s)) for s in range(300)])
    counts = np.bincount(idx, minlength=50)
    expected = len(idx) / 50
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < CHI2_49_999


def test_agent_learning_step_counts():
    agent = DQNAgent.create(4, AgentConfig(batch_size=4, target_sync=3), seed=1)
    for i in range(10):
        agent.observe(np.zeros(8), i % 4, 0.0, np.zeros(8), False)
    assert agent.updates == 7
    assert agent.target is not agent.net
    agent.end_episode()
    assert agent.episode == 1 and agent.schedule.epsilon == pytest.approx(0.99)


# -- checkpoints -----------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    net = QNetwork.init([8, 64, 64, 4], np.random.default_rng(9))
    path = save_checkpoint(tmp_path / "c.npz", net, PEG.fingerprint, epsilon=0.1, episode=12, seed=4)
    back, meta = load_checkpoint(path, PEG.fingerprint)
    assert np.array_equal(flat(back.params()), flat(net.params()))
    assert meta["episode"] == 12 and meta["seed"] == 4 and meta["sizes"] == [8, 64, 64, 4]


def test_checkpoint_rejects_other_catalog(tmp_path):
    net = QNetwork.init([8, 4, 4], np.random.default_rng(0))
    path = save_checkpoint(tmp_path / "c.npz", net, PEG.fingerprint)
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, GEAR.fingerprint)


def test_checkpoint_bytes_are_deterministic(tmp_path):
    net = QNetwork.init([8, 4, 4], np.random.default_rng(0))
    a = save_checkpoint(tmp_path / "a.npz", net, PEG.fingerprint).read_bytes()
    b = save_checkpoint(tmp_path / "b.npz", net, PEG.fingerprint).read_bytes()
    assert a == b


def test_trained_preference_at_deep_insertion_selects_centre_entry():
    world = scenario("pegin-20um")
    hx, hy = world.hole_center
    s = observe(world, np.array([hx, hy, -0.004, 0, 0, 0]), np.array([0, 0, 6.0, 0, 0, 0]))
    rng = np.random.default_rng(8)
    net = QNetwork.init([8, 16, 16, 4], rng)
    states = np.repeat(s[None], 4, axis=0)
    actions = np.arange(4)
    batch = Batch(states, actions, np.where(actions == 3, 1.0, -1.0), states, np.ones(4, bool))
    opt = Adam(1e-2)
    for _ in range(300):
        td_update(net, batch, 1e-2, 0.99, optimizer=opt)
    a = select_action(q_forward(net, s), 0.0, rng)
    assert a == 3
    assert PEG[a].name == "K4"
