"""Deep Q-learning over a discrete stiffness catalog.

The network is a small ReLU multilayer perceptron written directly in numpy
so that forward pass, backpropagation and parameter updates stay
inspectable and bit-reproducible under a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .simenv import TaskPhase

CHECKPOINT_VERSION = 1


class CheckpointMismatch(ValueError):
    """Checkpoint belongs to a different action catalog or layout."""


@dataclass
class QNetwork:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, sizes, rng: np.random.Generator) -> "QNetwork":
        """Uniform weights in ``+-1/sqrt(fan_in)``, zero biases."""
        ws, bs = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            lim = 1.0 / np.sqrt(n_in)
            ws.append(rng.uniform(-lim, lim, size=(n_out, n_in)))
            bs.append(np.zeros(n_out))
        return cls(ws, bs)

    @classmethod
    def zeros(cls, sizes) -> "QNetwork":
        return cls([np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(o) for o in sizes[1:]])

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_actions(self) -> int:
        return self.weights[-1].shape[0]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "QNetwork":
        return QNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, s: np.ndarray, keep: bool = False):
        h = np.atleast_2d(s)
        acts = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts, dq: np.ndarray) -> list[np.ndarray]:
        """Gradients of ``sum(dq * Q)`` w.r.t. every parameter, in ``params()`` order."""
        grads: list[np.ndarray] = []
        g = dq
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = acts[i]
            grads = [g.T @ a_in, g.sum(axis=0)] + grads
            if i > 0:
                g = (g @ self.weights[i]) * (acts[i] > 0.0)
        return grads

    def finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def q_forward(net: QNetwork, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    q = net.forward(s)
    return q[0] if s.ndim == 1 else q


@dataclass
class ExplorationSchedule:
    epsilon: float = 1.0
    beta: float = 0.99
    min_epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")

    def decay(self) -> float:
        self.epsilon = max(self.min_epsilon, self.beta * self.epsilon)
        return self.epsilon


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    """epsilon-greedy; greedy ties go to the lowest index."""
    q = np.asarray(q_values)
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(q.shape[0]))
    return int(np.argmax(q))


def reward(t: int, outcome: TaskPhase, k_max: int = 500) -> float:
    """Sparse reward: ``1 - t/K`` on success, ``-1`` on failure, else 0."""
    if outcome == TaskPhase.DONE:
        return 1.0 - t / k_max
    if outcome == TaskPhase.FAILED:
        return -1.0
    return 0.0


def cumulative_return(rewards, gamma: float) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    total = 0.0
    for r in reversed(list(rewards)):
        total = r + gamma * total
    return total


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return len(self.a)

    @classmethod
    def of(cls, transitions) -> "Batch":
        s, a, r, s2, d = zip(*transitions)
        return cls(np.array(s, dtype=float), np.array(a, dtype=int), np.array(r, dtype=float),
                   np.array(s2, dtype=float), np.array(d, dtype=bool))


def td_targets(batch: Batch, gamma: float, target_net: QNetwork) -> np.ndarray:
    q_next = target_net.forward(batch.s_next).max(axis=1)
    return batch.r + gamma * np.where(batch.terminal, 0.0, q_next)


def td_loss(net: QNetwork, batch: Batch, targets: np.ndarray) -> float:
    """Half mean squared TD error on the taken actions with fixed targets."""
    q = net.forward(batch.s)[np.arange(len(batch)), batch.a]
    return 0.5 * float(np.mean((targets - q) ** 2))


def td_gradients(net: QNetwork, batch: Batch, targets: np.ndarray) -> list[np.ndarray]:
    """Gradient of ``td_loss`` w.r.t. ``net.params()``."""
    q, acts = net.forward(batch.s, keep=True)
    n = len(batch)
    dq = np.zeros_like(q)
    idx = np.arange(n)
    dq[idx, batch.a] = -(targets - q[idx, batch.a]) / n
    return net.backward(acts, dq)


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list | None = None
    v: list | None = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def td_update(net: QNetwork, batch: Batch, alpha: float, gamma: float,
              target_net: QNetwork | None = None, optimizer: Adam | None = None) -> QNetwork:
    """One TD step: ``w += alpha * mean(delta * dQ/dw)`` over the batch.

    Terminal transitions use ``r`` as target.  Without ``target_net`` the
    bootstrap uses ``net`` itself.  Updates ``net`` in place and returns it.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    targets = td_targets(batch, gamma, net if target_net is None else target_net)
    grads = td_gradients(net, batch, targets)
    params = net.params()
    if optimizer is None:
        for p, g in zip(params, grads):
            p -= alpha * g
    else:
        optimizer.step(params, grads)
    return net


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int = 8):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity, dtype=int)
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.head = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s_next, terminal) -> None:
        i = self.head
        self.s[i], self.a[i], self.r[i], self.s_next[i], self.terminal[i] = s, a, r, s_next, terminal
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=n)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        idx = self.sample_indices(n, rng)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.terminal[idx])


@dataclass
class AgentConfig:
    hidden: tuple[int, ...] = (64, 64)
    gamma: float = 0.99
    alpha: float = 1e-3
    epsilon0: float = 1.0
    beta: float = 0.99
    min_epsilon: float = 0.0
    batch_size: int = 64
    buffer_capacity: int = 10_000
    target_sync: int = 200
    optimizer: str = "sgd"  # or "adam"


@dataclass
class DQNAgent:
    net: QNetwork
    config: AgentConfig
    schedule: ExplorationSchedule
    rng: np.random.Generator
    seed: int = 0
    catalog_fingerprint: str = ""
    episode: int = 0
    updates: int = 0
    target: QNetwork | None = None
    buffer: ReplayBuffer | None = None
    optimizer: Adam | None = None
    # snapshot chosen by validation during training
    best_net: QNetwork | None = None
    best_episode: int = 0

    @classmethod
    def create(cls, n_actions: int, config: AgentConfig, seed: int, catalog_fingerprint: str = "",
               state_dim: int = 8) -> "DQNAgent":
        rng = np.random.default_rng(seed)
        net = QNetwork.init([state_dim, *config.hidden, n_actions], rng)
        opt = Adam(config.alpha) if config.optimizer == "adam" else None
        if config.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {config.optimizer!r}")
        return cls(net=net, config=config,
                   schedule=ExplorationSchedule(config.epsilon0, config.beta, config.min_epsilon),
                   rng=rng, seed=seed, catalog_fingerprint=catalog_fingerprint,
                   target=net.copy(), buffer=ReplayBuffer(config.buffer_capacity, state_dim), optimizer=opt)

    def act(self, s, greedy: bool = False) -> int:
        eps = 0.0 if greedy else self.schedule.epsilon
        return select_action(q_forward(self.net, s), eps, self.rng)

    def observe(self, s, a, r, s_next, terminal) -> None:
        self.buffer.add(s, a, r, s_next, terminal)
        if len(self.buffer) >= self.config.batch_size:
            batch = self.buffer.sample(self.config.batch_size, self.rng)
            td_update(self.net, batch, self.config.alpha, self.config.gamma, self.target, self.optimizer)
            self.updates += 1
            if self.updates % self.config.target_sync == 0:
                self.target = self.net.copy()

    def end_episode(self) -> None:
        self.episode += 1
        self.schedule.decay()


def agent_tick(net: QNetwork, epsilon: float, s, rng: np.random.Generator, catalog):
    """Choose the stiffness for the next agent period; returns ``(index, matrix)``."""
    a = select_action(q_forward(net, s), epsilon, rng)
    return a, catalog[a]


# -- checkpoints ----------------------------------------------------------

def save_checkpoint(path, net: QNetwork, catalog_fingerprint: str, epsilon: float = 0.0,
                    episode: int = 0, seed: int = 0, extra: dict | None = None) -> Path:
    path = Path(path)
    meta = {
        "version": CHECKPOINT_VERSION,
        "sizes": net.sizes,
        "catalog_fingerprint": catalog_fingerprint,
        "epsilon": float(epsilon),
        "episode": int(episode),
        "seed": int(seed),
        **(extra or {}),
    }
    arrays = {f"p{i}": np.asarray(p, dtype="<f8") for i, p in enumerate(net.params())}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path, catalog_fingerprint: str | None = None):
    """Return ``(net, meta)``; rejects a checkpoint built for another catalog."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointMismatch(f"unsupported checkpoint version {meta.get('version')}")
        if catalog_fingerprint is not None and meta["catalog_fingerprint"] != catalog_fingerprint:
            raise CheckpointMismatch("checkpoint was trained on a different stiffness catalog")
        params = [data[f"p{i}"].astype(float) for i in range(2 * (len(meta["sizes"]) - 1))]
    net = QNetwork(params[0::2], params[1::2])
    if net.sizes != meta["sizes"]:
        raise CheckpointMismatch("parameter shapes disagree with recorded layer sizes")
    return net, meta
