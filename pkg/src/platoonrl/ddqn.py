"""Per-agent double deep Q-network written directly in numpy."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    gamma: float = 0.95
    lr: float = 0.001
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    batch_size: int = 64
    buffer_capacity: int = 50_000
    target_sync_period: int = 100
    epsilon_start: float = 1.0
    epsilon_end: float = 0.02
    epsilon_decay_fraction: float = 0.8
    hidden: tuple[int, ...] = (100, 50, 24)
    updates_per_episode: int = 1
    reward_scale: float = 0.01
    grad_clip: float | None = None

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)

    def epsilon(self, episode: int, total: int) -> float:
        """Linear decay over the first fraction of training, then flat."""
        horizon = max(1.0, self.epsilon_decay_fraction * total)
        frac = min(1.0, episode / horizon)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass
class QNetworkParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "QNetworkParams":
        return QNetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class RMSPropState:
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: QNetworkParams) -> "RMSPropState":
        return cls([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])


def init_params(sizes, rng: np.random.Generator) -> QNetworkParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return QNetworkParams(weights, biases)


def _forward(params: QNetworkParams, x: np.ndarray):
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        h = z if k == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def q_forward(params: QNetworkParams, obs) -> np.ndarray:
    """Action values for one observation (1-d) or a batch (2-d)."""
    x = np.asarray(obs, dtype=float)
    if x.shape[-1] != params.weights[0].shape[0]:
        raise ValueError(f"observation has dimension {x.shape[-1]}, network expects {params.weights[0].shape[0]}")
    return _forward(params, x)[-1]


def q_gradient(params: QNetworkParams, states, actions, targets):
    """Gradient of mean((Q(s, a) - target)^2) over the batch.

    Returns (grad_weights, grad_biases, loss).
    """
    x = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=int)
    targets = np.asarray(targets, dtype=float)
    k = x.shape[0]
    if k == 0:
        raise ValueError("empty batch")
    acts = _forward(params, x)
    q = acts[-1]
    resid = q[np.arange(k), actions] - targets
    loss = float(np.mean(resid ** 2))

    delta = np.zeros_like(q)
    delta[np.arange(k), actions] = 2.0 * resid / k
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    for layer in range(len(params.weights) - 1, -1, -1):
        gw[layer] = acts[layer].T @ delta
        gb[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ params.weights[layer].T) * (acts[layer] > 0)
    return gw, gb, loss


def rmsprop_step(params: QNetworkParams, grads, state: RMSPropState, lr: float,
                 decay: float = 0.9, eps: float = 1e-8):
    """In-place RMSProp update; returns (params, state)."""
    gw, gb = grads
    for p, g, v in zip(params.weights + params.biases, list(gw) + list(gb), state.v_weights + state.v_biases):
        v *= decay
        v += (1.0 - decay) * g * g
        p -= lr * g / (np.sqrt(v) + eps)
    return params, state


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; ties resolve to the lowest index."""
    q = np.asarray(q_values)
    if q.size == 0:
        raise ValueError("no actions")
    if rng.random() < epsilon:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def double_q_target(online: QNetworkParams, target: QNetworkParams, reward, next_state, terminal, gamma: float):
    """r + gamma * Q_target(s', argmax_a Q_online(s', a)); works on batches."""
    reward = np.asarray(reward, dtype=float)
    terminal = np.asarray(terminal, dtype=bool)
    s2 = np.asarray(next_state, dtype=float)
    best = np.argmax(q_forward(online, s2), axis=-1)
    q_t = q_forward(target, s2)
    boot = np.take_along_axis(np.atleast_2d(q_t), np.atleast_1d(best)[:, None], axis=1)[:, 0]
    out = reward + gamma * np.where(terminal, 0.0, boot.reshape(reward.shape))
    return float(out) if out.ndim == 0 else out


@dataclass
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity FIFO memory with uniform sampling (with replacement)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._size = 0
        self._next = 0
        self._s = self._a = self._r = self._s2 = self._t = None

    def __len__(self):
        return self._size

    def _alloc(self, dim: int):
        c = self.capacity
        self._s = np.zeros((c, dim))
        self._s2 = np.zeros((c, dim))
        self._a = np.zeros(c, dtype=int)
        self._r = np.zeros(c)
        self._t = np.zeros(c, dtype=bool)

    def push(self, exp: Experience):
        if self._s is None:
            self._alloc(len(exp.state))
        i = self._next
        self._s[i], self._a[i], self._r[i] = exp.state, exp.action, exp.reward
        self._s2[i], self._t[i] = exp.next_state, exp.terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        start = self._next if self._size == self.capacity else 0
        return (start + np.arange(self._size)) % self.capacity

    def contents(self) -> list[Experience]:
        """Stored experiences, oldest first."""
        return [self._get(i) for i in self._order()]

    def _get(self, i) -> Experience:
        return Experience(self._s[i].copy(), int(self._a[i]), float(self._r[i]), self._s2[i].copy(), bool(self._t[i]))

    def sample_indices(self, k: int, rng: np.random.Generator) -> np.ndarray:
        if self._size < k:
            raise ValueError(f"buffer holds {self._size} experiences, cannot sample {k}")
        return rng.integers(0, self._size, k)

    def sample_arrays(self, k: int, rng: np.random.Generator):
        idx = self.sample_indices(k, rng)
        return self._s[idx], self._a[idx], self._r[idx], self._s2[idx], self._t[idx]

    def sample(self, k: int, rng: np.random.Generator) -> list[Experience]:
        return [self._get(i) for i in self.sample_indices(k, rng)]


def push_experience(buffer: ReplayBuffer, exp: Experience):
    buffer.push(exp)


def sample_minibatch(buffer: ReplayBuffer, k: int, rng: np.random.Generator) -> list[Experience]:
    return buffer.sample(k, rng)


def sync_target(online: QNetworkParams, target: QNetworkParams | None = None) -> QNetworkParams:
    return online.copy()


@dataclass
class Agent:
    online: QNetworkParams
    target: QNetworkParams
    opt: RMSPropState
    buffer: ReplayBuffer
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(cls, obs_dim: int, n_actions: int, cfg: TrainConfig, rng: np.random.Generator) -> "Agent":
        online = init_params([obs_dim, *cfg.hidden, n_actions], rng)
        return cls(online, online.copy(), RMSPropState.zeros_like(online), ReplayBuffer(cfg.buffer_capacity))

    def act(self, obs, epsilon: float, rng: np.random.Generator) -> int:
        return select_action(q_forward(self.online, obs), epsilon, rng)

    def learn(self, cfg: TrainConfig, rng: np.random.Generator) -> float | None:
        """One minibatch update; None when the buffer is too small."""
        if len(self.buffer) < cfg.batch_size:
            return None
        s, a, r, s2, t = self.buffer.sample_arrays(cfg.batch_size, rng)
        y = double_q_target(self.online, self.target, r, s2, t, cfg.gamma)
        gw, gb, loss = q_gradient(self.online, s, a, y)
        if cfg.grad_clip is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in gw + gb))
            if norm > cfg.grad_clip:
                gw = [g * (cfg.grad_clip / norm) for g in gw]
                gb = [g * (cfg.grad_clip / norm) for g in gb]
        rmsprop_step(self.online, (gw, gb), self.opt, cfg.lr, cfg.rms_decay, cfg.rms_eps)
        return loss

    def sync(self):
        self.target = sync_target(self.online, self.target)

    def save(self, path, fingerprint: dict | None = None):
        arrays = {}
        for name, p in (("online", self.online), ("target", self.target)):
            for k, (w, b) in enumerate(zip(p.weights, p.biases)):
                arrays[f"{name}_w{k}"] = w
                arrays[f"{name}_b{k}"] = b
        for k, (vw, vb) in enumerate(zip(self.opt.v_weights, self.opt.v_biases)):
            arrays[f"opt_vw{k}"] = vw
            arrays[f"opt_vb{k}"] = vb
        header = {"version": CHECKPOINT_VERSION, "sizes": self.online.sizes, "config": fingerprint or {}}
        arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        with open(path, "wb") as f:
            f.write(buf.getvalue())

    @classmethod
    def load(cls, path, buffer_capacity: int = 1) -> "Agent":
        with np.load(path) as data:
            header = json.loads(bytes(data["header"]).decode())
            if header.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
            n_layers = len(header["sizes"]) - 1

            def params(name):
                return QNetworkParams([data[f"{name}_w{k}"].copy() for k in range(n_layers)],
                                      [data[f"{name}_b{k}"].copy() for k in range(n_layers)])

            opt = RMSPropState([data[f"opt_vw{k}"].copy() for k in range(n_layers)],
                               [data[f"opt_vb{k}"].copy() for k in range(n_layers)])
            online, target = params("online"), params("target")
        return cls(online, target, opt, ReplayBuffer(buffer_capacity), meta=header)

