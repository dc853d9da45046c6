"""Deep Q-learning with experience replay and a target network.

Step counting: ``t`` runs over all environment steps (agent decisions).
The first ``warmup_random_steps`` use a uniform random policy and never
train. After that, with ``p = t - warmup + 1`` post-warm-up steps taken,
the online network is updated whenever ``p % train_every == 0`` and the
target network is synced whenever ``p % target_sync_every == 0``. The
exploration rate is ``epsilon(p - 1)``, so it starts at 1 when the learned
policy takes over.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .envs.preprocessing import stack_batch
from .errors import ArgumentError, ConfigurationError
from .model import QNetwork
from .nn import Adam

BASE_LR = 2.5e-4


@dataclass
class Transition:
    state: object
    action: int
    reward: float
    next_state: object
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity FIFO store with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, seed=None):
        if capacity < 1:
            raise ArgumentError("capacity must be positive")
        self.capacity = int(capacity)
        self.rng = np.random.default_rng(seed)
        self._items: List[Optional[Transition]] = [None] * self.capacity
        self._next = 0
        self._size = 0
        self.n_added = 0

    def __len__(self) -> int:
        return self._size

    def add(self, transition: Transition) -> None:
        self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.n_added += 1

    def contents(self) -> List[Transition]:
        """Stored transitions, oldest first."""
        if self._size < self.capacity:
            return self._items[: self._size]
        return self._items[self._next :] + self._items[: self._next]

    def sample(self, batch_size: int) -> List[Transition]:
        if self._size == 0:
            raise ArgumentError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, self._size, size=batch_size)
        return [self._items[i] for i in idx]


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.01
    decay_steps: int = 250_000

    def __call__(self, t: int) -> float:
        # weighted form so both endpoints come out exactly
        w = min(max(t, 0), self.decay_steps) / self.decay_steps
        return self.start * (1.0 - w) + self.end * w


def default_learning_rates(model_type: str, lr: float = BASE_LR) -> Dict[str, float]:
    from .model import GROUPS

    return {g: lr for g in GROUPS[model_type]}


@dataclass
class TrainerConfig:
    gamma: float = 0.99
    batch_size: int = 32
    train_every: int = 4
    target_sync_every: int = 8000
    warmup_random_steps: int = 20_000
    buffer_capacity: int = 100_000
    reward_scale: float = 1.0
    total_steps: int = 1_000_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_decay_steps: int = 250_000
    learning_rates: Dict[str, float] = field(default_factory=dict)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    loss: str = "squared"
    seed: int = 0
    feature_log_every: int = 10_000

    def validate(self) -> None:
        positive = ["batch_size", "train_every", "target_sync_every", "buffer_capacity", "epsilon_decay_steps", "feature_log_every"]
        for key in positive:
            if getattr(self, key) <= 0:
                raise ConfigurationError(f"trainer.{key} must be positive")
        if self.warmup_random_steps < 0 or self.total_steps < 0:
            raise ConfigurationError("trainer.total_steps and trainer.warmup_random_steps must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError("trainer.gamma must lie in [0, 1]")
        if self.reward_scale < 1.0:
            raise ConfigurationError("trainer.reward_scale must be >= 1")
        if self.loss not in ("squared", "huber"):
            raise ConfigurationError("trainer.loss must be 'squared' or 'huber'")
        for name, lr in self.learning_rates.items():
            if lr < 0:
                raise ConfigurationError(f"trainer.learning_rates.{name} must be >= 0")

    @property
    def epsilon(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.epsilon_start, self.epsilon_end, self.epsilon_decay_steps)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingRun:
    seed: int
    setting: Optional[str] = None
    episodes: List[dict] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    epsilons: List[float] = field(default_factory=list)
    syncs: List[int] = field(default_factory=list)
    n_updates: int = 0
    steps: int = 0
    wall_clock: float = 0.0

    @property
    def returns(self) -> np.ndarray:
        return np.array([e["return_env_units"] for e in self.episodes], dtype=np.float64)


# ---------------------------------------------------------------------------
# algorithm pieces


def select_action(net: QNetwork, state, epsilon: float, rng) -> int:
    """Epsilon-greedy; ties in the greedy branch go to the lowest action index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ArgumentError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(net.spec.n_actions))
    q = net.q_values(np.asarray(state))
    return int(np.argmax(q))


def _batch_states(states) -> np.ndarray:
    if hasattr(states[0], "frames"):
        return stack_batch(states)
    return np.stack([np.asarray(s) for s in states])


def td_targets(batch: List[Transition], target_net: QNetwork, gamma: float) -> np.ndarray:
    if not batch:
        raise ArgumentError("empty batch")
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    terminal = np.array([t.terminal for t in batch], dtype=bool)
    q_next = target_net.forward(_batch_states([t.next_state for t in batch])).astype(np.float64)
    return np.where(terminal, rewards, rewards + gamma * q_next.max(axis=1))


def loss_and_grads(batch: List[Transition], online_net: QNetwork, targets, loss: str = "squared"):
    """Mean squared TD error and its gradients for every parameter group."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (len(batch),):
        raise ArgumentError("one target per transition required")
    actions = np.array([t.action for t in batch])
    q = online_net.forward(_batch_states([t.state for t in batch]))
    rows = np.arange(len(batch))
    diff = targets - q[rows, actions].astype(np.float64)
    n = len(batch)
    if loss == "huber":
        absd = np.abs(diff)
        value = float(np.mean(np.where(absd <= 1.0, 0.5 * diff**2, absd - 0.5)))
        d_q = -np.clip(diff, -1.0, 1.0) / n
    else:
        value = float(np.mean(diff**2))
        d_q = -2.0 * diff / n
    grad_q = np.zeros(q.shape, dtype=q.dtype)
    grad_q[rows, actions] = d_q
    return value, online_net.backward(grad_q)


# ---------------------------------------------------------------------------
# training loop


class Trainer:
    """Runs warm-up, acting, storage, updates and target syncs for one seed.

    ``env`` is a ``PixelPipeline``-like object: ``reset() -> obs`` and
    ``step(a) -> (obs, reward, terminal)`` with an optional ``truncated`` flag.
    """

    def __init__(self, env, net: QNetwork, config: TrainerConfig, setting: Optional[str] = None,
                 on_record: Optional[Callable[[dict], None]] = None,
                 on_features: Optional[Callable[[int, np.ndarray], None]] = None,
                 on_step: Optional[Callable[["Trainer"], None]] = None):
        config.validate()
        self.env = env
        self.config = config
        self.online = net
        self.target = net.clone()
        lrs = default_learning_rates(net.spec.model_type)
        unknown = set(config.learning_rates) - set(lrs)
        if unknown:
            raise ConfigurationError(f"learning rates given for unknown groups {sorted(unknown)}")
        lrs.update(config.learning_rates)
        self.learning_rates = lrs
        self.optimizer = Adam(net.param_groups(), lrs, config.adam_beta1, config.adam_beta2, config.adam_eps)
        act_seed, replay_seed, log_seed = np.random.SeedSequence(config.seed).spawn(3)
        self.act_rng = np.random.default_rng(act_seed)
        self.log_rng = np.random.default_rng(log_seed)
        self.buffer = ReplayBuffer(config.buffer_capacity, replay_seed)
        self.schedule = config.epsilon
        self.run = TrainingRun(seed=config.seed, setting=setting)
        self.on_record = on_record
        self.on_features = on_features
        self.on_step = on_step
        self.t = 0

    def _emit(self, record: dict) -> None:
        if self.on_record is not None:
            self.on_record(record)

    def update(self) -> float:
        batch = self.buffer.sample(self.config.batch_size)
        y = td_targets(batch, self.target, self.config.gamma)
        loss, grads = loss_and_grads(batch, self.online, y, self.config.loss)
        self.optimizer.step(grads)
        self.run.n_updates += 1
        self.run.losses.append(loss)
        return loss

    def sync(self) -> None:
        self.target.sync_from(self.online)
        self.run.syncs.append(self.t)
        self._emit({"type": "sync", "step": self.t, "n_updates": self.run.n_updates})

    def _log_features(self) -> None:
        if self.on_features is None or len(self.buffer) == 0:
            return
        idx = self.log_rng.integers(0, len(self.buffer), size=min(self.config.batch_size, len(self.buffer)))
        items = self.buffer.contents()
        states = _batch_states([items[i].state for i in idx])
        latent = self.online.latent(self.online.conv_features(states))
        self.on_features(self.t, np.asarray(latent, dtype=np.float64))

    def train(self, total_steps: Optional[int] = None) -> TrainingRun:
        cfg = self.config
        total = cfg.total_steps if total_steps is None else total_steps
        start = time.perf_counter()
        obs = self.env.reset()
        ep_return, ep_steps, ep_losses = 0.0, 0, []
        n_actions = self.online.spec.n_actions
        for _ in range(total):
            t = self.t
            warm = t < cfg.warmup_random_steps
            if warm:
                eps = 1.0
                action = int(self.act_rng.integers(n_actions))
            else:
                eps = self.schedule(t - cfg.warmup_random_steps)
                action = select_action(self.online, obs, eps, self.act_rng)
            self.run.epsilons.append(eps)
            next_obs, reward, terminal = self.env.step(action)
            self.buffer.add(Transition(obs, action, reward * cfg.reward_scale, next_obs, bool(terminal)))
            ep_return += reward
            ep_steps += 1
            self.t += 1

            if not warm:
                p = self.t - cfg.warmup_random_steps
                if p % cfg.train_every == 0:
                    ep_losses.append(self.update())
                if p % cfg.target_sync_every == 0:
                    self.sync()
            if self.t % cfg.feature_log_every == 0:
                self._log_features()

            if terminal or getattr(self.env, "truncated", False):
                record = {
                    "type": "episode",
                    "episode": len(self.run.episodes),
                    "steps": ep_steps,
                    "end_step": self.t,
                    "return_env_units": ep_return,
                    "epsilon": eps,
                    "loss_mean": float(np.mean(ep_losses)) if ep_losses else None,
                    "phase": "warmup" if warm else "train",
                    "truncated": not terminal,
                }
                self.run.episodes.append(record)
                self._emit(record)
                obs = self.env.reset()
                ep_return, ep_steps, ep_losses = 0.0, 0, []
            else:
                obs = next_obs
            if self.on_step is not None:
                self.on_step(self)
        self.run.steps = self.t
        self.run.wall_clock += time.perf_counter() - start
        return self.run


def train(env, net: QNetwork, config: TrainerConfig, **kw) -> TrainingRun:
    return Trainer(env, net, config, **kw).train()


def rollout(net: Optional[QNetwork], env, episodes: int, epsilon: float = 0.0, seed: int = 0,
            n_actions: Optional[int] = None) -> np.ndarray:
    """Episode returns without learning. ``net=None`` plays uniformly at random."""
    rng = np.random.default_rng(seed)
    n_actions = n_actions or getattr(env, "n_actions", 3)
    returns = []
    for _ in range(episodes):
        obs, total = env.reset(), 0.0
        while True:
            if net is None:
                action = int(rng.integers(n_actions))
            else:
                action = select_action(net, obs, epsilon, rng)
            obs, reward, terminal = env.step(action)
            total += reward
            if terminal or getattr(env, "truncated", False):
                break
        returns.append(total)
    return np.asarray(returns, dtype=np.float64)
