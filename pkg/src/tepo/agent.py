"""Q-learning on prompt forms: replay memory, masked epsilon-greedy behavior,
bootstrapped targets, and the training loop.

The loop interleaves environment sampling with minibatch updates at a fixed
steps-per-update ratio (default 100, i.e. 100 updates per 10,000 sampled
steps). Bootstrapping is masked: targets never look at prompt forms that are
unavailable in the successor state.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field, asdict
from pathlib import Path
from typing import Callable, IO, Optional, Sequence

import numpy as np

from .environment import EnvConfig, Environment
from .features import featurize
from .grid import Action, Case
from .segmenter import SegmenterBackend
from .tinynet import Adam, QNet, backward_and_step, default_spec, save_net

LOG_COLUMNS = ("episode", "steps", "mean_reward", "final_dice", "loss", "epsilon")


@dataclass(frozen=True)
class Transition:
    """One replay element; next_mask is the successor availability."""

    features: np.ndarray
    action: Action
    reward: float
    next_features: np.ndarray
    terminal: bool
    next_mask: frozenset[Action]


class ReplayBuffer:
    """Fixed-capacity FIFO ring; eviction is strictly oldest-first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, tr: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(tr)
        else:
            self._items[self._next] = tr
            self._next = (self._next + 1) % self.capacity

    def sample(self, rng: np.random.Generator, k: int) -> list[Transition]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=k)
        return [self._items[i] for i in idx]

    def items(self) -> list[Transition]:
        """Contents in insertion order (oldest first)."""
        return self._items[self._next :] + self._items[: self._next]


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 6667
    episode_len: int = 9
    gamma: float = 0.9
    batch_size: int = 64
    learning_rate: float = 1e-3
    replay_capacity: int = 50_000
    steps_per_update: int = 100
    epsilon_start: float = 1.0
    epsilon_final: float = 0.05
    epsilon_decay_fraction: float = 0.5
    warmup: Optional[int] = None        # default: one full batch
    target_sync_every: int = 0          # 0 = bootstrap from the live network
    seed: int = 0

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.batch_size < 1 or self.steps_per_update < 1:
            raise ValueError("batch_size and steps_per_update must be >= 1")
        if not 0.0 < self.epsilon_decay_fraction <= 1.0:
            raise ValueError("epsilon_decay_fraction must lie in (0, 1]")

    @property
    def total_steps(self) -> int:
        return self.episodes * self.episode_len

    @property
    def effective_warmup(self) -> int:
        return self.batch_size if self.warmup is None else max(self.warmup, self.batch_size)


def desk_train_config(seed: int = 0, episode_len: int = 9) -> TrainConfig:
    """Desk-scale defaults: ~60k sampled steps on 64x64 cases."""
    episodes = max(1, round(60_000 / episode_len))
    return TrainConfig(episodes=episodes, episode_len=episode_len,
                       replay_capacity=12_000, seed=seed)


def epsilon_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear decay from epsilon_start to epsilon_final over the first
    epsilon_decay_fraction of the planned steps, flat afterwards."""
    horizon = cfg.epsilon_decay_fraction * total_steps
    if horizon <= 0:
        return cfg.epsilon_final
    frac = min(1.0, step / horizon)
    return cfg.epsilon_start + (cfg.epsilon_final - cfg.epsilon_start) * frac


def select_action(net: QNet, features: np.ndarray, mask: frozenset[Action],
                  epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy over the available actions; ties go to the smallest id."""
    if not mask:
        raise ValueError("cannot select from an empty action mask")
    ids = sorted(mask)
    if rng.random() < epsilon:
        return Action(ids[int(rng.integers(len(ids)))])
    q = net.forward(features)
    best = ids[0]
    for a in ids[1:]:
        if q[a] > q[best]:
            best = a
    return Action(best)


def masked_max_q(net: QNet, features: np.ndarray, mask: frozenset[Action]) -> float:
    q = net.forward(features)
    return max(float(q[a]) for a in sorted(mask))


def bellman_target(tr: Transition, net: QNet, gamma: float) -> float:
    """y = r for terminal transitions, else r + gamma * max_a' Q(s', a')
    restricted to the successor's available actions."""
    if tr.terminal or not tr.next_mask:
        return tr.reward
    return tr.reward + gamma * masked_max_q(
        net, np.asarray(tr.next_features, dtype=np.float64), tr.next_mask
    )


def bellman_targets(batch: Sequence[Transition], net: QNet, gamma: float) -> np.ndarray:
    ys = np.array([tr.reward for tr in batch])
    boot = [i for i, tr in enumerate(batch) if not tr.terminal and tr.next_mask]
    if boot:
        nxt = np.stack([np.asarray(batch[i].next_features, dtype=np.float64)
                        for i in boot])
        q = net.forward_batch(nxt)
        for row, i in enumerate(boot):
            ys[i] += gamma * max(q[row, a] for a in sorted(batch[i].next_mask))
    return ys


@dataclass
class EpisodeLog:
    episode: int
    steps: int
    mean_reward: float
    final_dice: float
    loss: float
    epsilon: float


@dataclass
class TrainResult:
    net: QNet
    episodes: list[EpisodeLog] = dc_field(default_factory=list)
    total_steps: int = 0
    total_updates: int = 0


def _write_log_header(fh: IO[str], cfg: TrainConfig) -> csv.writer:
    fh.write("# config: " + json.dumps(asdict(cfg), sort_keys=True) + "\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    return writer


def train(
    cases: Sequence[Case],
    cfg: TrainConfig,
    backend: SegmenterBackend,
    env_config: Optional[EnvConfig] = None,
    log_path: Optional[str | Path] = None,
    checkpoint_path: Optional[str | Path] = None,
    progress: Optional[Callable[[EpisodeLog], None]] = None,
) -> TrainResult:
    """Run the full training loop; reproducible from cfg.seed with the
    synthetic backend. On backend failure the partial log is preserved."""
    if not cases:
        raise ValueError("training requires a non-empty dataset")
    shape = cases[0].shape
    if any(c.shape != shape for c in cases):
        raise ValueError("all cases must share one grid shape")

    ss = np.random.SeedSequence(cfg.seed)
    net_ss, act_ss, case_ss, batch_ss = ss.spawn(4)
    net = QNet(default_spec(5, *shape), seed=net_ss)
    opt = Adam(net, learning_rate=cfg.learning_rate)
    target_net = net.clone() if cfg.target_sync_every > 0 else None

    rng_act = np.random.default_rng(act_ss)
    rng_case = np.random.default_rng(case_ss)
    rng_batch = np.random.default_rng(batch_ss)

    env_cfg = env_config or EnvConfig(episode_len=cfg.episode_len, discount=cfg.gamma)
    if env_cfg.episode_len != cfg.episode_len:
        raise ValueError("env_config.episode_len must match cfg.episode_len")
    env = Environment(backend, env_cfg)
    buf = ReplayBuffer(cfg.replay_capacity)
    result = TrainResult(net=net)

    log_fh: Optional[IO[str]] = None
    writer = None
    if log_path is not None:
        log_fh = open(log_path, "w", encoding="utf-8")
        writer = _write_log_header(log_fh, cfg)

    step_count = 0
    updates = 0
    last_loss = math.nan
    try:
        for episode in range(1, cfg.episodes + 1):
            case = cases[int(rng_case.integers(len(cases)))]
            state, mask = env.reset(case)
            feats32 = featurize(state).astype(np.float32)
            rewards: list[float] = []
            eps = epsilon_at(step_count, cfg.total_steps, cfg)
            while not env.done:
                eps = epsilon_at(step_count, cfg.total_steps, cfg)
                action = select_action(
                    net, feats32.astype(np.float64), mask, eps, rng_act
                )
                res = env.step(action)
                next32 = res.next_features.astype(np.float32)
                buf.push(Transition(feats32, action, res.reward, next32,
                                    res.done, res.info.action_mask))
                feats32, mask = next32, res.info.action_mask
                rewards.append(res.reward)
                step_count += 1
                if (len(buf) >= cfg.effective_warmup
                        and step_count % cfg.steps_per_update == 0):
                    batch = buf.sample(rng_batch, cfg.batch_size)
                    ys = bellman_targets(batch, target_net or net, cfg.gamma)
                    x = np.stack([np.asarray(tr.features, dtype=np.float64)
                                  for tr in batch])
                    acts = np.array([int(tr.action) for tr in batch])
                    last_loss = backward_and_step(net, x, acts, ys, opt)
                    updates += 1
                    if target_net is not None and updates % cfg.target_sync_every == 0:
                        target_net.set_params(net.params())
            row = EpisodeLog(
                episode=episode,
                steps=len(rewards),
                mean_reward=float(np.mean(rewards)) if rewards else 0.0,
                final_dice=env.state.last_dice,
                loss=last_loss,
                epsilon=eps,
            )
            result.episodes.append(row)
            if writer is not None:
                writer.writerow([row.episode, row.steps,
                                 repr(row.mean_reward), repr(row.final_dice),
                                 repr(row.loss), repr(row.epsilon)])
                log_fh.flush()
            if progress is not None:
                progress(row)
    finally:
        # on backend failure the partially written log survives
        if log_fh is not None:
            log_fh.close()

    result.total_steps = step_count
    result.total_updates = updates
    if checkpoint_path is not None:
        save_net(net, checkpoint_path)
    return result
