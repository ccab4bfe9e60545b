"""Baseline prompt-form policies and the evaluation harness.

Reporting follows the per-step schema: mean/std Dice over all cases (cases
that stopped early carry their last Dice forward), an action histogram over
the cases still interacting, and the count of interaction steps whose Dice
gain fell below -0.1.
"""
from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .environment import EnvConfig, Environment
from .features import featurize
from .grid import Action, Case
from .hashing import fnv1a64, splitmix64
from .metrics import count_misunderstandings
from .segmenter import BackendError, SegmenterBackend
from .tinynet import QNet


class Policy(Protocol):
    """Chooses one of the currently available prompt forms."""

    name: str

    def select(self, env: Environment, rng: np.random.Generator) -> Action: ...


class RandomPolicy:
    """Uniform over the available actions."""

    name = "random"

    def select(self, env: Environment, rng: np.random.Generator) -> Action:
        ids = sorted(env.action_mask)
        if not ids:
            raise ValueError("empty action mask")
        return Action(ids[int(rng.integers(len(ids)))])


class AlternatingPolicy:
    """Foreground click on odd steps, background click on even steps.

    If the scheduled action is unavailable it falls back to the other one,
    and failing that to the smallest available action id.
    """

    name = "alternating"

    def select(self, env: Environment, rng: np.random.Generator) -> Action:
        mask = env.action_mask
        if not mask:
            raise ValueError("empty action mask")
        t = env.state.t + 1  # 1-based index of the step about to be taken
        scheduled = Action.FOREGROUND if t % 2 == 1 else Action.BACKGROUND
        other = Action.BACKGROUND if scheduled == Action.FOREGROUND else Action.FOREGROUND
        if scheduled in mask:
            return scheduled
        if other in mask:
            return other
        return Action(min(mask))


class GreedyOraclePolicy:
    """Tries every available action via snapshot/rollback and keeps the one
    with the largest immediate Dice gain; ties go to the smallest action id.

    Evaluated at step 1 only this is the one-step oracle reference."""

    name = "oracle"

    def select(self, env: Environment, rng: np.random.Generator) -> Action:
        mask = env.action_mask
        if not mask:
            raise ValueError("empty action mask")
        snap = env.snapshot()
        best_action: Optional[Action] = None
        best_reward = -np.inf
        for a in sorted(mask):
            reward = env.step(a).reward
            env.restore(snap)
            if reward > best_reward:
                best_action, best_reward = a, reward
        assert best_action is not None
        return best_action


class CheckpointPolicy:
    """Greedy (epsilon=0) policy of a trained value network."""

    def __init__(self, net: QNet, name: str = "checkpoint"):
        self.net = net
        self.name = name

    def select(self, env: Environment, rng: np.random.Generator) -> Action:
        ids = sorted(env.action_mask)
        if not ids:
            raise ValueError("empty action mask")
        q = self.net.forward(featurize(env.state))
        best = ids[0]
        for a in ids[1:]:
            if q[a] > q[best]:
                best = a
        return Action(best)


class FixedActionPolicy:
    """Always the given action when available, else the smallest available."""

    def __init__(self, action: Action):
        self.action = Action(action)
        self.name = f"fixed-{self.action.name.lower()}"

    def select(self, env: Environment, rng: np.random.Generator) -> Action:
        mask = env.action_mask
        if not mask:
            raise ValueError("empty action mask")
        return self.action if self.action in mask else Action(min(mask))


@dataclass(frozen=True)
class CaseTrace:
    case_id: str
    actions: tuple[int, ...]
    rewards: tuple[float, ...]
    dices: tuple[float, ...]

    @property
    def final_dice(self) -> float:
        return self.dices[-1] if self.dices else 0.0


@dataclass(frozen=True)
class EvalFailure:
    case_id: str
    error: str


@dataclass(frozen=True)
class StepRow:
    step: int
    active: int
    action_pct: tuple[float, float, float, float]
    dice_mean: float
    dice_std: float
    misunderstandings: int


@dataclass
class EvalReport:
    policy: str
    steps: int
    seed: int
    traces: list[CaseTrace] = field(default_factory=list)
    failures: list[EvalFailure] = field(default_factory=list)

    def dice_at(self, trace: CaseTrace, step: int) -> float:
        """Dice after `step` (1-based); stopped cases carry the last value."""
        if not trace.dices:
            return 0.0
        return trace.dices[min(step, len(trace.dices)) - 1]

    def step_rows(self) -> list[StepRow]:
        rows = []
        for step in range(1, self.steps + 1):
            active = [t for t in self.traces if len(t.actions) >= step]
            counts = [0, 0, 0, 0]
            for t in active:
                counts[t.actions[step - 1]] += 1
            n_active = len(active)
            pct = tuple(
                100.0 * c / n_active if n_active else 0.0 for c in counts
            )
            dices = np.array([self.dice_at(t, step) for t in self.traces])
            rows.append(
                StepRow(
                    step=step,
                    active=n_active,
                    action_pct=pct,  # type: ignore[arg-type]
                    dice_mean=float(dices.mean()) if dices.size else 0.0,
                    dice_std=float(dices.std()) if dices.size else 0.0,
                    misunderstandings=count_misunderstandings(
                        [t.rewards for t in self.traces], step
                    ),
                )
            )
        return rows

    @property
    def mean_final_dice(self) -> float:
        if not self.traces:
            return 0.0
        return float(np.mean([self.dice_at(t, self.steps) for t in self.traces]))

    @property
    def one_step_reference(self) -> float:
        """Mean Dice after the first interaction step."""
        if not self.traces:
            return 0.0
        return float(np.mean([self.dice_at(t, 1) for t in self.traces]))

    def to_json_dict(self) -> dict:
        return {
            "policy": self.policy,
            "steps": self.steps,
            "seed": self.seed,
            "num_cases": len(self.traces),
            "mean_final_dice": self.mean_final_dice,
            "one_step_reference": self.one_step_reference,
            "per_step": [
                {
                    "step": r.step,
                    "active": r.active,
                    "action_pct": list(r.action_pct),
                    "dice_mean": r.dice_mean,
                    "dice_std": r.dice_std,
                    "misunderstandings": r.misunderstandings,
                }
                for r in self.step_rows()
            ],
            "cases": [
                {
                    "id": t.case_id,
                    "actions": list(t.actions),
                    "rewards": list(t.rewards),
                    "dices": list(t.dices),
                }
                for t in self.traces
            ],
            "failures": [
                {"id": f.case_id, "error": f.error} for f in self.failures
            ],
        }

    def csv_rows(self) -> list[list]:
        out = []
        for r in self.step_rows():
            out.append(
                [self.policy, r.step]
                + [repr(p) for p in r.action_pct]
                + [repr(r.dice_mean), repr(r.dice_std), r.misunderstandings]
            )
        return out


EVAL_CSV_COLUMNS = (
    "policy", "step",
    "action0_pct", "action1_pct", "action2_pct", "action3_pct",
    "dice_mean", "dice_std", "misunderstandings",
)


def case_rng_seed(seed: int, case_id: str) -> int:
    return splitmix64((seed & ((1 << 64) - 1)) ^ fnv1a64(case_id.encode()))


def run_case(
    policy: Policy,
    case: Case,
    backend: SegmenterBackend,
    steps: int,
    seed: int,
    env_config: Optional[EnvConfig] = None,
) -> CaseTrace:
    """Roll one episode of at most `steps` interactions."""
    cfg = env_config or EnvConfig(episode_len=steps)
    if cfg.episode_len != steps:
        raise ValueError("env_config.episode_len must equal steps")
    env = Environment(backend, cfg)
    rng = np.random.default_rng(case_rng_seed(seed, case.id))
    env.reset(case)
    actions: list[int] = []
    rewards: list[float] = []
    dices: list[float] = []
    while not env.done:
        action = policy.select(env, rng)
        res = env.step(action)
        actions.append(int(action))
        rewards.append(res.reward)
        dices.append(res.info.dice_after)
    return CaseTrace(case.id, tuple(actions), tuple(rewards), tuple(dices))


def _eval_one(args) -> tuple[str, Optional[CaseTrace], Optional[str]]:
    policy, case, backend_factory, steps, seed, env_config = args
    try:
        backend = backend_factory()
        trace = run_case(policy, case, backend, steps, seed, env_config)
        return case.id, trace, None
    except BackendError as exc:
        return case.id, None, str(exc)


def evaluate(
    policy: Policy,
    cases: Sequence[Case],
    backend_factory: Callable[[], SegmenterBackend],
    steps: int = 9,
    seed: int = 0,
    env_config: Optional[EnvConfig] = None,
    jobs: int = 1,
) -> EvalReport:
    """Evaluate `policy` on every case; deterministic given `seed`.

    Backend failures are recorded per case and the case is excluded from the
    aggregates. With jobs > 1 cases are distributed over a process pool; the
    reduction is ordered by case id either way.
    """
    if not cases:
        raise ValueError("evaluation requires a non-empty dataset")
    ordered = sorted(cases, key=lambda c: c.id)
    work = [(policy, c, backend_factory, steps, seed, env_config) for c in ordered]
    if jobs > 1 and len(ordered) > 1:
        with multiprocessing.Pool(processes=jobs) as pool:
            results = pool.map(_eval_one, work, chunksize=8)
    else:
        results = [_eval_one(w) for w in work]
    report = EvalReport(policy=policy.name, steps=steps, seed=seed)
    for case_id, trace, error in results:
        if trace is not None:
            report.traces.append(trace)
        else:
            report.failures.append(EvalFailure(case_id, error or "unknown"))
    return report
