"""Interaction episode as a Markov decision process.

The reward for a step is the Dice gain it produced, so per-step rewards
telescope to the final Dice. An episode ends after `episode_len` steps or as
soon as no prompt form is available (the simulated expert stops interacting).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .clinician import ClinicianConfig, available_actions, realize_prompt
from .features import featurize
from .grid import Action, Case, ProbMap, Prompt, PromptSet, threshold_mask
from .metrics import dice
from .segmenter import SegmenterBackend

MAX_EPISODE_LEN = 64


@dataclass(frozen=True)
class EnvConfig:
    episode_len: int = 9
    discount: float = 0.9
    clinician: ClinicianConfig = field(default_factory=ClinicianConfig)

    def __post_init__(self) -> None:
        if not 1 <= self.episode_len <= MAX_EPISODE_LEN:
            raise ValueError(f"episode_len must be in [1, {MAX_EPISODE_LEN}]")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")


@dataclass(frozen=True)
class EnvState:
    """Value snapshot of an episode after `t` completed steps."""

    case: Case
    t: int
    prob: ProbMap          # prediction after step t; all-zero at t=0
    prompts: PromptSet     # the t prompts issued so far
    last_dice: float
    done: bool


@dataclass(frozen=True)
class StepInfo:
    dice_after: float
    prompt_issued: Optional[Prompt]
    action_mask: frozenset[Action]  # availability after this step


@dataclass(frozen=True)
class StepResult:
    reward: float  # dice_after - dice_before, exactly
    next_features: np.ndarray
    done: bool
    info: StepInfo


@dataclass(frozen=True)
class EnvSnapshot:
    """Opaque token for :meth:`Environment.restore`."""

    state: EnvState
    mask: frozenset[Action]


class Environment:
    """Single-episode MDP driver; not reentrant, one backend per instance."""

    def __init__(self, backend: SegmenterBackend, config: EnvConfig = EnvConfig()):
        self.backend = backend
        self.config = config
        self._state: Optional[EnvState] = None
        self._mask: frozenset[Action] = frozenset()

    @property
    def state(self) -> EnvState:
        if self._state is None:
            raise RuntimeError("environment not reset")
        return self._state

    @property
    def action_mask(self) -> frozenset[Action]:
        return self._mask

    @property
    def done(self) -> bool:
        return self.state.done

    def reset(self, case: Case) -> tuple[EnvState, frozenset[Action]]:
        self.backend.set_case(case)
        h, w = case.shape
        prob = ProbMap.zeros(h, w)
        # truth is non-empty by Case invariant, so dice(empty, truth) == 0
        state = EnvState(case, 0, prob, PromptSet(h, w), 0.0, False)
        mask = available_actions(
            threshold_mask(prob), case.truth, self.config.clinician, box_used=False
        )
        if not mask:
            state = replace(state, done=True)
        self._state, self._mask = state, mask
        return state, mask

    def step(self, action: Action) -> StepResult:
        s = self.state
        if s.done:
            raise ValueError("episode is finished; reset before stepping again")
        action = Action(action)
        if action not in self._mask:
            raise ValueError(f"action {action.name} is not available")
        cfg = self.config.clinician
        pred = threshold_mask(s.prob)
        # availability was already established when self._mask was computed
        prompt = realize_prompt(
            action, pred, s.case.truth, cfg, box_used=s.prompts.has_box(),
            check_available=False,
        )
        prompts = s.prompts.with_prompt(prompt)
        prob = self.backend.predict(prompts)
        if prob.shape != s.case.shape:
            raise ValueError(
                f"backend returned {prob.shape}, case is {s.case.shape}"
            )
        d = dice(threshold_mask(prob), s.case.truth)
        reward = d - s.last_dice
        t = s.t + 1
        mask = available_actions(
            threshold_mask(prob), s.case.truth, cfg, box_used=prompts.has_box()
        )
        done = t >= self.config.episode_len or not mask
        state = EnvState(s.case, t, prob, prompts, d, done)
        self._state, self._mask = state, mask
        return StepResult(reward, featurize(state), done, StepInfo(d, prompt, mask))

    def snapshot(self) -> EnvSnapshot:
        return EnvSnapshot(self.state, self._mask)

    def restore(self, snap: EnvSnapshot) -> EnvState:
        if self._state is not None and snap.state.case.id != self._state.case.id:
            raise ValueError(
                f"snapshot belongs to case {snap.state.case.id!r}, "
                f"environment is on {self._state.case.id!r}"
            )
        self._state, self._mask = snap.state, snap.mask
        return snap.state
