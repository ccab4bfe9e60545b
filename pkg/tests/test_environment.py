import numpy as np
import pytest

from tepo.environment import EnvConfig, Environment
from tepo.grid import Action, BinaryMask, Case, Grid2D, ProbMap
from tepo.segmenter import MockConfig, MockSegmenter
from tepo.synthdata import SynthConfig, generate_case


def _env(case=None, episode_len=9, mock=MockConfig()):
    env = Environment(MockSegmenter(mock), EnvConfig(episode_len=episode_len))
    if case is None:
        case = generate_case(SynthConfig(master_seed=5), 3)
    state, mask = env.reset(case)
    return env, state, mask


class ScriptedBackend:
    """Returns a fixed sequence of probability maps regardless of prompts."""

    def __init__(self, probs):
        self.probs = list(probs)
        self.i = 0

    def set_case(self, case):
        pass

    def predict(self, prompts):
        p = self.probs[min(self.i, len(self.probs) - 1)]
        self.i += 1
        return p


def test_reset_state_contract():
    env, state, mask = _env()
    assert state.t == 0
    assert len(state.prompts) == 0
    assert not state.prob.data.any()
    assert state.last_dice == 0.0
    assert not state.done
    assert mask  # a fresh case always admits at least the box


def test_reset_twice_identical():
    case = generate_case(SynthConfig(master_seed=5), 3)
    env, s1, m1 = _env(case)
    s2, m2 = env.reset(case)
    assert m1 == m2
    assert s1.t == s2.t and s1.last_dice == s2.last_dice
    assert np.array_equal(s1.prob.data, s2.prob.data)


def test_first_step_reward_equals_dice():
    env, _, mask = _env()
    res = env.step(sorted(mask)[0])
    assert res.reward == res.info.dice_after


def test_reward_is_exact_dice_delta():
    env, _, mask = _env()
    prev = 0.0
    while not env.done:
        res = env.step(sorted(env.action_mask)[0])
        assert res.reward == res.info.dice_after - prev
        prev = res.info.dice_after


def test_reward_telescoping_and_bounds():
    case = generate_case(SynthConfig(master_seed=11), 0)
    env, _, _ = _env(case)
    rng = np.random.default_rng(0)
    total = 0.0
    while not env.done:
        ids = sorted(env.action_mask)
        res = env.step(ids[int(rng.integers(len(ids)))])
        assert -1.0 <= res.reward <= 1.0
        total += res.reward
    assert abs(total - env.state.last_dice) < 1e-12


def test_unavailable_action_rejected():
    env, _, mask = _env()
    unavailable = set(Action) - set(mask)
    assert Action.BACKGROUND in unavailable  # empty prediction has no FP
    with pytest.raises(ValueError):
        env.step(Action.BACKGROUND)


def test_step_after_done_rejected():
    env, _, _ = _env(episode_len=1)
    env.step(sorted(env.action_mask)[0])
    assert env.done
    with pytest.raises(ValueError):
        env.step(Action.CENTER)


def test_episode_length_cap():
    env, _, _ = _env(episode_len=3)
    steps = 0
    while not env.done:
        env.step(sorted(env.action_mask)[-1])
        steps += 1
    assert steps <= 3


def test_snapshot_restore_bit_identical():
    env, _, _ = _env()
    env.step(Action.CENTER)
    assert not env.done
    snap = env.snapshot()
    a = env.step(sorted(env.action_mask)[0])
    env.restore(snap)
    b = env.step(sorted(env.action_mask)[0])
    assert a.reward == b.reward
    assert np.array_equal(a.next_features, b.next_features)
    assert a.info.action_mask == b.info.action_mask


def test_restore_allows_divergent_branch():
    env, _, _ = _env()
    snap = env.snapshot()
    env.step(Action.BOX)
    env.restore(snap)
    res = env.step(Action.CENTER)  # different branch from the same state
    assert env.state.t == 1
    assert res.info.dice_after >= 0.0


def test_restore_clears_done():
    env, _, _ = _env(episode_len=1)
    snap = env.snapshot()
    env.step(sorted(env.action_mask)[0])
    assert env.done
    env.restore(snap)
    assert not env.done


def test_restore_foreign_case_rejected():
    case_a = generate_case(SynthConfig(master_seed=5), 3)
    case_b = generate_case(SynthConfig(master_seed=5), 4)
    env_a, _, _ = _env(case_a)
    snap = env_a.snapshot()
    env_b, _, _ = _env(case_b)
    with pytest.raises(ValueError):
        env_b.restore(snap)


def test_episode_deterministic_in_seed_and_actions():
    case = generate_case(SynthConfig(master_seed=21), 1)
    traces = []
    for _ in range(2):
        env, _, _ = _env(case)
        dices = []
        while not env.done:
            dices.append(env.step(sorted(env.action_mask)[-1]).info.dice_after)
        traces.append(dices)
    assert traces[0] == traces[1]


def test_reported_dice_sequence_matches_cited_arithmetic():
    # a two-step dice sequence 0.4658 then 0.7035 must yield a second-step
    # reward of exactly their difference (0.2377 up to float precision)
    h = w = 128
    truth = np.zeros((h, w), dtype=np.uint8)
    truth.flat[:5000] = 1
    pred1 = np.zeros((h, w), dtype=np.uint8)
    pred1.flat[:2329] = 1
    pred1.flat[5000 : 5000 + (5000 - 2329)] = 1  # |pred|=5000, overlap 2329
    pred2 = np.zeros((h, w), dtype=np.uint8)
    pred2.flat[:2814] = 1
    pred2.flat[5000 : 5000 + (3000 - 2814)] = 1  # |pred|=3000, overlap 2814
    probs = [ProbMap(pred1 * 0.8 + 0.1), ProbMap(pred2 * 0.8 + 0.1)]
    case = Case("arith", Grid2D(np.zeros((h, w)) + 0.5), BinaryMask(truth), seed=1)

    env = Environment(ScriptedBackend(probs), EnvConfig(episode_len=2))
    env.reset(case)
    r1 = env.step(sorted(env.action_mask)[0])
    assert r1.info.dice_after == pytest.approx(0.4658, abs=1e-12)
    r2 = env.step(sorted(env.action_mask)[0])
    assert r2.info.dice_after == pytest.approx(0.7035, abs=1e-12)
    assert r2.reward == pytest.approx(0.2377, abs=1e-12)
