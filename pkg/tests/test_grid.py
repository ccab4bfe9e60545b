import numpy as np
import pytest
from hypothesis import given, strategies as st

from tepo.grid import (
    Action,
    BinaryMask,
    BoxPrompt,
    Case,
    Grid2D,
    PointLabel,
    PointPrompt,
    ProbMap,
    PromptSet,
    clip_box,
    paint_disk,
    threshold_mask,
)


def test_grid2d_rejects_small_sides():
    with pytest.raises(ValueError):
        Grid2D(np.zeros((4, 64)))
    with pytest.raises(ValueError):
        Grid2D(np.zeros((64,)))


def test_binary_mask_rejects_other_values():
    with pytest.raises(ValueError):
        BinaryMask(np.array([[0, 2], [1, 0]]))


def test_probmap_range_checked():
    with pytest.raises(ValueError):
        ProbMap(np.full((8, 8), 1.5))
    with pytest.raises(ValueError):
        ProbMap(np.full((8, 8), -0.1))


def test_types_are_frozen_views():
    m = BinaryMask(np.zeros((8, 8), dtype=np.uint8))
    with pytest.raises(ValueError):
        m.data[0, 0] = 1


def test_threshold_uniform_zero_and_one():
    assert threshold_mask(ProbMap(np.zeros((8, 8)))).count() == 0
    assert threshold_mask(ProbMap(np.ones((8, 8)))).count() == 64


def test_threshold_half_is_background():
    # 0.5 is reserved as "no evidence": strict > 0.5
    assert threshold_mask(ProbMap(np.full((8, 8), 0.5))).count() == 0


@given(st.integers(8, 24), st.integers(8, 24), st.integers(0, 2**32))
def test_threshold_of_binary_prob_is_identity(h, w, seed):
    rng = np.random.default_rng(seed)
    mask = BinaryMask(rng.random((h, w)) < 0.5)
    roundtrip = threshold_mask(ProbMap(mask.data.astype(np.float64)))
    assert np.array_equal(roundtrip.data, mask.data)


def test_clip_box_clamps_out_of_range():
    assert clip_box(-5, -5, 100, 100, 64, 64) == BoxPrompt(0, 0, 63, 63)


def test_clip_box_identity_in_range():
    assert clip_box(3, 4, 10, 12, 64, 64) == BoxPrompt(3, 4, 10, 12)


def test_clip_box_reorders():
    assert clip_box(10, 10, 5, 5, 64, 64) == BoxPrompt(5, 5, 10, 10)


@given(
    st.integers(-100, 100), st.integers(-100, 100),
    st.integers(-100, 100), st.integers(-100, 100),
    st.integers(8, 64), st.integers(8, 64),
)
def test_clip_box_always_valid(r0, c0, r1, c1, h, w):
    box = clip_box(r0, c0, r1, c1, h, w)
    assert 0 <= box.r0 <= box.r1 < h
    assert 0 <= box.c0 <= box.c1 < w


def test_prompt_set_is_append_only_and_bounded():
    ps = PromptSet(16, 16)
    ps2 = ps.with_prompt(PointPrompt(3, 3, PointLabel.POSITIVE))
    assert len(ps) == 0 and len(ps2) == 1
    with pytest.raises(ValueError):
        ps2.with_prompt(PointPrompt(16, 3, PointLabel.POSITIVE))
    with pytest.raises(ValueError):
        ps2.with_prompt(BoxPrompt(0, 0, 16, 5))


@given(st.data())
def test_prompt_set_invariants_under_random_construction(data):
    h = data.draw(st.integers(8, 32))
    w = data.draw(st.integers(8, 32))
    ps = PromptSet(h, w)
    n = data.draw(st.integers(0, 6))
    for _ in range(n):
        if data.draw(st.booleans()):
            ps = ps.with_prompt(PointPrompt(
                data.draw(st.integers(0, h - 1)),
                data.draw(st.integers(0, w - 1)),
                data.draw(st.sampled_from(list(PointLabel))),
            ))
        else:
            r0 = data.draw(st.integers(0, h - 1))
            c0 = data.draw(st.integers(0, w - 1))
            ps = ps.with_prompt(BoxPrompt(
                r0, c0,
                data.draw(st.integers(r0, h - 1)),
                data.draw(st.integers(c0, w - 1)),
            ))
    assert len(ps) == n
    for p in ps:
        if isinstance(p, PointPrompt):
            assert 0 <= p.row < h and 0 <= p.col < w
        else:
            assert 0 <= p.r0 <= p.r1 < h and 0 <= p.c0 <= p.c1 < w


def test_case_validates_truth_nonempty():
    img = Grid2D(np.zeros((8, 8)))
    with pytest.raises(ValueError):
        Case("x", img, BinaryMask(np.zeros((8, 8), dtype=np.uint8)), seed=0)


def test_case_validates_shape_and_seed(small_case):
    img = Grid2D(np.zeros((8, 8)))
    truth = BinaryMask(np.ones((16, 16), dtype=np.uint8))
    with pytest.raises(ValueError):
        Case("x", img, truth, seed=0)
    with pytest.raises(ValueError):
        Case("x", small_case.image, small_case.truth, seed=2**64)


def test_paint_disk_clips_at_border():
    arr = np.zeros((8, 8))
    paint_disk(arr, 0, 0, 3)
    # quarter disk: lattice points with r*r + c*c <= 9 in the positive quadrant
    expected = sum(1 for r in range(4) for c in range(4) if r * r + c * c <= 9)
    assert arr.sum() == expected


def test_action_ids_match_contract():
    assert [int(a) for a in Action] == [0, 1, 2, 3]
    assert Action.FOREGROUND == 0 and Action.BOX == 3
