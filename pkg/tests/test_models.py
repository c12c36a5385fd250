import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamexperts.models import (
    Explicit,
    HiddenBest,
    HotStreak,
    IID,
    Instance,
    ModelError,
    RandomOrderBest,
    TwoPhase,
    build_instance,
)


def test_explicit_table_best_arm_sum():
    # 3x2 table [[0,1],[1,0],[0,0]]: both column sums are 1; ties break to arm 0
    inst = build_instance(Explicit(((0, 1), (1, 0), (0, 0))), n=2, T=3, seed=1)
    totals = inst.arm_totals()
    assert totals.tolist() == [1.0, 1.0]
    assert int(totals.argmin()) == 0


def test_losses_are_pure_and_replayable():
    inst = build_instance(HiddenBest(gap=0.5), n=6, T=128, seed=42)
    first = [inst.loss(t, i) for t in range(1, 129) for i in range(6)]
    again = [inst.loss(t, i) for t in range(1, 129) for i in range(6)]
    assert first == again
    rebuilt = build_instance(HiddenBest(gap=0.5), n=6, T=128, seed=42)
    assert first == [rebuilt.loss(t, i) for t in range(1, 129) for i in range(6)]


def test_table_matches_pointwise_access():
    inst = build_instance(HiddenBest(gap=0.5, best_index=2), n=5, T=64, seed=7)
    pointwise = np.array([[inst._loss_uncached(t, i) for i in range(5)] for t in range(1, 65)])
    assert np.array_equal(inst.loss_table(), pointwise)


def test_degenerate_gap_is_deterministic():
    inst = build_instance(HiddenBest(gap=1.0, best_index=0), n=2, T=4, seed=3)
    for t in range(1, 5):
        assert inst.loss(t, 0) == 0.0
        assert inst.loss(t, 1) == 1.0


def test_binary_mode_emits_zero_one_only():
    for model in (HiddenBest(gap=0.3), IID((0.2, 0.8, 0.5)), HotStreak(8, 0.1, 0.9)):
        n = 3 if isinstance(model, (IID, HotStreak)) else 4
        inst = build_instance(model, n=n, T=200, seed=11)
        assert set(np.unique(inst.loss_table())) <= {0.0, 1.0}


def test_real_mode_emits_rates():
    inst = build_instance(IID((0.2, 0.8)), n=2, T=10, seed=1, binary=False)
    assert inst.loss(3, 0) == 0.2
    assert inst.loss(9, 1) == 0.8


def test_random_order_best_total_is_fixed_by_gamma():
    # the permutation spreads the losses but never changes their sum
    for seed in range(5):
        inst = build_instance(RandomOrderBest(gamma=2.0), n=8, T=1024, seed=seed)
        best = inst.best_index
        expected = math.floor(2.0 * math.sqrt(8 * 1024))
        assert inst.arm_totals()[best] == expected


def test_random_order_best_is_the_argmin():
    inst = build_instance(RandomOrderBest(gamma=1.0), n=8, T=4096, seed=5)
    totals = inst.arm_totals()
    assert int(totals.argmin()) == inst.best_index


def test_two_phase_switches_rates():
    inst = build_instance(
        TwoPhase(switch_day=5, before=(0.0, 1.0), after=(1.0, 0.0)), n=2, T=8, seed=0
    )
    assert [inst.loss(t, 0) for t in range(1, 9)] == [0, 0, 0, 0, 1, 1, 1, 1]
    assert [inst.loss(t, 1) for t in range(1, 9)] == [1, 1, 1, 1, 0, 0, 0, 0]


def test_validation_errors():
    with pytest.raises(ModelError):
        build_instance(HiddenBest(gap=1.5), n=2, T=4, seed=0)
    with pytest.raises(ModelError):
        build_instance(IID((0.5,)), n=2, T=4, seed=0)
    with pytest.raises(ModelError):
        build_instance(HiddenBest(gap=0.5), n=0, T=4, seed=0)
    with pytest.raises(ModelError):
        build_instance(HiddenBest(gap=0.5), n=2, T=0, seed=0)
    with pytest.raises(ModelError):
        build_instance(Explicit(((0.0,),)), n=1, T=2, seed=0)


def test_small_horizon_warns_about_regime():
    with pytest.warns(UserWarning):
        build_instance(HiddenBest(gap=0.5), n=8, T=4, seed=0)


@settings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=1, max_value=6),
    st.integers(min_value=1, max_value=40),
    st.integers(min_value=0, max_value=2**32),
)
def test_oblivious_any_evaluation_order(n, T, seed):
    """Evaluating loss(t, i) in any order, any number of times, is identical."""
    inst = Instance(n=n, T=max(T, n), model=HiddenBest(gap=0.4), seed=seed)
    cells = [(t, i) for t in range(1, inst.T + 1) for i in range(n)]
    forward = {c: inst.loss(*c) for c in cells}
    for t, i in reversed(cells):
        assert inst.loss(t, i) == forward[(t, i)]
