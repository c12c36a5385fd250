import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamexperts import oracles
from streamexperts.meter import MemoryMeter
from streamexperts.pool import (
    ApproximateCover,
    DESK_PROFILE,
    PAPER_PROFILE,
    PoolError,
    PoolState,
    RelaxedCover,
    TwoQueryCover,
    is_covered,
    pw,
)


def make_pool(n=16, T=256, B=8, cover=None, seed=0, meter=None):
    cover = cover if cover is not None else ApproximateCover(rho=2 / 3, scale=0.0)
    return PoolState(
        n, T, B, DESK_PROFILE, cover, np.random.default_rng(seed), meter
    )


def test_pw_examples():
    assert pw(4) == 2   # 4 = 1 * 2^2: cascade P1->P2 then P2->P3
    assert pw(6) == 1   # 6 = 3 * 2^1: only P1->P2
    for odd in (1, 3, 5, 7, 9):
        assert pw(odd) == 0
    with pytest.raises(ValueError):
        pw(0)


def test_epoch_tick_cascade_levels():
    pool = make_pool(B=8)
    pool.add_arm(3, day=1)
    assert pool.epoch_tick(8) == []          # tau=1, odd
    assert pool.epoch_tick(16) == [(1, 2)]   # tau=2
    assert pool.epoch_tick(24) == []         # tau=3
    assert pool.epoch_tick(32) == [(1, 2), (2, 3)]  # tau=4
    assert pool.arm_level[3] == 3


def test_subpool_recency_invariant():
    """P_k only holds arms that entered within the most recent 2^k epochs."""
    rng = np.random.default_rng(5)
    pool = make_pool(n=32, T=1024, B=4)
    day = 0
    for tau in range(1, 33):
        entry_day = day + 1
        arm = int(rng.integers(0, 32))
        if arm not in pool.arm_level:
            pool.add_arm(arm, entry_day)
        day += 4
        pool.epoch_tick(day)
        for level, arms in pool.levels.items():
            for e in arms.values():
                age_epochs = tau - (e.entry_day - 1) // 4
                assert age_epochs <= 2**level


def test_is_covered_threshold_hand_case():
    # scale set to 1: slack = 64^(2/3) = 16
    rule = ApproximateCover(rho=2 / 3, scale=1.0)
    assert rule.slack(64) == pytest.approx(16.0)
    assert is_covered(100.0, 100.0, rule, 64)          # equal -> covered
    assert is_covered(84.0, 100.0, rule, 64)           # exactly at the slack edge
    assert not is_covered(83.0, 100.0, rule, 64)       # below threshold - 1
    assert not is_covered(50.0, float("inf"), rule, 64)


def test_cover_slack_forms():
    assert RelaxedCover(gamma_arm=0.25, scale=2.0).slack(16) == pytest.approx(16.0)
    assert TwoQueryCover(scale=3.0).slack(25) == pytest.approx(15.0)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(min_value=0, max_value=1e4),
    st.floats(min_value=0, max_value=1e4),
    st.floats(min_value=0, max_value=100),
    st.integers(min_value=1, max_value=4096),
)
def test_cover_monotone_in_estimated_loss(est, bump, scale, D):
    """Raising the arm's estimate never flips covered -> not covered."""
    rule = TwoQueryCover(scale=scale)
    benchmark = 500.0
    if is_covered(est, benchmark, rule, D):
        assert is_covered(est + bump, benchmark, rule, D)


def test_ledger_update_and_conservation():
    pool = make_pool(B=4)
    pool.add_arm(1, day=1)
    pool.ledger_update(1, 3.0)
    pool.ledger_update(1, 5.0)
    assert pool.entry(1).total() == 8.0
    # a later entry opens a segment boundary; sums still add up
    pool.add_arm(2, day=5)
    pool.ledger_update(1, 2.0)
    e = pool.entry(1)
    assert e.seg_starts == [1, 5]
    assert e.seg_sums == [8.0, 2.0]
    assert e.total() == 10.0
    with pytest.raises(PoolError):
        pool.ledger_update(7, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_ledger_conservation_property(seed):
    """Sum of segment values equals the sum of all credits ever made."""
    rng = np.random.default_rng(seed)
    pool = make_pool(n=8, T=64, B=2, seed=seed)
    credited = {a: 0.0 for a in range(8)}
    day = 1
    for _ in range(12):
        arm = int(rng.integers(0, 8))
        if arm not in pool.arm_level:
            pool.add_arm(arm, day)
        for _ in range(int(rng.integers(0, 4))):
            target = int(rng.choice(list(pool.arm_level)))
            amt = float(rng.uniform(0, 5))
            pool.ledger_update(target, amt)
            credited[target] += amt
        day += 2
    for arm in pool.arm_level:
        assert pool.entry(arm).total() == pytest.approx(credited[arm])


def test_benchmark_single_filter_arm_is_its_loss():
    pool = make_pool(B=4)
    pool.add_arm(0, day=1)
    pool.add_arm(1, day=1)
    pool.ledger_update(1, 6.0)
    assert pool.dynamic_benchmark(0, (0, 8), [1]) == 6.0


def test_benchmark_excludes_the_tested_arm():
    pool = make_pool(B=4)
    pool.add_arm(0, day=1)
    pool.add_arm(1, day=1)
    pool.ledger_update(0, 1.0)
    pool.ledger_update(1, 9.0)
    assert pool.dynamic_benchmark(0, (0, 4), [0, 1]) == 9.0
    assert pool.dynamic_benchmark(0, (0, 4), [0]) == float("inf")


def test_benchmark_matches_exact_oracle_on_true_losses():
    """Feeding the ledger true per-day losses reproduces exact_benchmark."""
    rng = np.random.default_rng(9)
    n, T, B = 5, 32, 4
    losses = rng.integers(0, 2, size=(T, n)).astype(float)
    pool = make_pool(n=n, T=T, B=B, seed=1)
    entries = {0: 1, 1: 1, 2: 5, 3: 9, 4: 17}
    for day in range(1, T + 1):
        for arm, e_day in entries.items():
            if day == e_day:
                pool.add_arm(arm, day)
        for arm, e_day in entries.items():
            if day >= e_day:
                pool.ledger_update(arm, float(losses[day - 1, arm]))
    for arm, filt in ((0, [1, 2, 3]), (4, [1, 3]), (2, [0, 1, 3, 4])):
        d1 = entries[arm] - 1
        got = pool.dynamic_benchmark(arm, (d1, 32), filt)
        want = oracles.exact_benchmark(
            entries, (d1, 32), [f for f in filt if f != arm], losses, B
        )
        assert got == pytest.approx(want)


def test_benchmark_rejects_misaligned_lifespan():
    pool = make_pool(B=4)
    pool.add_arm(0, day=1)
    pool.add_arm(1, day=1)
    with pytest.raises(PoolError):
        pool.dynamic_benchmark(0, (1, 8), [1])


def test_filter_empty_set_evicts_nothing():
    pool = make_pool(B=4)
    for a in (0, 1, 2):
        pool.add_arm(a, day=1)
    survivors = pool.filter_pool([], [0, 1, 2], now=4)
    assert sorted(survivors) == [0, 1, 2]
    assert len(pool) == 3


def test_filter_dominant_arm_evicts_all_others():
    cover = TwoQueryCover(scale=0.0)  # zero slack
    pool = make_pool(B=4, cover=cover)
    for a in range(5):
        pool.add_arm(a, day=1)
    for day in range(1, 5):
        for a in range(5):
            pool.ledger_update(a, 0.0 if a == 3 else 2.0)
    survivors = pool.filter_pool([3], list(range(5)), now=4)
    assert survivors == [3]
    assert [a for _, a in pool.eviction_log] == [0, 1, 2, 4]


def test_filter_matches_brute_force_cover_decisions():
    rng = np.random.default_rng(11)
    cover = TwoQueryCover(scale=1.0)
    pool = make_pool(n=5, T=64, B=4, cover=cover)
    losses = rng.uniform(0, 2, size=(8, 5))
    for a in range(5):
        pool.add_arm(a, day=1)
    for day in range(1, 9):
        for a in range(5):
            pool.ledger_update(a, float(losses[day - 1, a]))
    filt = [1, 4]
    want_evicted = []
    for a in range(5):
        if a in filt:
            continue
        bm = min(losses[:, j].sum() for j in filt)
        if losses[:, a].sum() >= bm - cover.slack(8):
            want_evicted.append(a)
    pool.filter_pool(filt, list(range(5)), now=8)
    assert [a for _, a in pool.eviction_log] == want_evicted


def test_merge_of_empty_pools_is_empty():
    pool = make_pool(B=4)
    pool.merge(2, 1, now=4)
    assert len(pool) == 0


def test_merge_small_pool_returned_unchanged():
    pool = make_pool(n=64, T=256, B=4)
    for a in range(3):
        pool.add_arm(a, day=1)
    pool.merge(2, 1, now=4)
    assert len(pool) == 3  # below the small-size threshold: no eviction


def test_pool_cap_is_a_hard_failure():
    meter = MemoryMeter()
    pool = make_pool(n=4, T=16, B=2, meter=meter)
    cap = int(pool._cap)
    with pytest.raises(PoolError):
        for a in range(cap + 2):
            pool.levels.setdefault(1, {})
            pool.add_arm(a, day=1)
            if len(pool) > cap:
                pool.epoch_tick(2)


def test_meter_tracks_entries_and_segments():
    meter = MemoryMeter()
    pool = make_pool(B=4, meter=meter)
    pool.add_arm(0, day=1)
    assert meter.current == 5  # arm id, entry day, play weight, 1 segment pair
    pool.add_arm(1, day=5)
    assert meter.current == 5 + 5 + 2  # new entry plus a new segment for arm 0
    pool.remove_arm(0, day=8)
    assert meter.current == 5
    assert pool.words() == meter.current


def test_dump_lists_every_entry():
    pool = make_pool(B=4)
    pool.add_arm(2, day=1)
    pool.ledger_update(2, 1.5)
    text = pool.dump()
    assert "arm=2" in text
    assert "level=1" in text
    assert "entry_day=1" in text


def test_profiles_expose_thresholds():
    for prof in (PAPER_PROFILE, DESK_PROFILE):
        assert prof.mark_prob(16, 4096) <= 1.0
        assert prof.small_size(16, 4096) > 0
        assert prof.merge_rounds(16, 4096) >= 1
        assert prof.pool_cap(16, 4096) >= 16
        rule = prof.approximate_cover(16, 4096, rho=2 / 3)
        assert rule.slack(64) >= 0
    assert PAPER_PROFILE.subpool_cap(16, 4096) > DESK_PROFILE.subpool_cap(16, 4096)
