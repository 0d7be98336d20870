import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hanr.metrics import (
    MetricWindow,
    PmRunRecord,
    ingest_run,
    normalized_distances,
    normalized_signal,
    normalized_success_share,
    prep_success,
    relative_success,
    rsrp_index,
    rsrq_index,
)
from hanr.model import IdAllocator, ListState, Nrt, TrackingTables, nrt_insert
from hanr.model import Actor, NeighborRelation

from conftest import make_cell


def record(target, s=0, a=0, sp=0, ap=0, rsrp=None, rsrq=None, run=1, source=11):
    return PmRunRecord(
        run=run,
        source_db_id=source,
        target_db_id=target,
        s_ho=s,
        a_ho=a,
        sp_ho=sp,
        ap_ho=ap,
        rsrp_samples=list(rsrp or []),
        rsrq_samples=list(rsrq or []),
    )


class TestSuccessShare:
    def test_three_way_split(self):
        recs = [record(1, s=30), record(2, s=50), record(3, s=20)]
        assert normalized_success_share(recs) == {1: 0.3, 2: 0.5, 3: 0.2}

    def test_all_traffic_to_one_relation(self):
        recs = [record(1, s=7), record(2), record(3)]
        assert normalized_success_share(recs) == {1: 1.0, 2: 0.0, 3: 0.0}

    def test_zero_traffic_yields_zeros(self):
        recs = [record(1), record(2), record(3)]
        assert normalized_success_share(recs) == {1: 0.0, 2: 0.0, 3: 0.0}

    @given(st.lists(st.integers(min_value=0, max_value=500), min_size=1, max_size=12))
    def test_shares_sum_to_one_or_zero(self, counts):
        recs = [record(i, s=c) for i, c in enumerate(counts)]
        shares = normalized_success_share(recs)
        total = math.fsum(shares.values())
        if sum(counts) == 0:
            assert total == 0.0
        else:
            assert total == 1.0


class TestPerRelationRates:
    def test_relative_success(self):
        assert relative_success(record(1, s=9, a=10, sp=10, ap=10)) == 0.9
        assert relative_success(record(1, s=5, a=5, sp=5, ap=5)) == 1.0
        assert relative_success(record(1)) == 0.0

    def test_prep_success(self):
        assert prep_success(record(1, sp=4, ap=8)) == 0.5
        assert prep_success(record(1, sp=3, ap=3)) == 1.0
        assert prep_success(record(1)) == 0.0

    def test_counter_chain_enforced(self):
        with pytest.raises(ValueError):
            record(1, s=2, a=1, sp=3, ap=3).validate()
        with pytest.raises(ValueError):
            record(1, s=0, a=2, sp=1, ap=3).validate()


class TestNormalizedSignal:
    def test_hand_computed_index_mapping(self):
        recs = [
            record(1, rsrp=[-80.0]),
            record(2, rsrp=[-100.0]),
            record(3, rsrp=[-120.0]),
        ]
        out = normalized_signal(recs, "rsrp")
        assert out[1] == 1.0
        assert out[2] == pytest.approx(40 / 60, abs=1e-12)
        assert out[3] == pytest.approx(20 / 60, abs=1e-12)

    def test_single_measured_relation_scores_one(self):
        out = normalized_signal([record(1, rsrp=[-97.5, -98.5])], "rsrp")
        assert out == {1: 1.0}

    def test_relation_without_samples_scores_zero(self):
        recs = [record(1, rsrp=[-90.0]), record(2)]
        out = normalized_signal(recs, "rsrp")
        assert out[2] == 0.0

    def test_nothing_measured_scores_zero(self):
        assert normalized_signal([record(1), record(2)], "rsrp") == {1: 0.0, 2: 0.0}

    def test_rsrq_uses_half_db_index(self):
        assert rsrq_index(-19.5) == 0
        assert rsrq_index(-3.0) == 33
        assert rsrq_index(0.0) == 34
        recs = [record(1, rsrq=[-10.0]), record(2, rsrq=[-15.0])]
        out = normalized_signal(recs, "rsrq")
        assert out[1] == 1.0
        assert out[2] == pytest.approx(9 / 19, abs=1e-12)

    def test_index_clamping(self):
        assert rsrp_index(-150.0) == 0
        assert rsrp_index(-20.0) == 97
        assert rsrp_index(-140.0) == 0

    @given(
        st.lists(
            st.lists(st.floats(min_value=-140, max_value=-44), min_size=0, max_size=5),
            min_size=1,
            max_size=8,
        )
    )
    def test_outputs_bounded_and_order_preserving(self, sample_sets):
        recs = [record(i, rsrp=s) for i, s in enumerate(sample_sets)]
        out = normalized_signal(recs, "rsrp")
        means = {i: (math.fsum(s) / len(s) if s else None) for i, s in enumerate(sample_sets)}
        for i, v in out.items():
            assert 0.0 <= v <= 1.0
        for i in out:
            for j in out:
                if means[i] is not None and means[j] is not None and means[i] > means[j]:
                    assert out[i] >= out[j]


class TestWindow:
    def test_constant_series(self):
        win = MetricWindow(10)
        for _ in range(10):
            win.push_run(1, 0.4, 0.4, 0.4, 0.4, 0.4)
        assert win.average(1, "ns_ho") == pytest.approx(0.4, abs=1e-12)

    def test_two_run_mean(self):
        win = MetricWindow(2)
        win.push_run(1, 1.0, 0.0, 0.0, 0.0, 0.0)
        win.push_run(1, 0.0, 0.0, 0.0, 0.0, 0.0)
        assert win.average(1, "ns_ho") == 0.5

    def test_random_series_matches_direct_summation(self):
        rng = random.Random(99)
        win = MetricWindow(5)
        series = [rng.random() for _ in range(5)]
        for v in series:
            win.push_run(1, v, v, v, v, v)
        expected = sum(series) / len(series)
        assert win.average(1, "nrsrp") == pytest.approx(expected, abs=1e-12)

    def test_only_last_w_runs_are_kept(self):
        win = MetricWindow(3)
        for v in (1.0, 1.0, 0.0, 0.0, 0.0):
            win.push_run(1, v, 0, 0, 0, 0)
        assert win.average(1, "ns_ho") == 0.0
        assert win.runs_stored(1) == 3

    def test_short_history_uses_available_runs(self):
        win = MetricWindow(10)
        win.push_run(1, 0.8, 0, 0, 0, 0)
        assert win.average(1, "ns_ho") == 0.8

    def test_empty_window_raises(self):
        win = MetricWindow(3)
        with pytest.raises(LookupError):
            win.average(1, "ns_ho")
        assert win.average_or_zero(1, "ns_ho") == 0.0

    def test_rejects_out_of_range_values(self):
        win = MetricWindow(3)
        with pytest.raises(ValueError):
            win.push_run(1, 1.2, 0, 0, 0, 0)

    def test_round_trips_through_dict(self):
        win = MetricWindow(4)
        win.push_run(1, 0.1, 0.2, 0.3, 0.4, 0.5)
        win.push_run(2, 0.6, 0.7, 0.8, 0.9, 1.0)
        clone = MetricWindow.from_dict(win.to_dict(), 4)
        assert clone.to_dict() == win.to_dict()


class TestGeometry:
    def _table(self, positions):
        owner = make_cell(1, 11, pos=(0.0, 0.0))
        nrt = Nrt(owner, capacity=16)
        lists, tracking, ids = ListState(), TrackingTables(), IdAllocator()
        for i, pos in enumerate(positions):
            target = make_cell(2, 21 + i, pos=pos)
            nrt_insert(
                nrt,
                NeighborRelation.create(ids.new_relation_id(), owner, target, Actor.HANR, 1),
                lists,
                tracking,
                1,
            )
        return nrt

    def test_farthest_scores_one(self):
        nrt = self._table([(2.0, 0.0), (0.0, 4.0), (8.0, 0.0)])
        out = normalized_distances(nrt)
        assert out == {21: 0.25, 22: 0.5, 23: 1.0}

    def test_cosited_table_scores_zero(self):
        nrt = self._table([(0.0, 0.0)])
        assert normalized_distances(nrt) == {21: 0.0}

    def test_empty_table_rejected(self):
        owner = make_cell(1, 11)
        with pytest.raises(ValueError):
            normalized_distances(Nrt(owner))


def test_ingest_run_is_deterministic_and_bounded():
    rng = random.Random(5)
    win_a, win_b = MetricWindow(4), MetricWindow(4)
    for run in range(1, 9):
        recs = []
        for t in (1, 2, 3):
            ap = rng.randint(0, 10)
            sp = rng.randint(0, ap) if ap else 0
            a = rng.randint(0, sp) if sp else 0
            s = rng.randint(0, a) if a else 0
            samples = [rng.uniform(-120, -70) for _ in range(rng.randint(0, 4))]
            recs.append(record(t, s=s, a=a, sp=sp, ap=ap, rsrp=samples, rsrq=[x / 8 for x in samples], run=run))
        ingest_run(win_a, recs)
        ingest_run(win_b, recs)
    assert win_a.to_dict() == win_b.to_dict()
    for t in (1, 2, 3):
        for metric in ("ns_ho", "rs_ho", "ps_ho", "nrsrp", "nrsrq"):
            assert 0.0 <= win_a.average(t, metric) <= 1.0
