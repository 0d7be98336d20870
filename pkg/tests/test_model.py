import random

import pytest

from hanr.model import (
    NOT_FOUND,
    OK,
    PROTECTED,
    REJECT_CAPACITY,
    REJECT_DUPLICATE,
    REJECT_NR_BLACKLIST,
    REJECT_PLMN_BLACKLIST,
    REJECT_X2_BLACKLIST,
    Actor,
    IdAllocator,
    ListState,
    NeighborRelation,
    Nrt,
    Rat,
    RelType,
    TrackingTables,
    nrt_diff,
    nrt_insert,
    nrt_remove,
    rebuild_nrt_from_tracking,
    rel_type_for,
)

from conftest import make_cell


def setup_tables(capacity=8):
    owner = make_cell(1, 11, layer=0, pos=(0.0, 0.0))
    b = make_cell(2, 21, layer=0, pos=(1.0, 0.0))
    c = make_cell(3, 31, layer=1, pos=(2.0, 0.0))
    cells = {11: owner, 21: b, 31: c}
    return owner, cells, Nrt(owner, capacity), ListState(), TrackingTables(), IdAllocator()


def rel(ids, source, target, created_by=Actor.DANR, run=1):
    return NeighborRelation.create(ids.new_relation_id(), source, target, created_by, run)


def test_rel_type_derivation():
    a = make_cell(1, 11, layer=0)
    same_layer = make_cell(2, 21, layer=0)
    other_layer = make_cell(2, 22, layer=1)
    other_rat = make_cell(3, 31, layer=0, rat=Rat.UTRAN)
    assert rel_type_for(a, same_layer) is RelType.INTRA
    assert rel_type_for(a, other_layer) is RelType.INTER
    assert rel_type_for(a, other_rat) is RelType.IRAT


def test_insert_into_empty_table():
    owner, cells, nrt, lists, tracking, ids = setup_tables()
    assert nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run=1) == OK
    assert len(nrt.entries) == 1
    assert len(tracking.additions) == 1
    assert tracking.additions[0].target_db_id == 21


def test_insert_duplicate_target_rejected():
    owner, cells, nrt, lists, tracking, ids = setup_tables()
    nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run=1)
    again = rel(ids, owner, cells[21])
    assert nrt_insert(nrt, again, lists, tracking, run=1) == REJECT_DUPLICATE
    assert len(nrt.entries) == 1
    assert len(tracking.additions) == 1


def test_insert_reject_reasons_match_policy_oracle():
    """Every rejection reason, checked against an independent predicate oracle
    over all single-condition states of a three-cell fixture."""

    def oracle(nrt, candidate, lists):
        if candidate.target.cell_db_id in {e.target.cell_db_id for e in nrt.entries}:
            return REJECT_DUPLICATE
        if (candidate.source.cell_db_id, candidate.target.cell_db_id) in lists.nr_blacklist:
            return REJECT_NR_BLACKLIST
        if candidate.target.plmn in lists.plmn_blacklist:
            return REJECT_PLMN_BLACKLIST
        if candidate.source.bs_id != candidate.target.bs_id and (
            lists.x2_blocked(candidate.source.bs_id, candidate.target.bs_id)
        ):
            return REJECT_X2_BLACKLIST
        if len(nrt.entries) >= nrt.capacity:
            return REJECT_CAPACITY
        return OK

    scenarios = ["clean", "duplicate", "nr_blacklist", "plmn_blacklist", "x2_blacklist", "full"]
    for name in scenarios:
        owner, cells, nrt, lists, tracking, ids = setup_tables(capacity=2)
        if name == "duplicate":
            nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run=1)
        elif name == "nr_blacklist":
            lists.blacklist_nr((11, 21))
        elif name == "plmn_blacklist":
            lists.plmn_blacklist.add("00101")
        elif name == "x2_blacklist":
            lists.blacklist_x2((2, 1))  # reverse orientation must also block
        elif name == "full":
            nrt_insert(nrt, rel(ids, owner, cells[31]), lists, tracking, run=1)
            far = make_cell(4, 41, layer=0, pos=(3.0, 0.0))
            nrt_insert(nrt, NeighborRelation.create(ids.new_relation_id(), owner, far, Actor.DANR, 1), lists, tracking, run=1)
        candidate = rel(ids, owner, cells[21])
        expected = oracle(nrt, candidate, lists)
        records_before = len(tracking.additions)
        outcome = nrt_insert(nrt, candidate, lists, tracking, run=1)
        assert outcome == expected, f"{name}: {outcome} != {expected}"
        if expected != OK:
            assert len(tracking.additions) == records_before, f"{name} wrote a record"


def test_insert_requires_matching_owner():
    owner, cells, nrt, lists, tracking, ids = setup_tables()
    stray = rel(ids, cells[21], cells[31])
    with pytest.raises(ValueError):
        nrt_insert(nrt, stray, lists, tracking, run=1)


def test_remove_existing_target():
    owner, cells, nrt, lists, tracking, ids = setup_tables()
    nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run=1)
    assert nrt_remove(nrt, 21, Actor.HANR, tracking, run=2) == OK
    assert nrt.entries == []
    assert len(tracking.removals) == 1


def test_remove_whitelisted_target_is_protected():
    owner, cells, nrt, lists, tracking, ids = setup_tables()
    lists.whitelist_nr((11, 21))
    nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run=1)
    assert nrt.entries[0].no_remove
    assert nrt_remove(nrt, 21, Actor.HANR, tracking, run=2) == PROTECTED
    assert nrt_remove(nrt, 21, Actor.DANR, tracking, run=2) == PROTECTED
    assert len(nrt.entries) == 1 and not tracking.removals
    # Operators keep the override.
    assert nrt_remove(nrt, 21, Actor.OPERATOR, tracking, run=2) == OK


def test_remove_absent_target():
    owner, cells, nrt, lists, tracking, ids = setup_tables()
    assert nrt_remove(nrt, 99, Actor.HANR, tracking, run=1) == NOT_FOUND


def test_diff_identity_and_growth():
    owner, cells, nrt, lists, tracking, ids = setup_tables()
    nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run=1)
    before = nrt.snapshot()
    assert nrt_diff(before, before) == ([], [])
    nrt_insert(nrt, rel(ids, owner, cells[31]), lists, tracking, run=1)
    assert nrt_diff(before, nrt.snapshot()) == ([31], [])


def test_diff_matches_set_difference_oracle():
    rng = random.Random(7)
    owner, cells, nrt, lists, tracking, ids = setup_tables()
    for _ in range(50):
        a = frozenset(rng.sample(range(100, 160), 20))
        b = frozenset(rng.sample(range(100, 160), 20))
        from hanr.model import NrtSnapshot

        added, removed = nrt_diff(NrtSnapshot(11, a), NrtSnapshot(11, b))
        assert added == sorted(b - a)
        assert removed == sorted(a - b)


def test_diff_owner_mismatch_errors():
    from hanr.model import NrtSnapshot

    with pytest.raises(ValueError):
        nrt_diff(NrtSnapshot(11, frozenset()), NrtSnapshot(12, frozenset()))


class TestReadditionCounting:
    def test_first_addition_is_not_a_readdition(self):
        owner, cells, nrt, lists, tracking, ids = setup_tables()
        nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run=1)
        assert tracking.count_readditions(11, 21) == 0

    def test_add_remove_add(self):
        owner, cells, nrt, lists, tracking, ids = setup_tables()
        nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run=1)
        nrt_remove(nrt, 21, Actor.DANR, tracking, run=2)
        nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run=3)
        assert tracking.count_readditions(11, 21) == 1

    def test_scripted_alternation_counts_four(self):
        # add,rm,add,rm,add,rm,add,rm,add: four additions follow a removal.
        owner, cells, nrt, lists, tracking, ids = setup_tables()
        run = 1
        for step in range(9):
            if step % 2 == 0:
                assert nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run) == OK
            else:
                assert nrt_remove(nrt, 21, Actor.HANR, tracking, run) == OK
            run += 1
        assert tracking.count_readditions(11, 21) == 4

    def test_unknown_pair_counts_zero(self):
        tracking = TrackingTables()
        assert tracking.count_readditions(1, 2) == 0

    def test_count_is_monotone_over_time(self):
        rng = random.Random(3)
        owner, cells, nrt, lists, tracking, ids = setup_tables()
        previous = 0
        for run in range(1, 80):
            if 21 in nrt.targets() and rng.random() < 0.5:
                nrt_remove(nrt, 21, Actor.HANR, tracking, run)
            elif 21 not in nrt.targets():
                nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run)
            current = tracking.count_readditions(11, 21)
            assert current >= previous
            previous = current


def test_event_sourcing_round_trip_over_random_histories():
    """Replaying the tracking log from empty reproduces the live table exactly."""
    rng = random.Random(11)
    owner = make_cell(1, 11)
    cells = {11: owner}
    for t in range(21, 41):
        cells[t] = make_cell(2 + t % 3, t, layer=t % 2, pos=(float(t % 5), float(t % 7)))
    for trial in range(20):
        nrt = Nrt(owner, capacity=12)
        lists = ListState()
        tracking = TrackingTables()
        ids = IdAllocator()
        for run in range(1, 30):
            t = rng.choice(list(cells))
            if t == 11:
                continue
            if t in nrt.targets():
                nrt_remove(nrt, t, rng.choice(list(Actor)), tracking, run)
            else:
                creator = rng.choice([Actor.DANR, Actor.X2, Actor.HANR, Actor.OPERATOR])
                nrt_insert(
                    nrt,
                    NeighborRelation.create(ids.new_relation_id(), owner, cells[t], creator, run),
                    lists,
                    tracking,
                    run,
                )
        rebuilt = rebuild_nrt_from_tracking(owner, tracking, cells, lists, capacity=12)

        def fingerprint(table):
            return [
                (
                    e.target.cell_db_id,
                    e.relation_db_id,
                    e.rel_type,
                    e.created_by,
                    e.created_at_run,
                    e.created_seq,
                    e.ho_allowed,
                    e.no_remove,
                )
                for e in table.entries
            ]

        assert fingerprint(rebuilt) == fingerprint(nrt)


def test_blacklisted_pair_never_enters_table():
    owner, cells, nrt, lists, tracking, ids = setup_tables()
    lists.blacklist_nr((11, 21))
    for run in range(1, 6):
        nrt_insert(nrt, rel(ids, owner, cells[21]), lists, tracking, run)
        nrt.validate(lists)
    assert 21 not in nrt.targets()


def test_list_state_keeps_black_and_whitelists_disjoint():
    lists = ListState()
    lists.whitelist_nr((1, 2))
    lists.blacklist_nr((1, 2))
    assert (1, 2) not in lists.nr_whitelist
    assert not lists.whitelist_nr((1, 2))
    lists.validate()
    lists.whitelist_x2((1, 2))
    lists.blacklist_x2((1, 2))
    assert not lists.x2_whitelisted(1, 2)
    assert lists.x2_blocked(2, 1), "X2 block applies to both orientations"
    lists.validate()
