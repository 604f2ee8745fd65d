"""Leader schedule, vote classification, and commit rules."""

from collections import Counter

import pytest

from dagfin.leaders import (
    FALLBACK,
    STEADY,
    LeaderRecord,
    LeaderSchedule,
    VoteBook,
    VoteType,
    classify_vote,
    coin_revealed,
    fallback_leader,
    steady_leader,
    try_commit,
)
from dagfin.dag import BlockStore
from dagfin.types import BlockId, ConfigError

from helpers import fill_round, make_block, params_for


class TestSteadySchedule:
    def test_deterministic(self):
        p = params_for(1, coin_seed=11)
        s1 = LeaderSchedule(p)
        s2 = LeaderSchedule(p)
        assert [s1.steady_author(r) for r in range(1, 40, 2)] == \
               [s2.steady_author(r) for r in range(1, 40, 2)]

    def test_even_round_rejected(self):
        p = params_for(1, coin_seed=11)
        with pytest.raises(ConfigError):
            steady_leader(2, LeaderSchedule(p))

    def test_no_two_consecutive_equal(self):
        for seed in range(20):
            p = params_for(1, coin_seed=seed)
            sched = LeaderSchedule(p)
            picks = [sched.steady_author(r) for r in range(1, 200, 2)]
            for a, b in zip(picks, picks[1:]):
                assert a != b

    def test_roughly_uniform(self):
        p = params_for(1, coin_seed=3)
        sched = LeaderSchedule(p)
        picks = [sched.steady_author(r) for r in range(1, 2001, 2)]
        freq = Counter(picks)
        for a in range(p.n):
            assert abs(freq[a] / len(picks) - 0.25) < 0.05

    def test_override_respected(self):
        p = params_for(1, coin_seed=5, steady_override=(0, 1, 2, 3))
        sched = LeaderSchedule(p)
        assert [sched.steady_author(r) for r in (1, 3, 5, 7)] == [0, 1, 2, 3]


class TestFallbackCoin:
    def test_deterministic(self):
        p = params_for(1, coin_seed=9)
        assert fallback_leader(3, LeaderSchedule(p)) == \
               fallback_leader(3, LeaderSchedule(p))

    def test_waves_independent(self):
        p = params_for(1, coin_seed=9)
        sched = LeaderSchedule(p)
        picks = {fallback_leader(w, sched) for w in range(1, 30)}
        assert len(picks) > 1

    def test_roughly_uniform(self):
        p = params_for(1, coin_seed=4)
        sched = LeaderSchedule(p)
        freq = Counter(fallback_leader(w, sched) for w in range(1, 1001))
        for a in range(p.n):
            assert abs(freq[a] / 1000 - 0.25) < 0.05


def _progressing_view(p, rounds=8):
    """Fully synchronous view: every block points to all previous blocks."""
    store = BlockStore(p)
    for r in range(1, rounds + 1):
        fill_round(store, p, r)
    return store


def _stalled_wave_one(p):
    """Wave 1 whose second steady leader never produced a block."""
    sched = LeaderSchedule(p)
    s2 = sched.steady_author(3)
    store = BlockStore(p)
    fill_round(store, p, 1)
    fill_round(store, p, 2)
    fill_round(store, p, 3, skip={s2})
    for r in range(4, 9):
        fill_round(store, p, r)
    return store, sched


class TestVoteClassification:
    def test_wave_one_defaults_steady(self):
        p = params_for(1, coin_seed=1)
        store = _progressing_view(p, rounds=1)
        book = VoteBook(store, LeaderSchedule(p))
        assert classify_vote(book, BlockId(0, 1)) == VoteType.STEADY_VOTE

    def test_progress_yields_steady(self):
        p = params_for(1, coin_seed=1, steady_override=(0, 1, 2, 3, 0, 1, 2, 3))
        store = _progressing_view(p, rounds=5)
        book = VoteBook(store, LeaderSchedule(p))
        for a in range(p.n):
            assert classify_vote(book, BlockId(a, 5)) == VoteType.STEADY_VOTE

    def test_no_progress_yields_fallback(self):
        p = params_for(1, coin_seed=1, steady_override=(0, 1, 2, 3, 0, 1, 2, 3))
        store, sched = _stalled_wave_one(p)
        book = VoteBook(store, sched)
        for a in range(p.n):
            assert classify_vote(book, BlockId(a, 5)) == VoteType.FALLBACK_VOTE

    def test_not_first_round_rejected(self):
        p = params_for(1, coin_seed=1)
        store = _progressing_view(p, rounds=2)
        with pytest.raises(ConfigError):
            classify_vote(VoteBook(store, LeaderSchedule(p)), BlockId(0, 2))


class TestCommit:
    def test_steady_commits_on_next_round_quorum(self):
        p = params_for(1, coin_seed=1, steady_override=(0, 1, 2, 3, 0, 1, 2, 3))
        store = _progressing_view(p, rounds=2)
        book = VoteBook(store, LeaderSchedule(p))
        record = LeaderRecord()
        newly = try_commit(store, LeaderSchedule(p), book, record)
        assert newly == [BlockId(0, 1)]

    def test_below_quorum_does_not_commit(self):
        p = params_for(1, coin_seed=1, steady_override=(0, 1, 2, 3))
        store = BlockStore(p)
        fill_round(store, p, 1)
        all_parents = sorted(store.round_blocks(1))
        without_leader = [b for b in all_parents if b != BlockId(0, 1)]
        # two voters point at the leader, two do not: 2f votes only
        store.insert(make_block(p, 0, 2, all_parents))
        store.insert(make_block(p, 1, 2, all_parents))
        store.insert(make_block(p, 2, 2, without_leader))
        store.insert(make_block(p, 3, 2, without_leader))
        sched = LeaderSchedule(p)
        record = LeaderRecord()
        assert try_commit(store, sched, VoteBook(store, sched), record) == []

    def test_missing_steady_leader_falls_back(self):
        p = params_for(1, coin_seed=1, steady_override=(0, 1, 2, 3, 0, 1, 2, 3))
        store, sched = _stalled_wave_one(p)
        book = VoteBook(store, sched)
        record = LeaderRecord()
        newly = try_commit(store, sched, book, record)
        fb = BlockId(sched.fallback_author(2), 5)
        assert BlockId(0, 1) in newly          # wave-1 steady leader, direct
        assert fb in newly                     # wave-2 fallback at wave end
        kinds = {n: s.kind for n, s in zip(record.committed, record.committed_slots)}
        assert kinds[fb] == FALLBACK

    def test_committed_list_monotone_prefix(self):
        p = params_for(1, coin_seed=2, steady_override=(0, 1, 2, 3, 0, 1, 2, 3))
        sched = LeaderSchedule(p)
        store = BlockStore(p)
        record = LeaderRecord()
        seen = []
        for r in range(1, 9):
            fill_round(store, p, r)
            book = VoteBook(store, sched)
            try_commit(store, sched, book, record)
            assert record.committed[: len(seen)] == seen
            seen = list(record.committed)
        assert len(seen) >= 3

    def test_coin_reveal_gate(self):
        p = params_for(1, coin_seed=2)
        store = _progressing_view(p, rounds=3)
        assert not coin_revealed(store, 1)
        fill_round(store, p, 4)
        assert coin_revealed(store, 1)
