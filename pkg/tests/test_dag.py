"""DAG store: rotation, waves, paths, persistence, insert validation."""

import random

import pytest

from dagfin.dag import BlockStore, author_in_charge, shard_in_charge, wave_of
from dagfin.types import (
    Block,
    BlockId,
    ConfigError,
    EquivocationError,
    ProtocolParams,
)

from helpers import fill_round, local_tx, make_block, params_for


class TestShardRotation:
    def test_identity_at_round_one(self):
        p = params_for(1)
        assert shard_in_charge(2, 1, p) == 2

    def test_rotates_each_round(self):
        p = params_for(1)
        assert shard_in_charge(2, 2, p) == 3

    def test_wraps_modulo_n(self):
        p = params_for(1)
        assert shard_in_charge(3, 3, p) == 1

    def test_author_in_charge_inverts(self):
        p = params_for(2)
        for r in range(1, 20):
            for a in range(p.n):
                s = shard_in_charge(a, r, p)
                assert author_in_charge(s, r, p) == a

    def test_one_writer_per_shard_per_round(self):
        p = params_for(1)
        for r in range(1, 10):
            shards = [shard_in_charge(a, r, p) for a in range(p.n)]
            assert sorted(shards) == list(range(p.n))


class TestWaves:
    @pytest.mark.parametrize("round,wave", [(1, 1), (4, 1), (5, 2), (8, 2), (9, 3)])
    def test_wave_of(self, round, wave):
        assert wave_of(round) == wave

    def test_rounds_start_at_one(self):
        with pytest.raises(ConfigError):
            wave_of(0)


class TestParams:
    def test_quorum_arithmetic(self):
        with pytest.raises(ConfigError):
            ProtocolParams(n=5, f=1)

    def test_lookback_positive(self):
        with pytest.raises(ConfigError):
            ProtocolParams(n=4, f=1, v=0)


class TestInsert:
    def test_round_one_genesis(self):
        p = params_for(1)
        store = BlockStore(p)
        store.insert(make_block(p, 0, 1))
        assert BlockId(0, 1) in store

    def test_too_few_parents_rejected(self):
        p = params_for(1)
        store = BlockStore(p)
        fill_round(store, p, 1)
        parents = sorted(store.round_blocks(1))[:2]  # 2f = 2 < 2f+1 = 3
        with pytest.raises(ConfigError):
            store.insert(make_block(p, 0, 2, parents))

    def test_out_of_shard_write_rejected(self):
        p = params_for(1)
        store = BlockStore(p)
        tx = local_tx("t", shard=2)  # author 0 round 1 is in charge of shard 0
        with pytest.raises(ConfigError):
            store.insert(make_block(p, 0, 1, txs=(tx,)))

    def test_equivocation_detected(self):
        p = params_for(1)
        store = BlockStore(p)
        store.insert(make_block(p, 0, 1))
        other = Block(id=BlockId(0, 1), shard=0, parents=(),
                      txs=(local_tx("t", shard=0),))
        with pytest.raises(EquivocationError):
            store.insert(other)

    def test_duplicate_identical_is_idempotent(self):
        p = params_for(1)
        store = BlockStore(p)
        store.insert(make_block(p, 0, 1))
        store.insert(make_block(p, 0, 1))
        assert len(store.round_blocks(1)) == 1


class TestPaths:
    def test_reflexive(self):
        p = params_for(1)
        store = BlockStore(p)
        fill_round(store, p, 1)
        assert store.has_path(BlockId(0, 1), BlockId(0, 1))

    def test_single_pointer(self):
        p = params_for(1)
        store = BlockStore(p)
        fill_round(store, p, 1)
        fill_round(store, p, 2)
        assert store.has_path(BlockId(0, 2), BlockId(1, 1))

    def test_chained_rounds(self):
        # a block reaches its author-chain ancestor four rounds down
        p = params_for(1)
        store = BlockStore(p)
        for r in range(1, 5):
            fill_round(store, p, r)
        assert store.has_path(BlockId(1, 4), BlockId(1, 1))

    def test_no_path_same_round(self):
        p = params_for(1)
        store = BlockStore(p)
        fill_round(store, p, 1)
        assert not store.has_path(BlockId(0, 1), BlockId(1, 1))

    def test_matches_dfs_oracle(self):
        # random sparse DAGs: the reach matrix equals a recursive parent walk
        p = params_for(1)
        rng = random.Random(7)
        store = BlockStore(p)
        fill_round(store, p, 1)
        for r in range(2, 8):
            prev = sorted(store.round_blocks(r - 1))
            for a in range(p.n):
                picks = rng.sample(prev, k=rng.randint(p.quorum, len(prev)))
                if BlockId(a, r - 1) in prev and BlockId(a, r - 1) not in picks:
                    picks[0] = BlockId(a, r - 1)  # keep the self-parent chain
                store.insert(make_block(p, a, r, sorted(set(picks))))

        def dfs(src, dst, seen):
            if src == dst:
                return True
            if src in seen:
                return False
            seen.add(src)
            return any(dfs(q, dst, seen) for q in store.get(src).parents)

        ids = sorted(store.blocks)
        for src in ids:
            for dst in ids:
                if src.round >= dst.round:
                    assert store.has_path(src, dst) == dfs(src, dst, set()), (src, dst)


class TestPersistence:
    def test_enough_pointers(self):
        p = params_for(1)
        store = BlockStore(p)
        fill_round(store, p, 1)
        parents = tuple(sorted(store.round_blocks(1)))
        store.insert(make_block(p, 0, 2, parents[:3]))
        store.insert(make_block(p, 1, 2, parents))
        assert store.persists(BlockId(0, 1), 2)  # two pointers >= f+1 = 2

    def test_single_pointer_below_threshold(self):
        p = params_for(1)
        store = BlockStore(p)
        fill_round(store, p, 1)
        parents = tuple(sorted(store.round_blocks(1)))
        store.insert(make_block(p, 1, 2, parents))
        assert not store.persists(BlockId(0, 1), 2)

    def test_partitioned_block_does_not_persist(self):
        # three of four round-2 blocks never saw b3r1: one pointer = f
        p = params_for(1)
        store = BlockStore(p)
        fill_round(store, p, 1)
        majority = tuple(sorted(store.round_blocks(1)))[:3]   # authors 0,1,2
        everyone = tuple(sorted(store.round_blocks(1)))
        for a in range(3):
            store.insert(make_block(p, a, 2, majority))
        store.insert(make_block(p, 3, 2, everyone))
        assert not store.persists(BlockId(3, 1), 2)
        for a in range(3):
            assert store.persists(BlockId(a, 1), 2)

    def test_monotone_in_view_growth(self):
        p = params_for(1)
        store = BlockStore(p)
        fill_round(store, p, 1)
        parents = tuple(sorted(store.round_blocks(1)))
        flagged = False
        for a in range(p.n):
            store.insert(make_block(p, a, 2, parents))
            if store.persists(BlockId(2, 1), 2):
                flagged = True
            if flagged:
                assert store.persists(BlockId(2, 1), 2)
        assert flagged

    def test_quorum_intersection_consequence(self):
        # once persisting, every later block must have a path to it
        p = params_for(1)
        store = BlockStore(p)
        for r in range(1, 6):
            fill_round(store, p, r)
        target = BlockId(2, 1)
        assert store.persists(target, 2)
        for r in range(2, 6):
            for b in store.round_blocks(r):
                assert store.has_path(b, target)
