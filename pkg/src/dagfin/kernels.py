"""Hot execution kernels: numba-compiled with a pure-numpy fallback.

The execution engine compiles a block history into flat arrays (one row per
transaction) and runs it through ``exec_groups``. Setting DAGFIN_NO_NUMBA=1
selects the pure-Python/numpy path; results are bit-identical either way
(uint64 wrapping arithmetic). ``benchmarks/bench_kernels.py`` compares the
two paths.
"""

from __future__ import annotations

import os

import numpy as np

MASK64 = (1 << 64) - 1

# op codes for transaction bodies
OP_PUT = 0
OP_COPY = 1
OP_ADD = 2

# condition modes
COND_NONE = -1
COND_PRE_MATCH = -2
COND_PRE_MISMATCH = -3


def _exec_groups_py(state, group_start, group_len, op, read_idx, write_start,
                    write_len, writes_idx, const, cond_mode, cond_val,
                    out_read, out_write, out_aborted):
    """Pure-Python reference path; identical semantics to the jitted kernel."""
    n_groups = group_start.shape[0]
    for g in range(n_groups):
        s = int(group_start[g])
        e = s + int(group_len[g])
        # all members of a group read the pre-group state
        for i in range(s, e):
            r = int(read_idx[i])
            out_read[i] = state[r] if r >= 0 else 0
        for i in range(s, e):
            cm = int(cond_mode[i])
            aborted = False
            if cm == COND_PRE_MISMATCH:
                aborted = True
            elif cm >= 0:
                if out_aborted[cm] or int(out_write[cm]) != int(cond_val[i]):
                    aborted = True
            out_aborted[i] = 1 if aborted else 0
            if aborted:
                out_write[i] = 0
                continue
            o = int(op[i])
            if o == OP_PUT:
                val = int(const[i])
            elif o == OP_COPY:
                val = int(out_read[i])
            else:
                val = (int(out_read[i]) + int(const[i])) & MASK64
            out_write[i] = val
        # writes apply after every member resolved
        for i in range(s, e):
            if out_aborted[i]:
                continue
            ws = int(write_start[i])
            for w in range(ws, ws + int(write_len[i])):
                state[int(writes_idx[w])] = out_write[i]


def _exec_groups_native(state, group_start, group_len, op, read_idx, write_start,
                        write_len, writes_idx, const, cond_mode, cond_val,
                        out_read, out_write, out_aborted):
    """Twin of the pure path in native uint64 arithmetic (jit-compiled).

    Python-int masking does not compile cleanly (numba promotes mixed
    int64/uint64 expressions to float64), so this body sticks to uint64
    operations whose wrapping already matches the mask semantics.
    """
    n_groups = group_start.shape[0]
    for g in range(n_groups):
        s = group_start[g]
        e = s + group_len[g]
        for i in range(s, e):
            r = read_idx[i]
            if r >= 0:
                out_read[i] = state[r]
            else:
                out_read[i] = 0
        for i in range(s, e):
            cm = cond_mode[i]
            aborted = False
            if cm == COND_PRE_MISMATCH:
                aborted = True
            elif cm >= 0:
                if out_aborted[cm] == 1 or out_write[cm] != cond_val[i]:
                    aborted = True
            if aborted:
                out_aborted[i] = 1
                out_write[i] = 0
                continue
            out_aborted[i] = 0
            o = op[i]
            if o == OP_PUT:
                out_write[i] = const[i]
            elif o == OP_COPY:
                out_write[i] = out_read[i]
            else:
                out_write[i] = out_read[i] + const[i]  # uint64 wraps
        for i in range(s, e):
            if out_aborted[i] == 1:
                continue
            ws = write_start[i]
            for w in range(ws, ws + write_len[i]):
                state[writes_idx[w]] = out_write[i]


USE_NUMBA = os.environ.get("DAGFIN_NO_NUMBA", "") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit

        _exec_groups_jit = njit(cache=True)(_exec_groups_native)
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


def exec_groups(state, group_start, group_len, op, read_idx, write_start,
                write_len, writes_idx, const, cond_mode, cond_val):
    """Run a compiled transaction program over a uint64 state vector.

    Transactions are grouped; every member of a group reads the pre-group
    state and writes apply only after the whole group resolved (this is what
    makes paired cross-shard sub-transactions serializable as a pair).
    Returns (read_val, write_val, aborted) arrays, one entry per transaction.
    """
    n = op.shape[0]
    out_read = np.zeros(n, dtype=np.uint64)
    out_write = np.zeros(n, dtype=np.uint64)
    out_aborted = np.zeros(n, dtype=np.uint8)
    fn = _exec_groups_jit if USE_NUMBA else _exec_groups_py
    fn(state, group_start, group_len, op, read_idx, write_start,
       write_len, writes_idx, const, cond_mode, cond_val,
       out_read, out_write, out_aborted)
    return out_read, out_write, out_aborted


def empty_program():
    """Arrays for a zero-transaction program (shared dtypes live here)."""
    return dict(
        group_start=np.zeros(0, dtype=np.int64),
        group_len=np.zeros(0, dtype=np.int64),
        op=np.zeros(0, dtype=np.int64),
        read_idx=np.zeros(0, dtype=np.int64),
        write_start=np.zeros(0, dtype=np.int64),
        write_len=np.zeros(0, dtype=np.int64),
        writes_idx=np.zeros(0, dtype=np.int64),
        const=np.zeros(0, dtype=np.uint64),
        cond_mode=np.zeros(0, dtype=np.int64),
        cond_val=np.zeros(0, dtype=np.uint64),
    )
