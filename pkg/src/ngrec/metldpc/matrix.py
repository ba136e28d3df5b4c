"""Sparse parity-check matrices realising a multi-edge-type ensemble."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numba as nb
import numpy as np

from ..exceptions import ConstructionError, InvalidInputError, InvalidParameterError
from ..randsrc import SeedSpec, _as_seed
from .ensemble import MultiEdgeEnsemble

log = logging.getLogger(__name__)

MAX_RESEEDS = 20


@dataclass
class SparseParityMatrix:
    """Binary parity-check matrix stored as row-major edge lists.

    Edges are sorted by (row, column); ``edge_col[row_ptr[i]:row_ptr[i+1]]``
    lists the columns of row ``i``. ``col_edges[col_ptr[j]:col_ptr[j+1]]``
    holds the ids of the edges incident to column ``j``. ``layer_order`` is a
    permutation of the rows grouped into layers whose rows share no column;
    ``layer_ptr`` delimits the layers.
    """

    n: int
    m: int
    row_ptr: np.ndarray
    edge_col: np.ndarray
    edge_type: np.ndarray
    punctured: np.ndarray = field(default=None)
    col_ptr: np.ndarray = field(init=False, repr=False)
    col_edges: np.ndarray = field(init=False, repr=False)
    edge_row: np.ndarray = field(init=False, repr=False)
    layer_order: np.ndarray = field(init=False, repr=False)
    layer_ptr: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.edge_col = np.ascontiguousarray(self.edge_col, dtype=np.int64)
        self.edge_type = np.ascontiguousarray(self.edge_type, dtype=np.int32)
        if self.punctured is None:
            self.punctured = np.zeros(self.n, dtype=bool)
        self.punctured = np.asarray(self.punctured, dtype=bool)
        if self.row_ptr.shape != (self.m + 1,) or self.row_ptr[-1] != self.edge_col.size:
            raise InvalidInputError("row_ptr inconsistent with edge list")
        if self.edge_col.size and (self.edge_col.min() < 0 or self.edge_col.max() >= self.n):
            raise InvalidInputError("column index out of range")
        self.edge_row = np.repeat(np.arange(self.m, dtype=np.int64), np.diff(self.row_ptr))
        order = np.lexsort((self.edge_row, self.edge_col))
        self.col_edges = order.astype(np.int64)
        self.col_ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.edge_col, minlength=self.n), out=self.col_ptr[1:])
        for a in (self.row_ptr, self.edge_col, self.edge_type, self.edge_row, self.col_edges, self.col_ptr):
            a.setflags(write=False)
        self.layer_order, self.layer_ptr = _greedy_layers(
            self.row_ptr, self.edge_col, self.n
        )

    @property
    def n_edges(self) -> int:
        return int(self.edge_col.size)

    @property
    def n_layers(self) -> int:
        return int(self.layer_ptr.size - 1)

    @property
    def n_transmitted(self) -> int:
        return int(self.n - self.punctured.sum())

    def row_adjacency(self, i: int) -> np.ndarray:
        return self.edge_col[self.row_ptr[i] : self.row_ptr[i + 1]]

    def col_adjacency(self, j: int) -> np.ndarray:
        return self.edge_row[self.col_edges[self.col_ptr[j] : self.col_ptr[j + 1]]]

    def row_degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def col_degrees(self) -> np.ndarray:
        return np.diff(self.col_ptr)

    def typed_col_degrees(self, edge_types: int) -> np.ndarray:
        out = np.zeros((self.n, edge_types), dtype=np.int64)
        np.add.at(out, (self.edge_col, self.edge_type), 1)
        return out

    def typed_row_degrees(self, edge_types: int) -> np.ndarray:
        out = np.zeros((self.m, edge_types), dtype=np.int64)
        np.add.at(out, (self.edge_row, self.edge_type), 1)
        return out

    def to_dense(self) -> np.ndarray:
        h = np.zeros((self.m, self.n), dtype=np.uint8)
        h[self.edge_row, self.edge_col] = 1
        return h

    @classmethod
    def from_dense(cls, h) -> "SparseParityMatrix":
        h = np.asarray(h) % 2
        m, n = h.shape
        rows, cols = np.nonzero(h)
        row_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=m), out=row_ptr[1:])
        return cls(n, m, row_ptr, cols, np.zeros(cols.size, dtype=np.int32))

    @classmethod
    def from_edges(cls, n, m, rows, cols, types=None, punctured=None) -> "SparseParityMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        types = np.zeros(rows.size, dtype=np.int32) if types is None else np.asarray(types)
        order = np.lexsort((cols, rows))
        rows, cols, types = rows[order], cols[order], types[order]
        key = rows * n + cols
        if np.any(key[1:] == key[:-1]):
            raise InvalidInputError("parallel edges")
        row_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=m), out=row_ptr[1:])
        return cls(n, m, row_ptr, cols, types, punctured)

    def count_4cycles(self) -> int:
        """Number of variable pairs sharing at least two checks (4-cycles, counted per pair-of-checks)."""
        return int(_count_4cycles(self.row_ptr, self.edge_col, self.col_ptr, self.col_edges, self.edge_row, self.n))

    def save(self, path: str | Path) -> None:
        """Cache format: little-endian uint32 header ``(n, m, edges)``, then for
        each row its degree followed by its column indices, then one edge-type
        word per edge and finally the punctured column list (count, indices)."""
        punct = np.flatnonzero(self.punctured).astype("<u4")
        rows = np.empty(self.m + self.n_edges, dtype="<u4")
        pos = np.arange(self.m) + self.row_ptr[:-1]
        rows[pos] = self.row_degrees()
        mask = np.ones(rows.size, dtype=bool)
        mask[pos] = False
        rows[mask] = self.edge_col
        with open(path, "wb") as fh:
            fh.write(struct.pack("<3I", self.n, self.m, self.n_edges))
            fh.write(rows.tobytes())
            fh.write(self.edge_type.astype("<u4").tobytes())
            fh.write(struct.pack("<I", punct.size))
            fh.write(punct.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "SparseParityMatrix":
        raw = Path(path).read_bytes()
        n, m, e = struct.unpack_from("<3I", raw, 0)
        words = np.frombuffer(raw, dtype="<u4", offset=12)
        rows = words[: m + e]
        degs = np.empty(m, dtype=np.int64)
        cols = np.empty(e, dtype=np.int64)
        pos = 0
        out = 0
        for i in range(m):
            d = int(rows[pos])
            degs[i] = d
            cols[out : out + d] = rows[pos + 1 : pos + 1 + d]
            pos += d + 1
            out += d
        types = words[m + e : m + 2 * e].astype(np.int32)
        npunct = int(words[m + 2 * e])
        punctured = np.zeros(n, dtype=bool)
        punctured[words[m + 2 * e + 1 : m + 2 * e + 1 + npunct]] = True
        row_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(degs, out=row_ptr[1:])
        return cls(n, m, row_ptr, cols, types, punctured)


def syndrome(H: SparseParityMatrix, bits) -> np.ndarray:
    """``H @ bits`` over GF(2)."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if bits.shape != (H.n,):
        raise InvalidInputError(f"expected {H.n} bits, got shape {bits.shape}")
    return _syndrome(H.row_ptr, H.edge_col, bits)


@nb.njit(cache=True)
def _syndrome(row_ptr, edge_col, bits):
    m = row_ptr.size - 1
    out = np.zeros(m, dtype=np.uint8)
    for i in range(m):
        acc = 0
        for e in range(row_ptr[i], row_ptr[i + 1]):
            acc ^= bits[edge_col[e]]
        out[i] = acc
    return out


@nb.njit(cache=True)
def _greedy_layers(row_ptr, edge_col, n):
    m = row_ptr.size - 1
    assigned = np.zeros(m, dtype=np.bool_)
    stamp = np.full(n, -1, dtype=np.int64)
    order = np.empty(m, dtype=np.int64)
    ptr = [0]
    done = 0
    layer = 0
    while done < m:
        for i in range(m):
            if assigned[i]:
                continue
            ok = True
            for e in range(row_ptr[i], row_ptr[i + 1]):
                if stamp[edge_col[e]] == layer:
                    ok = False
                    break
            if ok:
                for e in range(row_ptr[i], row_ptr[i + 1]):
                    stamp[edge_col[e]] = layer
                assigned[i] = True
                order[done] = i
                done += 1
        ptr.append(done)
        layer += 1
    return order, np.array(ptr, dtype=np.int64)


@nb.njit(cache=True)
def _count_4cycles(row_ptr, edge_col, col_ptr, col_edges, edge_row, n):
    count = np.zeros(n, dtype=np.int64)
    touched = np.empty(n, dtype=np.int64)
    total = 0
    for v in range(n):
        nt = 0
        for k in range(col_ptr[v], col_ptr[v + 1]):
            c = edge_row[col_edges[k]]
            for e in range(row_ptr[c], row_ptr[c + 1]):
                w = edge_col[e]
                if w > v:
                    if count[w] == 0:
                        touched[nt] = w
                        nt += 1
                    count[w] += 1
        for t in range(nt):
            c2 = count[touched[t]]
            total += c2 * (c2 - 1) // 2
            count[touched[t]] = 0
    return total


# --- construction -----------------------------------------------------------


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    raw = weights / weights.sum() * total
    base = np.floor(raw).astype(np.int64)
    short = total - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def node_counts(ensemble: MultiEdgeEnsemble, n: int):
    """Deterministic integer node counts per class for ``n`` transmitted variables."""
    tx = [c for c in ensemble.variable_classes if not c.punctured]
    tx_counts = _largest_remainder(np.array([c.fraction for c in tx]), n)
    it = iter(tx_counts)
    var_counts = np.array(
        [round(c.fraction * n) if c.punctured else next(it) for c in ensemble.variable_classes],
        dtype=np.int64,
    )
    m = int(round(sum(c.fraction for c in ensemble.check_classes) * n))
    chk_counts = _largest_remainder(np.array([c.fraction for c in ensemble.check_classes]), m)
    return var_counts, chk_counts


def _node_degrees(classes, counts, edge_types):
    return np.repeat(np.array([c.degrees for c in classes], dtype=np.int64).reshape(-1, edge_types), counts, axis=0)


def _balance_check_degrees(var_deg, chk_deg):
    """Nudge check degrees by +-1 so sockets match the variable side exactly."""
    for t in range(var_deg.shape[1]):
        diff = int(var_deg[:, t].sum() - chk_deg[:, t].sum())
        if diff == 0:
            continue
        cand = np.flatnonzero(chk_deg[:, t] > (0 if diff > 0 else 1))
        if cand.size == 0 and diff < 0:
            # single-socket types: drop the socket where the check keeps two other edges
            cand = np.flatnonzero((chk_deg[:, t] == 1) & (chk_deg.sum(axis=1) >= 3))
            cand = cand[: abs(diff)]
        if cand.size == 0:
            raise ConstructionError(f"cannot balance sockets on edge type {t + 1}")
        step = 1 if diff > 0 else -1
        # spread the correction as evenly as possible over the candidate checks
        idx = np.resize(cand[np.linspace(0, cand.size - 1, min(abs(diff), cand.size)).astype(int)], abs(diff))
        np.add.at(chk_deg[:, t], idx, step)
        if chk_deg[:, t].min() < 0:
            raise ConstructionError(f"cannot balance sockets on edge type {t + 1}")
    return chk_deg


def construct_matrix(
    ensemble: MultiEdgeEnsemble,
    n: int,
    seed: SeedSpec | int | None = None,
    avoid_4cycles: bool = True,
    girth_passes: int = 3,
) -> SparseParityMatrix:
    """Random socket-permutation realisation of ``ensemble`` with ``n`` transmitted bits.

    Parallel edges are removed by swapping check endpoints within the same
    edge type (100 tries per conflict, then the type's permutation is redrawn).
    4-cycles are then removed greedily as far as the retry budget allows.
    """
    if n < 2:
        raise InvalidParameterError("n must be at least 2")
    seed = _as_seed(seed)
    E = ensemble.edge_types
    var_counts, chk_counts = node_counts(ensemble, n)
    var_deg = _node_degrees(ensemble.variable_classes, var_counts, E)
    chk_deg = _balance_check_degrees(var_deg, _node_degrees(ensemble.check_classes, chk_counts, E))
    punctured = np.repeat([c.punctured for c in ensemble.variable_classes], var_counts)
    nv, m = var_deg.shape[0], chk_deg.shape[0]

    ev_parts, ec_parts, starts = [], [], [0]
    for t in range(E):
        ev_parts.append(np.repeat(np.arange(nv, dtype=np.int64), var_deg[:, t]))
        ec_parts.append(np.repeat(np.arange(m, dtype=np.int64), chk_deg[:, t]))
        starts.append(starts[-1] + ev_parts[-1].size)
    ev = np.concatenate(ev_parts)
    starts = np.array(starts, dtype=np.int64)
    etype = np.repeat(np.arange(E, dtype=np.int32), np.diff(starts))

    for attempt in range(MAX_RESEEDS):
        rng = seed.child(attempt).generator()
        ec = np.concatenate([rng.permutation(part) for part in ec_parts])
        rs = int(rng.integers(1, 2**62))
        bad_type = _repair_parallel(ev, ec, starts, nv, m, rs)
        if bad_type < 0:
            break
        log.debug("parallel-edge repair failed on edge type %d, redrawing", bad_type + 1)
    else:
        raise ConstructionError("parallel-edge removal exhausted its retry budget; try a different seed")

    if avoid_4cycles:
        remaining = _repair_4cycles(ev, ec, starts, nv, m, rs ^ 0x5DEECE66D, girth_passes)
        if remaining:
            log.info("%d variable nodes still on 4-cycles after %d passes", remaining, girth_passes)

    return SparseParityMatrix.from_edges(nv, m, ec, ev, etype, punctured)


@nb.njit(cache=True)
def _next(state):
    # splitmix64
    state[0] = (state[0] + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state[0]
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def _randint(state, lo, hi):
    return lo + np.int64(_next(state) % np.uint64(hi - lo))


@nb.njit(cache=True)
def _build_csr(keys, nkeys):
    ptr = np.zeros(nkeys + 1, dtype=np.int64)
    for k in keys:
        ptr[k + 1] += 1
    for i in range(nkeys):
        ptr[i + 1] += ptr[i]
    fill = ptr[:-1].copy()
    items = np.empty(keys.size, dtype=np.int64)
    for e in range(keys.size):
        items[fill[keys[e]]] = e
        fill[keys[e]] += 1
    return ptr, items


@nb.njit(cache=True)
def _adjacent(v, c, ev_ptr, ev_items, ec, skip):
    for k in range(ev_ptr[v], ev_ptr[v + 1]):
        e = ev_items[k]
        if e != skip and ec[e] == c:
            return True
    return False


@nb.njit(cache=True)
def _swap(e1, e2, ec, ec_ptr, ec_items):
    c1 = ec[e1]
    c2 = ec[e2]
    for k in range(ec_ptr[c1], ec_ptr[c1 + 1]):
        if ec_items[k] == e1:
            ec_items[k] = e2
            break
    for k in range(ec_ptr[c2], ec_ptr[c2 + 1]):
        if ec_items[k] == e2:
            ec_items[k] = e1
            break
    ec[e1] = c2
    ec[e2] = c1


@nb.njit(cache=True)
def _type_of(e, starts):
    t = 0
    while starts[t + 1] <= e:
        t += 1
    return t


@nb.njit(cache=True)
def _repair_parallel(ev, ec, starts, nv, m, seed):
    state = np.array([np.uint64(seed)], dtype=np.uint64)
    ev_ptr, ev_items = _build_csr(ev, nv)
    ec_ptr, ec_items = _build_csr(ec, m)
    for v in range(nv):
        a, b = ev_ptr[v], ev_ptr[v + 1]
        for i in range(a, b):
            e1 = ev_items[i]
            dup = False
            for j in range(a, b):
                if j != i and ec[ev_items[j]] == ec[e1]:
                    dup = True
                    break
            if not dup:
                continue
            t = _type_of(e1, starts)
            fixed = False
            for _ in range(100):
                e2 = _randint(state, starts[t], starts[t + 1])
                v2 = ev[e2]
                c1 = ec[e1]
                c2 = ec[e2]
                if v2 == v or c2 == c1:
                    continue
                if _adjacent(v, c2, ev_ptr, ev_items, ec, e1):
                    continue
                if _adjacent(v2, c1, ev_ptr, ev_items, ec, e2):
                    continue
                _swap(e1, e2, ec, ec_ptr, ec_items)
                fixed = True
                break
            if not fixed:
                return t
    return -1


@nb.njit(cache=True)
def _closes_4cycle(v, c_new, skip_own, skip_other, ev_ptr, ev_items, ec, ec_ptr, ec_items, ev, mark, stamp):
    """Would connecting ``v`` to ``c_new`` create a 4-cycle?

    ``skip_own`` is the edge of ``v`` being moved away, ``skip_other`` the edge
    currently on ``c_new`` that is being moved away.
    """
    for k in range(ev_ptr[v], ev_ptr[v + 1]):
        e = ev_items[k]
        if e == skip_own:
            continue
        c = ec[e]
        for kk in range(ec_ptr[c], ec_ptr[c + 1]):
            mark[ev[ec_items[kk]]] = stamp
    for kk in range(ec_ptr[c_new], ec_ptr[c_new + 1]):
        e = ec_items[kk]
        if e == skip_other:
            continue
        w = ev[e]
        if w != v and mark[w] == stamp:
            return True
    return False


@nb.njit(cache=True)
def _repair_4cycles(ev, ec, starts, nv, m, seed, passes):
    state = np.array([np.uint64(seed)], dtype=np.uint64)
    ev_ptr, ev_items = _build_csr(ev, nv)
    ec_ptr, ec_items = _build_csr(ec, m)
    mark = np.full(nv, -1, dtype=np.int64)
    count = np.zeros(nv, dtype=np.int64)
    stamp = 0
    remaining = 0
    for _p in range(passes):
        remaining = 0
        for v in range(nv):
            if ev_ptr[v + 1] - ev_ptr[v] < 2:
                continue
            # find an edge of v that closes a 4-cycle with an earlier edge of v
            for i in range(ev_ptr[v], ev_ptr[v + 1]):
                e1 = ev_items[i]
                stamp += 1
                if not _closes_4cycle(v, ec[e1], e1, -1, ev_ptr, ev_items, ec, ec_ptr, ec_items, ev, mark, stamp):
                    continue
                t = _type_of(e1, starts)
                fixed = False
                for _ in range(100):
                    e2 = _randint(state, starts[t], starts[t + 1])
                    v2 = ev[e2]
                    c1 = ec[e1]
                    c2 = ec[e2]
                    if v2 == v or c2 == c1:
                        continue
                    if _adjacent(v, c2, ev_ptr, ev_items, ec, e1) or _adjacent(v2, c1, ev_ptr, ev_items, ec, e2):
                        continue
                    stamp += 1
                    if _closes_4cycle(v, c2, e1, e2, ev_ptr, ev_items, ec, ec_ptr, ec_items, ev, mark, stamp):
                        continue
                    stamp += 1
                    if _closes_4cycle(v2, c1, e2, e1, ev_ptr, ev_items, ec, ec_ptr, ec_items, ev, mark, stamp):
                        continue
                    _swap(e1, e2, ec, ec_ptr, ec_items)
                    fixed = True
                    break
                if not fixed:
                    remaining += 1
        if remaining == 0:
            break
    count[0] = remaining
    return remaining
