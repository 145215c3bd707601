"""Level-synchronous reverse push from the feature columns.

Columns never interact, so each one is pushed independently (and in
parallel when asked). Within a column, level ``l`` is swept exactly once:
its residues are final as soon as the sweep of level ``l - 1`` finishes.
Residue and reserve vectors are kept sparse as ``(node ids, values)`` pairs
with ascending ids.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .features import NormalizedSeed
from .graph import Graph

_EMPTY_IDX = np.zeros(0, dtype=np.int64)
_EMPTY_VAL = np.zeros(0)


def _empty():
    return _EMPTY_IDX, _EMPTY_VAL


@dataclass
class ColumnPush:
    reserves: list
    residues: list
    push_count: int = 0  # neighbor updates
    pushed_entries: int = 0  # entries that crossed the threshold
    pushed_per_level: list = field(default_factory=list)
    complete: bool = True


@dataclass
class PushState:
    """Per-level reserve Q^(l) and residue R^(l) matrices (n x F, CSC)."""

    reserves: list
    residues: list
    push_count: int
    pushed_entries: int
    pushed_per_level: np.ndarray  # (L, F)
    r_max: float
    L: int
    complete: bool

    def reserve_dense(self, level: int) -> np.ndarray:
        return self.reserves[level].toarray()

    def residue_dense(self, level: int) -> np.ndarray:
        return self.residues[level].toarray()


def _gather_neighbors(g: Graph, nodes: np.ndarray):
    """Concatenated neighbor slices of ``nodes`` and the owning position of each entry."""
    lens = g.degrees[nodes]
    total = int(lens.sum())
    owner = np.repeat(np.arange(len(nodes)), lens)
    starts = np.repeat(g.offsets[nodes] - np.concatenate(([0], np.cumsum(lens)[:-1])), lens)
    return g.neighbors[starts + np.arange(total)], owner


def _accumulate(targets: np.ndarray, sources: np.ndarray, values: np.ndarray):
    """Sum ``values`` per target in a fixed (target, source) order."""
    if len(targets) == 0:
        return _empty()
    order = np.lexsort((sources, targets))
    targets, values = targets[order], values[order]
    uniq, first = np.unique(targets, return_index=True)
    sums = np.add.reduceat(values, first)
    keep = sums != 0
    return uniq[keep], sums[keep]


def push_column(g: Graph, seed_column: np.ndarray, L: int, r_max: float,
                budget: int | None = None, descending: bool = False) -> ColumnPush:
    """Push one seed column through levels ``0..L``.

    ``budget`` caps the number of entry pushes; when it runs out the state is
    returned as-is (still satisfying the push invariant) and the final
    ``Q^(L) <- R^(L)`` transfer is skipped. ``descending`` reverses the order
    in which frontier entries are visited; results do not depend on it.
    """
    nz = np.flatnonzero(seed_column)
    residues = [(nz, seed_column[nz].astype(np.float64))] + [_empty() for _ in range(L)]
    reserves = [_empty() for _ in range(L + 1)]
    out = ColumnPush(reserves, residues, pushed_per_level=[0] * L)
    deg = g.degrees.astype(np.float64)
    for level in range(L):
        idx, val = residues[level]
        over = np.abs(val) > r_max
        if not over.any():
            continue
        frontier = np.flatnonzero(over)
        if descending:
            frontier = frontier[::-1]
        if budget is not None:
            left = budget - out.pushed_entries
            if left < len(frontier):
                frontier = frontier[:max(left, 0)]
                out.complete = False
        if len(frontier) == 0:
            return out
        nodes, mass = idx[frontier], val[frontier]
        targets, owner = _gather_neighbors(g, nodes)
        residues[level + 1] = _accumulate(targets, nodes[owner], mass[owner] / deg[targets])
        order = np.argsort(nodes, kind="stable")
        reserves[level] = (nodes[order], mass[order])
        stay = np.ones(len(idx), dtype=bool)
        stay[frontier] = False
        residues[level] = (idx[stay], val[stay])
        out.push_count += len(targets)
        out.pushed_entries += len(frontier)
        out.pushed_per_level[level] = len(frontier)
        if not out.complete:
            return out
    reserves[L] = residues[L]
    residues[L] = _empty()
    return out


def _stack(columns: list, n: int) -> sp.csc_matrix:
    indptr = np.zeros(len(columns) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(idx) for idx, _ in columns])
    indices = np.concatenate([idx for idx, _ in columns]) if columns else _EMPTY_IDX
    data = np.concatenate([val for _, val in columns]) if columns else _EMPTY_VAL
    return sp.csc_matrix((data, indices, indptr), shape=(n, len(columns)))


def push(g: Graph, seed: NormalizedSeed | np.ndarray, L: int, r_max: float,
         threads: int = 1, budget: int | None = None, descending: bool = False) -> PushState:
    """Run reverse push on every column of ``seed`` (an n x F array or NormalizedSeed)."""
    if not r_max > 0:
        raise ValidationError("r_max must be positive")
    if L < 0:
        raise ValidationError("L must be non-negative")
    values = seed.values if isinstance(seed, NormalizedSeed) else np.asarray(seed, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != g.node_count:
        raise ValidationError("seed rows do not match node count")
    F = values.shape[1]
    if budget is not None:
        if threads > 1:
            raise ValidationError("interrupted pushes run single-threaded")
        results = []
        for k in range(F):
            res = push_column(g, values[:, k], L, r_max, budget, descending)
            budget -= res.pushed_entries
            results.append(res)
            if not res.complete:
                # later columns keep their untouched seed residues
                results.extend(push_column(g, values[:, j], L, r_max, 0)
                               for j in range(k + 1, F))
                break
    else:
        def run(k):
            return push_column(g, values[:, k], L, r_max, None, descending)

        if threads > 1 and F > 1:
            with ThreadPoolExecutor(threads) as pool:
                results = list(pool.map(run, range(F)))
        else:
            results = [run(k) for k in range(F)]

    n = g.node_count
    return PushState(
        reserves=[_stack([c.reserves[lv] for c in results], n) for lv in range(L + 1)],
        residues=[_stack([c.residues[lv] for c in results], n) for lv in range(L + 1)],
        push_count=sum(c.push_count for c in results),
        pushed_entries=sum(c.pushed_entries for c in results),
        pushed_per_level=np.array([c.pushed_per_level for c in results], dtype=np.int64).T.reshape(L, F),
        r_max=float(r_max),
        L=L,
        complete=all(c.complete for c in results),
    )


def total_entry_pushes(g: Graph, seed, L: int, r_max: float) -> int:
    """Entry pushes an uninterrupted run performs (to pick interruption points)."""
    return push(g, seed, L, r_max).pushed_entries


def push_count_bound(L: int, F: int, r_max: float) -> int:
    """Cap on threshold-exceeding entries over all levels and columns: ``ceil(L F / r_max)``."""
    # guard against 1/1e-3 landing a hair above an integer
    return math.ceil(L * F / r_max - 1e-9)
