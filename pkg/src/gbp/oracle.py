"""Exact dense propagation, the ground truth for the approximate estimator.

Everything here is deliberately naive: neighbor slices are padded to the
maximum degree and summed with Kahan compensation, one slot at a time.
Nothing is shared with the push or walk code paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .graph import Graph

MAX_ORACLE_NODES = 10_000


@dataclass
class DensePropagation:
    levels: list  # T^(0..L), each n x F
    P: np.ndarray
    r: float
    weights: np.ndarray


def _padded_neighbors(g: Graph):
    """(n, d_max) neighbor table and validity mask."""
    n = g.node_count
    width = g.max_degree
    slot = np.arange(width)
    mask = slot[None, :] < g.degrees[:, None]
    idx = np.where(mask, g.offsets[:-1, None] + slot[None, :], 0)
    return g.neighbors[idx] * mask, mask


def _kahan_rowsum(terms: np.ndarray) -> np.ndarray:
    """Compensated sum over axis 1 of an (n, width, F) array."""
    total = np.zeros((terms.shape[0],) + terms.shape[2:])
    comp = np.zeros_like(total)
    for j in range(terms.shape[1]):
        y = terms[:, j] - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def _check_size(g: Graph, cap: int):
    if g.node_count > cap:
        raise ValidationError(f"oracle limited to {cap} nodes, graph has {g.node_count}")


def _apply(nbr, mask, row_scale, col_scale, y):
    """One application of diag(row_scale) A diag(col_scale) to y."""
    terms = (col_scale[nbr] * mask)[:, :, None] * y[nbr]
    return row_scale[:, None] * _kahan_rowsum(terms)


def exact_propagate(g: Graph, x, L: int, r: float, weights, cap: int = MAX_ORACLE_NODES
                    ) -> DensePropagation:
    """``T^(l) = (D^{r-1} A D^{-r})^l x`` for l = 0..L and ``P = sum_l w_l T^(l)``."""
    _check_size(g, cap)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != L + 1:
        raise ValidationError(f"need {L + 1} weights, got {len(weights)}")
    nbr, mask = _padded_neighbors(g)
    deg = g.degrees.astype(np.float64)
    row_scale = deg ** (r - 1.0)
    col_scale = deg ** (-r)
    levels = [x.copy()]
    for _ in range(L):
        levels.append(_apply(nbr, mask, row_scale, col_scale, levels[-1]))
    P = np.zeros_like(x)
    for w, t in zip(weights, levels):
        P += w * t
    return DensePropagation(levels, P, float(r), weights)


def exact_transition_rows(g: Graph, targets, L: int, cap: int = MAX_ORACLE_NODES) -> np.ndarray:
    """Rows of ``(D^{-1} A)^l`` for each target, shape ``(L + 1, |targets|, n)``.

    Computed as ``e_s^T (D^{-1}A)^l``, i.e. propagating indicator columns with
    the transpose ``A D^{-1}``.
    """
    _check_size(g, cap)
    targets = np.asarray(targets, dtype=np.int64)
    n = g.node_count
    nbr, mask = _padded_neighbors(g)
    deg = g.degrees.astype(np.float64)
    cur = np.zeros((n, len(targets)))
    cur[targets, np.arange(len(targets))] = 1.0
    out = [cur.T.copy()]
    for _ in range(L):
        cur = _apply(nbr, mask, np.ones(n), 1.0 / deg, cur)
        out.append(cur.T.copy())
    return np.stack(out)


def invariant_residual(g: Graph, x, reserves, residues, r: float) -> float:
    """Max |T^(l) - D^r (Q^(l) + sum_t (D^{-1}A)^{l-t} R^(t))| over all levels.

    ``x`` is the matrix the push was seeded from, rescaled to input space
    (``D^r`` times the seed); ``reserves``/``residues`` are dense per-level
    lists.
    """
    L = len(reserves) - 1
    truth = exact_propagate(g, x, L, r, np.zeros(L + 1)).levels
    nbr, mask = _padded_neighbors(g)
    deg = g.degrees.astype(np.float64)
    inv = 1.0 / deg
    dr = deg ** r
    worst = 0.0
    for level in range(L + 1):
        acc = np.array(reserves[level], dtype=np.float64)
        for t in range(level + 1):
            y = np.array(residues[t], dtype=np.float64)
            for _ in range(level - t):
                y = _apply(nbr, mask, inv, np.ones_like(inv), y)
            acc = acc + y
        worst = max(worst, float(np.max(np.abs(truth[level] - dr[:, None] * acc))))
    return worst
