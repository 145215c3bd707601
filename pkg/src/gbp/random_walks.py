"""Monte-Carlo phase: per-step visit frequencies of uniform random walks.

Each source node draws from its own PCG64 stream, seeded by
``SeedSequence([seed, source])``, so the output does not depend on how
sources are distributed over worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .graph import Graph

_CHUNK = 256


def source_rng(seed: int, source: int) -> np.random.Generator:
    """The RNG stream owned by one walk source."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(source)])))


@dataclass
class WalkFrequencies:
    """``levels[l]`` is the ``|V_t| x n`` CSR matrix S^(l)."""

    levels: list
    targets: np.ndarray
    n_r: int
    L: int
    seed: int
    walk_steps: int

    def dense(self, level: int) -> np.ndarray:
        return self.levels[level].toarray()


def _walk_positions(g: Graph, sources, n_r: int, L: int, seed: int) -> np.ndarray:
    """Walker positions, shape (L + 1, len(sources) * n_r)."""
    pos = np.empty((L + 1, len(sources) * n_r), dtype=np.int64)
    pos[0] = np.repeat(sources, n_r)
    if L == 0:
        return pos
    # uniform draws in [0, 1), L per walk, taken from each source's stream
    draws = np.empty((len(sources) * n_r, L))
    for i, s in enumerate(sources):
        draws[i * n_r:(i + 1) * n_r] = source_rng(seed, s).random((n_r, L))
    deg = g.degrees
    for step in range(L):
        cur = pos[step]
        pick = (draws[:, step] * deg[cur]).astype(np.int64)
        pos[step + 1] = g.neighbors[g.offsets[cur] + pick]
    return pos


def sample_walks(g: Graph, targets, n_r: int, L: int, seed: int, threads: int = 1
                 ) -> WalkFrequencies:
    """Run ``n_r`` length-``L`` walks from every target and tally visits per step.

    S^(0) is the identity on target rows even when ``n_r == 0``; higher levels
    are then empty.
    """
    if L < 0 or n_r < 0:
        raise ValidationError("L and n_r must be non-negative")
    targets = np.asarray(targets, dtype=np.int64)
    n, m = g.node_count, len(targets)
    eye = sp.csr_matrix((np.ones(m), (np.arange(m), targets)), shape=(m, n))
    if n_r == 0 or m == 0:
        empty = [sp.csr_matrix((m, n)) for _ in range(L)]
        return WalkFrequencies([eye] + empty, targets, n_r, L, seed, 0)

    chunks = [np.arange(i, min(i + _CHUNK, m)) for i in range(0, m, _CHUNK)]

    def run(rows):
        return rows, _walk_positions(g, targets[rows], n_r, L, seed)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(rows) for rows in chunks]

    row_ids = np.concatenate([np.repeat(rows, n_r) for rows, _ in results])
    positions = np.concatenate([p for _, p in results], axis=1)
    levels = [eye]
    for step in range(1, L + 1):
        counts = sp.coo_matrix((np.ones(len(row_ids)), (row_ids, positions[step])),
                               shape=(m, n)).tocsr()
        counts.sum_duplicates()
        counts.data /= n_r
        levels.append(counts)
    return WalkFrequencies(levels, targets, n_r, L, seed, m * n_r * L)


def expected_transition(g: Graph, targets, L: int) -> np.ndarray:
    """Exact rows of ``(D^{-1}A)^l`` for l = 0..L; small graphs only (O(n^2 L))."""
    from .oracle import exact_transition_rows

    return exact_transition_rows(g, targets, L)
