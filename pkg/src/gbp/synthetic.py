"""Random graph and feature fixtures for tests, benchmarks and demos."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .graph import Graph, from_edges, write_edge_list


def pair_graph() -> Graph:
    """Two nodes joined by an edge, both self-looped (d = 2 each)."""
    return from_edges([0], [1], 2)


def erdos_renyi(n: int, avg_degree: float, rng: np.random.Generator) -> Graph:
    """G(n, p) with ``p = avg_degree / (n - 1)`` (degree before self-loops)."""
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < avg_degree / (n - 1)
    return from_edges(iu[keep], ju[keep], n)


def random_regular(n: int, k: int, rng: np.random.Generator) -> Graph:
    """k-regular graph: a circulant (offsets 1..k//2, plus n/2 when k is odd) under a
    random relabeling."""
    if k >= n or (k % 2 and n % 2):
        raise ValueError("need k < n, and n even when k is odd")
    base = np.arange(n)
    src, dst = [], []
    for off in range(1, k // 2 + 1):
        src.append(base)
        dst.append((base + off) % n)
    if k % 2:
        src.append(base[: n // 2])
        dst.append(base[: n // 2] + n // 2)
    perm = rng.permutation(n)
    return from_edges(perm[np.concatenate(src)], perm[np.concatenate(dst)], n)


def sbm(sizes, p_in: float, p_out: float, rng: np.random.Generator):
    """Stochastic block model; returns the graph and the block of each node."""
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    n = len(blocks)
    iu, ju = np.triu_indices(n, 1)
    p = np.where(blocks[iu] == blocks[ju], p_in, p_out)
    keep = rng.random(len(iu)) < p
    return from_edges(iu[keep], ju[keep], n), blocks


def noisy_onehot(blocks: np.ndarray, flip: float, rng: np.random.Generator) -> np.ndarray:
    """One-hot block indicators with a ``flip`` fraction moved to another block."""
    k = int(blocks.max()) + 1
    shown = blocks.copy()
    flipped = rng.random(len(blocks)) < flip
    shift = rng.integers(1, k, size=len(blocks)) if k > 1 else np.zeros(len(blocks), dtype=int)
    shown[flipped] = (blocks[flipped] + shift[flipped]) % k
    return np.eye(k)[shown]


def sbm_fixture(n: int, p_in: float, p_out: float, flip: float, rng: np.random.Generator):
    g, blocks = sbm([n // 2, n - n // 2], p_in, p_out, rng)
    return g, noisy_onehot(blocks, flip, rng), blocks


def write_fixture(out: Path, g: Graph, x: np.ndarray, labels, rng: np.random.Generator,
                  train_size: int = 100):
    """graph.txt, features.txt and, when labelled, labels.tsv + splits/{train,val,test}.txt."""
    from .features import write_features

    out = Path(out)
    with open(out / "graph.txt", "w") as fh:
        write_edge_list(g, fh, use_labels=False)
    with open(out / "features.txt", "w") as fh:
        write_features(x, fh)
    if labels is None:
        return
    with open(out / "labels.tsv", "w") as fh:
        for i, c in enumerate(labels):
            fh.write(f"{i}\t{int(c)}\n")
    perm = rng.permutation(len(labels))
    n_val = min(500, (len(labels) - train_size) // 2)
    parts = {"train": perm[:train_size], "val": perm[train_size:train_size + n_val],
             "test": perm[train_size + n_val:]}
    (out / "splits").mkdir(exist_ok=True)
    for name, ids in parts.items():
        (out / "splits" / f"{name}.txt").write_text("".join(f"{i}\n" for i in sorted(ids)))
