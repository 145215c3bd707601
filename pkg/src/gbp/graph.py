"""Undirected self-looped graphs in compressed adjacency (CSR) form."""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .errors import FormatError, ValidationError

GRAPH_MAGIC = b"GBPG"
GRAPH_VERSION = 1


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph with one self-loop per node.

    ``neighbors[offsets[u]:offsets[u + 1]]`` is the sorted neighbor slice of
    ``u`` and always contains ``u`` itself, so every degree is at least 1.
    ``labels`` maps internal ids back to the ids seen in the input file.
    """

    offsets: np.ndarray
    neighbors: np.ndarray
    labels: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        neighbors = np.ascontiguousarray(self.neighbors, dtype=np.int64)
        n = len(offsets) - 1
        labels = self.labels
        if labels is None:
            labels = np.arange(n, dtype=np.int64)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        for arr in (offsets, neighbors, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "neighbors", neighbors)
        object.__setattr__(self, "labels", labels)
        degrees = np.diff(offsets)
        degrees.setflags(write=False)
        object.__setattr__(self, "degrees", degrees)

    @property
    def node_count(self) -> int:
        return len(self.offsets) - 1

    @property
    def edge_count(self) -> int:
        """Undirected edges counted once, self-loops included once each."""
        # every non-loop edge appears twice in the adjacency, every loop once
        return (len(self.neighbors) + self.node_count) // 2

    @property
    def average_degree(self) -> float:
        """Mean of d(u) over the self-looped graph."""
        return float(self.degrees.sum()) / self.node_count

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max())

    def neighbors_of(self, u: int) -> np.ndarray:
        return self.neighbors[self.offsets[u]:self.offsets[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.degrees[u])

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.neighbors, other.neighbors))

    def __repr__(self):
        return f"Graph(n={self.node_count}, m={self.edge_count})"

    def validate(self):
        """Check the structural invariants; raise ValidationError on failure."""
        n = self.node_count
        if n < 1:
            raise ValidationError("graph has no nodes")
        if self.offsets[0] != 0 or np.any(np.diff(self.offsets) < 1):
            raise ValidationError("offsets must start at 0 and every degree must be >= 1")
        if self.offsets[-1] != len(self.neighbors):
            raise ValidationError("offsets do not cover the neighbor array")
        if len(self.neighbors) and (self.neighbors.min() < 0 or self.neighbors.max() >= n):
            raise ValidationError("neighbor id out of range")
        rows = np.repeat(np.arange(n), self.degrees)
        # sorted and duplicate-free within each slice
        same_row = rows[1:] == rows[:-1]
        if np.any(self.neighbors[1:][same_row] <= self.neighbors[:-1][same_row]):
            raise ValidationError("neighbor slices must be strictly increasing")
        keys = rows * n + self.neighbors
        rkeys = self.neighbors * n + rows
        if not np.array_equal(np.sort(keys), np.sort(rkeys)):
            raise ValidationError("adjacency is not symmetric")
        if not np.all(np.isin(np.arange(n) * n + np.arange(n), keys)):
            raise ValidationError("missing self-loop")

    def canonical(self) -> "Graph":
        """Same graph with internal ids reordered by ascending external label."""
        order = np.argsort(self.labels, kind="stable")
        if np.array_equal(order, np.arange(self.node_count)):
            return self
        inverse = np.empty_like(order)
        inverse[order] = np.arange(self.node_count)
        rows = np.repeat(np.arange(self.node_count), self.degrees)
        return from_edges(inverse[rows], inverse[self.neighbors], self.node_count,
                          self.labels[order])

    def to_scipy(self):
        """Adjacency matrix A (self-loops included) as a scipy CSR matrix."""
        import scipy.sparse as sp

        data = np.ones(len(self.neighbors))
        return sp.csr_matrix((data, self.neighbors, self.offsets),
                             shape=(self.node_count, self.node_count))


class NodeSet(np.ndarray):
    """Sorted, unique node ids (the target set V_t)."""

    def __new__(cls, ids: Iterable[int], n: int | None = None):
        arr = np.unique(np.asarray(list(ids) if not isinstance(ids, np.ndarray) else ids,
                                   dtype=np.int64))
        if n is not None and len(arr) and (arr[0] < 0 or arr[-1] >= n):
            raise ValidationError(f"target id out of range [0, {n})")
        obj = arr.view(cls)
        obj.setflags(write=False)
        return obj

    @classmethod
    def all(cls, g: Graph) -> "NodeSet":
        return cls(np.arange(g.node_count), g.node_count)


def from_edges(src, dst, n: int | None = None, labels=None) -> Graph:
    """Build a Graph from parallel endpoint arrays of internal ids.

    Edges are symmetrized and deduplicated, and every node gets a self-loop.
    """
    src = np.asarray(src, dtype=np.int64).ravel()
    dst = np.asarray(dst, dtype=np.int64).ravel()
    if src.shape != dst.shape:
        raise ValidationError("endpoint arrays differ in length")
    if n is None:
        n = int(max(src.max(initial=-1), dst.max(initial=-1))) + 1
    if n < 1:
        raise ValidationError("graph has no nodes")
    if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
        raise ValidationError("edge endpoint out of range")
    loops = np.arange(n, dtype=np.int64)
    rows = np.concatenate([src, dst, loops])
    cols = np.concatenate([dst, src, loops])
    keys = np.unique(rows * n + cols)
    rows, cols = np.divmod(keys, n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
    return Graph(offsets, cols, labels)


def load_edge_list(stream: IO[str] | Iterable[str]) -> Graph:
    """Parse ``u v`` lines into a Graph.

    Lines starting with ``#`` and blank lines are skipped. External ids are
    remapped to ``[0, n)`` in first-seen order; ``Graph.labels`` keeps the
    original ids.
    """
    remap: dict[int, int] = {}
    src: list[int] = []
    dst: list[int] = []
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 2:
            raise FormatError(f"line {lineno}: expected 2 node ids, got {len(parts)} tokens")
        ids = []
        for tok in parts:
            try:
                v = int(tok)
            except ValueError:
                raise FormatError(f"line {lineno}: malformed node id {tok!r}") from None
            if v < 0:
                raise FormatError(f"line {lineno}: negative node id {v}")
            ids.append(remap.setdefault(v, len(remap)))
        src.append(ids[0])
        dst.append(ids[1])
    if not remap:
        raise FormatError("empty edge list")
    labels = np.fromiter(remap.keys(), dtype=np.int64, count=len(remap))
    return from_edges(src, dst, len(remap), labels)


def write_edge_list(g: Graph, stream: IO[str], use_labels: bool = True):
    """Write each non-loop undirected edge once as ``u v``."""
    rows = np.repeat(np.arange(g.node_count), g.degrees)
    keep = rows < g.neighbors
    names = g.labels if use_labels else np.arange(g.node_count)
    for u, v in zip(names[rows[keep]], names[g.neighbors[keep]]):
        stream.write(f"{u} {v}\n")
    # isolated nodes would otherwise vanish on reload
    isolated = np.flatnonzero(g.degrees == 1)
    for u in isolated:
        stream.write(f"{names[u]} {names[u]}\n")


def degree_power(g: Graph, exponent: float) -> np.ndarray:
    """Per-node ``d(u) ** exponent``."""
    if not np.isfinite(exponent):
        raise ValidationError("exponent must be finite")
    if exponent == 0:
        return np.ones(g.node_count)
    return g.degrees.astype(np.float64) ** exponent


def save_binary(g: Graph, sink: IO[bytes]):
    """Binary cache: magic, u32 version, u64 n, u64 m, offsets, neighbors (LE int64)."""
    sink.write(GRAPH_MAGIC)
    sink.write(struct.pack("<IQQ", GRAPH_VERSION, g.node_count, g.edge_count))
    sink.write(g.offsets.astype("<i8").tobytes())
    sink.write(g.neighbors.astype("<i8").tobytes())


def load_binary(source: IO[bytes]) -> Graph:
    if source.read(4) != GRAPH_MAGIC:
        raise FormatError("bad graph magic")
    header = source.read(struct.calcsize("<IQQ"))
    if len(header) != struct.calcsize("<IQQ"):
        raise FormatError("truncated graph header")
    version, n, m = struct.unpack("<IQQ", header)
    if version != GRAPH_VERSION:
        raise FormatError(f"unsupported graph version {version}")
    raw = source.read(8 * (n + 1))
    if len(raw) != 8 * (n + 1):
        raise FormatError("truncated offsets")
    offsets = np.frombuffer(raw, dtype="<i8").astype(np.int64)
    nnz = int(offsets[-1])
    raw = source.read(8 * nnz)
    if len(raw) != 8 * nnz:
        raise FormatError("truncated neighbors")
    g = Graph(offsets, np.frombuffer(raw, dtype="<i8").astype(np.int64))
    g.validate()
    if g.edge_count != m:
        raise FormatError("edge count does not match header")
    return g


def read_graph(path: str) -> Graph:
    """Load a graph from an edge-list text file or a GBPG binary cache."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        fh.seek(0)
        if head == GRAPH_MAGIC:
            return load_binary(fh)
        return load_edge_list(io.TextIOWrapper(fh, encoding="utf-8"))
