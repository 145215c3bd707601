"""Combination phase, weight schemes, parameter planning and embedding files."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import IO

import numpy as np
import scipy.sparse as sp

from .errors import FormatError, ValidationError
from .features import NormalizedSeed, normalize
from .graph import Graph, NodeSet, degree_power
from .random_walks import WalkFrequencies, sample_walks
from .reverse_push import PushState, push

EMBED_MAGIC = b"GBPE"
EMBED_VERSION = 1
WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class WeightScheme:
    kind: str
    weights: tuple
    alpha: float | None = None

    @property
    def L(self) -> int:
        return len(self.weights) - 1

    def as_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.float64)


def make_weights(kind: str, alpha: float | None = None, L: int = 0, custom=None) -> WeightScheme:
    """Build w_0..w_L.

    ``ppr``: ``alpha * (1 - alpha) ** l``, truncated at L without
    renormalization. ``last_hop``: all mass on level L. ``custom``: the given
    vector, whose sum may not exceed 1.
    """
    if kind == "ppr":
        if alpha is None or not 0 < alpha < 1:
            raise ValidationError("ppr weights need 0 < alpha < 1")
        w = tuple(alpha * (1 - alpha) ** lv for lv in range(L + 1))
        return WeightScheme("ppr", w, float(alpha))
    if kind == "last_hop":
        if L < 0:
            raise ValidationError("L must be non-negative")
        return WeightScheme("last_hop", tuple([0.0] * L + [1.0]))
    if kind == "custom":
        w = tuple(float(v) for v in custom)
        if not w:
            raise ValidationError("custom weights are empty")
        if not all(math.isfinite(v) for v in w):
            raise ValidationError("custom weights must be finite")
        if math.fsum(w) > 1 + WEIGHT_SUM_TOL:
            raise ValidationError(f"custom weights sum to {math.fsum(w)} > 1")
        return WeightScheme("custom", w)
    raise ValidationError(f"unknown weight scheme {kind!r}")


@dataclass
class PropagationConfig:
    L: int
    r: float
    weights: WeightScheme
    r_max: float
    n_r: int
    seed: int = 0
    denormalize: bool = False

    def __post_init__(self):
        if self.L < 0:
            raise ValidationError("L must be non-negative")
        if not 0 <= self.r <= 1:
            raise ValidationError("r must lie in [0, 1]")
        if not self.r_max > 0:
            raise ValidationError("r_max must be positive")
        if self.n_r < 0:
            raise ValidationError("n_r must be non-negative")
        if self.weights.L != self.L:
            raise ValidationError(f"weight vector has {len(self.weights.weights)} entries, need {self.L + 1}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = {"kind": self.weights.kind, "alpha": self.weights.alpha,
                        "values": list(self.weights.weights)}
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class EmbeddingMatrix:
    row_ids: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape

    def rows(self, ids) -> np.ndarray:
        """Values for the given row ids (must be present)."""
        ids = np.asarray(ids, dtype=np.int64)
        pos = np.searchsorted(self.row_ids, ids)
        pos = np.clip(pos, 0, len(self.row_ids) - 1)
        if not np.array_equal(self.row_ids[pos], ids):
            raise ValidationError("requested rows missing from embedding")
        return self.values[pos]


@dataclass(frozen=True)
class PlannedParameters:
    epsilon: float
    n_r: int
    r_max: float


def plan_parameters(g: Graph, targets, L: int, epsilon: float) -> PlannedParameters:
    """Balance walk and push cost for a target error ``epsilon`` (big-O constants = 1).

    ``r_max = eps * sqrt(d / (L |V_t| ln(nL)))`` and
    ``n_r = ceil(r_max (2 eps L / 3 + 2 r_max L^2) ln(nL) / eps^2)``, with ``d``
    the mean self-looped degree.
    """
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    n, m = g.node_count, len(targets)
    if m == 0:
        raise ValidationError("empty target set")
    Lp = max(L, 1)
    log_nl = math.log(max(n * Lp, 2))
    r_max = epsilon * math.sqrt(g.average_degree / (Lp * m * log_nl))
    n_r = math.ceil(r_max * (2 * epsilon * Lp / 3 + 2 * r_max * Lp ** 2) * log_nl / epsilon ** 2)
    return PlannedParameters(float(epsilon), int(n_r), float(r_max))


def _level_mix(weights: np.ndarray, residues: list, lag: int) -> sp.csr_matrix:
    """sum_t w_{t+lag} R^(t), the residue mixture hit by S^(lag)."""
    L = len(weights) - 1
    acc = None
    for t in range(L - lag + 1):
        w = weights[t + lag]
        if w == 0 or residues[t].nnz == 0:
            continue
        term = residues[t] * w
        acc = term if acc is None else acc + term
    return acc


def combine(state: PushState, walks: WalkFrequencies, g: Graph, cfg: PropagationConfig,
            column_norms=None) -> EmbeddingMatrix:
    """P_hat(s,k) = sum_l w_l d(s)^r [Q^(l)(s,k) + sum_{t<=l} (S^(l-t) R^(t))(s,k)] on target rows."""
    if state.L != cfg.L or walks.L != cfg.L:
        raise ValidationError("push/walk phases were run with a different L")
    if not state.complete:
        raise ValidationError("push state is interrupted")
    targets = walks.targets
    if len(targets) == 0:
        raise ValidationError("empty target set")
    w = cfg.weights.as_array()
    F = state.reserves[0].shape[1]

    out = np.zeros((len(targets), F))
    for level in range(cfg.L + 1):
        if w[level] != 0:
            out += w[level] * state.reserves[level].tocsr()[targets].toarray()
    for lag in range(cfg.L + 1):
        mix = _level_mix(w, state.residues, lag)
        if mix is None or walks.levels[lag].nnz == 0:
            continue
        out += (walks.levels[lag] @ mix.tocsr()).toarray()
    out *= degree_power(g, cfg.r)[targets][:, None]

    meta = {"config_digest": cfg.digest(), "denormalized": False}
    if cfg.denormalize and column_norms is not None:
        out *= np.asarray(column_norms)[None, :]
        meta["denormalized"] = True
    if column_norms is not None:
        meta["column_norms"] = [float(v) for v in column_norms]
    return EmbeddingMatrix(np.asarray(targets, dtype=np.int64).copy(), out, meta)


@dataclass
class RunResult:
    embedding: EmbeddingMatrix
    seed: NormalizedSeed
    push_state: PushState
    walks: WalkFrequencies
    timings_ms: dict


def propagate(g: Graph, x, targets, cfg: PropagationConfig, threads: int = 1) -> RunResult:
    """All three phases: walks from the targets, push from the features, combine."""
    import time

    targets = NodeSet(targets, g.node_count)
    timings = {}
    t0 = time.perf_counter()
    walks = sample_walks(g, targets, cfg.n_r, cfg.L, cfg.seed, threads=threads)
    t1 = time.perf_counter()
    seed = normalize(x, g, cfg.r)
    state = push(g, seed, cfg.L, cfg.r_max, threads=threads)
    t2 = time.perf_counter()
    emb = combine(state, walks, g, cfg, seed.column_norms)
    t3 = time.perf_counter()
    timings["walk"] = (t1 - t0) * 1e3
    timings["push"] = (t2 - t1) * 1e3
    timings["combine"] = (t3 - t2) * 1e3
    return RunResult(emb, seed, state, walks, timings)


# -- serialization ------------------------------------------------------------

def write_embedding(e: EmbeddingMatrix, sink: IO[bytes]):
    """Little-endian GBPE: magic, u32 version, u64 rows, u64 cols, u64 row ids,
    f64 values row-major, u64 metadata length, UTF-8 JSON metadata."""
    rows, cols = e.values.shape
    if rows == 0:
        raise ValidationError("embedding has no rows")
    if len(e.row_ids) != rows:
        raise ValidationError("row id count does not match values")
    sink.write(EMBED_MAGIC)
    sink.write(struct.pack("<IQQ", EMBED_VERSION, rows, cols))
    sink.write(np.asarray(e.row_ids, dtype="<u8").tobytes())
    sink.write(np.ascontiguousarray(e.values, dtype="<f8").tobytes())
    meta = json.dumps(e.metadata, sort_keys=True).encode("utf-8")
    sink.write(struct.pack("<Q", len(meta)))
    sink.write(meta)


def _read_exact(source: IO[bytes], size: int, what: str) -> bytes:
    buf = source.read(size)
    if len(buf) != size:
        raise FormatError(f"truncated embedding ({what})")
    return buf


def read_embedding(source: IO[bytes]) -> EmbeddingMatrix:
    if source.read(4) != EMBED_MAGIC:
        raise FormatError("bad embedding magic")
    version, rows, cols = struct.unpack("<IQQ", _read_exact(source, 20, "header"))
    if version != EMBED_VERSION:
        raise FormatError(f"unsupported embedding version {version}")
    ids = np.frombuffer(_read_exact(source, 8 * rows, "row ids"), dtype="<u8").astype(np.int64)
    values = np.frombuffer(_read_exact(source, 8 * rows * cols, "values"), dtype="<f8")
    values = values.astype(np.float64).reshape(rows, cols)
    (meta_len,) = struct.unpack("<Q", _read_exact(source, 8, "metadata length"))
    try:
        meta = json.loads(_read_exact(source, meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt embedding metadata: {exc}") from None
    if source.read(1):
        raise FormatError("trailing bytes after embedding")
    return EmbeddingMatrix(ids, values, meta)


def write_embedding_tsv(e: EmbeddingMatrix, stream: IO[str]):
    for rid, row in zip(e.row_ids, e.values):
        stream.write("\t".join([str(int(rid))] + [repr(float(v)) for v in row]) + "\n")
