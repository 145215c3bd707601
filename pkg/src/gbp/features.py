"""Dense feature matrices and the degree-scaled, column-normalized residue seed."""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from .errors import FormatError, ValidationError
from .graph import Graph, degree_power


@dataclass(frozen=True)
class NormalizedSeed:
    """``ColumnNormalized(D^{-r} X)`` plus the L1 norms that were divided out.

    All-zero columns stay zero and record a norm of 1, so multiplying an
    output column by its norm is always a valid de-normalization.
    """

    values: np.ndarray
    column_norms: np.ndarray
    r: float

    @property
    def shape(self):
        return self.values.shape


def as_feature_matrix(x) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise ValidationError(f"feature matrix must be a non-empty 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("feature matrix contains non-finite values")
    return x


def normalize(x, g: Graph, r: float) -> NormalizedSeed:
    x = as_feature_matrix(x)
    if x.shape[0] != g.node_count:
        raise ValidationError(f"feature rows ({x.shape[0]}) != node count ({g.node_count})")
    scaled = degree_power(g, -r)[:, None] * x
    norms = np.abs(scaled).sum(axis=0)
    norms[norms == 0] = 1.0
    return NormalizedSeed(scaled / norms, norms, float(r))


def load_features(stream: IO[str] | Iterable[str], n: int) -> np.ndarray:
    """Read ``n`` whitespace-separated rows of reals; the first row fixes the width."""
    rows = []
    width = None
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text:
            continue
        parts = text.split()
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise FormatError(f"line {lineno}: ragged row ({len(parts)} values, expected {width})")
        try:
            rows.append([float(tok) for tok in parts])
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric value") from None
    if len(rows) != n:
        raise FormatError(f"expected {n} feature rows, got {len(rows)}")
    x = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise FormatError("non-finite feature value")
    return x


def write_features(x: np.ndarray, stream: IO[str]):
    for row in np.asarray(x):
        stream.write(" ".join(repr(float(v)) for v in row) + "\n")
