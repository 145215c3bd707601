"""Checks of the estimator against the exact oracle.

Used by ``gbp verify`` and by the acceptance suite, so both apply the same
thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .estimator import PropagationConfig, combine
from .features import NormalizedSeed
from .graph import Graph, degree_power
from .oracle import exact_propagate, invariant_residual
from .random_walks import sample_walks
from .reverse_push import push

EXACT_TOL = 1e-8
INVARIANT_TOL = 1e-10
UNBIASED_SIGMAS = 4.0
UNBIASED_FLOOR = 1e-12
UNBIASED_MIN_PASS = 0.999


def seed_in_input_space(g: Graph, seed: NormalizedSeed) -> np.ndarray:
    """``D^r`` times the seed: the feature matrix the push effectively propagates."""
    return degree_power(g, seed.r)[:, None] * seed.values


def oracle_matrix(g: Graph, seed: NormalizedSeed, cfg: PropagationConfig) -> np.ndarray:
    x = seed_in_input_space(g, seed)
    return exact_propagate(g, x, cfg.L, cfg.r, cfg.weights.as_array()).P


def invariant_max_residual(g: Graph, seed: NormalizedSeed, L: int, r_max: float,
                        points: int, rng: np.random.Generator) -> float:
    """Interrupt the push at ``points`` random entry counts and evaluate the invariant."""
    total = push(g, seed, L, r_max).pushed_entries
    x = seed_in_input_space(g, seed)
    worst = 0.0
    for b in rng.integers(0, total + 1, size=points):
        st = push(g, seed, L, r_max, budget=int(b))
        res = invariant_residual(g, x, [st.reserve_dense(lv) for lv in range(L + 1)],
                             [st.residue_dense(lv) for lv in range(L + 1)], seed.r)
        worst = max(worst, res)
    return worst


@dataclass
class UnbiasedReport:
    fraction_ok: float
    flagged: int
    retested: int
    still_failing: int
    passed: bool


def _estimates(g, state, targets, cfg, seeds):
    out = []
    for s in seeds:
        walks = sample_walks(g, targets, cfg.n_r, cfg.L, int(s))
        out.append(combine(state, walks, g, cfg).values)
    return np.stack(out)


def unbiasedness(g: Graph, seed: NormalizedSeed, targets, cfg: PropagationConfig,
                 trials: int, retest_trials: int = 10_000, base_seed: int = 0) -> UnbiasedReport:
    """Mean of P_hat over ``trials`` walk seeds vs the oracle, push state held fixed.

    An entry passes when ``|mean - P| <= 4 sigma_hat / sqrt(K) + 1e-12``.
    Entries that fail are re-tested with ``retest_trials`` fresh seeds.
    """
    targets = np.asarray(targets, dtype=np.int64)
    state = push(g, seed, cfg.L, cfg.r_max)
    P = oracle_matrix(g, seed, cfg)[targets]
    samples = _estimates(g, state, targets, cfg, base_seed + np.arange(trials))
    mean, sd = samples.mean(axis=0), samples.std(axis=0, ddof=1)
    bad = np.abs(mean - P) > UNBIASED_SIGMAS * sd / np.sqrt(trials) + UNBIASED_FLOOR
    flagged = int(bad.sum())
    still = 0
    if flagged and retest_trials:
        more = _estimates(g, state, targets, cfg,
                          base_seed + trials + np.arange(retest_trials))
        m2, s2 = more.mean(axis=0), more.std(axis=0, ddof=1)
        bad2 = np.abs(m2 - P) > UNBIASED_SIGMAS * s2 / np.sqrt(retest_trials) + UNBIASED_FLOOR
        still = int((bad & bad2).sum())
    frac = 1.0 - still / bad.size
    return UnbiasedReport(frac, flagged, flagged if retest_trials else 0, still,
                          frac >= UNBIASED_MIN_PASS)


def error_bound_violations(estimate: np.ndarray, exact: np.ndarray, g: Graph, targets,
                        r: float, epsilon: float) -> int:
    """Count entries with ``|P_hat - P| > d(s)^r * epsilon``."""
    tol = degree_power(g, r)[np.asarray(targets)][:, None] * epsilon
    return int(np.sum(np.abs(estimate - exact) > tol))


def rate_within(violations: int, total: int, limit: float, confidence: float = 0.95) -> bool:
    """False only if the data rejects ``rate <= limit`` at the given confidence."""
    if total == 0:
        return True
    test = stats.binomtest(violations, total, limit, alternative="greater")
    return test.pvalue >= 1 - confidence
