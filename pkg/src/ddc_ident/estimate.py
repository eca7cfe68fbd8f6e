"""Finite-sample machinery: sampling, criterion function, contour-set estimation.

With sampling noise the moment conditions no longer share an exact root, so
the identified set is estimated by a sublevel ("contour") set of a stacked
quadratic criterion S_n(beta): C_n(s) = {beta : a_n S_n(beta) <= s}. The
critical level s comes from a parametric bootstrap of the sup-criterion over
a preliminary estimate of the root set.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ChoiceData, ExclusionRestriction, ReferenceUtilitySpec, ValidationError, validate_choice_data
from .moments import moment_lhs, rhs_primitive_curve

__all__ = [
    "SampleDesign",
    "CriterionConfig",
    "ContourSet",
    "simulate_sample",
    "criterion",
    "criterion_curve",
    "contour_set",
    "critical_value",
]

DEFAULT_ESTIMATE_GRID = 2001
BISECT_WIDTH = 1e-12


@dataclass(frozen=True)
class SampleDesign:
    """Observation counts for sampling choice data (and optionally kernels)."""

    n_per_state: int
    n_transitions: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_per_state < 1:
            raise ValidationError(["n_per_state must be >= 1"])
        if self.n_transitions is not None and self.n_transitions < 1:
            raise ValidationError(["n_transitions must be >= 1 when set"])


@dataclass(frozen=True)
class CriterionConfig:
    """Weighting and normalization for the stacked criterion.

    ``weights`` must be symmetric positive definite over the stacked
    restrictions (identity when omitted). ``a_n`` defaults to the total
    choice observation count when a sample design is in play, and to 1 for
    population data. ``alpha`` is the bootstrap confidence level.
    """

    weights: np.ndarray | None = None
    a_n: float | None = None
    alpha: float = 0.9
    grid_n: int = DEFAULT_ESTIMATE_GRID
    epsilon: float = 1e-3

    def __post_init__(self):
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            problems = []
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                problems.append("weights must be a square matrix")
            elif np.max(np.abs(w - w.T)) > 1e-12:
                problems.append("weights must be symmetric")
            elif np.any(np.linalg.eigvalsh(w) <= 0):
                problems.append("weights must be positive definite")
            if problems:
                raise ValidationError(problems)
            w = np.array(w)
            w.flags.writeable = False
            object.__setattr__(self, "weights", w)
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError([f"alpha must lie in (0, 1], got {self.alpha}"])
        if self.grid_n < 101:
            raise ValidationError(["grid_n must be at least 101"])

    def weight_matrix(self, n_restrictions: int) -> np.ndarray:
        if self.weights is None:
            return np.eye(n_restrictions)
        if self.weights.shape[0] != n_restrictions:
            raise ValidationError(
                [f"weights are {self.weights.shape[0]}x{self.weights.shape[0]} "
                 f"but there are {n_restrictions} restrictions"]
            )
        return self.weights


@dataclass(frozen=True)
class ContourSet:
    """Disjoint sorted subintervals of the beta domain plus the level used."""

    intervals: tuple[tuple[float, float], ...]
    s_used: float
    criterion_curve: np.ndarray

    def __post_init__(self):
        curve = np.array(self.criterion_curve, dtype=float)
        curve.flags.writeable = False
        object.__setattr__(self, "criterion_curve", curve)
        object.__setattr__(self, "intervals", tuple(tuple(iv) for iv in self.intervals))

    def contains(self, beta: float, slack: float = 0.0) -> bool:
        return any(lo - slack <= beta <= hi + slack for lo, hi in self.intervals)


def _floored_frequencies(counts: np.ndarray) -> np.ndarray:
    """Frequencies with zero cells floored at half an observation."""
    adjusted = np.maximum(counts.astype(float), 0.5)
    return adjusted / adjusted.sum()


def _sample_from(truth: ChoiceData, n_per_state: int, n_transitions: int | None,
                 rng: np.random.Generator) -> ChoiceData:
    J, K = truth.J, truth.K
    p_hat = np.empty((K, J))
    for j in range(J):
        counts = rng.multinomial(n_per_state, truth.p[:, j])
        p_hat[:, j] = _floored_frequencies(counts)
    if n_transitions is None:
        kernels = [k.entries for k in truth.Q]
    else:
        kernels = []
        for k in range(K):
            q_hat = np.empty((J, J))
            for j in range(J):
                counts = rng.multinomial(n_transitions, truth.Q[k].entries[j])
                q_hat[j] = _floored_frequencies(counts)
            kernels.append(q_hat)
    return validate_choice_data(
        p_hat, kernels, labels=truth.states.labels, reference=truth.reference
    )


def simulate_sample(truth: ChoiceData, design: SampleDesign) -> ChoiceData:
    """Draw multinomial choice samples per state and return frequency estimates.

    Zero-count cells are floored at half an observation before renormalizing,
    keeping all probabilities interior. With ``n_transitions`` set, kernels
    are re-estimated from sampled transitions the same way. Deterministic
    given the design's seed.
    """
    rng = np.random.default_rng(design.seed)
    return _sample_from(truth, design.n_per_state, design.n_transitions, rng)


def _stacked_gaps(
    data: ChoiceData,
    restrictions: Sequence[ExclusionRestriction],
    ref_u: ReferenceUtilitySpec | None,
    betas: np.ndarray,
) -> np.ndarray:
    """Matrix of lhs - rhs(beta) gaps, shape (len(betas), R)."""
    gaps = np.empty((betas.size, len(restrictions)))
    for i, r in enumerate(restrictions):
        lhs = moment_lhs(data, r, ref_u)
        gaps[:, i] = lhs - rhs_primitive_curve(data, r, ref_u, betas)
    return gaps


def criterion(
    data: ChoiceData,
    restrictions: Sequence[ExclusionRestriction],
    ref_u: ReferenceUtilitySpec | None,
    config: CriterionConfig,
    beta: float,
) -> float:
    """Quadratic form S_n(beta) = g(beta)' W g(beta) over the stacked moments."""
    if not restrictions:
        raise ValueError("need at least one restriction")
    g = _stacked_gaps(data, restrictions, ref_u, np.array([beta]))[0]
    W = config.weight_matrix(len(restrictions))
    return float(g @ W @ g)


def criterion_curve(
    data: ChoiceData,
    restrictions: Sequence[ExclusionRestriction],
    ref_u: ReferenceUtilitySpec | None,
    config: CriterionConfig,
    betas: np.ndarray,
) -> np.ndarray:
    """Vectorized criterion over a beta grid."""
    if not restrictions:
        raise ValueError("need at least one restriction")
    g = _stacked_gaps(data, restrictions, ref_u, np.asarray(betas, dtype=float))
    W = config.weight_matrix(len(restrictions))
    return np.einsum("ni,ij,nj->n", g, W, g)


def _bisect_level(f, lo: float, hi: float, f_lo: float) -> float:
    """Boundary of {f <= 0} between a point with f_lo and one on the other side."""
    while hi - lo > BISECT_WIDTH:
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_min(g, lo: float, hi: float) -> float:
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    gc, gd = g(c), g(d)
    while b - a > BISECT_WIDTH:
        if gc < gd:
            b, d, gd = d, c, gc
            c = b - _INV_PHI * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _INV_PHI * (b - a)
            gd = g(d)
    return 0.5 * (a + b)


def contour_set(
    data: ChoiceData,
    restrictions: Sequence[ExclusionRestriction],
    ref_u: ReferenceUtilitySpec | None,
    config: CriterionConfig,
    s: float,
) -> ContourSet:
    """Sublevel set {beta : a_n S_n(beta) <= s}, merged into maximal intervals.

    Interval boundaries are refined by bisection on a_n S_n(beta) - s.
    Narrow wells that dip below the level between grid points (exact roots
    when s = 0) are caught by refining grid-local minima, so degenerate
    point intervals are reported rather than silently dropped.
    """
    if s < 0:
        raise ValueError(f"level s must be nonnegative, got {s}")
    a_n = config.a_n if config.a_n is not None else 1.0
    betas = np.linspace(0.0, 1.0 - config.epsilon, config.grid_n)
    raw = criterion_curve(data, restrictions, ref_u, config, betas)
    scaled = a_n * raw

    def h(beta: float) -> float:
        return a_n * criterion(data, restrictions, ref_u, config, beta) - s

    inside = scaled <= s
    intervals: list[list[float]] = []
    i = 0
    n = betas.size
    while i < n:
        if inside[i]:
            j = i
            while j + 1 < n and inside[j + 1]:
                j += 1
            if i == 0:
                lo = betas[0]
            else:
                lo = _bisect_level(h, betas[i - 1], betas[i], scaled[i - 1] - s)
            if j == n - 1:
                hi = betas[-1]
            else:
                hi = _bisect_level(h, betas[j], betas[j + 1], scaled[j] - s)
            intervals.append([lo, hi])
            i = j + 1
        else:
            i += 1

    # wells narrower than the grid spacing (degenerate points when s = 0)
    accept = s + max(1e-14, 1e-12 * s)
    for idx in range(1, n - 1):
        if inside[idx - 1] or inside[idx] or inside[idx + 1]:
            continue
        if scaled[idx] <= scaled[idx - 1] and scaled[idx] <= scaled[idx + 1]:
            x = _golden_min(lambda t: a_n * criterion(data, restrictions, ref_u, config, t),
                            betas[idx - 1], betas[idx + 1])
            hx = a_n * criterion(data, restrictions, ref_u, config, x) - s
            if hx <= accept - s:
                if hx <= 0.0:
                    lo = _bisect_level(h, betas[idx - 1], x, scaled[idx - 1] - s)
                    hi = _bisect_level(h, x, betas[idx + 1], hx)
                    intervals.append([lo, hi])
                else:
                    intervals.append([x, x])

    intervals.sort()
    merged: list[list[float]] = []
    for lo, hi in intervals:
        if merged and lo <= merged[-1][1] + BISECT_WIDTH:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])

    curve = np.column_stack([betas, raw])
    return ContourSet(
        intervals=tuple((lo, hi) for lo, hi in merged),
        s_used=s,
        criterion_curve=curve,
    )


def _thread_count() -> int:
    raw = os.environ.get("DDC_IDENT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def critical_value(
    data: ChoiceData,
    restrictions: Sequence[ExclusionRestriction],
    ref_u: ReferenceUtilitySpec | None,
    config: CriterionConfig,
    design: SampleDesign,
    n_boot: int = 200,
    seed: int = 0,
    prelim_slack: float = 2.0,
) -> float:
    """Bootstrap estimate s_n of the alpha-quantile of sup a_n S_n over the root set.

    Parametric bootstrap: resample choice data at the design's counts from
    the observed frequencies; on each replicate take the sup of the scaled
    criterion over a preliminary root-set estimate (the minimum-plus-slack
    contour of the original criterion); return the alpha-quantile of the
    sups. Deterministic given ``seed``; replicates use independent spawned
    RNG streams and merge by index.
    """
    if n_boot < 100:
        raise ValueError(f"n_boot must be >= 100, got {n_boot}")
    a_n = config.a_n if config.a_n is not None else float(design.n_per_state * data.J)
    betas = np.linspace(0.0, 1.0 - config.epsilon, config.grid_n)
    scaled = a_n * criterion_curve(data, restrictions, ref_u, config, betas)
    prelim = betas[scaled <= scaled.min() + prelim_slack]
    if prelim.size == 0:
        prelim = betas[np.argmin(scaled), None]

    streams = np.random.SeedSequence(seed).spawn(n_boot)

    def one_rep(b: int) -> float:
        rng = np.random.default_rng(streams[b])
        resampled = _sample_from(data, design.n_per_state, design.n_transitions, rng)
        vals = a_n * criterion_curve(resampled, restrictions, ref_u, config, prelim)
        return float(vals.max())

    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sups = list(pool.map(one_rep, range(n_boot)))
    else:
        sups = [one_rep(b) for b in range(n_boot)]
    return float(np.quantile(np.array(sups), config.alpha))
