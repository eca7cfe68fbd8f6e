"""Identified sets of discount factors: root sets of the moment conditions.

The identified set is closed and discrete on [0, 1) and finite once values
within epsilon of 1 are excluded, so it is found by a dense grid scan with
bisection refinement (plus tangential-root detection for even-multiplicity
crossings). Polynomial moment conditions additionally go through
companion-matrix eigenvalues. Sets from several restrictions are sharpened
by intersection.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import ChoiceData, ExclusionRestriction, ReferenceUtilitySpec
from .moments import (
    DependenceVariant,
    FiniteDependenceResult,
    Monotonicity,
    Variant,
    finite_dependence,
    moment_lhs,
    moment_rhs_primitive,
    monotonicity_check,
    rank_scalar,
    rhs_primitive_curve,
)

__all__ = [
    "SetStatus",
    "SetDiagnostics",
    "IdentifiedSet",
    "ContentVerdict",
    "ContentReport",
    "identified_set",
    "identified_set_polynomial",
    "intersect_sets",
    "empirical_content_report",
]

DEFAULT_EPSILON = 1e-3
DEFAULT_GRID_N = 10001
ROOT_TOL = 1e-9
TANGENT_TOL = 1e-10
BISECT_WIDTH = 1e-12
EXACT_ZERO = 1e-13
MATCH_TOL = 1e-4


class SetStatus(enum.Enum):
    FINITE = "finite"
    EMPTY = "empty"
    UNINFORMATIVE = "uninformative"


class ContentVerdict(enum.Enum):
    BOTH_RATIONALIZE = "both_rationalize"
    PRIMITIVE_ONLY = "primitive_only"
    CURRENT_VALUE_ONLY = "current_value_only"
    NEITHER = "neither"


@dataclass(frozen=True)
class SetDiagnostics:
    rank_scalar: float | None = None
    monotonicity: Monotonicity | None = None
    dependence: FiniteDependenceResult | None = None


@dataclass(frozen=True)
class IdentifiedSet:
    """Sorted roots on [0, 1 - epsilon] with diagnostics.

    ``UNINFORMATIVE`` means the moment condition is identically zero, so
    every discount factor on the domain rationalizes the data.
    """

    roots: tuple[float, ...]
    epsilon: float
    status: SetStatus
    diagnostics: SetDiagnostics = SetDiagnostics()

    def is_empty(self) -> bool:
        return self.status is SetStatus.EMPTY

    def rationalizes(self) -> bool:
        return self.status is not SetStatus.EMPTY


@dataclass(frozen=True)
class ContentReport:
    verdict: ContentVerdict
    primitive_set: IdentifiedSet
    current_value_set: IdentifiedSet


def _bisect(f: Callable[[float], float], lo: float, hi: float, f_lo: float) -> float:
    """Shrink a sign-change bracket to width below BISECT_WIDTH."""
    while hi - lo > BISECT_WIDTH:
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if f_lo * f_mid < 0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    return 0.5 * (lo + hi)


_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_min(g: Callable[[float], float], lo: float, hi: float) -> float:
    """Golden-section minimizer of g on [lo, hi] to width below BISECT_WIDTH."""
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


def _scan_roots(
    f: Callable[[float], float],
    betas: np.ndarray,
    fs: np.ndarray,
    tangent_tol: float,
) -> list[float]:
    """All roots of f on the grid span: exact zeros, sign changes, tangencies."""
    roots: list[float] = []
    zero = np.abs(fs) <= EXACT_ZERO
    for i in np.where(zero)[0]:
        roots.append(float(betas[i]))
    for i in range(betas.size - 1):
        if zero[i] or zero[i + 1]:
            continue
        if fs[i] * fs[i + 1] < 0:
            roots.append(_bisect(f, betas[i], betas[i + 1], fs[i]))
    # tangential (even-multiplicity) roots: grid-local minima of |f| that dip
    # below tolerance without a sign change
    absf = np.abs(fs)
    for i in range(1, betas.size - 1):
        if zero[i] or absf[i] > tangent_tol:
            continue
        if absf[i] <= absf[i - 1] and absf[i] <= absf[i + 1]:
            if fs[i - 1] * fs[i] > 0 and fs[i] * fs[i + 1] > 0:
                x = _golden_min(lambda t: abs(f(t)), betas[i - 1], betas[i + 1])
                if abs(f(x)) < tangent_tol:
                    roots.append(x)
    return _dedupe(roots)


def _dedupe(roots: Sequence[float], tol: float = 1e-8) -> list[float]:
    out: list[float] = []
    for x in sorted(roots):
        if not out or x - out[-1] > tol:
            out.append(x)
    return out


def _diagnostics(
    data: ChoiceData,
    r: ExclusionRestriction,
    ref_u: ReferenceUtilitySpec | None,
    rho_max: int,
) -> SetDiagnostics:
    dep = finite_dependence(data, r, rho_max=rho_max)
    if dep.rho is None:
        state = finite_dependence(
            data, r, rho_max=rho_max, variant=DependenceVariant.INITIAL_STATE
        )
        if state.rho is not None:
            dep = state
    return SetDiagnostics(
        rank_scalar=rank_scalar(data, r, ref_u),
        monotonicity=monotonicity_check(data, r, ref_u),
        dependence=dep,
    )


def identified_set(
    data: ChoiceData,
    r: ExclusionRestriction,
    ref_u: ReferenceUtilitySpec | None = None,
    variant: Variant = Variant.PRIMITIVE_UTILITY,
    epsilon: float = DEFAULT_EPSILON,
    grid_n: int = DEFAULT_GRID_N,
    root_tol: float = ROOT_TOL,
    tangent_tol: float = TANGENT_TOL,
    rho_max: int = 50,
) -> IdentifiedSet:
    """All discount factors on [0, 1 - epsilon] solving lhs = rhs(beta).

    Scans f(beta) = rhs(beta) - lhs on a uniform grid, brackets sign changes
    and refines by bisection, and picks up tangential roots as local minima
    of |f| below tolerance. Returns ``UNINFORMATIVE`` when the response is
    zero, the rank condition fails, and f vanishes on the whole grid (every
    beta then rationalizes the data).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if grid_n < 1001:
        raise ValueError(f"grid_n must be at least 1001, got {grid_n}")

    lhs = moment_lhs(data, r, ref_u)
    rank = rank_scalar(data, r, ref_u)
    betas = np.linspace(0.0, 1.0 - epsilon, grid_n)

    if variant is Variant.PRIMITIVE_UTILITY:
        fs = rhs_primitive_curve(data, r, ref_u, betas) - lhs

        def f(beta: float) -> float:
            return moment_rhs_primitive(data, r, ref_u, beta) - lhs

    else:
        fs = betas * rank - lhs

        def f(beta: float) -> float:
            return beta * rank - lhs

    diagnostics = _diagnostics(data, r, ref_u, rho_max)

    if abs(lhs) <= EXACT_ZERO and abs(rank) <= EXACT_ZERO and np.max(np.abs(fs)) <= EXACT_ZERO:
        return IdentifiedSet(
            roots=(), epsilon=epsilon, status=SetStatus.UNINFORMATIVE, diagnostics=diagnostics
        )

    roots = [x for x in _scan_roots(f, betas, fs, tangent_tol) if abs(f(x)) < root_tol]
    status = SetStatus.FINITE if roots else SetStatus.EMPTY
    return IdentifiedSet(
        roots=tuple(roots), epsilon=epsilon, status=status, diagnostics=diagnostics
    )


def identified_set_polynomial(
    coefficients,
    lhs: float,
    domain: tuple[float, float] = (0.0, 1.0 - DEFAULT_EPSILON),
    imag_tol: float = 1e-8,
    root_tol: float = ROOT_TOL,
    grid_n: int = DEFAULT_GRID_N,
) -> IdentifiedSet:
    """Real roots of sum_r c_r beta^r = lhs inside ``domain``.

    Roots come from companion-matrix eigenvalues (imaginary parts below
    ``imag_tol`` count as real), cross-validated against a grid scan so no
    domain root is missed. An all-zero polynomial with zero lhs is
    ``UNINFORMATIVE``; with nonzero lhs the equation is inconsistent and
    the set is ``EMPTY``.
    """
    coeffs = np.atleast_1d(np.asarray(coefficients, dtype=float))
    lo, hi = domain
    if not lo < hi:
        raise ValueError(f"empty domain {domain}")
    poly = np.concatenate(([-lhs], coeffs))
    diagnostics = SetDiagnostics(rank_scalar=float(coeffs[0]) if coeffs.size else None)

    if np.max(np.abs(poly)) <= EXACT_ZERO:
        return IdentifiedSet(
            roots=(),
            epsilon=1.0 - hi if hi < 1.0 else DEFAULT_EPSILON,
            status=SetStatus.UNINFORMATIVE,
            diagnostics=diagnostics,
        )

    trimmed = np.polynomial.polynomial.polytrim(poly, tol=0.0)
    roots: list[float] = []
    if len(trimmed) > 1:
        eig = np.polynomial.polynomial.polyroots(trimmed)
        for z in eig:
            if abs(z.imag) < imag_tol and lo - 1e-12 <= z.real <= hi + 1e-12:
                roots.append(float(min(max(z.real, lo), hi)))

    def f(beta: float) -> float:
        return float(np.polynomial.polynomial.polyval(beta, poly))

    betas = np.linspace(lo, hi, grid_n)
    fs = np.polynomial.polynomial.polyval(betas, poly)
    roots.extend(_scan_roots(f, betas, fs, TANGENT_TOL))

    scale = max(1.0, float(np.max(np.abs(poly))))
    roots = [x for x in _dedupe(roots) if abs(f(x)) < root_tol * scale]
    status = SetStatus.FINITE if roots else SetStatus.EMPTY
    return IdentifiedSet(
        roots=tuple(roots),
        epsilon=1.0 - hi if hi < 1.0 else DEFAULT_EPSILON,
        status=status,
        diagnostics=diagnostics,
    )


def intersect_sets(
    sets: Sequence[IdentifiedSet],
    match_tol: float = MATCH_TOL,
) -> IdentifiedSet:
    """Roots shared (within ``match_tol``) by every informative set.

    Uninformative sets are absorbed: intersecting with "everything" returns
    the other sets' roots. Matched clusters are reported at their midpoint.
    """
    if not sets:
        raise ValueError("need at least one identified set")
    informative = [s for s in sets if s.status is not SetStatus.UNINFORMATIVE]
    epsilon = min(s.epsilon for s in sets)
    if not informative:
        return IdentifiedSet(roots=(), epsilon=epsilon, status=SetStatus.UNINFORMATIVE)
    if len(informative) == 1:
        base = informative[0]
        return IdentifiedSet(roots=base.roots, epsilon=epsilon, status=base.status)

    base = min(informative, key=lambda s: len(s.roots))
    others = [s for s in informative if s is not base]
    shared: list[float] = []
    for root in base.roots:
        cluster = [root]
        for s in others:
            matches = [x for x in s.roots if abs(x - root) <= match_tol]
            if not matches:
                cluster = None
                break
            cluster.append(min(matches, key=lambda x: abs(x - root)))
        if cluster is not None:
            shared.append(0.5 * (min(cluster) + max(cluster)))
    shared = _dedupe(shared)
    status = SetStatus.FINITE if shared else SetStatus.EMPTY
    return IdentifiedSet(roots=tuple(shared), epsilon=epsilon, status=status)


def empirical_content_report(
    data: ChoiceData,
    r: ExclusionRestriction,
    ref_u: ReferenceUtilitySpec | None = None,
    epsilon: float = DEFAULT_EPSILON,
    grid_n: int = DEFAULT_GRID_N,
) -> ContentReport:
    """Which exclusion restriction (if either) can rationalize the data.

    The unrestricted model rationalizes any choice data, but each restriction
    is testable: it fails exactly when its moment condition has no solution
    on the domain. Comparing the two variants' sets tests the nonnested
    identifying assumptions against each other.
    """
    prim = identified_set(
        data, r, ref_u, variant=Variant.PRIMITIVE_UTILITY, epsilon=epsilon, grid_n=grid_n
    )
    curr = identified_set(
        data, r, ref_u, variant=Variant.CURRENT_VALUE, epsilon=epsilon, grid_n=grid_n
    )
    if prim.rationalizes() and curr.rationalizes():
        verdict = ContentVerdict.BOTH_RATIONALIZE
    elif prim.rationalizes():
        verdict = ContentVerdict.PRIMITIVE_ONLY
    elif curr.rationalizes():
        verdict = ContentVerdict.CURRENT_VALUE_ONLY
    else:
        verdict = ContentVerdict.NEITHER
    return ContentReport(verdict=verdict, primitive_set=prim, current_value_set=curr)
