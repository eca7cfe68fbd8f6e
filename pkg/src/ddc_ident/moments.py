"""Moment conditions linking the discount factor to observable choice data.

An exclusion restriction u_k(x1) - u_l(x2) = known turns into a scalar moment
condition lhs = rhs(beta):

* primitive-utility variant: rhs(beta) = beta * d2q @ [I - beta Q_K]^{-1} @ mbar,
  a real-analytic function of beta;
* current-value variant: rhs(beta) = beta * (d2q @ mbar), linear in beta;

where d2q = Q_k(x1) - Q_K(x1) - Q_l(x2) + Q_K(x2) and mbar = m + u_bar_K.
This module evaluates both variants, their rank/monotonicity diagnostics,
and the finite-dependence structure that collapses the primitive-utility
variant to a polynomial.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    ChoiceData,
    ExclusionRestriction,
    ReferenceUtilitySpec,
    excess_surplus,
)
from .solver import reference_value

__all__ = [
    "Variant",
    "Monotonicity",
    "DependenceVariant",
    "MomentEvaluation",
    "FiniteDependenceResult",
    "moment_lhs",
    "moment_rhs_primitive",
    "rhs_primitive_curve",
    "moment_rhs_current_value",
    "rank_scalar",
    "current_value",
    "monotonicity_check",
    "finite_dependence",
    "polynomial_moment",
    "finite_horizon_moment",
    "evaluate_moment",
]

RANK_TOL = 1e-10
DEPENDENCE_TOL = 1e-9


class Variant(enum.Enum):
    PRIMITIVE_UTILITY = "primitive_utility"
    CURRENT_VALUE = "current_value"


class Monotonicity(enum.Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    INCONCLUSIVE = "inconclusive"


class DependenceVariant(enum.Enum):
    INITIAL_CHOICE = "initial_choice"
    INITIAL_STATE = "initial_state"


@dataclass(frozen=True)
class MomentEvaluation:
    """One moment condition, packaged for root finding and reporting."""

    lhs: float
    rhs_at: Callable[[float], float]
    variant: Variant
    rank_scalar: float
    restriction: ExclusionRestriction


@dataclass(frozen=True)
class FiniteDependenceResult:
    """Smallest dependence order, if one exists below the search cap."""

    rho: int | None
    variant: DependenceVariant
    residual_norm: float


def _mbar(data: ChoiceData, ref_u: ReferenceUtilitySpec | None) -> np.ndarray:
    m = excess_surplus(data).m
    if ref_u is None:
        return m
    return m + ref_u.u_bar(data.J)


def _delta2q(data: ChoiceData, r: ExclusionRestriction) -> np.ndarray:
    q_ref = data.q_reference()
    return (
        data.Q[r.k].row(r.x1)
        - q_ref[r.x1]
        - data.Q[r.l].row(r.x2)
        + q_ref[r.x2]
    )


def moment_lhs(
    data: ChoiceData,
    r: ExclusionRestriction,
    ref_u: ReferenceUtilitySpec | None = None,
) -> float:
    """Observed log choice probability response, net of the known utility gap.

    Returns ln(p_k(x1)/p_K(x1)) - ln(p_l(x2)/p_K(x2)) - delta2u.
    """
    r.check_against(data)
    return float(data.log_odds(r.k)[r.x1] - data.log_odds(r.l)[r.x2] - r.delta2u)


def rank_scalar(
    data: ChoiceData,
    r: ExclusionRestriction,
    ref_u: ReferenceUtilitySpec | None = None,
) -> float:
    """Contrast in expected excess surplus, d2q @ mbar.

    This is the moment's slope at beta = 0 for both variants; the rank
    condition holds when it is nonzero (|value| > tolerance).
    """
    r.check_against(data)
    return float(_delta2q(data, r) @ _mbar(data, ref_u))


def moment_rhs_primitive(
    data: ChoiceData,
    r: ExclusionRestriction,
    ref_u: ReferenceUtilitySpec | None,
    beta: float,
) -> float:
    """Model-implied response under the primitive-utility restriction.

    Evaluates beta * d2q @ [I - beta Q_K]^{-1} @ mbar by direct linear solve;
    defined for beta in (-1, 1), where the resolvent exists.
    """
    if not -1.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (-1, 1), got {beta}")
    r.check_against(data)
    q_ref = data.q_reference()
    y = np.linalg.solve(np.eye(data.J) - beta * q_ref, _mbar(data, ref_u))
    return float(beta * (_delta2q(data, r) @ y))


def rhs_primitive_curve(
    data: ChoiceData,
    r: ExclusionRestriction,
    ref_u: ReferenceUtilitySpec | None,
    betas: np.ndarray,
) -> np.ndarray:
    """Vectorized primitive-utility rhs over a beta grid (batched solves)."""
    betas = np.asarray(betas, dtype=float)
    if betas.size and not (-1.0 < betas.min() and betas.max() < 1.0):
        raise ValueError("all betas must lie in (-1, 1)")
    r.check_against(data)
    q_ref = data.q_reference()
    J = data.J
    systems = np.eye(J) - betas[:, None, None] * q_ref
    y = np.linalg.solve(systems, np.broadcast_to(_mbar(data, ref_u), (betas.size, J)))
    return betas * (y @ _delta2q(data, r))


def moment_rhs_current_value(
    data: ChoiceData,
    r: ExclusionRestriction,
    beta: float,
    ref_u: ReferenceUtilitySpec | None = None,
) -> float:
    """Model-implied response under the current-value restriction: beta * rank."""
    return beta * rank_scalar(data, r, ref_u)


def current_value(
    data: ChoiceData,
    beta: float,
    k: int,
    ref_u: ReferenceUtilitySpec | None = None,
) -> np.ndarray:
    """Current value of choice k: U_k = u_k - u_K + beta [Q_k - Q_K] v_K.

    Built from the utilities that rationalize the data at ``beta`` (the
    recovery construction) and the reference value; used to compare the two
    exclusion-restriction variants. Invariant to the unknown shift gamma.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    spec = ref_u if ref_u is not None else ReferenceUtilitySpec()
    m = excess_surplus(data).m
    q_ref = data.q_reference()
    v_K = reference_value(beta, q_ref, m, spec)
    v_k = v_K + data.log_odds(k)
    u_k = v_k - beta * (data.Q[k].entries @ (m + v_K))
    u_K = spec.gamma_or_zero() + spec.u_bar(data.J)
    return u_k - u_K + beta * ((data.Q[k].entries - q_ref) @ v_K)


def monotonicity_check(
    data: ChoiceData,
    r: ExclusionRestriction,
    ref_u: ReferenceUtilitySpec | None = None,
    r_max: int = 200,
    tol: float = RANK_TOL,
    beta_max: float | None = None,
) -> Monotonicity:
    """Sign pattern of d2q @ Q_K^r @ mbar for r = 0..r_max.

    All nonnegative with at least one strictly positive means the
    primitive-utility rhs is strictly increasing on the beta domain, so at
    most one root exists; all nonpositive means the same after a sign flip.
    Mixed signs are Inconclusive. When ``beta_max`` is given, the check
    depth is extended until the geometric tail bound
    beta_max^(r+1)/(1-beta_max) * ||d2q||_1 * ||mbar||_inf falls below
    ``tol`` (capped at 100000 terms).
    """
    r.check_against(data)
    d2q = _delta2q(data, r)
    mbar = _mbar(data, ref_u)
    q_ref = data.q_reference()

    depth = r_max
    if beta_max is not None and 0.0 < beta_max < 1.0:
        scale = np.abs(d2q).sum() * np.max(np.abs(mbar))
        if scale > 0:
            needed = math.log(tol * (1.0 - beta_max) / scale) / math.log(beta_max) - 1.0
            depth = max(r_max, min(int(math.ceil(needed)), 100_000))

    w = mbar.copy()
    any_pos = any_neg = False
    for _ in range(depth + 1):
        s = float(d2q @ w)
        if s > tol:
            any_pos = True
        elif s < -tol:
            any_neg = True
        if any_pos and any_neg:
            return Monotonicity.INCONCLUSIVE
        w_next = q_ref @ w
        if np.max(np.abs(w_next - w)) < 1e-15:
            break
        w = w_next
    if any_pos and not any_neg:
        return Monotonicity.INCREASING
    if any_neg and not any_pos:
        return Monotonicity.DECREASING
    return Monotonicity.INCONCLUSIVE


def finite_dependence(
    data: ChoiceData,
    r: ExclusionRestriction,
    rho_max: int = 50,
    variant: DependenceVariant = DependenceVariant.INITIAL_CHOICE,
    tol: float = DEPENDENCE_TOL,
) -> FiniteDependenceResult:
    """Smallest rho at which the dependence kernel identities hold.

    Initial-choice variant: Q_k(x1) Q_K^rho = Q_K(x1) Q_K^rho and
    Q_l(x2) Q_K^rho = Q_K(x2) Q_K^rho. Initial-state variant:
    Q_k(x1) Q_K^rho = Q_l(x2) Q_K^rho and Q_K(x1) Q_K^rho = Q_K(x2) Q_K^rho.
    Either collapses the moment to a degree-rho polynomial. The reported
    residual is the sup-norm at the returned rho (or at rho_max when none).
    """
    r.check_against(data)
    q_ref = data.q_reference()
    if variant is DependenceVariant.INITIAL_CHOICE:
        rows = [
            data.Q[r.k].row(r.x1) - q_ref[r.x1],
            data.Q[r.l].row(r.x2) - q_ref[r.x2],
        ]
    else:
        rows = [
            data.Q[r.k].row(r.x1) - data.Q[r.l].row(r.x2),
            q_ref[r.x1] - q_ref[r.x2],
        ]
    w = np.stack(rows)
    residual = np.inf
    for rho in range(1, rho_max + 1):
        w = w @ q_ref
        residual = float(np.max(np.abs(w)))
        if residual < tol:
            return FiniteDependenceResult(rho=rho, variant=variant, residual_norm=residual)
    return FiniteDependenceResult(rho=None, variant=variant, residual_norm=residual)


def polynomial_moment(
    data: ChoiceData,
    r: ExclusionRestriction,
    ref_u: ReferenceUtilitySpec | None,
    rho: int,
    tol: float = DEPENDENCE_TOL,
) -> np.ndarray:
    """Coefficients c_1..c_rho of the rhs polynomial under rho-dependence.

    With rho-period dependence the resolvent series truncates and
    rhs(beta) = sum_r c_r beta^r with c_r = d2q @ Q_K^(r-1) @ mbar; in
    particular c_1 is the rank scalar. Raises if neither dependence variant
    actually holds at ``rho``.
    """
    r.check_against(data)
    holds = any(
        finite_dependence(data, r, rho_max=rho, variant=v, tol=tol).rho is not None
        for v in DependenceVariant
    )
    if not holds:
        raise ValueError(f"kernels do not show {rho}-period dependence within {tol:g}")
    d2q = _delta2q(data, r)
    mbar = _mbar(data, ref_u)
    q_ref = data.q_reference()
    coeffs = np.empty(rho)
    w = mbar.copy()
    for i in range(rho):
        coeffs[i] = d2q @ w
        w = q_ref @ w
    return coeffs


def finite_horizon_moment(
    fh_data: Sequence[ChoiceData],
    r: ExclusionRestriction,
) -> tuple[float, np.ndarray]:
    """Moment condition for the finite-horizon model.

    ``fh_data`` holds per-period choice data (index 0 = period 1) with
    stationary kernels; the restriction must carry 0-based period indices
    t and t_prime. Returns (lhs, coefficients c_1..c_degree) where
    degree = T - 1 - t_prime and the rhs polynomial is sum_r c_r beta^r.
    The degree-1 coefficient is the finite-horizon rank expression.
    """
    T = len(fh_data)
    if r.t is None or r.t_prime is None:
        raise ValueError("finite-horizon restriction needs period indices t and t_prime")
    t, tp = r.t, r.t_prime
    if not (0 <= tp <= t < T):
        raise ValueError(f"need 0 <= t_prime <= t < T={T}, got t={t}, t_prime={tp}")
    if tp > T - 2:
        raise ValueError("t_prime must leave at least one later period (t_prime < T-1)")
    for d in fh_data:
        r.check_against(d)

    data_t, data_tp = fh_data[t], fh_data[tp]
    lhs = float(
        data_t.log_odds(r.k)[r.x1] - data_tp.log_odds(r.l)[r.x2] - r.delta2u
    )

    q_ref = data_t.q_reference()
    a = data_t.Q[r.k].row(r.x1) - q_ref[r.x1]
    b = data_t.Q[r.l].row(r.x2) - q_ref[r.x2]
    m = [-np.log(d.p_reference) for d in fh_data]

    degree = T - 1 - tp
    coeffs = np.zeros(degree)
    wa, wb = a.copy(), b.copy()
    for i in range(degree):
        rr = i + 1
        if t + rr < T:
            coeffs[i] += wa @ m[t + rr]
        coeffs[i] -= wb @ m[tp + rr]
        wa = wa @ q_ref
        wb = wb @ q_ref
    return lhs, coeffs


def evaluate_moment(
    data: ChoiceData,
    r: ExclusionRestriction,
    ref_u: ReferenceUtilitySpec | None = None,
    variant: Variant = Variant.PRIMITIVE_UTILITY,
) -> MomentEvaluation:
    """Bundle lhs, rhs(beta), and the rank scalar for one restriction."""
    lhs = moment_lhs(data, r, ref_u)
    rank = rank_scalar(data, r, ref_u)
    if variant is Variant.PRIMITIVE_UTILITY:
        def rhs_at(beta: float) -> float:
            return moment_rhs_primitive(data, r, ref_u, beta)
    else:
        def rhs_at(beta: float) -> float:
            return beta * rank
    return MomentEvaluation(
        lhs=lhs, rhs_at=rhs_at, variant=variant, rank_scalar=rank, restriction=r
    )
