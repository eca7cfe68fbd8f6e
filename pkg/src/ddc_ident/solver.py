"""Forward solvers: from primitives (u, beta) to values and choice probabilities.

Covers the stationary infinite-horizon model (value iteration on the
log-sum-exp Bellman operator, a beta-contraction) and the nonstationary
finite-horizon model (backward induction). Also provides the reference-choice
value v_K as the solution of a linear system, which the moment conditions
and utility recovery build on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import (
    ChoiceData,
    ChoiceSet,
    ExcessSurplus,
    ReferenceUtilitySpec,
    StateSpace,
    TransitionKernel,
    ValidationError,
    validate_choice_data,
)

__all__ = [
    "StationaryPrimitives",
    "ValueFunctions",
    "FiniteHorizonPrimitives",
    "solve_stationary",
    "reference_value",
    "solve_finite_horizon",
]

SURPLUS_TOL = 1e-10


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class StationaryPrimitives:
    """Flow utilities u_k(x_j) as a (K, J) array and discount factor beta in [0, 1)."""

    u: np.ndarray
    beta: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        problems = []
        if u.ndim != 2:
            problems.append(f"u must be (K, J), got shape {u.shape}")
        elif not np.all(np.isfinite(u)):
            problems.append("utilities must be finite")
        if not 0.0 <= self.beta < 1.0:
            problems.append(f"beta must lie in [0, 1), got {self.beta}")
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, "u", _frozen(u))

    @property
    def K(self) -> int:
        return self.u.shape[0]

    @property
    def J(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class ValueFunctions:
    """Choice-specific values v_k(x_j) and per-state expected-maximum surplus."""

    v: np.ndarray
    surplus: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        surplus = np.asarray(self.surplus, dtype=float)
        if np.max(np.abs(surplus - logsumexp(v, axis=0))) > SURPLUS_TOL:
            raise ValidationError(["surplus is not the log-sum-exp of the values"])
        object.__setattr__(self, "v", _frozen(v))
        object.__setattr__(self, "surplus", _frozen(surplus))


@dataclass(frozen=True)
class FiniteHorizonPrimitives:
    """Per-period utilities u_{k,t} with stationary kernels and horizon T.

    ``u`` has shape (T, K, J). The discount factor is unrestricted here
    (any finite value); the nonstationary model does not need beta in [0, 1),
    so the admissible domain is left to the caller.
    """

    T: int
    u: np.ndarray
    beta: float
    Q: tuple[TransitionKernel, ...]

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        problems = []
        if self.T < 1:
            problems.append(f"horizon T must be >= 1, got {self.T}")
        if u.ndim != 3 or u.shape[0] != self.T:
            problems.append(f"u must be (T, K, J) with T={self.T}, got shape {u.shape}")
        elif not np.all(np.isfinite(u)):
            problems.append("utilities must be finite")
        if not np.isfinite(self.beta):
            problems.append("beta must be finite")
        if problems:
            raise ValidationError(problems)
        if len(self.Q) != u.shape[1]:
            raise ValidationError([f"expected {u.shape[1]} kernels, got {len(self.Q)}"])
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "Q", tuple(self.Q))

    @property
    def K(self) -> int:
        return self.u.shape[1]

    @property
    def J(self) -> int:
        return self.u.shape[2]


def _choice_probabilities(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-state softmax of choice-specific values, computed in shifted form."""
    s = logsumexp(v, axis=0)
    return np.exp(v - s), s


def solve_stationary(
    prim: StationaryPrimitives,
    Q,
    *,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
    reference: int = -1,
) -> tuple[ValueFunctions, ChoiceData]:
    """Solve the stationary model by value iteration.

    Iterates v_k = u_k + beta * Q_k @ logsumexp(v) to a sup-norm residual
    below ``tol``. The operator is a beta-contraction, so convergence is
    guaranteed; ``max_iter`` only guards against numerical pathology.

    Returns the fixed-point values and the implied choice data (softmax
    probabilities per state, with the supplied kernels embedded).
    """
    kernels = [q if isinstance(q, TransitionKernel) else TransitionKernel(q) for q in Q]
    if len(kernels) != prim.K:
        raise ValidationError([f"expected {prim.K} kernels, got {len(kernels)}"])
    q_stack = np.stack([k.entries for k in kernels])

    v = prim.u.copy()
    if prim.beta > 0.0:
        for _ in range(max_iter):
            s = logsumexp(v, axis=0)
            v_new = prim.u + prim.beta * (q_stack @ s)
            residual = np.max(np.abs(v_new - v))
            v = v_new
            if residual < tol:
                break
        else:
            raise RuntimeError(
                f"value iteration did not reach residual {tol:g} in {max_iter} iterations"
            )

    p, s = _choice_probabilities(v)
    values = ValueFunctions(v=v, surplus=s)
    data = validate_choice_data(
        p, [k.entries for k in kernels], reference=reference
    )
    return values, data


def reference_value(
    beta: float,
    q_K,
    m: ExcessSurplus | np.ndarray,
    ref_u: ReferenceUtilitySpec | None = None,
) -> np.ndarray:
    """Value of the reference choice: v_K = [I - beta Q_K]^{-1} [u_K + beta Q_K m].

    Solved directly (LU factorization), not by power series; the system is
    nonsingular for beta in (-1, 1) because Q_K has spectral radius 1.
    ``ref_u`` supplies the known reference utility u_K = gamma * 1 + u_bar_K
    (defaults: both zero).
    """
    if not -1.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (-1, 1), got {beta}")
    q = q_K.entries if isinstance(q_K, TransitionKernel) else np.asarray(q_K, dtype=float)
    m_vec = m.m if isinstance(m, ExcessSurplus) else np.asarray(m, dtype=float)
    J = q.shape[0]
    spec = ref_u if ref_u is not None else ReferenceUtilitySpec()
    u_K = spec.gamma_or_zero() + spec.u_bar(J)
    system = np.eye(J) - beta * q
    return np.linalg.solve(system, u_K + beta * (q @ m_vec))


def solve_finite_horizon(
    prim: FiniteHorizonPrimitives,
    *,
    reference: int = -1,
) -> list[tuple[ValueFunctions, ChoiceData]]:
    """Solve the finite-horizon model by backward induction.

    Terminal condition v_{k,T} = u_{k,T}; earlier periods satisfy
    v_{k,t} = u_{k,t} + beta * Q_k @ (m_{t+1} + v_{K,t+1}) with
    m_t = -ln p_{K,t}. Returns one (values, data) pair per period,
    index 0 = period 1.
    """
    K, J = prim.K, prim.J
    ref = ChoiceSet(K, reference).reference
    q_stack = np.stack([k.entries for k in prim.Q])

    per_period: list[tuple[ValueFunctions, ChoiceData]] = [None] * prim.T  # type: ignore
    m_next = None
    v_ref_next = None
    for t in range(prim.T - 1, -1, -1):
        if t == prim.T - 1:
            v = prim.u[t].copy()
        else:
            v = prim.u[t] + prim.beta * (q_stack @ (m_next + v_ref_next))
        p, s = _choice_probabilities(v)
        values = ValueFunctions(v=v, surplus=s)
        data = validate_choice_data(p, [k.entries for k in prim.Q], reference=ref)
        per_period[t] = (values, data)
        m_next = -np.log(p[ref])
        v_ref_next = v[ref]
    return per_period
