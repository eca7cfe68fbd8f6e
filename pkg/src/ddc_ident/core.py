"""Domain types, validation, and the direct data-to-surplus mapping.

The observable objects of a stationary dynamic discrete choice model are the
conditional choice probabilities p_k(x) and the controlled Markov transition
kernels Q_k. Everything downstream (moment conditions, identified sets,
utility recovery) consumes the validated :class:`ChoiceData` built here.

All types are immutable after construction; arrays are frozen so validated
data can be shared freely across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ValidationError",
    "StateSpace",
    "ChoiceSet",
    "TransitionKernel",
    "ChoiceData",
    "ExcessSurplus",
    "ReferenceUtilitySpec",
    "ExclusionRestriction",
    "validate_choice_data",
    "excess_surplus",
]

ROW_SUM_TOL = 1e-9
PROB_SUM_TOL = 1e-9
DEFAULT_PROB_FLOOR = 1e-12


class ValidationError(ValueError):
    """Input data violate one or more invariants.

    Collects every violation found so callers see the full list at once
    rather than fixing problems one at a time.
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class StateSpace:
    """Discrete state space: J >= 2 uniquely labelled states."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValidationError(["state space needs at least 2 states"])
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError(["state labels must be unique"])

    @property
    def J(self) -> int:
        return len(self.labels)

    @staticmethod
    def of_size(J: int) -> "StateSpace":
        return StateSpace(tuple(f"x{j + 1}" for j in range(J)))


@dataclass(frozen=True)
class ChoiceSet:
    """K >= 2 alternatives with a designated reference choice.

    ``reference`` is a 0-based index; it defaults to the last alternative,
    the convention under which the reference utility is normalized.
    """

    K: int
    reference: int = -1

    def __post_init__(self):
        if self.K < 2:
            raise ValidationError(["choice set needs at least 2 alternatives"])
        ref = self.reference if self.reference >= 0 else self.K - 1
        if not 0 <= ref < self.K:
            raise ValidationError([f"reference index {self.reference} out of range for K={self.K}"])
        object.__setattr__(self, "reference", ref)


@dataclass(frozen=True)
class TransitionKernel:
    """Row-stochastic J x J matrix; entry (j, j') = P(next = x_j' | current = x_j)."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        problems = []
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            problems.append(f"kernel must be square, got shape {entries.shape}")
        else:
            if np.any(entries < 0) or np.any(entries > 1):
                problems.append("kernel entries must lie in [0, 1]")
            row_sums = entries.sum(axis=1)
            bad = np.where(np.abs(row_sums - 1.0) > ROW_SUM_TOL)[0]
            if bad.size:
                problems.append(
                    "non-stochastic kernel rows "
                    + ", ".join(f"{j + 1} (sum={row_sums[j]:.12g})" for j in bad)
                )
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, "entries", _frozen(entries))

    @property
    def J(self) -> int:
        return self.entries.shape[0]

    def row(self, j: int) -> np.ndarray:
        return self.entries[j]


@dataclass(frozen=True)
class ChoiceData:
    """Validated observables: choice probabilities and transition kernels.

    ``p`` has shape (K, J) with column sums 1 and all entries interior;
    ``Q`` holds one :class:`TransitionKernel` per alternative.
    """

    states: StateSpace
    choices: ChoiceSet
    p: np.ndarray
    Q: tuple[TransitionKernel, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", _frozen(self.p))
        object.__setattr__(self, "Q", tuple(self.Q))

    @property
    def J(self) -> int:
        return self.states.J

    @property
    def K(self) -> int:
        return self.choices.K

    @property
    def reference(self) -> int:
        return self.choices.reference

    @property
    def p_reference(self) -> np.ndarray:
        return self.p[self.choices.reference]

    def q_stack(self) -> np.ndarray:
        """Kernels stacked into a (K, J, J) array."""
        return np.stack([k.entries for k in self.Q])

    def q_reference(self) -> np.ndarray:
        return self.Q[self.choices.reference].entries

    def log_odds(self, k: int) -> np.ndarray:
        """ln(p_k / p_K) per state, the identified value contrast of choice k."""
        return np.log(self.p[k]) - np.log(self.p_reference)


@dataclass(frozen=True)
class ExcessSurplus:
    """Expected-maximum surplus measured relative to the reference value: m = -ln p_K."""

    m: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m", _frozen(self.m))


@dataclass(frozen=True)
class ReferenceUtilitySpec:
    """Known part of the reference utility u_K = gamma * 1 + u_bar_K.

    ``u_bar_K`` defaults to zero. ``gamma`` is the unknown constant shift;
    it is only needed for utility recovery (never for moment conditions)
    and stays ``None`` unless the user supplies it.
    """

    u_bar_K: np.ndarray | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.u_bar_K is not None:
            arr = np.asarray(self.u_bar_K, dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(["u_bar_K must be finite"])
            object.__setattr__(self, "u_bar_K", _frozen(arr))
        if self.gamma is not None and not np.isfinite(self.gamma):
            raise ValidationError(["gamma must be finite when supplied"])

    def u_bar(self, J: int) -> np.ndarray:
        """Known reference-utility profile as a length-J vector."""
        if self.u_bar_K is None:
            return np.zeros(J)
        if self.u_bar_K.shape != (J,):
            raise ValidationError(
                [f"u_bar_K has length {self.u_bar_K.shape[0]}, expected {J}"]
            )
        return np.asarray(self.u_bar_K)

    def gamma_or_zero(self) -> float:
        return 0.0 if self.gamma is None else float(self.gamma)


ZERO_REFERENCE = ReferenceUtilitySpec()


@dataclass(frozen=True)
class ExclusionRestriction:
    """Known gap between two primitive utilities: u_k(x1) - u_l(x2) is known.

    Indices are 0-based. ``delta2u`` is the known utility contrast net of the
    known reference-utility parts (zero for a pure equality restriction).
    ``t``/``t_prime`` index periods and are only meaningful for the
    finite-horizon model.
    """

    k: int
    l: int
    x1: int
    x2: int
    delta2u: float = 0.0
    t: int | None = None
    t_prime: int | None = None

    def __post_init__(self):
        if self.k == self.l and self.x1 == self.x2 and self.t == self.t_prime:
            raise ValidationError(
                ["restriction must contrast distinct (choice, state, period) pairs"]
            )
        if not np.isfinite(self.delta2u):
            raise ValidationError(["delta2u must be finite"])

    def check_against(self, data: ChoiceData) -> None:
        """Validate indices against a concrete data set."""
        problems = []
        if self.k == data.reference:
            problems.append("restriction choice k must differ from the reference choice")
        for name, idx, hi in (
            ("k", self.k, data.K),
            ("l", self.l, data.K),
            ("x1", self.x1, data.J),
            ("x2", self.x2, data.J),
        ):
            if not 0 <= idx < hi:
                problems.append(f"restriction index {name}={idx} out of range")
        if problems:
            raise ValidationError(problems)


def validate_choice_data(
    p,
    Q,
    *,
    labels: Sequence[str] | None = None,
    reference: int = -1,
    renormalize: bool = False,
    prob_floor: float = DEFAULT_PROB_FLOOR,
) -> ChoiceData:
    """Build validated :class:`ChoiceData` from raw probabilities and kernels.

    Parameters
    ----------
    p : array_like, shape (K, J)
        Choice probabilities per alternative and state.
    Q : sequence of K array_like, each (J, J)
        Transition kernel per alternative.
    labels : optional state labels (default x1..xJ).
    reference : 0-based reference choice index, default the last alternative.
    renormalize : if True, rescale kernel rows and per-state probabilities
        that are off by more than the tolerance instead of rejecting them.
        Off by default: silent renormalization masks data errors.
    prob_floor : probabilities must lie in (prob_floor, 1 - prob_floor);
        log and log-odds transforms are used throughout.

    Raises
    ------
    ValidationError
        listing every violated invariant.
    """
    p = np.array(p, dtype=float)
    violations: list[str] = []
    if p.ndim != 2:
        raise ValidationError([f"p must be a (K, J) array, got shape {p.shape}"])
    K, J = p.shape
    if K < 2 or J < 2:
        violations.append(f"need K >= 2 and J >= 2, got K={K}, J={J}")

    kernels_raw = [np.array(q, dtype=float) for q in Q]
    if len(kernels_raw) != K:
        violations.append(f"expected {K} kernels, got {len(kernels_raw)}")
    for i, q in enumerate(kernels_raw):
        if q.shape != (J, J):
            violations.append(f"kernel {i + 1} has shape {q.shape}, expected ({J}, {J})")
    if violations:
        raise ValidationError(violations)

    if renormalize:
        p = p / p.sum(axis=0, keepdims=True)
        kernels_raw = [q / q.sum(axis=1, keepdims=True) for q in kernels_raw]

    col_sums = p.sum(axis=0)
    bad_states = np.where(np.abs(col_sums - 1.0) > PROB_SUM_TOL)[0]
    for j in bad_states:
        violations.append(
            f"choice probabilities at state {j + 1} sum to {col_sums[j]:.12g}, not 1"
        )
    at_boundary = (p <= prob_floor) | (p >= 1.0 - prob_floor)
    for k, j in zip(*np.where(at_boundary)):
        violations.append(
            f"probability at boundary: p[{k + 1}]({j + 1}) = {p[k, j]:.6g} "
            f"outside ({prob_floor:g}, {1 - prob_floor:g})"
        )

    kernels = []
    for i, q in enumerate(kernels_raw):
        try:
            kernels.append(TransitionKernel(q))
        except ValidationError as err:
            violations.extend(f"kernel {i + 1}: {v}" for v in err.violations)

    if violations:
        raise ValidationError(violations)

    states = StateSpace(tuple(labels)) if labels is not None else StateSpace.of_size(J)
    if states.J != J:
        raise ValidationError([f"got {states.J} labels for {J} states"])
    choices = ChoiceSet(K, reference)
    return ChoiceData(states=states, choices=choices, p=p, Q=tuple(kernels))


def excess_surplus(data: ChoiceData) -> ExcessSurplus:
    """Excess surplus m = -ln p_K, identified directly from the choice data."""
    return ExcessSurplus(-np.log(data.p_reference))
