"""Command-line front end.

Commands
--------
solve      forward-solve a primitives scenario to values and probabilities
identify   moment diagnostics, identified sets, and intersection for a data scenario
content    empirical-content verdict per restriction
estimate   criterion curve and contour-set estimate (optionally from a sampled data set)
reproduce  run a bundled example scenario and check its documented reference values

Scenarios are JSON files (1-based indices; see README for the schema).
Exit codes: 0 success, 1 domain error or failed reproduction checks,
2 input error.
"""

from __future__ import annotations

import argparse
import enum
import json
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .core import (
    ChoiceData,
    ExclusionRestriction,
    ReferenceUtilitySpec,
    TransitionKernel,
    ValidationError,
    excess_surplus,
    validate_choice_data,
)
from .estimate import (
    ContourSet,
    CriterionConfig,
    SampleDesign,
    contour_set,
    criterion,
    critical_value,
    simulate_sample,
)
from .identify import (
    ContentVerdict,
    IdentifiedSet,
    SetStatus,
    empirical_content_report,
    identified_set,
    identified_set_polynomial,
    intersect_sets,
)
from .moments import (
    Variant,
    finite_horizon_moment,
    moment_lhs,
    rank_scalar,
    rhs_primitive_curve,
)
from .solver import (
    FiniteHorizonPrimitives,
    StationaryPrimitives,
    solve_finite_horizon,
    solve_stationary,
)

SCHEMA_VERSION = 1
CURVE_HEADER = "beta,lhs,rhs_primitive,rhs_current_value"


class ScenarioError(ValueError):
    """Malformed scenario file or inconsistent command/scenario combination."""


class Mode(enum.Enum):
    DATA = "data"
    PRIMITIVES = "primitives"
    FINITE_HORIZON_PRIMITIVES = "finite_horizon_primitives"
    FINITE_HORIZON_DATA = "finite_horizon_data"


@dataclass
class ScenarioOptions:
    epsilon: float = 1e-3
    grid_n: int = 10001
    seed: int = 0
    match_tol: float = 1e-4
    rho_max: int = 50
    renormalize: bool = False
    alpha: float = 0.9
    a_n: float | None = None
    n_per_state: int | None = None
    n_transitions: int | None = None
    n_boot: int = 200
    s_override: float | None = None


@dataclass
class Scenario:
    mode: Mode
    restrictions: list[ExclusionRestriction]
    ref_u: ReferenceUtilitySpec
    options: ScenarioOptions
    name: str = ""
    reference: int = -1
    data: ChoiceData | None = None
    primitives: StationaryPrimitives | None = None
    kernels: tuple[TransitionKernel, ...] | None = None
    fh_primitives: FiniteHorizonPrimitives | None = None
    fh_data: list[ChoiceData] | None = None


_TOP_KEYS = {
    "schema_version", "name", "description", "mode", "states", "choices",
    "reference", "Q", "p", "u", "beta", "T", "restrictions", "ref_u", "options",
}
_OPTION_KEYS = set(ScenarioOptions.__dataclass_fields__)
_RESTRICTION_KEYS = {"k", "l", "x1", "x2", "delta2u", "t", "t_prime"}


def _require(payload: dict, key: str, mode: str):
    if key not in payload:
        raise ScenarioError(f"scenario mode '{mode}' requires key '{key}'")
    return payload[key]


def _parse_restriction(raw: dict, idx: int) -> ExclusionRestriction:
    unknown = set(raw) - _RESTRICTION_KEYS
    if unknown:
        raise ScenarioError(f"restriction {idx + 1}: unknown keys {sorted(unknown)}")
    try:
        return ExclusionRestriction(
            k=int(raw["k"]) - 1,
            l=int(raw["l"]) - 1,
            x1=int(raw["x1"]) - 1,
            x2=int(raw["x2"]) - 1,
            delta2u=float(raw.get("delta2u", 0.0)),
            t=None if raw.get("t") is None else int(raw["t"]) - 1,
            t_prime=None if raw.get("t_prime") is None else int(raw["t_prime"]) - 1,
        )
    except KeyError as err:
        raise ScenarioError(f"restriction {idx + 1}: missing key {err}") from err
    except ValidationError as err:
        raise ScenarioError(f"restriction {idx + 1}: {err}") from err


def load_scenario(source: str | Path | dict) -> Scenario:
    """Parse and validate a scenario from a JSON file path or a parsed dict."""
    if isinstance(source, dict):
        payload = source
    else:
        try:
            payload = json.loads(Path(source).read_text(encoding="utf-8"))
        except FileNotFoundError as err:
            raise ScenarioError(f"scenario file not found: {source}") from err
        except json.JSONDecodeError as err:
            raise ScenarioError(f"scenario is not valid JSON: {err}") from err
    if not isinstance(payload, dict):
        raise ScenarioError("scenario top level must be a JSON object")
    unknown = set(payload) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys {sorted(unknown)}")

    mode_raw = _require(payload, "mode", "any")
    try:
        mode = Mode(mode_raw)
    except ValueError as err:
        raise ScenarioError(
            f"unknown mode '{mode_raw}'; expected one of {[m.value for m in Mode]}"
        ) from err

    opts_raw = payload.get("options", {})
    unknown = set(opts_raw) - _OPTION_KEYS
    if unknown:
        raise ScenarioError(f"unknown option keys {sorted(unknown)}")
    options = ScenarioOptions(**opts_raw)

    states = payload.get("states")
    if isinstance(states, int):
        labels = None
        J_declared = states
    elif states is None:
        labels, J_declared = None, None
    else:
        labels = [str(s) for s in states]
        J_declared = len(labels)

    reference = int(payload.get("reference", 0)) - 1 if "reference" in payload else -1

    restrictions = [
        _parse_restriction(r, i) for i, r in enumerate(payload.get("restrictions", []))
    ]

    ref_u_raw = payload.get("ref_u", {})
    try:
        ref_u = ReferenceUtilitySpec(
            u_bar_K=ref_u_raw.get("u_bar_K"),
            gamma=ref_u_raw.get("gamma"),
        )
    except ValidationError as err:
        raise ScenarioError(f"ref_u: {err}") from err

    Q_raw = _require(payload, "Q", mode.value)
    scenario = Scenario(
        mode=mode,
        restrictions=restrictions,
        ref_u=ref_u,
        options=options,
        name=str(payload.get("name", "")),
        reference=reference,
    )

    try:
        if mode is Mode.DATA:
            p = np.asarray(_require(payload, "p", mode.value), dtype=float)
            scenario.data = validate_choice_data(
                p, Q_raw, labels=labels, reference=reference,
                renormalize=options.renormalize,
            )
        elif mode is Mode.PRIMITIVES:
            u = np.asarray(_require(payload, "u", mode.value), dtype=float)
            beta = float(_require(payload, "beta", mode.value))
            kernels = _kernels(Q_raw, options.renormalize)
            scenario.primitives = StationaryPrimitives(u=u, beta=beta)
            scenario.kernels = kernels
        elif mode is Mode.FINITE_HORIZON_PRIMITIVES:
            u = np.asarray(_require(payload, "u", mode.value), dtype=float)
            beta = float(_require(payload, "beta", mode.value))
            T = int(payload.get("T", u.shape[0]))
            kernels = _kernels(Q_raw, options.renormalize)
            scenario.fh_primitives = FiniteHorizonPrimitives(T=T, u=u, beta=beta, Q=kernels)
        else:
            p = np.asarray(_require(payload, "p", mode.value), dtype=float)
            if p.ndim != 3:
                raise ScenarioError(
                    f"finite-horizon data needs p with shape (T, K, J), got {p.shape}"
                )
            scenario.fh_data = [
                validate_choice_data(
                    p[t], Q_raw, labels=labels, reference=reference,
                    renormalize=options.renormalize,
                )
                for t in range(p.shape[0])
            ]
    except ValidationError as err:
        raise ScenarioError(f"invalid scenario data: {err}") from err

    if J_declared is not None:
        J_actual = _scenario_J(scenario)
        if J_actual != J_declared:
            raise ScenarioError(f"states declares J={J_declared} but data have J={J_actual}")
    return scenario


def _scenario_J(s: Scenario) -> int:
    if s.data is not None:
        return s.data.J
    if s.primitives is not None:
        return s.primitives.J
    if s.fh_primitives is not None:
        return s.fh_primitives.J
    return s.fh_data[0].J


def _kernels(Q_raw, renormalize: bool) -> tuple[TransitionKernel, ...]:
    kernels = []
    for i, q in enumerate(Q_raw):
        arr = np.asarray(q, dtype=float)
        if renormalize:
            arr = arr / arr.sum(axis=1, keepdims=True)
        try:
            kernels.append(TransitionKernel(arr))
        except ValidationError as err:
            raise ScenarioError(f"kernel {i + 1}: {err}") from err
    return tuple(kernels)


# ---------------------------------------------------------------------------
# report helpers

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_curve(path: Path, header: str, columns: Sequence[np.ndarray]) -> None:
    rows = zip(*columns)
    lines = [header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _set_to_dict(s: IdentifiedSet) -> dict:
    out = {"status": s.status.value, "roots": [float(r) for r in s.roots]}
    d = s.diagnostics
    if d.rank_scalar is not None:
        out["rank_scalar"] = float(d.rank_scalar)
    if d.monotonicity is not None:
        out["monotonicity"] = d.monotonicity.value
    if d.dependence is not None:
        out["finite_dependence"] = {
            "rho": d.dependence.rho,
            "variant": d.dependence.variant.value,
            "residual_norm": d.dependence.residual_norm,
        }
    return out


def _restriction_to_dict(r: ExclusionRestriction) -> dict:
    out = {"k": r.k + 1, "l": r.l + 1, "x1": r.x1 + 1, "x2": r.x2 + 1,
           "delta2u": r.delta2u}
    if r.t is not None:
        out["t"] = r.t + 1
    if r.t_prime is not None:
        out["t_prime"] = r.t_prime + 1
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_solve(scenario: Scenario, out_dir: Path) -> dict:
    """Forward-solve a (finite-horizon) primitives scenario; write values and p."""
    if scenario.mode is Mode.PRIMITIVES:
        values, data = solve_stationary(
            scenario.primitives, scenario.kernels, reference=scenario.reference
        )
        report = {
            "schema_version": SCHEMA_VERSION,
            "command": "solve",
            "mode": scenario.mode.value,
            "beta": scenario.primitives.beta,
            "values": values.v.tolist(),
            "surplus": values.surplus.tolist(),
            "p": data.p.tolist(),
        }
        _write_json(out_dir / "report.json", report)
        cols = [np.arange(1, data.J + 1, dtype=float), values.surplus]
        header = ["state", "surplus"]
        for k in range(data.K):
            cols.extend([values.v[k], data.p[k]])
            header.extend([f"v{k + 1}", f"p{k + 1}"])
        _write_curve(out_dir / "solution.csv", ",".join(header), cols)
        return report
    if scenario.mode is Mode.FINITE_HORIZON_PRIMITIVES:
        solved = solve_finite_horizon(scenario.fh_primitives, reference=scenario.reference)
        report = {
            "schema_version": SCHEMA_VERSION,
            "command": "solve",
            "mode": scenario.mode.value,
            "beta": scenario.fh_primitives.beta,
            "T": scenario.fh_primitives.T,
            "values": [vals.v.tolist() for vals, _ in solved],
            "surplus": [vals.surplus.tolist() for vals, _ in solved],
            "p": [data.p.tolist() for _, data in solved],
        }
        _write_json(out_dir / "report.json", report)
        return report
    raise ScenarioError(f"solve needs a primitives scenario, got mode '{scenario.mode.value}'")


def _identify_stationary(scenario: Scenario, out_dir: Path, data: ChoiceData) -> dict:
    opts = scenario.options
    if not scenario.restrictions:
        raise ScenarioError("identify needs at least one restriction")
    betas = np.linspace(0.0, 1.0 - opts.epsilon, opts.grid_n)
    blocks = []
    prim_sets = []
    for i, r in enumerate(scenario.restrictions):
        iset_p = identified_set(
            data, r, scenario.ref_u, Variant.PRIMITIVE_UTILITY,
            epsilon=opts.epsilon, grid_n=opts.grid_n, rho_max=opts.rho_max,
        )
        iset_c = identified_set(
            data, r, scenario.ref_u, Variant.CURRENT_VALUE,
            epsilon=opts.epsilon, grid_n=opts.grid_n, rho_max=opts.rho_max,
        )
        prim_sets.append(iset_p)
        lhs = moment_lhs(data, r, scenario.ref_u)
        rank = rank_scalar(data, r, scenario.ref_u)
        rhs_p = rhs_primitive_curve(data, r, scenario.ref_u, betas)
        curve_name = f"curve_restriction{i + 1}.csv"
        _write_curve(
            out_dir / curve_name,
            CURVE_HEADER,
            [betas, np.full_like(betas, lhs), rhs_p, betas * rank],
        )
        blocks.append({
            "restriction": _restriction_to_dict(r),
            "lhs": lhs,
            "rank_scalar": rank,
            "monotonicity": iset_p.diagnostics.monotonicity.value,
            "finite_dependence": _set_to_dict(iset_p).get("finite_dependence"),
            "primitive_utility": {"status": iset_p.status.value,
                                  "roots": [float(x) for x in iset_p.roots]},
            "current_value": {"status": iset_c.status.value,
                              "roots": [float(x) for x in iset_c.roots]},
            "curve_csv": curve_name,
        })
    intersection = intersect_sets(prim_sets, match_tol=opts.match_tol)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "identify",
        "epsilon": opts.epsilon,
        "grid_n": opts.grid_n,
        "restrictions": blocks,
        "intersection": {"status": intersection.status.value,
                         "roots": [float(x) for x in intersection.roots]},
    }
    _write_json(out_dir / "report.json", report)
    return report


def _identify_finite_horizon(scenario: Scenario, out_dir: Path) -> dict:
    opts = scenario.options
    if not scenario.restrictions:
        raise ScenarioError("identify needs at least one restriction")
    domain = (0.0, 1.0 - opts.epsilon)
    betas = np.linspace(domain[0], domain[1], opts.grid_n)
    blocks = []
    sets = []
    for i, r in enumerate(scenario.restrictions):
        lhs, coeffs = finite_horizon_moment(scenario.fh_data, r)
        iset = identified_set_polynomial(coeffs, lhs, domain=domain, grid_n=opts.grid_n)
        sets.append(iset)
        poly = np.concatenate(([0.0], coeffs))
        rhs_vals = np.polynomial.polynomial.polyval(betas, poly)
        curve_name = f"curve_restriction{i + 1}.csv"
        _write_curve(
            out_dir / curve_name,
            CURVE_HEADER,
            [betas, np.full_like(betas, lhs), rhs_vals, betas * coeffs[0]],
        )
        blocks.append({
            "restriction": _restriction_to_dict(r),
            "lhs": lhs,
            "rank_scalar": float(coeffs[0]),
            "polynomial_coefficients": coeffs.tolist(),
            "identified_set": {"status": iset.status.value,
                               "roots": [float(x) for x in iset.roots]},
            "curve_csv": curve_name,
        })
    intersection = intersect_sets(sets, match_tol=opts.match_tol)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "identify",
        "mode": "finite_horizon_data",
        "epsilon": opts.epsilon,
        "grid_n": opts.grid_n,
        "restrictions": blocks,
        "intersection": {"status": intersection.status.value,
                         "roots": [float(x) for x in intersection.roots]},
    }
    _write_json(out_dir / "report.json", report)
    return report


def cmd_identify(scenario: Scenario, out_dir: Path) -> dict:
    """Identified sets, diagnostics, and intersection for a data scenario."""
    if scenario.mode is Mode.DATA:
        return _identify_stationary(scenario, out_dir, scenario.data)
    if scenario.mode is Mode.FINITE_HORIZON_DATA:
        return _identify_finite_horizon(scenario, out_dir)
    raise ScenarioError(f"identify needs a data scenario, got mode '{scenario.mode.value}'")


def cmd_content(scenario: Scenario, out_dir: Path) -> dict:
    """Empirical-content verdict (which restriction variant rationalizes the data)."""
    if scenario.mode is not Mode.DATA:
        raise ScenarioError(f"content needs a data scenario, got mode '{scenario.mode.value}'")
    if not scenario.restrictions:
        raise ScenarioError("content needs at least one restriction")
    opts = scenario.options
    blocks = []
    for r in scenario.restrictions:
        rep = empirical_content_report(
            scenario.data, r, scenario.ref_u, epsilon=opts.epsilon, grid_n=opts.grid_n
        )
        blocks.append({
            "restriction": _restriction_to_dict(r),
            "verdict": rep.verdict.value,
            "primitive_utility": {"status": rep.primitive_set.status.value,
                                  "roots": [float(x) for x in rep.primitive_set.roots]},
            "current_value": {"status": rep.current_value_set.status.value,
                              "roots": [float(x) for x in rep.current_value_set.roots]},
        })
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "content",
        "restrictions": blocks,
    }
    _write_json(out_dir / "report.json", report)
    return report


def cmd_estimate(
    scenario: Scenario,
    out_dir: Path,
    n: int | None = None,
    alpha: float | None = None,
    n_boot: int | None = None,
    s_override: float | None = None,
    seed: int | None = None,
) -> dict:
    """Criterion curve and contour-set estimate.

    With a sample size (flag --n or option n_per_state) the scenario data are
    treated as the truth, a multinomial sample is drawn, and the critical
    value is bootstrapped unless s_override is given. Without a sample size
    the criterion is evaluated on the scenario data as-is and s_override is
    required.
    """
    if scenario.mode is not Mode.DATA:
        raise ScenarioError(f"estimate needs a data scenario, got mode '{scenario.mode.value}'")
    if not scenario.restrictions:
        raise ScenarioError("estimate needs at least one restriction")
    opts = scenario.options
    n = n if n is not None else opts.n_per_state
    alpha = alpha if alpha is not None else opts.alpha
    n_boot = n_boot if n_boot is not None else opts.n_boot
    s_override = s_override if s_override is not None else opts.s_override
    seed = seed if seed is not None else opts.seed

    config = CriterionConfig(
        a_n=opts.a_n, alpha=alpha, grid_n=min(opts.grid_n, 10001), epsilon=opts.epsilon
    )
    design = None
    working = scenario.data
    if n is not None:
        design = SampleDesign(n_per_state=n, n_transitions=opts.n_transitions, seed=seed)
        working = simulate_sample(scenario.data, design)
        if config.a_n is None:
            config = replace(config, a_n=float(n * working.J))
    elif config.a_n is None:
        config = replace(config, a_n=1.0)

    if s_override is not None:
        s_used = float(s_override)
        s_source = "override"
    elif design is not None:
        s_used = critical_value(
            working, scenario.restrictions, scenario.ref_u, config, design,
            n_boot=n_boot, seed=seed,
        )
        s_source = "bootstrap"
    else:
        raise ScenarioError("estimate on population data needs --s-override")

    cs = contour_set(working, scenario.restrictions, scenario.ref_u, config, s_used)
    _write_curve(
        out_dir / "criterion.csv",
        "beta,criterion",
        [cs.criterion_curve[:, 0], cs.criterion_curve[:, 1]],
    )
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "estimate",
        "a_n": config.a_n,
        "alpha": alpha,
        "n_per_state": n,
        "s_used": s_used,
        "s_source": s_source,
        "intervals": [[float(lo), float(hi)] for lo, hi in cs.intervals],
        "criterion_csv": "criterion.csv",
    }
    _write_json(out_dir / "report.json", report)
    return report


# ---------------------------------------------------------------------------
# reproduce

def bundled_scenario_path(figure_id: int):
    return resources.files("ddc_ident").joinpath(f"scenarios/figure{figure_id}.json")


def load_bundled_scenario(figure_id: int) -> Scenario:
    if figure_id not in range(1, 8):
        raise ScenarioError(f"unknown figure id {figure_id}; expected 1..7")
    with resources.as_file(bundled_scenario_path(figure_id)) as path:
        return load_scenario(path)


def _check(name: str, expected, computed, tol: float | None = None) -> dict:
    if tol is None:
        ok = expected == computed
    else:
        ok = abs(float(expected) - float(computed)) <= tol
    return {"name": name, "expected": expected, "computed": computed,
            "tol": tol, "pass": bool(ok)}


def _check_roots(name: str, expected: list[float], s: IdentifiedSet, tol: float) -> list[dict]:
    rows = [_check(f"{name}: root count", len(expected), len(s.roots))]
    for want, got in zip(expected, s.roots):
        rows.append(_check(f"{name}: root {want:g}", want, got, tol))
    return rows


REPRODUCE_TOL = 5e-3
CONTOUR_TOL = 0.02


def cmd_reproduce(figure_id: int, out_dir: Path) -> dict:
    """Run the bundled scenario for one figure and check its reference values."""
    scenario = load_bundled_scenario(figure_id)
    opts = scenario.options
    checks: list[dict] = []

    if figure_id == 3:
        solve_report = cmd_solve(scenario, out_dir)
        _, data = solve_stationary(scenario.primitives, scenario.kernels)
        for j, want in enumerate([0.44, 0.56, 0.71]):
            checks.append(_check(f"p1(x{j + 1})", want, data.p[0][j], REPRODUCE_TOL))
        ident_scenario = replace_data(scenario, data)
        report = _identify_stationary(ident_scenario, out_dir, data)
        r = scenario.restrictions[0]
        checks.append(_check("lhs", 0.4918, moment_lhs(data, r, scenario.ref_u), REPRODUCE_TOL))
        checks.append(_check("rank scalar", 0.2465, rank_scalar(data, r, scenario.ref_u), REPRODUCE_TOL))
        prim = identified_set(data, r, scenario.ref_u, epsilon=opts.epsilon, grid_n=opts.grid_n)
        curr = identified_set(data, r, scenario.ref_u, Variant.CURRENT_VALUE,
                              epsilon=opts.epsilon, grid_n=opts.grid_n)
        checks.extend(_check_roots("primitive set", [0.80], prim, REPRODUCE_TOL))
        checks.append(_check("current-value set status", SetStatus.EMPTY.value, curr.status.value))
    elif figure_id in (1, 2, 4):
        report = _identify_stationary(scenario, out_dir, scenario.data)
        data = scenario.data
        r = scenario.restrictions[0]
        lhs = moment_lhs(data, r, scenario.ref_u)
        rank = rank_scalar(data, r, scenario.ref_u)
        prim = identified_set(data, r, scenario.ref_u, epsilon=opts.epsilon, grid_n=opts.grid_n)
        curr = identified_set(data, r, scenario.ref_u, Variant.CURRENT_VALUE,
                              epsilon=opts.epsilon, grid_n=opts.grid_n)
        if figure_id == 1:
            m = excess_surplus(data).m
            for j, want in enumerate([0.69, 0.67, 0.11]):
                checks.append(_check(f"m(x{j + 1})", want, m[j], REPRODUCE_TOL))
            checks.append(_check("lhs", 0.0400, lhs, REPRODUCE_TOL))
            checks.append(_check("rank scalar", 0.1291, rank, REPRODUCE_TOL))
            checks.extend(_check_roots("current-value set", [0.31], curr, REPRODUCE_TOL))
            checks.extend(_check_roots("primitive set", [0.34, 0.95], prim, REPRODUCE_TOL))
        elif figure_id == 2:
            checks.append(_check("lhs", 0.0800, lhs, REPRODUCE_TOL))
            checks.append(_check("rank scalar", 0.0, rank, 1e-9))
            checks.extend(_check_roots("primitive set", [0.90], prim, REPRODUCE_TOL))
            checks.append(_check("current-value set status", SetStatus.EMPTY.value, curr.status.value))
            checks.append(_check("monotonicity", "increasing",
                                 prim.diagnostics.monotonicity.value))
        else:
            checks.append(_check("lhs", 0.0800, lhs, REPRODUCE_TOL))
            checks.append(_check("rank scalar", 0.1116, rank, REPRODUCE_TOL))
            checks.extend(_check_roots("current-value set", [0.72], curr, REPRODUCE_TOL))
            checks.append(_check("primitive set status", SetStatus.EMPTY.value, prim.status.value))
            rep = empirical_content_report(data, r, scenario.ref_u,
                                           epsilon=opts.epsilon, grid_n=opts.grid_n)
            checks.append(_check("content verdict", ContentVerdict.CURRENT_VALUE_ONLY.value,
                                 rep.verdict.value))
    elif figure_id in (5, 6):
        report = _identify_stationary(scenario, out_dir, scenario.data)
        data = scenario.data
        sets = []
        expected_lhs = {5: [0.0187, 0.0045], 6: [0.0068, 0.0019]}[figure_id]
        expected_roots = {5: [[0.30], [0.30, 0.65]], 6: [[0.17, 0.90], [0.07, 0.90]]}[figure_id]
        for i, r in enumerate(scenario.restrictions):
            lhs = moment_lhs(data, r, scenario.ref_u)
            checks.append(_check(f"lhs {i + 1}", expected_lhs[i], lhs, REPRODUCE_TOL))
            s = identified_set(data, r, scenario.ref_u, epsilon=opts.epsilon, grid_n=opts.grid_n)
            sets.append(s)
            checks.extend(_check_roots(f"restriction {i + 1} set", expected_roots[i], s, REPRODUCE_TOL))
        inter = intersect_sets(sets, match_tol=opts.match_tol)
        expected_inter = {5: [0.30], 6: [0.90]}[figure_id]
        checks.extend(_check_roots("intersection", expected_inter, inter, REPRODUCE_TOL))
        if figure_id == 6:
            config = CriterionConfig(a_n=1.0, epsilon=opts.epsilon)
            s_at = {
                beta: criterion(data, scenario.restrictions, scenario.ref_u, config, beta)
                for beta in (0.90, 0.17, 0.07)
            }
            checks.append(_check("criterion zero at 0.90", True, bool(s_at[0.90] < 1e-12)))
            checks.append(_check("criterion positive at 0.17", True, bool(s_at[0.17] > 1e-10)))
            checks.append(_check("criterion positive at 0.07", True, bool(s_at[0.07] > 1e-10)))
    else:
        report = cmd_estimate(scenario, out_dir)
        intervals = report["intervals"]
        checks.append(_check("interval count", 2, len(intervals)))
        expected = [[0.10, 0.28], [0.79, 0.91]]
        for i, (want, got) in enumerate(zip(expected, intervals)):
            checks.append(_check(f"interval {i + 1} lower", want[0], got[0], CONTOUR_TOL))
            checks.append(_check(f"interval {i + 1} upper", want[1], got[1], CONTOUR_TOL))
        for i, (r, want) in enumerate(zip(scenario.restrictions, [0.0066, 0.0050])):
            checks.append(_check(f"lhs {i + 1}", want,
                                 moment_lhs(scenario.data, r, scenario.ref_u), REPRODUCE_TOL))

    all_pass = all(c["pass"] for c in checks)
    table = {
        "schema_version": SCHEMA_VERSION,
        "command": "reproduce",
        "figure": figure_id,
        "checks": checks,
        "all_pass": all_pass,
    }
    _write_json(out_dir / f"reproduce_figure{figure_id}.json", table)
    return table


def replace_data(scenario: Scenario, data: ChoiceData) -> Scenario:
    """Clone a scenario with solved data attached (primitives -> data pipelines)."""
    return Scenario(
        mode=Mode.DATA,
        restrictions=scenario.restrictions,
        ref_u=scenario.ref_u,
        options=scenario.options,
        name=scenario.name,
        data=data,
    )


def _print_reproduce_table(table: dict) -> None:
    width = max(len(c["name"]) for c in table["checks"]) + 2
    for c in table["checks"]:
        status = "PASS" if c["pass"] else "FAIL"
        expected, computed = c["expected"], c["computed"]
        if isinstance(computed, float):
            computed = f"{computed:.6g}"
        print(f"{status}  {c['name']:<{width}} expected={expected} computed={computed}")
    print(("all checks passed" if table["all_pass"] else "SOME CHECKS FAILED")
          + f" (figure {table['figure']})")


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddc-ident",
        description="Discount-factor identification in dynamic discrete choice models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "identify", "content", "estimate", "reproduce"):
        p = sub.add_parser(name)
        p.add_argument("--scenario", type=Path, help="scenario JSON file")
        p.add_argument("--out", type=Path, default=Path("ddc_ident_out"),
                       help="output directory (default ddc_ident_out)")
        p.add_argument("--epsilon", type=float, help="domain truncation near 1")
        p.add_argument("--grid", type=int, help="grid size for scans")
        p.add_argument("--seed", type=int, help="RNG seed override")
        if name == "estimate":
            p.add_argument("--n", type=int, help="observations per state to sample")
            p.add_argument("--alpha", type=float, help="confidence level")
            p.add_argument("--boot", type=int, help="bootstrap replicates")
            p.add_argument("--s-override", type=float, dest="s_override",
                           help="fixed critical level instead of bootstrap")
        if name == "reproduce":
            p.add_argument("--figure", type=int, required=True, help="figure id in 1..7")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        out_dir: Path = args.out
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "reproduce":
            table = cmd_reproduce(args.figure, out_dir)
            _print_reproduce_table(table)
            return 0 if table["all_pass"] else 1
        if args.scenario is None:
            print("error: --scenario is required", file=sys.stderr)
            return 2
        scenario = load_scenario(args.scenario)
        if args.epsilon is not None:
            scenario.options.epsilon = args.epsilon
        if args.grid is not None:
            scenario.options.grid_n = args.grid
        if args.seed is not None:
            scenario.options.seed = args.seed
        if args.command == "solve":
            report = cmd_solve(scenario, out_dir)
        elif args.command == "identify":
            report = cmd_identify(scenario, out_dir)
        elif args.command == "content":
            report = cmd_content(scenario, out_dir)
        else:
            report = cmd_estimate(
                scenario, out_dir,
                n=getattr(args, "n", None),
                alpha=getattr(args, "alpha", None),
                n_boot=getattr(args, "boot", None),
                s_override=getattr(args, "s_override", None),
                seed=args.seed,
            )
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ValidationError as err:
        print(f"error: invalid input: {err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
