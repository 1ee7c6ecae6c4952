"""Scenario files: parsing, canonical serialization and execution."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import MissingResult, NonFiniteState, ParseError, SolveError, TSPMPError, UnsupportedScenario
from .integrate import write_csv
from .pmp import Tolerances
from .problem import (FIXED_INITIAL, ControlBox, ControlProblem, SampledControl, TerminalSpec, control_value,
                      make_dynamics)
from .solver import DirectOptions, SolveResult, backward_sweep_consumption, direct_solve, sweep_closed_form
from .timescale import TimeScale

STEP_ENV = "TSPMP_STEP"
SOLVERS = ("sweep", "direct", "both")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class Scenario:
    name: str
    window: tuple[float, float]
    state_scale: dict
    control_scale: dict
    template: dict
    omega: dict
    terminal: dict
    solver: str = "sweep"
    h: float | None = None
    tolerances: dict = field(default_factory=dict)
    init: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)

    # -- parsing -----------------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            sc = cls(
                name=str(d["name"]),
                window=(float(d["window"][0]), float(d["window"][1])),
                state_scale=dict(d["state_scale"]),
                control_scale=dict(d["control_scale"]),
                template={"id": d["template"]["id"], "params": dict(d["template"].get("params", {}))},
                omega={"lo": [float(v) for v in d["omega"]["lo"]], "hi": [float(v) for v in d["omega"]["hi"]]},
                terminal=dict(d["terminal"]),
                solver=d.get("solver", "sweep"),
                h=None if d.get("h") is None else float(d["h"]),
                tolerances=dict(d.get("tolerances", {})),
                init=dict(d.get("init", {})),
                expected=copy.deepcopy(d.get("expected", {})),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ParseError(f"malformed scenario: {exc!r}") from exc
        if sc.solver not in SOLVERS:
            raise ParseError(f"solver must be one of {SOLVERS}, got {sc.solver!r}")
        sc.problem()  # validates scales, dimensions and terminal data
        return sc

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Scenario":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        except OSError as exc:
            raise ParseError(f"cannot read {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "window": list(self.window),
            "state_scale": self.state_scale,
            "control_scale": self.control_scale,
            "template": self.template,
            "omega": self.omega,
            "terminal": self.terminal,
            "solver": self.solver,
            "h": self.h,
            "tolerances": self.tolerances,
            "init": self.init,
            "expected": self.expected,
        }
        return copy.deepcopy(d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # -- model ---------------------------------------------------------------
    def problem(self) -> ControlProblem:
        try:
            ts = TimeScale.from_spec(self.state_scale, self.window)
            ts1 = TimeScale.from_spec(self.control_scale, self.window)
            dyn = make_dynamics(self.template["id"], self.template.get("params"))
            box = ControlBox(self.omega["lo"], self.omega["hi"])
            t = self.terminal
            term = TerminalSpec(t.get("kind", FIXED_INITIAL), t.get("q_a"), t.get("q_b"),
                                bool(t.get("free_final_time", False)))
            return ControlProblem(ts, ts1, dyn, box, term)
        except ParseError:
            raise
        except (TSPMPError, KeyError, TypeError) as exc:
            raise ParseError(f"scenario {self.name!r}: {exc}") from exc

    def step(self, p: ControlProblem) -> float:
        env = os.environ.get(STEP_ENV)
        if env:
            try:
                h = float(env)
            except ValueError:
                raise ParseError(f"{STEP_ENV}={env!r} is not a number") from None
            return h
        return self.h if self.h is not None else p.default_step()

    def initial_control(self, p: ControlProblem) -> SampledControl:
        cell = self.init.get("cell", 0.5)
        ctrl = SampledControl.constant(p, self.init.get("value", 0.5 * (p.omega.lo + p.omega.hi)), cell=cell)
        seed = self.init.get("seed")
        if seed is not None:
            rng = np.random.default_rng(seed)
            v = ctrl.params()
            v = p.omega.lo + (p.omega.hi - p.omega.lo) * rng.random(v.shape)
            ctrl = ctrl.with_params(v)
        return ctrl


# ---------------------------------------------------------------------------
# execution

def solve(sc: Scenario, method: str) -> SolveResult:
    p = sc.problem()
    h = sc.step(p)
    tol = Tolerances.from_dict(sc.tolerances)
    try:
        if method == "sweep":
            return backward_sweep_consumption(p, h, tol)
        return direct_solve(p, sc.initial_control(p), h, DirectOptions(), tol)
    except (UnsupportedScenario, NonFiniteState) as exc:
        raise SolveError(f"{sc.name}: {exc}") from exc


def control_rows(p: ControlProblem, ctrl: SampledControl) -> list[tuple[float, str, np.ndarray]]:
    """``(t, kind, u)`` for every scattered time and dense-table node, sorted by time."""
    rows = [(float(r), "RS", ctrl.scattered_values[i]) for i, r in enumerate(ctrl.scattered_times)]
    for tb in ctrl.dense:
        rows += [(float(t), "RD", tb.values[j]) for j, t in enumerate(tb.nodes)]
    return sorted(rows, key=lambda r: r[0])


def check_expectations(sc: Scenario, res: SolveResult) -> list[str]:
    """Differences between the result and the scenario's expected block."""
    exp = sc.expected
    diffs = []
    if "C" in exp:
        ok, msg = _within(res.consumption, exp["C"])
        if not ok:
            diffs.append(f"C: {msg}")
    for item in exp.get("controls", []):
        t = float(item["t"])
        try:
            u = float(_control_at(res, t))
        except TSPMPError as exc:
            diffs.append(f"u({t}): {exc}")
            continue
        ok, msg = _within(u, item)
        if not ok:
            diffs.append(f"u({t}): {msg}")
    for item in exp.get("adjoint", []):
        t = float(item["t"])
        ok, msg = _within(float(res.adjoint.at(t)[0]), item)
        if not ok:
            diffs.append(f"p({t}): {msg}")
    return diffs


def _control_at(res: SolveResult, t: float) -> np.ndarray:
    return control_value(res.trajectory.problem, res.control, t)[0]


def _within(actual: float, spec: dict) -> tuple[bool, str]:
    value = float(spec["value"])
    if "rel" in spec:
        tol = float(spec["rel"]) * abs(value)
    else:
        tol = float(spec.get("abs", 0.0))
    ok = abs(actual - value) <= tol
    return ok, f"expected {_fmt(value)} ± {_fmt(tol)}, got {_fmt(actual)} (diff {_fmt(actual - value)})"


def write_outputs(out_dir: Path, sc: Scenario, res: SolveResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    p = res.trajectory.problem
    with open(out_dir / "controls.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "class", *[f"u{i + 1}" if p.m > 1 else "u" for i in range(p.m)]])
        for t, kind, u in control_rows(p, res.control):
            w.writerow([_fmt(t), kind, *[_fmt(v) for v in u]])
    with open(out_dir / "trajectory.csv", "w", newline="") as fh:
        write_csv(fh, res.trajectory, res.adjoint)
    (out_dir / "report.txt").write_text(res.report.to_text())
    (out_dir / "report.csv").write_text(res.report.to_csv())
    result = {
        "name": sc.name,
        "solver": res.method,
        "C": res.consumption,
        "cost": res.cost,
        "controls": [{"t": t, "class": k, "u": [float(v) for v in u]} for t, k, u in control_rows(p, res.control)],
        "adjoint_checkpoints": [{"t": t, "p": v} for t, v in res.checkpoints.items()],
        "report_pass": res.report.passed,
        "max_residual": res.report.max_ratio,
        "diagnostics": res.diagnostics,
    }
    (out_dir / "result.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")


SUMMARY_HEADER = "name,solver,C,max_residual,pass"


def summary_line(sc: Scenario, res: SolveResult, ok: bool) -> str:
    return f"{sc.name},{res.method},{_fmt(res.consumption)},{_fmt(res.report.max_ratio)},{str(ok).lower()}"


def run_scenario(path: str | os.PathLike, out_root: str | os.PathLike = "results") -> tuple[int, list[str]]:
    """Solve a scenario file and write its artifacts under ``out_root/<name>/``.

    Returns the exit code and the lines printed (summary and diffs).
    Exit codes: 0 success, 1 failed certification or expectation,
    2 parse error, 3 solver error.
    """
    lines: list[str] = []
    try:
        sc = Scenario.load(path)
    except ParseError as exc:
        return 2, [f"parse error: {exc}"]
    methods = ["sweep", "direct"] if sc.solver == "both" else [sc.solver]
    code = 0
    summary = [SUMMARY_HEADER]
    for m in methods:
        try:
            res = solve(sc, m)
        except ParseError as exc:
            return 2, lines + [f"parse error: {exc}"]
        except SolveError as exc:
            return 3, lines + [f"solve error: {exc}"]
        diffs = check_expectations(sc, res)
        ok = res.report.passed and not diffs
        if not res.report.passed:
            failing = [name for name, *_, good in res.report.checks if not good]
            lines.append(f"{sc.name} [{m}]: PMP conditions failed: {', '.join(failing)}")
        for d in diffs:
            lines.append(f"{sc.name} [{m}]: {d}")
        if not ok:
            code = 1
        sub = Path(out_root) / sc.name if len(methods) == 1 else Path(out_root) / sc.name / m
        write_outputs(sub, sc, res)
        summary.append(summary_line(sc, res, ok))
    (Path(out_root) / sc.name).mkdir(parents=True, exist_ok=True)
    (Path(out_root) / sc.name / "summary.csv").write_text("\n".join(summary) + "\n")
    return code, summary[1:] + lines


# ---------------------------------------------------------------------------
# λ sweep

@dataclass
class LambdaSweep:
    rows: list[tuple[float, float, float, float]]
    thresholds: dict[str, float | None]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "u_0", "u_lambda", "C"])
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _with_lambda(sc: Scenario, lam: float) -> ControlProblem:
    d = sc.to_dict()
    d["control_scale"] = {"kind": "union", "parts": [sc.control_scale, {"kind": "points", "values": [lam]}]}
    return Scenario.from_dict(d).problem()


def lambda_point(sc: Scenario, lam: float) -> tuple[float, float, float]:
    """``(u*(a), u*(λ), C)`` for control scale ``base ∪ {λ}`` from the closed-form recursion."""
    p = _with_lambda(sc, lam)
    st = sweep_closed_form(p)
    return st.scattered[p.a], st.scattered[lam], st.checkpoints[p.a] * float(p.terminal.q_a[0])


def sweep_lambda(sc: Scenario, lambdas, saturation: float = 0.01) -> LambdaSweep:
    """Optimal ``u*(a)``, ``u*(λ)`` and ``C`` over a λ grid, plus saturation thresholds.

    A control counts as saturated when it lies within ``saturation`` of a
    bound of ``[0, 1]``.  Two thresholds are located by bisection on λ:
    where ``u*(a)`` stops saturating at 1 and where ``u*(λ)`` starts
    saturating at 0.
    """
    lambdas = [float(x) for x in lambdas]
    p0 = sc.problem()
    bad = [x for x in lambdas if not (p0.a < x < p0.b)]
    if bad:
        raise ParseError(f"λ values must lie strictly inside the window: {bad}")
    try:
        rows = [(lam, *lambda_point(sc, lam)) for lam in lambdas]
    except UnsupportedScenario as exc:
        raise SolveError(f"{sc.name}: {exc}") from exc

    def locate(fn, col):
        vals = [fn(r[col]) for r in rows]
        for i in range(len(rows) - 1):
            if vals[i] * vals[i + 1] < 0:
                g = lambda lam: fn(lambda_point(sc, lam)[col - 1])
                return float(optimize.bisect(g, rows[i][0], rows[i + 1][0], xtol=1e-8))
        return None

    thr = {
        "u_0_leaves_upper": locate(lambda u: u - (1.0 - saturation), 1),
        "u_lambda_reaches_lower": locate(lambda u: u - saturation, 2),
    }
    return LambdaSweep(rows, thr)


# ---------------------------------------------------------------------------
# golden comparison

def compare_golden(results_dir: str | os.PathLike, golden_path: str | os.PathLike) -> tuple[int, list[str]]:
    """Check ``result.json`` files against a golden table.

    The golden file is ``{"scenarios": [{"name", "solver"?, "C": {...}, "controls": [...]}]}``
    with tolerance specs ``{"value", "rel"}`` or ``{"value", "abs"}``.
    """
    results_dir = Path(results_dir)
    try:
        golden = json.loads(Path(golden_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read golden file {golden_path}: {exc}") from exc
    if not results_dir.is_dir() or not any(results_dir.iterdir()):
        raise MissingResult(f"no results in {results_dir}")
    lines = ["name,field,expected,actual,tolerance,pass"]
    all_ok = True
    for entry in golden["scenarios"]:
        name = entry["name"]
        cand = [results_dir / name / "result.json"]
        if "solver" in entry:
            cand.insert(0, results_dir / name / entry["solver"] / "result.json")
        path = next((c for c in cand if c.exists()), None)
        if path is None:
            raise MissingResult(f"no result for scenario {name!r} in {results_dir}")
        res = json.loads(path.read_text())
        checks = []
        if "C" in entry:
            checks.append(("C", res["C"], entry["C"]))
        ctab = {round(c["t"], 9): c["u"][0] for c in res["controls"]}
        for item in entry.get("controls", []):
            t = round(float(item["t"]), 9)
            checks.append((f"u({item['t']})", ctab.get(t, math.nan), item))
        for fieldname, actual, spec in checks:
            ok, _ = _within(actual, spec)
            tol = float(spec["rel"]) * abs(float(spec["value"])) if "rel" in spec else float(spec.get("abs", 0.0))
            all_ok &= ok
            lines.append(f"{name},{fieldname},{_fmt(float(spec['value']))},{_fmt(actual)},{_fmt(tol)},{str(ok).lower()}")
    return (0 if all_ok else 1), lines
