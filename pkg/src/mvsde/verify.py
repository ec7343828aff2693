"""Monte Carlo verification of the deviation asymptotics.

For a rare event E and speed h(eps) (h = eps in the small-noise regime,
h = eps / a(eps)^2 in the moderate regime), the statistic y = -h ln p_hat
approaches the rate of E as eps -> 0, with a prefactor expansion
y = I + c1 h + c2 h ln h + o(h). The extrapolated intercept is read off by
weighted least squares, choosing the basis by what the data can support:

  rare_prefactor   all p_hat <= 0.25, every point >= 50 hits, >= 3 points:
                   fit {1, h, h ln h}.
  sparse_corrected some point has < 50 hits: subtract the universal
                   1/2 h ln(1/h) prefactor term, then fit {1, h}.
  plain_linear     events not rare at the largest eps (p_hat > 0.25):
                   fit {1, h}.

Zero-hit points cannot produce a statistic; they are dropped from the fit
and flagged as censored. Weights come from the binomial delta rule
se(y) = h sqrt((1 - p_hat) / (n p_hat)).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Control, ModelSpec, TimeGrid
from .dynamics import (
    simulate_controlled_frozen,
    simulate_controlled_selfconsistent,
    simulate_mdp_controlled,
    simulate_mvsde,
)
from .errors import InvalidArgumentError
from .measure import EmpiricalMeasure, wasserstein2
from .rate import EventSpec
from .rng import derive_seed
from .skeleton import solve_ldp_skeleton, solve_limit_ode

__all__ = [
    "SlopeRow",
    "SlopeReport",
    "ConvergenceReport",
    "DemoReport",
    "fit_rate_extrapolation",
    "check_ldp",
    "check_mdp",
    "check_limit_convergence",
    "check_controlled_convergence",
    "demo_frozen_vs_selfconsistent",
]


@dataclass
class SlopeRow:
    eps: float
    speed: float
    n_samples: int
    hits: int
    p_hat: float
    stat: float
    stderr: float
    censored: bool
    a: float | None = None

    def to_dict(self) -> dict:
        out = {
            "eps": self.eps,
            "speed": self.speed,
            "n_samples": self.n_samples,
            "hits": self.hits,
            "p_hat": self.p_hat,
            "stat": self.stat,
            "stderr": self.stderr,
            "censored": self.censored,
        }
        if self.a is not None:
            out["a"] = self.a
        return out


@dataclass
class SlopeReport:
    kind: str
    event: str
    rows: list
    fit_method: str
    intercept: float
    target: float | None
    tol: float | None
    passed: bool | None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "event": self.event,
            "rows": [r.to_dict() for r in self.rows],
            "fit_method": self.fit_method,
            "intercept": self.intercept,
            "target": self.target,
            "tol": self.tol,
            "passed": self.passed,
            "details": self.details,
        }


def _wls(design: np.ndarray, y: np.ndarray, se: np.ndarray):
    w = 1.0 / np.maximum(se, 1e-12)
    coef, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
    return coef


def fit_rate_extrapolation(rows: list) -> tuple[str, float, dict]:
    """Extrapolate the rate from slope rows; returns (method, intercept, details)."""
    usable = [r for r in rows if not r.censored]
    censored = [r.eps for r in rows if r.censored]
    details: dict = {"censored_eps": censored, "n_used": len(usable)}
    if len(usable) < 2:
        return "insufficient", float("nan"), details
    h = np.array([r.speed for r in usable])
    y = np.array([r.stat for r in usable])
    se = np.array([r.stderr for r in usable])
    p = np.array([r.p_hat for r in usable])
    hits = np.array([r.hits for r in usable])

    if np.any(p > 0.25):
        method = "plain_linear"
        design = np.stack([np.ones_like(h), h], axis=1)
        coef = _wls(design, y, se)
    elif np.all(hits >= 50) and len(usable) >= 3:
        method = "rare_prefactor"
        design = np.stack([np.ones_like(h), h, h * np.log(h)], axis=1)
        coef = _wls(design, y, se)
    else:
        method = "sparse_corrected"
        y_adj = y - 0.5 * h * np.log(1.0 / h)
        design = np.stack([np.ones_like(h), h], axis=1)
        coef = _wls(design, y_adj, se)
    details["coefficients"] = coef.tolist()
    return method, float(coef[0]), details


def _run_parallel(fn, n_items: int, jobs: int) -> list:
    """Ordered map over run indices; seeds are derived per index, so the
    results are identical for every worker count."""
    if jobs <= 1:
        return [fn(i) for i in range(n_items)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(n_items)))


def _slope_rows(eps_list, speeds, scale_a, results, event, n_particles):
    rows = []
    for idx, eps in enumerate(eps_list):
        terminal, sup_sq = results[idx]
        ind = event.indicator(terminal, sup_sq)
        hits = int(np.count_nonzero(ind))
        p_hat = hits / n_particles
        h = speeds[idx]
        if hits > 0:
            stat = -h * np.log(p_hat)
            stderr = h * float(np.sqrt((1.0 - p_hat) / (n_particles * p_hat)))
            censored = False
        else:
            stat, stderr, censored = float("nan"), float("nan"), True
        rows.append(
            SlopeRow(
                eps=float(eps),
                speed=float(h),
                n_samples=n_particles,
                hits=hits,
                p_hat=p_hat,
                stat=stat,
                stderr=stderr,
                censored=censored,
                a=None if scale_a is None else float(scale_a[idx]),
            )
        )
    return rows


def _boundary_gaps(event: EventSpec, terminals: list) -> list:
    """Hit-count gap between the closed and open threshold conventions."""
    slack = event.boundary_atol * (1.0 + abs(event.level))
    gaps = []
    for terminal in terminals:
        proj = terminal @ event.normal
        gaps.append(int(np.sum(proj >= event.level - slack) - np.sum(proj >= event.level + slack)))
    return gaps


def _validate_eps_list(eps_list) -> list:
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2:
        raise InvalidArgumentError("verification needs at least two eps values")
    if any(e <= 0 for e in eps_list):
        raise InvalidArgumentError("eps values must be positive")
    return sorted(eps_list, reverse=True)


def check_ldp(
    spec: ModelSpec,
    grid: TimeGrid,
    eps_list,
    event: EventSpec,
    n_particles: int,
    seed: int,
    target: float | None = None,
    tol: float | None = None,
    jobs: int = 1,
) -> SlopeReport:
    """Estimate the small-noise rate of an event by slope extrapolation."""
    eps_list = _validate_eps_list(eps_list)
    reference = event.ref_path if event.kind == "pin_path" else None

    def run(idx):
        ens = simulate_mvsde(
            spec,
            grid,
            eps_list[idx],
            n_particles,
            derive_seed(seed, "check_ldp", idx),
            record="summary",
            reference=reference,
        )
        return ens.terminal, ens.sup_sq

    results = _run_parallel(run, len(eps_list), jobs)
    rows = _slope_rows(eps_list, eps_list, None, results, event, n_particles)
    method, intercept, details = fit_rate_extrapolation(rows)
    if event.kind == "halfspace":
        details["boundary_gap_per_eps"] = _boundary_gaps(
            event, [t for t, _ in results]
        )
    passed = None
    if target is not None:
        tol = 0.05 if tol is None else tol
        passed = bool(np.isfinite(intercept) and abs(intercept - target) <= tol)
    return SlopeReport(
        kind="ldp",
        event=event.describe(),
        rows=rows,
        fit_method=method,
        intercept=intercept,
        target=target,
        tol=tol,
        passed=passed,
        details=details,
    )


def check_mdp(
    spec: ModelSpec,
    grid: TimeGrid,
    eps_list,
    event: EventSpec,
    n_particles: int,
    seed: int,
    a_exp: float = 0.25,
    target: float | None = None,
    tol: float | None = None,
    psi_floor: float = 1e-3,
    jobs: int = 1,
) -> SlopeReport:
    """Estimate the moderate rate of a fluctuation event, a(eps) = eps^a_exp.

    The event is read in fluctuation coordinates M = (X - xbar) / a; samples
    come from the fluctuation system under the null control.
    """
    eps_list = _validate_eps_list(eps_list)
    if not (0.0 < a_exp < 0.5):
        raise InvalidArgumentError(
            "a_exp must lie in (0, 1/2): a -> 0 with eps/a^2 -> 0"
        )
    scale_a = [e**a_exp for e in eps_list]
    speeds = [e / a**2 for e, a in zip(eps_list, scale_a)]

    def run(idx):
        ens = simulate_mdp_controlled(
            spec,
            grid,
            eps_list[idx],
            scale_a[idx],
            None,
            n_particles,
            derive_seed(seed, "check_mdp", idx),
            psi_floor=psi_floor,
            record="summary",
            reference=event.ref_path if event.kind == "pin_path" else None,
        )
        return ens.terminal, ens.sup_sq

    results = _run_parallel(run, len(eps_list), jobs)
    rows = _slope_rows(eps_list, speeds, scale_a, results, event, n_particles)
    method, intercept, details = fit_rate_extrapolation(rows)
    if event.kind == "halfspace":
        details["boundary_gap_per_eps"] = _boundary_gaps(
            event, [t for t, _ in results]
        )
    passed = None
    if target is not None:
        tol = 0.05 if tol is None else tol
        passed = bool(np.isfinite(intercept) and abs(intercept - target) <= tol)
    return SlopeReport(
        kind="mdp",
        event=event.describe(),
        rows=rows,
        fit_method=method,
        intercept=intercept,
        target=target,
        tol=tol,
        passed=passed,
        details=details,
    )


@dataclass
class ConvergenceReport:
    kind: str
    eps: list
    values: list
    slope: float
    log_intercept: float
    expected_slope: float
    tol: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "eps": self.eps,
            "values": self.values,
            "slope": self.slope,
            "log_intercept": self.log_intercept,
            "expected_slope": self.expected_slope,
            "tol": self.tol,
            "passed": self.passed,
            "details": self.details,
        }


def _loglog_slope(eps, values):
    x = np.log(np.asarray(eps))
    y = np.log(np.asarray(values))
    coef = np.polyfit(x, y, 1)
    return float(coef[0]), float(coef[1])


def check_limit_convergence(
    spec: ModelSpec,
    grid: TimeGrid,
    eps_list,
    n_particles: int,
    seed: int,
    tol: float = 0.2,
    jobs: int = 1,
) -> ConvergenceReport:
    """Check E[sup_t |X - xbar|^2] = O(eps) along the given eps ladder."""
    eps_list = _validate_eps_list(eps_list)
    limit = solve_limit_ode(spec, grid)

    def run(idx):
        ens = simulate_mvsde(
            spec,
            grid,
            eps_list[idx],
            n_particles,
            derive_seed(seed, "check_limit", idx),
            record="summary",
            reference=limit,
        )
        cloud = EmpiricalMeasure(ens.terminal)
        point = EmpiricalMeasure(np.tile(limit.terminal, (n_particles, 1)))
        return float(ens.sup_sq.mean()), wasserstein2(cloud, point).value

    results = _run_parallel(run, len(eps_list), jobs)
    values = [v for v, _ in results]
    w2_terminal = [w for _, w in results]
    slope, intercept = _loglog_slope(eps_list, values)
    return ConvergenceReport(
        kind="limit_convergence",
        eps=list(eps_list),
        values=values,
        slope=slope,
        log_intercept=intercept,
        expected_slope=1.0,
        tol=tol,
        passed=bool(abs(slope - 1.0) <= tol),
        details={"terminal_w2_to_limit": w2_terminal},
    )


def check_controlled_convergence(
    spec: ModelSpec,
    grid: TimeGrid,
    eps_list,
    control: Control,
    n_particles: int,
    seed: int,
    tol: float = 0.35,
) -> ConvergenceReport:
    """Check that the frozen-law controlled system tracks its skeleton:
    E[sup_t |Xbar - skeleton|^2] -> 0 at a rate close to O(eps)."""
    eps_list = _validate_eps_list(eps_list)
    skeleton = solve_ldp_skeleton(spec, grid, control).path
    values = []
    for idx, eps in enumerate(eps_list):
        run_seed = derive_seed(seed, "check_controlled", idx)
        ref = simulate_mvsde(spec, grid, eps, n_particles, run_seed, record="full")
        ens = simulate_controlled_frozen(
            spec,
            grid,
            eps,
            control,
            ref,
            n_particles,
            run_seed,
            record="summary",
            reference=skeleton,
        )
        values.append(float(ens.sup_sq.mean()))
    slope, intercept = _loglog_slope(eps_list, values)
    return ConvergenceReport(
        kind="controlled_convergence",
        eps=list(eps_list),
        values=values,
        slope=slope,
        log_intercept=intercept,
        expected_slope=1.0,
        tol=tol,
        passed=bool(abs(slope - 1.0) <= tol),
        details={"control_event": "frozen-law tracking"},
    )


@dataclass
class DemoReport:
    eps: float
    n_particles: int
    n_steps: int
    seed: int
    frozen_center: float
    selfconsistent_center: float
    frozen_target: float
    selfconsistent_target: float
    skeleton_terminal: float
    tol: float
    min_gap: float
    gap: float
    frozen_ok: bool
    selfconsistent_separates: bool
    gap_ok: bool
    passed: bool
    narrative: list

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "n_particles": self.n_particles,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "frozen_center": self.frozen_center,
            "selfconsistent_center": self.selfconsistent_center,
            "frozen_target": self.frozen_target,
            "selfconsistent_target": self.selfconsistent_target,
            "skeleton_terminal": self.skeleton_terminal,
            "tol": self.tol,
            "min_gap": self.min_gap,
            "gap": self.gap,
            "frozen_ok": self.frozen_ok,
            "selfconsistent_separates": self.selfconsistent_separates,
            "gap_ok": self.gap_ok,
            "passed": self.passed,
            "narrative": self.narrative,
        }


def demo_frozen_vs_selfconsistent(
    eps: float = 1e-4,
    n_particles: int = 10_000,
    n_steps: int = 800,
    seed: int = 7,
    tol: float = 5e-3,
    min_gap: float = 0.5,
) -> DemoReport:
    """Show, on the mean-field pull model, why the controlled system must
    freeze the law of the UNCONTROLLED solution.

    With the unit Brownian control, the skeleton (law frozen at the limit
    flow exp(t)) ends at e + 1. Freezing the law of the uncontrolled cloud
    reproduces that center. Letting the controlled cloud feed its own law
    back into the drift compounds the control through the interaction and
    lands at 2e - 1 instead: a different deterministic object, not the one
    the deviation bounds are about. Both lanes share one seed, so the gap is
    pure law-coupling, not noise.
    """
    from .models import get_model
    from .core import make_time_grid

    spec = get_model("example11")
    grid = make_time_grid(1.0, n_steps)
    control = Control(
        grid,
        np.ones((n_steps, 1)),
        np.ones((n_steps, 0)),
        psi_bounds=(1.0, 1.0),
    )
    reference = simulate_mvsde(
        spec, grid, eps, n_particles, seed, record="full"
    )
    frozen = simulate_controlled_frozen(
        spec, grid, eps, control, reference, n_particles, seed, record="summary"
    )
    selfc = simulate_controlled_selfconsistent(
        spec, grid, eps, control, n_particles, seed, record="summary"
    )
    skeleton = solve_ldp_skeleton(spec, grid, control).path
    frozen_center = float(frozen.terminal.mean())
    self_center = float(selfc.terminal.mean())
    frozen_target = float(np.e + 1.0)
    self_target = float(2.0 * np.e - 1.0)
    gap = abs(self_center - frozen_center)
    frozen_ok = abs(frozen_center - frozen_target) <= tol
    self_sep = abs(self_center - self_target) <= tol
    gap_ok = gap >= min_gap
    passed = frozen_ok and self_sep and gap_ok
    narrative = [
        f"uncontrolled mean ends near e = {np.e:.6f} "
        f"(measured {float(reference.terminal.mean()):.6f})",
        f"frozen-law controlled center {frozen_center:.6f} matches the "
        f"skeleton terminal {float(skeleton.terminal[0]):.6f} "
        f"(theory e + 1 = {frozen_target:.6f})",
        f"self-consistent controlled center {self_center:.6f} matches "
        f"2e - 1 = {self_target:.6f}: the control leaks into the law and "
        "compounds through the interaction",
        "the deviation principles quantify the frozen-law object; the "
        f"self-consistent lane sits {gap:.3f} away from it and is the wrong "
        "equation for rate evaluation",
    ]
    return DemoReport(
        eps=float(eps),
        n_particles=n_particles,
        n_steps=n_steps,
        seed=int(seed),
        frozen_center=frozen_center,
        selfconsistent_center=self_center,
        frozen_target=frozen_target,
        selfconsistent_target=self_target,
        skeleton_terminal=float(skeleton.terminal[0]),
        tol=tol,
        min_gap=min_gap,
        gap=gap,
        frozen_ok=frozen_ok,
        selfconsistent_separates=self_sep,
        gap_ok=gap_ok,
        passed=passed,
        narrative=narrative,
    )
