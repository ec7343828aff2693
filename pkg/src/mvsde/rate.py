"""Deviation rate functions: control costs, event specs, and optimizers.

Costs. The Brownian part pays q1 = 1/2 int |phi|^2 dt; the jump part pays
q2 = int sum_j ell(psi_j) nu_j dt with ell(x) = x ln x - x + 1 (ell(0) = 1).
The moderate-regime cost is quadratic in both coordinates,
1/2 int |phi|^2 dt + 1/2 int sum_j tilt_j^2 nu_j dt.

ldp_rate minimizes q1 + q2 over piecewise-constant controls on a coarse cell
grid subject to the event constraint on the skeleton, by an augmented
Lagrangian (smooth one-sided PHR form, multiplier update
lambda <- max(0, lambda + 2 rho g), rho doubled up to a ceiling per round)
whose inner problems are solved with Barzilai-Borwein gradient steps under a
nonmonotone backtracking rule; gradients are central finite differences in
the raw parameters, with psi = exp(theta) keeping tilts positive. Several
starts are run and ranked (feasible, cost, residual, start index).

mdp_rate is exact: the moderate skeleton is linear in the control, so the
terminal response matrix A is built by propagating every basis column at
once and the least-norm value 1/2 r^T (A W^-1 A^T)^-1 r is assembled from
the cost weights W. Halfspace events pin to the boundary; a pin tolerance
shrinks the target toward the reachable set.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Control, MdpControl, ModelSpec, Path, TimeGrid
from .errors import (
    InvalidArgumentError,
    NumericError,
    UnsupportedError,
)
from .levy import IntensityMeasure
from .skeleton import (
    PicardConfig,
    _mdp_coefficients,
    _propagate_mdp,
    solve_ldp_skeleton,
    solve_limit_ode,
)

__all__ = [
    "ell",
    "q1_cost",
    "q2_cost",
    "mdp_cost",
    "EventSpec",
    "OptimizerConfig",
    "RateResult",
    "ldp_rate",
    "mdp_rate",
]


def ell(x):
    """Jump deviation integrand x ln x - x + 1, extended by ell(0) = 1."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, np.inf)
    pos = x > 0
    with np.errstate(invalid="ignore"):
        out[pos] = x[pos] * np.log(x[pos]) - x[pos] + 1.0
    out[x == 0] = 1.0
    return out if out.ndim else float(out)


def q1_cost(control: Control) -> float:
    """Brownian control energy 1/2 int |phi|^2 dt."""
    return float(0.5 * np.sum(control.phi**2 * control.grid.dt[:, None]))


def q2_cost(control: Control, intensity: IntensityMeasure | None) -> float:
    """Jump control cost int sum_j ell(psi_j) nu_j dt."""
    if control.n_mark_cells == 0:
        return 0.0
    if intensity is None or intensity.n_cells != control.n_mark_cells:
        raise InvalidArgumentError("q2_cost needs the matching intensity measure")
    vals = ell(control.psi) * intensity.masses
    return float(np.sum(vals * control.grid.dt[:, None]))


def mdp_cost(control: MdpControl, intensity: IntensityMeasure | None) -> float:
    """Moderate-regime energy 1/2 int |phi|^2 dt + 1/2 int tilt^2 dnu dt."""
    dt = control.grid.dt[:, None]
    total = 0.5 * np.sum(control.phi**2 * dt)
    if control.tilt.shape[1]:
        if intensity is None or intensity.n_cells != control.tilt.shape[1]:
            raise InvalidArgumentError("mdp_cost needs the matching intensity measure")
        total += 0.5 * np.sum(control.tilt**2 * intensity.masses * dt)
    return float(total)


@dataclass(frozen=True)
class EventSpec:
    """A deviation event, usable both on skeleton paths and on samples.

    kinds:
      pin_terminal    |x(T) - target| <= tol
      pin_path        sup_t |x(t) - ref(t)| <= tol
      halfspace       normal . x(T) >= level

    boundary_atol loosens sample indicators by atol * (1 + |level|) so that
    laws with an atom exactly on the threshold (pure jump counts) are not
    split by float roundoff.
    """

    kind: str
    target: Optional[np.ndarray] = None
    ref_path: Optional[Path] = None
    normal: Optional[np.ndarray] = None
    level: float = 0.0
    tol: float = 0.0
    boundary_atol: float = 1e-9

    @classmethod
    def pin(cls, target, tol: float = 0.0) -> "EventSpec":
        target = np.atleast_1d(np.asarray(target, dtype=float))
        if tol < 0:
            raise InvalidArgumentError("pin tolerance must be >= 0")
        return cls(kind="pin_terminal", target=target, tol=float(tol))

    @classmethod
    def pin_path(cls, ref_path: Path, tol: float) -> "EventSpec":
        if tol < 0:
            raise InvalidArgumentError("pin tolerance must be >= 0")
        return cls(kind="pin_path", ref_path=ref_path, tol=float(tol))

    @classmethod
    def halfspace(cls, normal, level: float) -> "EventSpec":
        normal = np.atleast_1d(np.asarray(normal, dtype=float))
        if not normal.any():
            raise InvalidArgumentError("halfspace normal must be nonzero")
        return cls(kind="halfspace", normal=normal, level=float(level))

    def excess(self, path: Path) -> float:
        """Signed constraint excess g; the event holds iff g <= 0."""
        if self.kind == "pin_terminal":
            return float(np.linalg.norm(path.terminal - self.target) - self.tol)
        if self.kind == "pin_path":
            if path.grid != self.ref_path.grid:
                raise InvalidArgumentError("event path lives on a different grid")
            diff = np.linalg.norm(path.values - self.ref_path.values, axis=1)
            return float(diff.max() - self.tol)
        if self.kind == "halfspace":
            return float(self.level - float(self.normal @ path.terminal))
        raise InvalidArgumentError(f"unknown event kind {self.kind!r}")

    def residual(self, path: Path) -> float:
        return max(0.0, self.excess(path))

    def indicator(self, terminal: np.ndarray, sup_sq=None) -> np.ndarray:
        """Event membership per sample; pin_path consumes running sup_sq."""
        if self.kind == "pin_terminal":
            if self.tol <= 0:
                raise InvalidArgumentError(
                    "sampling a pin event needs a positive tolerance"
                )
            return np.linalg.norm(terminal - self.target, axis=1) <= self.tol
        if self.kind == "pin_path":
            if sup_sq is None:
                raise InvalidArgumentError(
                    "path events need runs recorded against the event's path"
                )
            return sup_sq <= self.tol**2
        if self.kind == "halfspace":
            slack = self.boundary_atol * (1.0 + abs(self.level))
            return terminal @ self.normal >= self.level - slack
        raise InvalidArgumentError(f"unknown event kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "pin_terminal":
            return f"pin x(T) to {np.ravel(self.target).tolist()} within {self.tol:g}"
        if self.kind == "pin_path":
            return f"pin the whole path within {self.tol:g}"
        return (
            f"halfspace {np.ravel(self.normal).tolist()} . x(T) >= {self.level:g}"
        )


@dataclass(frozen=True)
class OptimizerConfig:
    n_starts: int = 5
    control_cells: int = 16
    rho0: float = 10.0
    rho_growth: float = 2.0
    rho_max: float = 1e8
    outer_rounds: int = 16
    inner_iters: int = 80
    gtol: float = 1e-7
    fd_rel_step: float = 1e-6
    theta_clip: float = 30.0
    feasibility_tol: float = 1e-6
    start_scale: float = 0.5
    seed: int = 0


@dataclass
class RateResult:
    value: float
    control: object
    skeleton: Path
    residual: float
    feasible: bool
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "residual": self.residual,
            "feasible": self.feasible,
            "trace": self.trace,
        }


def _coarse_map(n_fine: int, n_coarse: int) -> np.ndarray:
    """Fine-cell -> coarse-cell index map (contiguous blocks)."""
    return np.minimum((np.arange(n_fine) * n_coarse) // n_fine, n_coarse - 1)


class _LdpProblem:
    """Objective plumbing shared by all starts of one ldp_rate call."""

    def __init__(self, spec, grid, event, config):
        self.spec, self.grid, self.event, self.config = spec, grid, event, config
        self.d = spec.dim
        self.n_cells = spec.n_mark_cells
        self.k = min(config.control_cells, grid.n_steps)
        self.map = _coarse_map(grid.n_steps, self.k)
        self.n_params = self.k * (self.d + self.n_cells)
        self.limit = solve_limit_ode(spec, grid)
        self.picard = PicardConfig(raise_on_fail=False)

    def expand(self, params: np.ndarray) -> Control:
        k, d, c = self.k, self.d, self.n_cells
        phi = params[: k * d].reshape(k, d)[self.map]
        if c:
            theta = np.clip(
                params[k * d :].reshape(k, c),
                -self.config.theta_clip,
                self.config.theta_clip,
            )
            psi = np.exp(theta)[self.map]
            bounds = (min(1.0, float(psi.min())), max(1.0, float(psi.max())))
        else:
            psi = np.ones((self.grid.n_steps, 0))
            bounds = (1.0, 1.0)
        return Control(self.grid, phi, psi, psi_bounds=bounds)

    def evaluate(self, params: np.ndarray):
        """-> (cost, excess, skeleton path | None); inf cost on blow-up."""
        control = self.expand(params)
        try:
            sol = solve_ldp_skeleton(
                self.spec, self.grid, control, config=self.picard, limit_path=self.limit
            )
        except NumericError:
            return np.inf, np.inf, None
        cost = q1_cost(control) + q2_cost(control, self.spec.intensity)
        return cost, self.event.excess(sol.path), sol.path


def _alm_objective(problem, params, lam, rho):
    cost, g, _ = problem.evaluate(params)
    if not np.isfinite(cost):
        return np.inf
    hinge = max(0.0, g + lam / (2.0 * rho))
    return cost + rho * hinge * hinge


def _fd_gradient(fn, params, rel_step):
    grad = np.empty_like(params)
    for i in range(params.size):
        h = rel_step * (1.0 + abs(params[i]))
        up = params.copy()
        dn = params.copy()
        up[i] += h
        dn[i] -= h
        fu, fd = fn(up), fn(dn)
        if not (np.isfinite(fu) and np.isfinite(fd)):
            grad[i] = 0.0
        else:
            grad[i] = (fu - fd) / (2.0 * h)
    return grad


def _bb_minimize(fn, params, config):
    """Barzilai-Borwein descent with a nonmonotone backtracking rule."""
    p = params.copy()
    f = fn(p)
    g = _fd_gradient(fn, p, config.fd_rel_step)
    history = [f]
    step = 1.0 / (np.linalg.norm(g) + 1.0)
    for _ in range(config.inner_iters):
        gnorm2 = float(g @ g)
        if np.sqrt(gnorm2) <= config.gtol * (1.0 + abs(f)):
            break
        ref = max(history[-5:])
        t = step
        accepted = False
        for _ls in range(40):
            p_new = p - t * g
            f_new = fn(p_new)
            if f_new <= ref - 1e-4 * t * gnorm2:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        g_new = _fd_gradient(fn, p_new, config.fd_rel_step)
        s = p_new - p
        y = g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 1e-16 else min(t * 2.0, 1e8)
        step = float(np.clip(step, 1e-10, 1e8))
        p, f, g = p_new, f_new, g_new
        history.append(f)
    return p, f


def _alm_solve(problem, params0, config):
    lam, rho = 0.0, config.rho0
    p = params0.copy()
    for _round in range(config.outer_rounds):
        p, _ = _bb_minimize(lambda q: _alm_objective(problem, q, lam, rho), p, config)
        _, g, _ = problem.evaluate(p)
        if g <= config.feasibility_tol and lam > 0.0:
            break
        lam = max(0.0, lam + 2.0 * rho * max(g, -lam / (2.0 * rho)))
        rho = min(rho * config.rho_growth, config.rho_max)
    return p


def ldp_rate(
    spec: ModelSpec,
    grid: TimeGrid,
    event: EventSpec,
    config: OptimizerConfig = OptimizerConfig(),
) -> RateResult:
    """Minimize q1 + q2 over controls whose skeleton realizes the event."""
    problem = _LdpProblem(spec, grid, event, config)
    rng = np.random.default_rng(config.seed)
    candidates = []
    for start in range(config.n_starts):
        if start == 0:
            p0 = np.zeros(problem.n_params)
        else:
            p0 = rng.normal(0.0, config.start_scale, problem.n_params)
        p = _alm_solve(problem, p0, config)
        cost, g, _path = problem.evaluate(p)
        feasible = g <= config.feasibility_tol
        candidates.append((not feasible, cost, max(g, 0.0), start, p))
    candidates.sort(key=lambda row: row[:4])
    infeasible, cost, residual, start, p = candidates[0]
    control = problem.expand(p)
    sol = solve_ldp_skeleton(
        spec, grid, control, config=problem.picard, limit_path=problem.limit
    )
    trace = [
        {
            "start": s,
            "feasible": not bad,
            "cost": c,
            "residual": r,
            "selected": s == start,
        }
        for bad, c, r, s, _ in sorted(candidates, key=lambda row: row[3])
    ]
    return RateResult(
        value=float(cost),
        control=control,
        skeleton=sol.path,
        residual=float(residual),
        feasible=not infeasible,
        trace=trace,
    )


def _mdp_response(spec: ModelSpec, grid: TimeGrid):
    """Terminal response A (d, n_controls) of the moderate skeleton and the
    quadratic cost weights w (n_controls,), controls stacked phi then tilt."""
    n, d, c = grid.n_steps, spec.dim, spec.n_mark_cells
    n_controls = n * (d + c)
    phi = np.zeros((n_controls, n, d))
    tilt = np.zeros((n_controls, n, c))
    cols = np.arange(n)
    for i in range(d):
        phi[cols * (d + c) + i, cols, i] = 1.0
    for j in range(c):
        tilt[cols * (d + c) + d + j, cols, j] = 1.0
    coeffs = _mdp_coefficients(spec, grid)
    paths = _propagate_mdp(spec, grid, phi, tilt, coeffs=coeffs)
    a_mat = paths[:, -1, :].T  # (d, n_controls)
    w = np.empty(n_controls)
    for k in range(n):
        base = k * (d + c)
        w[base : base + d] = grid.dt[k]
        if c:
            w[base + d : base + d + c] = grid.dt[k] * spec.intensity.masses
    return a_mat, w


def _shrink_pin_target(r: np.ndarray, gram: np.ndarray, tol: float) -> np.ndarray:
    """Replace r by the cheapest point of the ball |r' - r| <= tol, cost
    measured by the quadratic form 1/2 r'^T gram^-1 r'."""
    norm = float(np.linalg.norm(r))
    if tol <= 0.0 or norm == 0.0:
        return r
    if norm <= tol:
        return np.zeros_like(r)
    if r.size == 1:
        return np.sign(r) * (norm - tol)
    # KKT: r'(mu) = mu (M + mu I)^-1 r with M = gram^-1; |r'(mu) - r| = tol.
    m = np.linalg.inv(gram)

    def gap(mu: float) -> float:
        rp = mu * np.linalg.solve(m + mu * np.eye(r.size), r)
        return float(np.linalg.norm(rp - r)) - tol

    lo, hi = 0.0, 1.0
    while gap(hi) > 0.0:
        hi *= 2.0
        if hi > 1e16:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    return mu * np.linalg.solve(m + mu * np.eye(r.size), r)


def mdp_rate(
    spec: ModelSpec,
    grid: TimeGrid,
    event: EventSpec,
    config: OptimizerConfig = OptimizerConfig(),
) -> RateResult:
    """Exact least-norm value of the moderate rate function for the event.

    The moderate skeleton starts at 0, so pin targets and halfspace levels
    are read in fluctuation coordinates.
    """
    if event.kind == "pin_path":
        raise UnsupportedError(
            "moderate path pins are not supported; use a terminal pin"
        )
    a_mat, w = _mdp_response(spec, grid)
    d = spec.dim
    awat = (a_mat / w) @ a_mat.T  # A W^-1 A^T, (d, d)

    def solve_pinned(r: np.ndarray):
        try:
            alpha = np.linalg.solve(awat, r)
        except np.linalg.LinAlgError:
            alpha, *_ = np.linalg.lstsq(awat, r, rcond=None)
        if np.linalg.norm(awat @ alpha - r) > 1e-9 * (1.0 + np.linalg.norm(r)):
            return None, None
        u = (a_mat.T * (1.0 / w)[:, None]) @ alpha
        return float(0.5 * r @ alpha), u

    if event.kind == "pin_terminal":
        target = np.reshape(event.target, (d,))
        r = _shrink_pin_target(target, awat, event.tol)
        value, u = solve_pinned(r)
    else:
        normal = np.reshape(event.normal, (d,))
        if event.level <= 0.0:
            value, u = 0.0, np.zeros(a_mat.shape[1])
        else:
            row = normal @ a_mat
            denom = float(row @ (row / w))
            if denom <= 0.0:
                value, u = None, None
            else:
                value = 0.5 * event.level**2 / denom
                u = (row / w) * (event.level / denom)

    n, c = grid.n_steps, spec.n_mark_cells
    if value is None:
        null = MdpControl(grid, np.zeros((n, d)), np.zeros((n, c)))
        return RateResult(
            value=np.inf,
            control=null,
            skeleton=Path(grid, np.zeros((n + 1, d))),
            residual=np.inf,
            feasible=False,
            trace=[{"reason": "event unreachable for the linear response"}],
        )
    stacked = u.reshape(n, d + c)
    control = MdpControl(grid, stacked[:, :d], stacked[:, d:])
    skel = _propagate_mdp(
        spec, grid, control.phi[None], control.tilt[None]
    )[0]
    path = Path(grid, skel, kind="linear")
    return RateResult(
        value=float(value),
        control=control,
        skeleton=path,
        residual=event.residual(path),
        feasible=True,
        trace=[{"method": "least_norm"}],
    )
