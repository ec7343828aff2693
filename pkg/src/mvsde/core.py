"""Core value types: time grids, paths, controls, law summaries, model specs.

Everything here is immutable after construction; numpy buffers are marked
read-only so downstream code can hold views without defensive copies.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, TYPE_CHECKING

import numpy as np

from .errors import GridMismatchError, InvalidArgumentError, InvalidControlError

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, type hints only
    from .levy import IntensityMeasure

__all__ = [
    "TimeGrid",
    "Path",
    "Control",
    "MdpControl",
    "LawSummary",
    "ModelConstants",
    "ModelSpec",
    "DriftProbeReport",
    "make_time_grid",
    "eval_path",
    "path_sup_distance",
    "null_control",
    "null_mdp_control",
    "probe_drift_monotonicity",
]


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing nodes 0 = t_0 < ... < t_n = horizon."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = _frozen_array(self.nodes)
        if nodes.ndim != 1 or nodes.size < 2:
            raise InvalidArgumentError("time grid needs at least two nodes")
        if not np.isfinite(nodes).all():
            raise InvalidArgumentError("time grid nodes must be finite")
        if nodes[0] != 0.0:
            raise InvalidArgumentError("time grid must start at 0")
        if not (np.diff(nodes) > 0).all():
            raise InvalidArgumentError("time grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_steps(self) -> int:
        return self.nodes.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.nodes)

    def step_of(self, t) -> np.ndarray:
        """Index k with t in (t_k, t_{k+1}]; t=0 maps to step 0."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise InvalidArgumentError("time outside [0, horizon]")
        k = np.searchsorted(self.nodes, t, side="left") - 1
        return np.clip(k, 0, self.n_steps - 1)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.nodes, other.nodes)

    def __hash__(self):
        return hash((self.nodes.size, self.horizon))


def make_time_grid(horizon: float, n_steps: int) -> TimeGrid:
    """Uniform grid on [0, horizon] with n_steps cells."""
    if not (horizon > 0 and np.isfinite(horizon)):
        raise InvalidArgumentError("horizon must be positive and finite")
    if n_steps < 1:
        raise InvalidArgumentError("n_steps must be >= 1")
    return TimeGrid(np.linspace(0.0, float(horizon), n_steps + 1))


@dataclass(frozen=True)
class Path:
    """Values on a time grid with an interpolation convention.

    kind "cadlag_step": right-continuous step function, left limits at nodes.
    kind "linear": piecewise-linear interpolation.
    """

    grid: TimeGrid
    values: np.ndarray
    kind: str = "linear"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != self.grid.nodes.size:
            raise GridMismatchError("path values must have one row per grid node")
        if not np.isfinite(values).all():
            raise InvalidArgumentError("path values must be finite")
        if self.kind not in ("cadlag_step", "linear"):
            raise InvalidArgumentError(f"unknown path kind {self.kind!r}")
        values = _frozen_array(values)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]


def eval_path(path: Path, t) -> np.ndarray:
    """Evaluate a path at scalar or vector times inside [0, horizon]."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    tq = np.atleast_1d(t)
    if np.any(tq < 0) or np.any(tq > path.grid.horizon):
        raise InvalidArgumentError("evaluation time outside [0, horizon]")
    if path.kind == "cadlag_step":
        idx = np.searchsorted(path.grid.nodes, tq, side="right") - 1
        idx = np.clip(idx, 0, path.grid.nodes.size - 1)
        out = path.values[idx]
    else:
        out = np.stack(
            [np.interp(tq, path.grid.nodes, path.values[:, j]) for j in range(path.dim)],
            axis=-1,
        )
    return out[0] if scalar else out


def path_sup_distance(p: Path, q: Path) -> float:
    """Max over shared grid nodes of the euclidean distance |p(t)-q(t)|."""
    if p.grid != q.grid:
        raise GridMismatchError("sup distance requires a shared time grid")
    if p.dim != q.dim:
        raise InvalidArgumentError("paths must have equal dimension")
    return float(np.max(np.linalg.norm(p.values - q.values, axis=1)))


@dataclass(frozen=True)
class Control:
    """Deterministic control u = (phi, psi) on a time grid.

    phi is piecewise constant per grid cell with values in R^d; psi is a
    positive jump tilt, piecewise constant on time cells x mark cells, with
    hard bounds 0 < lo <= psi <= hi.
    """

    grid: TimeGrid
    phi: np.ndarray
    psi: np.ndarray
    psi_bounds: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi[:, None]
        if phi.shape[0] != self.grid.n_steps:
            raise InvalidControlError("phi needs one row per grid cell")
        psi = np.asarray(self.psi, dtype=float)
        if psi.ndim == 1:
            psi = psi[:, None]
        if psi.shape[0] != self.grid.n_steps:
            raise InvalidControlError("psi needs one row per grid cell")
        lo, hi = map(float, self.psi_bounds)
        if not (0.0 < lo <= hi and np.isfinite(hi)):
            raise InvalidControlError("psi bounds must satisfy 0 < lo <= hi < inf")
        if not np.isfinite(phi).all() or not np.isfinite(psi).all():
            raise InvalidControlError("control coefficients must be finite")
        if psi.size and (psi.min() < lo or psi.max() > hi):
            raise InvalidControlError("psi leaves its declared bounds")
        object.__setattr__(self, "phi", _frozen_array(phi))
        object.__setattr__(self, "psi", _frozen_array(psi))
        object.__setattr__(self, "psi_bounds", (lo, hi))

    @property
    def dim(self) -> int:
        return self.phi.shape[1]

    @property
    def n_mark_cells(self) -> int:
        return self.psi.shape[1]

    def is_null(self) -> bool:
        return not self.phi.any() and bool(np.all(self.psi == 1.0))


def null_control(grid: TimeGrid, dim: int, n_mark_cells: int = 0) -> Control:
    """The null control (phi = 0, psi = 1) with tight unit bounds."""
    return Control(
        grid,
        np.zeros((grid.n_steps, dim)),
        np.ones((grid.n_steps, n_mark_cells)),
        psi_bounds=(1.0, 1.0),
    )


@dataclass(frozen=True)
class MdpControl:
    """Moderate-regime control (phi, tilt); tilt is the signed jump intensity
    perturbation, mapped to psi = 1 + a(eps) * tilt at simulation time."""

    grid: TimeGrid
    phi: np.ndarray
    tilt: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi[:, None]
        if phi.shape[0] != self.grid.n_steps:
            raise InvalidControlError("phi needs one row per grid cell")
        tilt = np.asarray(self.tilt, dtype=float)
        if tilt.ndim == 1:
            tilt = tilt[:, None]
        if tilt.shape[0] != self.grid.n_steps:
            raise InvalidControlError("tilt needs one row per grid cell")
        if not np.isfinite(phi).all() or not np.isfinite(tilt).all():
            raise InvalidControlError("control coefficients must be finite")
        object.__setattr__(self, "phi", _frozen_array(phi))
        object.__setattr__(self, "tilt", _frozen_array(tilt))

    @property
    def dim(self) -> int:
        return self.phi.shape[1]


def null_mdp_control(grid: TimeGrid, dim: int, n_mark_cells: int = 0) -> MdpControl:
    return MdpControl(
        grid, np.zeros((grid.n_steps, dim)), np.zeros((grid.n_steps, n_mark_cells))
    )


class LawSummary:
    """Tagged summary of a probability law passed to model coefficients.

    kind "dirac": point mass; point may be (d,) or (n, d) for a batch of
    point masses, one per particle.
    kind "empirical": uniform weights on an (N, d) atom cloud.
    kind "mean": only the mean vector is known.
    Coefficients should consume `mean` (and `cloud` when they need atoms).
    """

    __slots__ = ("kind", "_point", "_cloud", "_mean")

    def __init__(self, kind: str, point=None, cloud=None):
        if kind not in ("dirac", "empirical", "mean"):
            raise InvalidArgumentError(f"unknown law summary kind {kind!r}")
        self.kind = kind
        self._point = None if point is None else np.asarray(point, dtype=float)
        self._cloud = None if cloud is None else np.asarray(cloud, dtype=float)
        if kind == "empirical":
            if self._cloud is None or self._cloud.ndim != 2 or self._cloud.shape[0] < 1:
                raise InvalidArgumentError("empirical summary needs an (N, d) cloud")
            self._mean = self._cloud.mean(axis=0)
        else:
            if self._point is None:
                raise InvalidArgumentError(f"{kind} summary needs a point")
            self._mean = self._point

    @classmethod
    def dirac(cls, point) -> "LawSummary":
        return cls("dirac", point=point)

    @classmethod
    def empirical(cls, cloud) -> "LawSummary":
        return cls("empirical", cloud=cloud)

    @classmethod
    def mean_only(cls, point) -> "LawSummary":
        return cls("mean", point=point)

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def cloud(self) -> np.ndarray:
        if self.kind == "empirical":
            return self._cloud
        return np.atleast_2d(self._point)

    def __repr__(self):
        return f"LawSummary({self.kind}, mean={np.ravel(self._mean)[:4]})"


@dataclass(frozen=True)
class ModelConstants:
    """User-asserted structural constants; recorded, probed, not enforced.

    rho_* give the coefficient families' convergence rates to their limits as
    (coefficient, exponent) pairs, i.e. rho(eps) = coef * eps**power.
    """

    lipschitz: float = 1.0
    growth: float = 1.0
    jump_lipschitz: float = 0.0
    rho_b: tuple[float, float] = (0.0, 0.0)
    rho_sigma: tuple[float, float] = (0.0, 0.0)
    rho_g: tuple[float, float] = (0.0, 0.0)

    def rho_b_at(self, eps: float) -> float:
        return self.rho_b[0] * eps ** self.rho_b[1]

    def rho_sigma_at(self, eps: float) -> float:
        return self.rho_sigma[0] * eps ** self.rho_sigma[1]

    def rho_g_at(self, eps: float) -> float:
        return self.rho_g[0] * eps ** self.rho_g[1]


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients and structure of one mean-field jump-diffusion model.

    Limit coefficients are callables
        drift(t, x, law) -> (..., d)
        diffusion(t, x, law) -> (d, d) or (n, d, d)
        jump(t, x, law, z) -> (..., d)
    where t may be a scalar or an (n,) array, x is (n, d), and law is a
    LawSummary. The eps-indexed families default to the limit coefficients;
    when given they take a trailing eps argument.
    """

    name: str
    dim: int
    initial: np.ndarray
    drift: Callable
    diffusion: Callable
    jump: Callable | None = None
    intensity: "IntensityMeasure | None" = None
    drift_eps: Callable | None = None
    diffusion_eps: Callable | None = None
    jump_eps: Callable | None = None
    drift_jacobian: Callable | None = None
    constants: ModelConstants = field(default_factory=ModelConstants)

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgumentError("dim must be >= 1")
        initial = _frozen_array(np.reshape(np.asarray(self.initial, dtype=float), (-1,)))
        if initial.size != self.dim:
            raise InvalidArgumentError("initial condition does not match dim")
        if not np.isfinite(initial).all():
            raise InvalidArgumentError("initial condition must be finite")
        if (self.jump is None) != (self.intensity is None):
            raise InvalidArgumentError("jump coefficient and intensity come together")
        object.__setattr__(self, "initial", initial)

    @property
    def has_jumps(self) -> bool:
        return self.jump is not None

    @property
    def n_mark_cells(self) -> int:
        return 0 if self.intensity is None else self.intensity.n_cells

    def b_eps(self, t, x, law, eps: float):
        if self.drift_eps is not None:
            return self.drift_eps(t, x, law, eps)
        return self.drift(t, x, law)

    def sigma_eps(self, t, x, law, eps: float):
        if self.diffusion_eps is not None:
            return self.diffusion_eps(t, x, law, eps)
        return self.diffusion(t, x, law)

    def g_eps(self, t, x, law, z, eps: float):
        if self.jump_eps is not None:
            return self.jump_eps(t, x, law, z, eps)
        return self.jump(t, x, law, z)


@dataclass(frozen=True)
class DriftProbeReport:
    """Outcome of the one-sided monotonicity probe of the drift."""

    n_tuples: int
    n_violations: int
    worst_excess: float
    violations: tuple

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def probe_drift_monotonicity(
    spec: ModelSpec, seed: int = 0, n_tuples: int = 200, tol: float = 1e-9
) -> DriftProbeReport:
    """Sample (t, x, x', law) tuples and test the one-sided condition

        <x - x', b(t,x,law) - b(t,x',law)> <= L |x - x'|^2 + tol (1 + |x-x'|^2)

    against the declared Lipschitz constant. Violations are reported, never
    raised: the constants are user assertions, the probe is a witness.
    """
    rng = np.random.default_rng(seed)
    lip = spec.constants.lipschitz
    violations = []
    worst = 0.0
    for i in range(n_tuples):
        t = rng.uniform(0.0, 1.0)
        x = rng.normal(0.0, 2.0, spec.dim)
        xp = rng.normal(0.0, 2.0, spec.dim)
        if i % 3 == 0:
            law = LawSummary.dirac(rng.normal(0.0, 2.0, spec.dim))
        else:
            law = LawSummary.empirical(rng.normal(0.0, 2.0, (8, spec.dim)))
        bx = np.ravel(spec.drift(t, x[None, :], law))
        bxp = np.ravel(spec.drift(t, xp[None, :], law))
        d = x - xp
        lhs = float(np.dot(d, bx - bxp))
        gap2 = float(np.dot(d, d))
        excess = lhs - lip * gap2 - tol * (1.0 + gap2)
        if excess > 0.0:
            worst = max(worst, excess)
            violations.append({"t": t, "excess": excess})
    return DriftProbeReport(
        n_tuples=n_tuples,
        n_violations=len(violations),
        worst_excess=worst,
        violations=tuple(violations[:10]),
    )
