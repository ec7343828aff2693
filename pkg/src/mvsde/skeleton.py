"""Deterministic limit dynamics and controlled skeleton equations.

The limit ODE couples the law as the running point mass, x' = b(t, x, d_x).
The large-deviation skeleton for a control (phi, psi) solves

    y(t) = x0 + int_0^t [ b(s, y, d_xbar) + sigma(s, y, d_xbar) phi(s)
                         + sum_j G(s, y, d_xbar, z_j) (psi(s, z_j) - 1) nu_j ] ds

with the law frozen at the limit path xbar. It is computed in deviation form,
y = xbar + (integral of the difference against the limit drift), so the null
control is an exact fixed point of the Picard map and the discretization
error of the limit path does not leak into the correction term.

The moderate-deviation skeleton is the variational equation of the limit ODE
driven by the control: m' = A(t) m + sigma(t) phi + sum_j G(t, z_j) tilt_j nu_j
with A the jacobian of the point-mass-coupled drift field along xbar.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Control, LawSummary, MdpControl, ModelSpec, Path, TimeGrid
from .errors import (
    DivergenceError,
    GridMismatchError,
    InvalidArgumentError,
    NoConvergenceError,
)

__all__ = [
    "PicardConfig",
    "SkeletonSolution",
    "solve_limit_ode",
    "solve_ldp_skeleton",
    "jacobian_b_x",
    "solve_mdp_skeleton",
]

_DIVERGENCE_LIMIT = 1e10


@dataclass(frozen=True)
class PicardConfig:
    max_iter: int = 200
    tol: float = 1e-10
    raise_on_fail: bool = True


@dataclass(frozen=True)
class SkeletonSolution:
    path: Path
    iterations: int
    residual: float
    converged: bool = True


def _field(spec: ModelSpec, t: float, x: np.ndarray) -> np.ndarray:
    """Point-mass-coupled drift field B(t, x) = b(t, x, d_x) for one state."""
    out = spec.drift(t, x[None, :], LawSummary.dirac(x))
    return np.reshape(np.asarray(out, dtype=float), (spec.dim,))


def _guard(x: np.ndarray, step: int):
    if not np.isfinite(x).all() or np.abs(x).max() > _DIVERGENCE_LIMIT:
        raise DivergenceError(f"limit dynamics diverged at step {step}", step=step)


def solve_limit_ode(
    spec: ModelSpec, grid: TimeGrid, return_midpoints: bool = False
):
    """Integrate the limit ODE with two fourth-order stages per grid cell.

    Returns the Path on the grid nodes; with return_midpoints=True also the
    (n_steps, d) array of cell-midpoint states from the internal half steps.
    """
    n, d = grid.n_steps, spec.dim
    x = spec.initial.copy()
    nodes = np.empty((n + 1, d))
    mids = np.empty((n, d))
    nodes[0] = x
    for k in range(n):
        t0, dt = float(grid.nodes[k]), float(grid.dt[k])
        for half in range(2):
            ta = t0 + 0.5 * dt * half
            h = 0.5 * dt
            k1 = _field(spec, ta, x)
            k2 = _field(spec, ta + 0.5 * h, x + 0.5 * h * k1)
            k3 = _field(spec, ta + 0.5 * h, x + 0.5 * h * k2)
            k4 = _field(spec, ta + h, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if half == 0:
                mids[k] = x
        _guard(x, k)
        nodes[k + 1] = x
    path = Path(grid, nodes, kind="linear")
    return (path, mids) if return_midpoints else path


def _matvec(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Apply (d,d) or (n,d,d) matrices to (n,d) row vectors."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim == 2:
        return vec @ mat.T
    return np.einsum("nij,nj->ni", mat, vec)


def solve_ldp_skeleton(
    spec: ModelSpec,
    grid: TimeGrid,
    control: Control,
    config: PicardConfig = PicardConfig(),
    limit_path: Path | None = None,
) -> SkeletonSolution:
    """Picard iteration for the controlled skeleton, law frozen at the limit."""
    if control.grid != grid:
        raise GridMismatchError("control grid does not match the skeleton grid")
    if control.dim != spec.dim:
        raise InvalidArgumentError("control dimension does not match the model")
    if spec.has_jumps and control.n_mark_cells != spec.intensity.n_cells:
        raise InvalidArgumentError("control psi does not cover the mark cells")

    if limit_path is None:
        limit_path = solve_limit_ode(spec, grid)
    elif limit_path.grid != grid:
        raise GridMismatchError("limit path lives on a different grid")
    xbar = limit_path.values
    n, d = grid.n_steps, spec.dim
    t = grid.nodes
    dt = grid.dt[:, None]
    law = LawSummary.dirac(xbar)
    b_base = np.asarray(spec.drift(t, xbar, law), dtype=float).reshape(n + 1, d)
    phi = control.phi
    tilt_w = (control.psi - 1.0) * spec.intensity.masses if spec.has_jumps else None

    y = xbar.copy()
    iterations = 0
    residual = np.inf
    for iterations in range(1, config.max_iter + 1):
        f = np.asarray(spec.drift(t, y, law), dtype=float).reshape(n + 1, d) - b_base
        sig = np.asarray(spec.diffusion(t, y, law), dtype=float)
        sig_lo, sig_hi = (sig, sig) if sig.ndim == 2 else (sig[:-1], sig[1:])
        # phi is constant on each cell, so it multiplies both cell endpoints.
        f_lo = f[:-1] + _matvec(sig_lo, phi)
        f_hi = f[1:] + _matvec(sig_hi, phi)
        if spec.has_jumps:
            g_nodes = np.stack(
                [
                    np.asarray(spec.jump(t, y, law, z), dtype=float).reshape(n + 1, d)
                    for z in spec.intensity.atoms
                ],
                axis=1,
            )  # (n+1, C, d)
            f_lo = f_lo + np.einsum("ncd,nc->nd", g_nodes[:-1], tilt_w)
            f_hi = f_hi + np.einsum("ncd,nc->nd", g_nodes[1:], tilt_w)
        increments = 0.5 * dt * (f_lo + f_hi)
        y_new = xbar.copy()
        y_new[1:] += np.cumsum(increments, axis=0)
        residual = float(np.max(np.abs(y_new - y)))
        y = y_new
        if residual <= config.tol:
            break
    if residual > config.tol and config.raise_on_fail:
        raise NoConvergenceError(
            f"skeleton Picard iteration stalled at residual {residual:.3e}",
            residual=residual,
        )
    return SkeletonSolution(
        path=Path(grid, y, kind="linear"),
        iterations=iterations,
        residual=residual,
        converged=residual <= config.tol,
    )


def jacobian_b_x(
    spec: ModelSpec,
    t: float,
    x: np.ndarray,
    law: LawSummary | None = None,
    fd_rel_step: float = 1e-6,
) -> np.ndarray:
    """Jacobian in x of the drift at (t, x).

    With law=None this is the total derivative of the point-mass-coupled
    field B(t, x) = b(t, x, d_x), the linearization that drives the moderate
    skeleton; a model-supplied exact jacobian is used when available. With an
    explicit law the law argument stays frozen and the partial derivative is
    formed by central differences.
    """
    x = np.reshape(np.asarray(x, dtype=float), (spec.dim,))
    if law is None and spec.drift_jacobian is not None:
        jac = np.asarray(spec.drift_jacobian(t, x), dtype=float)
        return jac.reshape(spec.dim, spec.dim)

    def f(y: np.ndarray) -> np.ndarray:
        law_y = LawSummary.dirac(y) if law is None else law
        return np.reshape(
            np.asarray(spec.drift(t, y[None, :], law_y), dtype=float), (spec.dim,)
        )

    jac = np.empty((spec.dim, spec.dim))
    for i in range(spec.dim):
        h = fd_rel_step * (1.0 + abs(x[i]))
        e = np.zeros(spec.dim)
        e[i] = h
        jac[:, i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return jac


def _mdp_coefficients(spec: ModelSpec, grid: TimeGrid):
    """A(t), sigma(t), and jump columns along the limit path, at the grid
    nodes and the internal cell midpoints."""
    limit_path, mids = solve_limit_ode(spec, grid, return_midpoints=True)
    xbar = limit_path.values
    n, d = grid.n_steps, spec.dim
    t_nodes, t_mids = grid.nodes, grid.nodes[:-1] + 0.5 * grid.dt

    def coeffs_at(t: float, x: np.ndarray):
        a_mat = jacobian_b_x(spec, t, x)
        sig = np.asarray(spec.diffusion(t, x[None, :], LawSummary.dirac(x)), float)
        sig = sig.reshape(d, d)
        if spec.has_jumps:
            law = LawSummary.dirac(x)
            cols = np.stack(
                [
                    np.reshape(spec.jump(t, x[None, :], law, z), (d,))
                    for z in spec.intensity.atoms
                ]
            )
            g = cols * spec.intensity.masses[:, None]  # (C, d), nu-weighted
        else:
            g = np.zeros((0, d))
        return a_mat, sig, g

    at_nodes = [coeffs_at(float(t_nodes[i]), xbar[i]) for i in range(n + 1)]
    at_mids = [coeffs_at(float(t_mids[k]), mids[k]) for k in range(n)]
    return limit_path, at_nodes, at_mids


def _propagate_mdp(
    spec: ModelSpec,
    grid: TimeGrid,
    phi: np.ndarray,
    tilt: np.ndarray,
    coeffs=None,
) -> np.ndarray:
    """Fourth-order propagation of the linear moderate skeleton.

    phi: (B, n_steps, d) and tilt: (B, n_steps, C) batches of cellwise
    constant controls; returns the (B, n_steps + 1, d) solution batch.
    """
    if coeffs is None:
        coeffs = _mdp_coefficients(spec, grid)
    _, at_nodes, at_mids = coeffs
    batch, n, d = phi.shape[0], grid.n_steps, spec.dim
    m = np.zeros((batch, n + 1, d))
    cur = np.zeros((batch, d))
    for k in range(n):
        dt = float(grid.dt[k])
        a0, s0, g0 = at_nodes[k]
        am, sm, gm = at_mids[k]
        a1, s1, g1 = at_nodes[k + 1]
        p, w = phi[:, k, :], tilt[:, k, :]
        src0 = p @ s0.T + (w @ g0 if g0.size else 0.0)
        srcm = p @ sm.T + (w @ gm if gm.size else 0.0)
        src1 = p @ s1.T + (w @ g1 if g1.size else 0.0)
        k1 = cur @ a0.T + src0
        k2 = (cur + 0.5 * dt * k1) @ am.T + srcm
        k3 = (cur + 0.5 * dt * k2) @ am.T + srcm
        k4 = (cur + dt * k3) @ a1.T + src1
        cur = cur + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        m[:, k + 1, :] = cur
    return m


def solve_mdp_skeleton(
    spec: ModelSpec, grid: TimeGrid, control: MdpControl
) -> Path:
    """Solve the moderate skeleton m' = A m + sigma phi + G tilt nu, m(0)=0."""
    if control.grid != grid:
        raise GridMismatchError("control grid does not match the skeleton grid")
    if control.dim != spec.dim:
        raise InvalidArgumentError("control dimension does not match the model")
    n_cells = spec.n_mark_cells
    if control.tilt.shape[1] != n_cells:
        raise InvalidArgumentError("tilt does not cover the mark cells")
    m = _propagate_mdp(spec, grid, control.phi[None], control.tilt[None])
    return Path(grid, m[0], kind="linear")
