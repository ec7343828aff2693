"""Interacting particle systems under small Brownian and Poisson noise.

One Euler engine drives every lane; the lanes differ only in where each step
reads its law (the live particle cloud, or a user-frozen flow) and in which
control it applies. The plain system is literally the controlled engine fed
the null control, so plain and null-controlled runs from one seed agree bit
for bit.

Per step k, with the law frozen at the left endpoint:

    X <- X + dt * b_eps                     (drift)
         + sqrt(eps) * sigma_eps dW         (Brownian)
         + dt * sigma_eps phi_k             (Brownian control)
         + dt * sum_j G_eps (psi_kj - 1) nu_j   (jump control shift)
         - dt * sum_j G_eps psi_kj nu_j         (compensator)

followed by the step's accepted jumps, X += eps * G_eps, applied in time
order per particle (grouped by occurrence rank, vectorized across particles).
The shift and compensator reuse one G evaluation and cancel to the plain
compensator exactly when psi = 1.

The fluctuation engine simulates M = (X - xbar) / a directly: drift
(B_eps(t, xbar + aM) - B(t, xbar)) / a with the point-mass-coupled field
B(t, x) = b(t, x, d_x), noise sqrt(eps)/a, jump size eps/a, and jump tilt
psi_eps = max(psi_floor, 1 + a * tilt), clamps counted in meta.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    Control,
    LawSummary,
    MdpControl,
    ModelSpec,
    Path,
    TimeGrid,
    null_control,
    null_mdp_control,
)
from .errors import (
    DivergenceError,
    GridMismatchError,
    InvalidArgumentError,
    InvalidControlError,
)
from .levy import JumpStream, sample_controlled_prm
from .rng import SeedBlock
from .skeleton import solve_limit_ode

__all__ = [
    "ParticleEnsemble",
    "simulate_mvsde",
    "simulate_controlled_frozen",
    "simulate_controlled_selfconsistent",
    "simulate_mdp_controlled",
]

_DIVERGENCE_LIMIT = 1e10


@dataclass
class ParticleEnsemble:
    """Result of one particle-system run.

    paths is (n_nodes, n_particles, d) under record="full" and None under
    record="summary"; terminal is always the final (n_particles, d) cloud.
    sup_sq holds each particle's running max squared distance to the
    reference path when one was supplied.
    """

    grid: TimeGrid
    eps: float
    n_particles: int
    dim: int
    seed: int
    kind: str
    terminal: np.ndarray
    paths: np.ndarray | None = None
    sup_sq: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def law_at(self, k: int) -> LawSummary:
        if self.paths is None:
            raise InvalidArgumentError("law_at needs record='full'")
        return LawSummary.empirical(self.paths[k])

    def law_flow(self) -> Callable[[int], LawSummary]:
        if self.paths is None:
            raise InvalidArgumentError("law_flow needs record='full'")
        paths = self.paths
        return lambda k: LawSummary.empirical(paths[k])

    def mean_path(self) -> np.ndarray:
        if self.paths is None:
            raise InvalidArgumentError("mean_path needs record='full'")
        return self.paths.mean(axis=1)

    def particle_path(self, i: int) -> Path:
        if self.paths is None:
            raise InvalidArgumentError("particle_path needs record='full'")
        return Path(self.grid, self.paths[:, i, :], kind="linear")


class _FullRecorder:
    def __init__(self, n_nodes, n_particles, dim, reference):
        self.paths = np.empty((n_nodes, n_particles, dim))
        self.reference = reference
        self.sup_sq = None if reference is None else np.zeros(n_particles)

    def record(self, k, x):
        self.paths[k] = x
        if self.reference is not None:
            d2 = np.sum((x - self.reference[k]) ** 2, axis=1)
            np.maximum(self.sup_sq, d2, out=self.sup_sq)

    def finish(self, x):
        return self.paths, x.copy(), self.sup_sq


class _SummaryRecorder:
    def __init__(self, n_nodes, n_particles, dim, reference):
        self.reference = reference
        self.sup_sq = None if reference is None else np.zeros(n_particles)

    def record(self, k, x):
        if self.reference is not None:
            d2 = np.sum((x - self.reference[k]) ** 2, axis=1)
            np.maximum(self.sup_sq, d2, out=self.sup_sq)

    def finish(self, x):
        return None, x.copy(), self.sup_sq


def _make_recorder(record, n_nodes, n_particles, dim, reference):
    if record == "full":
        return _FullRecorder(n_nodes, n_particles, dim, reference)
    if record == "summary":
        return _SummaryRecorder(n_nodes, n_particles, dim, reference)
    raise InvalidArgumentError(f"unknown record mode {record!r}")


def _as_reference(reference, grid: TimeGrid, dim: int):
    if reference is None:
        return None
    if isinstance(reference, Path):
        if reference.grid != grid:
            raise GridMismatchError("reference path lives on a different grid")
        return reference.values
    ref = np.asarray(reference, dtype=float)
    if ref.ndim == 1:
        ref = ref[:, None]
    if ref.shape != (grid.nodes.size, dim):
        raise InvalidArgumentError("reference must be (n_nodes, dim)")
    return ref


def _law_flow_adapter(law_flow, grid: TimeGrid) -> Callable[[int], LawSummary]:
    if isinstance(law_flow, ParticleEnsemble):
        if law_flow.grid != grid:
            raise GridMismatchError("frozen flow lives on a different grid")
        return law_flow.law_flow()
    if isinstance(law_flow, Path):
        if law_flow.grid != grid:
            raise GridMismatchError("frozen flow lives on a different grid")
        values = law_flow.values
        return lambda k: LawSummary.dirac(values[k])
    if callable(law_flow):
        return law_flow
    if isinstance(law_flow, Sequence):
        flows = list(law_flow)
        if len(flows) < grid.n_steps:
            raise InvalidArgumentError("frozen flow needs a law per time step")
        return lambda k: flows[k]
    raise InvalidArgumentError("cannot interpret the frozen law flow")


def _matvec(mat, vec):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim == 2:
        return vec @ mat.T
    return np.einsum("nij,nj->ni", mat, vec)


def _check_eps(eps: float, warnings: list):
    if not (eps > 0 and np.isfinite(eps)):
        raise InvalidArgumentError("eps must be positive and finite")
    if eps > 0.5:
        warnings.append(
            f"eps={eps:g} is outside the small-noise regime; deviation "
            "asymptotics are unreliable at this scale"
        )


def _apply_jumps(js: JumpStream, k: int, x, law, spec, eps, scale, mdp_state=None):
    """Apply step k's accepted jumps in per-particle time order."""
    lo, hi = js.step_offsets[k], js.step_offsets[k + 1]
    if hi == lo:
        return
    streams = js.stream[lo:hi]
    times = js.time[lo:hi]
    cells = js.cell[lo:hi]
    ranks = js.rank[lo:hi]
    pos = 0
    r = 0
    while pos < ranks.size:
        end = int(np.searchsorted(ranks, r + 1))
        for j in np.unique(cells[pos:end]):
            sel = pos + np.flatnonzero(cells[pos:end] == j)
            pid = streams[sel]
            z = js.intensity.atoms[j]
            if mdp_state is None:
                g = spec.g_eps(times[sel], x[pid], law, z, eps)
            else:
                xbar_k, a = mdp_state
                state = xbar_k + a * x[pid]
                g = spec.g_eps(times[sel], state, LawSummary.dirac(state), z, eps)
            x[pid] += scale * np.asarray(g, dtype=float).reshape(pid.size, -1)
        pos = end
        r += 1


def _run_main(
    spec: ModelSpec,
    grid: TimeGrid,
    eps: float,
    n_particles: int,
    seed: int,
    law_mode: str,
    control: Control | None,
    law_flow,
    record: str,
    reference,
) -> ParticleEnsemble:
    warnings: list = []
    _check_eps(eps, warnings)
    if n_particles < 1:
        raise InvalidArgumentError("n_particles must be >= 1")
    if control is None:
        control = null_control(grid, spec.dim, spec.n_mark_cells)
    if control.grid != grid:
        raise GridMismatchError("control grid does not match the simulation grid")
    if control.dim != spec.dim:
        raise InvalidControlError("control dimension does not match the model")
    if spec.has_jumps and control.n_mark_cells != spec.intensity.n_cells:
        raise InvalidControlError("control psi does not cover the mark cells")
    flow = _law_flow_adapter(law_flow, grid) if law_mode == "frozen" else None

    n, d, big_n = grid.n_steps, spec.dim, n_particles
    sb = SeedBlock.from_seed(seed)
    js = None
    if spec.has_jumps:
        js = sample_controlled_prm(
            grid, spec.intensity, 1.0 / eps, control, big_n, sb.jumps
        )
        masses = spec.intensity.masses
    rec = _make_recorder(record, n + 1, big_n, d, _as_reference(reference, grid, d))
    x = np.tile(spec.initial, (big_n, 1))
    rec.record(0, x)
    sqrt_eps = float(np.sqrt(eps))
    phi_active = bool(control.phi.any())

    for k in range(n):
        t_k = float(grid.nodes[k])
        dt = float(grid.dt[k])
        law = LawSummary.empirical(x) if law_mode == "self" else flow(k)
        drift = np.asarray(spec.b_eps(t_k, x, law, eps), dtype=float)
        sig = spec.sigma_eps(t_k, x, law, eps)
        dw = sb.brownian.standard_normal((big_n, d)) * np.sqrt(dt)
        incr = dt * np.broadcast_to(drift, (big_n, d)) + sqrt_eps * _matvec(sig, dw)
        if phi_active:
            phi_k = np.broadcast_to(control.phi[k], (big_n, d))
            incr = incr + dt * _matvec(sig, phi_k)
        if js is not None:
            g_stack = np.stack(
                [
                    np.broadcast_to(
                        np.asarray(
                            spec.g_eps(t_k, x, law, z, eps), dtype=float
                        ),
                        (big_n, d),
                    )
                    for z in spec.intensity.atoms
                ],
                axis=1,
            )  # (N, C, d)
            psi_k = control.psi[k]
            incr = incr + dt * np.einsum("ncd,c->nd", g_stack, (psi_k - 1.0) * masses)
            incr = incr - dt * np.einsum("ncd,c->nd", g_stack, psi_k * masses)
        x = x + incr
        if js is not None:
            _apply_jumps(js, k, x, law, spec, eps, eps)
        if not np.isfinite(x).all() or np.abs(x).max() > _DIVERGENCE_LIMIT:
            raise DivergenceError(f"particle system diverged at step {k}", step=k)
        rec.record(k + 1, x)

    paths, terminal, sup_sq = rec.finish(x)
    meta = {
        "warnings": warnings,
        "law_mode": law_mode,
        "rate_scale": 1.0 / eps,
        "n_jumps": 0 if js is None else int(js.n_jumps),
        "n_proposed": 0 if js is None else int(js.n_proposed),
    }
    return ParticleEnsemble(
        grid=grid,
        eps=eps,
        n_particles=big_n,
        dim=d,
        seed=int(seed),
        kind="state",
        terminal=terminal,
        paths=paths,
        sup_sq=sup_sq,
        meta=meta,
    )


def simulate_mvsde(
    spec: ModelSpec,
    grid: TimeGrid,
    eps: float,
    n_particles: int,
    seed: int,
    record: str = "full",
    reference=None,
) -> ParticleEnsemble:
    """Plain interacting particle system coupled through its own cloud."""
    return _run_main(
        spec, grid, eps, n_particles, seed, "self", None, None, record, reference
    )


def simulate_controlled_selfconsistent(
    spec: ModelSpec,
    grid: TimeGrid,
    eps: float,
    control: Control,
    n_particles: int,
    seed: int,
    record: str = "full",
    reference=None,
) -> ParticleEnsemble:
    """Controlled system whose coefficients read the controlled cloud itself.

    This feeds the control back into the law, which is NOT the object the
    deviation bounds quantify over; it exists so the discrepancy can be
    demonstrated against the frozen-law lane.
    """
    return _run_main(
        spec, grid, eps, n_particles, seed, "self", control, None, record, reference
    )


def simulate_controlled_frozen(
    spec: ModelSpec,
    grid: TimeGrid,
    eps: float,
    control: Control,
    law_flow,
    n_particles: int,
    seed: int,
    record: str = "full",
    reference=None,
) -> ParticleEnsemble:
    """Controlled system with coefficients reading a frozen law flow.

    law_flow may be a ParticleEnsemble (its empirical flow), a Path (point
    masses along it), a sequence of LawSummary, or a callable step -> law.
    The correct flow to freeze is the law of the UNCONTROLLED system.
    """
    return _run_main(
        spec, grid, eps, n_particles, seed, "frozen", control, law_flow, record, reference
    )


def simulate_mdp_controlled(
    spec: ModelSpec,
    grid: TimeGrid,
    eps: float,
    a: float,
    control: MdpControl | None,
    n_particles: int,
    seed: int,
    psi_floor: float = 1e-3,
    record: str = "full",
    reference=None,
) -> ParticleEnsemble:
    """Simulate the moderate-regime fluctuation process M = (X - xbar) / a."""
    warnings: list = []
    _check_eps(eps, warnings)
    if not (a > 0 and np.isfinite(a)):
        raise InvalidArgumentError("the moderate scale a must be positive")
    if a >= 1.0 or eps / a**2 >= 1.0:
        warnings.append(
            f"a={a:g}, eps/a^2={eps / a**2:g}: outside the moderate window "
            "(a -> 0 with eps/a^2 -> 0)"
        )
    if n_particles < 1:
        raise InvalidArgumentError("n_particles must be >= 1")
    if control is None:
        control = null_mdp_control(grid, spec.dim, spec.n_mark_cells)
    if control.grid != grid:
        raise GridMismatchError("control grid does not match the simulation grid")
    if control.dim != spec.dim:
        raise InvalidControlError("control dimension does not match the model")
    if spec.has_jumps and control.tilt.shape[1] != spec.intensity.n_cells:
        raise InvalidControlError("control tilt does not cover the mark cells")

    n, d, big_n = grid.n_steps, spec.dim, n_particles
    xbar = solve_limit_ode(spec, grid).values
    sb = SeedBlock.from_seed(seed)
    js = None
    clamped = 0
    if spec.has_jumps:
        raw = 1.0 + a * control.tilt
        psi_eps = np.maximum(psi_floor, raw)
        clamped = int(np.count_nonzero(raw < psi_floor))
        jump_control = Control(
            grid,
            np.zeros((n, d)),
            psi_eps,
            psi_bounds=(float(psi_eps.min()), float(max(psi_eps.max(), psi_floor))),
        )
        js = sample_controlled_prm(
            grid, spec.intensity, 1.0 / eps, jump_control, big_n, sb.jumps
        )
        masses = spec.intensity.masses
    rec = _make_recorder(record, n + 1, big_n, d, _as_reference(reference, grid, d))
    m = np.zeros((big_n, d))
    rec.record(0, m)
    noise_scale = float(np.sqrt(eps)) / a

    for k in range(n):
        t_k = float(grid.nodes[k])
        dt = float(grid.dt[k])
        state = xbar[k] + a * m
        law = LawSummary.dirac(state)
        b_state = np.asarray(spec.b_eps(t_k, state, law, eps), dtype=float)
        b_limit = np.asarray(
            spec.drift(t_k, xbar[k][None, :], LawSummary.dirac(xbar[k])), dtype=float
        ).reshape(1, d)
        bdiff = (np.broadcast_to(b_state, (big_n, d)) - b_limit) / a
        sig = spec.sigma_eps(t_k, state, law, eps)
        dw = sb.brownian.standard_normal((big_n, d)) * np.sqrt(dt)
        incr = dt * bdiff + noise_scale * _matvec(sig, dw)
        incr = incr + dt * _matvec(sig, np.broadcast_to(control.phi[k], (big_n, d)))
        if js is not None:
            g_stack = np.stack(
                [
                    np.broadcast_to(
                        np.asarray(spec.g_eps(t_k, state, law, z, eps), dtype=float),
                        (big_n, d),
                    )
                    for z in spec.intensity.atoms
                ],
                axis=1,
            )
            psi_k = psi_eps[k]
            incr = incr + dt * np.einsum(
                "ncd,c->nd", g_stack, (psi_k - 1.0) * masses / a
            )
            incr = incr - dt * np.einsum("ncd,c->nd", g_stack, psi_k * masses / a)
        m = m + incr
        if js is not None:
            _apply_jumps(js, k, m, law, spec, eps, eps / a, mdp_state=(xbar[k], a))
        if not np.isfinite(m).all() or np.abs(m).max() > _DIVERGENCE_LIMIT:
            raise DivergenceError(f"fluctuation system diverged at step {k}", step=k)
        rec.record(k + 1, m)

    paths, terminal, sup_sq = rec.finish(m)
    meta = {
        "warnings": warnings,
        "law_mode": "dirac",
        "rate_scale": 1.0 / eps,
        "a": float(a),
        "speed": eps / a**2,
        "clamped_cells": clamped,
        "psi_floor": psi_floor,
        "n_jumps": 0 if js is None else int(js.n_jumps),
        "n_proposed": 0 if js is None else int(js.n_proposed),
    }
    return ParticleEnsemble(
        grid=grid,
        eps=eps,
        n_particles=big_n,
        dim=d,
        seed=int(seed),
        kind="fluctuation",
        terminal=terminal,
        paths=paths,
        sup_sq=sup_sq,
        meta=meta,
    )
