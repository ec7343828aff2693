"""Built-in model registry and the declarative JSON model format.

Coefficient conventions: drift(t, x, law) -> (n, d) with x an (n, d) state
batch and t a scalar or (n,) array; diffusion returns a (d, d) matrix (or an
(n, d, d) batch); jump(t, x, law, z) -> (n, d) for one mark atom z. Laws
arrive as LawSummary; models should read law.mean (broadcast against x) and
law.cloud only if they truly need atoms.
"""
from __future__ import annotations

import json
from pathlib import Path as FsPath

import numpy as np

from .core import ModelConstants, ModelSpec
from .errors import InvalidArgumentError
from .levy import IntensityMeasure

__all__ = ["get_model", "list_models", "load_model_file"]


def _mean_like(law, x):
    return np.broadcast_to(law.mean, np.shape(x))


def _example11() -> ModelSpec:
    """Mean-field pull: each particle drifts at the population mean.

    The limit flow from 1.0 is exp(t); the point-mass-coupled field is
    B(t, x) = x, so the fluctuation linearization is the constant 1.
    """

    def drift(t, x, law):
        return _mean_like(law, x)

    def diffusion(t, x, law):
        return np.eye(1)

    return ModelSpec(
        name="example11",
        dim=1,
        initial=np.array([1.0]),
        drift=drift,
        diffusion=diffusion,
        drift_jacobian=lambda t, x: np.array([[1.0]]),
        constants=ModelConstants(lipschitz=1.0, growth=1.0),
    )


def _linear_gaussian() -> ModelSpec:
    """Law-independent linear drift, unit diffusion: b = x, sigma = 1."""

    def drift(t, x, law):
        return np.asarray(x, dtype=float)

    def diffusion(t, x, law):
        return np.eye(1)

    return ModelSpec(
        name="linear_gaussian",
        dim=1,
        initial=np.array([1.0]),
        drift=drift,
        diffusion=diffusion,
        drift_jacobian=lambda t, x: np.array([[1.0]]),
        constants=ModelConstants(lipschitz=1.0, growth=1.0),
    )


def _pure_jump() -> ModelSpec:
    """Compensated unit jumps at unit intensity, no drift, no diffusion."""

    def drift(t, x, law):
        return np.zeros_like(np.asarray(x, dtype=float))

    def diffusion(t, x, law):
        return np.zeros((1, 1))

    def jump(t, x, law, z):
        return np.ones_like(np.asarray(x, dtype=float))

    return ModelSpec(
        name="pure_jump",
        dim=1,
        initial=np.array([0.0]),
        drift=drift,
        diffusion=diffusion,
        jump=jump,
        intensity=IntensityMeasure(np.array([[1.0]]), np.array([1.0])),
        drift_jacobian=lambda t, x: np.array([[0.0]]),
        constants=ModelConstants(lipschitz=0.0, growth=1.0, jump_lipschitz=0.0),
    )


def _logistic_mf() -> ModelSpec:
    """Logistic growth damped by the population mean, with small down-jumps.

    b(t, x, mu) = x (1 - mean(mu)); the point-mass-coupled field is the
    logistic x(1 - x) with jacobian 1 - 2x.
    """

    def drift(t, x, law):
        x = np.asarray(x, dtype=float)
        return x * (1.0 - _mean_like(law, x))

    def diffusion(t, x, law):
        return np.array([[0.5]])

    def jump(t, x, law, z):
        return -0.2 * float(z[0]) * np.asarray(x, dtype=float)

    def jac(t, x):
        return np.array([[1.0 - 2.0 * float(x[0])]])

    return ModelSpec(
        name="logistic_mf",
        dim=1,
        initial=np.array([0.5]),
        drift=drift,
        diffusion=diffusion,
        jump=jump,
        intensity=IntensityMeasure(np.array([[1.0]]), np.array([0.5])),
        drift_jacobian=jac,
        constants=ModelConstants(lipschitz=10.0, growth=10.0, jump_lipschitz=0.2),
    )


_REGISTRY = {
    "example11": _example11,
    "linear_gaussian": _linear_gaussian,
    "pure_jump": _pure_jump,
    "logistic_mf": _logistic_mf,
}


def list_models() -> list[str]:
    return sorted(_REGISTRY)


def get_model(name: str) -> ModelSpec:
    """Look up a built-in model, or load a .json model file by path."""
    if name in _REGISTRY:
        return _REGISTRY[name]()
    if str(name).endswith(".json"):
        return load_model_file(name)
    raise InvalidArgumentError(
        f"unknown model {name!r}; available: {', '.join(list_models())} "
        "or a path to a .json model file"
    )


def _matrix(entry, shape, what: str) -> np.ndarray:
    arr = np.asarray(entry, dtype=float)
    if arr.shape != shape:
        raise InvalidArgumentError(f"model file: {what} must have shape {shape}")
    if not np.isfinite(arr).all():
        raise InvalidArgumentError(f"model file: {what} must be finite")
    return arr


def load_model_file(path) -> ModelSpec:
    """Build a model from a JSON description of affine coefficients.

    Schema (all blocks optional except name/dim/initial):
      drift:     {"const": [d], "linear_x": [d][d], "linear_mean": [d][d]}
                 b(t, x, mu) = const + linear_x x + linear_mean mean(mu)
      diffusion: {"const": [d][d]}
      jump:      {"mark_matrix": [d][m]}      G(t, x, mu, z) = mark_matrix z
      intensity: {"atoms": [c][m], "masses": [c]}
      constants: {"lipschitz": .., "growth": .., "jump_lipschitz": ..}
    """
    path = FsPath(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise InvalidArgumentError(f"model file not found: {path}")
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"model file is not valid JSON: {exc}")
    for key in ("name", "dim", "initial"):
        if key not in raw:
            raise InvalidArgumentError(f"model file: missing required key {key!r}")
    d = int(raw["dim"])
    if d < 1:
        raise InvalidArgumentError("model file: dim must be >= 1")

    dr = raw.get("drift", {})
    const = _matrix(dr.get("const", np.zeros(d)), (d,), "drift.const")
    lin_x = _matrix(dr.get("linear_x", np.zeros((d, d))), (d, d), "drift.linear_x")
    lin_m = _matrix(
        dr.get("linear_mean", np.zeros((d, d))), (d, d), "drift.linear_mean"
    )

    def drift(t, x, law):
        x = np.asarray(x, dtype=float)
        m = np.broadcast_to(law.mean, x.shape)
        return const + x @ lin_x.T + m @ lin_m.T

    sig_mat = _matrix(
        raw.get("diffusion", {}).get("const", np.zeros((d, d))),
        (d, d),
        "diffusion.const",
    )

    def diffusion(t, x, law):
        return sig_mat

    jump = None
    intensity = None
    if "jump" in raw or "intensity" in raw:
        if "jump" not in raw or "intensity" not in raw:
            raise InvalidArgumentError("model file: jump and intensity come together")
        atoms = np.asarray(raw["intensity"].get("atoms"), dtype=float)
        masses = np.asarray(raw["intensity"].get("masses"), dtype=float)
        intensity = IntensityMeasure(atoms, masses)
        mark = _matrix(
            raw["jump"].get("mark_matrix"),
            (d, intensity.mark_dim),
            "jump.mark_matrix",
        )

        def jump(t, x, law, z, _mark=mark):
            x = np.asarray(x, dtype=float)
            return np.broadcast_to(_mark @ np.asarray(z, dtype=float), x.shape)

    consts = raw.get("constants", {})
    constants = ModelConstants(
        lipschitz=float(consts.get("lipschitz", 1.0)),
        growth=float(consts.get("growth", 1.0)),
        jump_lipschitz=float(consts.get("jump_lipschitz", 0.0)),
    )
    # The point-mass-coupled field is const + (linear_x + linear_mean) x.
    total = lin_x + lin_m

    return ModelSpec(
        name=str(raw["name"]),
        dim=d,
        initial=np.asarray(raw["initial"], dtype=float),
        drift=drift,
        diffusion=diffusion,
        jump=jump,
        intensity=intensity,
        drift_jacobian=lambda t, x: total,
        constants=constants,
    )
