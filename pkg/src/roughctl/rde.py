"""Explicit Young-Euler scheme for equations whose diffusion depends on the control.

    x_t = x_0 + int sigma(r, x_r, u_r) dg_r + int b(r, x_r, u_r) dr

The control must be Hoelder of an index ``mu`` with ``mu + beta > 1``, where
``beta`` is the index of the driver; :class:`ControlPath` carries that
declaration and checks it on the grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DivergenceError, InvalidParameterError
from .fields import ScalarField
from .signal import GridPath, holder_seminorm


@dataclass(frozen=True, eq=False)
class ControlPath(GridPath):
    """A control with declared Hoelder index ``mu`` and seminorm bound ``bound``."""

    mu: float = 1.0
    bound: float = float("inf")

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.mu <= 1:
            raise InvalidParameterError(f"control index must lie in (0, 1], got {self.mu}")
        if np.isfinite(self.bound):
            measured = holder_seminorm(self, self.mu).seminorm
            if measured > self.bound * (1 + 1e-9):
                raise InvalidParameterError(
                    f"control seminorm {measured:.6g} exceeds declared bound {self.bound:.6g}"
                )
        if self.holder_index is None:
            object.__setattr__(self, "holder_index", self.mu)

    @classmethod
    def from_path(cls, path: GridPath, mu: float, bound: float = float("inf")) -> "ControlPath":
        return cls(path.horizon, path.values, path.holder_index, path.label, mu, bound)


def _as_txu(sigma: ScalarField) -> ScalarField:
    return sigma.as_txu() if sigma.arity == "sigma_tx" else sigma


def _check_regime(g: GridPath, u: GridPath):
    g.check_grid(u)
    beta = g.holder_index
    mu = getattr(u, "mu", u.holder_index)
    if beta is not None and not beta > 0.5:
        raise InvalidParameterError(f"driver index {beta} must exceed 1/2")
    if beta is not None and mu is not None and not mu + beta > 1:
        raise InvalidParameterError(f"control index {mu} + driver index {beta} must exceed 1")


def young_euler_solve(
    sigma: ScalarField, b: ScalarField, g: GridPath, u: GridPath, x0: float
) -> GridPath:
    """``x_{i+1} = x_i + sigma(t_i, x_i, u_i) dg_i + b(t_i, x_i, u_i) dt``."""
    _check_regime(g, u)
    sig = _as_txu(sigma)
    t = g.times
    dg = np.diff(g.values)
    uv = u.values
    dt = g.dt
    x = np.empty(g.n_steps + 1)
    x[0] = x0
    xi = float(x0)
    for i in range(g.n_steps):
        xi = xi + sig(t[i], xi, uv[i]) * dg[i] + b(t[i], xi, uv[i]) * dt
        if not np.isfinite(xi):
            raise DivergenceError(f"state not finite at step {i + 1}", index=i + 1)
        x[i + 1] = xi
    return GridPath(g.horizon, x, label="x")


def young_euler_lanes(
    sigma: ScalarField, b: ScalarField, g: GridPath, controls: np.ndarray, x0: float
) -> np.ndarray:
    """Euler scheme for a stack of controls sampled on the grid, shape (lanes, N + 1)."""
    sig = _as_txu(sigma)
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    t = g.times
    dg = np.diff(g.values)
    dt = g.dt
    x = np.empty_like(controls)
    x[:, 0] = x0
    xi = x[:, 0].copy()
    for i in range(g.n_steps):
        ui = controls[:, i]
        xi = xi + sig(t[i], xi, ui) * dg[i] + b(t[i], xi, ui) * dt
        bad = ~np.isfinite(xi)
        if bad.any():
            raise DivergenceError(f"state not finite at step {i + 1}", index=i + 1)
        x[:, i + 1] = xi
    return x


def _inf_mu_norm(path: GridPath, mu: float) -> float:
    return holder_seminorm(path, mu).norm


def continuity_probe(
    sigma: ScalarField,
    b: ScalarField,
    g: GridPath,
    u: ControlPath,
    perturbations: Sequence[GridPath],
    mu_prime: float,
    x0: float = 0.0,
):
    """Distances ``(|u - u_n|, |x^u - x^{u_n}|)`` in the ``(sup + mu')``-norm.

    Returns a list of pairs, one per perturbed control.
    """
    beta = g.holder_index if g.holder_index is not None else 1.0
    if not (1 - beta < mu_prime < u.mu):
        raise InvalidParameterError(
            f"mu' = {mu_prime} must lie in ({1 - beta:.4f}, {u.mu:.4f})"
        )
    stack = np.vstack([u.values] + [p.values for p in perturbations])
    for p in perturbations:
        _check_regime(g, p)
    xs = young_euler_lanes(sigma, b, g, stack, x0)
    base = GridPath(g.horizon, xs[0])
    out = []
    for p, xp in zip(perturbations, xs[1:]):
        du = _inf_mu_norm(GridPath(g.horizon, u.values - p.values), mu_prime)
        dx = _inf_mu_norm(GridPath(g.horizon, base.values - xp), mu_prime)
        out.append((du, dx))
    return out
