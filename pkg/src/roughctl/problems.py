"""Named coefficient fields and the shipped control instances.

Configuration files refer to coefficients by the names registered here; no
expression language is parsed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameterError
from .fields import ScalarField, constant_field
from .optim import ControlProblem, CostSpec, ParametricFamily
from .relaxed import uniform_cells
from .signal import GridPath


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _sigma_linear(scale: float = 1.0) -> ScalarField:
    return ScalarField(
        lambda t, x: scale * x,
        "sigma_tx",
        {"t": lambda t, x: _zeros(x), "x": lambda t, x: scale * _ones(x), "xx": lambda t, x: _zeros(x)},
        time_dependent=False,
        name="linear",
    )


def _sigma_sine(amplitude: float = 1.0, shift: float = 2.0, name: str = "sine_diffusion") -> ScalarField:
    return ScalarField(
        lambda t, x: amplitude * np.sin(x) + shift,
        "sigma_tx",
        {
            "t": lambda t, x: _zeros(x),
            "x": lambda t, x: amplitude * np.cos(x),
            "xx": lambda t, x: -amplitude * np.sin(x),
        },
        time_dependent=False,
        bounds={"sup": abs(amplitude) + abs(shift), "sup_x": abs(amplitude), "sup_xx": abs(amplitude)},
        name=name,
    )


def _sigma_modulated(scale: float = 0.5) -> ScalarField:
    # time-dependent: exercises the general flow with its r-derivative
    return ScalarField(
        lambda t, x: (1 + scale * np.cos(np.pi * t)) * (0.5 * np.sin(x) + 1),
        "sigma_tx",
        {
            "x": lambda t, x: (1 + scale * np.cos(np.pi * t)) * 0.5 * np.cos(x),
            "xx": lambda t, x: -(1 + scale * np.cos(np.pi * t)) * 0.5 * np.sin(x),
        },
        time_dependent=True,
        name="modulated",
    )


def _sigma_control(scale: float = 0.1) -> ScalarField:
    return ScalarField(
        lambda t, x, u: scale * u + 0.0 * x,
        "sigma_txu",
        {"x": lambda t, x, u: _zeros(x + u), "u": lambda t, x, u: scale * _ones(x + u)},
        time_dependent=False,
        name="control_linear",
    )


def _sigma_control_sine(scale: float = 0.3) -> ScalarField:
    return ScalarField(
        lambda t, x, u: 1.0 + scale * np.sin(x + u),
        "sigma_txu",
        time_dependent=False,
        name="control_sine",
    )


def _b(fn, name) -> ScalarField:
    return ScalarField(fn, "b_txu", time_dependent=False, name=name)


def _ell(fn, name) -> ScalarField:
    return ScalarField(fn, "ell_txu", time_dependent=False, name=name)


SIGMA = {
    "zero": lambda: constant_field(0.0, "sigma_tx", "zero"),
    "linear": _sigma_linear,
    "sine_diffusion": _sigma_sine,
    "half_sine": lambda: _sigma_sine(0.5, 0.0, "half_sine"),
    "modulated": _sigma_modulated,
    "control_linear": _sigma_control,
    "control_sine": _sigma_control_sine,
}

DRIFT = {
    "zero": lambda: constant_field(0.0, "b_txu", "zero"),
    "control": lambda: _b(lambda t, x, u: u + 0.0 * x, "control"),
    "relax_to_control": lambda: _b(lambda t, x, u: u - x, "relax_to_control"),
    "decay": lambda: _b(lambda t, x, u: -x + 0.0 * u, "decay"),
}

COST = {
    "one": lambda: _ell(lambda t, x, u: 1.0 + 0.0 * (x + u), "one"),
    "state_sq": lambda: _ell(lambda t, x, u: x * x + 0.0 * u, "state_sq"),
    "convex_mix": lambda: _ell(lambda t, x, u: x * x + 0.1 * (u - 0.25) ** 2, "convex_mix"),
    "target_mix": lambda: _ell(lambda t, x, u: (u - 0.3) ** 2 + 0.0 * x, "target_mix"),
    "control_sq": lambda: _ell(lambda t, x, u: u * u + 0.0 * x, "control_sq"),
    "track_one": lambda: _ell(lambda t, x, u: (x - 1.0) ** 2 + 0.0 * u, "track_one"),
    "track_half": lambda: _ell(lambda t, x, u: (x - 0.5) ** 2 + 0.1 * u * u, "track_half"),
    "atom_value": lambda: _ell(lambda t, x, u: u + 0.0 * x, "atom_value"),
}


def _lookup(table: dict, kind: str, name: str) -> ScalarField:
    try:
        return table[name]()
    except KeyError:
        raise InvalidParameterError(
            f"unknown {kind} {name!r}; known: {', '.join(sorted(table))}"
        ) from None


def sigma_field(name: str) -> ScalarField:
    return _lookup(SIGMA, "sigma", name)


def drift_field(name: str) -> ScalarField:
    return _lookup(DRIFT, "drift", name)


def cost_field(name: str) -> ScalarField:
    return _lookup(COST, "cost", name)


@dataclass(frozen=True)
class RelaxedInstance:
    """A relaxed-regime instance: coefficients, atoms and cells on [0, T]."""

    name: str
    sigma: str
    drift: str
    cost: str
    x0: float
    atoms: tuple
    n_cells: int
    horizon: float = 1.0
    u_range: Optional[tuple] = None

    def problem(self, g: GridPath, mode: str = "picard") -> ControlProblem:
        return ControlProblem(
            CostSpec(cost_field(self.cost)), sigma_field(self.sigma), drift_field(self.drift), g, self.x0, mode, self.name
        )

    @property
    def cells(self) -> np.ndarray:
        return uniform_cells(self.horizon, self.n_cells)


@dataclass(frozen=True)
class ParametricInstance:
    name: str
    sigma: str
    drift: str
    cost: str
    x0: float
    basis: str
    dim: int
    c_max: float
    horizon: float = 1.0

    def problem(self, g: GridPath) -> ControlProblem:
        return ControlProblem(
            CostSpec(cost_field(self.cost)), sigma_field(self.sigma), drift_field(self.drift), g, self.x0, name=self.name
        )

    def family(self, mu: float = 0.6) -> ParametricFamily:
        return ParametricFamily(self.basis, self.dim, self.c_max, self.horizon, mu)


RELAXED_INSTANCES = {
    # steering toward 0 from x0 = 1 with U = [-1, 0]; optimum u = -1, cost 1/3
    "steering": RelaxedInstance("steering", "zero", "control", "state_sq", 1.0, (-1.0, 0.0), 4),
    # strictly convex in the atom; the relaxed optimum (0.6, 0.4) keeps x = 0
    "convex_mix": RelaxedInstance("convex_mix", "half_sine", "control", "convex_mix", 0.0, (-1.0, 1.5), 2),
    "state_free": RelaxedInstance("state_free", "zero", "zero", "target_mix", 0.0, (0.0, 0.5, 1.0), 2),
}

PARAMETRIC_INSTANCES = {
    "control_energy": ParametricInstance("control_energy", "sine_diffusion", "zero", "control_sq", 0.0, "poly", 2, 1.0),
    "tracking": ParametricInstance("tracking", "control_linear", "control", "track_half", 0.0, "poly", 1, 2.0),
    "noisy_target": ParametricInstance("noisy_target", "control_linear", "zero", "track_one", 0.0, "fourier", 3, 1.0),
}


def relaxed_instance(name: str) -> RelaxedInstance:
    try:
        return RELAXED_INSTANCES[name]
    except KeyError:
        raise InvalidParameterError(f"unknown relaxed instance {name!r}") from None


def parametric_instance(name: str) -> ParametricInstance:
    try:
        return PARAMETRIC_INSTANCES[name]
    except KeyError:
        raise InvalidParameterError(f"unknown parametric instance {name!r}") from None
