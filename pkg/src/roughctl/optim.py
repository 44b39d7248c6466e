"""Costs and optimisation over step relaxed controls and parametric control families.

The cost of a control is ``J = int_0^T ell(r, x_r, u_r) dr`` (relaxed: the
inner integral against the cell weights), integrated with the trapezoid rule
and the control of each grid step held at both of its ends.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .doss import FlowSolver, control_lanes, solve_arrays
from .errors import (
    InstanceSizeError,
    InvalidParameterError,
    OptimizationFailureError,
    RoughCtlError,
    UnsupportedRegimeError,
)
from .fields import ScalarField
from .rde import ControlPath, young_euler_lanes
from .relaxed import StepRelaxedControl, chatter, n_simplex_points, simplex_points
from .signal import GridPath

_CHUNK = 512


@dataclass(frozen=True)
class CostSpec:
    ell: ScalarField
    quadrature: str = "trapezoid"
    bound: Optional[float] = None
    lipschitz: Optional[float] = None

    def __post_init__(self):
        if self.ell.arity != "ell_txu":
            raise InvalidParameterError(f"cost integrand must have arity ell_txu, got {self.ell.arity}")
        if self.quadrature != "trapezoid":
            raise InvalidParameterError(f"unsupported quadrature {self.quadrature!r}")

    def lipschitz_violations(self, box, n_pairs: int = 500, seed: int = 0) -> int:
        """Sampled pairs in ``box = ((t0, t1), (x0, x1), (u0, u1))`` breaking the declared bound."""
        if self.lipschitz is None:
            return 0
        rng = np.random.default_rng(seed)
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        p = lo + (hi - lo) * rng.random((n_pairs, 3))
        q = lo + (hi - lo) * rng.random((n_pairs, 3))
        q[:, 0] = p[:, 0]
        lhs = np.abs(self.ell(*p.T) - self.ell(*q.T))
        rhs = self.lipschitz * (np.abs(p[:, 1] - q[:, 1]) + np.abs(p[:, 2] - q[:, 2]))
        return int(np.sum(lhs > rhs * (1 + 1e-12) + 1e-15))


@dataclass
class ControlProblem:
    """State equation, driver, initial state and cost bundled together.

    ``mode`` selects the Doss-Sussmann stepping (``"rk4"`` or ``"picard"``)
    used whenever the diffusion is control-free.
    """

    spec: CostSpec
    sigma: ScalarField
    b: ScalarField
    g: GridPath
    x0: float
    mode: str = "rk4"
    name: str = ""
    _flow: Optional[FlowSolver] = field(default=None, repr=False)

    @property
    def u_free(self) -> bool:
        return self.sigma.arity == "sigma_tx"

    @property
    def n_steps(self) -> int:
        return self.g.n_steps

    @property
    def flow(self) -> FlowSolver:
        if self._flow is None:
            self._flow = FlowSolver.for_driver(self.sigma, self.g)
        return self._flow

    def states(self, atoms: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """States for ``(lanes, N, K)`` control arrays, shape (lanes, N + 1)."""
        if self.u_free:
            x, _, _ = solve_arrays(self.flow, self.b, self.g, atoms, weights, self.x0, self.mode)
            return x
        if atoms.shape[2] != 1:
            raise UnsupportedRegimeError("relaxed controls need a control-free diffusion")
        u = atoms[:, :, 0]
        return young_euler_lanes(self.sigma, self.b, self.g, np.hstack([u, u[:, -1:]]), self.x0)

    def cost_arrays(self, atoms: np.ndarray, weights: np.ndarray) -> np.ndarray:
        out = np.empty(atoms.shape[0])
        for s in range(0, atoms.shape[0], _CHUNK):
            a, w = atoms[s : s + _CHUNK], weights[s : s + _CHUNK]
            x = self.states(a, w)
            out[s : s + _CHUNK] = self._integrate(x, a, w)
        return out

    def _integrate(self, x, atoms, weights):
        t = self.g.times
        ell = self.spec.ell
        left = (weights * ell(t[None, :-1, None], x[:, :-1, None], atoms)).sum(axis=-1)
        right = (weights * ell(t[None, 1:, None], x[:, 1:, None], atoms)).sum(axis=-1)
        return 0.5 * self.g.dt * (left + right).sum(axis=1)

    def cost_controls(self, controls: Sequence) -> np.ndarray:
        atoms, weights = control_lanes(controls, self.n_steps, self.g.horizon)
        if any(isinstance(c, StepRelaxedControl) for c in controls) and not self.u_free:
            raise UnsupportedRegimeError("relaxed controls need a control-free diffusion")
        return self.cost_arrays(atoms, weights)

    def cost(self, control) -> float:
        return float(self.cost_controls([control])[0])


def _problem(spec, sigma, b, g, x0, mode="rk4") -> ControlProblem:
    return ControlProblem(spec, sigma, b, g, x0, mode)


def cost_ordinary(spec: CostSpec, sigma, b, g: GridPath, u, x0: float, mode: str = "rk4") -> float:
    """Cost of an ordinary control (a GridPath held on grid steps, or a constant)."""
    if isinstance(u, StepRelaxedControl):
        raise InvalidParameterError("cost_ordinary takes an ordinary control")
    return _problem(spec, sigma, b, g, x0, mode).cost(u)


def cost_relaxed(spec: CostSpec, sigma, b, g: GridPath, q: StepRelaxedControl, x0: float, mode: str = "rk4") -> float:
    if sigma.arity != "sigma_tx":
        raise UnsupportedRegimeError("relaxed costs need a control-free diffusion sigma(t, x)")
    return _problem(spec, sigma, b, g, x0, mode).cost(q)


# --- simplex projection ----------------------------------------------------


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (Michelot's algorithm)."""
    v = np.asarray(v, dtype=float)
    active = np.ones(v.size, dtype=bool)
    while True:
        theta = (v[active].sum() - 1.0) / active.sum()
        x = np.where(active, v - theta, 0.0)
        neg = active & (x < 0)
        if not neg.any():
            x = np.maximum(x, 0.0)
            return x / x.sum()
        active &= ~neg


def project_rows(w: np.ndarray) -> np.ndarray:
    out = np.empty_like(w)
    flat_in = w.reshape(-1, w.shape[-1])
    flat_out = out.reshape(-1, w.shape[-1])
    for i, row in enumerate(flat_in):
        flat_out[i] = project_simplex(row)
    return out


# --- reports -------------------------------------------------------------------


@dataclass
class OptimReport:
    method: str
    best_cost: float
    best_control: object
    trace: list
    iterations: int = 0
    oracle_cost: Optional[float] = None
    chattered_cost: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def oracle_gap(self) -> Optional[float]:
        if self.oracle_cost is None:
            return None
        return self.best_cost - self.oracle_cost

    def as_dict(self) -> dict:
        ctrl = self.best_control
        if isinstance(ctrl, StepRelaxedControl):
            ctrl = json.loads(ctrl.to_json())
        elif isinstance(ctrl, np.ndarray):
            ctrl = [float(c) for c in ctrl]
        return {
            "method": self.method,
            "best_cost": self.best_cost,
            "best_control": ctrl,
            "iterations": self.iterations,
            "oracle_cost": self.oracle_cost,
            "oracle_gap": self.oracle_gap,
            "chattered_cost": self.chattered_cost,
            "trace": [float(c) for c in self.trace],
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(["iter", "cost"])
        for i, c in enumerate(self.trace):
            writer.writerow([i, f"{c:.17g}"])
        return buf.getvalue()


# --- relaxed regime --------------------------------------------------------------


class _RelaxedObjective:
    """Cost as a function of a (lanes, M, k) stack of weight matrices."""

    def __init__(self, problem: ControlProblem, atoms, cells):
        if not problem.u_free:
            raise UnsupportedRegimeError("relaxed optimisation needs a control-free diffusion")
        self.problem = problem
        self.atoms = np.asarray(atoms, dtype=float)
        self.cells = np.asarray(cells, dtype=float)
        template = StepRelaxedControl(
            self.cells, self.atoms, np.full((self.cells.size - 1, self.atoms.size), 1.0 / self.atoms.size)
        )
        self.template = template
        self.step_cell = template.step_cells(problem.n_steps)
        self.evaluations = 0

    @property
    def shape(self):
        return self.cells.size - 1, self.atoms.size

    def __call__(self, ws: np.ndarray) -> np.ndarray:
        ws = np.asarray(ws, dtype=float).reshape((-1,) + self.shape)
        weights = ws[:, self.step_cell, :]
        atoms = np.broadcast_to(self.atoms, weights.shape)
        self.evaluations += ws.shape[0]
        return self.problem.cost_arrays(atoms, weights)

    def control(self, w) -> StepRelaxedControl:
        return self.template.with_weights(project_rows(np.asarray(w).reshape(self.shape)))


def _fd_gradient(obj: _RelaxedObjective, ws: np.ndarray, h: float) -> np.ndarray:
    s, m, k = ws.shape
    n = m * k
    eye = np.eye(n).reshape(n, m, k)
    plus = ws[:, None] + h * eye[None]
    minus = ws[:, None] - h * eye[None]
    vals = obj(np.concatenate([plus, minus], axis=1).reshape(-1, m, k)).reshape(s, 2 * n)
    return ((vals[:, :n] - vals[:, n:]) / (2 * h)).reshape(s, m, k)


def _starting_points(shape, n_random: int, seed: int, warm_starts=()):
    m, k = shape
    rng = np.random.default_rng(seed)
    starts = [np.full(shape, 1.0 / k)]
    starts += [rng.dirichlet(np.ones(k), size=m) for _ in range(n_random)]
    starts += [np.asarray(w, dtype=float).reshape(shape) for w in warm_starts]
    return np.array(starts)


def projected_gradient(
    obj: _RelaxedObjective,
    starts: np.ndarray,
    h: float = 1e-4,
    max_iter: int = 200,
    step_tol: float = 1e-6,
    armijo: float = 1e-4,
    max_backtracks: int = 40,
):
    """Projected gradient with Armijo backtracking, run in lockstep over starts.

    Returns ``(weights, costs, traces, iterations)`` per start.
    """
    w = project_rows(starts)
    cost = obj(w)
    traces = [[c] for c in cost]
    alpha = np.ones(w.shape[0])
    active = np.ones(w.shape[0], dtype=bool)
    iters = np.zeros(w.shape[0], dtype=int)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        grad = _fd_gradient(obj, w[idx], h)
        step = np.minimum(2 * alpha[idx], 1e3)
        pending = np.ones(idx.size, dtype=bool)
        new_w = w[idx].copy()
        new_c = cost[idx].copy()
        for _ in range(max_backtracks):
            p = np.flatnonzero(pending)
            if p.size == 0:
                break
            cand = project_rows(w[idx[p]] - step[p, None, None] * grad[p])
            c = obj(cand)
            move = ((w[idx[p]] - cand) ** 2).sum(axis=(1, 2))
            ok = c <= cost[idx[p]] - armijo / step[p] * move
            for j, good, cw, cc in zip(p, ok, cand, c):
                if good:
                    new_w[j], new_c[j] = cw, cc
                    pending[j] = False
            step[p[~ok]] *= 0.5
        for j, s in enumerate(idx):
            iters[s] += 1
            change = float(np.max(np.abs(new_w[j] - w[s])))
            if pending[j]:
                # no descent step found: stationary to working precision
                active[s] = False
                continue
            w[s], cost[s], alpha[s] = new_w[j], new_c[j], step[j]
            traces[s].append(cost[s])
            if change < step_tol:
                active[s] = False
    return w, cost, traces, iters


def exhaustive_relaxed(obj: _RelaxedObjective, resolution: int = 5, max_points: int = 10**5):
    """Best weights over the product of per-cell simplex grids (first minimum wins)."""
    m, k = obj.shape
    per_cell = n_simplex_points(k, resolution)
    total = per_cell**m
    if total > max_points:
        raise InstanceSizeError(f"simplex grid has {total} points, above the limit {max_points}")
    pts = simplex_points(k, resolution)
    best_cost, best_w = math.inf, None
    combos = itertools.product(range(per_cell), repeat=m)
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        ws = pts[np.array(chunk)]
        costs = obj(ws)
        i = int(np.argmin(costs))
        if costs[i] < best_cost:
            best_cost, best_w = float(costs[i]), ws[i]
    return best_w, best_cost, total


def optimize_relaxed(
    problem: ControlProblem,
    atoms,
    cells,
    method: str = "projected_gradient",
    n_random: int = 5,
    seed: int = 0,
    chatter_level: int = 16,
    warm_starts=(),
    max_iter: int = 200,
) -> OptimReport:
    obj = _RelaxedObjective(problem, atoms, cells)
    if method == "projected_gradient":
        starts = _starting_points(obj.shape, n_random, seed, warm_starts)
        w, cost, traces, iters = projected_gradient(obj, starts, max_iter=max_iter)
        best = int(np.argmin(cost))
        q = obj.control(w[best])
        best_cost = float(obj(q.weights)[0])
        trace = traces[best]
        n_iter = int(iters[best])
        extra = {"start_costs": [float(c) for c in cost]}
    elif method == "exhaustive":
        wbest, best_cost, total = exhaustive_relaxed(obj)
        q = obj.control(wbest)
        trace = [best_cost]
        n_iter = total
        extra = {"grid_points": total}
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    chat_cost = None
    if chatter_level:
        u, _ = chatter(q, chatter_level, problem.n_steps)
        chat_cost = problem.cost(u)
    extra["evaluations"] = obj.evaluations
    return OptimReport(method, best_cost, q, trace, n_iter, chattered_cost=chat_cost, extra=extra)


@dataclass
class InfComparison:
    relaxed_inf: float
    ordinary_inf: float
    gap: float
    scale: float
    enumeration_inf: float
    chattered: dict
    relaxed_report: OptimReport

    def as_dict(self) -> dict:
        return {
            "relaxed_inf": self.relaxed_inf,
            "ordinary_inf": self.ordinary_inf,
            "gap": self.gap,
            "scale": self.scale,
            "enumeration_inf": self.enumeration_inf,
            "chattered": {str(m): c for m, c in self.chattered.items()},
            "relaxed": self.relaxed_report.as_dict(),
        }


def enumerate_ordinary(problem: ControlProblem, atoms, cells, max_controls: int = 10**5):
    """Costs of every atom-valued control constant on the cells, in lexicographic order."""
    atoms = np.asarray(atoms, dtype=float)
    m = len(cells) - 1
    total = atoms.size**m
    if total > max_controls:
        raise InstanceSizeError(f"{total} piecewise-constant controls exceed the limit {max_controls}")
    template = StepRelaxedControl(cells, atoms, np.full((m, atoms.size), 1.0 / atoms.size))
    step_cell = template.step_cells(problem.n_steps)
    choices = np.array(list(itertools.product(range(atoms.size), repeat=m)), dtype=int)
    values = atoms[choices][:, step_cell][:, :, None]
    costs = problem.cost_arrays(values, np.ones_like(values))
    return choices, costs


def inf_comparison(
    problem: ControlProblem,
    atoms,
    cells,
    levels=(1, 2, 4, 8, 16),
    seed: int = 0,
) -> InfComparison:
    """Relaxed infimum against the best ordinary control found.

    The ordinary side is the minimum over every atom-valued control constant
    on the cells and over the chattered relaxed optimum at each level.  It is
    an upper bound on the true ordinary infimum.
    """
    atoms = np.asarray(atoms, dtype=float)
    choices, costs = enumerate_ordinary(problem, atoms, cells)
    i = int(np.argmin(costs))
    vertex = np.eye(atoms.size)[choices[i]]
    report = optimize_relaxed(problem, atoms, cells, seed=seed, warm_starts=[vertex], chatter_level=0)
    chattered = {}
    for m in levels:
        u, _ = chatter(report.best_control, m, problem.n_steps)
        chattered[m] = problem.cost(u)
    ordinary_inf = min(float(costs[i]), min(chattered.values()))
    scale = max(float(np.max(np.abs(costs))), 1e-300)
    return InfComparison(
        report.best_cost,
        ordinary_inf,
        ordinary_inf - report.best_cost,
        scale,
        float(costs[i]),
        chattered,
        report,
    )


# --- parametric regime -------------------------------------------------------------


@dataclass(frozen=True)
class ParametricFamily:
    """Controls ``u(t) = sum_j c_j e_j(t)`` with coefficients in ``[-c_max, c_max]^d``.

    ``poly`` uses ``e_j(t) = (t / T)**j``; ``fourier`` uses ``1, sin, cos,
    sin(2 .), cos(2 .), ...`` with period T.  Members are Lipschitz with
    constant ``L = c_max * sum_j sup |e_j'|``, so their mu-seminorm on
    ``[0, T]`` is at most ``L * T**(1 - mu)``.
    """

    basis: str
    dim: int
    c_max: float
    horizon: float = 1.0
    mu: float = 0.6

    def __post_init__(self):
        if self.basis not in ("poly", "fourier"):
            raise InvalidParameterError(f"unknown basis {self.basis!r}")
        if self.dim < 1 or not self.c_max > 0:
            raise InvalidParameterError("need dim >= 1 and c_max > 0")

    def _freq(self, j):
        return (j + 1) // 2

    def basis_values(self, t: np.ndarray) -> np.ndarray:
        s = np.asarray(t, dtype=float) / self.horizon
        rows = []
        for j in range(self.dim):
            if self.basis == "poly":
                rows.append(s**j)
            elif j == 0:
                rows.append(np.ones_like(s))
            else:
                w = 2 * math.pi * self._freq(j)
                rows.append(np.sin(w * s) if j % 2 else np.cos(w * s))
        return np.array(rows)

    @property
    def lipschitz(self) -> float:
        if self.basis == "poly":
            slopes = [j / self.horizon for j in range(self.dim)]
        else:
            slopes = [2 * math.pi * self._freq(j) / self.horizon for j in range(self.dim)]
        return self.c_max * sum(slopes)

    @property
    def bound(self) -> float:
        return self.lipschitz * self.horizon ** (1 - self.mu)

    def sample(self, coeffs: np.ndarray, n_steps: int) -> np.ndarray:
        t = np.arange(n_steps + 1) * self.horizon / n_steps
        return np.atleast_2d(coeffs) @ self.basis_values(t)

    def control(self, coeffs, n_steps: int) -> ControlPath:
        vals = self.sample(np.asarray(coeffs, dtype=float), n_steps)[0]
        return ControlPath(self.horizon, vals, None, "u", self.mu, self.bound)


class _ParametricObjective:
    def __init__(self, problem: ControlProblem, family: ParametricFamily):
        self.problem = problem
        self.family = family
        self.failures = 0
        self.evaluations = 0

    def batch(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.atleast_2d(coeffs)
        u = self.family.sample(coeffs, self.problem.n_steps)
        x = young_euler_lanes(self.problem.sigma, self.problem.b, self.problem.g, u, self.problem.x0)
        held = u[:, :-1, None]
        self.evaluations += coeffs.shape[0]
        return self.problem._integrate(x, held, np.ones_like(held))

    def __call__(self, c) -> float:
        try:
            return float(self.batch(np.asarray(c, dtype=float))[0])
        except RoughCtlError:
            self.failures += 1
            self.evaluations += 1
            return math.inf


def _nelder_mead(obj: _ParametricObjective, family: ParametricFamily, x_init=None, restarts: int = 3):
    d = family.dim
    box = [(-family.c_max, family.c_max)] * d
    x = np.zeros(d) if x_init is None else np.clip(np.asarray(x_init, dtype=float), -family.c_max, family.c_max)
    fx = obj(x)
    trace = [fx]

    def record(xk):
        val = obj(xk)
        trace.append(min(trace[-1], val))

    for _ in range(restarts + 1):
        simplex = [x.copy()]
        for i in range(d):
            e = x.copy()
            e[i] += 0.1 * family.c_max if x[i] + 0.1 * family.c_max <= family.c_max else -0.1 * family.c_max
            simplex.append(e)
        res = minimize(
            obj,
            x,
            method="Nelder-Mead",
            bounds=box,
            callback=record,
            options={"initial_simplex": np.array(simplex), "xatol": 1e-9, "fatol": 1e-15, "maxiter": 400 * d},
        )
        nx = np.clip(res.x, -family.c_max, family.c_max)
        nf = obj(nx)
        improved = nf < fx - 1e-15
        if nf <= fx:
            x, fx = nx, nf
        trace.append(fx)
        if not improved:
            break
    return x, fx, trace


def _grid_search(obj: _ParametricObjective, family: ParametricFamily, points: int = 11, rounds: int = 8):
    d = family.dim
    if d > 3:
        raise InvalidParameterError("the grid oracle handles at most 3 coefficients")
    lo = np.full(d, -family.c_max)
    hi = np.full(d, family.c_max)
    trace = []
    best_x, best_f = None, math.inf
    for _ in range(rounds + 1):
        axes = [np.linspace(lo[i], hi[i], points) for i in range(d)]
        grid = np.array(list(itertools.product(*axes)))
        vals = obj.batch(grid)
        vals[~np.isfinite(vals)] = np.inf
        i = int(np.argmin(vals))
        if vals[i] < best_f:
            best_x, best_f = grid[i], float(vals[i])
        trace.append(best_f)
        spacing = (hi - lo) / (points - 1)
        lo = np.maximum(best_x - spacing, -family.c_max)
        hi = np.minimum(best_x + spacing, family.c_max)
    return best_x, best_f, trace


def optimize_parametric(
    problem: ControlProblem, family: ParametricFamily, method: str = "nelder_mead", x_init=None
) -> OptimReport:
    """Minimise the cost over a coefficient box; states by the Young-Euler scheme.

    Nelder-Mead starts from ``x_init`` (default: the box centre).
    """
    obj = _ParametricObjective(problem, family)
    if method == "nelder_mead":
        x, fx, trace = _nelder_mead(obj, family, x_init)
    elif method == "grid":
        x, fx, trace = _grid_search(obj, family)
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    if not math.isfinite(fx):
        raise OptimizationFailureError(f"all {obj.evaluations} cost evaluations failed")
    return OptimReport(
        method,
        float(fx),
        np.asarray(x, dtype=float),
        trace,
        len(trace) - 1,
        extra={"evaluations": obj.evaluations, "failures": obj.failures, "seminorm_bound": family.bound},
    )
