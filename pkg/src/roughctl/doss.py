"""Doss-Sussmann solution of scalar Young equations with u-free diffusion.

For ``dx = sigma(t, x) dg + b(t, x, u) dt`` let ``phi(r, g, y)`` be the flow

    d phi / d g = sigma(r, phi),    phi(r, 0, y) = y.

Then ``x_t = phi(t, g_t - g_0, y_t)`` where ``y`` solves the ordinary ODE

    y' = h(t, g_t - g_0, u_t, y) = (b(t, phi, u_t) - phi_r) / phi_y

with ``y_0 = x_0``.  A relaxed control replaces ``b(t, phi, u)`` by its
average over the cell weights.

Controls are held at their left value on each grid step, both for ordinary
and for step relaxed controls, so that a Dirac embedding reproduces the
ordinary solve bit for bit.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    ConvergenceError,
    DomainError,
    IncompatibleGridError,
    InvalidParameterError,
    NumericalFailureError,
    UnsupportedRegimeError,
)
from .fields import ScalarField
from .relaxed import StepRelaxedControl
from .signal import GridPath

_MAX_REBUILDS = 12


class FlowValue(tuple):
    """``(phi, dphi_dy, dphi_dr)`` with named access."""

    __slots__ = ()

    def __new__(cls, phi, dphi_dy, dphi_dr):
        return super().__new__(cls, (phi, dphi_dy, dphi_dr))

    phi = property(lambda self: self[0])
    dphi_dy = property(lambda self: self[1])
    dphi_dr = property(lambda self: self[2])


@dataclass
class SolveDiagnostics:
    mode: str
    picard_iterations: int = 0
    final_contraction: float = float("nan")
    max_y_step: float = 0.0
    composed_sup_norm: float = float("nan")
    table_rebuilds: int = 0
    y: Optional[GridPath] = None

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "picard_iterations": self.picard_iterations,
            "final_contraction": self.final_contraction,
            "max_y_step": self.max_y_step,
            "composed_sup_norm": self.composed_sup_norm,
            "table_rebuilds": self.table_rebuilds,
        }


class _TableMiss(Exception):
    def __init__(self, y):
        super().__init__("y outside the flow table")
        self.y = y


class _FlowTable:
    """Flow of an autonomous field at a fixed set of driver values.

    Row ``j`` holds ``phi``, ``phi_y`` and ``phi_yy`` at ``g = gs[j]`` on a
    uniform y lattice; lookups are cubic Hermite in y.
    """

    def __init__(self, gs, y_lo, dy, phi, psi, chi):
        self.gs = gs
        self.y_lo = y_lo
        self.dy = dy
        self.phi = phi
        self.psi = psi
        self.chi = chi
        self.ny = phi.shape[1]

    @property
    def y_hi(self):
        return self.y_lo + (self.ny - 1) * self.dy

    def lookup(self, rows, y):
        y = np.asarray(y, dtype=float)
        pos = (y - self.y_lo) / self.dy
        k = np.floor(pos)
        if not np.all(np.isfinite(pos)):
            raise NumericalFailureError("nonfinite y reached the flow table")
        if np.any(k < 0) or np.any(k > self.ny - 2):
            raise _TableMiss(y)
        k = k.astype(np.intp)
        t = pos - k
        t2 = t * t
        omt = 1.0 - t
        h00 = (1 + 2 * t) * omt * omt
        h10 = t * omt * omt * self.dy
        h01 = t2 * (3 - 2 * t)
        h11 = -t2 * omt * self.dy
        p0 = self.phi[rows, k]
        p1 = self.phi[rows, k + 1]
        s0 = self.psi[rows, k]
        s1 = self.psi[rows, k + 1]
        c0 = self.chi[rows, k]
        c1 = self.chi[rows, k + 1]
        phi = h00 * p0 + h10 * s0 + h01 * p1 + h11 * s1
        psi = h00 * s0 + h10 * c0 + h01 * s1 + h11 * c1
        return phi, psi


class FlowSolver:
    """Flow ``phi(r, g, y)`` of ``d phi/dg = sigma(r, phi)`` and its derivatives.

    ``flow_eval`` is the accurate scalar route (adaptive Runge-Kutta at
    ``tol_flow``).  Solvers use the vectorised routes: for an autonomous
    ``sigma`` a per-driver table swept once along the sorted driver values,
    otherwise fixed-step RK4 in ``g`` with step at most ``g_step``.

    Tables are cached per driver; the cache is guarded by a lock.
    """

    def __init__(
        self,
        sigma: ScalarField,
        g_range=None,
        tol_flow: float = 1e-10,
        h_fd: float = 1e-5,
        y_step: float = 0.02,
        g_step: float = 0.01,
    ):
        if sigma.arity == "sigma_txu":
            raise UnsupportedRegimeError(
                "the Doss-Sussmann construction needs a control-free diffusion sigma(t, x)"
            )
        if sigma.arity != "sigma_tx":
            raise InvalidParameterError(f"sigma must have arity sigma_tx, got {sigma.arity}")
        if g_range is not None and not g_range[0] <= 0.0 <= g_range[1]:
            raise InvalidParameterError("g_range must contain 0")
        self.sigma = sigma
        self.g_range = None if g_range is None else (float(g_range[0]), float(g_range[1]))
        self.tol_flow = tol_flow
        self.h_fd = h_fd
        self.y_step = y_step
        self.g_step = g_step
        self._lock = threading.Lock()
        self._tables: dict = {}

    @classmethod
    def for_driver(cls, sigma: ScalarField, g: GridPath, pad: float = 0.1, **kwargs) -> "FlowSolver":
        """Solver whose g-range covers the increments of ``g`` plus ``pad`` of their span."""
        inc = g.values - g.values[0]
        lo, hi = min(inc.min(), 0.0), max(inc.max(), 0.0)
        span = max(hi - lo, 1e-12)
        return cls(sigma, (lo - pad * span, hi + pad * span), **kwargs)

    @property
    def autonomous(self) -> bool:
        return not self.sigma.time_dependent

    def _check_g(self, g):
        if self.g_range is None:
            return
        g = np.asarray(g)
        lo, hi = self.g_range
        if np.any(g < lo - 1e-12) or np.any(g > hi + 1e-12):
            raise DomainError(f"g outside the flow range [{lo:.6g}, {hi:.6g}]")

    # --- scalar adaptive route ----------------------------------------------

    def _ivp(self, r, g, y, closed_form):
        sig = self.sigma

        if closed_form:
            def rhs(s, z):
                return [sig(r, z[0]), sig.partial("x", r, z[0])]
            z0 = [y, 0.0]
        else:
            def rhs(s, z):
                return [sig(r, z[0]), sig.partial("x", r, z[0]) * z[1]]
            z0 = [y, 1.0]
        tol = self.tol_flow
        sol = solve_ivp(rhs, (0.0, g), z0, method="DOP853", rtol=tol, atol=tol * 1e-2)
        if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
            raise NumericalFailureError(f"flow ODE failed at r={r}, g={g}, y={y}: {sol.message}")
        phi, aux = sol.y[:, -1]
        return float(phi), float(math.exp(aux) if closed_form else aux)

    def flow_eval(self, r: float, g: float, y: float, dy_method: str = "auto") -> FlowValue:
        """``(phi, dphi/dy, dphi/dr)`` at one point.

        ``dy_method="closed_form"`` computes ``dphi/dy = exp(int_0^g
        sigma_x(r, phi(r, s, y)) ds)``; ``"variational"`` integrates the
        linearised ODE.  ``"auto"`` picks the first for autonomous sigma.
        """
        self._check_g(g)
        if dy_method == "auto":
            dy_method = "closed_form" if self.autonomous else "variational"
        if dy_method not in ("closed_form", "variational"):
            raise InvalidParameterError(f"unknown dy_method {dy_method!r}")
        if g == 0.0:
            return FlowValue(float(y), 1.0, 0.0)
        closed = dy_method == "closed_form"
        phi, psi = self._ivp(r, g, y, closed)
        if self.autonomous:
            dr = 0.0
        else:
            up, _ = self._ivp(r + self.h_fd, g, y, closed)
            dn, _ = self._ivp(r - self.h_fd, g, y, closed)
            dr = (up - dn) / (2 * self.h_fd)
        return FlowValue(phi, psi, dr)

    # --- vectorised fixed-step route ----------------------------------------

    def _rk4_flow(self, r, g, y):
        sig = self.sigma
        r, g, y = np.broadcast_arrays(np.asarray(r, float), np.asarray(g, float), np.asarray(y, float))
        n = max(4, int(math.ceil(np.max(np.abs(g), initial=0.0) / self.g_step)))
        d = g / n
        phi = y.astype(float).copy()
        psi = np.ones_like(phi)
        for _ in range(n):
            k1 = sig(r, phi)
            j1 = sig.partial("x", r, phi) * psi
            p2 = phi + 0.5 * d * k1
            q2 = psi + 0.5 * d * j1
            k2 = sig(r, p2)
            j2 = sig.partial("x", r, p2) * q2
            p3 = phi + 0.5 * d * k2
            q3 = psi + 0.5 * d * j2
            k3 = sig(r, p3)
            j3 = sig.partial("x", r, p3) * q3
            p4 = phi + d * k3
            q4 = psi + d * j3
            k4 = sig(r, p4)
            j4 = sig.partial("x", r, p4) * q4
            phi = phi + d / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            psi = psi + d / 6 * (j1 + 2 * j2 + 2 * j3 + j4)
        return phi, psi

    def evaluate(self, r, g, y):
        """Vectorised ``(phi, phi_y, phi_r)`` by fixed-step RK4 (any sigma)."""
        self._check_g(g)
        phi, psi = self._rk4_flow(r, g, y)
        if self.autonomous:
            dr = np.zeros_like(phi)
        else:
            up, _ = self._rk4_flow(np.asarray(r) + self.h_fd, g, y)
            dn, _ = self._rk4_flow(np.asarray(r) - self.h_fd, g, y)
            dr = (up - dn) / (2 * self.h_fd)
        if not (np.all(np.isfinite(phi)) and np.all(psi > 0)):
            raise NumericalFailureError("flow evaluation lost finiteness or monotonicity in y")
        return phi, psi, dr

    # --- tables for autonomous sigma ------------------------------------------

    def table(self, gs: np.ndarray, y_lo: float, y_hi: float) -> _FlowTable:
        """Flow table at the driver values ``gs`` (sorted, unique, containing 0)."""
        if not self.autonomous:
            raise InvalidParameterError("flow tables need a time-independent sigma")
        key = (hash(gs.tobytes()), gs.size)
        with self._lock:
            cached = self._tables.get(key)
        if cached is not None:
            if cached.y_lo <= y_lo and cached.y_hi >= y_hi:
                return cached
            y_lo, y_hi = min(y_lo, cached.y_lo), max(y_hi, cached.y_hi)
        self._check_g(gs)
        dy = self.y_step
        ny = int(math.ceil((y_hi - y_lo) / dy)) + 1
        ys = y_lo + dy * np.arange(ny)
        phi = np.empty((gs.size, ny))
        psi = np.empty_like(phi)
        chi = np.empty_like(phi)
        zero = int(np.searchsorted(gs, 0.0))
        phi[zero], psi[zero], chi[zero] = ys, 1.0, 0.0
        for order in (range(zero + 1, gs.size), range(zero - 1, -1, -1)):
            state = (ys.copy(), np.ones(ny), np.zeros(ny))
            prev = 0.0
            for j in order:
                state = self._sweep(state, prev, gs[j])
                prev = gs[j]
                phi[j], psi[j], chi[j] = state
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(chi))):
            raise NumericalFailureError("flow table has nonfinite entries; y range too wide")
        if not np.all(psi > 0):
            raise NumericalFailureError("flow derivative in y is not positive")
        tab = _FlowTable(gs, y_lo, dy, phi, psi, chi)
        with self._lock:
            if len(self._tables) > 8:
                self._tables.clear()
            self._tables[key] = tab
        return tab

    def _sweep(self, state, g0, g1):
        sig = self.sigma
        n = max(1, int(math.ceil(abs(g1 - g0) / self.g_step)))
        d = (g1 - g0) / n
        phi, psi, chi = state

        def rhs(p, s, c):
            sx = sig.partial("x", 0.0, p)
            return sig(0.0, p), sx * s, sig.partial("xx", 0.0, p) * s * s + sx * c

        for _ in range(n):
            a1, b1, c1 = rhs(phi, psi, chi)
            a2, b2, c2 = rhs(phi + 0.5 * d * a1, psi + 0.5 * d * b1, chi + 0.5 * d * c1)
            a3, b3, c3 = rhs(phi + 0.5 * d * a2, psi + 0.5 * d * b2, chi + 0.5 * d * c2)
            a4, b4, c4 = rhs(phi + d * a3, psi + d * b3, chi + d * c3)
            phi = phi + d / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
            psi = psi + d / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
            chi = chi + d / 6 * (c1 + 2 * c2 + 2 * c3 + c4)
        return phi, psi, chi


# --- the transformed drift --------------------------------------------------


def _mixed_b(b: ScalarField, t, phi, atoms, weights):
    """``sum_k w_k b(t, phi, a_k)`` with lanes on axis 0 and atoms on the last axis."""
    return (weights * b(t, phi[..., None], atoms)).sum(axis=-1)


def transformed_drift(
    fs: FlowSolver, b: ScalarField, r: float, g: float, u_or_q, y: float, atoms=None
) -> float:
    """``h = (B - phi_r) / phi_y`` for an atom ``u`` or cell weights ``q`` over ``atoms``."""
    phi, psi, dr = fs.flow_eval(r, g, y)
    if atoms is None:
        big_b = float(b(r, phi, u_or_q))
    else:
        w = np.asarray(u_or_q, dtype=float)
        a = np.asarray(atoms, dtype=float)
        if w.shape != a.shape:
            raise InvalidParameterError("weights and atoms differ in length")
        big_b = float(np.sum(w * b(r, phi, a)))
    return (big_b - dr) / psi


# --- lane arrays --------------------------------------------------------------


def control_lanes(controls, n_steps: int, horizon: Optional[float] = None):
    """Stack controls into ``(atoms, weights)`` arrays of shape (lanes, N, K).

    An ordinary control (GridPath) contributes its left value on each step
    with weight 1; a step relaxed control contributes its atoms with the
    weights of the cell containing the step.  Lanes are padded with
    zero-weight copies of their first atom to a common K.
    """
    rows = []
    for c in controls:
        if isinstance(c, StepRelaxedControl):
            if horizon is not None and not math.isclose(c.horizon, horizon, rel_tol=1e-12):
                raise IncompatibleGridError("relaxed control and driver horizons differ")
            w = c.step_weights(n_steps)
            a = np.broadcast_to(c.atoms, w.shape)
        elif isinstance(c, GridPath):
            if c.n_steps != n_steps:
                raise IncompatibleGridError("control and driver grids differ")
            a = c.values[:-1, None]
            w = np.ones_like(a)
        else:
            a = np.full((n_steps, 1), float(c))
            w = np.ones_like(a)
        rows.append((a, w))
    kmax = max(a.shape[1] for a, _ in rows)
    atoms = np.empty((len(rows), n_steps, kmax))
    weights = np.zeros_like(atoms)
    for i, (a, w) in enumerate(rows):
        k = a.shape[1]
        atoms[i, :, :k] = a
        atoms[i, :, k:] = a[:, :1]
        weights[i, :, :k] = w
    return atoms, weights


class _Sampler:
    """Flow values at grid nodes and step midpoints of one driver."""

    def __init__(self, fs: FlowSolver, g: GridPath, y_lo: float, y_hi: float):
        self.fs = fs
        self.times = g.times
        self.dt = g.dt
        inc = g.values - g.values[0]
        self.g_node = inc
        self.g_mid = 0.5 * (inc[:-1] + inc[1:])
        self.rebuilds = 0
        if fs.autonomous:
            allg = np.concatenate([inc, self.g_mid, [0.0]])
            gs, inv = np.unique(allg, return_inverse=True)
            n = inc.size
            self.gs = gs
            self.row_node = inv[:n]
            self.row_mid = inv[n : 2 * n - 1]
            self.tab = fs.table(gs, y_lo, y_hi)

    def widen(self, y):
        tab = self.tab
        y = y[np.isfinite(y)]
        lo = min(tab.y_lo, float(y.min()) if y.size else tab.y_lo)
        hi = max(tab.y_hi, float(y.max()) if y.size else tab.y_hi)
        margin = max(1.0, 0.5 * (hi - lo))
        self.tab = self.fs.table(self.gs, lo - margin, hi + margin)
        self.rebuilds += 1

    def node(self, i, y):
        if self.fs.autonomous:
            phi, psi = self.tab.lookup(self.row_node[i], y)
            return phi, psi, 0.0
        return self.fs.evaluate(self.times[i], self.g_node[i], y)

    def mid(self, i, y):
        if self.fs.autonomous:
            phi, psi = self.tab.lookup(self.row_mid[i], y)
            return phi, psi, 0.0
        return self.fs.evaluate(self.times[i] + 0.5 * self.dt, self.g_mid[i], y)


def _drift(sampler, b, t, which, i, y, atoms, weights):
    phi, psi, dr = which(i, y)
    return (_mixed_b(b, t, phi, atoms, weights) - dr) / psi


def _rk4_lanes(sampler: _Sampler, b, y0, atoms, weights):
    lanes, n = atoms.shape[0], atoms.shape[1]
    dt = sampler.dt
    times = sampler.times
    y = np.empty((lanes, n + 1))
    y[:, 0] = y0
    cur = y[:, 0].copy()
    for i in range(n):
        a, w = atoms[:, i], weights[:, i]
        t0, tm = times[i], times[i] + 0.5 * dt
        k1 = _drift(sampler, b, t0, sampler.node, i, cur, a, w)
        k2 = _drift(sampler, b, tm, sampler.mid, i, cur + 0.5 * dt * k1, a, w)
        k3 = _drift(sampler, b, tm, sampler.mid, i, cur + 0.5 * dt * k2, a, w)
        k4 = _drift(sampler, b, times[i + 1], sampler.node, i + 1, cur + dt * k3, a, w)
        cur = cur + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(cur)):
            raise NumericalFailureError(f"y blew up at step {i + 1}")
        y[:, i + 1] = cur
    return y


def _picard_lanes(sampler: _Sampler, b, y0, atoms, weights, tol, max_iter, diag):
    lanes, n = atoms.shape[0], atoms.shape[1]
    dt = sampler.dt
    idx = np.arange(n + 1)
    t = sampler.times
    y = np.repeat(np.asarray(y0, dtype=float).reshape(-1, 1), n + 1, axis=1)
    prev_delta = None
    contraction = float("nan")
    for it in range(1, max_iter + 1):
        phi, psi, dr = sampler.node(idx[None, :], y)
        # the control of step i acts at both of its ends
        left = (_mixed_b(b, t[None, :-1, None], phi[:, :-1], atoms, weights) - _slice(dr, 0)) / psi[:, :-1]
        right = (_mixed_b(b, t[None, 1:, None], phi[:, 1:], atoms, weights) - _slice(dr, 1)) / psi[:, 1:]
        incr = 0.5 * dt * (left + right)
        new = np.empty_like(y)
        new[:, 0] = y[:, 0]
        new[:, 1:] = y[:, :1] + np.cumsum(incr, axis=1)
        if not np.all(np.isfinite(new)):
            raise NumericalFailureError(f"Picard iterate {it} is not finite")
        delta = float(np.max(np.abs(new - y)))
        if prev_delta is not None and prev_delta > 0:
            contraction = delta / prev_delta
        y = new
        prev_delta = delta
        if delta <= tol:
            diag.picard_iterations = it
            diag.final_contraction = contraction if math.isfinite(contraction) else 0.0
            return y
    raise ConvergenceError(
        f"Picard iteration did not reach tol={tol:g} in {max_iter} iterations "
        f"(last change {prev_delta:.3e}, contraction {contraction:.3f})",
        iterations=max_iter,
        contraction=contraction,
    )


def _slice(dr, side):
    if np.ndim(dr) == 0:
        return dr
    return dr[:, :-1] if side == 0 else dr[:, 1:]


def solve_lanes(
    fs: FlowSolver,
    b: ScalarField,
    g: GridPath,
    controls,
    x0,
    mode: str = "rk4",
    tol_picard: float = 1e-12,
    max_iter: int = 50,
):
    """Solve for several controls at once: returns ``(x, y, diagnostics)``.

    ``x`` and ``y`` have shape (lanes, N + 1).
    """
    atoms, weights = control_lanes(controls, g.n_steps, g.horizon)
    return solve_arrays(fs, b, g, atoms, weights, x0, mode, tol_picard, max_iter)


def solve_arrays(fs, b, g, atoms, weights, x0, mode="rk4", tol_picard=1e-12, max_iter=50):
    """Core solver on ``(lanes, N, K)`` atom and weight arrays.

    Weights need not lie on the simplex here, which is what finite-difference
    gradients in the weights require.
    """
    if mode not in ("rk4", "picard"):
        raise InvalidParameterError(f"unknown mode {mode!r}")
    if b.arity != "b_txu":
        raise InvalidParameterError(f"b must have arity b_txu, got {b.arity}")
    if atoms.shape[1] != g.n_steps:
        raise IncompatibleGridError("control and driver grids differ")
    y0 = np.broadcast_to(np.asarray(x0, dtype=float), (atoms.shape[0],)).copy()
    if not np.all(np.isfinite(y0)):
        raise InvalidParameterError("initial state must be finite")
    diag = SolveDiagnostics(mode)
    sampler = _Sampler(fs, g, float(y0.min()) - 2.0, float(y0.max()) + 2.0)
    for _ in range(_MAX_REBUILDS):
        try:
            if mode == "rk4":
                y = _rk4_lanes(sampler, b, y0, atoms, weights)
            else:
                y = _picard_lanes(sampler, b, y0, atoms, weights, tol_picard, max_iter, diag)
            x, _, _ = sampler.node(np.arange(g.n_steps + 1)[None, :], y)
            break
        except _TableMiss as miss:
            sampler.widen(np.asarray(miss.y).ravel())
    else:
        raise NumericalFailureError("y left every flow table; the solution appears unbounded")
    x = np.broadcast_to(x, y.shape).copy()
    if not np.all(np.isfinite(x)):
        raise NumericalFailureError("composed state is not finite")
    diag.table_rebuilds = sampler.rebuilds
    diag.max_y_step = float(np.max(np.abs(np.diff(y, axis=1))))
    diag.composed_sup_norm = float(np.max(np.abs(x)))
    return x, y, diag


def solve_y(fs, b, g, control, y0, mode="rk4", tol_picard=1e-12, max_iter=50):
    """``y`` of the Doss-Sussmann decomposition: ``(GridPath, SolveDiagnostics)``."""
    x, y, diag = solve_lanes(fs, b, g, [control], y0, mode, tol_picard, max_iter)
    path = GridPath(g.horizon, y[0], label="y")
    diag.y = path
    return path, diag


def solve_controlled(fs, b, g, control, x0, mode="rk4", tol_picard=1e-12, max_iter=50):
    """State ``x_t = phi(t, g_t - g_0, y_t)``: ``(GridPath, SolveDiagnostics)``."""
    x, y, diag = solve_lanes(fs, b, g, [control], x0, mode, tol_picard, max_iter)
    diag.y = GridPath(g.horizon, y[0], label="y")
    return GridPath(g.horizon, x[0], label="x"), diag
