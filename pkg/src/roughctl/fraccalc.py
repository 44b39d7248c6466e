"""Riemann-Liouville fractional integrals and derivatives of sampled paths.

Every operator acts on the piecewise-linear interpolant of the samples.  On
each grid cell the singular kernel is integrated against the linear piece in
closed form (product integration), so the only discretisation error is the
interpolation error of the path itself.

Right-sided objects carry the complex phase convention ``(-1)**(-alpha) =
exp(-i pi alpha)`` for integrals; the right-sided derivative of order beta,
being the inverse of the right-sided integral of order beta, carries
``exp(+i pi beta)``.  ``frac_derivative`` returns the phase-free real value
by default; pass ``phase=True`` to get the complex one.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .errors import DomainError, InvalidParameterError, NumericalFailureError
from .signal import GridPath

LEFT = "left_a_plus"
RIGHT = "right_b_minus"
_SIDES = {"left": LEFT, LEFT: LEFT, "right": RIGHT, RIGHT: RIGHT}
_FFT_MIN = 512


def gamma(z: float) -> float:
    # CPython's math.gamma is a Lanczos approximation accurate to a few ulp.
    return math.gamma(z)


@dataclass(frozen=True)
class FracOrder:
    alpha: float
    side: str = LEFT
    a: float = 0.0
    b: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise InvalidParameterError(f"fractional order must lie in (0, 1), got {self.alpha}")
        side = _SIDES.get(self.side)
        if side is None:
            raise InvalidParameterError(f"unknown side {self.side!r}")
        object.__setattr__(self, "side", side)
        if self.b is not None and not self.a < self.b:
            raise InvalidParameterError(f"need a < b, got a={self.a}, b={self.b}")

    @property
    def left(self) -> bool:
        return self.side == LEFT


def right_integral_phase(alpha: float) -> complex:
    return cmath.exp(-1j * math.pi * alpha)


def right_derivative_phase(alpha: float) -> complex:
    return cmath.exp(1j * math.pi * alpha)


# --- closed-form cell weights ------------------------------------------------


def _moment(p: float, lo, hi):
    """Integral of s**p over [lo, hi] (p > -1, or lo > 0)."""
    return (np.power(hi, p + 1) - np.power(lo, p + 1)) / (p + 1)


def _integral_weights(alpha: float, theta: float, kmax: int):
    """Weights (Q0, V) of the product rule for the fractional integral.

    For the evaluation point ``x = x_n + theta h`` and the cell ``k = n - j``
    cells back, ``h**alpha * (f_j Q0[k] + (f_{j+1} - f_j) V[k])`` is the exact
    integral of ``(x - y)**(alpha - 1) f(y)`` over that cell.
    """
    k = np.arange(kmax + 1, dtype=float)
    lo = np.maximum(k - 1 + theta, 0.0)
    hi = k + theta
    q0 = _moment(alpha - 1, lo, hi)
    q1 = _moment(alpha, lo, hi)
    v = hi * q0 - q1
    q0[0] = v[0] = 0.0
    return q0, v


def _derivative_weights(alpha: float, theta: float, kmax: int):
    """Weights (R0, U) for the singular difference integral of the derivative.

    The cell ``k`` back contributes ``h**-alpha * ((f(x) - f_j) R0[k] +
    (f_{j+1} - f_j) U[k])``.  With ``theta == 0`` the adjacent cell has the
    difference vanishing at ``s = 0`` and is integrated as ``slope * s``.
    """
    k = np.arange(kmax + 1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = k - 1 + theta
        hi = k + theta
        r0 = _moment(-alpha - 1, lo, hi)
        r1 = _moment(-alpha, lo, hi)
        u = r1 - hi * r0
    r0[0] = u[0] = 0.0
    if theta == 0.0 and kmax >= 1:
        r0[1] = 0.0
        u[1] = 1.0 / (1.0 - alpha)
    return r0, u


def _causal_conv(a: np.ndarray, w: np.ndarray, length: int) -> np.ndarray:
    """``out[n] = sum_{j < n} a[j] w[n - j]`` for n = 0..length-1 (w[0] == 0)."""
    if a.size == 0:
        return np.zeros(length)
    if min(a.size, w.size) >= _FFT_MIN:
        full = fftconvolve(a, w)
    else:
        full = np.convolve(a, w)
    out = np.zeros(length)
    m = min(length, full.size)
    out[:m] = full[:m]
    return out


def _left_integral_nodes(vals: np.ndarray, h: float, alpha: float, theta: float = 0.0) -> np.ndarray:
    """I^alpha_{a+} of the interpolant at x_n + theta h, without the 1/Gamma factor.

    Returns M + 1 values (n = 0..M) for theta == 0, else M values.
    """
    m = vals.size - 1
    length = m + 1 if theta == 0.0 else m
    df = np.diff(vals)
    q0, v = _integral_weights(alpha, theta, length)
    out = _causal_conv(vals[:length], q0, length) + _causal_conv(df, v, length)
    if theta > 0.0:
        fx = vals[:m] + theta * df
        out += fx * theta**alpha / alpha - df * theta ** (alpha + 1) / (alpha + 1)
    return out * h**alpha


def _left_derivative_nodes(vals: np.ndarray, h: float, alpha: float, theta: float = 0.0) -> np.ndarray:
    """D^alpha_{a+} of the interpolant at x_n + theta h, without the 1/Gamma factor.

    Node 0 (x = a) is returned as nan when theta == 0.
    """
    m = vals.size - 1
    length = m + 1 if theta == 0.0 else m
    df = np.diff(vals)
    r0, u = _derivative_weights(alpha, theta, length)
    fx = vals[:length] + (theta * df[:length] if theta > 0.0 else 0.0)
    s_r0 = np.cumsum(r0)[:length]
    integral = fx * s_r0 - _causal_conv(vals[:length], r0, length) + _causal_conv(df, u, length)
    if theta > 0.0:
        integral += df * theta ** (1 - alpha) / (1 - alpha)
    dist = np.arange(length, dtype=float) + theta
    with np.errstate(divide="ignore", invalid="ignore"):
        lead = fx / dist**alpha
    out = (lead + alpha * integral) * h ** (-alpha)
    if theta == 0.0:
        out[0] = np.nan
    return out


def _left_derivative_at_end(vals: np.ndarray, h: float, alpha: float) -> float:
    """D^alpha_{a+} at the right end of the window (finite for Hoelder f)."""
    return float(_left_derivative_nodes(vals, h, alpha)[-1])


def _locate(path: GridPath, order: FracOrder, x: float):
    ia, ib = path.window_indices(order.a, order.b)
    h = path.dt
    a, b = ia * h, ib * h
    if not (a < x < b):
        raise DomainError(f"x = {x} must lie strictly inside ({a}, {b})")
    vals = path.values[ia : ib + 1]
    if order.left:
        pos = (x - a) / h
    else:
        vals = vals[::-1]
        pos = (b - x) / h
    n = int(math.floor(pos))
    theta = pos - n
    if theta < 1e-12:
        theta = 0.0
    elif theta > 1 - 1e-12:
        n, theta = n + 1, 0.0
    return vals, h, n, theta


def _single(nodes_fn, vals, h, alpha, n, theta):
    # Truncating the window at the evaluation point leaves the value unchanged.
    sub = vals[: n + 2] if theta > 0.0 else vals[: n + 1]
    res = nodes_fn(sub, h, alpha, theta)
    return float(res[n])


def frac_integral(f: GridPath, order: FracOrder, x: float, phase: bool = True):
    """Riemann-Liouville integral of order ``order.alpha`` of ``f`` at ``x``.

    Left side returns a float.  Right side returns the complex value
    ``exp(-i pi alpha) * (real quadrature)``, or only the real quadrature when
    ``phase=False``.
    """
    vals, h, n, theta = _locate(f, order, x)
    val = _single(_left_integral_nodes, vals, h, order.alpha, n, theta) / gamma(order.alpha)
    if not math.isfinite(val):
        raise NumericalFailureError(f"nonfinite fractional integral at x={x}")
    if order.left or not phase:
        return val
    return right_integral_phase(order.alpha) * val


def frac_integral_modulus(f: GridPath, order: FracOrder, x: float) -> float:
    """Phase-free value of :func:`frac_integral`."""
    return frac_integral(f, order, x, phase=False)


def frac_derivative(f: GridPath, order: FracOrder, x: float, phase: bool = False):
    """Riemann-Liouville derivative (Marchaud form) of ``f`` at ``x``.

    ``f`` must be Hoelder of index larger than ``alpha`` near ``x`` for the
    result to approximate a finite limit; that is the caller's business.
    """
    vals, h, n, theta = _locate(f, order, x)
    raw = _single(_left_derivative_nodes, vals, h, order.alpha, n, theta)
    val = raw / gamma(1 - order.alpha)
    if not math.isfinite(val):
        raise NumericalFailureError(
            f"nonfinite fractional derivative at x={x} (alpha={order.alpha}, h={h}); "
            "grid too coarse near the singularity"
        )
    if order.left or not phase:
        return val
    return right_derivative_phase(order.alpha) * val


def _grid_eval(path: GridPath, order: FracOrder, nodes_fn, norm: float):
    ia, ib = path.window_indices(order.a, order.b)
    vals = path.values[ia : ib + 1]
    if not order.left:
        vals = vals[::-1]
    out = nodes_fn(vals, path.dt, order.alpha) / norm
    if not order.left:
        out = out[::-1]
    inner = out[1:-1]
    if not np.all(np.isfinite(inner)):
        raise NumericalFailureError("nonfinite value in grid evaluation")
    times = np.arange(ia + 1, ib) * path.dt
    return times, inner


def frac_integral_grid(f: GridPath, order: FracOrder, phase: bool = True):
    """Values at every interior grid node of the window: ``(times, values)``."""
    times, vals = _grid_eval(f, order, _left_integral_nodes, gamma(order.alpha))
    if not order.left and phase:
        vals = right_integral_phase(order.alpha) * vals
    return times, vals


def frac_derivative_grid(f: GridPath, order: FracOrder, phase: bool = False):
    times, vals = _grid_eval(f, order, _left_derivative_nodes, gamma(1 - order.alpha))
    if not order.left and phase:
        vals = right_derivative_phase(order.alpha) * vals
    return times, vals


def frac_integral_path(f: GridPath, alpha: float) -> GridPath:
    """I^alpha_{0+} f on the whole grid as a new path (value 0 at t = 0)."""
    if not (0 < alpha < 1):
        raise InvalidParameterError(f"fractional order must lie in (0, 1), got {alpha}")
    vals = _left_integral_nodes(f.values, f.dt, alpha) / gamma(alpha)
    return GridPath(f.horizon, vals)
