"""Young integrals by Riemann sums and by the fractional-derivative identity.

``young_riemann`` is the reference route used everywhere else.  The
fractional route evaluates

    int_a^b f dg = (-1)**alpha int_a^b D^alpha_{a+} f(x) D^{1-alpha}_{b-} g_{b-}(x) dx,
    g_{b-}(x) = g(x) - g(b),

and exists to cross-check the first.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidParameterError, NumericalFailureError
from .fraccalc import _left_derivative_nodes, _moment, gamma, right_derivative_phase
from .signal import GridPath


@dataclass(frozen=True)
class YoungIntegrand:
    """``f`` integrated against ``g`` over ``[a, b]`` (``b=None`` means T).

    ``f_index`` / ``g_index`` override the Hoelder indices declared on the
    paths.
    """

    f: GridPath
    g: GridPath
    a: float = 0.0
    b: Optional[float] = None
    f_index: Optional[float] = None
    g_index: Optional[float] = None

    def __post_init__(self):
        self.f.check_grid(self.g)
        lam, mu = self.indices
        if lam is not None and mu is not None and not lam + mu > 1:
            raise InvalidParameterError(
                f"Young condition fails: lambda + mu = {lam + mu:.3f} <= 1"
            )

    @property
    def indices(self):
        lam = self.f_index if self.f_index is not None else self.f.holder_index
        mu = self.g_index if self.g_index is not None else self.g.holder_index
        return lam, mu

    def window(self):
        return self.f.window_indices(self.a, self.b)

    def admissible_alphas(self):
        """Open interval ``(1 - mu, lambda)`` of orders for the fractional route."""
        lam, mu = self.indices
        if lam is None or mu is None:
            raise InvalidParameterError("Hoelder indices of f and g must be declared")
        return 1.0 - mu, min(lam, 1.0)

    def alpha_grid(self, count: int = 5):
        lo, hi = self.admissible_alphas()
        return [lo + (hi - lo) * k / (count + 1) for k in range(1, count + 1)]


def young_riemann(yi: YoungIntegrand, rule: str = "trapezoid") -> float:
    """Riemann-Stieltjes sum over the grid cells inside the window.

    ``rule="left"`` tags each cell with its left point, which is what the
    explicit Euler scheme uses.  ``rule="trapezoid"`` averages both ends; it
    equals the exact Stieltjes integral of the piecewise-linear interpolants,
    the quantity the fractional route computes.
    """
    ia, ib = yi.window()
    f = yi.f.values[ia : ib + 1]
    dg = np.diff(yi.g.values[ia : ib + 1])
    if rule == "left":
        return float(np.dot(f[:-1], dg))
    if rule == "trapezoid":
        return float(np.dot(0.5 * (f[:-1] + f[1:]), dg))
    raise InvalidParameterError(f"unknown rule {rule!r}")


def young_riemann_path(f: GridPath, g: GridPath, rule: str = "left") -> GridPath:
    """Running integral ``t -> int_0^t f dg`` on the grid."""
    f.check_grid(g)
    dg = np.diff(g.values)
    if rule == "left":
        incr = f.values[:-1] * dg
    elif rule == "trapezoid":
        incr = 0.5 * (f.values[:-1] + f.values[1:]) * dg
    else:
        raise InvalidParameterError(f"unknown rule {rule!r}")
    return GridPath(f.horizon, np.concatenate([[0.0], np.cumsum(incr)]))


def _refined(fn, vals, h, alpha, refine):
    """Evaluate a node function at ``x_n + r h / refine`` and interleave."""
    m = vals.size - 1
    out = np.empty(m * refine + 1)
    out[0::refine] = fn(vals, h, alpha, 0.0)
    for r in range(1, refine):
        out[r::refine][:m] = fn(vals, h, alpha, r / refine)
    return out


def _endpoint_weighted_integral(r: np.ndarray, hs: float, p: float) -> float:
    """int_0^L s**p r(s) ds for piecewise-linear ``r`` on nodes ``k * hs``."""
    k = np.arange(r.size - 1, dtype=float)
    p0 = _moment(p, k, k + 1)
    p1 = _moment(p + 1, k, k + 1)
    dr = np.diff(r)
    return hs ** (p + 1) * float(np.dot(r[:-1], p0) + np.dot(dr, p1 - k * p0))


def _fractional_level(fv, gv, h, alpha, refine) -> float:
    # D^alpha_{a+} f, scaled by (x - a)**alpha, on the refined grid
    d_left = _refined(_left_derivative_nodes, fv, h, alpha, refine)
    dist = np.arange(d_left.size, dtype=float) * (h / refine)
    scaled_left = d_left * dist**alpha
    scaled_left[0] = fv[0]

    # D^{1-alpha}_{b-} g_{b-} through the reflected path; its value at b is 0
    d_right = _refined(_left_derivative_nodes, gv[::-1], h, 1.0 - alpha, refine)[::-1]
    d_right[-1] = 0.0

    r = scaled_left * d_right / (gamma(1.0 - alpha) * gamma(alpha))
    if not np.all(np.isfinite(r)):
        raise NumericalFailureError("nonfinite fractional derivative in the Young integrand")
    return _endpoint_weighted_integral(r, h / refine, -alpha)


def _extrapolate(levels, values, alpha) -> float:
    """Remove the error terms refine**-(2 - alpha) and refine**-(1 + alpha).

    They come from the local power singularities that the fractional
    derivatives of a piecewise-linear path have at every grid node.
    """
    exps = sorted({round(2.0 - alpha, 12), round(1.0 + alpha, 12)})
    if len(exps) == 2 and exps[1] - exps[0] < 0.1:
        exps = [exps[0], exps[0] + 0.5]
    exps = exps[: len(levels) - 1]
    mat = np.array([[1.0] + [s ** (-p) for p in exps] for s in levels])
    sol = np.linalg.lstsq(mat, np.asarray(values), rcond=None)[0]
    return float(sol[0])


def young_fractional(yi: YoungIntegrand, alpha: float, refine=(4, 8, 16)) -> float:
    """Young integral through the fractional-derivative identity.

    Both fractional derivatives are evaluated exactly (product integration
    of the interpolants) on a grid ``refine`` times finer than the path grid,
    and the outer integral is a product trapezoid rule with weight
    ``(x - a)**-alpha``, which absorbs the integrable blow-up of
    ``D^alpha_{a+} f`` at ``x = a``.  A tuple of refinement levels triggers
    Richardson extrapolation in the refinement factor; a single int does not.

    The right-sided derivative carries the phase ``exp(i pi (1 - alpha))``;
    multiplied by ``(-1)**alpha`` the result is real, and an imaginary
    residual above ``1e-8 |value|`` raises.
    """
    lo, hi = yi.admissible_alphas()
    if not (lo < alpha < hi):
        raise InvalidParameterError(f"alpha = {alpha} outside admissible ({lo:.4f}, {hi:.4f})")
    levels = (refine,) if isinstance(refine, int) else tuple(refine)
    if not levels or min(levels) < 1:
        raise InvalidParameterError("refinement levels must be >= 1")
    ia, ib = yi.window()
    h = yi.f.dt
    fv = yi.f.values[ia : ib + 1]
    gv = yi.g.values[ia : ib + 1] - yi.g.values[ib]
    values = [_fractional_level(fv, gv, h, alpha, s) for s in levels]
    real_part = values[0] if len(levels) == 1 else _extrapolate(levels, values, alpha)
    value = cmath.exp(1j * math.pi * alpha) * right_derivative_phase(1.0 - alpha) * real_part
    if abs(value.imag) > 1e-8 * abs(value.real) and abs(value.imag) > 1e-300:
        raise NumericalFailureError(f"imaginary residual {value.imag:.3e} in Young integral")
    return float(value.real)
