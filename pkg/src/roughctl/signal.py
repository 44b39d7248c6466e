"""Driving signals and controls sampled on uniform grids.

A :class:`GridPath` is the common currency of the package: the driver ``g``,
the states ``x`` and ``y`` and ordinary controls ``u`` are all stored as
``N + 1`` samples of a function on ``[0, T]``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidParameterError, InvalidWindowError, IncompatibleGridError

_SNAP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GridPath:
    """Samples ``values[i] = f(i * T / N)`` of a real function on ``[0, T]``.

    ``holder_index`` is the caller-declared Hoelder index of the underlying
    function (``None`` when unknown).  It is metadata: nothing in the package
    estimates it behind the caller's back.
    """

    horizon: float
    values: np.ndarray
    holder_index: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2:
            raise InvalidParameterError("a GridPath needs at least two samples")
        if not np.all(np.isfinite(vals)):
            raise InvalidParameterError("GridPath values must be finite")
        if not self.horizon > 0:
            raise InvalidParameterError(f"horizon must be positive, got {self.horizon}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.horizon / self.n_steps

    def time(self, i: int) -> float:
        return i * self.horizon / self.n_steps

    def __len__(self):
        return self.values.size

    def same_grid(self, other: "GridPath") -> bool:
        return self.n_steps == other.n_steps and math.isclose(
            self.horizon, other.horizon, rel_tol=1e-12
        )

    def check_grid(self, other: "GridPath") -> None:
        if not self.same_grid(other):
            raise IncompatibleGridError(
                f"grids differ: (T={self.horizon}, N={self.n_steps}) vs "
                f"(T={other.horizon}, N={other.n_steps})"
            )

    def window_indices(self, a: float, b: Optional[float] = None) -> tuple[int, int]:
        """Grid indices of ``[a, b]``, snapped outward to the nearest grid points."""
        if b is None:
            b = self.horizon
        if not (0 <= a < b <= self.horizon * (1 + _SNAP_TOL)):
            raise InvalidWindowError(f"invalid window [{a}, {b}] on [0, {self.horizon}]")
        fa = a / self.dt
        fb = b / self.dt
        ia = int(math.floor(fa + _SNAP_TOL * max(1.0, fa)))
        ib = int(math.ceil(fb - _SNAP_TOL * max(1.0, fb)))
        ib = min(ib, self.n_steps)
        if ib <= ia:
            raise InvalidWindowError(f"window [{a}, {b}] contains no grid cell")
        return ia, ib

    def _combine(self, other, op):
        if isinstance(other, GridPath):
            self.check_grid(other)
            idx = None
            if self.holder_index is not None and other.holder_index is not None:
                idx = min(self.holder_index, other.holder_index)
            return GridPath(self.horizon, op(self.values, other.values), idx)
        return GridPath(self.horizon, op(self.values, float(other)), self.holder_index)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        if isinstance(other, GridPath):
            return self._combine(other, np.multiply)
        return GridPath(self.horizon, self.values * float(other), self.holder_index)

    __rmul__ = __mul__

    def __neg__(self):
        return GridPath(self.horizon, -self.values, self.holder_index)

    def map(self, fn) -> "GridPath":
        """Apply a vectorised function pointwise; the Hoelder index is dropped."""
        return GridPath(self.horizon, fn(self.values))

    def with_index(self, holder_index: Optional[float]) -> "GridPath":
        return GridPath(self.horizon, self.values, holder_index, self.label)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(["t", "value"])
        for t, v in zip(self.times, self.values):
            writer.writerow([f"{t:.17g}", f"{v:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, holder_index: Optional[float] = None) -> "GridPath":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["t", "value"]:
            raise InvalidParameterError("expected CSV header 't,value'")
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
        t, v = data[:, 0], data[:, 1]
        n = t.size - 1
        if n < 1 or not np.allclose(t, np.arange(n + 1) * t[-1] / n, rtol=0, atol=1e-12 * t[-1]):
            raise InvalidParameterError("CSV times are not a uniform grid starting at 0")
        return cls(float(t[-1]), v, holder_index)


@dataclass(frozen=True)
class HolderEstimate:
    mu: float
    seminorm: float
    sup_norm: float
    window: tuple[float, float]
    # grid times (s, t) attaining the seminorm
    argmax: tuple[float, float] = field(default=(0.0, 0.0))

    @property
    def norm(self) -> float:
        """Sup norm plus seminorm over the window."""
        return self.sup_norm + self.seminorm


def holder_seminorm(
    path: GridPath,
    mu: float,
    a: float = 0.0,
    b: Optional[float] = None,
    mode: str = "reference",
    max_lag: Optional[int] = None,
) -> HolderEstimate:
    """Discrete mu-Hoelder seminorm and sup norm of ``path`` on ``[a, b]``.

    Window ends are snapped outward to grid points.  ``mode="reference"``
    scans every pair of grid points in the window (O(N^2)); ``mode="fast"``
    only looks at lags ``1..max_lag`` and can only under-estimate.
    """
    if not (0 < mu <= 1):
        raise InvalidParameterError(f"Hoelder index must lie in (0, 1], got {mu}")
    if b is not None and b <= a:
        raise InvalidWindowError(f"empty window [{a}, {b}]")
    ia, ib = path.window_indices(a, b)
    v = path.values[ia : ib + 1]
    n = v.size - 1
    if mode == "reference":
        lags = n
    elif mode == "fast":
        lags = min(n, max_lag if max_lag is not None else 32)
    else:
        raise InvalidParameterError(f"unknown mode {mode!r}")
    dt = path.dt
    best, arg = 0.0, (ia, ia + 1)
    for lag in range(1, lags + 1):
        inc = np.abs(v[lag:] - v[:-lag])
        k = int(np.argmax(inc))
        val = inc[k] / (lag * dt) ** mu
        if val > best:
            best, arg = val, (ia + k, ia + k + lag)
    return HolderEstimate(
        mu=mu,
        seminorm=float(best),
        sup_norm=float(np.max(np.abs(v))),
        window=(ia * dt, ib * dt),
        argmax=(arg[0] * dt, arg[1] * dt),
    )


def holder_index_estimate(path: GridPath, lags=None) -> float:
    """Slope of log(max |increment at lag k|) against log(k dt).

    Biased low for Gaussian paths (the running maximum carries a
    sqrt(log(N/k)) factor), which is why declared indices are preferred.
    """
    n = path.n_steps
    if lags is None:
        top = max(1, int(math.log2(n)) - 5)
        lags = [2**j for j in range(0, top + 1)]
    lags = [k for k in lags if 1 <= k < n]
    if len(lags) < 2:
        raise InvalidParameterError("need at least two admissible lags")
    v = path.values
    m = [np.max(np.abs(v[k:] - v[:-k])) for k in lags]
    x = np.log(np.asarray(lags, dtype=float) * path.dt)
    y = np.log(np.asarray(m))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


# --- fractional Brownian motion -------------------------------------------


@dataclass(frozen=True)
class FbmSpec:
    hurst: float
    horizon: float = 1.0
    n_steps: int = 1024
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.hurst < 1):
            raise InvalidParameterError(f"Hurst index must lie in (0, 1), got {self.hurst}")
        if self.n_steps < 2:
            raise InvalidParameterError("fBm needs n_steps >= 2")
        if not self.horizon > 0:
            raise InvalidParameterError("horizon must be positive")


def fgn_autocovariance(hurst: float, lags: np.ndarray) -> np.ndarray:
    """Autocovariance of unit-spacing fractional Gaussian noise."""
    k = np.abs(np.asarray(lags, dtype=float))
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 + np.abs(k - 1) ** h2 - 2.0 * k**h2)


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _circulant_eigenvalues(hurst: float, n: int) -> np.ndarray:
    gam = fgn_autocovariance(hurst, np.arange(n + 1))
    row = np.concatenate([gam, gam[-2:0:-1]])
    return np.fft.fft(row).real


def fbm_paths(spec: FbmSpec, n_paths: int = 1, method: str = "auto") -> np.ndarray:
    """Draw ``n_paths`` fBm samples as an array of shape ``(n_paths, N + 1)``.

    The default is exact circulant embedding of the fGn covariance
    (Davies-Harte); if the embedding is not nonnegative definite, or the grid
    size is not a power of two, a dense Cholesky factorisation is used.
    """
    n = spec.n_steps
    if method == "auto":
        method = "circulant" if _is_power_of_two(n) else "cholesky"
    rng = np.random.default_rng(spec.seed)
    if method == "circulant":
        if not _is_power_of_two(n):
            raise InvalidParameterError("circulant embedding needs n_steps a power of two")
        lam = _circulant_eigenvalues(spec.hurst, n)
        if lam.min() < -1e-10 * lam.max():
            method = "cholesky"
        else:
            m = 2 * n
            scale = np.sqrt(np.clip(lam, 0.0, None) / m)
            z = rng.standard_normal((n_paths, m)) + 1j * rng.standard_normal((n_paths, m))
            noise = np.fft.fft(scale * z, axis=1).real[:, :n]
    if method == "cholesky":
        gam = fgn_autocovariance(spec.hurst, np.arange(n))
        idx = np.arange(n)
        cov = gam[np.abs(idx[:, None] - idx[None, :])]
        chol = np.linalg.cholesky(cov)
        noise = rng.standard_normal((n_paths, n)) @ chol.T
    elif method != "circulant":
        raise InvalidParameterError(f"unknown fBm method {method!r}")
    incr = noise * (spec.horizon / n) ** spec.hurst
    out = np.zeros((n_paths, n + 1))
    np.cumsum(incr, axis=1, out=out[:, 1:])
    return out


def fbm_generate(spec: FbmSpec, method: str = "auto", index_margin: float = 0.05) -> GridPath:
    """One fBm path; its declared Hoelder index is ``hurst - index_margin``."""
    values = fbm_paths(spec, 1, method)[0]
    return GridPath(
        spec.horizon,
        values,
        holder_index=spec.hurst - index_margin,
        label=f"fbm(H={spec.hurst}, seed={spec.seed})",
    )


# --- deterministic test paths ----------------------------------------------


def test_path(kind: str, T: float = 1.0, N: int = 1024, **params) -> GridPath:
    """Deterministic Hoelder paths for reproducible experiments.

    ``power_beta``  t**beta, index beta (params: beta)
    ``sine``        amplitude * sin(2 pi frequency t), Lipschitz (params: amplitude, frequency)
    ``weierstrass`` sum_n amplitude a**n cos(2 pi b**n t), index log(1/a)/log(b)
                    (params: a, b, amplitude)
    """
    if N < 1:
        raise InvalidParameterError("N must be positive")
    t = np.arange(N + 1) * T / N
    if kind == "power_beta":
        beta = float(params.get("beta", 0.75))
        if not (0.5 < beta <= 1):
            raise InvalidParameterError(f"power_beta needs beta in (1/2, 1], got {beta}")
        return GridPath(T, t**beta, holder_index=beta, label=f"power_beta({beta})")
    if kind == "sine":
        amp = float(params.get("amplitude", 1.0))
        freq = float(params.get("frequency", 1.0))
        return GridPath(T, amp * np.sin(2 * np.pi * freq * t), holder_index=1.0, label="sine")
    if kind == "weierstrass":
        a = float(params.get("a", 0.4))
        b = float(params.get("b", 3.0))
        amp = float(params.get("amplitude", 1.0))
        if not (0 < a < 1 < b):
            raise InvalidParameterError("weierstrass needs 0 < a < 1 < b")
        index = math.log(1 / a) / math.log(b)
        if not (0.5 < index < 1):
            raise InvalidParameterError(f"weierstrass index {index:.3f} not in (1/2, 1)")
        vals = np.zeros_like(t)
        k = 0
        while a**k >= 1e-12:
            vals += amp * a**k * np.cos(2 * np.pi * b**k * t)
            k += 1
        return GridPath(T, vals, holder_index=index, label=f"weierstrass({a}, {b})")
    raise InvalidParameterError(f"unknown test path kind {kind!r}")


test_path.__test__ = False  # keep pytest from collecting it


def constant_path(value: float, T: float = 1.0, N: int = 1024) -> GridPath:
    return GridPath(T, np.full(N + 1, float(value)), holder_index=1.0, label=f"const({value})")


def from_function(fn, T: float = 1.0, N: int = 1024, holder_index=None) -> GridPath:
    """Sample a vectorised callable on the uniform grid."""
    t = np.arange(N + 1) * T / N
    return GridPath(T, np.broadcast_to(fn(t), t.shape).astype(float), holder_index)
