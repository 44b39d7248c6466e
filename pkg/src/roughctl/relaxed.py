"""Step relaxed controls, Dirac embedding, a vague-distance proxy and chattering.

A step relaxed control on ``[0, T]`` is a list of cells, a finite atom set in
the control interval ``U = [u_min, u_max]`` and one probability vector of
weights per cell.  Ordinary controls embed as unit weight vectors; the
chattering construction goes the other way.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DomainError, InvalidParameterError
from .signal import GridPath

_SIMPLEX_TOL = 1e-12
_ALIGN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class StepRelaxedControl:
    cells: np.ndarray
    atoms: np.ndarray
    weights: np.ndarray
    u_range: Optional[tuple] = None

    def __post_init__(self):
        cells = np.array(self.cells, dtype=float)
        atoms = np.array(self.atoms, dtype=float).ravel()
        weights = np.array(self.weights, dtype=float)
        if weights.ndim == 1:
            weights = weights[None, :]
        if cells.ndim != 1 or cells.size < 2 or cells[0] != 0.0 or np.any(np.diff(cells) <= 0):
            raise InvalidParameterError("cells must increase strictly from 0")
        if weights.shape != (cells.size - 1, atoms.size):
            raise InvalidParameterError(
                f"weights shape {weights.shape} != (cells, atoms) = {(cells.size - 1, atoms.size)}"
            )
        if np.any(weights < 0) or np.any(np.abs(weights.sum(axis=1) - 1) > _SIMPLEX_TOL):
            raise InvalidParameterError("every weight row must lie on the probability simplex")
        lo, hi = self.u_range if self.u_range is not None else (atoms.min(), atoms.max())
        if np.any(atoms < lo) or np.any(atoms > hi):
            raise DomainError(f"atoms {atoms} not inside U = [{lo}, {hi}]")
        for arr in (cells, atoms, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "u_range", (float(lo), float(hi)))

    @property
    def horizon(self) -> float:
        return float(self.cells[-1])

    @property
    def n_cells(self) -> int:
        return self.cells.size - 1

    @property
    def n_atoms(self) -> int:
        return self.atoms.size

    def cell_indices(self, n_steps: int) -> np.ndarray:
        """Grid index of every cell boundary on a grid of ``n_steps`` steps."""
        pos = self.cells / self.horizon * n_steps
        idx = np.rint(pos)
        if np.any(np.abs(pos - idx) > _ALIGN_TOL * max(1, n_steps)):
            raise InvalidParameterError(f"cell boundaries are not aligned with a grid of {n_steps} steps")
        idx = idx.astype(int)
        if np.any(np.diff(idx) <= 0):
            raise InvalidParameterError("a cell is shorter than one grid step")
        return idx

    def step_cells(self, n_steps: int) -> np.ndarray:
        """Cell number of every grid step ``[t_i, t_{i+1})``."""
        idx = self.cell_indices(n_steps)
        return np.repeat(np.arange(self.n_cells), np.diff(idx))

    def step_weights(self, n_steps: int) -> np.ndarray:
        return self.weights[self.step_cells(n_steps)]

    def with_weights(self, weights) -> "StepRelaxedControl":
        return StepRelaxedControl(self.cells, self.atoms, weights, self.u_range)

    def to_json(self) -> str:
        doc = {
            "cells": [float(c) for c in self.cells],
            "atoms": [float(a) for a in self.atoms],
            "weights": [[float(w) for w in row] for row in self.weights],
            "u_range": list(self.u_range),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "StepRelaxedControl":
        doc = json.loads(text)
        u_range = tuple(doc["u_range"]) if "u_range" in doc else None
        return cls(doc["cells"], doc["atoms"], doc["weights"], u_range)


def uniform_cells(T: float, n_cells: int) -> np.ndarray:
    return np.arange(n_cells + 1) * (T / n_cells)


def dirac_control(atom: float, T: float, u_range=None) -> StepRelaxedControl:
    return StepRelaxedControl([0.0, T], [atom], [[1.0]], u_range)


def embed_ordinary(u: GridPath, u_range=None) -> StepRelaxedControl:
    """Dirac embedding of an ordinary control held constant on grid steps.

    Maximal runs of equal step values become cells; the atoms are the
    distinct values.
    """
    steps = u.values[:-1]
    lo, hi = u_range if u_range is not None else (steps.min(), steps.max())
    if np.any(steps < lo) or np.any(steps > hi):
        raise DomainError(f"control leaves U = [{lo}, {hi}]")
    atoms = np.unique(steps)
    breaks = np.flatnonzero(np.diff(steps) != 0) + 1
    starts = np.concatenate([[0], breaks])
    bounds = np.concatenate([starts, [steps.size]]) * u.dt
    bounds[-1] = u.horizon
    which = np.searchsorted(atoms, steps[starts])
    weights = np.zeros((starts.size, atoms.size))
    weights[np.arange(starts.size), which] = 1.0
    return StepRelaxedControl(bounds, atoms, weights, (lo, hi))


# --- chattering -------------------------------------------------------------


@dataclass(frozen=True)
class ChatterPartition:
    intervals: tuple  # (t_start, t_end, atom index), consecutive and disjoint
    level: int
    atoms: tuple

    def occupation(self, cell_bounds) -> np.ndarray:
        """Time spent on each atom inside each cell, shape (cells, atoms)."""
        cell_bounds = np.asarray(cell_bounds)
        out = np.zeros((cell_bounds.size - 1, len(self.atoms)))
        for s, e, i in self.intervals:
            j = int(np.searchsorted(cell_bounds, s, side="right") - 1)
            out[j, i] += e - s
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(["t_start", "t_end", "atom"])
        for s, e, i in self.intervals:
            writer.writerow([f"{s:.17g}", f"{e:.17g}", i])
        return buf.getvalue()


def _apportion(target: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total``, each within one unit of ``target``."""
    base = np.floor(np.maximum(target, 0.0)).astype(int)
    rem = np.maximum(target, 0.0) - base
    short = total - int(base.sum())
    order = np.argsort(-rem, kind="stable")
    if short > 0:
        base[order[:short]] += 1
    elif short < 0:
        for i in order[::-1]:
            if short == 0:
                break
            if base[i] > 0:
                base[i] -= 1
                short += 1
    return base


def chatter(q: StepRelaxedControl, m: int, n_steps: int):
    """Replace a step relaxed control by an ordinary, rapidly switching one.

    Every cell is split into ``m`` equal subcells (snapped to the grid) and
    each subcell is laid out as consecutive runs of the atoms in ascending
    index order, with lengths proportional to the cell weights.  Rounding to
    the grid is error-diffused across subcells, so each atom's total time in
    a cell is within one grid step of ``weight * cell length``.

    Returns the control (a :class:`GridPath` held constant on grid steps)
    and its :class:`ChatterPartition`.
    """
    if m < 1:
        raise InvalidParameterError("refinement level m must be >= 1")
    idx = q.cell_indices(n_steps)
    dt = q.horizon / n_steps
    step_atom = np.empty(n_steps, dtype=int)
    intervals = []
    for j in range(q.n_cells):
        i0, i1 = int(idx[j]), int(idx[j + 1])
        n = i1 - i0
        w = q.weights[j]
        carry = np.zeros(q.n_atoms)
        sub = [i0 + (2 * s * n + m) // (2 * m) for s in range(m + 1)]
        for s in range(m):
            ns = sub[s + 1] - sub[s]
            if ns == 0:
                continue
            target = w * ns + carry
            counts = _apportion(target, ns)
            carry = target - counts
            pos = sub[s]
            for a in range(q.n_atoms):
                c = int(counts[a])
                if c == 0:
                    continue
                step_atom[pos : pos + c] = a
                # runs merge only inside a cell so that intervals partition each cell
                if intervals and intervals[-1][2] == a and intervals[-1][1] == pos and intervals[-1][0] >= i0:
                    intervals[-1] = (intervals[-1][0], pos + c, a)
                else:
                    intervals.append((pos, pos + c, a))
                pos += c
    values = q.atoms[step_atom]
    path = GridPath(q.horizon, np.concatenate([values, values[-1:]]), label=f"chatter(m={m})")
    spans = tuple((s * dt, e * dt, int(a)) for s, e, a in intervals)
    return path, ChatterPartition(spans, m, tuple(float(a) for a in q.atoms))


# --- vague-distance proxy ---------------------------------------------------


class TestFunction(NamedTuple):
    """Separable test function ``r**power * atom_fn(a)``."""

    power: int
    atom_fn: Callable
    name: str = ""


TestFunction.__test__ = False


def default_dictionary():
    return [
        TestFunction(p, (lambda w: (lambda a: np.cos(w * a)))(w), f"r^{p} cos({w}a)")
        for p in (0, 1)
        for w in (1, 2, 3)
    ]


def relaxed_moment(q: StepRelaxedControl, tf: TestFunction) -> float:
    """Exact ``int int tf(r, a) q_r(da) dr`` for a step relaxed control."""
    p = tf.power
    cell_int = (q.cells[1:] ** (p + 1) - q.cells[:-1] ** (p + 1)) / (p + 1)
    return float(cell_int @ (q.weights @ np.asarray(tf.atom_fn(q.atoms), dtype=float)))


def vague_distance(q1: StepRelaxedControl, q2: StepRelaxedControl, dictionary=None) -> float:
    """Max over a test-function dictionary of the gap between integrals."""
    if dictionary is None:
        dictionary = default_dictionary()
    if len(dictionary) == 0:
        raise InvalidParameterError("the test-function dictionary is empty")
    if not np.allclose(q1.u_range, q2.u_range):
        raise InvalidParameterError("relaxed controls live on different control sets")
    return max(abs(relaxed_moment(q1, tf) - relaxed_moment(q2, tf)) for tf in dictionary)


# --- step approximation of a general relaxed control ------------------------


def step_approximate(
    kernel: Callable,
    n_cells: int,
    n_atoms: int,
    u_range: Sequence[float],
    T: float = 1.0,
) -> StepRelaxedControl:
    """Step relaxed control approximating the kernel ``r -> q_r``.

    ``kernel(r)`` returns ``(points, weights)``, a discrete probability
    measure on U.  Cell ``j`` takes the kernel at its midpoint, with every
    point's mass moved to the nearest of ``n_atoms`` uniformly spaced atoms.
    """
    lo, hi = float(u_range[0]), float(u_range[1])
    if n_cells < 1 or n_atoms < 1 or not lo <= hi:
        raise InvalidParameterError("need n_cells >= 1, n_atoms >= 1 and u_min <= u_max")
    atoms = np.linspace(lo, hi, n_atoms) if n_atoms > 1 else np.array([(lo + hi) / 2])
    cells = uniform_cells(T, n_cells)
    weights = np.zeros((n_cells, n_atoms))
    for j in range(n_cells):
        r = 0.5 * (cells[j] + cells[j + 1])
        pts, w = kernel(r)
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if np.any(w < 0) or pts.shape != w.shape:
            raise InvalidParameterError(f"kernel at r={r} is not a measure")
        if np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12):
            raise DomainError(f"kernel at r={r} charges points outside U")
        total = w.sum()
        if abs(total - 1) > 1e-6:
            raise InvalidParameterError(f"kernel at r={r} has mass {total}, not 1")
        if abs(total - 1) > _SIMPLEX_TOL:
            warnings.warn(f"renormalising kernel mass {total!r} at r={r}", RuntimeWarning)
            w = w / total
        near = np.abs(pts[:, None] - atoms[None, :]).argmin(axis=1)
        np.add.at(weights[j], near, w)
    # exact renormalisation against accumulated rounding
    weights /= weights.sum(axis=1, keepdims=True)
    return StepRelaxedControl(cells, atoms, weights, (lo, hi))


def simplex_points(k: int, resolution: int):
    """All weight vectors in the k-simplex with entries in ``{0, 1/res, ..., 1}``.

    Lexicographic order; this is the documented tie-breaking order for the
    exhaustive optimiser.
    """
    def rec(left, slots):
        if slots == 1:
            yield (left,)
            return
        for v in range(left, -1, -1):
            for rest in rec(left - v, slots - 1):
                yield (v,) + rest

    return np.array(list(rec(resolution, k)), dtype=float) / resolution


def n_simplex_points(k: int, resolution: int) -> int:
    return math.comb(resolution + k - 1, k - 1)
