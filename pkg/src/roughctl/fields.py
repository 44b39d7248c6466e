"""User-supplied coefficient fields with evaluation and partial-derivative contracts."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidParameterError

ARITIES = {
    "sigma_tx": ("t", "x"),
    "b_txu": ("t", "x", "u"),
    "sigma_txu": ("t", "x", "u"),
    "ell_txu": ("t", "x", "u"),
}
_PARTIALS = {
    "sigma_tx": {"t", "x", "xx"},
    "b_txu": {"t", "x", "u"},
    "sigma_txu": {"t", "x", "u", "xx", "uu", "xu"},
    "ell_txu": {"t", "x", "u"},
}


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A coefficient ``sigma(t, x)``, ``b(t, x, u)``, ``sigma(t, x, u)`` or ``ell(t, x, u)``.

    ``fn`` must accept numpy arrays and broadcast.  Partial derivatives are
    taken from ``partials`` when supplied (keys ``"t"``, ``"x"``, ``"u"``,
    ``"xx"``, ``"uu"``, ``"xu"``) and otherwise by central finite differences.
    ``bounds`` holds declared constants (sup norms, Lipschitz constants) that
    are reported in diagnostics but never enforced.
    """

    fn: Callable
    arity: str
    partials: Mapping[str, Callable] = field(default_factory=dict)
    time_dependent: bool = True
    h_fd: float = 1e-5
    h_fd2: float = 1e-4
    bounds: Mapping[str, float] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.arity not in ARITIES:
            raise InvalidParameterError(f"unknown arity {self.arity!r}")
        extra = set(self.partials) - _PARTIALS[self.arity]
        if extra:
            raise InvalidParameterError(f"partials {sorted(extra)} do not apply to {self.arity}")

    @property
    def control_free(self) -> bool:
        return self.arity == "sigma_tx"

    def __call__(self, *args):
        return self.fn(*args)

    def has_analytic(self, which: str) -> bool:
        return which in self.partials

    def partial(self, which: str, *args, analytic: bool = True):
        """Evaluate the partial derivative ``which`` at ``args``."""
        if which not in _PARTIALS[self.arity]:
            raise InvalidParameterError(f"partial {which!r} not defined for {self.arity}")
        if analytic and which in self.partials:
            return self.partials[which](*args)
        return self._fd(which, args)

    def _fd(self, which: str, args):
        names = ARITIES[self.arity]
        args = [np.asarray(a, dtype=float) for a in args]
        f = self.fn
        if len(which) == 1:
            i = names.index(which)
            h = self.h_fd
            up = list(args)
            dn = list(args)
            up[i] = args[i] + h
            dn[i] = args[i] - h
            return (f(*up) - f(*dn)) / (2 * h)
        i, j = names.index(which[0]), names.index(which[1])
        h = self.h_fd2
        if i == j:
            up = list(args)
            dn = list(args)
            up[i] = args[i] + h
            dn[i] = args[i] - h
            return (f(*up) - 2 * f(*args) + f(*dn)) / h**2

        def shifted(si, sj):
            a = list(args)
            a[i] = args[i] + si * h
            a[j] = args[j] + sj * h
            return f(*a)

        return (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)) / (4 * h * h)

    def as_txu(self) -> "ScalarField":
        """View a control-free diffusion ``sigma(t, x)`` as ``sigma(t, x, u)``."""
        if self.arity != "sigma_tx":
            return self
        fn = self.fn
        parts = {k: (lambda p: (lambda t, x, u: p(t, x)))(p) for k, p in self.partials.items()}
        return ScalarField(
            lambda t, x, u: fn(t, x),
            "sigma_txu",
            parts,
            self.time_dependent,
            self.h_fd,
            self.h_fd2,
            self.bounds,
            self.name,
        )


def constant_field(value: float, arity: str, name: str = "") -> ScalarField:
    """Field identically equal to ``value``, with exact zero partials."""
    nargs = len(ARITIES[arity])

    def fn(*args):
        return np.full(np.broadcast(*args[:nargs]).shape, float(value)) if any(
            np.ndim(a) for a in args
        ) else float(value)

    def zero(*args):
        return fn(*args) * 0.0

    parts = {k: zero for k in _PARTIALS[arity]}
    return ScalarField(fn, arity, parts, time_dependent=False, name=name or f"const({value})")
