"""Killing-length profiles: the norm of the Killing field along an arc-length parameter."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainFault, SpecInconsistencyError
from .expr import Expression, parse

_EPS = np.finfo(float).eps


def fd_derivative(f: Callable[[float], float], x: float, order: int = 1) -> float:
    """Central difference with one Richardson step.

    First derivatives use ``h = eps**(1/3) * max(1, |x|)``; second derivatives use
    ``eps**(1/6)`` because Richardson makes the stencil fourth order.
    """
    scale = max(1.0, abs(x))
    if order == 1:
        h = _EPS ** (1 / 3) * scale

        def d(h):
            return (f(x + h) - f(x - h)) / (2 * h)
    elif order == 2:
        h = _EPS ** (1 / 6) * scale
        fx = f(x)

        def d(h):
            return (f(x + h) - 2 * fx + f(x - h)) / (h * h)
    else:
        raise ValueError("order must be 1 or 2")
    return (4 * d(h / 2) - d(h)) / 3


@dataclass(frozen=True)
class TailModel:
    """Extrapolation law fitted to the last samples of a table."""

    kind: str  # "power" or "exponential"
    anchor: float
    value: float
    rate: float

    def __call__(self, s):
        if self.kind == "power":
            return self.value * (abs(s) / abs(self.anchor)) ** self.rate
        return self.value * math.exp(self.rate * (s - self.anchor))


def _fit_tail(s, mu):
    s = np.asarray(s, float)
    logm = np.log(mu)
    best = None
    if np.all(s > 0) or np.all(s < 0):
        ls = np.log(np.abs(s))
        A = np.vstack([ls, np.ones_like(ls)]).T
        coef, res, *_ = np.linalg.lstsq(A, logm, rcond=None)
        err = float(np.sum((A @ coef - logm) ** 2))
        best = (err, TailModel("power", float(s[-1]), float(mu[-1]), float(coef[0])))
    A = np.vstack([s, np.ones_like(s)]).T
    coef, *_ = np.linalg.lstsq(A, logm, rcond=None)
    err = float(np.sum((A @ coef - logm) ** 2))
    if best is None or err < best[0] - 1e-12:
        best = (err, TailModel("exponential", float(s[-1]), float(mu[-1]), float(coef[0])))
    return best[1]


@dataclass(frozen=True)
class MuProfile:
    """Killing length along the base parameter.

    Exactly one of ``expression``, ``table`` or ``func`` is set. ``domain`` may be
    unbounded; ``zeros`` lists known zeros of the profile.
    """

    expression: Expression | None = None
    table: tuple | None = None
    func: Callable[[float], float] | None = None
    domain: tuple = (-math.inf, math.inf)
    zeros: tuple = ()
    var: str = "s"
    label: str = ""
    _impl: dict = field(default_factory=dict, init=False, compare=False, repr=False)

    def __post_init__(self):
        given = [x is not None for x in (self.expression, self.table, self.func)]
        if sum(given) != 1:
            raise ValueError("exactly one of expression, table or func is required")
        lo, hi = self.domain
        if not lo < hi:
            raise SpecInconsistencyError(f"empty domain {self.domain}")
        impl = self._impl
        if self.expression is not None:
            e = self.expression
            impl["f"] = e.function([self.var])
            d1 = e.diff(self.var)
            impl["d1"] = d1.function([self.var])
            impl["d2"] = d1.diff(self.var).function([self.var])
        elif self.table is not None:
            s, m = (np.asarray(c, float) for c in self.table)
            if s.ndim != 1 or s.shape != m.shape or len(s) < 2:
                raise SpecInconsistencyError("table needs at least two (s, mu) rows")
            if not np.all(np.isfinite(s)) or not np.all(np.isfinite(m)):
                raise SpecInconsistencyError("table values must be finite")
            if np.any(np.diff(s) <= 0):
                raise SpecInconsistencyError("table abscissae must be strictly increasing")
            if np.any(m < 0):
                raise SpecInconsistencyError("table values must be non-negative")
            impl["pchip"] = PchipInterpolator(s, m, extrapolate=False)
            # each tail law is fitted to positive samples on its own side of s = 0
            n = min(8, len(s))
            pos = (m[-n:] > 0) & ((s[-n:] > 0) if s[-1] > 0 else True)
            neg = (m[:n] > 0) & ((s[:n] < 0) if s[0] < 0 else True)
            impl["right"] = _fit_tail(s[-n:][pos], m[-n:][pos]) if pos.sum() >= 2 else None
            impl["left"] = _fit_tail(s[:n][neg][::-1], m[:n][neg][::-1]) if neg.sum() >= 2 else None
            impl["range"] = (float(s[0]), float(s[-1]))
        else:
            impl["f"] = self.func

    # -- construction helpers --------------------------------------------------------

    @classmethod
    def from_expression(cls, source, domain=(-math.inf, math.inf), zeros=(), var="s", params=None, label=""):
        e = source if isinstance(source, Expression) else parse(source, [var, *(params or {})])
        if params:
            e = e.substitute(params)
        return cls(expression=e, domain=tuple(domain), zeros=tuple(zeros), var=var, label=label or str(e))

    @classmethod
    def from_table(cls, rows: Sequence[Sequence[float]], domain=None, zeros=(), label="table"):
        rows = list(rows)
        s = tuple(float(r[0]) for r in rows)
        m = tuple(float(r[1]) for r in rows)
        if domain is None:
            domain = (s[0], s[-1])
        return cls(table=(s, m), domain=tuple(domain), zeros=tuple(zeros), label=label)

    @classmethod
    def from_function(cls, func, domain=(-math.inf, math.inf), zeros=(), label="function"):
        return cls(func=func, domain=tuple(domain), zeros=tuple(zeros), label=label)

    # -- evaluation ------------------------------------------------------------------

    def __call__(self, s: float) -> float:
        impl = self._impl
        if self.table is None:
            return float(impl["f"](s))
        lo, hi = impl["range"]
        if s < lo:
            if impl["left"] is None:
                raise DomainFault(f"s={s} left of tabulated range")
            return impl["left"](s)
        if s > hi:
            if impl["right"] is None:
                raise DomainFault(f"s={s} right of tabulated range")
            return impl["right"](s)
        return float(impl["pchip"](s))

    def derivative(self, s: float, order: int = 1) -> float:
        if self.expression is not None:
            return float(self._impl["d1" if order == 1 else "d2"](s))
        return fd_derivative(self, s, order)

    @property
    def is_symbolic(self) -> bool:
        return self.expression is not None

    def derivative_expression(self, order=1) -> Expression:
        e = self.expression
        for _ in range(order):
            e = e.diff(self.var)
        return e

    def extrapolates(self, s: float) -> bool:
        """True when ``s`` lies outside the tabulated support."""
        if self.table is None:
            return False
        lo, hi = self._impl["range"]
        return s < lo or s > hi

    def scaled(self, c: float) -> "MuProfile":
        """The profile ``c * mu`` (same domain and zeros)."""
        if self.expression is not None:
            return MuProfile(expression=self.expression * c, domain=self.domain, zeros=self.zeros,
                             var=self.var, label=f"{c!r}*({self.label})")
        if self.table is not None:
            s, m = self.table
            return MuProfile(table=(s, tuple(c * x for x in m)), domain=self.domain, zeros=self.zeros,
                             label=f"{c!r}*({self.label})")
        f = self.func
        return MuProfile(func=lambda s: c * f(s), domain=self.domain, zeros=self.zeros,
                         label=f"{c!r}*({self.label})")

    def describe(self) -> dict:
        if self.expression is not None:
            rep = {"expression": str(self.expression)}
        elif self.table is not None:
            rep = {"table_rows": len(self.table[0])}
        else:
            rep = {"function": self.label}
        rep["domain"] = list(self.domain)
        rep["zeros"] = list(self.zeros)
        return rep
