"""Two-dimensional Riemannian metrics, regular curves and arc-length reparameterization."""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad, solve_ivp

from .errors import DomainExitError, DomainFault, PositivityError, RegularityError
from .expr import Expression, as_expression, constant
from .profile import MuProfile

PROBE_POINTS = 64
UNIT_SPEED_TOL = 1e-8
REGULARITY_FLOOR = 1e-12


# -- domains -------------------------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """Open coordinate box intersected with ``constraint > 0`` for every constraint."""

    bounds: tuple = ((-math.inf, math.inf), (-math.inf, math.inf))
    constraints: tuple = ()
    coords: tuple = ("u", "v")
    _checks: list = field(default_factory=list, init=False, compare=False, repr=False)

    def __post_init__(self):
        for c in self.constraints:
            self._checks.append(c.function(list(self.coords)))

    def contains(self, u: float, v: float) -> bool:
        (ulo, uhi), (vlo, vhi) = self.bounds
        if not (ulo < u < uhi and vlo < v < vhi):
            return False
        try:
            return all(check(u, v) > 0 for check in self._checks)
        except DomainFault:
            return False

    def probe_axes(self, n: int = PROBE_POINTS, span: float = 10.0):
        """Cell-centred probe coordinates; unbounded sides are truncated to ``span``."""
        axes = []
        for lo, hi in self.bounds:
            if math.isinf(lo) and math.isinf(hi):
                lo, hi = -span, span
            elif math.isinf(hi):
                hi = lo + span
            elif math.isinf(lo):
                lo = hi - span
            step = (hi - lo) / n
            axes.append(lo + step * (np.arange(n) + 0.5))
        return axes

    def probe_points(self, n: int = PROBE_POINTS):
        us, vs = self.probe_axes(n)
        return [(float(u), float(v)) for u in us for v in vs if self.contains(u, v)]


# -- metrics -------------------------------------------------------------------------

class Metric2D:
    """Metric ``E du^2 + 2F du dv + G dv^2`` with expression components.

    Positivity (``E > 0``, ``G > 0``, ``EG - F^2 > 0``) is checked on a 64x64 probe grid
    of the domain at construction.
    """

    def __init__(self, E, F, G, coords: Sequence[str] = ("u", "v"), domain: Domain | None = None,
                 params: Mapping[str, float] | None = None, validate: bool = True, name: str = ""):
        coords = tuple(coords)
        names = list(coords) + list(params or {})
        comps = []
        for c in (E, F, G):
            e = as_expression(c, names)
            if params:
                e = e.substitute(params)
            comps.append(Expression(e.node, coords))
        self.E, self.F, self.G = comps
        self.coords = coords
        self.domain = domain or Domain(coords=coords)
        self.name = name
        self._fE, self._fF, self._fG = (c.function(list(coords)) for c in comps)
        if validate:
            self.validate()

    def __repr__(self):
        return f"Metric2D(E={self.E}, F={self.F}, G={self.G}, coords={self.coords})"

    def components(self, u: float, v: float):
        return self._fE(u, v), self._fF(u, v), self._fG(u, v)

    def validate(self):
        pts = self.domain.probe_points()
        if not pts:
            raise PositivityError("probe grid has no points inside the domain")
        for u, v in pts:
            try:
                E, F, G = self.components(u, v)
            except DomainFault as exc:
                raise PositivityError(f"metric undefined at ({u:g}, {v:g}): {exc}") from None
            if not (E > 0 and G > 0 and E * G - F * F > 0):
                raise PositivityError(f"metric not positive definite at ({u:g}, {v:g})")

    def norm(self, u: float, v: float, du: float, dv: float) -> float:
        E, F, G = self.components(u, v)
        q = E * du * du + 2 * F * du * dv + G * dv * dv
        if q < 0:
            raise DomainFault(f"negative quadratic form at ({u:g}, {v:g})")
        return math.sqrt(q)

    def scaled(self, factor: Expression, validate: bool = True) -> "Metric2D":
        f2 = factor * factor
        return Metric2D(self.E * f2, self.F * f2, self.G * f2, self.coords, self.domain,
                        validate=validate, name=f"({self.name})*f^2" if self.name else "")


def conformal_scale(g: Metric2D, f) -> Metric2D:
    """Return ``f**2 * g`` after checking ``f > 0`` on the probe grid."""
    f = as_expression(f, g.coords)
    f = Expression(f.node, g.coords)
    fn = f.function(list(g.coords))
    for u, v in g.domain.probe_points():
        try:
            val = fn(u, v)
        except DomainFault as exc:
            raise PositivityError(f"conformal factor undefined at ({u:g}, {v:g}): {exc}") from None
        if not val > 0:
            raise PositivityError(f"conformal factor not positive at ({u:g}, {v:g})")
    return g.scaled(f)


# -- curves --------------------------------------------------------------------------

class Curve2D:
    """Parameterized curve ``t -> (u(t), v(t))`` with symbolic derivatives."""

    def __init__(self, u, v, t_range=(-math.inf, math.inf), var: str = "t",
                 params: Mapping[str, float] | None = None, periodic: bool = False, name: str = ""):
        names = [var, *(params or {})]
        comps = []
        for c in (u, v):
            e = as_expression(c, names)
            if params:
                e = e.substitute(params)
            comps.append(Expression(e.node, (var,)))
        self.u, self.v = comps
        self.var = var
        lo, hi = (float(x) for x in t_range)
        if not lo < hi:
            raise ValueError(f"parameter interval {t_range} is empty")
        self.t_range = (lo, hi)
        self.periodic = periodic
        self.name = name
        self.du, self.dv = self.u.diff(var), self.v.diff(var)
        self._f = [e.function([var]) for e in (self.u, self.v, self.du, self.dv)]

    def __repr__(self):
        return f"Curve2D(u={self.u}, v={self.v}, t_range={self.t_range})"

    def point(self, t: float):
        return self._f[0](t), self._f[1](t)

    def velocity(self, t: float):
        return self._f[2](t), self._f[3](t)

    def reparameterize(self, t_of_x, x_range, var: str = "x") -> "Curve2D":
        """Compose with a substitution ``t = t_of_x(x)`` given as an expression in ``var``."""
        sub = as_expression(t_of_x, (var,))
        u = self.u.substitute({self.var: sub})
        v = self.v.substitute({self.var: sub})
        return Curve2D(Expression(u.node, (var,)), Expression(v.node, (var,)), x_range, var=var,
                       periodic=self.periodic, name=self.name)


def tangent_norm(g: Metric2D, c: Curve2D, t: float) -> float:
    """``|c'(t)|_g``; raises DomainExitError when ``c(t)`` leaves the metric domain."""
    u, v = c.point(t)
    if not g.domain.contains(u, v):
        raise DomainExitError(f"curve point ({u:g}, {v:g}) at t={t:g} is outside the metric domain")
    du, dv = c.velocity(t)
    return g.norm(u, v, du, dv)


def validate_curve(c: Curve2D, g: Metric2D, n: int = 257, span: float = 10.0):
    """Probe domain membership and regularity on a grid of the parameter interval.

    Probes walk outward from the middle of the grid. An evaluation fault (such as
    overflow) in the outer half of a side ends the walk on that side; the
    arc-length integration reports it if the curve ever gets there.
    """
    lo, hi = c.t_range
    if math.isinf(lo) and math.isinf(hi):
        lo, hi = -span, span
    elif math.isinf(hi):
        hi = lo + span
    elif math.isinf(lo):
        lo = hi - span
    step = (hi - lo) / n
    ts = lo + step * (np.arange(n) + 0.5)
    mid = n // 2
    for side in (ts[mid:], ts[:mid][::-1]):
        for i, t in enumerate(side):
            try:
                speed = tangent_norm(g, c, float(t))
            except DomainFault:
                if i < len(side) // 2:
                    raise
                break
            if speed < REGULARITY_FLOOR:
                raise RegularityError(f"curve is singular near t={t:g}")


def curve_length(c: Curve2D, g: Metric2D, interval) -> float:
    """Adaptive quadrature of ``|c'|_g`` over a finite interval (absolute error ~1e-10)."""
    a, b = (float(x) for x in interval)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("curve_length needs a finite interval")
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, _ = quad(lambda t: tangent_norm(g, c, t), a, b, epsabs=1e-11, epsrel=1e-13, limit=400)
        except IntegrationWarning:
            val, _ = quad(lambda t: tangent_norm(g, c, t), a, b, epsabs=1e-11, epsrel=1e-13, limit=4000)
    return val


# -- arc length ----------------------------------------------------------------------

class ArcLengthCurve:
    """Monotone map ``s -> t(s)`` solving ``dt/ds = +-1/|c'(t)|_g`` with dense output.

    The solution is extended lazily in chunks, so tail queries only integrate as far as
    they need. ``direction`` is +1 (increasing t) or -1.
    """

    def __init__(self, c: Curve2D, g: Metric2D, t0: float, direction: int = 1,
                 rtol: float = 1e-10, atol: float = 1e-12, s_max: float = math.inf):
        if direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        self.curve, self.metric = c, g
        self.t0, self.direction = float(t0), direction
        self.rtol, self.atol = rtol, atol
        self.s_limit = s_max
        lo, hi = c.t_range
        self.t_end = hi if direction > 0 else lo
        self._segments = []  # (s_start, s_stop, dense)
        self._s_reached = 0.0
        self._y = self.t0
        self.terminated = None  # parameter end reached at finite length
        self._lock = threading.RLock()
        self._speed(self.t0)

    def _speed(self, t):
        end = self.t_end
        if math.isfinite(end) and (t - end) * self.direction >= 0:
            # at or past a finite parameter end (e.g. an axis): clamp, skip the open-domain test
            u, v = self.curve.point(end)
            speed = self.metric.norm(u, v, *self.curve.velocity(end))
        else:
            speed = tangent_norm(self.metric, self.curve, t)
        if speed < REGULARITY_FLOOR:
            raise RegularityError(f"|c'(t)| = {speed:.3g} below regularity floor at t={t:g}")
        return speed

    def _rhs(self, s, y):
        return [self.direction / self._speed(y[0])]

    @property
    def s_reached(self):
        return self._s_reached

    def extend_to(self, s: float):
        if s <= self._s_reached:
            return
        with self._lock:
            self._extend(s)

    def _extend(self, s):
        if s <= self._s_reached:
            return
        if self.terminated is not None:
            raise DomainExitError(f"curve parameter ends at arc length {self.terminated:g} < {s:g}")
        s_target = max(s, 2 * self._s_reached, 1.0)
        t_end = self.t_end
        events = []
        if math.isfinite(t_end):
            def hit_end(_, y):
                return y[0] - t_end
            hit_end.terminal = True
            events.append(hit_end)
        sol = solve_ivp(self._rhs, (self._s_reached, s_target), [self._y], method="DOP853",
                        rtol=self.rtol, atol=self.atol, dense_output=True, events=events or None)
        if sol.status == -1:
            raise DomainExitError(sol.message)
        s_stop = float(sol.t[-1])
        self._segments.append((self._s_reached, s_stop, sol.sol))
        self._s_reached = s_stop
        self._y = float(sol.y[0, -1])
        if sol.status == 1:
            self.terminated = s_stop
            if s > s_stop:
                raise DomainExitError(f"curve parameter ends at arc length {s_stop:g} < {s:g}")

    def t_of(self, s: float) -> float:
        if s < 0:
            raise ValueError("arc length is measured from t0 and must be non-negative")
        if s == 0:
            return self.t0
        self.extend_to(s)
        for a, b, dense in list(self._segments):
            if s <= b:
                return float(dense(s)[0])
        return float(self._segments[-1][2](s)[0])

    def point(self, s: float):
        return self.curve.point(self.t_of(s))

    def unit_speed_error(self, s: float, h: float = 1e-4) -> float:
        """``| |c'(t(s))| * |dt/ds| - 1 |`` using the derivative of the dense interpolant."""
        t = self.t_of(s)
        lo = max(s - h, 0.0)
        dt = (self.t_of(s + h) - self.t_of(lo)) / (s + h - lo)
        return abs(self._speed(t) * abs(dt) - 1.0)


def arclength_reparam(c: Curve2D, g: Metric2D, t0: float, direction: int = 1, **kw) -> ArcLengthCurve:
    return ArcLengthCurve(c, g, t0, direction, **kw)


# -- curvature of warped metrics ------------------------------------------------------

def warped_curvature(mu: MuProfile, x: float, tol: float = 1e-12) -> float:
    """Gaussian curvature ``-mu''/mu`` of ``dx^2 + mu(x)^2 dtheta^2``."""
    m = mu(x)
    if m <= tol:
        raise DomainFault(f"mu({x:g}) = {m:g} is not positive")
    return -mu.derivative(x, 2) / m


def warped_metric_curvature(E: Expression, G: Expression, var: str, chain: Expression | None = None) -> Expression:
    """Symbolic curvature of ``E dw^2 + G dtheta^2`` where ``d/dw = chain * d/d(var)``.

    With ``chain`` omitted ``w`` is ``var`` itself. The formula is
    ``K = -(1/sqrt(EG)) d/dw( (d sqrt(G)/dw) / sqrt(E) )``.
    """
    def d(e):
        out = e.diff(var)
        return out if chain is None else chain * out

    sqE, sqG = E.apply("sqrt"), G.apply("sqrt")
    return -(d(d(sqG) / sqE)) / (sqE * sqG)


def euclidean_metric(coords=("u", "v")) -> Metric2D:
    one = constant(1.0, coords)
    return Metric2D(one, constant(0.0, coords), one, coords)
