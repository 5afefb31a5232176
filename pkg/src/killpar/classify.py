"""Divergence detection for tail integrals and the parabolicity decision procedure."""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Mapping

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq, minimize_scalar

from .errors import (
    DomainFault,
    IncompleteCurveError,
    NonFiniteIntegrandError,
    SpecInconsistencyError,
)
from .profile import MuProfile

log = logging.getLogger(__name__)

DIVERGENT, CONVERGENT, INCONCLUSIVE = "divergent", "convergent", "inconclusive"
PARABOLIC, HYPERBOLIC = "parabolic", "hyperbolic"

RULE_COMPACT_CURVE = "compact-curve"
RULE_CIRCLE_BASE = "circle-base"
RULE_COMPACT_FIBER = "compact-fiber-two-tails"
RULE_LINE_BASE = "line-base-two-tails"
RULE_BOUNDED_MU = "bounded-mu shortcut"
RULE_BERGER = "berger-sphere shortcut"


@dataclass(frozen=True)
class Policy:
    """Window and threshold configuration for :func:`tail_integral`.

    ``divergence_threshold`` and both Cauchy tolerances are relative to the
    integral over the first window / the running total, so verdicts do not depend
    on the overall scale of the integrand.
    """

    w0: float = 1.0
    k_max: int = 40
    divergence_threshold: float = 1e6
    p_margin: float = 0.1
    cauchy_tol: float = 1e-12
    cauchy_rtol: float = 5e-3
    harmonic_margin: float = 0.01
    k_min: int = 3
    stable_windows: int = 2
    fit_points: int = 33
    trend_factor: float = 8.0

    def __post_init__(self):
        if not self.w0 > 0:
            raise ValueError("w0 must be positive")
        if self.k_max < 2 or self.k_min < 2:
            raise ValueError("k_max and k_min must be at least 2")
        if not 0 < self.harmonic_margin < self.p_margin:
            raise ValueError("need 0 < harmonic_margin < p_margin")
        if self.stable_windows < 1:
            raise ValueError("stable_windows must be >= 1")
        if self.trend_factor < 0:
            raise ValueError("trend_factor must be non-negative")

    @classmethod
    def from_mapping(cls, data: Mapping | None) -> "Policy":
        if not data:
            return cls()
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown policy keys: {sorted(unknown)}")
        kw = {}
        for k, v in data.items():
            kw[k] = int(v) if known[k] == "int" else float(v)
        return cls(**kw)

    def updated(self, data: Mapping | None) -> "Policy":
        if not data:
            return self
        base = {f.name: getattr(self, f.name) for f in fields(self)}
        base.update(data)
        return Policy.from_mapping(base)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class DivergenceVerdict:
    verdict: str
    direction: int
    start: float
    trace: tuple  # ((s_end, partial integral), ...)
    p_estimate: float | None
    tail_model: dict
    window: int
    reason: str
    value: float
    remainder: float | None = None
    warnings: tuple = ()

    @property
    def bound(self) -> float | None:
        """Estimated value of the whole tail integral when it converges."""
        if self.verdict != CONVERGENT:
            return None
        return self.value + (self.remainder or 0.0)

    def to_dict(self) -> dict:
        return {
            "direction": "+inf" if self.direction > 0 else "-inf",
            "start": self.start,
            "verdict": self.verdict,
            "reason": self.reason,
            "window": self.window,
            "p_estimate": self.p_estimate,
            "partial_trace": [list(pair) for pair in self.trace],
            "tail_model": dict(self.tail_model),
            "value": self.value,
            "remainder": self.remainder,
            "warnings": list(self.warnings),
        }


# -- tail integrals ------------------------------------------------------------------

def _log_window_mass(q, L):
    """log of (exp(q L) - 1)/q, the power-law mass of a window of log-width L."""
    qL = q * L
    if abs(qL) < 1e-8:
        return math.log(L) + qL / 2
    if q > 0:
        return qL + math.log(-math.expm1(-qL)) - math.log(q)
    return math.log(-math.expm1(qL)) - math.log(-q)


def _power_exponent(ra, rb, rc, inc_prev, inc):
    """Exponent p such that r^-p puts mass ratio inc/inc_prev on [rb,rc] vs [ra,rb]."""
    if inc_prev <= 0.0 and inc <= 0.0:
        return math.inf
    if inc <= 0.0:
        return math.inf
    if inc_prev <= 0.0:
        return -math.inf
    target = math.log(inc / inc_prev)
    l1, l2 = math.log(rb / ra), math.log(rc / rb)

    def phi(q):
        return q * l1 + _log_window_mass(q, l2) - _log_window_mass(q, l1) - target

    qlo, qhi = -200.0, 200.0
    try:
        flo, fhi = phi(qlo), phi(qhi)
    except (OverflowError, ValueError):
        return math.nan
    if flo > 0:
        return 1.0 - qlo
    if fhi < 0:
        return 1.0 - qhi
    q = brentq(phi, qlo, qhi, xtol=1e-13, rtol=1e-13)
    return 1.0 - q


def window_integral(g, a, b, epsabs, notes):
    """Adaptive quadrature of a non-negative integrand, splitting into panels if needed."""
    def h(x):
        v = g(x)
        if not math.isfinite(v):
            raise NonFiniteIntegrandError(f"integrand is {v} at distance {x:g}")
        if v < 0:
            raise NonFiniteIntegrandError(f"integrand is negative ({v:g}) at distance {x:g}")
        return v

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            return quad(h, a, b, epsabs=epsabs, epsrel=1e-10, limit=200)[0]
        except IntegrationWarning:
            pass
    # hard window: split into panels and accept the best effort
    edges = np.linspace(a, b, 65)
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for lo, hi in zip(edges[:-1], edges[1:]):
            total += quad(h, lo, hi, epsabs=epsabs / 64, epsrel=1e-10, limit=200)[0]
    notes.append(f"quadrature needed panel splitting on [{a:g}, {b:g}]")
    return total


def _fit_tail_model(g, s0, sign, a, b, npts, radius):
    """Least-squares power and exponential fits of the integrand on one window."""
    if a <= 0:
        xs = np.linspace(b / npts, b, npts)
    else:
        xs = np.geomspace(a, b, npts)
    vals = np.array([g(x) for x in xs])
    out = {"kind": "none", "p": None, "rate": None, "r2_power": None, "r2_exponential": None}
    if np.any(vals <= 0):
        out["kind"] = "underflow"
        return out
    y = np.log(vals)
    r = np.array([radius(x) for x in xs])
    s = s0 + sign * xs

    def fit(x):
        A = np.vstack([x, np.ones_like(x)]).T
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        ss = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 if ss == 0 else 1.0 - float(np.sum(resid**2)) / ss
        return float(coef[0]), r2

    slope_p, r2p = fit(np.log(r))
    slope_e, r2e = fit(np.abs(s))
    out.update(p=-slope_p, rate=-slope_e, r2_power=r2p, r2_exponential=r2e)
    if max(r2p, r2e) >= 0.99:
        out["kind"] = "power" if r2p >= r2e else "exponential"
    elif np.ptp(y) < 1e-12:
        out["kind"] = "power"
    return out


def tail_integral(f: Callable[[float], float], s0: float, direction: int = 1,
                  policy: Policy | None = None, extrapolates: Callable[[float], bool] | None = None
                  ) -> DivergenceVerdict:
    """Decide whether ``int_{s0}^{+-inf} f`` diverges from dyadic window integrals.

    Window ``k`` covers distances ``[w0 2^(k-1), w0 2^k]`` from ``s0`` (window 0 is
    ``[0, w0]``). After each window the exponent ``p`` of an ``r^-p`` law reproducing
    the last two window masses is solved for; verdicts follow the margins of ``policy``.
    """
    pol = policy or Policy()
    sign = 1 if direction > 0 else -1

    def g(x):
        return float(f(s0 + sign * x))

    edges = [0.0] + [pol.w0 * 2.0**k for k in range(pol.k_max + 1)]
    incs, trace, p_hist, notes = [], [], [], []
    total = 0.0
    verdict, reason = INCONCLUSIVE, "window budget exhausted"
    k = 0
    for k in range(pol.k_max + 1):
        a, b = edges[k], edges[k + 1]
        inc = window_integral(g, a, b, max(total, 1e-300) * 1e-15, notes)
        incs.append(inc)
        total += inc
        trace.append((s0 + sign * b, total))
        if extrapolates is not None and extrapolates(s0 + sign * b):
            msg = "verdict relies on tail-model extrapolation beyond tabulated data"
            if msg not in notes:
                notes.append(msg)

        ref = next((x for x in incs if x > 0), 0.0)
        if ref > 0 and total / ref > pol.divergence_threshold:
            verdict, reason = DIVERGENT, "partial integral exceeded divergence threshold"
            break
        if k >= 2:
            ra, rb, rc = (_radius(edges[i], s0, sign, edges, k, pol.w0) for i in (k - 1, k, k + 1))
            p_hist.append(_power_exponent(ra, rb, rc, incs[k - 1], inc))
            rel = inc / total if total > 0 else 0.0
            if total > 0 and rel < pol.cauchy_tol and inc <= incs[k - 1]:
                verdict, reason = CONVERGENT, "Cauchy increments below tolerance"
                break
            if k >= pol.k_min and len(p_hist) >= pol.stable_windows:
                recent = p_hist[-pol.stable_windows:]
                if any(math.isnan(p) for p in recent):
                    continue
                # an exponent still drifting toward 1 (as for 1/(s log s)) is not settled
                drift = pol.trend_factor * (p_hist[-1] - p_hist[-2]) if len(p_hist) >= 2 else 0.0
                if all(p <= 1 - pol.p_margin - max(drift, 0.0) for p in recent):
                    verdict, reason = DIVERGENT, "tail decays slower than 1/s"
                    break
                if all(abs(p - 1) <= pol.harmonic_margin for p in recent):
                    verdict, reason = DIVERGENT, "logarithmic growth of the partial integral"
                    break
                if all(p >= 1 + pol.p_margin - min(drift, 0.0) for p in recent) and rel < pol.cauchy_rtol:
                    verdict, reason = CONVERGENT, "tail decays faster than 1/s and increments settled"
                    break

    radius = _radius_fn(s0, sign, edges, k, pol.w0)
    model = _fit_tail_model(g, s0, sign, edges[k], edges[k + 1], pol.fit_points, radius)
    remainder = None
    if verdict == CONVERGENT:
        remainder = _remainder(g, edges, incs, total, k, pol, notes)
    return DivergenceVerdict(
        verdict=verdict, direction=sign, start=float(s0), trace=tuple(trace),
        p_estimate=p_hist[-1] if p_hist else None, tail_model=model, window=k,
        reason=reason, value=total, remainder=remainder, warnings=tuple(notes),
    )


def _remainder(g, edges, incs, total, k, pol, notes):
    """Mass beyond the decision window: more windows, then a geometric estimate."""
    extra = 0.0
    before = incs[-2] if len(incs) >= 2 else 0.0
    last = incs[-1]
    for j in range(k + 1, pol.k_max + 1):
        if last <= 1e-15 * (total + extra):
            break
        new = window_integral(g, edges[j], edges[j + 1], (total + extra) * 1e-16, notes)
        extra += new
        before, last = last, new
    ratio = last / before if before > 0 else 0.0
    return extra + (last * ratio / (1 - ratio) if ratio < 1 else math.inf)


def _radius_fn(s0, sign, edges, k, w0):
    lo_s, hi_s = s0 + sign * edges[max(k - 1, 0)], s0 + sign * edges[k + 1]
    if lo_s * hi_s > 0 and min(abs(lo_s), abs(hi_s)) >= w0 / 2:
        return lambda x: abs(s0 + sign * x)
    return lambda x: x + w0


def _radius(x, s0, sign, edges, k, w0):
    return _radius_fn(s0, sign, edges, k, w0)(x)


# -- zeros ---------------------------------------------------------------------------

def detect_zeros(mu: Callable[[float], float], interval, n: int = 4096, rel_tol: float = 1e-10,
                 neighbourhood: int = 16) -> list:
    """Zeros of ``mu`` on ``interval`` from a sign/threshold scan refined by bisection.

    Sign changes are refined with Brent's method. Interior local minima of ``|mu|`` are
    refined by bounded minimisation and accepted when the minimum is below
    ``rel_tol`` times the largest ``|mu|`` in the surrounding grid cells.
    """
    a, b = (float(x) for x in interval)
    xs = np.linspace(a, b, n)
    vals = np.empty(n)
    for i, x in enumerate(xs):
        try:
            vals[i] = mu(float(x))
        except DomainFault:
            vals[i] = np.nan
    zeros = []
    absv = np.abs(vals)
    for i in range(n):
        v = vals[i]
        if np.isnan(v):
            continue
        lo_i, hi_i = max(0, i - neighbourhood), min(n, i + neighbourhood + 1)
        local = np.nanmax(absv[lo_i:hi_i])
        if v == 0.0:
            zeros.append(float(xs[i]))
            continue
        if i + 1 < n and not np.isnan(vals[i + 1]) and v * vals[i + 1] < 0:
            zeros.append(float(brentq(mu, xs[i], xs[i + 1], xtol=1e-14, rtol=1e-15)))
            continue
        if 0 < i < n - 1 and absv[i] <= absv[i - 1] and absv[i] < absv[i + 1]:
            res = minimize_scalar(lambda x: abs(mu(x)), bounds=(xs[i - 1], xs[i + 1]), method="bounded",
                                  options={"xatol": 1e-13})
            if abs(mu(res.x)) <= rel_tol * local:
                zeros.append(float(res.x))
    merged = []
    for z in sorted(zeros):
        if not merged or z - merged[-1] > 1e-9 * max(1.0, abs(z)) + 2 * (b - a) / n * 1e-6:
            merged.append(z)
    if len(merged) > 2:
        log.warning("mu has %d zeros on [%g, %g]; at most two are geometrically possible", len(merged), a, b)
    return merged


def _excision_radius(mu, z, side, scale, lo, hi):
    """Smallest dyadic delta with mu > 1e-8*scale at z + side*delta."""
    delta = 1e-6
    while delta < 1e3:
        x = z + side * delta
        if not lo < x < hi:
            break
        try:
            if mu(x) > 1e-8 * scale:
                return delta
        except DomainFault:
            pass
        delta *= 2
    raise SpecInconsistencyError(f"could not separate the zero at s={z:g} from the tail")


# -- specs and reports ---------------------------------------------------------------

class Fibers(str, enum.Enum):
    COMPACT = "compact"
    NONCOMPACT = "noncompact"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Base:
    kind: str = "line"  # line | circle | compact
    size: float | None = None  # radius R for circle, length L for compact

    def __post_init__(self):
        if self.kind not in ("line", "circle", "compact"):
            raise ValueError(f"unknown base kind {self.kind!r}")
        if self.kind != "line" and not (self.size and self.size > 0):
            raise ValueError(f"{self.kind} base needs a positive size")

    def to_dict(self):
        if self.kind == "line":
            return "line"
        return {self.kind: self.size}


@dataclass(frozen=True)
class SurfaceSpec:
    base: Base
    mu: MuProfile
    fibers: Fibers = Fibers.UNKNOWN

    def __post_init__(self):
        object.__setattr__(self, "fibers", Fibers(self.fibers))
        if self.mu.zeros and self.fibers == Fibers.NONCOMPACT:
            raise SpecInconsistencyError("mu vanishes but fibers are declared non-compact")
        lo, hi = self.mu.domain
        if self.base.kind == "circle" and hi - lo < 2 * math.pi * self.base.size * (1 - 1e-12):
            raise SpecInconsistencyError("mu domain must cover one period of the circle base")
        if self.base.kind == "compact" and hi - lo < self.base.size * (1 - 1e-12):
            raise SpecInconsistencyError("mu domain must cover the whole compact base")


@dataclass
class ClassificationReport:
    verdict: str
    rule: str
    tails: list = field(default_factory=list)
    witness: dict | None = None
    warnings: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    policy: Policy | None = None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "rule": self.rule,
            "tails": [t.to_dict() for t in self.tails],
            "witness": self.witness,
            "warnings": list(self.warnings),
            "details": dict(self.details),
            "policy": (self.policy or Policy()).to_dict(),
        }


def _combine(tails, rule, policy, warnings_, details):
    verdicts = [t.verdict for t in tails]
    witness = None
    if CONVERGENT in verdicts:
        verdict = HYPERBOLIC
        conv = [t for t in tails if t.verdict == CONVERGENT]
        best = conv[0]
        witness = {
            "direction": "+inf" if best.direction > 0 else "-inf",
            "start": best.start,
            "bound": best.bound,
            "convergent_tails": len(conv),
        }
    elif all(v == DIVERGENT for v in verdicts):
        verdict = PARABOLIC
    else:
        verdict = INCONCLUSIVE
    for t in tails:
        for w in t.warnings:
            if w not in warnings_:
                warnings_.append(w)
    return ClassificationReport(verdict, rule, list(tails), witness, warnings_, details, policy)


def bounded_evidence(mu: Callable[[float], float], starts, windows: int = 8, samples: int = 256,
                     growth_tol: float = 0.01, w0: float = 1.0):
    """Probe ``mu`` over dyadic windows along each tail.

    Returns ``(bounded, sup)``. The running supremum must grow with an exponent below
    ``growth_tol`` over the last three windows of every tail.
    """
    sup = 0.0
    for s0, sign in starts:
        sups = []
        running = 0.0
        prev = 0.0
        for k in range(windows + 1):
            hi = w0 * 2.0**k
            xs = np.linspace(prev, hi, samples)
            try:
                vals = [mu(s0 + sign * x) for x in xs]
            except (DomainFault, OverflowError):
                return False, math.inf
            m = max(vals)
            if not math.isfinite(m):
                return False, math.inf
            running = max(running, m)
            sups.append(running)
            prev = hi
            if k >= 4 and sups[-1] > sups[-2] * (1 + 4 * growth_tol):
                return False, running
        if sups[-4] <= 0:
            return False, running
        growth = math.log(sups[-1] / sups[-4]) / (3 * math.log(2.0))
        if growth > growth_tol:
            return False, running
        sup = max(sup, running)
    return True, sup


def classify_intrinsic(spec: SurfaceSpec, policy: Policy | None = None, probe_span: float = 64.0,
                       use_bounded_shortcut: bool = True) -> ClassificationReport:
    """Parabolicity of a surface given by its base, Killing length and fiber type."""
    pol = policy or Policy()
    mu = spec.mu
    notes = []
    details = {"mu": mu.describe(), "base": spec.base.to_dict(), "fibers": spec.fibers.value}
    if spec.base.kind == "circle":
        return ClassificationReport(PARABOLIC, RULE_CIRCLE_BASE, [], None, notes, details, pol)
    if spec.base.kind == "compact":
        return ClassificationReport(PARABOLIC, RULE_COMPACT_CURVE, [], None, notes, details, pol)

    lo, hi = mu.domain
    plo, phi = max(lo, -probe_span), min(hi, probe_span)
    zeros = set(mu.zeros)
    for z in detect_zeros(mu, (plo, phi)):
        if not any(abs(z - w) <= 1e-6 * max(1.0, abs(w)) for w in zeros):
            zeros.add(z)
    for end in (lo, hi):
        if math.isfinite(end) and not any(abs(end - z) <= 1e-6 * max(1.0, abs(z)) for z in zeros):
            try:
                at_end = mu(end)
            except DomainFault:
                at_end = math.nan
            if at_end == 0.0:
                zeros.add(end)
            else:
                raise SpecInconsistencyError(
                    f"profile domain ends at s={end:g} where mu does not vanish; the base curve is incomplete")
    zeros = sorted(zeros)
    if len(zeros) > 2:
        notes.append(f"mu has {len(zeros)} zeros; at most two are geometrically possible")
    fibers = spec.fibers
    if zeros and fibers == Fibers.NONCOMPACT:
        raise SpecInconsistencyError("mu vanishes but fibers are declared non-compact")
    if zeros and fibers == Fibers.UNKNOWN:
        notes.append("fibers inferred compact because mu vanishes")
        fibers = Fibers.COMPACT
    details["zeros"] = zeros

    if math.isfinite(lo) and math.isfinite(hi):
        # profile runs from one zero of mu to another: a sphere
        return ClassificationReport(PARABOLIC, RULE_COMPACT_CURVE, [], None, notes, details, pol)

    if zeros:
        scale = max(abs(mu(x)) for x in np.linspace(plo, phi, 257) if _safe(mu, x)) or 1.0
        zmin, zmax = zeros[0], zeros[-1]
        starts = []
        if math.isinf(lo):
            starts.append((zmin - _excision_radius(mu, zmin, -1, scale, lo, hi), -1))
        if math.isinf(hi):
            starts.append((zmax + _excision_radius(mu, zmax, 1, scale, lo, hi), 1))
        rule = RULE_COMPACT_FIBER
        if len(starts) == 1:
            notes.append("profile meets the axis of rotation; the opposite tail mirrors this one")
    else:
        s0 = 0.0 if lo < 0.0 < hi else (lo + hi) / 2
        starts = [(s0, -1), (s0, 1)]
        rule = RULE_COMPACT_FIBER if fibers == Fibers.COMPACT else RULE_LINE_BASE
    details["tail_starts"] = [s for s, _ in starts]

    if use_bounded_shortcut:
        bounded, sup = bounded_evidence(mu, starts, w0=pol.w0)
        if bounded:
            details["mu_sup_estimate"] = sup
            return ClassificationReport(PARABOLIC, RULE_BOUNDED_MU, [], None, notes, details, pol)

    extrap = mu.extrapolates if mu.table is not None else None
    tails = []
    for s0, sign in starts:
        tails.append(tail_integral(lambda s: 1.0 / mu(s), s0, sign, pol, extrapolates=extrap))
    return _combine(tails, rule, pol, notes, details)


def _safe(f, x):
    try:
        return math.isfinite(f(x))
    except DomainFault:
        return False


def classify_speed_tails(speeds, rule: str, policy: Policy | None = None, notes=None, details=None
                         ) -> ClassificationReport:
    """Classify from conformal speeds: ``speeds`` is a list of ``(f, start, direction)``.

    Every tail of infinite conformal length means the curve is complete in the
    conformal metric, i.e. the surface is parabolic.
    """
    pol = policy or Policy()
    tails = [tail_integral(f, s0, d, pol) for f, s0, d in speeds]
    return _combine(tails, rule, pol, list(notes or []), dict(details or {}))


def classify_end(speed: Callable[[float], float], t0: float = 1.0, policy: Policy | None = None,
                 details=None) -> ClassificationReport:
    """A rotational end: one tail of the conformal speed, mirrored across the axis."""
    notes = ["profile meets the axis of rotation; the opposite tail mirrors this one"]
    return classify_speed_tails([(speed, t0, 1)], RULE_COMPACT_FIBER, policy, notes, details)


# -- extrinsic classification --------------------------------------------------------

ROUTES = ("arclength", "conformal", "both")


def _default_start(lo, hi):
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(hi):
        return lo + 1.0
    if math.isinf(lo):
        return hi - 1.0
    return (lo + hi) / 2


def _tail_curve(curve, ts, side, end):
    """The half of ``curve`` beyond ``ts`` on ``side``, reparameterized over ``x in [0, inf)``."""
    from .expr import parse

    x = parse("x", ["x"])
    if math.isinf(end):
        sub = ts + side * x
    else:
        sub = end - (end - ts) * parse("exp(-x)", ["x"])
    return curve.reparameterize(sub, (0.0, math.inf), var="x")


def _is_axis(model, curve, end, ts):
    try:
        u, v = curve.point(end)
        at_end = abs(model.mu_at(u, v))
    except DomainFault:
        return False
    ref = abs(model.mu_at(*curve.point(ts)))
    return at_end <= 1e-10 * ref


def _analyse_ends(model, curve, ts, pol, notes):
    from .geom import tangent_norm

    g = model.metric
    ends = {}
    for side, end in ((-1, curve.t_range[0]), (1, curve.t_range[1])):
        if math.isinf(end):
            ends[side] = "infinite"
        elif _is_axis(model, curve, end, ts):
            if model.fibers != Fibers.COMPACT:
                raise SpecInconsistencyError("curve reaches a zero of mu but fibers are not compact")
            ends[side] = "axis"
        else:
            tail = _tail_curve(curve, ts, side, end)
            v = tail_integral(lambda x: tangent_norm(g, tail, x), 0.0, 1, pol)
            if v.verdict == CONVERGENT:
                raise IncompleteCurveError(
                    f"curve reaches the parameter end t={end:g} at finite length {v.bound:.6g}; it is not complete")
            if v.verdict == INCONCLUSIVE:
                notes.append(f"completeness toward t={end:g} is inconclusive; treated as a tail")
            ends[side] = "boundary"
    return ends


def _route_conformal(model, curve, ts, ends, pol, notes, details):
    from .geom import tangent_norm

    gc = model.conformal_metric()
    speeds = []
    for side, end in ((-1, curve.t_range[0]), (1, curve.t_range[1])):
        if ends[side] == "axis":
            continue
        tail = _tail_curve(curve, ts, side, end)
        speeds.append(((lambda tl: lambda x: tangent_norm(gc, tl, x))(tail), 0.0, 1))
    rule = RULE_COMPACT_FIBER if model.fibers == Fibers.COMPACT else RULE_LINE_BASE
    if len(speeds) == 1:
        notes.append("profile meets the axis of rotation; the opposite tail mirrors this one")
    rep = classify_speed_tails(speeds, rule, pol, notes, details)
    # report tails in arc-length orientation: the first listed tail runs toward -inf
    signs = [side for side in (-1, 1) if ends[side] != "axis"]
    rep.tails = [replace(t, direction=sd) for t, sd in zip(rep.tails, signs)]
    if rep.witness:
        conv = [t for t in rep.tails if t.verdict == CONVERGENT][0]
        rep.witness["direction"] = "+inf" if conv.direction > 0 else "-inf"
    return rep


def arclength_profile(model, curve, t_start: float | None = None, ends=None,
                      policy: Policy | None = None) -> MuProfile:
    """``mu`` along ``curve`` as a function of signed base arc length from ``t_start``.

    Finite parameter ends where ``mu`` vanishes (an axis) become zeros at the end of
    the profile domain; every other end must lie at infinite distance.
    """
    from .geom import ArcLengthCurve, curve_length

    lo, hi = curve.t_range
    ts = _default_start(lo, hi) if t_start is None else float(t_start)
    if ends is None:
        ends = _analyse_ends(model, curve, ts, policy or Policy(), [])
    g = model.metric
    sides = {}
    for side, end in ((-1, lo), (1, hi)):
        if ends[side] == "axis":
            length = curve_length(curve, g, sorted((ts, end)))
            sides[side] = (ArcLengthCurve(curve, g, ts, side), length, end)
        else:
            sides[side] = (ArcLengthCurve(_tail_curve(curve, ts, side, end), g, 0.0, 1), math.inf, None)

    def mu_of_s(s):
        arc, length, end = sides[1 if s >= 0 else -1]
        dist = abs(s)
        if dist >= length - 1e-12 * max(1.0, length) or (arc.terminated is not None and dist >= arc.terminated):
            return abs(model.mu_at(*curve.point(end)))
        return model.mu_at(*arc.point(dist))

    lo_len, hi_len = sides[-1][1], sides[1][1]
    zeros = tuple(z for z, side in ((-lo_len, -1), (hi_len, 1)) if ends[side] == "axis")
    return MuProfile.from_function(mu_of_s, (-lo_len, hi_len), zeros, label="mu along arc length")


def _route_arclength(model, curve, ts, ends, pol, notes, details):
    profile = arclength_profile(model, curve, ts, ends)
    rep = classify_intrinsic(SurfaceSpec(Base("line"), profile, model.fibers), pol)
    rep.warnings = notes + [w for w in rep.warnings if w not in notes]
    rep.details = {**details, **rep.details}
    return rep


def classify_extrinsic(model, curve, route: str = "arclength", policy: Policy | None = None,
                       t_start: float | None = None) -> ClassificationReport:
    """Parabolicity of the surface swept by the Killing flow through ``curve``.

    ``route="arclength"`` reparameterizes the curve by base arc length and classifies
    ``mu`` along it; ``route="conformal"`` tests completeness of the curve in the
    base metric divided by ``mu**2``. ``route="both"`` runs both and reports
    Inconclusive if they disagree.
    """
    from .geom import validate_curve

    if route not in ROUTES:
        raise ValueError(f"route must be one of {ROUTES}")
    pol = policy or Policy()
    notes = list(model.notes)
    details = {"model": model.name, "curve": curve.name or repr(curve), "route": route}
    if model.compact:
        notes.append("compact ambient space: mu is bounded on every surface")
        return ClassificationReport(PARABOLIC, RULE_BERGER, [], None, notes, details, pol)
    if curve.periodic:
        return ClassificationReport(PARABOLIC, RULE_COMPACT_CURVE, [], None, notes, details, pol)
    validate_curve(curve, model.metric)
    lo, hi = curve.t_range
    ts = _default_start(lo, hi) if t_start is None else float(t_start)
    ends = _analyse_ends(model, curve, ts, pol, notes)
    details["ends"] = {"lower": ends[-1], "upper": ends[1]}
    if ends[-1] == "axis" and ends[1] == "axis":
        return ClassificationReport(PARABOLIC, RULE_COMPACT_CURVE, [], None, notes, details, pol)
    if route == "conformal":
        return _route_conformal(model, curve, ts, ends, pol, notes, details)
    if route == "arclength":
        return _route_arclength(model, curve, ts, ends, pol, notes, details)
    a = _route_arclength(model, curve, ts, ends, pol, list(notes), dict(details))
    c = _route_conformal(model, curve, ts, ends, pol, list(notes), dict(details))
    a.details["route_verdicts"] = {"arclength": a.verdict, "conformal": c.verdict}
    if a.verdict != c.verdict:
        a.warnings.append(f"routes disagree: arclength={a.verdict}, conformal={c.verdict}")
        a.verdict = INCONCLUSIVE
        a.witness = None
    return a


__all__ = [
    "Policy", "DivergenceVerdict", "tail_integral", "window_integral", "detect_zeros", "Fibers", "Base",
    "SurfaceSpec", "ClassificationReport", "classify_intrinsic", "classify_speed_tails",
    "classify_end", "classify_extrinsic", "arclength_profile", "bounded_evidence", "MuProfile", "ROUTES",
]
