"""Numerical checks of the supporting identities and a stochastic oracle for the verdicts.

The Laplacian check builds the warped surface ``dx^2 + mu(x)^2 dtheta^2`` and
compares a finite-difference Laplace-Beltrami operator with the closed form
``(1/mu)(mu f')'``. The diffusion oracle simulates the radial part of Brownian
motion on that surface, ``dX = mu'/(2 mu) dt + dW``, whose exit probabilities are
affine in the scale function ``S = int dx/mu``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .classify import CONVERGENT, Policy, detect_zeros, tail_integral
from .errors import DomainFault, StepTooLargeError
from .expr import Expression, as_expression
from .geom import ArcLengthCurve, Curve2D, Metric2D, warped_metric_curvature
from .profile import MuProfile, fd_derivative

MU_FLOOR = 1e-12


def _integral(f, a, b, epsabs=1e-13, epsrel=1e-12):
    if a == b:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            return quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=400)[0]
        except IntegrationWarning:
            pass
    edges = np.linspace(a, b, 33)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        return sum(quad(f, lo, hi, epsabs=epsabs / 32, epsrel=epsrel, limit=400)[0]
                   for lo, hi in zip(edges[:-1], edges[1:]))


def _inv(mu):
    raw = mu.expression.vectorized([mu.var], check=False) if mu.expression is not None else None

    def f(x):
        try:
            m = mu(x)
        except DomainFault:
            # mu overflowing to +inf only means 1/mu underflows
            if raw is None:
                raise
            with np.errstate(all="ignore"):
                if float(raw(np.array([x]))[0]) != math.inf:
                    raise
            return 0.0
        if not m > MU_FLOOR:
            raise DomainFault(f"mu({x:g}) = {m:g} is not positive")
        return 1.0 / m
    return f


# -- Laplace-Beltrami --------------------------------------------------------------------

def laplace_beltrami_fd(metric: Callable, u: Callable, x: float, y: float, h: float) -> float:
    """Second-order finite-difference Laplace-Beltrami of ``u`` in coordinates ``(x, y)``.

    ``metric(x, y)`` returns ``(E, F, G)``. Uses ``g^{ij}(d_i d_j u - Gamma^k_ij d_k u)``
    with every derivative (including those of the metric) taken by central
    differences of spacing ``h``.
    """
    def grad(fn):
        return ((np.asarray(fn(x + h, y)) - np.asarray(fn(x - h, y))) / (2 * h),
                (np.asarray(fn(x, y + h)) - np.asarray(fn(x, y - h))) / (2 * h))

    u0 = u(x, y)
    ux = (u(x + h, y) - u(x - h, y)) / (2 * h)
    uy = (u(x, y + h) - u(x, y - h)) / (2 * h)
    uxx = (u(x + h, y) - 2 * u0 + u(x - h, y)) / h**2
    uyy = (u(x, y + h) - 2 * u0 + u(x, y - h)) / h**2
    uxy = (u(x + h, y + h) - u(x + h, y - h) - u(x - h, y + h) + u(x - h, y - h)) / (4 * h * h)

    g = np.array(metric(x, y), dtype=float)
    G = np.array([[g[0], g[1]], [g[1], g[2]]])
    Ginv = np.linalg.inv(G)
    dx, dy = grad(metric)
    dG = [np.array([[d[0], d[1]], [d[1], d[2]]]) for d in (dx, dy)]  # dG[k][i][j] = d_k g_ij
    # Christoffel symbols Gamma^k_ij = 1/2 g^kl (d_i g_lj + d_j g_li - d_l g_ij)
    gamma = np.zeros((2, 2, 2))
    for k in range(2):
        for i in range(2):
            for j in range(2):
                gamma[k, i, j] = 0.5 * sum(Ginv[k, l] * (dG[i][l, j] + dG[j][l, i] - dG[l][i, j])
                                           for l in range(2))
    hess = np.array([[uxx, uxy], [uxy, uyy]])
    du = np.array([ux, uy])
    out = 0.0
    for i in range(2):
        for j in range(2):
            out += Ginv[i, j] * (hess[i, j] - gamma[:, i, j] @ du)
    return float(out)


def _warped_metric(mu):
    def metric(x, _theta):
        m = mu(x)
        return 1.0, 0.0, m * m
    return metric


def laplacian_closed_form(mu: MuProfile, f: Expression, x: float) -> float:
    """``(1/mu)(mu f')' = f'' + mu' f'/mu`` with symbolic derivatives where available."""
    var = mu.var
    d1 = f.diff(var)
    d2 = d1.diff(var)
    m = mu(x)
    if not m > MU_FLOOR:
        raise DomainFault(f"mu({x:g}) = {m:g} is below tolerance")
    return d2.evaluate({var: x}) + mu.derivative(x, 1) * d1.evaluate({var: x}) / m


def laplacian_residual(mu: MuProfile, f, x: float, h: float = 1e-3) -> float:
    """``|Delta(f o pi) - (1/mu)(mu f')'|`` at ``x`` on ``dx^2 + mu^2 dtheta^2``."""
    f = as_expression(f, [mu.var])
    m = mu(x)
    if not m > MU_FLOOR:
        raise DomainFault(f"mu({x:g}) = {m:g} is below tolerance")
    fn = f.function([mu.var])
    fd = laplace_beltrami_fd(_warped_metric(mu), lambda a, _b: fn(a), x, 0.0, h)
    return abs(fd - laplacian_closed_form(mu, f, x))


# -- harmonic witness ----------------------------------------------------------------

@dataclass
class WitnessFunction:
    """``F(s) = int_s^{s0} dx/mu``, harmonic on the warped surface.

    ``tails`` maps ``+1``/``-1`` to the divergence verdict of ``1/mu`` toward
    ``+-inf``; ``bounds`` holds ``sup |F|`` on each convergent tail.
    """

    mu: MuProfile
    s0: float
    tails: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    harmonic_residual: float | None = None

    def __call__(self, s: float) -> float:
        return -_integral(_inv(self.mu), self.s0, s)

    def values(self, ss):
        """F on an array of points by cumulative quadrature between sorted nodes."""
        ss = np.asarray(ss, dtype=float)
        order = np.argsort(ss)
        out = np.empty_like(ss)
        inv = _inv(self.mu)
        right = [i for i in order if ss[i] >= self.s0]
        left = [i for i in order[::-1] if ss[i] < self.s0]
        for seq in (right, left):
            acc, prev = 0.0, self.s0
            for i in seq:
                acc += _integral(inv, prev, ss[i])
                prev = ss[i]
                out[i] = -acc
        return out

    def bounded(self, direction: int) -> bool:
        return self.tails[direction].verdict == CONVERGENT

    def to_dict(self) -> dict:
        return {
            "s0": self.s0,
            "tails": {("+inf" if d > 0 else "-inf"): v.verdict for d, v in sorted(self.tails.items())},
            "bounds": {("+inf" if d > 0 else "-inf"): b for d, b in sorted(self.bounds.items())},
            "harmonic_residual": self.harmonic_residual,
        }


def witness(mu: MuProfile, s0: float = 0.0, policy: Policy | None = None, probes=(-2.0, -1.0, -0.5, 0.5, 1.0, 2.0),
            h: float = 1e-3) -> WitnessFunction:
    """Build the witness, classify each infinite tail and check harmonicity at probes."""
    w = WitnessFunction(mu, float(s0))
    lo, hi = mu.domain
    inv = _inv(mu)
    for d, end in ((1, hi), (-1, lo)):
        if math.isinf(end):
            v = tail_integral(inv, s0, d, policy)
            w.tails[d] = v
            if v.verdict == CONVERGENT:
                w.bounds[d] = v.bound
    resid = 0.0
    metric = _warped_metric(mu)
    for p in probes:
        x = s0 + p
        if not lo < x - 2 * h < x + 2 * h < hi:
            continue

        # F up to an additive constant, anchored at the probe for round-off control
        def F(a, _b, x=x):
            return -_integral(inv, x, a, epsabs=1e-16, epsrel=1e-14)

        resid = max(resid, abs(laplace_beltrami_fd(metric, F, x, 0.0, h)))
    w.harmonic_residual = resid
    return w


# -- harmonic measure and diffusion -----------------------------------------------------

def scale_function(mu: MuProfile, a: float, b: float, x0: float):
    inv = _inv(mu)
    return _integral(inv, a, x0), _integral(inv, a, b)


def _check_positive(mu, a, b):
    for x in np.linspace(a, b, 513):
        if not mu(float(x)) > MU_FLOOR:
            raise DomainFault(f"mu vanishes near x={x:g} inside [{a:g}, {b:g}]")
    if detect_zeros(mu, (a, b), n=513):
        raise DomainFault(f"mu has a zero inside [{a:g}, {b:g}]")


def annulus_harmonic_measure(mu: MuProfile, a: float, b: float, x0: float) -> float:
    """Harmonic function equal to 0 at ``a`` and 1 at ``b``, evaluated at ``x0``."""
    if not a < x0 < b:
        raise ValueError("need a < x0 < b")
    _check_positive(mu, a, b)
    s_x0, s_b = scale_function(mu, a, b, x0)
    return s_x0 / s_b


@dataclass(frozen=True)
class DiffusionResult:
    p: float
    hits: int
    n: int
    dt: float
    seed: int
    batches: int
    undecided: int = 0

    @property
    def stderr(self) -> float:
        return math.sqrt(max(self.p * (1 - self.p), 0.0) / self.n)

    def to_dict(self) -> dict:
        return {"p": self.p, "hits": self.hits, "n": self.n, "dt": self.dt, "seed": self.seed,
                "batches": self.batches, "undecided": self.undecided, "stderr": self.stderr}


def _drift_function(mu: MuProfile, a: float, b: float):
    """Vectorized ``mu'/(2 mu)`` (None when it vanishes identically).

    Expressions are validated once on a grid of ``[a, b]`` and then evaluated without
    per-call checks; tables and callables are tabulated and interpolated linearly.
    """
    if mu.expression is not None:
        d = mu.derivative_expression(1)
        if not d.free_names and d.evaluate({}) == 0.0:
            return None
        e = d / (2 * mu.expression)
        e.vectorized([mu.var])(np.linspace(a, b, 4097))
        return e.vectorized([mu.var], check=False)
    grid = np.linspace(a, b, 16385)
    vals = np.array([mu.derivative(float(x), 1) / (2 * mu(float(x))) for x in grid])
    return lambda x: np.interp(x, grid, vals)


def _run_batch(drift, x0, a, b, dt, m, seed_seq, bridge, max_steps):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    pos = np.full(m, float(x0))
    sq = math.sqrt(dt)
    # beyond this distance from both ends a bridge crossing has probability < e^-72
    reach = 6.0 * sq
    hits = 0
    for _ in range(max_steps):
        k = pos.size
        if k == 0:
            break
        nxt = rng.standard_normal(k)
        nxt *= sq
        nxt += pos
        if drift is not None:
            nxt += dt * drift(pos)
        cand = np.flatnonzero((np.minimum(pos, nxt) < a + reach) | (np.maximum(pos, nxt) > b - reach))
        if cand.size == 0:
            pos = nxt
            continue
        p0, p1 = pos[cand], nxt[cand]
        out_b = p1 >= b
        out_a = p1 <= a
        if bridge:
            inside = ~(out_a | out_b)
            pa = np.exp(-2 * np.maximum(p0 - a, 0) * np.maximum(p1 - a, 0) / dt)
            pb = np.exp(-2 * np.maximum(b - p0, 0) * np.maximum(b - p1, 0) / dt)
            u = rng.random(cand.size)
            cross_a = inside & (u < pa)
            out_a |= cross_a
            out_b |= inside & ~cross_a & (u < pa + pb)
        hits += int(np.count_nonzero(out_b))
        keep = np.ones(k, dtype=bool)
        keep[cand[out_a | out_b]] = False
        pos = nxt[keep]
    return hits, int(pos.size)


def simulate_radial_diffusion(mu: MuProfile, x0: float, a: float, b: float, dt: float | None = None,
                              n: int = 100_000, seed: int = 0, batch_size: int = 25_000, workers: int = 1,
                              bridge: bool = True, max_steps: int = 10_000_000) -> DiffusionResult:
    """Frequency with which ``dX = mu'/(2mu) dt + dW`` from ``x0`` leaves ``[a, b]`` through ``b``.

    Euler-Maruyama with absorption at both ends. With ``bridge`` the chance that the
    path crossed a boundary between grid times is accounted for, which removes the
    leading ``sqrt(dt)`` exit bias. Walkers run in batches seeded by
    ``SeedSequence(seed).spawn``, so the result depends only on ``seed``, ``n`` and
    ``batch_size``, not on ``workers``.
    """
    if not a < x0 < b:
        raise ValueError("need a < x0 < b")
    _check_positive(mu, a, b)
    dt = 1e-4 * (b - a) ** 2 if dt is None else float(dt)
    drift = _drift_function(mu, a, b)
    worst = 0.0 if drift is None else float(np.max(np.abs(drift(np.linspace(a, b, 1025)))))
    if worst * dt > (b - a) / 10:
        raise StepTooLargeError(f"drift*dt = {worst * dt:.3g} exceeds (b-a)/10 = {(b - a) / 10:.3g}")
    sizes = [batch_size] * (n // batch_size) + ([n % batch_size] if n % batch_size else [])
    seqs = np.random.SeedSequence(int(seed)).spawn(len(sizes))
    jobs = [(drift, x0, a, b, dt, m, s, bridge, max_steps) for m, s in zip(sizes, seqs)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda j: _run_batch(*j), jobs))
    else:
        results = [_run_batch(*j) for j in jobs]
    hits = sum(r[0] for r in results)
    undecided = sum(r[1] for r in results)
    return DiffusionResult(hits / n, hits, n, dt, int(seed), len(sizes), undecided)


def escape_probability(mu: MuProfile, core: float, x0: float, b: float, n: int = 20_000, seed: int = 0,
                       **kw) -> DiffusionResult:
    """Chance of reaching ``b`` before the core ``a``, simulated in scale coordinates.

    The scale map sends the radial diffusion to a driftless Brownian motion on
    ``[0, S(b)]``, so large ``b`` costs no more than small ``b``. With the bridge
    crossing test a driftless walk exits without time-step bias, which allows the
    coarse default step ``1e-2 S(b)^2``.
    """
    s_x0, s_b = scale_function(mu, core, b, x0)
    flat = MuProfile.from_expression("1", var=mu.var)
    kw.setdefault("dt", 1e-2 * s_b * s_b)
    return simulate_radial_diffusion(flat, s_x0, 0.0, s_b, n=n, seed=seed, **kw)


# -- flatness after normalization -----------------------------------------------------

@dataclass(frozen=True)
class FlatnessReport:
    max_abs_k: float
    max_abs_k_numeric: float
    max_abs_k_before: float
    points: int

    def to_dict(self) -> dict:
        return {"max_abs_K": self.max_abs_k, "max_abs_K_numeric": self.max_abs_k_numeric,
                "max_abs_K_before_normalization": self.max_abs_k_before, "points": self.points}


def curvature_flatness_check(mu: MuProfile, interval, n: int = 201) -> FlatnessReport:
    """Curvature of ``(dx^2 + mu^2 dtheta^2)/mu^2`` written as ``du^2 + dtheta^2``.

    With ``u = int dx/mu`` the normalized metric has ``E_u = mu^2 (1/mu^2)`` and
    ``G = mu^2/mu^2``; its curvature is evaluated symbolically (with ``d/du = mu d/dx``)
    and numerically, as ``-m''/m`` of the pulled-back profile ``m(u)``.
    """
    a, b = (float(v) for v in interval)
    xs = np.linspace(a, b, n)
    for x in xs:
        if not mu(float(x)) > MU_FLOOR:
            raise DomainFault(f"mu({x:g}) is not positive")
    var = mu.var
    before = 0.0
    for x in xs:
        before = max(before, abs(mu.derivative(float(x), 2) / mu(float(x))))

    k_sym = 0.0
    if mu.expression is not None:
        m = mu.expression
        inv2 = 1 / (m * m)
        E_u = m * m * inv2
        G_u = (m * m) * inv2
        K = warped_metric_curvature(E_u, G_u, var, chain=m).function([var])
        k_sym = max(abs(K(float(x))) for x in xs)

    # numeric route: invert the scale map u(x) = int_{xmid}^x dx/mu by bracketing
    inv = _inv(mu)
    xmid = 0.5 * (a + b)

    def pulled(u):
        x = brentq(lambda t: _integral(inv, xmid, t) - u, a, b, xtol=1e-14, rtol=1e-15)
        return mu(x) * inv(x)

    k_num = 0.0
    for x in xs[n // 20: -n // 20: max(1, n // 20)]:
        u = _integral(inv, xmid, float(x))
        k_num = max(k_num, abs(fd_derivative(pulled, u, 2) / pulled(u)))
    return FlatnessReport(max(k_sym, k_num), k_num, before, len(xs))


# -- basic conformal rescaling ---------------------------------------------------------

def basic_conformal_comparison(mu: MuProfile, factor, s0: float = 0.0, points=(1.0, 2.0, 5.0, 10.0),
                               policy: Policy | None = None) -> dict:
    """Compare tail integrals of ``1/mu`` in ``g`` with those of ``1/(f mu)`` in ``f^2 g``.

    The base is the line with metric ``f(s)^2 ds^2``; its arc length ``sigma`` is
    integrated as an ODE and the rescaled integrand is evaluated along it.
    """
    var = mu.var
    f = as_expression(factor, [var])
    fn = f.function([var])
    E = Expression((f * f).node, (var, "th"))
    g = Metric2D(E, 0.0, 1.0, (var, "th"), validate=False)
    line = Curve2D(var, "0", var=var)
    inv = _inv(mu)
    out = {"partials": [], "tails": {}}
    max_diff = 0.0
    for d in (1, -1):
        arc = ArcLengthCurve(line, g, s0, d)

        def scaled(sig, arc=arc):
            s = arc.t_of(sig)
            return 1.0 / (fn(s) * mu(s))

        for p in points:
            s_end = s0 + d * p
            direct = _integral(inv, s0, s_end) * d
            sig_end = _integral(lambda s: fn(s), s0, s_end) * d
            rescaled = _integral(scaled, 0.0, sig_end)
            max_diff = max(max_diff, abs(direct - rescaled))
            out["partials"].append({"s": s_end, "direct": direct, "rescaled": rescaled})
        v1 = tail_integral(inv, s0, d, policy)
        v2 = tail_integral(lambda sig, sc=scaled: sc(sig), 0.0, 1, policy)
        key = "+inf" if d > 0 else "-inf"
        entry = {"direct": v1.verdict, "rescaled": v2.verdict}
        if v1.verdict == CONVERGENT and v2.verdict == CONVERGENT:
            entry["bound_direct"], entry["bound_rescaled"] = v1.bound, v2.bound
            max_diff = max(max_diff, abs(v1.bound - v2.bound))
        out["tails"][key] = entry
    out["max_abs_difference"] = max_diff
    return out


__all__ = [
    "laplace_beltrami_fd", "laplacian_closed_form", "laplacian_residual", "WitnessFunction", "witness",
    "scale_function", "annulus_harmonic_measure", "DiffusionResult", "simulate_radial_diffusion",
    "escape_probability", "FlatnessReport", "curvature_flatness_check", "basic_conformal_comparison",
]
