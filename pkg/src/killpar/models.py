"""Built-in ambient Killing submersions and their example profile curves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .classify import Fibers
from .errors import DomainFault, SpecInconsistencyError
from .expr import Expression, parse
from .geom import Curve2D, Domain, Metric2D, conformal_scale

FIRST_PRINCIPLES = "first-principles"
AS_PRINTED = "as-printed"
_MU_CONSTANT = {FIRST_PRINCIPLES: 4.0, AS_PRINTED: 2.0}


@dataclass(frozen=True)
class AmbientModel:
    """A Killing submersion described by its base metric and Killing length.

    ``compact`` marks a compact total space, which bounds ``mu`` and makes every
    invariant surface parabolic.
    """

    name: str
    metric: Metric2D
    mu: Expression
    fibers: Fibers
    params: dict = field(default_factory=dict)
    notes: tuple = ()
    compact: bool = False
    _mu_fn: object = field(default=None, init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_mu_fn", self.mu.function(list(self.metric.coords)))

    @property
    def coords(self):
        return self.metric.coords

    def mu_at(self, u: float, v: float) -> float:
        return float(self._mu_fn(u, v))

    def conformal_metric(self) -> Metric2D:
        """The base metric divided by ``mu**2``."""
        return conformal_scale(self.metric, 1 / self.mu)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "metric": {"E": str(self.metric.E), "F": str(self.metric.F), "G": str(self.metric.G),
                       "coords": list(self.coords)},
            "mu": str(self.mu),
            "fibers": self.fibers.value,
            "params": dict(self.params),
            "compact": self.compact,
            "notes": list(self.notes),
        }


# -- Sol3 ----------------------------------------------------------------------------

def sol3_model() -> AmbientModel:
    """Quotient of Sol3 by the ``x``-translations: base ``(y, z)``, ``mu = e^z``."""
    coords = ("y", "z")
    g = Metric2D(parse("exp(-2*z)", coords), 0.0, 1.0, coords, name="sol3 base")
    return AmbientModel("sol3", g, parse("exp(z)", coords), Fibers.NONCOMPACT)


@dataclass(frozen=True)
class Sol3SurfaceParams:
    family: str  # "S", "Q" or "R"
    theta0: float = math.pi / 4
    a: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if self.family not in ("S", "Q", "R"):
            raise ValueError(f"unknown Sol3 family {self.family!r}")
        if self.family == "S":
            if not math.isfinite(self.theta0) or abs(math.sin(self.theta0)) < 1e-12:
                raise DomainFault("theta0 must not be a multiple of pi")


def sol3_minimal_profile(theta0: float = math.pi / 4, a: float = 0.0) -> Curve2D:
    """Profile ``(a + e^{s sin th}, log(tan th e^{s sin th}))`` of ``S_{th,a}``, unit speed."""
    p = Sol3SurfaceParams("S", theta0=theta0, a=a)
    if not math.tan(p.theta0) > 0:
        raise DomainFault(f"tan(theta0) = {math.tan(p.theta0):g} <= 0: the log argument is not positive")
    return Curve2D("a + exp(s*sin(theta0))", "log(tan(theta0)*exp(s*sin(theta0)))", var="s",
                   params={"a": a, "theta0": theta0}, name=f"S(theta0={theta0:g}, a={a:g})")


def sol3_leaf_q(t: float = 0.0) -> Curve2D:
    """Leaf ``y = t``: the profile runs along ``z`` and ``mu = e^s``."""
    return Curve2D(float(t), "s", var="s", name=f"Q(t={t:g})")


def sol3_leaf_r(t: float = 0.0) -> Curve2D:
    """Leaf ``z = t``: constant Killing length."""
    return Curve2D("s", float(t), var="s", name=f"R(t={t:g})")


def sol3_cmc_profile() -> Curve2D:
    """Synthetic profile with bounded height: ``(s, sin s)``.

    It is regular but not unit speed; classification reparameterizes it.
    """
    return Curve2D("s", "sin(s)", var="s", name="bounded-z profile")


def sol3_curve(p: Sol3SurfaceParams) -> Curve2D:
    if p.family == "S":
        return sol3_minimal_profile(p.theta0, p.a)
    return sol3_leaf_q(p.t) if p.family == "Q" else sol3_leaf_r(p.t)


# -- E(kappa, tau) -------------------------------------------------------------------

def ekt_model(kappa: float = 0.0, tau: float = 0.0, mu_constant: str = FIRST_PRINCIPLES) -> AmbientModel:
    """Rotational model of ``E(kappa, tau)`` over ``r > 0``.

    Base metric ``16/(4+kappa r^2)^2 dr^2 + dz^2/(1+r^2 tau^2)`` and
    ``mu = C r sqrt(1+r^2 tau^2)/(4+kappa r^2)``, with ``C = 4`` (the norm of the
    rotation field for this metric) or ``C = 2`` with ``mu_constant="as-printed"``.
    For ``kappa > 0`` the space is a Berger sphere and the model is flagged compact.
    """
    if mu_constant not in _MU_CONSTANT:
        raise ValueError(f"mu_constant must be one of {sorted(_MU_CONSTANT)}")
    coords = ("r", "z")
    names = [*coords, "kappa", "tau"]
    params = {"kappa": float(kappa), "tau": float(tau)}
    bounds = ((0.0, math.inf), (-math.inf, math.inf))
    if kappa < 0:
        bounds = ((0.0, 2 / math.sqrt(-kappa)), (-math.inf, math.inf))
    domain = Domain(bounds, (Expression(parse("4+kappa*r^2", names).substitute(params).node, coords),), coords)
    g = Metric2D("16/(4+kappa*r^2)^2", 0.0, "1/(1+r^2*tau^2)", coords, domain, params,
                 name=f"E({kappa:g},{tau:g}) base")
    c = _MU_CONSTANT[mu_constant]
    mu = parse(f"{c!r}*r*sqrt(1+r^2*tau^2)/(4+kappa*r^2)", names).substitute(params)
    notes = []
    if mu_constant == AS_PRINTED:
        notes.append("mu uses the as-printed constant 2; the rotation field of this metric has constant 4")
    return AmbientModel(f"E({kappa:g},{tau:g})", g, Expression(mu.node, coords), Fibers.COMPACT,
                        {**params, "mu_constant": mu_constant}, tuple(notes), compact=kappa > 0)


def ekt_conformal_metric_closed_form(kappa: float = 0.0, tau: float = 0.0) -> Metric2D:
    """``4/(r^2(1+r^2 tau^2)) dr^2 + (4+kappa r^2)^2/(4 r^2 (1+r^2 tau^2)^2) dz^2``.

    Closed form of the base metric divided by ``mu**2`` for the as-printed constant 2.
    """
    base = ekt_model(kappa, tau)
    return Metric2D("4/(r^2*(1+r^2*tau^2))", 0.0, "(4+kappa*r^2)^2/(4*r^2*(1+r^2*tau^2)^2)",
                    base.coords, base.metric.domain, {"kappa": kappa, "tau": tau})


def umbrella_curve() -> Curve2D:
    """Radial line ``(t, 0)``, ``t > 0``; generates the minimal umbrellas."""
    return Curve2D("t", "0", (0.0, math.inf), var="t", name="umbrella")


# -- Penafiel rotational CMC surfaces ------------------------------------------------

@dataclass(frozen=True)
class PenafielParams:
    H: float = 0.0
    d: float = 0.0
    tau: float = 1.0

    def __post_init__(self):
        if self.H not in (0.0, 0.5):
            raise SpecInconsistencyError(f"H={self.H:g} unsupported; conformal speeds are known for H in {{0, 1/2}}")
        if not self.tau > 0:
            raise SpecInconsistencyError("tau must be positive")


_PENAFIEL = {
    0.0: "2*sqrt(1/(sinh(t)^2*(1+tau^2*tanh(t/2))))",
    0.5: ("sqrt((5+3*cosh(t))^2*(1-4*tau^2+cosh(t)+4*tau^2*cosh(t))"
          "/(8*(1-tau^2+(1+tau^2)*cosh(t))^2) + 4/(sinh(t)^2*(1+4*tau^2*tanh(t/2))))"),
}


def penafiel_conformal_speed(p: PenafielParams) -> Expression:
    """Conformal norm of the generating curve's velocity, as an expression in ``t``.

    Valid on the end ``t -> inf``; ``t = 0`` is the rotation axis.
    """
    e = parse(_PENAFIEL[p.H], ["t", "tau"]).substitute({"tau": p.tau})
    return Expression(e.node, ("t",))


def penafiel_asymptotic(t: float, tau: float) -> float:
    """Leading behaviour ``4 sqrt(1/(1+tau^2)) e^{-t}`` of the minimal (H=0) speed."""
    return 4 * math.sqrt(1 / (1 + tau * tau)) * math.exp(-t)


__all__ = [
    "AmbientModel", "Sol3SurfaceParams", "PenafielParams", "sol3_model", "sol3_minimal_profile",
    "sol3_leaf_q", "sol3_leaf_r", "sol3_cmc_profile", "sol3_curve", "ekt_model",
    "ekt_conformal_metric_closed_form", "umbrella_curve", "penafiel_conformal_speed", "penafiel_asymptotic",
    "FIRST_PRINCIPLES", "AS_PRINTED",
]
