import math

import numpy as np
import pytest

from killpar.classify import CONVERGENT, DIVERGENT
from killpar.errors import DomainFault, StepTooLargeError
from killpar.expr import parse
from killpar.profile import MuProfile
from killpar.verify import (
    annulus_harmonic_measure, curvature_flatness_check, escape_probability, laplacian_closed_form,
    laplacian_residual, simulate_radial_diffusion, witness,
)


def mu_x(src):
    return MuProfile.from_expression(src, var="x")


# -- Laplacian of basic functions --------------------------------------------------------

@pytest.mark.parametrize("mu,f,x,closed", [
    ("1", "x^2", 0.7, 2.0), ("x", "log(x)", 2.0, 0.0), ("exp(x)", "exp(-x)", 0.0, 0.0),
    ("1+x^2", "sin(x)", 0.4, None),
])
def test_laplacian_residual_small(mu, f, x, closed):
    m, fe = mu_x(mu), parse(f, ["x"])
    if closed is not None:
        assert laplacian_closed_form(m, fe, x) == pytest.approx(closed, abs=1e-14)
    assert laplacian_residual(m, fe, x, 1e-3) <= 1e-6


def test_laplacian_closed_form_general():
    # (1/mu)(mu f')' with mu = 1+x^2, f = sin x
    x = 0.4
    expected = (2 * x * math.cos(x) - (1 + x * x) * math.sin(x)) / (1 + x * x)
    assert laplacian_closed_form(mu_x("1+x^2"), parse("sin(x)", ["x"]), x) == pytest.approx(expected, rel=1e-13)


def test_laplacian_second_order_decay():
    m, f = mu_x("exp(x)"), parse("exp(-x)", ["x"])
    r1, r2 = (laplacian_residual(m, f, 0.0, h) for h in (4e-3, 2e-3))
    assert 3.2 <= r1 / r2 <= 4.8


def test_laplacian_rejects_vanishing_mu():
    with pytest.raises(DomainFault):
        laplacian_residual(mu_x("x"), parse("x", ["x"]), 0.0)


# -- witness -----------------------------------------------------------------------------

def test_witness_flat():
    w = witness(MuProfile.from_expression("1"), 0.5)
    assert w(3.0) == pytest.approx(-2.5, abs=1e-12) and w(0.5) == 0.0
    assert not w.bounded(1) and not w.bounded(-1)
    assert w.harmonic_residual <= 1e-5


def test_witness_exponential():
    w = witness(MuProfile.from_expression("exp(s)"), 0.0)
    assert w.bounded(1) and not w.bounded(-1)
    assert w.bounds[1] == pytest.approx(1.0, rel=1e-8)
    for s in (0.5, 2.0, 10.0):
        assert w(s) == pytest.approx(math.exp(-s) - 1, abs=1e-12)
    assert w.harmonic_residual <= 1e-5


def test_witness_arctan():
    w = witness(MuProfile.from_expression("1+s^2"), 0.0)
    assert w.bounds[1] == pytest.approx(math.pi / 2, abs=1e-9)
    assert w.bounds[-1] == pytest.approx(math.pi / 2, abs=1e-9)
    ss = np.array([-30.0, -2.0, 0.0, 1.0, 7.0, 100.0])
    assert np.allclose(w.values(ss), -np.arctan(ss), atol=1e-10, rtol=0)


def test_witness_monotone():
    w = witness(MuProfile.from_expression("2+sin(s)"), 0.0)
    vals = w.values(np.linspace(-20, 20, 81))
    assert np.all(np.diff(vals) < 0)
    assert w.tails[1].verdict == DIVERGENT and w.tails[-1].verdict == DIVERGENT


# -- harmonic measure and diffusion -------------------------------------------------------

def test_annulus_examples():
    assert annulus_harmonic_measure(mu_x("1"), 0, 1, 0.5) == pytest.approx(0.5, abs=1e-14)
    assert annulus_harmonic_measure(mu_x("x"), 1, math.e**2, math.e) == pytest.approx(0.5, abs=1e-12)
    # oracle: (1 - e^-0.5)/(1 - e^-1) at 30 digits
    assert annulus_harmonic_measure(mu_x("exp(x)"), 0, 1, 0.5) == pytest.approx(0.622459331201854565, abs=1e-12)


def test_annulus_rejects_zero_inside():
    with pytest.raises(DomainFault):
        annulus_harmonic_measure(mu_x("x"), -1, 1, 0.5)


def test_diffusion_deterministic_given_seed():
    a = simulate_radial_diffusion(mu_x("exp(x)"), 0.5, 0.0, 1.0, n=4000, seed=7, dt=1e-3)
    b = simulate_radial_diffusion(mu_x("exp(x)"), 0.5, 0.0, 1.0, n=4000, seed=7, dt=1e-3)
    c = simulate_radial_diffusion(mu_x("exp(x)"), 0.5, 0.0, 1.0, n=4000, seed=8, dt=1e-3)
    assert a == b
    assert a.hits != c.hits or a.p == c.p


def test_diffusion_batches_merge_deterministically():
    a = simulate_radial_diffusion(mu_x("x"), math.e, 1.0, math.e**2, n=6000, seed=3, batch_size=1000, dt=0.04)
    b = simulate_radial_diffusion(mu_x("x"), math.e, 1.0, math.e**2, n=6000, seed=3, batch_size=1000, workers=3, dt=0.04)
    assert a == b


@pytest.mark.parametrize("mu,a,b,x0", [("1", 0, 1, 0.5), ("x", 1, math.e**2, math.e), ("exp(x)", 0, 1, 0.5)])
def test_diffusion_agrees_with_closed_form_small_n(mu, a, b, x0):
    m = mu_x(mu)
    exact = annulus_harmonic_measure(m, a, b, x0)
    res = simulate_radial_diffusion(m, x0, a, b, n=10_000, seed=11, dt=1e-3 * (b - a) ** 2)
    assert abs(res.p - exact) <= 4 * math.sqrt(exact * (1 - exact) / res.n)


def test_diffusion_step_too_large():
    with pytest.raises(StepTooLargeError):
        simulate_radial_diffusion(mu_x("exp(40*x)"), 0.5, 0.0, 1.0, dt=0.01, n=10)


def test_escape_probability_tracks_verdicts():
    bs = (10.0, 100.0, 1000.0)
    for mu, core, x0, kind in (("1", 0.0, 1.0, "parabolic"), ("s", 1.0, 2.0, "parabolic"),
                               ("exp(s)", 0.0, 1.0, "hyperbolic")):
        m = MuProfile.from_expression(mu)
        ps = [escape_probability(m, core, x0, b, n=20_000, seed=5).p for b in bs]
        if kind == "parabolic":
            assert ps[0] > ps[1] > ps[2]
            assert ps[2] < 0.5 * ps[0]
        else:
            assert min(ps) > 0.5
            # oracle: 1 - e^-1
            assert abs(ps[-1] - 0.632120558828557678) < 0.02


# -- flatness after normalization ---------------------------------------------------------

@pytest.mark.parametrize("mu", ["1", "exp(x)", "1+x^2", "cosh(x)"])
def test_flatness(mu):
    rep = curvature_flatness_check(mu_x(mu), (-5, 5))
    assert rep.max_abs_k <= 1e-8


def test_flatness_reports_curvature_before():
    rep = curvature_flatness_check(mu_x("exp(x)"), (-5, 5))
    assert rep.max_abs_k_before == pytest.approx(1.0, abs=1e-6)
    assert curvature_flatness_check(mu_x("1"), (-5, 5)).max_abs_k == 0.0
