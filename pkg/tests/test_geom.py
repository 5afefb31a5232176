import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from killpar.errors import DomainExitError, DomainFault, PositivityError, RegularityError
from killpar.expr import parse
from killpar.geom import (
    ArcLengthCurve, Curve2D, Domain, Metric2D, arclength_reparam, conformal_scale, curve_length,
    euclidean_metric, tangent_norm, validate_curve, warped_curvature,
)
from killpar.models import ekt_model, ekt_conformal_metric_closed_form, sol3_minimal_profile, sol3_model
from killpar.profile import MuProfile

EUC = euclidean_metric(("u", "v"))


def test_tangent_norm_euclidean_diagonal():
    assert tangent_norm(EUC, Curve2D("t", "t"), 0.0) == pytest.approx(math.sqrt(2), rel=1e-15)


@pytest.mark.parametrize("t", [-7.0, -1.0, 0.0, 0.5, 3.0, 9.0])
def test_tangent_norm_sol3_profile_is_unit(t):
    c = sol3_minimal_profile(math.pi / 4, 0.0)
    assert tangent_norm(sol3_model().metric, c, t) == pytest.approx(1.0, abs=1e-10)


def test_tangent_norm_ekt_radial():
    g = ekt_model(0.0, 0.7).metric
    assert tangent_norm(g, Curve2D("t", "0", (0, math.inf)), 2.0) == pytest.approx(1.0, abs=1e-15)


def test_tangent_norm_outside_domain():
    g = ekt_model(0.0, 1.0).metric
    with pytest.raises(DomainExitError):
        tangent_norm(g, Curve2D("t", "0"), -1.0)


def test_metric_positivity_validated():
    with pytest.raises(PositivityError):
        Metric2D("1", "2", "1", ("u", "v"))
    with pytest.raises(PositivityError):
        Metric2D("u", "0", "1", ("u", "v"))


def test_domain_constraint():
    names = ["r", "z"]
    d = Domain(((0, math.inf), (-math.inf, math.inf)), (parse("4-r^2", names),), ("r", "z"))
    assert d.contains(1.0, 0.0)
    assert not d.contains(2.5, 0.0)
    assert not d.contains(-1.0, 0.0)


def test_arclength_linear_speed_two():
    a = arclength_reparam(Curve2D("2*t", "0"), EUC, 0.0, 1)
    for s in (0.1, 1.0, 7.3, 40.0):
        assert a.t_of(s) == pytest.approx(s / 2, abs=1e-9)


def test_arclength_diagonal():
    a = arclength_reparam(Curve2D("t", "t"), EUC, 0.0, 1)
    for s in (0.5, 3.0, 20.0):
        assert a.t_of(s) == pytest.approx(s / math.sqrt(2), abs=1e-9)


def test_arclength_ekt_speed_one():
    g = ekt_model(0.0, 1.0).metric
    a = ArcLengthCurve(Curve2D("t", "0", (0, math.inf)), g, 1.0, 1)
    assert a.t_of(5.0) == pytest.approx(6.0, abs=1e-9)


def test_arclength_backward_terminates_at_axis():
    g = ekt_model(0.0, 1.0).metric
    a = ArcLengthCurve(Curve2D("t", "0", (0, math.inf)), g, 1.0, -1)
    with pytest.raises(DomainExitError):
        a.t_of(2.0)
    assert a.terminated == pytest.approx(1.0, abs=1e-9)


def test_arclength_regularity_failure():
    with pytest.raises(RegularityError):
        ArcLengthCurve(Curve2D("t^3", "0"), EUC, 0.0, 1)


def test_arclength_monotone_and_unit_speed():
    c = Curve2D("t", "sin(t)")
    a = ArcLengthCurve(c, EUC, 0.0, 1)
    ss = np.linspace(0, 30, 301)
    ts = [a.t_of(s) for s in ss]
    assert all(b > x for x, b in zip(ts, ts[1:]))
    # central difference of t(s) with h=1e-4: truncation and interpolation noise near 1e-8
    assert max(a.unit_speed_error(s) for s in ss[1:]) < 1e-7


def test_arclength_queries_are_reentrant():
    from concurrent.futures import ThreadPoolExecutor

    a = ArcLengthCurve(Curve2D("t", "sin(t)"), EUC, 0.0, 1)
    ss = np.linspace(0.5, 80, 64)
    with ThreadPoolExecutor(4) as ex:
        par = list(ex.map(a.t_of, ss))
    b = ArcLengthCurve(Curve2D("t", "sin(t)"), EUC, 0.0, 1)
    assert np.allclose(par, [b.t_of(s) for s in ss], atol=1e-9, rtol=0)


def test_conformal_scale_identity_and_exponential():
    same = conformal_scale(EUC, parse("1", ["u", "v"]))
    assert same.components(0.3, -2.0) == EUC.components(0.3, -2.0)
    g = conformal_scale(EUC, parse("exp(u)", ["u", "v"]))
    E, F, G = g.components(0.7, 1.0)
    assert E == pytest.approx(math.exp(1.4), rel=1e-15) and G == pytest.approx(math.exp(1.4), rel=1e-15)
    assert F == 0


def test_conformal_scale_rejects_nonpositive():
    with pytest.raises(PositivityError):
        conformal_scale(EUC, parse("u", ["u", "v"]))


@pytest.mark.parametrize("kappa,tau", [(0.0, 1.0), (0.0, 3.0), (-1.0, 0.5), (0.0, 0.0)])
def test_ekt_conformal_metric_matches_closed_form(kappa, tau):
    m = ekt_model(kappa, tau, "as-printed")
    scaled = m.conformal_metric()
    closed = ekt_conformal_metric_closed_form(kappa, tau)
    for u, v in m.metric.domain.probe_points()[::97]:
        for a, b in zip(scaled.components(u, v), closed.components(u, v)):
            assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


def test_curve_length_basic():
    assert curve_length(Curve2D("t", "0"), EUC, (0, 5)) == pytest.approx(5, abs=1e-12)
    circle = Curve2D("cos(t)", "sin(t)", (0, 2 * math.pi))
    assert curve_length(circle, EUC, (0, 2 * math.pi)) == pytest.approx(2 * math.pi, abs=1e-9)


def test_curve_length_umbrella_conformal_metric():
    # oracle: 30-digit quadrature of 2/(t sqrt(1+t^2)) over [1, 10]
    gc = ekt_conformal_metric_closed_form(0.0, 1.0)
    L = curve_length(Curve2D("t", "0", (0, math.inf)), gc, (1, 10))
    assert L == pytest.approx(1.56307901624067092, abs=1e-8)


def test_curve_length_matches_arclength_parameter():
    c = Curve2D("t", "sin(t)")
    a = ArcLengthCurve(c, EUC, 0.0, 1)
    for s1, s2 in [(0.0, 1.0), (2.0, 9.5), (3.3, 25.0)]:
        assert curve_length(c, EUC, (a.t_of(s1), a.t_of(s2))) == pytest.approx(s2 - s1, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(0.1, 3.0))
def test_conformal_scaling_scales_tangent_norm(t, a, b):
    f = parse(f"exp({a!r}*u)+{b!r}", ["u", "v"])
    c = Curve2D("t^2", "sin(t)")
    g2 = conformal_scale(EUC, f)
    u, _ = c.point(t)
    fv = math.exp(a * u) + b
    assert tangent_norm(g2, c, t) == pytest.approx(fv * tangent_norm(EUC, c, t), rel=1e-12, abs=1e-300)


def test_warped_curvature_examples():
    assert warped_curvature(MuProfile.from_expression("1", var="x"), 2.0) == 0.0
    assert warped_curvature(MuProfile.from_expression("sin(x)", var="x"), 0.3) == pytest.approx(1.0, abs=1e-6)
    assert warped_curvature(MuProfile.from_expression("exp(x)", var="x"), -1.2) == pytest.approx(-1.0, abs=1e-6)
    with pytest.raises(DomainFault):
        warped_curvature(MuProfile.from_expression("x", var="x"), 0.0)


def test_warped_curvature_table_uses_finite_differences():
    xs = np.linspace(0.2, 3.0, 400)
    tab = MuProfile.from_table(list(zip(xs, np.sin(xs))))
    # pchip is only C1, so second derivatives of the table carry percent-level error
    assert warped_curvature(tab, 1.1) == pytest.approx(1.0, abs=3e-2)


def test_validate_curve_rejects_exit():
    g = ekt_model(0.0, 1.0).metric
    with pytest.raises(DomainExitError):
        validate_curve(Curve2D("t", "0"), g)
