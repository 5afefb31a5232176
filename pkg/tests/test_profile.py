import math

import numpy as np
import pytest

from killpar.errors import DomainFault, SpecInconsistencyError
from killpar.profile import MuProfile, fd_derivative


def test_fd_derivative_orders():
    assert fd_derivative(math.sin, 0.4, 1) == pytest.approx(math.cos(0.4), abs=1e-10)
    assert fd_derivative(math.exp, 1.5, 2) == pytest.approx(math.exp(1.5), rel=1e-8)
    with pytest.raises(ValueError):
        fd_derivative(math.sin, 0.0, 3)


def test_expression_profile_derivatives_symbolic():
    mu = MuProfile.from_expression("exp(2*s)")
    assert mu.derivative(0.5, 1) == pytest.approx(2 * math.e)
    assert mu.derivative(0.5, 2) == pytest.approx(4 * math.e)
    assert mu.is_symbolic


def test_table_profile_monotone_interpolation_and_tail():
    s = np.linspace(1, 10, 50)
    mu = MuProfile.from_table(list(zip(s, s**2)), domain=(1, math.inf))
    assert mu(5.0) == pytest.approx(25.0, rel=1e-3)
    # power-law extrapolation beyond the samples
    assert mu(20.0) == pytest.approx(400.0, rel=1e-6)
    assert mu.extrapolates(20.0) and not mu.extrapolates(5.0)


def test_table_validation():
    with pytest.raises(SpecInconsistencyError):
        MuProfile.from_table([(0, 1), (0, 2)])
    with pytest.raises(SpecInconsistencyError):
        MuProfile.from_table([(0, 1), (1, -2)])
    with pytest.raises(SpecInconsistencyError):
        MuProfile.from_table([(0, 1), (1, float("nan"))])


def test_exactly_one_representation():
    with pytest.raises(ValueError):
        MuProfile(domain=(0, 1))


def test_scaled_profile():
    mu = MuProfile.from_expression("1+s^2").scaled(1e3)
    assert mu(2.0) == pytest.approx(5e3)


def test_table_without_tail_model_raises_outside():
    mu = MuProfile.from_table([(0, 0), (1, 0)])
    with pytest.raises(DomainFault):
        mu(5.0)
