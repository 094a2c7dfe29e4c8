import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import mc_divergence
from nbmmse.divergence import (AsymptoticCoefficients, QuadratureSpec, divergence_derivative,
                               divergence_single, divergence_sum, estimate_d2_at_zero)
from nbmmse.errors import SpectrumAllocation
from nbmmse.exceptions import DomainError, EstimationError

# Frozen from tests/conftest.py::mc_divergence (1e7 draws, seed 20240607, scipy i0e):
# value, standard error
MC_GOLDEN = {2.0: (0.013240633933132342, 4.84631714204519e-05),
             100.0: (1.21258379844069, 0.0002191899215412613)}


def test_zero_snr_is_exact():
    r = divergence_single(0.0)
    assert r.value == 0.0 and r.error_estimate == 0.0
    assert divergence_derivative(0.0).value == 0.0


@pytest.mark.parametrize("q", [-1.0, math.nan, math.inf])
def test_domain(q):
    with pytest.raises(DomainError):
        divergence_single(q)
    with pytest.raises(DomainError):
        divergence_derivative(q)


@pytest.mark.parametrize("q", sorted(MC_GOLDEN))
def test_matches_frozen_monte_carlo(q):
    mean, se = MC_GOLDEN[q]
    d = divergence_single(q)
    assert abs(d.value - mean) <= 3 * se
    assert 0 < d.value < math.log1p(q / 2)


def test_monte_carlo_golden_reproduces():
    assert mc_divergence(2.0, draws=2_000_000)[0] == pytest.approx(MC_GOLDEN[2.0][0], abs=3e-4)


def test_quadrature_spec_validation():
    with pytest.raises(DomainError):
        QuadratureSpec(abs_tol=1e-10, tail_mass_bound=1e-10)
    with pytest.raises(DomainError):
        QuadratureSpec(rel_tol=0.0)
    with pytest.raises(DomainError):
        QuadratureSpec(max_subdivisions=0)


def test_error_estimate_within_tolerance(spec):
    for q in (0.01, 1.0, 50.0, 1000.0):
        d = divergence_single(q, spec)
        assert d.error_estimate <= max(spec.abs_tol, spec.rel_tol * d.value)
        assert d.truncation_radius >= math.sqrt(q) + 12


def _richardson(q, h):
    d1 = (divergence_single(q + h).value - divergence_single(q - h).value) / (2 * h)
    d2 = (divergence_single(q + h / 2).value - divergence_single(q - h / 2).value) / h
    return (4 * d2 - d1) / 3


def test_derivative_at_two_matches_finite_difference():
    dp = divergence_derivative(2.0).value
    assert abs(dp - _richardson(2.0, 1e-4)) <= max(1e-8, 1e-6 * abs(dp))


@pytest.mark.parametrize("q", np.geomspace(1e-2, 1e3, 9))
def test_derivative_on_log_grid(q):
    dp = divergence_derivative(q).value
    assert abs(dp - _richardson(q, 1e-4 * max(1.0, q))) <= max(1e-8, 1e-6 * abs(dp))


def test_derivative_bound_at_100():
    dp = divergence_derivative(100.0)
    assert -dp.error_estimate <= dp.value <= 1 / 102


def test_derivative_vanishes_at_origin():
    vals = [divergence_derivative(q).value for q in (1e-2, 1e-3, 1e-4, 1e-6)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-16


@pytest.mark.parametrize("q", [0.1, 1.0, 10.0, 100.0, 1000.0])
def test_gibbs_and_upper_bound(q):
    d = divergence_single(q)
    dp = divergence_derivative(q)
    assert d.value >= -d.error_estimate
    assert d.value <= math.log1p(q / 2) + d.error_estimate
    assert dp.value >= -dp.error_estimate


def test_sum_identities():
    one = SpectrumAllocation((1.0,))
    assert divergence_sum(one, 5.0).value == divergence_single(5.0).value
    for n in (1, 2, 7, 40):
        alloc = SpectrumAllocation.equal(n)
        s = divergence_sum(alloc, 100.0)
        single = divergence_single(100.0 / n)
        assert abs(s.value - n * single.value) <= n * single.error_estimate + 1e-14
    mixed = SpectrumAllocation.from_energies([0.5, 0.3, 0.2])
    assert divergence_sum(mixed, 0.0).value == 0.0
    expect = sum(divergence_single(e * 10).value for e in (0.5, 0.3, 0.2))
    assert divergence_sum(mixed, 10.0).value == pytest.approx(expect, abs=1e-14)


def test_figure_one_shape():
    dn = [n * divergence_single(100.0 / n).value for n in range(1, 41)]
    peak = int(np.argmax(dn)) + 1
    assert peak in (6, 7, 8)
    tail = dn[peak + 1:]
    assert all(b < a for a, b in zip(tail, tail[1:]))


def test_d2_synthetic_exact_model():
    c = 0.37
    coeffs = estimate_d2_at_zero(evaluate=lambda q: c * q * q)
    assert coeffs.d2_at_zero == pytest.approx(2 * c, rel=1e-13)
    assert coeffs.fit_residual < 1e-14


def test_d2_tone_wave_is_zero():
    # the exact series (checked against sympy in test_smallq) starts at q^4/128
    coeffs = estimate_d2_at_zero()
    assert isinstance(coeffs, AsymptoticCoefficients)
    assert abs(coeffs.d2_at_zero) < 1e-4
    assert coeffs.fit_residual < 1e-4


def test_ratio_decreases_toward_limit():
    ratios = [divergence_single(q).value / q**2 for q in (1e-1, 1e-2, 1e-3)]
    assert ratios[0] > ratios[1] > ratios[2] > 0


def test_d2_grid_validation():
    with pytest.raises(DomainError):
        estimate_d2_at_zero(q_grid=[1e-3, 1e-2, 1e-1])
    with pytest.raises(DomainError):
        estimate_d2_at_zero(q_grid=[1e-3, 1e-4, 1e-5])
    with pytest.raises(EstimationError):
        estimate_d2_at_zero(evaluate=lambda q: math.sin(1 / q) * q)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-6, 5e3))
def test_divergence_bounds_property(q):
    d = divergence_single(q)
    assert -d.error_estimate <= d.value <= math.log1p(q / 2) + d.error_estimate
