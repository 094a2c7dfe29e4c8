import math

import mpmath as mp
import numpy as np
import pytest

from nbmmse.divergence import divergence_derivative, divergence_single
from nbmmse.errors import (ChannelSnr, ErrorPair, SpectrumAllocation, asymptotic_errors,
                           check_bridge, cmmse_gaussian, cmmse_tone_sum, error_pair,
                           gaussian_bridge_residual, mmse_gaussian, mmse_tone_sum)
from nbmmse.exceptions import DomainError


def test_gaussian_closed_forms_against_mpmath():
    mp.mp.dps = 30
    assert cmmse_gaussian(SpectrumAllocation.equal(1), 100) == pytest.approx(
        float(mp.mpf("0.02") * mp.log(51)), rel=1e-15)
    assert cmmse_gaussian(SpectrumAllocation.equal(50), 100) == pytest.approx(
        float(mp.log(2)), rel=1e-15)
    assert mmse_gaussian(SpectrumAllocation.equal(1), 100) == pytest.approx(1 / 51, rel=1e-15)
    assert mmse_gaussian(SpectrumAllocation.equal(50), 100) == pytest.approx(0.5, rel=1e-15)
    assert cmmse_gaussian(SpectrumAllocation.equal(3), 0.0) == 1.0
    assert cmmse_gaussian(SpectrumAllocation.equal(3), 1e-300) == 1.0


def test_zero_snr_limits():
    alloc = SpectrumAllocation.equal(4)
    assert cmmse_tone_sum(alloc, 0.0).value == 1.0
    assert mmse_tone_sum(alloc, 0.0).value == 1.0
    near = error_pair(alloc, 1e-8)
    assert near.cmmse == pytest.approx(1.0, abs=1e-8)
    assert near.mmse == pytest.approx(1.0, abs=1e-8)


def test_single_wave_mmse_equals_posterior_formula():
    # non-causal error of one tone: 1 - E[(I1/I0)(sqrt(q) r)^2] under the Rician law
    mp.mp.dps = 25
    q = 2.0
    f = lambda r: r * mp.exp(-(r * r + q) / 2) * mp.besseli(0, r * mp.sqrt(q))
    ratio = lambda r: mp.besseli(1, r * mp.sqrt(q)) / mp.besseli(0, r * mp.sqrt(q))
    ref = 1 - mp.quad(lambda r: f(r) * ratio(r) ** 2, [0, 2, 6, 20])
    assert mmse_tone_sum(SpectrumAllocation.equal(1), q).value == pytest.approx(float(ref),
                                                                              abs=1e-10)


def test_documented_values_at_q100():
    alloc = SpectrumAllocation.equal(1)
    c = cmmse_tone_sum(alloc, 100.0).value
    assert c == pytest.approx(0.02 * math.log(51) - 0.02 * divergence_single(100.0).value,
                              rel=1e-14)
    m = mmse_tone_sum(alloc, 100.0).value
    assert m == pytest.approx(1 / 51 - 2 * divergence_derivative(100.0).value, rel=1e-14)


@pytest.mark.parametrize("q", [0.5, 2.0, 10.0, 100.0])
@pytest.mark.parametrize("n", [1, 2, 5, 20])
def test_ordering_and_gaussian_dominance(q, n):
    alloc = SpectrumAllocation.equal(n)
    pair = error_pair(alloc, q)
    slack = pair.divergence_error_bound + 1e-12
    assert 0 <= pair.mmse <= pair.cmmse + slack <= 1 + slack
    assert pair.cmmse <= cmmse_gaussian(alloc, q) + slack
    assert pair.mmse <= mmse_gaussian(alloc, q) + slack


def test_monotone_in_snr():
    alloc = SpectrumAllocation.from_energies([0.6, 0.3, 0.1])
    qs = np.geomspace(0.05, 200, 12)
    c = [cmmse_tone_sum(alloc, q).value for q in qs]
    m = [mmse_tone_sum(alloc, q).value for q in qs]
    assert all(b < a for a, b in zip(c, c[1:]))
    assert all(b < a for a, b in zip(m, m[1:]))


def test_more_waves_approach_gaussian():
    q = 100.0
    gaps = [cmmse_gaussian(SpectrumAllocation.equal(n), q)
            - cmmse_tone_sum(SpectrumAllocation.equal(n), q).value for n in (10, 40, 200)]
    assert gaps[0] > gaps[1] > gaps[2] > 0


@pytest.mark.parametrize("form", ["differential", "integral"])
@pytest.mark.parametrize("q", [0.3, 2.0, 100.0])
def test_bridge(form, q):
    alloc = SpectrumAllocation.equal(3)
    assert check_bridge(alloc, q, form=form) < 1e-8


def test_bridge_detects_bias():
    alloc = SpectrumAllocation.equal(2)

    def biased(q, spec):
        d = divergence_single(q, spec)
        return type(d)(d.value * 1.01, d.error_estimate, d.truncation_radius)

    assert check_bridge(alloc, 2.0, form="differential", divergence_fn=biased) > 1e-6


def test_gaussian_bridge():
    for n in (1, 7, 40):
        assert gaussian_bridge_residual(SpectrumAllocation.equal(n), 10.0) < 1e-10


def test_asymptotic_errors():
    pair = asymptotic_errors(1.0, 100, 0.0)
    assert pair.cmmse == pytest.approx(0.9975)
    assert pair.mmse == pytest.approx(0.995)
    assert asymptotic_errors(1e6, 1, 0.0).cmmse == 0.0


def test_large_n_matches_asymptotics():
    n = 1024
    exact = error_pair(SpectrumAllocation.equal(n), 1.0)
    approx = asymptotic_errors(1.0, n, 0.0)
    assert abs(exact.cmmse - approx.cmmse) / (1 - approx.cmmse) < 1e-3
    assert abs(exact.mmse - approx.mmse) / (1 - approx.mmse) < 1e-3


@pytest.mark.parametrize("bad", [(), (0.5, 0.5), (1.0, 0.0), (math.nan,), (-1.0,)])
def test_allocation_validation(bad):
    with pytest.raises(DomainError):
        SpectrumAllocation(bad)


def test_other_validation():
    with pytest.raises(DomainError):
        SpectrumAllocation.equal(0)
    with pytest.raises(DomainError):
        ChannelSnr(-1.0)
    with pytest.raises(DomainError):
        ErrorPair(0.5, 0.6)
    with pytest.raises(DomainError):
        check_bridge(SpectrumAllocation.equal(1), 0.0)
    with pytest.raises(DomainError):
        check_bridge(SpectrumAllocation.equal(1), 1.0, form="other")
    assert SpectrumAllocation.from_energies([0.25] * 4) == SpectrumAllocation.equal(4)
