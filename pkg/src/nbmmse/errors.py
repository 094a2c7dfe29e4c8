"""Causal and non-causal MMSE of normalized tone sums and their Gaussian twins.

Errors are time-integrated squared errors over the observation window,
and the signals carry unit energy, so every error lies in [0, 1]. The
tone-sum errors are the Gaussian errors minus divergence penalties:

    CMMSE = (2/q) sum ln(1 + a_i^2 q / 2) - (2/q) D_N(q)
    MMSE  = sum a_i^2 / (1 + a_i^2 q / 2) - 2 dD_N/dq

``q = 0`` is always handled through analytic limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .divergence import (DEFAULT_SPEC, AsymptoticCoefficients, QuadratureSpec,
                         divergence_derivative, divergence_single, divergence_sum)
from .exceptions import DomainError
from .quadrature import integrate

_ENERGY_TOL = 1e-12


@dataclass(frozen=True)
class SpectrumAllocation:
    """Amplitudes ``alpha_1..alpha_N`` of the waves; ``sum alpha_i^2 = 1``."""

    alphas: tuple

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        object.__setattr__(self, "alphas", alphas)
        if not alphas:
            raise DomainError("allocation needs at least one wave")
        if not all(math.isfinite(a) and a > 0 for a in alphas):
            raise DomainError("every alpha must be positive and finite")
        total = math.fsum(a * a for a in alphas)
        if abs(total - 1.0) > _ENERGY_TOL:
            raise DomainError(f"sum of alpha^2 is {total!r}, expected 1")

    @classmethod
    def equal(cls, n: int) -> "SpectrumAllocation":
        if int(n) != n or n < 1:
            raise DomainError(f"n must be a positive integer, got {n!r}")
        return cls((math.sqrt(1.0 / n),) * int(n))

    @classmethod
    def from_energies(cls, energies) -> "SpectrumAllocation":
        return cls(tuple(math.sqrt(e) for e in energies))

    @property
    def n(self) -> int:
        return len(self.alphas)

    @property
    def energies(self) -> np.ndarray:
        return np.array(self.alphas) ** 2


@dataclass(frozen=True)
class ChannelSnr:
    q: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and self.q >= 0.0):
            raise DomainError(f"q must be finite and >= 0, got {self.q!r}")

    def __float__(self):
        return float(self.q)


@dataclass(frozen=True)
class ErrorValue:
    """One error quantity with the quadrature uncertainty carried into it."""

    value: float
    error_bound: float

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class ErrorPair:
    cmmse: float
    mmse: float
    divergence_error_bound: float = 0.0

    def __post_init__(self):
        slack = self.divergence_error_bound + 1e-12
        if not (-slack <= self.mmse <= self.cmmse + slack and self.cmmse <= 1.0 + slack):
            raise DomainError(
                f"expected 0 <= mmse <= cmmse <= 1, got mmse={self.mmse!r}, cmmse={self.cmmse!r}")


def _q(snr) -> float:
    return ChannelSnr(float(snr)).q


def _alloc(alloc) -> SpectrumAllocation:
    if isinstance(alloc, SpectrumAllocation):
        return alloc
    return SpectrumAllocation(tuple(alloc))


def _log1p_over(x):
    # ln(1 + x) / x with its limit 1 at x = 0
    return 1.0 if x == 0.0 else math.log1p(x) / x


def cmmse_gaussian(alloc, snr) -> float:
    """``(2/q) sum ln(1 + a_i^2 q/2)``, written as ``sum a_i^2 ln(1+x_i)/x_i``."""
    alloc, q = _alloc(alloc), _q(snr)
    if q == 0.0:
        return 1.0
    return math.fsum(e * _log1p_over(0.5 * e * q) for e in alloc.energies)


def mmse_gaussian(alloc, snr) -> float:
    alloc, q = _alloc(alloc), _q(snr)
    if q == 0.0:
        return 1.0
    return math.fsum(e / (1.0 + 0.5 * e * q) for e in alloc.energies)


def cmmse_tone_sum(alloc, snr, spec: QuadratureSpec | None = None, *,
                   divergence_fn=None) -> ErrorValue:
    alloc, q = _alloc(alloc), _q(snr)
    if q == 0.0:
        return ErrorValue(1.0, 0.0)
    d = divergence_sum(alloc, q, spec or DEFAULT_SPEC, divergence_fn=divergence_fn)
    return ErrorValue(cmmse_gaussian(alloc, q) - 2.0 * d.value / q, 2.0 * d.error_estimate / q)


def mmse_tone_sum(alloc, snr, spec: QuadratureSpec | None = None, *,
                  derivative_fn=None) -> ErrorValue:
    alloc, q = _alloc(alloc), _q(snr)
    if q == 0.0:
        return ErrorValue(1.0, 0.0)
    fn = derivative_fn or divergence_derivative
    spec = spec or DEFAULT_SPEC
    cache = {}
    terms, errs = [], []
    for e in alloc.energies:
        gamma = float(e) * q
        if gamma not in cache:
            cache[gamma] = fn(gamma, spec)
        # chain rule: d/dq D(e q) = e D'(e q)
        terms.append(2.0 * e * cache[gamma].value)
        errs.append(2.0 * e * cache[gamma].error_estimate)
    return ErrorValue(mmse_gaussian(alloc, q) - math.fsum(terms), math.fsum(errs))


def error_pair(alloc, snr, spec: QuadratureSpec | None = None) -> ErrorPair:
    c = cmmse_tone_sum(alloc, snr, spec)
    m = mmse_tone_sum(alloc, snr, spec)
    return ErrorPair(c.value, m.value, c.error_bound + m.error_bound)


def asymptotic_errors(snr, n: int, coeffs: AsymptoticCoefficients | float) -> ErrorPair:
    """Leading large-N behaviour ``1 - (1/4 + d2) q/n`` and ``1 - (1/2 + 2 d2) q/n``."""
    q = _q(snr)
    if n < 1:
        raise DomainError("n must be >= 1")
    d2 = coeffs.d2_at_zero if isinstance(coeffs, AsymptoticCoefficients) else float(coeffs)
    c = min(1.0, max(0.0, 1.0 - (0.25 + d2) * q / n))
    m = min(1.0, max(0.0, 1.0 - (0.5 + 2.0 * d2) * q / n))
    return ErrorPair(c, min(m, c))


def _bridge_step(q):
    return max(1e-4, 1e-4 * q)


def check_bridge(alloc, snr, spec: QuadratureSpec | None = None, *, form: str = "differential",
                 divergence_fn=None, derivative_fn=None) -> float:
    """Residual of the relation between causal and non-causal error.

    ``form="differential"``: ``|d/dq[q CMMSE(q)] - MMSE(q)|`` with one
    Richardson level on a central difference of step ``max(1e-4, 1e-4 q)``.
    ``form="integral"``: ``|CMMSE(q) - (1/q) int_0^q MMSE(s) ds|``.
    """
    alloc, q = _alloc(alloc), _q(snr)
    if q <= 0.0:
        raise DomainError("bridge check needs q > 0")
    spec = spec or DEFAULT_SPEC
    mmse = mmse_tone_sum(alloc, q, spec, derivative_fn=derivative_fn).value
    if form == "differential":
        def scaled(s):
            return s * cmmse_tone_sum(alloc, s, spec, divergence_fn=divergence_fn).value

        h = _bridge_step(q)
        coarse = (scaled(q + h) - scaled(q - h)) / (2 * h)
        fine = (scaled(q + h / 2) - scaled(q - h / 2)) / h
        slope = (4.0 * fine - coarse) / 3.0
        return abs(slope - mmse)
    if form == "integral":
        cm = cmmse_tone_sum(alloc, q, spec, divergence_fn=divergence_fn).value

        def integrand(s):
            flat = s.ravel()
            out = [mmse_tone_sum(alloc, float(v), spec, derivative_fn=derivative_fn).value
                   for v in flat]
            return np.array(out).reshape(s.shape)

        area = integrate(integrand, [0.0, q], abs_tol=1e-11 * q, rel_tol=1e-11,
                         max_intervals=200)
        return abs(cm - area.value / q)
    raise DomainError(f"unknown bridge form {form!r}")


def gaussian_bridge_residual(alloc, snr) -> float:
    """Differential bridge on the Gaussian closed forms alone."""
    alloc, q = _alloc(alloc), _q(snr)
    h = _bridge_step(q)

    def scaled(s):
        return s * cmmse_gaussian(alloc, s)

    coarse = (scaled(q + h) - scaled(q - h)) / (2 * h)
    fine = (scaled(q + h / 2) - scaled(q - h / 2)) / h
    return abs((4.0 * fine - coarse) / 3.0 - mmse_gaussian(alloc, q))
