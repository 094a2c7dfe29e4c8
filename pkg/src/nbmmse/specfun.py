"""Scaled modified Bessel functions and the Rician / Rayleigh envelope densities.

Everything here works in the log domain or with exponentially scaled
Bessel functions, so arguments like ``r * sqrt(q)`` in the thousands are
fine. Functions accept scalars or arrays and return the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

# Power series below, large-argument expansion above. At 20 the smallest
# term of the divergent expansion is ~e^-40, far below double precision.
_SERIES_CUTOFF = 20.0
_SERIES_TERMS = 64
_ASYMPTOTIC_TERMS = 18


@dataclass(frozen=True)
class EnvelopeDensityParams:
    """SNR parameter ``q`` shared by the Rician and Rayleigh envelope laws."""

    q: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and self.q >= 0.0):
            raise DomainError(f"q must be finite and >= 0, got {self.q!r}")


def _as_params(p) -> EnvelopeDensityParams:
    if isinstance(p, EnvelopeDensityParams):
        return p
    return EnvelopeDensityParams(float(p))


def _check_arg(x, name="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite")
    if np.any(x < 0):
        raise DomainError(f"{name} must be >= 0")
    return x


def _series_i0_i1(x):
    """Unscaled I0(x), I1(x)/x by their power series (x <= cutoff)."""
    t = 0.25 * x * x
    term0 = np.ones_like(x)
    term1 = np.full_like(x, 0.5)
    s0 = term0.copy()
    s1 = term1.copy()
    for k in range(1, _SERIES_TERMS):
        term0 = term0 * t / (k * k)
        term1 = term1 * t / (k * (k + 1))
        s0 += term0
        s1 += term1
    return s0, s1


def _asymptotic_scaled(x):
    """e^-x I0(x) and e^-x I1(x) from the large-argument expansion."""
    inv8x = 1.0 / (8.0 * x)
    t0 = np.ones_like(x)
    t1 = np.ones_like(x)
    s0 = t0.copy()
    s1 = t1.copy()
    for k in range(1, _ASYMPTOTIC_TERMS):
        odd = (2 * k - 1) ** 2
        t0 = t0 * odd * inv8x / k
        t1 = -t1 * (4.0 - odd) * inv8x / k
        s0 += t0
        s1 += t1
    pref = 1.0 / np.sqrt(2.0 * np.pi * x)
    return pref * s0, pref * s1


def _scaled_pair(x):
    """Return (e^-x I0, e^-x I1, I1/(x I0)) for a validated float array."""
    i0 = np.empty_like(x)
    i1 = np.empty_like(x)
    over_x = np.empty_like(x)
    small = x <= _SERIES_CUTOFF
    if np.any(small):
        xs = x[small]
        s0, s1 = _series_i0_i1(xs)
        e = np.exp(-xs)
        i0[small] = s0 * e
        i1[small] = s1 * xs * e
        over_x[small] = s1 / s0
    big = ~small
    if np.any(big):
        xb = x[big]
        a0, a1 = _asymptotic_scaled(xb)
        i0[big] = a0
        i1[big] = a1
        over_x[big] = a1 / (a0 * xb)
    return i0, i1, over_x


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def bessel_i0_scaled(x):
    """``exp(-x) * I0(x)`` for ``x >= 0``; lies in (0, 1]."""
    xa = _check_arg(x)
    i0, _, _ = _scaled_pair(np.atleast_1d(xa))
    return _out(i0.reshape(xa.shape), x)


def bessel_i1_scaled(x):
    """``exp(-x) * I1(x)`` for ``x >= 0``."""
    xa = _check_arg(x)
    _, i1, _ = _scaled_pair(np.atleast_1d(xa))
    return _out(i1.reshape(xa.shape), x)


def bessel_ratio_i1_i0(x):
    """``I1(x) / I0(x)``: 0 at the origin, increasing, below 1.

    This is the posterior mean resultant length of a von Mises phase with
    concentration ``x``.
    """
    xa = _check_arg(x)
    _, _, over_x = _scaled_pair(np.atleast_1d(xa))
    return _out((over_x * np.atleast_1d(xa)).reshape(xa.shape), x)


def bessel_ratio_over_x(x):
    """``I1(x) / (x I0(x))`` with its limit 1/2 at ``x = 0``."""
    xa = _check_arg(x)
    _, _, over_x = _scaled_pair(np.atleast_1d(xa))
    return _out(over_x.reshape(xa.shape), x)


def log_bessel_i0(x):
    """``ln I0(x)``, accurate for tiny arguments (where it is ~x^2/4) too."""
    xa = np.atleast_1d(_check_arg(x))
    out = np.empty_like(xa)
    small = xa < 1.0
    if np.any(small):
        xs = xa[small]
        t = 0.25 * xs * xs
        term = np.ones_like(xs)
        tail = np.zeros_like(xs)
        for k in range(1, 24):
            term = term * t / (k * k)
            tail += term
        out[small] = np.log1p(tail)
    big = ~small
    if np.any(big):
        xb = xa[big]
        i0, _, _ = _scaled_pair(xb)
        out[big] = xb + np.log(i0)
    return _out(out.reshape(np.shape(x)), x)


def rician_log_pdf(r, p):
    """Log density of the Rician envelope with noncentrality ``sqrt(q)``.

    ``f(r) = r exp(-(r^2 + q)/2) I0(r sqrt(q))`` evaluated as
    ``ln r - (r - sqrt q)^2 / 2 + ln[e^-x I0(x)]`` with ``x = r sqrt(q)``,
    which never forms ``I0`` itself. Returns ``-inf`` at ``r = 0``.
    """
    q = _as_params(p).q
    ra = _check_arg(r, "r")
    rr = np.atleast_1d(ra)
    sq = math.sqrt(q)
    i0, _, _ = _scaled_pair(rr * sq)
    with np.errstate(divide="ignore"):
        out = np.log(rr) - 0.5 * (rr - sq) ** 2 + np.log(i0)
    return _out(out.reshape(ra.shape), r)


def rayleigh_log_pdf(r, p):
    """Log density of the Rayleigh law with the same second moment ``2 + q``."""
    q = _as_params(p).q
    ra = _check_arg(r, "r")
    s2 = 1.0 + 0.5 * q
    with np.errstate(divide="ignore"):
        out = np.log(ra) - math.log(s2) - 0.5 * ra * ra / s2
    return _out(out, r)


def rician_pdf(r, p):
    return np.exp(rician_log_pdf(r, p))


def rayleigh_pdf(r, p):
    return np.exp(rayleigh_log_pdf(r, p))
