"""Exact power series of the tone-wave divergence in the SNR ``q``.

With ``u = r^2 / 2`` the unit Rayleigh law becomes ``Exp(1)``, so
``E[u^m] = m!``, and both the Rician weight and the log-likelihood
ratio are power series in ``q`` whose coefficients are polynomials in
``u``. Multiplying them and taking expectations term by term gives the
Taylor coefficients of ``D(q)`` as exact rationals.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import factorial

# A bivariate series is a list indexed by the power of q; each entry is
# a list of Fractions indexed by the power of u.


def _zero(order):
    return [[] for _ in range(order + 1)]


def _poly_add(a, b, scale=Fraction(1)):
    n = max(len(a), len(b))
    out = [Fraction(0)] * n
    for i, c in enumerate(a):
        out[i] += c
    for i, c in enumerate(b):
        out[i] += scale * c
    return out


def _poly_mul(a, b):
    if not a or not b:
        return []
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def _mul(a, b, order):
    out = _zero(order)
    for i in range(order + 1):
        for j in range(order + 1 - i):
            out[i + j] = _poly_add(out[i + j], _poly_mul(a[i], b[j]))
    return out


def _log(a, order):
    # b = ln a with a_0 = 1:  n b_n = n a_n - sum_{k=1}^{n-1} k b_k a_{n-k}
    assert a[0] == [Fraction(1)]
    b = _zero(order)
    for n in range(1, order + 1):
        acc = [c * n for c in a[n]]
        for k in range(1, n):
            acc = _poly_add(acc, _poly_mul([c * k for c in b[k]], a[n - k]), Fraction(-1))
        b[n] = [c / n for c in acc]
    return b


def _const(coeffs, order):
    """Series in q alone (u-degree 0) from a coefficient function."""
    return [[Fraction(coeffs(k))] for k in range(order + 1)]


@lru_cache(maxsize=None)
def divergence_coefficients(order: int = 12) -> tuple:
    """Taylor coefficients ``d_0..d_order`` of ``D(q)`` as exact Fractions."""
    half = Fraction(1, 2)
    # I0(sqrt(2 u q)) = sum (u q / 2)^k / (k!)^2
    bessel = _zero(order)
    for k in range(order + 1):
        bessel[k] = [Fraction(0)] * k + [Fraction(1, 2**k * factorial(k) ** 2)]
    expo = _const(lambda k: (-half) ** k / factorial(k), order)
    weight = _mul(expo, bessel, order)

    llr = _log(bessel, order)
    llr[1] = _poly_add(llr[1], [-half])
    for k in range(1, order + 1):
        # ln(1 + q/2)
        llr[k] = _poly_add(llr[k], [Fraction((-1) ** (k + 1), k) * half**k])
        # -u (q/2) / (1 + q/2)
        llr[k] = _poly_add(llr[k], [Fraction(0), -Fraction((-1) ** (k + 1)) * half**k])

    prod = _mul(weight, llr, order)
    return tuple(
        sum((c * factorial(m) for m, c in enumerate(prod[k])), Fraction(0))
        for k in range(order + 1)
    )


def divergence_series(q: float, order: int = 12) -> float:
    """Evaluate the truncated series of ``D(q)``; meant for ``q`` well below 1."""
    c = divergence_coefficients(order)
    return float(sum(float(ck) * q**k for k, ck in enumerate(c)))


def divergence_derivative_series(q: float, order: int = 12) -> float:
    c = divergence_coefficients(order)
    return float(sum(k * float(ck) * q ** (k - 1) for k, ck in enumerate(c) if k))


def series_truncation_bound(q: float, order: int = 12) -> float:
    """Size of the last retained term, a heuristic bound on the truncation error."""
    c = divergence_coefficients(order)
    return abs(float(c[order])) * q**order
