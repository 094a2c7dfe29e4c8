"""Divergence between the Rician envelope law and its covariance-matched Rayleigh.

``D(q) = int_0^inf f(r) ln(f(r)/g(r)) dr`` has no closed form; it is
computed by adaptive Gauss-Kronrod quadrature on ``[0, R]`` with an
explicit bound on the neglected tail. Below ``SMALL_Q`` the exact power
series from :mod:`nbmmse.smallq` is used instead, since the integral is
then ~q^4/128 and below any achievable quadrature tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import smallq
from .exceptions import ConvergenceError, DomainError, EstimationError
from .quadrature import integrate
from .specfun import bessel_i0_scaled, bessel_ratio_over_x, log_bessel_i0

SMALL_Q = 1e-3
_LOG_UNDERFLOW = -745.0


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-13
    max_subdivisions: int = 2000
    tail_mass_bound: float = 1e-14

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise DomainError(f"{name} must lie in (0, 1), got {v!r}")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")
        if not 0.0 < self.tail_mass_bound <= self.abs_tol / 10.0:
            raise DomainError("tail_mass_bound must be positive and <= abs_tol / 10")


DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class DivergenceResult:
    """A divergence value (nats) or its q-derivative, with an error estimate."""

    value: float
    error_estimate: float
    truncation_radius: float

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class AsymptoticCoefficients:
    """Small-q estimate of the second derivative of the divergence at 0."""

    d2_at_zero: float
    fit_residual: float
    grid_description: dict = field(default_factory=dict)


def truncation_radius(q: float) -> float:
    return math.sqrt(q) + 12.0 + 12.0 * math.sqrt(1.0 + 0.5 * q)


def _tail_bound(radius, q, poly, degree):
    # f(r) <= r exp(-(r - sqrt q)^2 / 2); the polynomial factor grows slower
    # than the Gaussian decays once s = R - sqrt(q) exceeds degree / R.
    s = radius - math.sqrt(q)
    denom = s - (degree + 1) / radius
    if denom <= 0:
        return math.inf
    return radius * poly(radius) * math.exp(-0.5 * s * s) / denom


def _llr_bound(r, q):
    # |ln f - ln g| <= q/2 + 2 r sqrt(q) + ln(1 + q/2) + r^2 / 2
    return 0.5 * q + 2.0 * r * math.sqrt(q) + math.log1p(0.5 * q) + 0.5 * r * r


def _log_ratio(r, q):
    """``ln f(r) - ln g(r)`` arranged to avoid cancellation in both regimes."""
    sq = math.sqrt(q)
    x = r * sq
    if q < 1.0:
        return -0.5 * q + log_bessel_i0(x) + math.log1p(0.5 * q) - 0.5 * r * r * q / (2.0 + q)
    return (-0.5 * (r - sq) ** 2 + r * r / (2.0 + q)
            + np.log(bessel_i0_scaled(x)) + math.log1p(0.5 * q))


def _log_rician(r, q):
    sq = math.sqrt(q)
    with np.errstate(divide="ignore"):
        return np.log(r) - 0.5 * (r - sq) ** 2 + np.log(bessel_i0_scaled(r * sq))


def _weighted(logf, values):
    with np.errstate(under="ignore", invalid="ignore"):
        out = np.exp(logf) * values
    return np.where(logf < _LOG_UNDERFLOW, 0.0, out)


def _breakpoints(q, radius):
    c = math.sqrt(q)
    marks = [c + d for d in (-12.0, -6.0, -2.0, 0.0, 2.0, 6.0, 12.0)]
    inner = sorted({m for m in marks if 0.0 < m < radius})
    return [0.0, *inner, radius]


def _check_q(q):
    q = float(q)
    if not math.isfinite(q) or q < 0.0:
        raise DomainError(f"q must be finite and >= 0, got {q!r}")
    return q


def _integrate_tail_checked(integrand, q, spec, poly, degree):
    radius = truncation_radius(q)
    tail = _tail_bound(radius, q, poly, degree)
    while tail > spec.tail_mass_bound:
        radius += 6.0
        tail = _tail_bound(radius, q, poly, degree)
    try:
        res = integrate(integrand, _breakpoints(q, radius), spec.abs_tol, spec.rel_tol,
                        spec.max_subdivisions)
    except ConvergenceError as exc:
        best = exc.best
        raise ConvergenceError(
            str(exc), DivergenceResult(best.value, best.error + tail, radius)) from None
    return DivergenceResult(res.value, res.error + tail, radius)


def divergence_single(q: float, spec: QuadratureSpec | None = None) -> DivergenceResult:
    """KL divergence of the Rician envelope law from the Rayleigh with equal power."""
    q = _check_q(q)
    spec = spec or DEFAULT_SPEC
    if q == 0.0:
        return DivergenceResult(0.0, 0.0, truncation_radius(0.0))
    if q < SMALL_Q:
        return DivergenceResult(smallq.divergence_series(q), smallq.series_truncation_bound(q),
                                truncation_radius(q))

    def integrand(r):
        return _weighted(_log_rician(r, q), _log_ratio(r, q))

    return _integrate_tail_checked(integrand, q, spec, lambda r: _llr_bound(r, q), 3)


def divergence_derivative(q: float, spec: QuadratureSpec | None = None) -> DivergenceResult:
    """``dD/dq`` by quadrature of the analytic derivative of the integrand.

    ``dD/dq = int f [s(r) ln(f/g) - d ln g / dq] dr`` where
    ``s = d ln f / dq = -1/2 + (r^2/2) I1(x)/(x I0(x))`` with ``x = r sqrt(q)``;
    the ``int df/dq`` term vanishes by normalization.
    """
    q = _check_q(q)
    spec = spec or DEFAULT_SPEC
    if q == 0.0:
        return DivergenceResult(0.0, 0.0, truncation_radius(0.0))
    if q < SMALL_Q:
        return DivergenceResult(smallq.divergence_derivative_series(q),
                                smallq.series_truncation_bound(q) / q, truncation_radius(q))
    sq = math.sqrt(q)

    def integrand(r):
        score = -0.5 + 0.5 * r * r * bessel_ratio_over_x(r * sq)
        dlogg = -1.0 / (2.0 + q) + r * r / (2.0 + q) ** 2
        return _weighted(_log_rician(r, q), score * _log_ratio(r, q) - dlogg)

    def poly(r):
        return (0.5 + 0.25 * r * r) * _llr_bound(r, q) + 1.0 / (2.0 + q) + 0.25 * r * r

    return _integrate_tail_checked(integrand, q, spec, poly, 5)


def divergence_sum(alloc, q: float, spec: QuadratureSpec | None = None, *,
                   divergence_fn=None) -> DivergenceResult:
    """Sum of single-wave divergences at the per-wave SNRs ``alpha_i^2 q``."""
    q = _check_q(q)
    fn = divergence_fn or divergence_single
    cache = {}
    parts = []
    for e in alloc.energies:
        gamma = float(e) * q
        if gamma not in cache:
            cache[gamma] = fn(gamma, spec)
        parts.append(cache[gamma])
    return DivergenceResult(
        math.fsum(p.value for p in parts),
        math.fsum(p.error_estimate for p in parts),
        max(p.truncation_radius for p in parts),
    )


def default_q_grid():
    return np.geomspace(1e-1, 1e-4, 7)


def estimate_d2_at_zero(spec: QuadratureSpec | None = None, q_grid=None, *,
                        evaluate=None, tolerance: float = 1e-4) -> AsymptoticCoefficients:
    """Extrapolate ``D(q)/q^2`` to ``q = 0``; the limit is half of ``D''(0)``.

    ``evaluate`` replaces :func:`divergence_single` (it may return a float
    or a :class:`DivergenceResult`). The fit is a quadratic in ``q`` over
    the whole grid; ``fit_residual`` is the larger of the fit's RMS misfit
    and the change in the extrapolated ``D''(0)`` when only the three
    smallest grid points are used.
    """
    spec = spec or DEFAULT_SPEC
    grid = np.asarray(default_q_grid() if q_grid is None else q_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 3:
        raise DomainError("q_grid needs at least three points")
    if np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
        raise DomainError("q_grid must be positive and strictly decreasing")
    if grid[-1] < 1e-4 and spec.abs_tol > 1e-16:
        raise DomainError("grid points below 1e-4 require abs_tol <= 1e-16")
    fn = evaluate or divergence_single
    values = np.array([float(fn(q, spec) if evaluate is None else fn(q)) for q in grid])
    ratios = values / grid**2
    if not np.all(np.isfinite(ratios)):
        raise EstimationError("non-finite divergence on the grid", {"ratios": ratios.tolist()})

    def fit(qs, ys):
        scale = qs.max()
        x = qs / scale
        deg = min(2, len(qs) - 1)
        design = np.vander(x, deg + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
        resid = ys - design @ coef
        return coef[0], float(np.sqrt(np.mean(resid**2)))

    intercept, rms = fit(grid, ratios)
    tail_intercept, _ = fit(grid[-3:], ratios[-3:])
    d2 = 2.0 * intercept
    fit_residual = max(rms, abs(2.0 * tail_intercept - d2))
    gaps = np.abs(values - 0.5 * d2 * grid**2) / grid**2
    diagnostics = {
        "q_grid": grid.tolist(),
        "ratios": ratios.tolist(),
        "remainder_over_q2": gaps.tolist(),
        "tolerance": tolerance,
    }
    if fit_residual > tolerance:
        raise EstimationError(f"unstable extrapolation (residual {fit_residual:.3g})", diagnostics)
    last = gaps[-3:]
    if np.any(np.diff(last) > 1e-15):
        raise EstimationError("remainder over q^2 does not decrease along the grid", diagnostics)
    return AsymptoticCoefficients(float(d2), float(fit_residual), diagnostics)
