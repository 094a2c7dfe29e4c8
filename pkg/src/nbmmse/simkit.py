"""Monte Carlo ground truth for the closed-form error expressions.

Signals are sampled on a uniform time grid over ``[0, T]`` and observed
through ``d eta = sqrt(q) xi dt + dW``. Two oracles check the closed
forms without touching the divergence quadrature:

* a non-causal oracle that projects each tone onto its quadrature pair;
  the phase posterior is von Mises and the error is ``1 - E[(I1/I0)^2]``;
* a causal grid-posterior filter for a single wave, which tracks the
  exact discrete-time posterior of the phase on a uniform grid.

Every path draws from its own Philox substream keyed by ``seed`` with the
path index in the counter, so results do not depend on batching or on
the number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from .divergence import DEFAULT_SPEC, QuadratureSpec, _breakpoints, truncation_radius
from .errors import SpectrumAllocation, _alloc, _q
from .exceptions import DomainError, NumericalError
from .quadrature import integrate
from .specfun import bessel_ratio_i1_i0, rician_log_pdf

PHASE_STREAM = 0
NOISE_STREAM = 1
ENVELOPE_STREAM = 2
COEFF_STREAM = 3


def substream(seed: int, path_index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, path, purpose) triple."""
    return np.random.Generator(
        np.random.Philox(key=int(seed), counter=[0, 0, int(path_index), int(stream)]))


@dataclass(frozen=True)
class ToneGrid:
    horizon: float = 1.0
    wave_indices: tuple = (1,)

    def __post_init__(self):
        ks = tuple(int(k) for k in self.wave_indices)
        object.__setattr__(self, "wave_indices", ks)
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if not ks or any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
            raise DomainError("wave indices must be strictly increasing positive integers")

    @classmethod
    def default(cls, n: int = 1, horizon: float = 1.0) -> "ToneGrid":
        return cls(horizon, tuple(range(1, n + 1)))

    @property
    def n(self) -> int:
        return len(self.wave_indices)

    @property
    def omegas(self) -> np.ndarray:
        return 2.0 * np.pi * np.array(self.wave_indices) / self.horizon


@dataclass(frozen=True)
class MonteCarloSpec:
    paths: int = 20000
    dt: float = 1.0 / 8192
    theta_grid_size: int = 512
    seed: int = 42

    def __post_init__(self):
        if self.paths < 1:
            raise DomainError("paths must be >= 1")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.theta_grid_size < 16 or self.theta_grid_size % 8:
            raise DomainError("theta_grid_size must be a multiple of 8 and >= 16")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    def steps(self, horizon: float) -> int:
        s = horizon / self.dt
        n = round(s)
        if n < 1 or abs(s - n) > 1e-9 * max(1.0, s):
            raise DomainError(f"dt={self.dt!r} does not divide T={horizon!r}")
        return int(n)


@dataclass(frozen=True)
class SampledPath:
    dt: float
    values: np.ndarray
    kind: str
    latent: dict = field(default_factory=dict)

    @property
    def energy(self) -> float:
        return float(np.sum(self.values**2) * self.dt)


@dataclass(frozen=True)
class ObservationPath:
    dt: float
    increments: np.ndarray


def _times(grid: ToneGrid, mc: MonteCarloSpec) -> np.ndarray:
    return np.arange(mc.steps(grid.horizon)) * mc.dt


def sample_tone_path(grid: ToneGrid, alloc, mc: MonteCarloSpec, path_index: int) -> SampledPath:
    """One realization of the random-phase tone sum, sampled at left grid points."""
    alloc = _alloc(alloc)
    if alloc.n != grid.n:
        raise DomainError(f"allocation has {alloc.n} waves but the grid has {grid.n}")
    t = _times(grid, mc)
    theta = substream(mc.seed, path_index, PHASE_STREAM).uniform(0.0, 2.0 * np.pi, grid.n)
    amp = math.sqrt(2.0 / grid.horizon) * np.array(alloc.alphas)
    values = (amp[:, None] * np.cos(grid.omegas[:, None] * t[None, :] + theta[:, None])).sum(0)
    return SampledPath(mc.dt, values, "tone-sum", {"theta": theta})


def sample_gaussian_path(grid: ToneGrid, mc: MonteCarloSpec, path_index: int) -> SampledPath:
    """One realization of the Gaussian tone sum with N(0, 1/N) coefficients."""
    t = _times(grid, mc)
    n = grid.n
    coeffs = substream(mc.seed, path_index, COEFF_STREAM).normal(0.0, math.sqrt(1.0 / n), (2, n))
    phase = grid.omegas[:, None] * t[None, :]
    values = (coeffs[0][:, None] * np.cos(phase) + coeffs[1][:, None] * np.sin(phase)).sum(0)
    values /= math.sqrt(grid.horizon)
    return SampledPath(mc.dt, values, "gaussian-sum", {"a_c": coeffs[0], "a_s": coeffs[1]})


def _brownian_increments(rng, steps, dt, base_steps=None):
    base = steps if base_steps is None else int(base_steps)
    if base % steps:
        raise DomainError("noise resolution must be a multiple of the step count")
    fine = rng.normal(0.0, math.sqrt(dt * steps / base), base)
    return fine.reshape(steps, base // steps).sum(1)


def observe(path: SampledPath, snr, mc: MonteCarloSpec, path_index: int, *,
            base_steps=None) -> ObservationPath:
    """Euler increments ``sqrt(q) xi(t_n) dt + dW_n`` of the channel output."""
    q = _q(snr)
    rng = substream(mc.seed, path_index, NOISE_STREAM)
    dw = _brownian_increments(rng, len(path.values), path.dt, base_steps)
    return ObservationPath(path.dt, math.sqrt(q) * path.values * path.dt + dw)


# -- non-causal oracle ------------------------------------------------------

def sample_envelope(gamma: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """``|sqrt(gamma) e^{i theta} + n|`` with uniform phase and unit-variance noise parts."""
    theta = rng.uniform(0.0, 2.0 * np.pi, size)
    noise = rng.normal(size=(2, size))
    sg = math.sqrt(gamma)
    return np.hypot(sg * np.cos(theta) + noise[0], sg * np.sin(theta) + noise[1])


def envelope_ks_pvalue(gamma: float, samples: int = 100_000, seed: int = 42) -> float:
    """KS p-value of simulated envelopes against the Rician law."""
    r = sample_envelope(gamma, samples, substream(seed, 0, ENVELOPE_STREAM))
    return float(stats.kstest(r, stats.rice(math.sqrt(gamma)).cdf).pvalue)


def mmse_tone_oracle(gamma: float, mc: MonteCarloSpec | None = None, *,
                     method: str = "quadrature", spec: QuadratureSpec | None = None):
    """Non-causal MMSE of one unit-energy tone at SNR ``gamma``.

    The whole-window projections give ``v = sqrt(gamma) e^{i theta} + noise``;
    the posterior mean of ``e^{i theta}`` has length ``(I1/I0)(sqrt(gamma)|v|)``,
    so the error is ``1 - E[(I1/I0)(sqrt(gamma) r)^2]`` with ``r`` Rician.
    Returns ``(estimate, std_error)``; for ``method="quadrature"`` the
    second entry is the quadrature error estimate.
    """
    gamma = _q(gamma)
    if gamma == 0.0:
        return 1.0, 0.0
    sg = math.sqrt(gamma)
    if method == "quadrature":
        spec = spec or DEFAULT_SPEC

        def integrand(r):
            with np.errstate(under="ignore"):
                return np.exp(rician_log_pdf(r, gamma)) * bessel_ratio_i1_i0(sg * r) ** 2

        res = integrate(integrand, _breakpoints(gamma, truncation_radius(gamma)),
                        spec.abs_tol, spec.rel_tol, spec.max_subdivisions)
        return 1.0 - res.value, res.error
    if method == "montecarlo":
        mc = mc or MonteCarloSpec()
        r = sample_envelope(gamma, mc.paths, substream(mc.seed, 0, ENVELOPE_STREAM))
        err = 1.0 - bessel_ratio_i1_i0(sg * r) ** 2
        return float(err.mean()), float(err.std(ddof=1) / math.sqrt(len(err)))
    raise DomainError(f"unknown method {method!r}")


def mmse_sum_oracle(alloc, snr, mc: MonteCarloSpec | None = None, *,
                    method: str = "quadrature", spec: QuadratureSpec | None = None):
    """``sum a_i^2 m(a_i^2 q)``: tones are orthogonal over the window, so waves decouple."""
    alloc, q = _alloc(alloc), _q(snr)
    if q == 0.0:
        return 1.0, 0.0
    cache = {}
    est, var = [], []
    for e in alloc.energies:
        g = float(e) * q
        if g not in cache:
            cache[g] = mmse_tone_oracle(g, mc, method=method, spec=spec)
        m, se = cache[g]
        est.append(e * m)
        var.append((e * se) ** 2)
    return math.fsum(est), math.sqrt(math.fsum(var))


# -- causal oracle ----------------------------------------------------------

@numba.njit(inline="always")
def _exp8(x):
    # Taylor to degree 8: exact to rounding for |x| <= 0.05
    return 1.0 + x * (1.0 + x * (1.0 / 2 + x * (1.0 / 6 + x * (1.0 / 24 + x * (
        1.0 / 120 + x * (1.0 / 720 + x * (1.0 / 5040 + x / 40320)))))))


@numba.njit(inline="always")
def _exp10(x):
    # Taylor to degree 10: exact to rounding for |x| <= 0.125
    return 1.0 + x * (1.0 + x * (1.0 / 2 + x * (1.0 / 6 + x * (1.0 / 24 + x * (
        1.0 / 120 + x * (1.0 / 720 + x * (1.0 / 5040 + x * (1.0 / 40320 + x * (
            1.0 / 362880 + x / 3628800)))))))))


@numba.njit(nogil=True, cache=True)
def _grid_filter(xi_tab, signal, noise, sq, dt, err_out, dev_out):
    """Run the phase-grid filter over a batch of paths.

    Strict IEEE arithmetic with fixed 8-lane partial sums, so results do
    not depend on vectorization or memory alignment. The weights are
    renormalized lazily: the factor ``inv`` from step n is folded into the
    update at step n+1.
    """
    steps = signal.shape[1]
    m = xi_tab.shape[1]
    b = 0.5 * sq * sq * dt
    xmax = 0.0
    for j in range(m):
        xmax = max(xmax, abs(xi_tab[0, j]))
    w = np.empty(m)
    s_lane = np.zeros(8)
    a_lane = np.zeros(8)
    for p in range(signal.shape[0]):
        w[:] = 1.0 / m
        xhat = 0.0
        for j in range(m):
            xhat += w[j] * xi_tab[0, j]
        err = 0.0
        dev = 0.0
        inv = 1.0
        for n in range(steps - 1):
            x = signal[p, n]
            e = x - xhat
            err += e * e * dt
            a = sq * (sq * x * dt + noise[p, n])
            row = xi_tab[n]
            bound = abs(a) * xmax + b * xmax * xmax
            if bound <= 0.05:
                for j in range(m):
                    xj = row[j]
                    w[j] = (w[j] * inv) * _exp8(a * xj - b * xj * xj)
            elif bound <= 0.125:
                for j in range(m):
                    xj = row[j]
                    w[j] = (w[j] * inv) * _exp10(a * xj - b * xj * xj)
            else:
                for j in range(m):
                    xj = row[j]
                    w[j] = (w[j] * inv) * math.exp(a * xj - b * xj * xj)
            nxt = xi_tab[n + 1]
            for k in range(8):
                s_lane[k] = 0.0
                a_lane[k] = 0.0
            for j0 in range(0, m, 8):
                for k in range(8):
                    s_lane[k] += w[j0 + k]
                    a_lane[k] += w[j0 + k] * nxt[j0 + k]
            tot = ((s_lane[0] + s_lane[1]) + (s_lane[2] + s_lane[3])) + (
                (s_lane[4] + s_lane[5]) + (s_lane[6] + s_lane[7]))
            acc = ((a_lane[0] + a_lane[1]) + (a_lane[2] + a_lane[3])) + (
                (a_lane[4] + a_lane[5]) + (a_lane[6] + a_lane[7]))
            if not (tot > 0.0 and tot < math.inf):
                dev = math.inf
                break
            inv = 1.0 / tot
            # normalized weights sum to tot * inv
            dev = max(dev, abs(tot * inv - 1.0))
            xhat = acc * inv
        x = signal[p, steps - 1]
        e = x - xhat
        err_out[p] = err + e * e * dt
        dev_out[p] = dev


def worker_threads() -> int:
    """Worker count from ``NBMMSE_THREADS`` (0 or unset: one per CPU)."""
    raw = os.environ.get("NBMMSE_THREADS", "0").strip() or "0"
    n = int(raw)
    return (os.cpu_count() or 1) if n <= 0 else n


@dataclass(frozen=True)
class CausalRun:
    estimate: float
    std_error: float
    path_errors: np.ndarray
    max_weight_deviation: float


def causal_filter_run(grid: ToneGrid, snr, mc: MonteCarloSpec, *, batch: int = 64,
                      base_steps=None) -> CausalRun:
    """Grid-posterior causal filter for a single wave, with per-path diagnostics.

    At step ``n`` the phase weights are multiplied by the discrete Girsanov
    factor ``exp(sqrt(q) xi_j dEta - q xi_j^2 dt / 2)`` and renormalized;
    the causal estimate is the posterior mean of ``xi(t_n)`` given the
    increments before ``t_n``.
    """
    q = _q(snr)
    if grid.n != 1:
        raise DomainError("the causal grid filter handles a single wave only")
    if q <= 0.0:
        raise DomainError("causal estimate needs q > 0")
    steps = mc.steps(grid.horizon)
    t = np.arange(steps + 1) * mc.dt
    omega = grid.omegas[0]
    amp = math.sqrt(2.0 / grid.horizon)
    theta_grid = 2.0 * np.pi * np.arange(mc.theta_grid_size) / mc.theta_grid_size
    xi_tab = amp * np.cos(omega * t[:, None] + theta_grid[None, :])
    sq = math.sqrt(q)
    errors = np.empty(mc.paths)
    devs = np.empty(mc.paths)

    def run_batch(start):
        idx = range(start, min(start + batch, mc.paths))
        theta = np.array([substream(mc.seed, i, PHASE_STREAM).uniform(0.0, 2.0 * np.pi)
                          for i in idx])
        signal = amp * np.cos(omega * t[None, :steps] + theta[:, None])
        noise = np.stack([_brownian_increments(substream(mc.seed, i, NOISE_STREAM), steps,
                                               mc.dt, base_steps) for i in idx])
        _grid_filter(xi_tab, signal, noise, sq, mc.dt,
                     errors[idx.start:idx.stop], devs[idx.start:idx.stop])

    starts = range(0, mc.paths, batch)
    workers = worker_threads()
    if workers == 1:
        for st in starts:
            run_batch(st)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run_batch, starts))
    if not np.all(np.isfinite(devs)) or not np.all(np.isfinite(errors)):
        raise NumericalError("posterior weights collapsed or became non-finite")
    est = math.fsum(errors) / mc.paths
    se = float(errors.std(ddof=1) / math.sqrt(mc.paths)) if mc.paths > 1 else math.inf
    return CausalRun(est, se, errors, float(devs.max()))


def cmmse_causal_estimate(grid: ToneGrid, snr, mc: MonteCarloSpec, *, base_steps=None):
    """Monte Carlo causal MMSE of one random-phase tone: ``(estimate, std_error)``."""
    run = causal_filter_run(grid, snr, mc, base_steps=base_steps)
    return run.estimate, run.std_error
