"""Command-line front end: sweeps, asymptotic tables and the verification suite.

Exit codes: 0 success, 1 verification failure, 2 numerical-convergence
failure, 3 internal-identity violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import simkit
from .divergence import (QuadratureSpec, DivergenceResult, divergence_derivative,
                         divergence_single, divergence_sum, estimate_d2_at_zero,
                         truncation_radius)
from .errors import (SpectrumAllocation, check_bridge, cmmse_gaussian, cmmse_tone_sum,
                     gaussian_bridge_residual, mmse_gaussian, mmse_tone_sum)
from .exceptions import ConvergenceError
from .quadrature import integrate
from .specfun import rayleigh_log_pdf, rician_log_pdf

EXIT_OK, EXIT_VERIFY, EXIT_CONVERGENCE, EXIT_IDENTITY = 0, 1, 2, 3

CSV_HEADER = ["n", "q", "d_n", "cmmse_tone", "cmmse_gauss", "mmse_tone", "mmse_gauss", "err_bound"]
ASYMPTOTIC_HEADER = ["n", "q", "n_deficit_cmmse", "n_deficit_mmse", "pred_cmmse", "pred_mmse",
                     "rel_gap_cmmse", "rel_gap_mmse", "n_deficit_cmmse_gauss",
                     "n_deficit_mmse_gauss"]


class IdentityViolation(RuntimeError):
    pass


@dataclass
class RunConfig:
    q: object = 100.0
    n_min: int = 1
    n_max: int = 40
    abs_tol: float = 1e-13
    rel_tol: float = 1e-12
    seed: int = 42
    paths: int = 20000
    dt_steps: int = 8192
    theta_grid: int = 512
    out: str | None = None
    svg: str | None = None
    inject_d_bias: float = 0.0

    def __post_init__(self):
        if self.n_min > self.n_max:
            raise ValueError("n_min must not exceed n_max")

    @property
    def q_values(self) -> list:
        return [float(v) for v in (self.q if isinstance(self.q, (list, tuple)) else [self.q])]

    @property
    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(rel_tol=self.rel_tol, abs_tol=self.abs_tol,
                              tail_mass_bound=self.abs_tol / 10.0)

    @property
    def monte_carlo(self) -> simkit.MonteCarloSpec:
        return simkit.MonteCarloSpec(paths=self.paths, dt=1.0 / self.dt_steps,
                                     theta_grid_size=self.theta_grid, seed=self.seed)


_COMMAND_DEFAULTS = {
    "d-sweep": {},
    "error-sweep": {},
    "asymptotics": {"q": 1.0, "n_min": 2, "n_max": 1024},
    "verify": {},
}


@dataclass(frozen=True)
class SweepRow:
    n: int
    q: float
    d_n: float
    cmmse_tone: float
    cmmse_gauss: float
    mmse_tone: float
    mmse_gauss: float
    err_bound: float


def fmt(x) -> str:
    """17 significant digits: the text round-trips to the same double."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _biased(fn, bias):
    if not bias:
        return fn

    def wrapped(q, spec=None):
        r = fn(q, spec)
        return DivergenceResult(r.value * (1.0 + bias), r.error_estimate, r.truncation_radius)

    return wrapped


def sweep_row(n: int, q: float, spec: QuadratureSpec, divergence_fn=None) -> SweepRow:
    alloc = SpectrumAllocation.equal(n)
    d = divergence_sum(alloc, q, spec, divergence_fn=divergence_fn)
    c = cmmse_tone_sum(alloc, q, spec, divergence_fn=divergence_fn)
    m = mmse_tone_sum(alloc, q, spec)
    return SweepRow(n, q, d.value, c.value, cmmse_gaussian(alloc, q), m.value,
                    mmse_gaussian(alloc, q), c.error_bound + m.error_bound)


def _parallel_map(fn, items):
    workers = simkit.worker_threads()
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def compute_sweep(cfg: RunConfig) -> list:
    spec = cfg.quadrature
    div = _biased(divergence_single, cfg.inject_d_bias)
    jobs = [(n, q) for q in cfg.q_values for n in range(cfg.n_min, cfg.n_max + 1)]
    return _parallel_map(lambda job: sweep_row(job[0], job[1], spec, div), jobs)


def write_csv(rows, header, stream):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        values = asdict(row).values() if hasattr(row, "__dataclass_fields__") else row
        writer.writerow([fmt(v) for v in values])


def _emit_csv(rows, header, path):
    if path is None:
        write_csv(rows, header, sys.stdout)
    else:
        with open(path, "w", newline="") as fh:
            write_csv(rows, header, fh)


def render_svg(series: dict, title: str, xlabel: str, ylabel: str, width=640, height=400) -> str:
    """Minimal static SVG line chart, one polyline per series."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    left, right, top, bottom = 70, 20, 40, 50
    xs = np.concatenate([np.asarray(v[0], float) for v in series.values()])
    ys = np.concatenate([np.asarray(v[1], float) for v in series.values()])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(min(ys.min(), 0.0)), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x):
        return left + (x - x0) / (x1 - x0) * (width - left - right)

    def py(y):
        return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="24" text-anchor="middle" font-size="15">{title}</text>',
           f'<line x1="{left}" y1="{py(y0)}" x2="{width - right}" y2="{py(y0)}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" '
           f'font-size="13">{xlabel}</text>',
           f'<text x="16" y="{height / 2}" text-anchor="middle" font-size="13" '
           f'transform="rotate(-90 16 {height / 2})">{ylabel}</text>']
    for tick in np.linspace(y0, y1, 5):
        out.append(f'<text x="{left - 6}" y="{py(tick) + 4:.1f}" text-anchor="end" '
                   f'font-size="11">{tick:.3g}</text>')
    for tick in np.linspace(x0, x1, 5):
        out.append(f'<text x="{px(tick):.1f}" y="{height - bottom + 16}" text-anchor="middle" '
                   f'font-size="11">{tick:.3g}</text>')
    for k, (name, (sx, sy)) in enumerate(series.items()):
        color = colors[k % len(colors)]
        pts = " ".join(f"{px(float(a)):.2f},{py(float(b)):.2f}" for a, b in zip(sx, sy))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{width - right - 150}" y="{top + 16 * (k + 1)}" fill="{color}" '
                   f'font-size="12">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def argmax_set(rows, tie_tol=1e-9) -> list:
    best = max(r.d_n for r in rows)
    return [r.n for r in rows if best - r.d_n <= tie_tol]


def cmd_divergence_sweep(cfg: RunConfig) -> int:
    rows = compute_sweep(cfg)
    _emit_csv(rows, CSV_HEADER, cfg.out)
    for q in cfg.q_values:
        sub = [r for r in rows if r.q == q]
        peaks = argmax_set(sub)
        print(f"q={fmt(q)} argmax_N D_N = {','.join(map(str, peaks))} "
              f"(D_N = {fmt(max(r.d_n for r in sub))})", file=sys.stderr)
    if cfg.svg:
        series = {f"D_N, q={q:g}": ([r.n for r in rows if r.q == q],
                                    [r.d_n for r in rows if r.q == q]) for q in cfg.q_values}
        with open(cfg.svg, "w") as fh:
            fh.write(render_svg(series, "Divergence of the N-wave sum", "N", "D_N (nats)"))
    return EXIT_OK


def check_gap_identity(row: SweepRow) -> bool:
    if row.q == 0.0:
        return row.d_n == 0.0 and row.cmmse_tone == row.cmmse_gauss
    gap = row.cmmse_gauss - row.cmmse_tone
    slack = row.err_bound + 8 * np.finfo(float).eps * max(1.0, abs(row.cmmse_gauss))
    return abs(gap - 2.0 * row.d_n / row.q) <= slack


def cmd_error_sweep(cfg: RunConfig) -> int:
    rows = compute_sweep(cfg)
    bad = [r for r in rows if not check_gap_identity(r)]
    if bad:
        r = bad[0]
        raise IdentityViolation(f"gap identity violated at n={r.n}, q={fmt(r.q)}")
    _emit_csv(rows, CSV_HEADER, cfg.out)
    if cfg.svg:
        series = {}
        for q in cfg.q_values:
            sub = [r for r in rows if r.q == q]
            series[f"CMMSE Gaussian, q={q:g}"] = ([r.n for r in sub], [r.cmmse_gauss for r in sub])
            series[f"CMMSE tones, q={q:g}"] = ([r.n for r in sub], [r.cmmse_tone for r in sub])
        with open(cfg.svg, "w") as fh:
            fh.write(render_svg(series, "Causal MMSE of N-wave sums", "N", "CMMSE"))
    return EXIT_OK


def _rel_gap(value, pred):
    if value == pred:
        return 0.0
    return abs(value - pred) / max(abs(pred), np.finfo(float).tiny)


def asymptotic_rows(cfg: RunConfig, d2: float) -> list:
    spec = cfg.quadrature
    div = _biased(divergence_single, cfg.inject_d_bias)
    ns = [2**k for k in range(0, 40) if cfg.n_min <= 2**k <= cfg.n_max]
    rows = []
    for q in cfg.q_values:
        for n in ns:
            alloc = SpectrumAllocation.equal(n)
            c = cmmse_tone_sum(alloc, q, spec, divergence_fn=div).value
            m = mmse_tone_sum(alloc, q, spec).value
            pc, pm = (0.25 + d2) * q, (0.5 + 2.0 * d2) * q
            dc, dm = n * (1.0 - c), n * (1.0 - m)
            rows.append([n, q, dc, dm, pc, pm, _rel_gap(dc, pc), _rel_gap(dm, pm),
                         n * (1.0 - cmmse_gaussian(alloc, q)),
                         n * (1.0 - mmse_gaussian(alloc, q))])
    return rows


def cmd_asymptotics(cfg: RunConfig) -> int:
    coeffs = estimate_d2_at_zero(cfg.quadrature if cfg.abs_tol <= 1e-16 else None)
    rows = asymptotic_rows(cfg, coeffs.d2_at_zero)
    _emit_csv(rows, ASYMPTOTIC_HEADER, cfg.out)
    print(f"d2_at_zero = {fmt(coeffs.d2_at_zero)} (fit residual {fmt(coeffs.fit_residual)})",
          file=sys.stderr)
    if rows:
        last = rows[-1]
        print(f"n={last[0]}: relative gap cmmse {fmt(last[6])}, mmse {fmt(last[7])}",
              file=sys.stderr)
    return EXIT_OK


# -- verification suite -------------------------------------------------------

@dataclass
class Check:
    check_name: str
    value: float
    tolerance: float
    comparison: str = "<="

    @property
    def passed(self) -> bool:
        v, t = self.value, self.tolerance
        if not math.isfinite(v) and not (self.comparison == "<" and v == -math.inf):
            return False
        return {"<=": v <= t, ">=": v >= t, "<": v < t, ">": v > t}[self.comparison]

    def as_dict(self):
        return {"check_name": self.check_name, "value": float(self.value),
                "tolerance": float(self.tolerance), "comparison": self.comparison,
                "passed": bool(self.passed)}


_PROPERTY_Q = (0.1, 1.0, 10.0, 100.0, 1000.0)


def _density_checks():
    worst_norm, worst_moment = 0.0, 0.0
    for q in (0.0, 0.1, 1.0, 10.0, 100.0, 1000.0):
        radius = truncation_radius(q) + 40.0
        marks = sorted({0.0, *[m for m in (math.sqrt(q) - 12, math.sqrt(q), math.sqrt(q) + 12)
                               if 0 < m < radius], radius})
        for logpdf in (rician_log_pdf, rayleigh_log_pdf):
            with np.errstate(under="ignore"):
                mass = integrate(lambda r: np.exp(logpdf(r, q)), marks, 1e-12, 1e-13).value
                m2 = integrate(lambda r: r * r * np.exp(logpdf(r, q)), marks, 1e-10, 1e-13).value
            worst_norm = max(worst_norm, abs(mass - 1.0))
            worst_moment = max(worst_moment, abs(m2 - (2.0 + q)))
    return [Check("density_normalization", worst_norm, 1e-10),
            Check("moment_matching", worst_moment, 1e-8)]


def finite_difference_derivative(fn, q, spec, h=None):
    """Richardson-extrapolated central difference of a divergence function."""
    h = h if h is not None else 1e-4 * max(1.0, q)
    d1 = (fn(q + h, spec).value - fn(q - h, spec).value) / (2 * h)
    d2 = (fn(q + h / 2, spec).value - fn(q - h / 2, spec).value) / h
    return (4.0 * d2 - d1) / 3.0


def _divergence_checks(spec, div):
    gibbs = upper = dneg = 0.0
    for q in _PROPERTY_Q:
        d = div(q, spec)
        dp = divergence_derivative(q, spec)
        gibbs = max(gibbs, -(d.value + d.error_estimate))
        upper = max(upper, d.value - math.log1p(q / 2) - d.error_estimate)
        dneg = max(dneg, -(dp.value + dp.error_estimate))
    fd_ratio = 0.0
    for q in np.geomspace(1e-2, 1e3, 11):
        dp = divergence_derivative(q, spec).value
        fd = finite_difference_derivative(div, q, spec)
        fd_ratio = max(fd_ratio, abs(dp - fd) / max(1e-8, 1e-6 * abs(dp)))
    return [Check("gibbs_nonnegativity", gibbs, 0.0),
            Check("divergence_upper_bound", upper, 0.0),
            Check("derivative_nonnegativity", dneg, 0.0),
            Check("derivative_vs_difference", fd_ratio, 1.0)]


def _error_checks(spec, div):
    bridge_d = bridge_i = gauss = 0.0
    for n in (1, 4, 7):
        alloc = SpectrumAllocation.equal(n)
        for q in (0.5, 1.0, 10.0, 100.0):
            bridge_d = max(bridge_d, check_bridge(alloc, q, spec, divergence_fn=div))
            bridge_i = max(bridge_i, check_bridge(alloc, q, spec, form="integral",
                                                  divergence_fn=div))
            gauss = max(gauss, gaussian_bridge_residual(alloc, q))
    oracle = 0.0
    for n in (1, 7):
        alloc = SpectrumAllocation.equal(n)
        for q in (2.0, 100.0):
            est, _ = simkit.mmse_sum_oracle(alloc, q, method="quadrature", spec=spec)
            oracle = max(oracle, abs(mmse_tone_sum(alloc, q, spec).value - est))
    order = dominance = monotone = 0.0
    for n in (1, 2, 7, 40):
        alloc = SpectrumAllocation.equal(n)
        prev = None
        for q in (0.1, 1.0, 10.0, 100.0):
            c = cmmse_tone_sum(alloc, q, spec, divergence_fn=div)
            m = mmse_tone_sum(alloc, q, spec)
            slack = c.error_bound + m.error_bound
            order = max(order, m.value - c.value - slack, c.value - 1.0 - slack,
                        -m.value - slack)
            dominance = max(dominance, c.value - cmmse_gaussian(alloc, q) - c.error_bound,
                            m.value - mmse_gaussian(alloc, q) - m.error_bound)
            if prev is not None:
                monotone = max(monotone, c.value - prev[0], m.value - prev[1])
            prev = (c.value, m.value)
    return [Check("bridge_differential", bridge_d, 1e-6),
            Check("bridge_integral", bridge_i, 1e-6),
            Check("gaussian_bridge", gauss, 1e-8),
            Check("mmse_oracle_equivalence", oracle, 1e-6),
            Check("error_ordering", order, 0.0),
            Check("gaussian_dominance", dominance, 0.0),
            Check("snr_monotonicity", monotone, 0.0)]


def _asymptotic_checks(spec, div):
    coeffs = estimate_d2_at_zero()
    d2 = coeffs.d2_at_zero
    n = 1024
    alloc = SpectrumAllocation.equal(n)
    c = cmmse_tone_sum(alloc, 1.0, spec, divergence_fn=div).value
    m = mmse_tone_sum(alloc, 1.0, spec).value
    return [Check("d2_fit_residual", coeffs.fit_residual, 1e-4),
            Check("d2_magnitude", abs(d2), 1e-4),
            Check("asymptotic_cmmse_gap", _rel_gap(n * (1 - c), 0.25 + d2), 1e-2),
            Check("asymptotic_mmse_gap", _rel_gap(n * (1 - m), 0.5 + 2 * d2), 1e-2)]


def _figure_checks(spec, div):
    rows = [sweep_row(n, 100.0, spec, div) for n in range(1, 41)]
    peaks = argmax_set(rows)
    peak = peaks[0]
    tail = [r.d_n for r in rows if r.n >= peak + 2]
    rises = max([b - a for a, b in zip(tail, tail[1:])] + [-math.inf])
    gaps = max(abs(r.cmmse_gauss - r.cmmse_tone - 0.02 * r.d_n) - r.err_bound for r in rows)
    return [Check("figure1_argmax_distance_from_7", float(max(abs(p - 7) for p in peaks)), 1.0),
            Check("figure1_positive", float(min(r.d_n for r in rows)), 0.0, ">"),
            Check("figure1_tail_decreasing", rises, 0.0, "<"),
            Check("figure2_gap_identity", max(gaps, 0.0), 0.0)]


def _simulation_checks(cfg, spec, div):
    mc = cfg.monte_carlo
    pvals = [simkit.envelope_ks_pvalue(g, 100_000, cfg.seed) for g in (1.0, 10.0)]
    q = 2.0
    est, se = simkit.cmmse_causal_estimate(simkit.ToneGrid.default(1), q, mc)
    closed = cmmse_tone_sum(SpectrumAllocation.equal(1), q, spec, divergence_fn=div).value
    return [Check("envelope_ks_min_pvalue", min(pvals), 1e-3, ">="),
            Check("causal_monte_carlo", abs(est - closed), max(3 * se, 0.01 * closed))]


def run_checks(cfg: RunConfig) -> list:
    spec = cfg.quadrature
    div = _biased(divergence_single, cfg.inject_d_bias)
    checks = []
    checks += _density_checks()
    checks += _divergence_checks(spec, div)
    checks += _error_checks(spec, div)
    checks += _asymptotic_checks(spec, div)
    checks += _figure_checks(spec, div)
    checks += _simulation_checks(cfg, spec, div)
    return checks


def verify_report(cfg: RunConfig) -> dict:
    records = [c.as_dict() for c in run_checks(cfg)]
    return {"seed": cfg.seed, "paths": cfg.paths, "checks": records,
            "all_passed": all(r["passed"] for r in records)}


def cmd_verify(cfg: RunConfig) -> int:
    report = verify_report(cfg)
    text = json.dumps(report, indent=2) + "\n"
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    for rec in report["checks"]:
        status = "PASS" if rec["passed"] else "FAIL"
        print(f"{status} {rec['check_name']}: {rec['value']!r} "
              f"{rec['comparison']} {rec['tolerance']!r}", file=sys.stderr)
    return EXIT_OK if report["all_passed"] else EXIT_VERIFY


COMMANDS = {
    "d-sweep": cmd_divergence_sweep,
    "error-sweep": cmd_error_sweep,
    "asymptotics": cmd_asymptotics,
    "verify": cmd_verify,
}


def _parse_q(text):
    parts = [float(p) for p in text.split(",") if p.strip()]
    return parts[0] if len(parts) == 1 else parts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbmmse",
        description="Divergence and MMSE of normalized sums of narrowband waves in WGN.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--q", type=_parse_q, help="SNR value or comma-separated list")
        p.add_argument("--n-min", type=int)
        p.add_argument("--n-max", type=int)
        p.add_argument("--abs-tol", type=float)
        p.add_argument("--rel-tol", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--dt-steps", type=int)
        p.add_argument("--theta-grid", type=int)
        p.add_argument("--out")
        p.add_argument("--svg")
        p.add_argument("--config", help="JSON file with any of the options above")
        p.add_argument("--inject-d-bias", type=float, help=argparse.SUPPRESS)
    return parser


def resolve_config(args) -> RunConfig:
    """Defaults, then the JSON config file, then command-line flags."""
    values = dict(_COMMAND_DEFAULTS[args.command])
    known = {f.name for f in fields(RunConfig)}
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        for key, val in loaded.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = val
    for key in known:
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    return RunConfig(**values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    try:
        return COMMANDS[args.command](cfg)
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except IdentityViolation as exc:
        print(f"identity violation: {exc}", file=sys.stderr)
        return EXIT_IDENTITY
    except Exception as exc:  # noqa: BLE001 - any other failure is infrastructure
        if args.command != "verify":
            raise
        print(f"verification infrastructure failure: {exc!r}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
