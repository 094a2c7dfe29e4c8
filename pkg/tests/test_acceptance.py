"""One test per acceptance criterion, each printing a PASS/FAIL line."""

import io
import json
import math
import time

import mpmath as mp
import pytest

import conftest
from nbmmse import cli
from nbmmse.divergence import divergence_single, estimate_d2_at_zero
from nbmmse.errors import SpectrumAllocation, check_bridge, cmmse_tone_sum, mmse_tone_sum
from nbmmse.simkit import MonteCarloSpec, ToneGrid, cmmse_causal_estimate, mmse_sum_oracle
from nbmmse.smallq import divergence_coefficients


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def sweep(command, capsys, *extra):
    start = time.perf_counter()
    code = cli.main([command, "--q", "100", "--n-min", "1", "--n-max", "40", *extra])
    elapsed = time.perf_counter() - start
    out, _ = capsys.readouterr()
    rows = list(cli.csv.DictReader(io.StringIO(out))) if code == 0 else []
    return code, elapsed, rows


def test_criterion_1_divergence_sweep(capsys):
    code, elapsed, rows = sweep("d-sweep", capsys)
    d = [float(r["d_n"]) for r in rows]
    peak = max(range(len(d)), key=d.__getitem__) + 1
    tail = d[peak + 1:]
    ok = (code == 0 and elapsed < 60 and len(d) == 40 and min(d) > 0 and peak in (6, 7, 8)
          and all(b < a for a, b in zip(tail, tail[1:])))
    report(1, ok, f"argmax N={peak}, min D_N={min(d):.3g}, {elapsed:.1f}s")


def test_criterion_2_error_sweep(capsys):
    code, _, rows = sweep("error-sweep", capsys)
    mp.mp.dps = 40
    gauss_err = ident_err = 0.0
    for r in rows:
        n = int(r["n"])
        ref = 2 * n / mp.mpf(100) * mp.log(1 + mp.mpf(50) / n)
        gauss_err = max(gauss_err, abs(float(r["cmmse_gauss"]) - float(ref)))
        gap = float(r["cmmse_gauss"]) - float(r["cmmse_tone"])
        excess = abs(gap - 0.02 * float(r["d_n"]))
        ident_err = max(ident_err, excess)
        assert excess <= min(float(r["err_bound"]) + 1e-15, 1e-8)
    ok = code == 0 and len(rows) == 40 and gauss_err <= 1e-12 and ident_err <= 1e-8
    report(2, ok, f"gauss max err {gauss_err:.2g}, identity max err {ident_err:.2g}")


def test_criterion_3_noncausal_oracle():
    worst = 0.0
    for n in (1, 7):
        alloc = SpectrumAllocation.equal(n)
        for q in (2.0, 100.0):
            oracle, _ = mmse_sum_oracle(alloc, q, method="quadrature")
            worst = max(worst, abs(mmse_tone_sum(alloc, q).value - oracle))
    report(3, worst <= 1e-6, f"max |mmse - oracle| = {worst:.2g}")


def test_criterion_4_causal_monte_carlo():
    mc = MonteCarloSpec(paths=20000, dt=1 / 8192, theta_grid_size=512, seed=42)
    start = time.perf_counter()
    est, se = cmmse_causal_estimate(ToneGrid.default(1), 2.0, mc)
    elapsed = time.perf_counter() - start
    closed = cmmse_tone_sum(SpectrumAllocation.equal(1), 2.0).value
    expect = (2 / 2.0) * (math.log(2.0) - divergence_single(2.0).value)
    assert closed == pytest.approx(expect, rel=1e-14)
    tol = max(3 * se, 0.01 * closed)
    ok = abs(est - closed) <= tol and elapsed < 600
    report(4, ok, f"estimate {est:.6f} +- {se:.2g} vs {closed:.6f} (tol {tol:.2g}), "
                  f"{elapsed:.0f}s")


def test_criterion_5_bridges():
    worst = {"differential": 0.0, "integral": 0.0}
    for n in (1, 4, 7):
        alloc = SpectrumAllocation.equal(n)
        for q in (0.5, 1.0, 10.0, 100.0):
            for form in worst:
                worst[form] = max(worst[form], check_bridge(alloc, q, form=form))
    ok = max(worst.values()) < 1e-6
    report(5, ok, f"differential {worst['differential']:.2g}, integral {worst['integral']:.2g}")


def test_criterion_6_asymptotics():
    coeffs = estimate_d2_at_zero()
    symbolic_d2 = 2 * divergence_coefficients(12)[2]  # D = (d2/2) q^2 + ...
    assert symbolic_d2 == 0
    rows = cli.asymptotic_rows(cli.RunConfig(q=1.0, n_min=2, n_max=1024), coeffs.d2_at_zero)
    last = rows[-1]
    assert [r[0] for r in rows] == [2**k for k in range(1, 11)]
    gaps_c = [r[6] for r in rows]
    ok = (coeffs.fit_residual < 1e-4 and abs(coeffs.d2_at_zero - float(symbolic_d2)) < 1e-4
          and last[6] < 1e-2 and last[7] < 1e-2
          and all(b < a for a, b in zip(gaps_c, gaps_c[1:])))
    report(6, ok, f"d2={coeffs.d2_at_zero:.2g} (residual {coeffs.fit_residual:.2g}), "
                  f"N=1024 gaps {last[6]:.2g}/{last[7]:.2g}")


def test_criterion_7_verify(tmp_path):
    paths = []
    codes = []
    for k in range(2):
        out = tmp_path / f"report{k}.json"
        codes.append(cli.main(["verify", "--paths", "2000", "--seed", "42", "--out", str(out)]))
        paths.append(out)
    first, second = (p.read_bytes() for p in paths)
    report_data = json.loads(first)
    failed = [c["check_name"] for c in report_data["checks"] if not c["passed"]]
    ok = codes == [0, 0] and first == second and report_data["all_passed"]
    report(7, ok, f"{len(report_data['checks'])} checks, failed {failed or 'none'}, "
                  f"reports identical: {first == second}")
