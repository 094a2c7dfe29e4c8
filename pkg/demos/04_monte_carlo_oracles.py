"""Check the closed forms against simulation.

Non-causal: the envelope of the matched-filter output is Rician (KS test),
and averaging the posterior-mean error over it reproduces the MMSE.
Causal: a grid posterior over the phase, driven by simulated observations,
reproduces the CMMSE. Paths here are kept small so this runs in seconds;
the acceptance run uses 2e4 paths at dt = 1/8192.
"""
from nbmmse.errors import SpectrumAllocation, cmmse_tone_sum, mmse_tone_sum
from nbmmse.simkit import (MonteCarloSpec, ToneGrid, causal_filter_run, envelope_ks_pvalue,
                           mmse_tone_oracle, observe, sample_tone_path)

for gamma in (1.0, 10.0):
    print(f"gamma={gamma:g}: KS p-value vs Rician = {envelope_ks_pvalue(gamma, 100_000):.3f}")

mc = MonteCarloSpec(paths=200_000, seed=1)
for gamma in (0.5, 2.0, 20.0):
    est, se = mmse_tone_oracle(gamma, mc, method="montecarlo")
    exact = mmse_tone_sum(SpectrumAllocation.equal(1), gamma).value
    print(f"MMSE at {gamma:4g}: simulated {est:.5f} +- {se:.1e}, closed form {exact:.5f}")

# One observed path: the signal, and its noisy increments.
grid = ToneGrid.default(1)
small = MonteCarloSpec(paths=1000, dt=1 / 2048, theta_grid_size=256, seed=42)
path = sample_tone_path(grid, (1.0,), small, 0)
obs = observe(path, 2.0, small, 0)
print(f"\nsignal energy {path.energy:.6f}, {len(obs.increments)} observation increments")

run = causal_filter_run(grid, 2.0, small)
exact = cmmse_tone_sum(SpectrumAllocation.equal(1), 2.0).value
print(f"CMMSE at q=2: filter {run.estimate:.4f} +- {run.std_error:.4f}, closed form {exact:.4f}, "
      f"max weight drift {run.max_weight_deviation:.1e}")
