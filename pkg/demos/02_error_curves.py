"""Causal and non-causal errors when energy q = 100 is split over N tones.

Each extra tone adds a divergence penalty, but each tone also gets less
SNR. The total divergence D_N = N D(100/N) peaks near N = 7, and the
tone-sum errors approach their Gaussian twins from below as N grows.
"""
from nbmmse.divergence import divergence_sum
from nbmmse.errors import (SpectrumAllocation, cmmse_gaussian, cmmse_tone_sum,
                           mmse_gaussian, mmse_tone_sum)

q = 100.0
print("  N      D_N    CMMSE tone  CMMSE gauss   MMSE tone  MMSE gauss")
for n in (1, 2, 4, 7, 10, 20, 40):
    alloc = SpectrumAllocation.equal(n)
    print(f"{n:3d} {divergence_sum(alloc, q).value:8.4f} "
          f"{cmmse_tone_sum(alloc, q).value:11.5f} {cmmse_gaussian(alloc, q):12.5f} "
          f"{mmse_tone_sum(alloc, q).value:11.5f} {mmse_gaussian(alloc, q):11.5f}")

# Unequal splits work the same way; only sum(alpha^2) = 1 is required.
alloc = SpectrumAllocation.from_energies([0.7, 0.2, 0.1])
print("\nenergies 0.7/0.2/0.1:",
      f"CMMSE {cmmse_tone_sum(alloc, q).value:.5f}, MMSE {mmse_tone_sum(alloc, q).value:.5f}")

# The same table from the command line, written as CSV plus an SVG plot:
#   nbmmse error-sweep --q 100 --n-max 40 --out errors.csv --svg errors.svg
