"""At fixed SNR, many weak tones look Gaussian.

For large N the error deficits behave like N (1 - CMMSE) -> (1/4 + d2) q and
N (1 - MMSE) -> (1/2 + 2 d2) q, where d2 = D''(0). The exact series of D
starts at q^4, so d2 = 0 and the limits are the Gaussian ones.
"""
from fractions import Fraction

from nbmmse.divergence import estimate_d2_at_zero
from nbmmse.errors import SpectrumAllocation, asymptotic_errors, error_pair
from nbmmse.smallq import divergence_coefficients

coeffs = divergence_coefficients(8)
print("series of D(q):", " + ".join(f"({c}) q^{k}" for k, c in enumerate(coeffs) if c))
assert coeffs[2] == Fraction(0)

fit = estimate_d2_at_zero()
print(f"numerical d2 = {fit.d2_at_zero:.3g} (fit residual {fit.fit_residual:.2g})")

q = 1.0
print("\n    N   N(1-CMMSE)   N(1-MMSE)   predicted")
for k in range(1, 11):
    n = 2**k
    pair = error_pair(SpectrumAllocation.equal(n), q)
    pred = asymptotic_errors(q, n, fit)
    print(f"{n:5d} {n * (1 - pair.cmmse):11.6f} {n * (1 - pair.mmse):11.6f}   "
          f"{n * (1 - pred.cmmse):.4f} / {n * (1 - pred.mmse):.4f}")
