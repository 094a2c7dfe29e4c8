"""How far is one random-phase tone from a Gaussian signal of the same covariance?

The answer is a Kullback-Leibler divergence between the Rician envelope law
and the Rayleigh law with matching second moment. It grows like ln(q) at
high SNR and is tiny (fourth order) at low SNR.
"""
import math

import numpy as np

from nbmmse.divergence import divergence_derivative, divergence_single
from nbmmse.specfun import rayleigh_pdf, rician_pdf

# The two envelope laws at q = 10: same E r^2 = 12, different shapes.
q = 10.0
for r in np.linspace(0.5, 6.5, 7):
    print(f"r={r:4.1f}  rician={rician_pdf(r, q):.5f}  rayleigh={rayleigh_pdf(r, q):.5f}")

# D(q) and its slope over six decades. D stays under ln(1 + q/2).
print("\n        q            D(q)           D'(q)     ln(1+q/2)")
for q in np.geomspace(1e-2, 1e4, 7):
    d = divergence_single(q)
    dp = divergence_derivative(q)
    print(f"{q:9.3g}  {d.value:14.8g}  {dp.value:14.8g}  {math.log1p(q / 2):12.6g}")

# Low SNR: D(q) / q^4 tends to 1/128, so the q^2 term is absent.
for q in (1e-1, 1e-2, 1e-3):
    print(f"q={q:g}: D/q^4 = {divergence_single(q).value / q**4:.6f}  (1/128 = {1 / 128:.6f})")
