"""
A finite-time loss of square integrability
==========================================

For u_t = a u_xx + sigma u_x <> xi on the line, the second moment stays
finite only while sigma^2 t < 2a.  The moment is computed by quadrature in
Fourier space and checked against sampling over (xi, frequency).
"""

import numpy as np

from chaosprop.parabolic import example3_analysis, example3_monte_carlo

a, beta, sigma = 1.0, 0.0, 2.0
for t in (0.0, 0.25, 0.45, 0.49, 0.5, 0.51):
    r = example3_analysis(a, beta, sigma, t)
    print(f"t = {t:4.2f}  finite: {str(r['finite']):5s}  E|u|^2 = {r['norm']:.5g}  "
          f"(Gaussian profile: {r['profile_norm']:.5g})")
print("threshold t* = 2a / sigma^2 =", example3_analysis(a, beta, sigma, 0.0)["threshold"])

rng = np.random.default_rng(1)
mc, se = example3_monte_carlo(a, beta, sigma, 0.45, 100_000, rng)
quad = example3_analysis(a, beta, sigma, 0.45)["norm"]
print(f"t = 0.45: quadrature {quad:.5f}, Monte Carlo {mc:.5f} +- {se:.5f}")
