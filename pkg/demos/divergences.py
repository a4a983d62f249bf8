"""Monte-Carlo divergences between conditional densities, checked against closed forms.

Run: python3 demos/divergences.py
"""

import numpy as np

from condmix import (
    gaussian_hellinger_exact,
    gaussian_kl_exact,
    hellinger_tensorized,
    jkl_hellinger_lower_constant,
    jkl_tensorized,
    kl_tensorized,
    make_params,
)

# two Gaussian regressions: y | x ~ N(x, 1) and N(0.5 - x, 2)
s = make_params([[0.0, 0.0]], [[0.0, 1.0]], [1.0])
t = make_params([[0.0, 0.0]], [[0.5, -1.0]], [2.0])
X = np.linspace(0, 1, 25)

kl = kl_tensorized(s, t, X, 4000, seed=0)
exact = np.mean([gaussian_kl_exact(x, 1.0, 0.5 - x, 2.0) for x in X])
print(f"KL        MC {kl.value:.4f} +/- {kl.mc_std_error:.4f}   exact {exact:.4f}")

hel = hellinger_tensorized(s, t, X, 4000, seed=0)
exact = np.mean([gaussian_hellinger_exact(x, 1.0, 0.5 - x, 2.0) for x in X])
print(f"Hellinger MC {hel.value:.4f} +/- {hel.mc_std_error:.4f}   exact {exact:.4f}")

rho = 0.5
jkl = jkl_tensorized(s, t, rho, X, 4000, seed=0)
print(f"JKL_0.5   MC {jkl.value:.4f}, upper bound ln(1/(1-rho))/rho = {np.log(1 / (1 - rho)) / rho:.4f}")
print(f"C_rho * Hellinger = {jkl_hellinger_lower_constant(rho) * hel.value:.4f} <= JKL")
