"""Penalty constants, the complexity term and a randomized bracket check.

Run: python3 demos/theory_constants.py
"""

from condmix import ModelSpec, entropy_constants, sigma_m_bound, theoretical_penalty
from condmix.selection import model_dim
from condmix.theory import run_bracket_trials

spec = ModelSpec(K=2)
c = entropy_constants(spec, K_max=20)
for name, value in c.to_dict().items():
    print(f"{name:>12}: {value:.6g}")

n = 2000
sb = sigma_m_bound(model_dim(spec), c.frakC, n)
print(f"n sigma_m^2 = {sb.n_sigma_sq:.3f} <= {sb.bound:.3f}")
print(f"theoretical penalty at n={n}: {theoretical_penalty(spec, n, c):.2f} (log-likelihood units)")

ok = run_bracket_trials(50, p=1, seed=0)
bad = run_bracket_trials(20, p=1, seed=1, mean_gap_factor=10.0)
print(f"admissible instances with a violation: {ok.violations}/{ok.trials}")
print(f"negative controls with a violation:    {bad.violations}/{bad.trials}")
