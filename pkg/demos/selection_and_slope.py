"""Choose the number of components by penalized likelihood and by the slope heuristic.

Run: python3 demos/selection_and_slope.py
"""

from condmix import InitConfig, sample, select, truth_density
from condmix.selection import model_dim

data = sample(truth_density("NP"), 2000, seed=3)
res = select(data, range(1, 9), init_cfg=InitConfig(seed=3, n_trials=20), kappa=1.0)

print(" K  dim   loglik     criterion")
for K in sorted(res.fits):
    print(f"{K:2d} {model_dim(res.specs[K]):4d} {res.fits[K].loglik:10.2f} {res.criterion[K]:10.2f}")
print("chosen K with kappa = 1:", res.chosen_K)

if res.kappa_hat is not None:
    print(f"slope heuristic: kappa_hat = {res.kappa_hat:.3f}, prescribed kappa = {2 * res.kappa_hat:.3f}")
    sh = select(data, range(1, 9), init_cfg=InitConfig(seed=3, n_trials=20), kappa="slope")
    print("chosen K with the prescribed kappa:", sh.chosen_K)
