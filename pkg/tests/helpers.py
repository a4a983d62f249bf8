"""Random parameter generators shared by the test modules."""

import numpy as np

from condmix.model import MixtureParams
from condmix.polybasis import basis_size


def random_spd(rng, p, lo=0.2, hi=2.0):
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    return (q * rng.uniform(lo, hi, p)) @ q.T


def random_params(rng, K=2, d=1, p=1, weight_degree=1, mean_degree=1, weight_scale=3.0, mean_scale=3.0):
    wc = rng.uniform(-weight_scale, weight_scale, (K, basis_size(d, weight_degree)))
    wc[0] = 0.0
    mc = rng.uniform(-mean_scale, mean_scale, (K, p, basis_size(d, mean_degree)))
    covs = np.array([random_spd(rng, p) for _ in range(K)])
    return MixtureParams(d, weight_degree, mean_degree, wc, mc, covs)
