"""Brute-force forward sums over photon-number yields (test oracle)."""

import numpy as np
from scipy.stats import poisson

from mdiqkd.model import GainTable

NMAX = 60


def random_yields(rng, nmax=NMAX):
    """Yield and error-rate matrices with a plausible low-order structure."""
    n = np.arange(nmax + 1)
    eta_a, eta_b = 10 ** rng.uniform(-3, -0.5, 2)
    dark = 10 ** rng.uniform(-8, -4)
    ta = 1 - (1 - eta_a) ** n
    tb = 1 - (1 - eta_b) ** n
    Y = np.clip(rng.uniform(0.2, 1.0) * np.outer(ta, tb) + dark * rng.uniform(0.5, 2, (nmax + 1, nmax + 1)), 0, 1)
    e = rng.uniform(0.0, 0.5, (nmax + 1, nmax + 1))
    e[0, :] = e[:, 0] = 0.5
    return Y, e


def table_from_yields(Yz, ez, Yx, ex, mu_a, mu_b):
    n = np.arange(Yz.shape[0])
    pa = np.array([poisson.pmf(n, m) for m in mu_a])
    pb = np.array([poisson.pmf(n, m) for m in mu_b])
    Q = np.zeros((2, 3, 3))
    E = np.full((2, 3, 3), 0.5)
    for b, (Y, e) in enumerate(((Yz, ez), (Yx, ex))):
        for i in range(3):
            for j in range(3):
                w = np.outer(pa[i], pb[j])
                q = float(np.sum(w * Y))
                Q[b, i, j] = q
                if q > 0:
                    E[b, i, j] = float(np.sum(w * Y * e)) / q
    return GainTable(Q, E)


def random_mu(rng):
    s = rng.uniform(0.1, 0.6)
    d = s * rng.uniform(0.05, 0.5)
    v = d * rng.choice([0.0, rng.uniform(0, 0.1)])
    return (s, d, v)
