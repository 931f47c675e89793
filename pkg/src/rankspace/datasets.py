"""Synthetic tables for tests and desk-scale benchmarks.

All generators return an (n, m) int64 array of raw values; pass it through
``Table.from_values`` to get dense dictionary codes.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erf


def correlated(n: int, m: int = 4, domain: int = 1024, rho: float = 0.8, seed: int = 0) -> np.ndarray:
    """Gaussian copula with pairwise correlation ``rho``, quantised to ``domain`` levels."""
    rng = np.random.default_rng(seed)
    cov = np.full((m, m), rho) + np.eye(m) * (1 - rho)
    z = rng.multivariate_normal(np.zeros(m), cov, size=n)
    u = 0.5 * (1 + erf(z / np.sqrt(2)))
    return np.minimum((u * domain).astype(np.int64), domain - 1)


def clustered(n: int, m: int = 3, domain: int = 4096, clusters: int = 20,
              spread: float = 0.01, seed: int = 0) -> np.ndarray:
    """Gaussian blobs with random centres; most of the space is empty."""
    rng = np.random.default_rng(seed)
    centres = rng.uniform(0.1, 0.9, size=(clusters, m))
    weights = rng.dirichlet(np.ones(clusters))
    which = rng.choice(clusters, size=n, p=weights)
    scales = spread * rng.uniform(0.3, 3.0, size=(clusters, m))
    pts = centres[which] + rng.normal(size=(n, m)) * scales[which]
    return np.clip((pts * domain).astype(np.int64), 0, domain - 1)


def zipfian(n: int, m: int = 3, domain: int = 1024, a: float = 1.3, seed: int = 0) -> np.ndarray:
    """Independent Zipf-distributed columns with randomly permuted value order."""
    rng = np.random.default_rng(seed)
    cols = []
    for _ in range(m):
        ranks = np.minimum(rng.zipf(a, size=n) - 1, domain - 1)
        cols.append(rng.permutation(domain)[ranks])
    return np.stack(cols, axis=1).astype(np.int64)


def diagonal(n: int, domain: int = 1024, seed: int = 0) -> np.ndarray:
    """Two columns with x == y: sparse in 2-D, the worst case for an unfiltered box."""
    rng = np.random.default_rng(seed)
    x = rng.integers(0, domain, size=n)
    return np.stack([x, x], axis=1).astype(np.int64)


def uniform(n: int, m: int = 2, domain: int = 256, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, domain, size=(n, m)).astype(np.int64)



GENERATORS = {
    "correlated": correlated,
    "clustered": clustered,
    "zipfian": zipfian,
    "diagonal": diagonal,
    "uniform": uniform,
}
