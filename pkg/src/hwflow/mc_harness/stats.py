"""Test statistics and order-independent summaries.

Sums go through ``math.fsum``, which is correctly rounded, so every summary is
exactly invariant under reordering or repartitioning of the sample.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps

from ..errors import DomainError

KS_C01 = 1.628
KS_C05 = 1.358


def fsum_mean(x):
    x = np.asarray(x, dtype=float).ravel()
    return math.fsum(x.tolist()) / x.size


def moments(x):
    """Mean, sample variance and their standard errors from one sample."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise DomainError("need at least two observations")
    m = fsum_mean(x)
    dev = x - m
    var = math.fsum((dev * dev).tolist()) / (n - 1)
    m4 = math.fsum((dev ** 4).tolist()) / n
    var_se = math.sqrt(max(m4 - var * var * (n - 3) / (n - 1), 0.0) / n)
    return {"n": n, "mean": m, "mean_se": math.sqrt(var / n), "var": var, "var_se": var_se,
            "sd": math.sqrt(var)}


def covariance(x, y):
    """Sample covariance with the standard error of the product-moment estimator."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = x.size
    if n != y.size or n < 2:
        raise DomainError("need paired samples of size >= 2")
    prod = (x - fsum_mean(x)) * (y - fsum_mean(y))
    c = math.fsum(prod.tolist()) / (n - 1)
    pm = math.fsum(prod.tolist()) / n
    spread = math.fsum(((prod - pm) ** 2).tolist()) / (n - 1)
    return c, math.sqrt(spread / n)


def covariance_matrix(X):
    """``(C, SE)`` for the columns of ``X``."""
    X = np.asarray(X, dtype=float)
    k = X.shape[1]
    C = np.empty((k, k))
    S = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            C[i, j], S[i, j] = covariance(X[:, i], X[:, j])
            C[j, i], S[j, i] = C[i, j], S[i, j]
    return C, S


def proportion(hits):
    hits = np.asarray(hits, dtype=bool).ravel()
    n = hits.size
    p = int(hits.sum()) / n
    return p, math.sqrt(p * (1 - p) / n)


@dataclass(frozen=True)
class KSResult:
    statistic: float
    n: int
    crit_01: float
    crit_05: float

    @property
    def pass_01(self):
        return self.statistic <= self.crit_01

    @property
    def pass_05(self):
        return self.statistic <= self.crit_05

    def to_dict(self):
        d = asdict(self)
        d.update(pass_01=self.pass_01, pass_05=self.pass_05)
        return d


def ks_statistic(sample, cdf):
    """One-sample Kolmogorov-Smirnov statistic ``sup |F_N - F|`` with asymptotic critical values."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if n < 20:
        raise DomainError("KS test needs at least 20 observations")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - F)
    d_minus = np.max(F - (i - 1) / n)
    root = math.sqrt(n)
    return KSResult(float(max(d_plus, d_minus)), n, KS_C01 / root, KS_C05 / root)


def ks_normal_fitted(sample):
    """KS distance to the normal law with the sample's own mean and variance."""
    m = moments(sample)
    mu, sd = m["mean"], m["sd"]
    if sd == 0:
        return ks_statistic(sample, lambda x: (x >= mu).astype(float))
    return ks_statistic(sample, lambda x: sps.norm.cdf(x, mu, sd))


def lattice_ks(support, probs, cdf):
    """KS distance between a lattice law and a continuous cdf (both one-sided limits)."""
    F = np.cumsum(probs)
    G = np.asarray(cdf(np.asarray(support, dtype=float)))
    below = np.concatenate([[0.0], F[:-1]])
    return float(max(np.max(np.abs(F - G)), np.max(np.abs(below - G))))


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    stderr: float
    intercept: float
    r2: float
    n_points: int

    def to_dict(self):
        return asdict(self)

    def within(self, lo, hi):
        return lo <= self.slope <= hi


def fit_scaling(scales, values):
    """Least-squares slope of ``log values`` against ``log scales``."""
    s = np.asarray(scales, dtype=float)
    v = np.asarray(values, dtype=float)
    if s.size < 3 or s.size != v.size:
        raise DomainError("need at least three (scale, value) pairs")
    if np.any(s <= 0) or np.any(v <= 0):
        raise DomainError("scales and values must be positive")
    if np.unique(s).size < 2:
        raise DomainError("scales must not all coincide")
    res = sps.linregress(np.log(s), np.log(v))
    return ScalingFit(float(res.slope), float(res.stderr), float(res.intercept),
                      float(res.rvalue ** 2), int(s.size))


def within_se(estimate, reference, se, k=3.0):
    return abs(estimate - reference) <= k * se
