"""Rescaled quenched means ``a_n`` and currents ``z_n`` of the lattice model.

For a point ``(t, r)`` at scale ``n`` the walker starts at time ``-N`` with
``N = round(n t)`` and at the lattice point nearest to ``r sqrt(n) - beta N``
(``beta = 2 E[omega] - 1``) of the parity forced by ``N``. Ties round toward
``-inf``. Replicate ``i`` draws its environment from stream ``(seed, "env", i)``
and, for currents, its initial noise from ``(seed, "noise", i)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..analytics import InitialProfile, SpaceTimePoint
from ..errors import DomainError
from ..seeding import derive_rng
from .env import EnvDistribution, RowLayout, parity_round, round_half_down, stack_values
from .kernels import forward_step


@dataclass
class LatticePoint:
    point: SpaceTimePoint
    N: int
    start: int  # walker start position at time -N
    anchor: int  # time-0 reading position of the initial profile (currents)
    center: float  # averaged-law mean of the endpoint

    def to_dict(self):
        return {"t": self.point.t, "r": self.point.r, "N": self.N, "start": self.start,
                "anchor": self.anchor, "center": self.center}


def lattice_point(p: SpaceTimePoint, n, beta, x0=0.0):
    N = round_half_down(n * p.t)
    if N < 0:
        raise DomainError("time must be nonnegative")
    base = n * x0 + p.r * math.sqrt(n)
    start = parity_round(base - beta * N, N % 2)
    anchor = parity_round(base, 0)
    return LatticePoint(p, N, start, anchor, start + beta * N)


@dataclass
class FluctuationSample:
    n: int
    points: list
    lattice: list
    values: np.ndarray  # (replicates, len(points))
    replicates: np.ndarray
    seed: int
    kind: str
    meta: dict = field(default_factory=dict)

    def rows(self):
        for i, rep in enumerate(self.replicates):
            for j in range(len(self.points)):
                yield int(rep), j, float(self.values[i, j])


def _points(points):
    return [p if isinstance(p, SpaceTimePoint) else SpaceTimePoint(*p) for p in points]


def _layout(lat):
    N_max = max(lp.N for lp in lat)
    if N_max == 0:
        return None
    apexes = [(lp.start, -lp.N) for lp in lat if lp.N > 0]
    return RowLayout.cones(apexes, 0)


def final_distributions(values, layout, lat):
    """Quenched endpoint laws at time 0 for each lattice point, batched over environments."""
    out = []
    B = values.shape[0]
    for lp in lat:
        p = np.ones((B, 1))
        for k in range(lp.N):
            u = -lp.N + k
            om = values[:, layout.slice(u, lp.start - k, lp.start + k)]
            p = forward_step(p, om)
        out.append(p)
    return out


def _chunks(replicates, chunk):
    for first in range(0, replicates, chunk):
        yield np.arange(first, min(first + chunk, replicates))


def quenched_mean_fluctuations(dist: EnvDistribution, n, points, replicates, seed=0, chunk=64,
                               first=0):
    """``a_n(t, r) = n^{-1/4} (E^omega[X_0] - start - beta N)`` per replicate environment."""
    pts = _points(points)
    beta = dist.drift
    lat = [lattice_point(p, n, beta) for p in pts]
    layout = _layout(lat)
    vals = np.zeros((replicates, len(pts)))
    scale = n ** -0.25
    for reps in _chunks(replicates, chunk):
        reps = reps + first
        if layout is None:
            continue
        env = stack_values(layout, dist, seed, [("env", int(r)) for r in reps])
        for j, (lp, p) in enumerate(zip(lat, final_distributions(env, layout, lat))):
            offs = -lp.N + 2.0 * np.arange(lp.N + 1)  # endpoint minus start
            vals[reps - first, j] = scale * (p @ offs - beta * lp.N)
    return FluctuationSample(n, pts, lat, vals, np.arange(first, first + replicates), seed, "a_n",
                             {"dist": dist.to_dict()})


def two_sided_walk(rng, lo, hi):
    """Two-sided +-1 walk ``W`` at the even positions ``lo .. hi`` (``lo <= 0 <= hi``), ``W(0) = 0``.

    Returns values on ``lo, lo + 2, ..., hi``; between even positions the walk
    takes two unit steps.
    """
    if lo > 0 or hi < 0 or lo % 2 or hi % 2:
        raise DomainError("noise grid must be even and contain 0")
    right = rng.choice(np.array([-1.0, 1.0]), size=hi) if hi > 0 else np.zeros(0)
    left = rng.choice(np.array([-1.0, 1.0]), size=-lo) if lo < 0 else np.zeros(0)
    wr = np.concatenate([[0.0], np.cumsum(right)])[::2]
    wl = np.concatenate([[0.0], np.cumsum(left)])[::2]
    return np.concatenate([wl[:0:-1], wr])


def _profile_grid(lat):
    lo = min(min(lp.start - lp.N, lp.anchor) for lp in lat)
    hi = max(max(lp.start + lp.N, lp.anchor) for lp in lat)
    lo = min(lo - lo % 2, 0)
    hi = max(hi + hi % 2, 0)
    return lo, hi


def current_fluctuations(dist: EnvDistribution, profile: InitialProfile, n, points, replicates,
                         seed=0, include_profile=True, include_noise=True, chunk=64, first=0):
    """``z_n(t, r) = n^{-1/4} (zeta_N(start) - zeta_0(anchor))`` per replicate.

    ``zeta_0 = f^(n) + W`` on the even positions with ``f^(n)(x) = n f(x / n)``
    and ``W`` an independent two-sided +-1 walk; either part can be switched off.
    """
    pts = _points(points)
    beta = dist.drift
    lat = [lattice_point(p, n, beta, profile.x0) for p in pts]
    layout = _layout(lat)
    lo, hi = _profile_grid(lat)
    grid = np.arange(lo, hi + 1, 2)
    f_vals = profile.scaled(n)(grid.astype(float)) if include_profile else np.zeros(grid.size)
    vals = np.zeros((replicates, len(pts)))
    scale = n ** -0.25
    for reps in _chunks(replicates, chunk):
        reps = reps + first
        B = reps.size
        zeta = np.broadcast_to(f_vals, (B, grid.size)).copy()
        if include_noise:
            for i, r in enumerate(reps):
                zeta[i] += two_sided_walk(derive_rng(seed, "noise", int(r)), lo, hi)
        if layout is not None:
            env = stack_values(layout, dist, seed, [("env", int(r)) for r in reps])
            dists = final_distributions(env, layout, lat)
        else:
            dists = [np.ones((B, 1)) for _ in lat]
        for j, (lp, p) in enumerate(zip(lat, dists)):
            j0 = (lp.start - lp.N - lo) // 2
            evolved = np.einsum("bk,bk->b", p, zeta[:, j0: j0 + lp.N + 1])
            vals[reps - first, j] = scale * (evolved - zeta[:, (lp.anchor - lo) // 2])
    return FluctuationSample(n, pts, lat, vals, np.arange(first, first + replicates), seed, "z_n",
                             {"dist": dist.to_dict(), "profile": profile.name,
                              "include_profile": include_profile, "include_noise": include_noise})


# ----------------------------------------------------------------------------
# exact same-model oracle for current covariances


def _pair_law(dist: EnvDistribution, N, s1, s2):
    """Averaged joint law of two walkers after ``N`` steps from ``(s1, s2)``.

    Returns ``(positions, P)`` with ``P[i, j] = P(X1 = pos[i], X2 = pos[j])``.
    """
    lo = min(s1, s2)
    size = abs(s1 - s2) // 2 + 1
    P = np.zeros((size, size))
    P[(s1 - lo) // 2, (s2 - lo) // 2] = 1.0
    mu = dist.mean
    m2 = dist.second_moment
    split = dist.split_prob
    pos0 = lo  # after k steps index j sits at pos0 - k + 2 j
    for k in range(N):
        Q = np.zeros((size + 1, size + 1))
        R, L = mu, 1 - mu
        # independent moves everywhere
        Q[1:, 1:] += P * R * R
        Q[:-1, :-1] += P * L * L
        Q[1:, :-1] += P * R * L
        Q[:-1, 1:] += P * L * R
        diag = np.diag(P).copy()
        if diag.any():
            idx = np.arange(size)
            Q[idx + 1, idx + 1] += diag * (m2 - R * R)
            Q[idx, idx] += diag * ((1 - 2 * mu + m2) - L * L)
            Q[idx + 1, idx] += diag * (split - R * L)
            Q[idx, idx + 1] += diag * (split - L * R)
        P = Q
        size += 1
        pos0 -= 1
    return pos0 + 2 * np.arange(size), P


def _noise_cov(a, b):
    a = np.asarray(a)[:, None]
    b = np.asarray(b)[None, :]
    same = (a * b) > 0
    return np.where(same, np.minimum(np.abs(a), np.abs(b)), 0).astype(float)


def exact_current_covariance(dist: EnvDistribution, profile: InitialProfile, n, p, q,
                             include_profile=True, include_noise=True):
    """Exact ``Cov(z_n(p), z_n(q))`` for points at the same time, from the averaged pair law.

    Splits into the environment part ``Cov(E^w f(X1), E^w f(X2))`` and the
    noise part built from ``E[W(a) W(b)] = min(|a|, |b|) 1{ab > 0}``.
    """
    p, q = _points([p, q])
    if p.t != q.t:
        raise DomainError("the oracle handles points at a common time")
    beta = dist.drift
    lp = lattice_point(p, n, beta, profile.x0)
    lq = lattice_point(q, n, beta, profile.x0)
    pos, P = _pair_law(dist, lp.N, lp.start, lq.start)
    m1 = P.sum(axis=1)
    m2 = P.sum(axis=0)
    total = 0.0
    parts = {}
    if include_profile:
        f = profile.scaled(n)(pos.astype(float))
        part = float(f @ P @ f - (m1 @ f) * (m2 @ f))
        parts["profile"] = part
        total += part
    if include_noise:
        C = _noise_cov(pos, pos)
        cross1 = _noise_cov(pos, [lq.anchor])[:, 0]
        cross2 = _noise_cov(pos, [lp.anchor])[:, 0]
        part = float(np.sum(P * C) - m1 @ cross1 - m2 @ cross2
                     + _noise_cov([lp.anchor], [lq.anchor])[0, 0])
        parts["noise"] = part
        total += part
    scale = n ** -0.5
    return scale * total, {k: scale * v for k, v in parts.items()}
