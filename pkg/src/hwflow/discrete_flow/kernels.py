"""Quenched kernels of the lattice walk by exact dynamic programming.

A walker at the even site ``(x, t)`` moves to ``(x + 1, t + 1)`` with
probability ``omega(x, t)`` and to ``(x - 1, t + 1)`` otherwise. All
propagators accept environment values with leading batch dimensions, so many
independent environments sharing one layout advance together.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from .env import EnvDistribution, Environment, RowLayout


@dataclass
class KernelSlice:
    """``K_{s,t}(x, .)`` on the positions ``x - (t - s), ..., x + (t - s)`` (step 2)."""

    origin: tuple
    horizon: int
    probs: np.ndarray

    @property
    def support(self):
        x, s = self.origin
        k = self.horizon - s
        return x - k + 2 * np.arange(k + 1)

    def as_dict(self):
        return {int(y): float(p) for y, p in zip(self.support, self.probs) if p != 0.0}

    def cdf_above(self, y):
        """``K(x, [y, inf))``."""
        return float(self.probs[self.support >= y].sum())


def forward_step(p, om):
    """One step of the forward DP: ``p`` on ``k + 1`` sites to ``k + 2`` sites."""
    shape = p.shape[:-1] + (p.shape[-1] + 1,)
    out = np.zeros(shape)
    right = p * om
    out[..., :-1] = p - right
    out[..., 1:] += right
    return out


def forward_distribution(values, layout: RowLayout, origin, t):
    """Quenched law of ``X_t`` from ``origin = (x, s)`` for (a stack of) environment values."""
    x, s = int(origin[0]), int(origin[1])
    if (x + s) % 2:
        raise DomainError(f"origin {(x, s)} is not an even site")
    if t < s:
        raise DomainError("horizon precedes origin")
    if s < layout.t_min or (t > s and t - 1 > layout.t_max):
        raise DomainError("time range leaves the window")
    values = np.asarray(values)
    p = np.ones(values.shape[:-1] + (1,))
    for k, u in enumerate(range(s, t)):
        om = values[..., layout.slice(u, x - k, x + k)]
        p = forward_step(p, om)
    return p


def propagate_kernel(env: Environment, origin, t):
    """Exact ``K_{s,t}(x, .)`` from ``origin = (x, s)``."""
    p = forward_distribution(env.values, env.layout, origin, t)
    return KernelSlice((int(origin[0]), int(origin[1])), int(t), p)


def compose(first: KernelSlice, env: Environment, t):
    """``sum_y K_{s,u}(x, y) K_{u,t}(y, .)`` on the support of ``K_{s,t}(x, .)``."""
    x, s = first.origin
    u = first.horizon
    out = np.zeros(t - s + 1)
    for y, py in zip(first.support, first.probs):
        inner = propagate_kernel(env, (int(y), u), t).probs
        j = (int(y) - (t - u) - (x - (t - s))) // 2
        out[j: j + inner.size] += py * inner
    return KernelSlice((x, s), t, out)


def chapman_kolmogorov_gap(env: Environment, origin, u, t):
    direct = propagate_kernel(env, origin, t)
    via = compose(propagate_kernel(env, origin, u), env, t)
    return float(np.max(np.abs(direct.probs - via.probs)))


def backward_average(env: Environment, t_end, values_end, t_start):
    """Rows of ``g_s(x) = omega g_{s+1}(x + 1) + (1 - omega) g_{s+1}(x - 1)`` for ``s = t_end .. t_start``.

    ``values_end`` gives ``g`` at the row-``t_end`` positions ``lo, lo + 2, ...``
    where ``lo`` is the first even-parity position at ``t_end`` inside the
    window's x-range. Entries whose cone leaves the window are NaN.
    Returns ``{s: (positions, g_s)}``.
    """
    lay = env.layout
    x_min, x_max, _, _ = env.window
    lo_end = x_min + (x_min + t_end) % 2
    g = np.asarray(values_end, dtype=float)
    pos = lo_end + 2 * np.arange(g.size)
    rows = {t_end: (pos, g)}
    for s in range(t_end - 1, t_start - 1, -1):
        xs = lay.positions(s)
        om = env.values[lay.slice(s, int(xs[0]), int(xs[-1]))] if xs.size else np.zeros(0)
        nxt_pos, nxt = rows[s + 1]
        base = nxt_pos[0] if nxt_pos.size else 0
        jr = (xs + 1 - base) // 2
        jl = (xs - 1 - base) // 2
        ok = (jl >= 0) & (jr < nxt.size)
        gs = np.full(xs.size, np.nan)
        gs[ok] = om[ok] * nxt[jr[ok]] + (1 - om[ok]) * nxt[jl[ok]]
        rows[s] = (xs, gs)
    return rows


@dataclass
class QuenchedMeanField:
    """``m_{s,t}(x) = E^omega[X_t | X_s = x]`` for a fixed end time ``t``."""

    t_end: int
    rows: dict

    def value(self, x, s):
        pos, g = self.rows[s]
        j = (x - pos[0]) // 2 if pos.size else -1
        if (x + s) % 2 or not 0 <= j < g.size or np.isnan(g[j]):
            raise DomainError(f"mean from {(x, s)} to {self.t_end} not available in window")
        return float(g[j])


def quenched_mean_field(env: Environment, t_end, t_start=None):
    x_min, x_max, t_min, t_max = env.window
    t_start = t_min if t_start is None else t_start
    if not t_min <= t_start <= t_end <= t_max + 1:
        raise DomainError("requested time range leaves the window")
    lo_end = x_min + (x_min + t_end) % 2
    hi_end = x_max - (x_max + t_end) % 2
    pos = np.arange(lo_end, hi_end + 1, 2)
    return QuenchedMeanField(t_end, backward_average(env, t_end, pos.astype(float), t_start))


def pair_collision_probability(dist: EnvDistribution, n):
    """``p_k = P(X1_k = X2_k)``, ``k = 0 .. n - 1``, for two walkers from one site.

    Dynamic programming on the half-difference ``d = (X1 - X2) / 2`` under the
    environment-averaged law: apart, ``d`` moves by +-1 with probability
    ``mu (1 - mu)`` each; together, by +-1 with probability ``E[omega (1 - omega)]``.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    mu = dist.mean
    q_apart = mu * (1 - mu)
    q_meet = dist.split_prob
    # fold by symmetry: state j = |d|, j = 0 .. n
    f = np.zeros(n + 1)
    f[0] = 1.0
    out = np.empty(n)
    for k in range(n):
        out[k] = f[0]
        g = np.zeros_like(f)
        # from 0: to |d| = 1 with prob 2 q_meet
        g[0] += f[0] * (1 - 2 * q_meet)
        g[1] += f[0] * 2 * q_meet
        a = f[1:-1]
        g[1:-1] += a * (1 - 2 * q_apart)
        g[2:] += a * q_apart
        g[:-2] += a * q_apart
        f = g
    return out


def dual_step_probability_left(env: Environment, x, t):
    """The dual walker at the odd site ``(x, t + 1)`` steps to ``(x - 1, t)`` with probability ``omega(x, t)``."""
    return env.omega_at(x, t)


def dual_distribution(env: Environment, z, t_from, t_to):
    """Law of the dual walk from the odd site ``(z, t_from)`` back to time ``t_to``.

    Returns ``(positions, probs)`` at time ``t_to``.
    """
    if (z + t_from) % 2 == 0:
        raise DomainError("dual walks start from odd sites")
    if t_to > t_from:
        raise DomainError("dual walks run backward in time")
    pos = np.array([z])
    p = np.ones(1)
    for u in range(t_from - 1, t_to - 1, -1):
        om = env.values[env.layout.slice(u, int(pos[0]), int(pos[-1]))]
        nxt = np.zeros(p.size + 1)
        # to the left (index shift 0) w.p. omega, to the right otherwise
        nxt[:-1] += p * om
        nxt[1:] += p * (1 - om)
        p = nxt
        pos = np.arange(pos[0] - 1, pos[-1] + 2, 2)
    return pos, p


def dual_cdf_from_forward(env: Environment, y, s, z, t):
    """``Khat_{t,s}(z, (-inf, y))`` defined through the forward kernel: ``K_{s,t}(y, (z, inf))``."""
    ks = propagate_kernel(env, (y, s), t)
    return float(ks.probs[ks.support > z].sum())
