"""Dual smoothing process: height functions averaged against backward kernels.

``zeta_t(x) = sum_y K_{-t,0}(x, y) zeta_0(y)``; the walker starts at time
``-t`` and the initial profile is read at time 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError
from .env import Environment
from .kernels import backward_average, dual_distribution, propagate_kernel


@dataclass
class SmoothingState:
    time: int
    positions: np.ndarray
    zeta: np.ndarray
    init: dict = field(default_factory=dict)

    def value(self, x):
        j = (x - self.positions[0]) // 2
        if (x - self.positions[0]) % 2 or not 0 <= j < self.zeta.size or np.isnan(self.zeta[j]):
            raise DomainError(f"zeta_{self.time} not available at {x}")
        return float(self.zeta[j])

    def as_dict(self):
        return {int(x): float(v) for x, v in zip(self.positions, self.zeta) if not np.isnan(v)}


def initial_state(positions, values, description=None):
    pos = np.asarray(positions, dtype=np.int64)
    if pos.size and (np.any(np.diff(pos) != 2) or pos[0] % 2):
        raise DomainError("initial profile must be given on consecutive even positions")
    return SmoothingState(0, pos, np.asarray(values, dtype=float), description or {})


def evolve_smoothing(env: Environment, zeta0: SmoothingState, t):
    """``zeta_t`` on row ``-t`` of ``env`` by the exact backward recursion.

    ``zeta0`` must cover every time-0 position reachable from the requested
    row; positions whose cone leaves the supplied data come back as NaN.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    if zeta0.time != 0:
        raise DomainError("evolution starts from a time-0 state")
    if t == 0:
        return SmoothingState(0, zeta0.positions.copy(), zeta0.zeta.copy(), zeta0.init)
    x_min, x_max, t_min, t_max = env.window
    if t_min > -t or t_max < -1:
        raise DomainError("environment must cover times -t .. -1")
    lo_end = x_min + (x_min % 2)
    hi_end = x_max - (x_max % 2)
    grid = np.arange(lo_end, hi_end + 1, 2)
    vals = np.full(grid.size, np.nan)
    j0 = (zeta0.positions - lo_end) // 2
    ok = (j0 >= 0) & (j0 < grid.size)
    vals[j0[ok]] = zeta0.zeta[ok]
    rows = backward_average(env, 0, vals, -t)
    pos, g = rows[-t]
    return SmoothingState(t, pos, g, zeta0.init)


def height_function(atoms, positions):
    """Height ``zeta_0`` of a finite measure on odd sites, anchored at ``zeta_0(0) = 0``.

    ``zeta_0(x) = rho((0, x])`` for ``x >= 0`` and ``-rho((x, 0])`` for ``x < 0``.
    """
    pos = np.asarray(positions, dtype=np.int64)
    out = np.zeros(pos.size)
    for z, w in atoms.items():
        if z % 2 == 0:
            raise DomainError("atoms must sit on odd positions")
        out += w * ((pos > z) & (z > 0)).astype(float)
        out -= w * ((pos < z) & (z < 0)).astype(float)
    return out


def current_identity_check(env: Environment, rho0, x, y, t, method="forward"):
    """Both sides of the current identity for the measure ``rho0`` (odd atoms at time 0).

    ``lhs`` is the net mass crossing the segment from ``(x, 0)`` to ``(y, -t)``:
    atoms right of ``x`` whose dual walk to time ``-t`` ends left of ``y``,
    minus atoms left of ``x`` ending right of ``y``. The dual probabilities come
    from the forward kernel from ``(y, -t)`` (``method="forward"``) or from the
    dual walk itself (``method="dual"``). ``rhs = zeta_t(y) - zeta_0(x)``.
    Returns ``(lhs, rhs, gap)``.
    """
    if x % 2 or (y + t) % 2:
        raise DomainError("x must be even and (y, -t) an even site")
    atoms = {int(z): float(w) for z, w in dict(rho0).items() if w != 0}
    if t == 0:
        lhs = sum(w for z, w in atoms.items() if x < z < y) - sum(w for z, w in atoms.items() if y < z < x)
        lhs = float(lhs)
    elif method == "forward":
        ks = propagate_kernel(env, (y, -t), 0)
        sup, pr = ks.support, ks.probs
        lhs = 0.0
        for z, w in atoms.items():
            if z > x:
                lhs += w * pr[sup > z].sum()
            elif z < x:
                lhs -= w * pr[sup < z].sum()
    elif method == "dual":
        lhs = 0.0
        for z, w in atoms.items():
            pos, pr = dual_distribution(env, z, 0, -t)
            if z > x:
                lhs += w * pr[pos < y].sum()
            elif z < x:
                lhs -= w * pr[pos > y].sum()
    else:
        raise DomainError(f"unknown method {method!r}")
    lo = min([x, y - t] + [z - 1 for z in atoms])
    hi = max([x, y + t] + [z + 1 for z in atoms])
    lo -= lo % 2
    hi += hi % 2
    grid = np.arange(lo, hi + 1, 2)
    z0 = initial_state(grid, height_function(atoms, grid), {"atoms": atoms})
    if t == 0:
        rhs = z0.value(y) - z0.value(x)
    else:
        rhs = evolve_smoothing(env, z0, t).value(y) - z0.value(x)
    return float(lhs), float(rhs), abs(float(lhs) - float(rhs))
