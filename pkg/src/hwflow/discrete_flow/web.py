"""Sampled discrete web (one arrow per even site) and its dual on the odd sites."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..seeding import as_record, derive_rng
from .env import Environment, RowLayout


@dataclass
class ArrowConfig:
    """``right[i]`` is True when the arrow at flat site ``i`` of ``layout`` points right."""

    layout: RowLayout
    right: np.ndarray

    def arrow(self, x, t):
        r = self.layout.row(t)
        if not self.layout.contains(x, t):
            raise DomainError(f"{(x, t)} is not a site of the web")
        return bool(self.right[self.layout.offset[r] + (x - self.layout.lo[r]) // 2])

    def path(self, x, t, t_end):
        """Positions of the forward path from ``(x, t)`` until ``t_end`` (or the window edge)."""
        out = [x]
        for u in range(t, t_end):
            if not self.layout.contains(x, u):
                break
            x = x + 1 if self.arrow(x, u) else x - 1
            out.append(x)
        return np.array(out)


@dataclass
class DualArrowConfig:
    """Dual arrows on the odd sites ``(x, t + 1)`` sitting above each forward site ``(x, t)``.

    ``left`` shares the flat indexing of the forward layout: entry ``i`` refers to
    the odd site one time unit above forward site ``i``.
    """

    layout: RowLayout
    left: np.ndarray

    def arrow_left(self, x, t):
        """Direction of the dual step from the odd site ``(x, t)`` down to time ``t - 1``."""
        if not self.layout.contains(x, t - 1):
            raise DomainError(f"{(x, t)} is not a site of the dual web")
        r = self.layout.row(t - 1)
        return bool(self.left[self.layout.offset[r] + (x - self.layout.lo[r]) // 2])

    def path(self, x, t, t_end):
        out = [x]
        for u in range(t, t_end, -1):
            if not self.layout.contains(x, u - 1):
                break
            x = x - 1 if self.arrow_left(x, u) else x + 1
            out.append(x)
        return np.array(out)


def sample_web(env: Environment, seed, key=("web",)):
    rng = derive_rng(seed, *key)
    return ArrowConfig(env.layout, rng.random(env.layout.size) < env.values)


def build_dual_web(arrows: ArrowConfig):
    """Dual step from ``(x, t + 1)`` goes left exactly when the forward arrow at ``(x, t)`` goes right."""
    return DualArrowConfig(arrows.layout, arrows.right.copy())


def check_noncrossing(arrows: ArrowConfig, dual: DualArrowConfig):
    """``(True, None)`` if no forward edge strictly crosses a dual edge, else ``(False, witness)``.

    Forward and dual paths live on sites of opposite parity, so they can only
    cross inside a time slab. Within the slab ``[t, t + 1]`` a forward edge
    from ``(x, t)`` is checked against the dual edges entering time ``t`` from
    ``(x - 2, t + 1)``, ``(x, t + 1)`` and ``(x + 2, t + 1)``; no other dual edge
    reaches its horizontal span. The witness is
    ``((x, t, x_forward_end), (y, t + 1, y_dual_end))``.
    """
    lay = arrows.layout
    if lay is not dual.layout and not (
        np.array_equal(lay.lo, dual.layout.lo) and np.array_equal(lay.count, dual.layout.count)
    ):
        raise DomainError("web and dual web live on different windows")
    for r in range(lay.n_rows):
        c = int(lay.count[r])
        if c == 0:
            continue
        t = lay.t_min + r
        sl = slice(int(lay.offset[r]), int(lay.offset[r] + c))
        xs = lay.lo[r] + 2 * np.arange(c)
        fwd_end = np.where(arrows.right[sl], xs + 1, xs - 1)
        dual_end = np.where(dual.left[sl], xs - 1, xs + 1)  # dual from (xs, t+1) to (dual_end, t)
        for shift in (-1, 0, 1):
            lo, hi = max(0, -shift), min(c, c - shift)
            if lo >= hi:
                continue
            i = np.arange(lo, hi)
            j = i + shift
            bad = (xs[i] - dual_end[j]) * (fwd_end[i] - xs[j]) < 0
            if bad.any():
                k = int(np.flatnonzero(bad)[0])
                a, b = int(i[k]), int(j[k])
                return False, ((int(xs[a]), t, int(fwd_end[a])), (int(xs[b]), t + 1, int(dual_end[b])))
    return True, None


def corrupt_dual(dual: DualArrowConfig, index):
    """Copy of ``dual`` with one arrow flipped (for counterexamples)."""
    left = dual.left.copy()
    left[index] = ~left[index]
    return DualArrowConfig(dual.layout, left)


def web_record(seed, key=("web",)):
    return as_record(seed, *key)
