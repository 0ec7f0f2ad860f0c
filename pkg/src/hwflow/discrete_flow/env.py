"""Random environments on the even sublattice ``{(x, t): x + t even}``.

Sites are stored row by row (one row per time level). Row ``t`` holds the
even-parity positions ``lo[t], lo[t] + 2, ..., lo[t] + 2 (count[t] - 1)``, so a
rectangular window and a light cone are both just different row layouts.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError
from ..seeding import SeedRecord, as_record, derive_rng

KINDS = ("deterministic", "beta", "two_point")


@dataclass(frozen=True)
class EnvDistribution:
    """Law of a single site variable ``omega`` in ``[0, 1]``.

    ``deterministic``: ``omega = p``; ``beta``: Beta(a, b); ``two_point``:
    ``p`` with probability ``weight``, else ``q``.
    """

    kind: str
    p: float = 0.5
    q: float = 0.5
    a: float = 1.0
    b: float = 1.0
    weight: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown environment law {self.kind!r}")
        if self.kind == "deterministic" and not 0 <= self.p <= 1:
            raise DomainError("deterministic p must lie in [0, 1]")
        if self.kind == "beta" and not (self.a > 0 and self.b > 0):
            raise DomainError("beta parameters must be positive")
        if self.kind == "two_point":
            if not (0 <= self.p <= 1 and 0 <= self.q <= 1):
                raise DomainError("two-point values must lie in [0, 1]")
            if not 0 <= self.weight <= 1:
                raise DomainError("two-point weight must lie in [0, 1]")

    @classmethod
    def deterministic(cls, p):
        return cls("deterministic", p=p)

    @classmethod
    def beta(cls, a, b):
        return cls("beta", a=a, b=b)

    @classmethod
    def uniform(cls):
        return cls("beta", a=1.0, b=1.0)

    @classmethod
    def two_point(cls, p, q, weight):
        return cls("two_point", p=p, q=q, weight=weight)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", None)
        if kind is None:
            raise DomainError("environment law needs a 'kind'")
        try:
            return cls(kind, **d)
        except TypeError as exc:
            raise DomainError(f"bad environment law parameters: {exc}") from None

    def to_dict(self):
        if self.kind == "deterministic":
            return {"kind": self.kind, "p": self.p}
        if self.kind == "beta":
            return {"kind": self.kind, "a": self.a, "b": self.b}
        return {"kind": self.kind, "p": self.p, "q": self.q, "weight": self.weight}

    @property
    def mean(self):
        if self.kind == "deterministic":
            return self.p
        if self.kind == "beta":
            return self.a / (self.a + self.b)
        return self.weight * self.p + (1 - self.weight) * self.q

    @property
    def second_moment(self):
        if self.kind == "deterministic":
            return self.p * self.p
        if self.kind == "beta":
            s = self.a + self.b
            return self.a * (self.a + 1) / (s * (s + 1))
        return self.weight * self.p ** 2 + (1 - self.weight) * self.q ** 2

    @property
    def var(self):
        return max(self.second_moment - self.mean ** 2, 0.0)

    @property
    def drift(self):
        """Mean displacement per step, ``2 E[omega] - 1``."""
        return 2.0 * self.mean - 1.0

    @property
    def sigma0_sq(self):
        """Variance of the one-step quenched mean, ``4 Var(omega)``."""
        return 4.0 * self.var

    @property
    def split_prob(self):
        """``E[omega (1 - omega)]``: two walkers at one site step apart (one direction)."""
        return self.mean - self.second_moment

    def sample(self, rng, size):
        if self.kind == "deterministic":
            return np.full(size, float(self.p))
        if self.kind == "beta":
            if self.a == 1.0 and self.b == 1.0:
                return rng.random(size)
            return rng.beta(self.a, self.b, size)
        return np.where(rng.random(size) < self.weight, self.p, self.q)


@dataclass(frozen=True)
class RowLayout:
    """Even-parity positions per time level ``t_min .. t_min + len(lo) - 1``."""

    t_min: int
    lo: np.ndarray
    count: np.ndarray
    offset: np.ndarray = field(repr=False)

    @classmethod
    def from_ranges(cls, t_min, lo, hi):
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        ts = t_min + np.arange(lo.size)
        if np.any((lo + ts) % 2) or np.any((hi + ts) % 2):
            raise DomainError("row bounds must have the parity of their time level")
        count = np.maximum((hi - lo) // 2 + 1, 0)
        offset = np.concatenate([[0], np.cumsum(count)[:-1]]).astype(np.int64)
        return cls(int(t_min), lo, count.astype(np.int64), offset)

    @classmethod
    def rectangle(cls, x_min, x_max, t_min, t_max):
        if x_min > x_max or t_min > t_max:
            raise DomainError("window is empty")
        ts = np.arange(t_min, t_max + 1)
        lo = x_min + (x_min + ts) % 2
        hi = x_max - (x_max + ts) % 2
        return cls.from_ranges(t_min, lo, hi)

    @classmethod
    def cones(cls, apexes, t_end):
        """Union hull of forward light cones from ``apexes`` [(x, t), ...] up to ``t_end - 1``."""
        apexes = [(int(x), int(t)) for x, t in apexes]
        for x, t in apexes:
            if (x + t) % 2:
                raise DomainError(f"apex {(x, t)} is not an even site")
            if t >= t_end:
                raise DomainError("apex must lie before t_end")
        t_min = min(t for _, t in apexes)
        ts = np.arange(t_min, t_end)
        lo = np.full(ts.size, np.iinfo(np.int64).max)
        hi = np.full(ts.size, np.iinfo(np.int64).min)
        for x, t in apexes:
            k = ts - t
            act = k >= 0
            lo[act] = np.minimum(lo[act], x - k[act])
            hi[act] = np.maximum(hi[act], x + k[act])
        empty = lo > hi
        lo[empty] = ts[empty] % 2
        hi[empty] = lo[empty] - 2
        return cls.from_ranges(t_min, lo, hi)

    @property
    def n_rows(self):
        return self.lo.size

    @property
    def t_max(self):
        return self.t_min + self.n_rows - 1

    @property
    def size(self):
        return int(self.count.sum())

    def row(self, t):
        r = t - self.t_min
        if not 0 <= r < self.n_rows:
            raise DomainError(f"time {t} outside window")
        return r

    def positions(self, t):
        r = self.row(t)
        return self.lo[r] + 2 * np.arange(self.count[r])

    def contains(self, x, t):
        r = t - self.t_min
        if not 0 <= r < self.n_rows or (x + t) % 2:
            return False
        j = (x - self.lo[r]) // 2
        return 0 <= j < self.count[r]

    def slice(self, t, x_lo, x_hi):
        """Flat index range for positions ``x_lo .. x_hi`` (step 2) in row ``t``."""
        r = self.row(t)
        if (x_lo + t) % 2 or (x_hi + t) % 2:
            raise DomainError(f"positions {x_lo}..{x_hi} have wrong parity at time {t}")
        j0 = (x_lo - self.lo[r]) // 2
        j1 = (x_hi - self.lo[r]) // 2
        if j0 < 0 or j1 >= self.count[r]:
            raise DomainError(f"positions {x_lo}..{x_hi} at time {t} leave the window")
        base = self.offset[r]
        return slice(int(base + j0), int(base + j1 + 1))

    def bounds(self):
        ts = self.t_min + np.arange(self.n_rows)
        ok = self.count > 0
        x_min = int(self.lo[ok].min()) if ok.any() else 0
        x_max = int((self.lo + 2 * (self.count - 1))[ok].max()) if ok.any() else 0
        return (x_min, x_max, int(ts[0]), int(ts[-1]))


@dataclass
class Environment:
    layout: RowLayout
    values: np.ndarray
    dist: EnvDistribution
    seed: SeedRecord | None = None

    @property
    def window(self):
        return self.layout.bounds()

    def omega_at(self, x, t):
        if not self.layout.contains(x, t):
            raise DomainError(f"site {(x, t)} is not an even site of the window")
        r = self.layout.row(t)
        return float(self.values[self.layout.offset[r] + (x - self.layout.lo[r]) // 2])

    def row_values(self, t, x_lo, x_hi):
        return self.values[..., self.layout.slice(t, x_lo, x_hi)]

    def header(self):
        """JSON-serializable description; values regenerate from it."""
        return {
            "window": list(self.window),
            "shape": "rectangle" if self._is_rectangle() else "rows",
            "t_min": self.layout.t_min,
            "lo": self.layout.lo.tolist(),
            "count": self.layout.count.tolist(),
            "dist": self.dist.to_dict(),
            "seed": None if self.seed is None else self.seed.to_dict(),
        }

    def to_json(self):
        return json.dumps(self.header(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        h = json.loads(text) if isinstance(text, str) else dict(text)
        if h.get("seed") is None:
            raise DomainError("environment header has no seed; cannot regenerate")
        dist = EnvDistribution.from_dict(h["dist"])
        lo = np.asarray(h["lo"], dtype=np.int64)
        count = np.asarray(h["count"], dtype=np.int64)
        layout = RowLayout.from_ranges(h["t_min"], lo, lo + 2 * (count - 1))
        rec = SeedRecord(h["seed"]["seed"], tuple(h["seed"]["key"]), h["seed"]["generator"])
        return fill_environment(layout, dist, rec)

    def _is_rectangle(self):
        x_min, x_max, t_min, t_max = self.window
        ref = RowLayout.rectangle(x_min, x_max, t_min, t_max)
        return np.array_equal(ref.lo, self.layout.lo) and np.array_equal(ref.count, self.layout.count)


def fill_environment(layout: RowLayout, dist: EnvDistribution, record: SeedRecord):
    """I.i.d. fill of every site in ``layout`` from the stream named by ``record``."""
    rng = record.rng()
    values = dist.sample(rng, layout.size)
    return Environment(layout, values, dist, record)


def gen_environment(window, dist: EnvDistribution, seed, key=("env",)):
    """Environment on the rectangular window ``(x_min, x_max, t_min, t_max)``, inclusive."""
    x_min, x_max, t_min, t_max = (int(v) for v in window)
    layout = RowLayout.rectangle(x_min, x_max, t_min, t_max)
    return fill_environment(layout, dist, as_record(seed, *key))


def gen_cone_environment(apexes, t_end, dist: EnvDistribution, seed, key=("env",)):
    """Environment on the light cones of ``apexes`` up to time ``t_end - 1``."""
    layout = RowLayout.cones(apexes, t_end)
    return fill_environment(layout, dist, as_record(seed, *key))


def stack_values(layout: RowLayout, dist: EnvDistribution, seed, keys):
    """Values of one environment per key, stacked as a ``(len(keys), layout.size)`` array."""
    out = np.empty((len(keys), layout.size))
    for i, key in enumerate(keys):
        out[i] = dist.sample(derive_rng(seed, *key), layout.size)
    return out


def parity_round(v, parity):
    """Nearest integer ``x`` with ``x = parity (mod 2)``; ties go toward ``-inf``."""
    m = (float(v) - parity) / 2.0
    return int(2 * math.ceil(m - 0.5) + parity)


def round_half_down(v):
    return int(math.ceil(float(v) - 0.5))
