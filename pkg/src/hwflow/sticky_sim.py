"""Grid simulation of sticky Brownian motion and the sticky 2-point motion.

The pair is built by a random time change. With ``W`` a variance-2 Brownian
motion started at ``x1 - x2`` and ``L`` its local time at 0 (normalized so that
``2 \\int f(W_s) ds = 2 \\int f(x) L(t, x) dx``), set

    A_t = t + 2 nu L(t, 0),   T = A^{-1},   S_t = t - T_t,

and, with independent ``V`` (variance rate 2) and ``B3`` (variance rate 1),

    X1_t = x1 + (W_T - (x1 - x2) + V_T) / 2 + B3_S + beta t,
    X2_t = X1_t - W_T.

The difference ``X1 - X2 = W_T`` is a sticky Brownian motion at 0 and the
coincidence time up to ``t`` equals ``S_t``.

On a grid the local time of ``W`` over each step is drawn from its exact
conditional law given the two endpoint values (Brownian bridge local time).
Inside a step that touches 0, the path is taken to reach 0 at the linear
crossing fraction, sit there for the whole real-time increment ``2 nu dL``,
and then continue to the right endpoint. ``V`` and ``B3`` are evaluated at the
(random, but independent of them) times ``T`` and ``S`` by drawing their
increments over those time intervals directly, which is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import analytics
from .analytics import SpaceTimePoint, StickyParams
from .errors import DomainError, InvariantError, NumericError
from .seeding import SeedRecord, as_record, derive_rng

__all__ = [
    "StickyParams",
    "PathGrid",
    "LocalTimePath",
    "TimeChange",
    "TwoPointSample",
    "TwoPointBatch",
    "simulate_bm",
    "estimate_local_time",
    "build_time_change",
    "simulate_two_point",
    "simulate_two_point_batch",
    "meet_occupation_time",
    "return_probability_profile",
    "return_hit_counts",
    "sample_gaussian_field",
    "default_bandwidth",
]

ESTIMATORS = ("epsilon-occupation", "crossing-count", "bridge-mean")
LOCAL_TIME_METHODS = ("bridge", "epsilon-occupation")
DIFF_VARIANCE = 2.0


def default_bandwidth(dt):
    return 1e-3 * math.sqrt(dt)


def _n_steps(dt, horizon):
    if not (dt > 0 and math.isfinite(dt)):
        raise DomainError(f"dt must be positive, got {dt}")
    if not (horizon > 0 and math.isfinite(horizon)):
        raise DomainError(f"horizon must be positive, got {horizon}")
    if dt > horizon:
        raise DomainError("dt must not exceed the horizon")
    return max(1, int(round(horizon / dt)))


@dataclass
class PathGrid:
    dt: float
    t0: float
    values: np.ndarray
    seed: SeedRecord | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise InvariantError("path values must be a nonempty 1-d sequence")
        if not self.dt > 0:
            raise InvariantError("dt must be positive")

    @property
    def n_steps(self):
        return self.values.size - 1

    @property
    def horizon(self):
        return self.n_steps * self.dt

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.values.size)


@dataclass
class LocalTimePath:
    dt: float
    values: np.ndarray
    estimator: str
    bandwidth: float
    level: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size == 0 or self.values[0] != 0.0:
            raise InvariantError("local time must start at 0")
        if np.any(np.diff(self.values) < 0) or np.any(self.values < 0):
            raise InvariantError("local time must be nonnegative and nondecreasing")


@dataclass
class TimeChange:
    """``A`` on the driver grid, ``T`` and ``S`` on the real-time grid.

    ``knots`` optionally gives the exact piecewise-linear form of ``A`` as
    ``(driver times, values)``, with repeated driver times where ``A`` jumps.
    Without it ``A`` is interpolated linearly between grid nodes.
    """

    dt: float
    A: np.ndarray
    T: np.ndarray
    S: np.ndarray
    knots: tuple | None = field(default=None, repr=False)

    def check(self):
        """Raise InvariantError unless the documented monotonicity relations hold."""
        t = self.dt * np.arange(self.T.size)
        tol = 1e-12 * max(1.0, t[-1])
        if np.any(np.diff(self.A) <= 0):
            raise InvariantError("A must be strictly increasing")
        if np.any(self.A < self.dt * np.arange(self.A.size) - tol):
            raise InvariantError("A_t must dominate t")
        if np.any(np.diff(self.T) < -tol) or np.any(self.T > t + tol):
            raise InvariantError("T must be nondecreasing with T_t <= t")
        if np.any(np.diff(self.S) < -tol) or np.any(self.S < -tol):
            raise InvariantError("S must be nondecreasing and nonnegative")
        return True

    def round_trip_error(self):
        """``max |A(T(t)) - t|`` on the grid.

        Where ``A`` jumps, ``A(T(t))`` is the interval ``[A(T-), A(T+)]`` and the
        error is the distance from ``t`` to it.
        """
        t = self.dt * np.arange(self.T.size)
        if self.knots is None:
            grid = self.dt * np.arange(self.A.size)
            return float(np.max(np.abs(np.interp(self.T, grid, self.A) - t)))
        u, a = (np.asarray(v, dtype=float) for v in self.knots)
        lo = _eval_monotone(u, a, self.T, "left")
        hi = _eval_monotone(u, a, self.T, "right")
        return float(np.max(np.maximum(np.maximum(lo - t, t - hi), 0.0)))


def _eval_monotone(u, a, x, side):
    """Left (``side="left"``) or right limit at ``x`` of the piecewise-linear map through the knots."""
    # left: u[i-1] < x <= u[i]; right: u[i-1] <= x < u[i]
    i = np.clip(np.searchsorted(u, x, side=side), 1, u.size - 1)
    j0, j1 = i - 1, i
    du = u[j1] - u[j0]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(du > 0, (x - u[j0]) / du, 1.0)
    return a[j0] + (a[j1] - a[j0]) * w


@dataclass
class TwoPointSample:
    x1_path: PathGrid
    x2_path: PathGrid
    params: StickyParams
    start: tuple
    meet_occupation: float
    bandwidth: float
    local_time_horizon: float
    time_change: TimeChange | None = None
    local_time: np.ndarray | None = field(default=None, repr=False)

    @property
    def difference(self):
        return self.x1_path.values - self.x2_path.values


def simulate_bm(x0, variance_rate, dt, horizon, seed, key=("bm",)):
    """Brownian path on ``[0, horizon]`` with Gaussian increments of variance ``variance_rate * dt``."""
    n = _n_steps(dt, horizon)
    if variance_rate < 0 or not math.isfinite(variance_rate):
        raise DomainError(f"variance_rate must be nonnegative, got {variance_rate}")
    rng = derive_rng(seed, *key)
    incr = rng.standard_normal(n) * math.sqrt(variance_rate * dt)
    values = np.empty(n + 1)
    values[0] = x0
    np.cumsum(incr, out=values[1:])
    values[1:] += x0
    return PathGrid(dt, 0.0, values, as_record(seed, *key))


def _bridge_mean_increment(a, b, h, sigma):
    """``E[dL | W_0 = a, W_h = b]`` for a variance-``sigma^2`` Brownian bridge."""
    a = np.asarray(a, dtype=float) / sigma
    b = np.asarray(b, dtype=float) / sigma
    c = np.abs(a) + np.abs(b)
    d2 = (b - a) ** 2
    ell = np.exp((d2 - c * c) / (2 * h)) * math.sqrt(math.pi * h / 2) * special.erfcx(c / math.sqrt(2 * h))
    return 0.5 * sigma * ell


def _bridge_sample_increment(a, b, u, h, sigma):
    """Exact draw of ``dL`` given the step endpoints, from uniforms ``u``.

    For a standard bridge from ``a`` to ``b`` over ``h`` the semimartingale local
    time at 0 satisfies ``P(l > y) = exp(-((|a| + |b| + y)^2 - (b - a)^2) / 2h)``.
    """
    a = a / sigma
    b = b / sigma
    ell = np.sqrt((b - a) ** 2 - 2.0 * h * np.log(u)) - (np.abs(a) + np.abs(b))
    np.maximum(ell, 0.0, out=ell)
    return 0.5 * sigma * ell


def estimate_local_time(path: PathGrid, level=0.0, variance_rate=1.0, bandwidth=1e-3,
                        estimator="epsilon-occupation"):
    """Local time of ``path`` at ``level`` on the path's own grid.

    ``epsilon-occupation``: ``variance_rate / (4 bandwidth)`` times the grid time
    spent within ``bandwidth`` of the level (left-point rule, so a path started
    inside the band carries an extra ``variance_rate dt / (4 bandwidth)``).
    ``crossing-count``: ``bandwidth / 2`` times the number of completed crossings
    of the band ``[level, level + bandwidth]`` in either direction (the count
    times ``bandwidth`` tends to the semimartingale local time, which is twice
    ours). Needs ``sqrt(dt) << bandwidth``, otherwise crossings are missed.
    ``bridge-mean``: sum over steps of the conditional mean given the endpoints.
    """
    if not bandwidth > 0:
        raise DomainError("bandwidth must be positive")
    if not variance_rate > 0:
        raise DomainError("variance_rate must be positive")
    x = path.values - level
    n = x.size - 1
    out = np.zeros(n + 1)
    if estimator == "epsilon-occupation":
        inside = (np.abs(x[:-1]) <= bandwidth).astype(float)
        np.cumsum(inside * (variance_rate * path.dt / (4.0 * bandwidth)), out=out[1:])
    elif estimator == "crossing-count":
        # state: +1 last seen at or above the band top, -1 at or below the level
        state = np.zeros(n + 1, dtype=np.int8)
        state[x >= bandwidth] = 1
        state[x <= 0] = -1
        marks = state[state != 0]
        idx = np.flatnonzero(state)
        if marks.size > 1:
            flips = np.flatnonzero(marks[1:] != marks[:-1]) + 1
            counts = np.zeros(n + 1)
            np.add.at(counts, idx[flips], 0.5 * bandwidth)
            out = np.cumsum(counts)
    elif estimator == "bridge-mean":
        inc = _bridge_mean_increment(x[:-1], x[1:], path.dt, math.sqrt(variance_rate))
        np.cumsum(inc, out=out[1:])
    else:
        raise DomainError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    return LocalTimePath(path.dt, out, estimator, bandwidth, level)


def build_time_change(lt: LocalTimePath, nu, horizon=None):
    """``A_t = t + 2 nu L_t`` and its inverse ``T`` by piecewise-linear inversion.

    ``T`` and ``S = t - T`` are returned on the grid ``0, dt, ..., horizon``
    (default: the horizon of ``lt``), which ``A`` covers because ``A_t >= t``.
    """
    if not nu >= 0:
        raise DomainError("nu must be nonnegative")
    L = np.asarray(lt.values, dtype=float)
    if np.any(np.diff(L) < 0):
        raise InvariantError("local time path is not nondecreasing")
    grid = lt.dt * np.arange(L.size)
    A = grid + 2.0 * nu * L
    n_real = L.size if horizon is None else int(round(horizon / lt.dt)) + 1
    t = lt.dt * np.arange(n_real)
    T = np.interp(t, A, grid)
    S = np.maximum(t - T, 0.0)
    return TimeChange(lt.dt, A, T, S)


# ----------------------------------------------------------------------------
# two-point engine


def _step_layout(a, b, dL, method):
    """Per-step placement: fraction of the step before the stuck interval and the stuck level."""
    if method == "bridge":
        touched = dL > 0
        denom = np.abs(a) + np.abs(b)
        theta = np.where(touched, np.divide(np.abs(a), denom, out=np.full_like(a, 0.5), where=denom > 0), 0.0)
        z = np.where(touched, 0.0, a)
    else:
        theta = np.zeros_like(a)
        z = a.copy()
    return theta, z


def _locate(r, a, b, z, theta, J, h):
    """Position of real offset ``r`` inside a step.

    Returns ``(dT, w, frac, seg)``: the driver-time offset, the linearly
    interpolated driver value, the fraction of the stuck interval elapsed, and
    the driver sub-segment ``(part, s0, s1, w0, w1)`` containing ``dT`` (part 0
    before the crossing instant, 1 from it on; in step-local driver time).
    """
    t1 = theta * h
    t2 = (1.0 - theta) * h
    in1 = r < t1
    in_stuck = (~in1) & (r < t1 + J)
    q = r - t1 - J
    with np.errstate(divide="ignore", invalid="ignore"):
        w1 = a + (z - a) * np.where(t1 > 0, r / t1, 0.0)
        w3 = z + (b - z) * np.where(t2 > 0, np.clip(q / t2, 0.0, 1.0), 1.0)
        frac = np.where(J > 0, np.clip((r - t1) / J, 0.0, 1.0), 1.0)
    dT = np.where(in1, r, np.where(in_stuck, t1, np.minimum(r - J, h)))
    w = np.where(in1, w1, np.where(in_stuck, z, w3))
    frac = np.where(in1, 0.0, frac)
    seg = (
        np.where(in1, 0, 1),
        np.where(in1, 0.0, t1),
        np.where(in1, t1, h),
        np.where(in1, a, z),
        np.where(in1, z, b),
    )
    return dT, w, frac, seg


def _bridge_fill(key, s0, s1, w0, w1, x, normals, var):
    """Joint Brownian-bridge values at query times ``x``.

    Queries sharing ``key`` lie on one segment ``[s0, s1]`` pinned at ``w0`` and
    ``w1``; keys and, within a key, ``x`` must be nondecreasing. Uses
    ``len(x) + number of segments`` standard normals.
    """
    k = x.size
    first = np.ones(k, dtype=bool)
    first[1:] = key[1:] != key[:-1]
    last = np.ones(k, dtype=bool)
    last[:-1] = first[1:]
    prev = np.where(first, s0, np.concatenate([[0.0], x[:-1]]))
    gaps = np.maximum(x - prev, 0.0)
    z = normals[:k] * np.sqrt(var * gaps)
    csum = np.cumsum(z)
    start = np.maximum.accumulate(np.where(first, np.arange(k), 0))
    base = csum[start] - z[start]
    B = csum - base
    n_seg = int(last.sum())
    tail = np.zeros(k)
    tail[last] = normals[k:k + n_seg] * np.sqrt(var * np.maximum(s1[last] - x[last], 0.0))
    B_end = B + tail
    # broadcast each segment's end value back to its queries
    seg_id = np.cumsum(first) - 1
    B_end = B_end[last][seg_id]
    span = s1 - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(span > 0, (x - s0) / span, 0.0)
    return w0 + B - frac * (B_end - (w1 - w0))


class _Driver:
    """Difference driver ``W`` for a batch of replicates plus its local time and ``A``."""

    def __init__(self, incr, u, d0, h, nu, method, bandwidth):
        m, n = incr.shape
        W = np.empty((m, n + 1))
        W[:, 0] = d0
        np.cumsum(incr, axis=1, out=W[:, 1:])
        W[:, 1:] += d0
        a, b = W[:, :-1], W[:, 1:]
        sigma = math.sqrt(DIFF_VARIANCE)
        if method == "bridge":
            dL = _bridge_sample_increment(a, b, u, h, sigma)
        elif method == "epsilon-occupation":
            dL = (np.abs(a) <= bandwidth) * (DIFF_VARIANCE * h / (4.0 * bandwidth))
        else:
            raise DomainError(f"unknown local-time method {method!r}")
        self.W, self.a, self.b, self.dL = W, a, b, dL
        self.J = 2.0 * nu * dL
        self.L = np.zeros((m, n + 1))
        np.cumsum(dL, axis=1, out=self.L[:, 1:])
        self.A = np.zeros((m, n + 1))
        np.cumsum(h + self.J, axis=1, out=self.A[:, 1:])
        self.theta, self.z = _step_layout(a, b, dL, method)
        self.h, self.n = h, n

    def at(self, t, segments=False):
        """``(T, W_T, Lambda)`` at real times ``t`` (array of shape (m, k)).

        ``W_T`` is the linear interpolant; with ``segments=True`` the driver
        sub-segment of each query is appended for exact bridge sampling.
        """
        m = self.W.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=float), (m,) + np.shape(t)[-1:])
        idx = np.empty(t.shape, dtype=np.intp)
        for i in range(m):
            idx[i] = np.searchsorted(self.A[i], t[i], side="right") - 1
        np.clip(idx, 0, self.n - 1, out=idx)
        rows = np.arange(m)[:, None]
        take = lambda arr: arr[rows, idx]
        r = t - take(self.A)
        dT, w, frac, seg = _locate(r, take(self.a), take(self.b), take(self.z), take(self.theta),
                                   take(self.J), self.h)
        T = idx * self.h + dT
        lam = take(self.L) + frac * take(self.dL)
        if segments:
            part, s0, s1, w0, w1 = seg
            return T, w, lam, (2 * idx + part, s0, s1, w0, w1, dT)
        return T, w, lam

    def knots(self, i):
        """Breakpoints ``(driver time, real time)`` of ``A`` for replicate ``i``.

        Each step contributes its start, the crossing instant and the end of the
        stuck interval; ``A`` is linear between consecutive knots and jumps by
        ``J`` at the crossing instant.
        """
        k = self.h * np.arange(self.n)
        c = k + self.theta[i] * self.h
        A0 = self.A[i, :-1]
        u = np.stack([k, c, c], axis=1).ravel()
        a = np.stack([A0, A0 + self.theta[i] * self.h, A0 + self.theta[i] * self.h + self.J[i]], axis=1).ravel()
        return np.append(u, self.n * self.h), np.append(a, self.A[i, -1])


def _draw_driver(rng, n, h):
    incr = rng.standard_normal(n) * math.sqrt(DIFF_VARIANCE * h)
    u = 1.0 - rng.random(n)  # in (0, 1]
    return incr, u


def simulate_two_point(start, params: StickyParams, dt, horizon, bandwidth=None, seed=0,
                       local_time="bridge", swap_drivers=False, key=("two-point",)):
    """One path of the sticky 2-point motion on the real-time grid ``0, dt, ..., horizon``.

    ``swap_drivers`` exchanges the roles of the two symmetric drivers, which
    negates ``W`` (increments and bridge fill-in).
    """
    n = _n_steps(dt, horizon)
    bandwidth = default_bandwidth(dt) if bandwidth is None else bandwidth
    if not bandwidth > 0:
        raise DomainError("bandwidth must be positive")
    x1, x2 = map(float, start)
    d0 = x1 - x2
    rng = derive_rng(seed, *key)
    incr, u = _draw_driver(rng, n, dt)
    if swap_drivers:
        incr = -incr
    drv = _Driver(incr[None, :], u[None, :], d0, dt, params.nu, local_time, bandwidth)
    s = dt * np.arange(n + 1)
    T, _, lam, seg = drv.at(s[None, :], segments=True)
    T, lam = T[0], lam[0]
    key_, s0, s1, w0, w1, dT = (v[0] for v in seg)
    T[0], lam[0] = 0.0, 0.0
    T = np.maximum.accumulate(np.minimum(T, s))
    S = s - T
    dV = rng.standard_normal(n) * np.sqrt(DIFF_VARIANCE * np.diff(T))
    dB3 = rng.standard_normal(n) * np.sqrt(np.maximum(np.diff(S), 0.0))
    n_seg = 1 + int(np.count_nonzero(key_[1:] != key_[:-1]))
    fill = rng.standard_normal(n + 1 + n_seg)
    if swap_drivers:
        fill = -fill
    D = _bridge_fill(key_, s0, s1, w0, w1, dT, fill, DIFF_VARIANCE)
    D[0] = d0
    V = np.concatenate([[0.0], np.cumsum(dV)])
    B3 = np.concatenate([[0.0], np.cumsum(dB3)])
    X1 = x1 + 0.5 * (D - d0 + V) + B3 + params.beta * s
    X2 = X1 - D
    rec = as_record(seed, *key)
    meet = dt * float(np.count_nonzero(np.abs(D[:-1]) <= bandwidth))
    A = drv.A[0]
    tc = TimeChange(dt, A, T, S, knots=drv.knots(0))
    return TwoPointSample(
        x1_path=PathGrid(dt, 0.0, X1, rec),
        x2_path=PathGrid(dt, 0.0, X2, rec),
        params=params,
        start=(x1, x2),
        meet_occupation=meet,
        bandwidth=bandwidth,
        local_time_horizon=float(lam[-1]),
        time_change=tc,
        local_time=drv.L[0].copy(),
    )


@dataclass
class TwoPointBatch:
    """Endpoint statistics for a block of replicates, one row per replicate."""

    replicate: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    meet_occupation: np.ndarray
    local_time: np.ndarray
    stuck_time: np.ndarray

    def columns(self):
        return {
            "replicate": self.replicate,
            "x1": self.x1,
            "x2": self.x2,
            "meet_occupation": self.meet_occupation,
            "local_time": self.local_time,
            "stuck_time": self.stuck_time,
        }


def simulate_two_point_batch(start, params: StickyParams, dt, horizon, replicates, seed=0,
                             bandwidth=None, local_time="bridge", first=0, key=("two-point",)):
    """Endpoint values at ``horizon`` for replicates ``first .. first + replicates - 1``.

    Replicate ``i`` draws its driver from its own stream ``(seed, key, i)``, so
    any partition of the replicate range reproduces the same rows. ``V`` and
    ``B3`` are drawn directly at the endpoint times ``T`` and ``S``. The meet
    occupation uses the change of variables ``s = A_u``: coincidence time plus
    driver time in the band.
    """
    n = _n_steps(dt, horizon)
    bandwidth = default_bandwidth(dt) if bandwidth is None else bandwidth
    x1, x2 = map(float, start)
    d0 = x1 - x2
    m = int(replicates)
    incr = np.empty((m, n))
    u = np.empty((m, n))
    tail = np.empty((m, 3))
    reps = np.arange(first, first + m)
    for j, rep in enumerate(reps):
        rng = derive_rng(seed, *key, int(rep))
        incr[j], u[j] = _draw_driver(rng, n, dt)
        tail[j] = rng.standard_normal(3)
    drv = _Driver(incr, u, d0, dt, params.nu, local_time, bandwidth)
    t_end = n * dt
    T, _, lam, seg = drv.at(np.full((m, 1), t_end), segments=True)
    T, lam = np.minimum(T[:, 0], t_end), lam[:, 0]
    _, s0, s1, w0, w1, dT = (v[:, 0] for v in seg)
    # bridge draw of W at T inside its driver sub-segment
    span = s1 - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(span > 0, (dT - s0) / span, 0.0)
        sd = np.sqrt(DIFF_VARIANCE * np.where(span > 0, (dT - s0) * (s1 - dT) / span, 0.0))
    D = w0 + f * (w1 - w0) + sd * tail[:, 2]
    S = t_end - T
    V = tail[:, 0] * np.sqrt(DIFF_VARIANCE * T)
    B3 = tail[:, 1] * np.sqrt(S)
    X1 = x1 + 0.5 * (D - d0 + V) + B3 + params.beta * t_end
    X2 = X1 - D
    meet = S + 4.0 * bandwidth * lam / DIFF_VARIANCE
    return TwoPointBatch(reps, X1, X2, meet, lam, S)


def meet_occupation_time(sample: TwoPointSample, bandwidth=None):
    """Grid measure of ``{s < horizon: |X1_s - X2_s| <= bandwidth}``."""
    bw = sample.bandwidth if bandwidth is None else bandwidth
    d = sample.difference
    return sample.x1_path.dt * float(np.count_nonzero(np.abs(d[:-1]) <= bw))


def meet_occupation_path(sample: TwoPointSample, bandwidth=None):
    """Running version of :func:`meet_occupation_time` on the grid."""
    bw = sample.bandwidth if bandwidth is None else bandwidth
    inside = np.abs(sample.difference[:-1]) <= bw
    return np.concatenate([[0.0], np.cumsum(inside) * sample.x1_path.dt])


def return_hit_counts(params: StickyParams, t_block, n_blocks, first, count, seed=0, dt=0.01,
                      start=(0.0, 0.0), bandwidth=None):
    """Number of replicates ``first .. first + count - 1`` whose pair coincides in each block."""
    if n_blocks < 2:
        raise DomainError("n_blocks must be at least 2")
    if not t_block > 0:
        raise DomainError("t_block must be positive")
    n = _n_steps(dt, t_block * n_blocks)
    bw = default_bandwidth(dt) if bandwidth is None else bandwidth
    d0 = float(start[0]) - float(start[1])
    m = int(count)
    incr = np.empty((m, n))
    u = np.empty((m, n))
    for j in range(m):
        rng = derive_rng(seed, "return-profile", first + j)
        incr[j], u[j] = _draw_driver(rng, n, dt)
    drv = _Driver(incr, u, d0, dt, params.nu, "bridge", bw)
    s0 = drv.A[:, :-1] + drv.theta * dt
    s1 = s0 + drv.J
    touched = drv.dL > 0
    near = np.abs(drv.a) <= bw
    marks = np.zeros((m, n_blocks + 1))
    rows = np.broadcast_to(np.arange(m)[:, None], touched.shape)
    for mask, lo, hi in ((touched, s0, s1), (near, drv.A[:, :-1], drv.A[:, :-1])):
        # block k covers (k tb, (k+1) tb]; a point at exactly k tb belongs to block k-1
        k_lo = np.clip(np.ceil(lo[mask] / t_block).astype(np.int64) - 1, 0, n_blocks)
        k_hi = np.clip(np.ceil(hi[mask] / t_block).astype(np.int64) - 1, -1, n_blocks - 1)
        ok = k_lo <= k_hi
        r = rows[mask][ok]
        np.add.at(marks, (r, k_lo[ok]), 1.0)
        np.add.at(marks, (r, k_hi[ok] + 1), -1.0)
    covered = np.cumsum(marks, axis=1)[:, :n_blocks] > 0
    return covered.sum(axis=0).astype(np.int64)


def return_probability_profile(params: StickyParams, t_block, n_blocks, replicates, seed=0,
                               dt=0.01, start=(0.0, 0.0), bandwidth=None, chunk_size=256):
    """Monte Carlo ``P(E_k)``, ``E_k`` = the pair coincides somewhere in ``(k t_block, (k+1) t_block]``.

    Returns ``(p, se)`` arrays of length ``n_blocks``. A step of the difference
    driver that touches 0 contributes its stuck real-time interval; a grid node
    within ``bandwidth`` of 0 contributes its real time.
    """
    hits = np.zeros(n_blocks, dtype=np.int64)
    for first in range(0, replicates, chunk_size):
        m = min(chunk_size, replicates - first)
        hits += return_hit_counts(params, t_block, n_blocks, first, m, seed, dt, start, bandwidth)
    p = hits / replicates
    se = np.sqrt(p * (1 - p) / replicates)
    return p, se


def sample_gaussian_field(points, kernel, params: StickyParams | None = None, fprime_x0=0.0,
                          seed=0, n_draws=None, spec=analytics.DEFAULT_QUAD):
    """Mean-zero Gaussian vector(s) with covariance ``kernel`` on ``points``.

    Returns shape ``(k,)`` when ``n_draws`` is None, else ``(n_draws, k)``.
    """
    pts = [p if isinstance(p, SpaceTimePoint) else SpaceTimePoint(*p) for p in points]
    if len({(p.t, p.r) for p in pts}) != len(pts):
        raise DomainError("points must be distinct")
    nu = params.nu if params is not None else 1.0
    C = analytics.kernel_matrix(pts, kernel, nu=nu, fprime_x0=fprime_x0, spec=spec)
    factor = _psd_factor(C)
    rng = derive_rng(seed, "gaussian-field", kernel)
    m = 1 if n_draws is None else int(n_draws)
    z = rng.standard_normal((m, len(pts)))
    out = z @ factor.T
    return out[0] if n_draws is None else out


def _psd_factor(C):
    k = C.shape[0]
    scale = max(float(np.trace(C)), 1e-300)
    jitter = 0.0
    for _ in range(6):
        try:
            return np.linalg.cholesky(C + jitter * np.eye(k))
        except np.linalg.LinAlgError:
            jitter = 1e-16 * scale if jitter == 0 else jitter * 10
            if jitter > 1e-10 * scale:
                break
    # singular but PSD matrices (e.g. a point at t = 0) via eigen-decomposition
    vals, vecs = np.linalg.eigh(C)
    if vals.min() < -1e-10 * scale:
        raise NumericError(
            f"covariance matrix not positive semidefinite (min eigenvalue {vals.min():.3e})",
            estimate=float(vals.min()),
        )
    return vecs * np.sqrt(np.clip(vals, 0.0, None))
