r"""Closed-form laws and covariance kernels of the sticky 2-point motion.

Everything here is a pure function of its arguments. Integrals are evaluated
with adaptive Gauss-Kronrod quadrature (``scipy.integrate.quad``) after a
change of variables that removes the endpoint singularities:

* the first-hitting-time density ``|x| s^{-3/2} e^{-x^2/4s}`` is integrated in
  the Gaussian variable ``z`` with ``s = x^2 / (2 z^2)``, followed by
  ``z = z_0 + w^2`` to smooth the square-root edge at ``s = t``;
* ``u^{-1/2}`` kernels are integrated in ``w = sqrt(u)``.

Quantities that involve ``e^{z^2/2} (1 - \Phi(z))`` use ``scipy.special.erfcx``
so they stay finite for arbitrarily large ``z``.

Two normalizations are offered for the local-time laws of the difference
process (``normalization=``):

``"published"``
    the closed forms as printed in the source literature (the default);
``"occupation"``
    the laws implied by the occupation-density normalization
    ``sigma^2 \int_0^t f(B_s) ds = 2 \int f(x) L(t, x) dx`` applied to the
    variance-2 driver. The two differ by the substitution ``nu -> nu / sqrt 2``
    (plus ``u -> sqrt 2 u`` for the tail), see :func:`two_point_cov`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericError

SQRT2 = math.sqrt(2.0)
SQRT_PI = math.sqrt(math.pi)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Gaussian tails are cut this many standard deviations past the last break.
TAIL_CUT_SD = 9.0
_NORMALIZATIONS = ("published", "occupation")


@dataclass(frozen=True)
class StickyParams:
    """Stickiness ``nu`` (> 0) and drift ``beta`` of the 2-point motion."""

    nu: float
    beta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise DomainError(f"nu must be positive and finite, got {self.nu}")
        if not math.isfinite(self.beta):
            raise DomainError(f"beta must be finite, got {self.beta}")

    def to_dict(self):
        return {"nu": self.nu, "beta": self.beta}


@dataclass(frozen=True)
class SpaceTimePoint:
    t: float
    r: float

    def __post_init__(self):
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise DomainError(f"time must be nonnegative, got {self.t}")
        if not math.isfinite(self.r):
            raise DomainError(f"space coordinate must be finite, got {self.r}")


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    max_subdivisions: int = 200

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be positive")


DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True)
class InitialProfile:
    """Deterministic part ``f`` of the initial height profile.

    ``f`` must be C^1 with ``f(0) = 0``, ``|f'| <= fprime_bound`` and a
    Holder-continuous derivative with constants ``holder_C``, ``holder_gamma``.
    """

    f: object
    fprime: object
    fprime_bound: float
    holder_C: float
    holder_gamma: float
    x0: float = 0.0
    name: str = "custom"

    @classmethod
    def linear(cls, slope: float, x0: float = 0.0):
        return cls(
            f=lambda x, c=slope: c * np.asarray(x, dtype=float),
            fprime=lambda x, c=slope: np.full_like(np.asarray(x, dtype=float), c),
            fprime_bound=abs(slope),
            holder_C=1.0,
            holder_gamma=1.0,
            x0=x0,
            name=f"linear({slope})",
        )

    @classmethod
    def zero(cls, x0: float = 0.0):
        prof = cls.linear(0.0, x0)
        return cls(prof.f, prof.fprime, 0.0, 1.0, 1.0, x0, "zero")

    @classmethod
    def sine(cls, amplitude: float, wavenumber: float = 1.0, x0: float = 0.0):
        a, k = amplitude, wavenumber
        return cls(
            f=lambda x: a * np.sin(k * np.asarray(x, dtype=float)),
            fprime=lambda x: a * k * np.cos(k * np.asarray(x, dtype=float)),
            fprime_bound=abs(a * k),
            holder_C=abs(a) * k * k * 1.0000001,
            holder_gamma=1.0,
            x0=x0,
            name=f"sine({a},{k})",
        )

    def validate(self, rng=None, n_pairs: int = 200, scale: float = 10.0):
        """Spot-check the profile's stated invariants on random pairs."""
        if not 0.5 < self.holder_gamma <= 1.0:
            raise DomainError("holder_gamma must lie in (1/2, 1]")
        if self.holder_C <= 0:
            raise DomainError("holder_C must be positive")
        if abs(float(self.f(0.0))) > 1e-12:
            raise DomainError("profile must satisfy f(0) = 0")
        rng = np.random.default_rng(0) if rng is None else rng
        x = rng.uniform(-scale, scale, n_pairs)
        y = rng.uniform(-scale, scale, n_pairs)
        fx, fy = self.fprime(x), self.fprime(y)
        if np.any(np.abs(fx) > self.fprime_bound * (1 + 1e-12) + 1e-15):
            raise DomainError("|f'| exceeds the declared bound")
        lhs = np.abs(fx - fy)
        rhs = self.holder_C * np.abs(x - y) ** self.holder_gamma
        if np.any(lhs > rhs * (1 + 1e-9) + 1e-15):
            raise DomainError("f' violates the declared Holder condition")
        return True

    def scaled(self, n: int):
        """``f^{(n)}(x) = n f(x / n)`` as a vectorized callable."""
        return lambda x: n * self.f(np.asarray(x, dtype=float) / n)


# ----------------------------------------------------------------------------
# quadrature plumbing


def _quad(func, a, b, spec: QuadratureSpec, what: str, points=None):
    if b <= a:
        return 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info, *rest = integrate.quad(
            func,
            a,
            b,
            epsabs=spec.abs_tol,
            epsrel=spec.rel_tol,
            limit=spec.max_subdivisions,
            points=points,
            full_output=1,
        )
    budget = max(spec.abs_tol, spec.rel_tol * abs(val))
    if not math.isfinite(val) or (rest and err > 100 * budget):
        raise NumericError(
            f"{what}: quadrature did not converge ({rest[0] if rest else 'nan'})",
            estimate=val,
            error_bound=err,
        )
    return float(val), float(err)


def _check_nu(nu):
    if not (nu > 0 and math.isfinite(nu)):
        raise DomainError(f"nu must be positive and finite, got {nu}")


def _check_norm(normalization):
    if normalization not in _NORMALIZATIONS:
        raise DomainError(f"unknown normalization {normalization!r}")


# ----------------------------------------------------------------------------
# elementary laws


def std_normal_cdf(x):
    """Standard normal distribution function."""
    return special.ndtr(x)


def scaled_normal_tail(z):
    """``e^{z^2/2} (1 - Phi(z))`` without overflow."""
    return 0.5 * special.erfcx(np.asarray(z, dtype=float) / SQRT2)


def first_passage_tail(x, t):
    """Probability that a variance-``2t`` Brownian motion from ``x`` avoids 0 up to ``t``.

    Equals ``2 Phi(|x| / sqrt(2t)) - 1``; zero at ``x = 0`` and tending to one
    as ``|x| -> inf``.
    """
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    return float(special.erf(abs(x) / (2.0 * math.sqrt(t))))


def hitting_cdf(x, t):
    """``2 - 2 Phi(|x| / sqrt(2t))``: probability the variance-2 motion from ``x`` hits 0 by ``t``."""
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    return float(special.erfc(abs(x) / (2.0 * math.sqrt(t))))


def local_time_tail(u, t, nu, x0=0.0, normalization="published"):
    r"""``P(Lambda_{x0}(t, 0) > u)`` for the sticky difference process.

    Zero whenever ``2 nu u >= t``. Otherwise the tail of the driver's local time
    at the shortened horizon ``t - 2 nu u``: ``2 - 2 Phi((|x0| + 2u) / (2 sqrt(t')))``
    in the published normalization, with ``2 sqrt(t')`` replaced by
    ``sqrt(2 t')`` under the occupation normalization.
    """
    _check_norm(normalization)
    _check_nu(nu)
    if not u >= 0:
        raise DomainError(f"u must be nonnegative, got {u}")
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    rem = t - 2.0 * nu * u
    if rem <= 0:
        return 0.0
    scale = 2.0 * math.sqrt(rem) if normalization == "published" else math.sqrt(2.0 * rem)
    return float(special.erfc((abs(x0) + 2.0 * u) / scale / SQRT2))


def mean_local_time_zero(t, nu, normalization="published"):
    r"""``E[Lambda_0(t, 0)]`` for the sticky difference process started at 0.

    Published form: ``sqrt(2/pi) sqrt(t) + nu (2 e^{t/2nu^2} [1 - Phi(sqrt t / nu)] - 1)``.
    Occupation form: ``sqrt(t/pi) + (nu/2) (2 e^{t/nu^2} [1 - Phi(sqrt(2t) / nu)] - 1)``.
    The bracket is evaluated through ``erfcx``.
    """
    _check_norm(normalization)
    _check_nu(nu)
    if not t >= 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if normalization == "published":
        lead = math.sqrt(2.0 * t / math.pi)
        return lead + nu * (float(special.erfcx(math.sqrt(t) / (SQRT2 * nu))) - 1.0)
    lead = math.sqrt(t / math.pi)
    return lead + 0.5 * nu * (float(special.erfcx(math.sqrt(t) / nu)) - 1.0)


def _mean_abs_sticky(u, nu, normalization):
    """``E|sticky BM from 0 at time u|`` = twice the mean local time."""
    return 2.0 * mean_local_time_zero(u, nu, normalization)


# ----------------------------------------------------------------------------
# covariance kernels of the 2-point motion


def _hitting_integral(x, t, fn, spec, what):
    """``E[fn(t - tau); tau <= t]`` where ``tau`` is the hitting time of 0 for a
    variance-2 Brownian motion from ``x``.

    Uses ``tau = x^2 / (2 Z^2)`` with ``Z`` standard normal, then ``Z = z0 + w^2``;
    ``fn`` receives ``sqrt(t - tau)`` so square-root behaviour at ``tau = t`` is
    linear in ``w``.
    """
    z0 = abs(x) / math.sqrt(2.0 * t)
    z_hi = max(z0 + 1.0, 12.0)
    w_hi = math.sqrt(z_hi - z0)
    rt = math.sqrt(t)

    def integrand(w):
        z = z0 + w * w
        root = rt * w * math.sqrt(z + z0) / z
        return 2.0 * 2.0 * w * fn(root) * INV_SQRT_2PI * math.exp(-0.5 * z * z)

    return _quad(integrand, 0.0, w_hi, spec, what)


def _cov_G(x, t, nu, spec=DEFAULT_QUAD):
    _check_nu(nu)
    if not t >= 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if t == 0:
        return 0.0, 0.0
    c = 2.0 * nu * math.sqrt(2.0 / math.pi)
    if x == 0:
        return c * math.sqrt(t), 0.0
    val, err = _hitting_integral(x, t, lambda root: root, spec, "cov_G")
    return c * val, c * err


def cov_G(x, t, nu, spec=DEFAULT_QUAD):
    r"""``G(x, t) = sqrt(2) nu \int_0^{2t/x^2} sqrt(2t - x^2 s) / (pi s^{3/2}) e^{-1/2s} ds``.

    Evaluated as ``2 nu sqrt(2/pi) E[sqrt(t - tau); tau <= t]`` with ``tau`` the
    variance-2 hitting time of 0 from ``x``. ``G(0, t) = 2 nu sqrt(2t/pi)``.
    """
    return _cov_G(x, t, nu, spec)[0]


def _cov_H(x, t, nu, spec=DEFAULT_QUAD):
    _check_nu(nu)
    if not t >= 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if t == 0:
        return 0.0, 0.0
    k = 1.0 / (SQRT2 * nu)

    def bracket(root):
        # 2 e^{u/2nu^2} [1 - Phi(sqrt(u)/nu)] - 1 with root = sqrt(u)
        return float(special.erfcx(root * k)) - 1.0

    c = 2.0 * nu * nu
    if x == 0:
        return c * bracket(math.sqrt(t)), 0.0
    val, err = _hitting_integral(x, t, bracket, spec, "cov_H")
    return c * val, c * err


def cov_H(x, t, nu, spec=DEFAULT_QUAD):
    r"""``H(x,t) = 2nu^2 \int_0^t {2 e^{(t-s)/2nu^2}[1 - Phi(sqrt(t-s)/nu)] - 1} dPsi(x, s)``

    where ``Psi(x, .)`` is the distribution function of the variance-2 hitting
    time of 0 from ``x``. Always ``-2 nu^2 <= H <= 0``.
    """
    return _cov_H(x, t, nu, spec)[0]


def two_point_cov(x, t, nu, normalization="published", spec=DEFAULT_QUAD):
    """``Cov(X^1_t, X^2_t)`` for the 2-point motion started at separation ``x``.

    ``"published"`` is ``G + H``. ``"occupation"`` is computed independently as
    ``nu E[m(t - tau); tau <= t]`` with ``m(u)`` the mean absolute value of the
    sticky difference process under the occupation normalization; it coincides
    with ``G + H`` evaluated at ``nu / sqrt 2``.
    """
    return _two_point_cov(x, t, nu, normalization, spec)[0]


def _two_point_cov(x, t, nu, normalization="published", spec=DEFAULT_QUAD):
    _check_norm(normalization)
    if normalization == "published":
        g, eg = _cov_G(x, t, nu, spec)
        h, eh = _cov_H(x, t, nu, spec)
        return g + h, eg + eh
    _check_nu(nu)
    if not t >= 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if t == 0:
        return 0.0, 0.0
    if x == 0:
        return nu * _mean_abs_sticky(t, nu, "occupation"), 0.0
    val, err = _hitting_integral(
        x, t, lambda root: _mean_abs_sticky(root * root, nu, "occupation"), spec,
        "two_point_cov",
    )
    return nu * val, nu * err


def _gamma_cov(p, q, nu, spec=DEFAULT_QUAD):
    _check_nu(nu)
    lo, hi = abs(p.t - q.t), p.t + q.t
    if hi == 0:
        return 0.0, 0.0
    d2 = (p.r - q.r) ** 2
    c = 2.0 * nu / SQRT_PI
    if d2 == 0:
        return c * (math.sqrt(hi) - math.sqrt(lo)), 0.0

    def integrand(w):
        return math.exp(-0.5 * d2 / (w * w)) if w > 0 else 0.0

    val, err = _quad(integrand, math.sqrt(lo), math.sqrt(hi), spec, "gamma_cov")
    return c * val, c * err


def gamma_cov(p: SpaceTimePoint, q: SpaceTimePoint, nu, spec=DEFAULT_QUAD):
    r"""``nu \int_{|t-s|}^{t+s} (pi u)^{-1/2} e^{-(r-q)^2/2u} du``."""
    return _gamma_cov(p, q, nu, spec)[0]


def _bm_above(z, r, t):
    """``P(B(t) > z - r)`` for standard Brownian motion; a step when ``t = 0``."""
    if t == 0:
        return 1.0 if z < r else 0.0
    return float(special.ndtr((r - z) / math.sqrt(t)))


def _bm_below(z, r, t):
    if t == 0:
        return 1.0 if z > r else 0.0
    return float(special.ndtr((z - r) / math.sqrt(t)))


def _gamma0_cov(p, q, spec=DEFAULT_QUAD):
    t, r, s, qq = p.t, p.r, q.t, q.r
    sd = math.sqrt(max(t, s))
    if sd == 0:
        return 0.0, 0.0
    top, bot = max(r, qq), min(r, qq)
    cut = TAIL_CUT_SD * sd
    v1, e1 = _quad(lambda z: _bm_above(z, r, t) * _bm_above(z, qq, s), top, top + cut, spec, "gamma0_cov")
    v4, e4 = _quad(lambda z: _bm_below(z, r, t) * _bm_below(z, qq, s), bot - cut, bot, spec, "gamma0_cov")
    v2 = e2 = 0.0
    if r > qq:
        v2, e2 = _quad(lambda z: _bm_below(z, r, t) * _bm_above(z, qq, s), qq, r, spec, "gamma0_cov")
    elif r < qq:
        v2, e2 = _quad(lambda z: _bm_above(z, r, t) * _bm_below(z, qq, s), r, qq, spec, "gamma0_cov")
    return v1 - v2 + v4, e1 + e2 + e4


def gamma0_cov(p: SpaceTimePoint, q: SpaceTimePoint, spec=DEFAULT_QUAD):
    """Covariance contributed by two-sided Brownian initial noise.

    Sum of four one-dimensional integrals of products of Gaussian tail
    probabilities. Infinite ranges are cut ``TAIL_CUT_SD`` standard deviations
    past the last breakpoint, where each integrand is below ``1e-19``.
    """
    return _gamma0_cov(p, q, spec)[0]


def z_limit_cov(p, q, nu, fprime_x0, spec=DEFAULT_QUAD):
    """``f'(x0)^2 Gamma(p, q) + Gamma0(p, q)``."""
    return _z_limit_cov(p, q, nu, fprime_x0, spec)[0]


def _z_limit_cov(p, q, nu, fprime_x0, spec=DEFAULT_QUAD):
    g, eg = _gamma_cov(p, q, nu, spec)
    g0, eg0 = _gamma0_cov(p, q, spec)
    c = fprime_x0 * fprime_x0
    return c * g + g0, c * eg + eg0


def kernel_matrix(points, kernel, nu=1.0, fprime_x0=0.0, spec=DEFAULT_QUAD):
    """Dense covariance matrix of ``kernel`` ('gamma', 'gamma0', 'z_limit') on ``points``."""
    fn = {
        "gamma": lambda a, b: gamma_cov(a, b, nu, spec),
        "gamma0": lambda a, b: gamma0_cov(a, b, spec),
        "z_limit": lambda a, b: z_limit_cov(a, b, nu, fprime_x0, spec),
    }.get(kernel)
    if fn is None:
        raise DomainError(f"unknown kernel {kernel!r}")
    k = len(points)
    out = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            out[i, j] = out[j, i] = fn(points[i], points[j])
    return out


def appendix_b_check(x, t, spec=DEFAULT_QUAD):
    r"""Evaluate both sides of

    ``\int_0^t sqrt(t-s)/(pi s^{3/2}) |x| e^{-x^2/2s} ds = \int_0^t (2 pi s)^{-1/2} e^{-x^2/2s} ds``

    by separate quadratures. Returns ``(lhs, rhs, gap)``. ``x = 0`` is excluded:
    the left side is then only defined as a limit.
    """
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    if x == 0:
        raise DomainError("x = 0 is excluded (left side defined only as a limit)")
    ax = abs(x)
    # lhs in z with s = x^2/z^2, then z = z0 + w^2
    z0 = ax / math.sqrt(t)
    z_hi = max(z0 + 1.0, 12.0)
    rt = math.sqrt(t)

    def lhs_integrand(w):
        z = z0 + w * w
        root = rt * w * math.sqrt(z + z0) / z
        return (2.0 / math.pi) * root * math.exp(-0.5 * z * z) * 2.0 * w

    lhs, _ = _quad(lhs_integrand, 0.0, math.sqrt(z_hi - z0), spec, "appendix_b lhs")
    c = math.sqrt(2.0 / math.pi)

    def rhs_integrand(w):
        return math.exp(-0.5 * ax * ax / (w * w)) if w > 0 else 0.0

    rhs, _ = _quad(rhs_integrand, 0.0, rt, spec, "appendix_b rhs")
    rhs *= c
    return lhs, rhs, abs(lhs - rhs)


# ----------------------------------------------------------------------------
# generic evaluation entry point (CLI, goldens)


def _pt(t, r):
    return SpaceTimePoint(float(t), float(r))


OPERATIONS = {
    "cdf": (("x",), lambda x: (float(std_normal_cdf(x)), 0.0)),
    "first_passage_tail": (("x", "t"), lambda x, t: (first_passage_tail(x, t), 0.0)),
    "local_time_tail": (
        ("u", "t", "nu", "x0"),
        lambda u, t, nu, x0: (local_time_tail(u, t, nu, x0), 0.0),
    ),
    "mean_local_time_zero": (("t", "nu"), lambda t, nu: (mean_local_time_zero(t, nu), 0.0)),
    "G": (("x", "t", "nu"), lambda x, t, nu: _cov_G(x, t, nu)),
    "H": (("x", "t", "nu"), lambda x, t, nu: _cov_H(x, t, nu)),
    "two_point_cov": (("x", "t", "nu"), lambda x, t, nu: _two_point_cov(x, t, nu)),
    "gamma": (
        ("t", "r", "s", "q", "nu"),
        lambda t, r, s, q, nu: _gamma_cov(_pt(t, r), _pt(s, q), nu),
    ),
    "gamma0": (("t", "r", "s", "q"), lambda t, r, s, q: _gamma0_cov(_pt(t, r), _pt(s, q))),
    "z_limit": (
        ("t", "r", "s", "q", "nu", "fprime"),
        lambda t, r, s, q, nu, fprime: _z_limit_cov(_pt(t, r), _pt(s, q), nu, fprime),
    ),
    "appendix_b": (
        ("x", "t"),
        lambda x, t: (lambda res: (res[2], 0.0))(appendix_b_check(x, t)),
    ),
}


def evaluate(op: str, **kwargs):
    """Evaluate operation ``op``; returns ``(value, estimated_error)``."""
    try:
        names, fn = OPERATIONS[op]
    except KeyError:
        raise DomainError(f"unknown operation {op!r}; choose from {sorted(OPERATIONS)}") from None
    missing = [n for n in names if n not in kwargs]
    if missing:
        raise DomainError(f"operation {op!r} needs arguments {missing}")
    return fn(*(float(kwargs[n]) for n in names))
