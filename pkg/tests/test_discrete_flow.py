"""Lattice model: environments, kernels, webs, smoothing and fluctuation observables."""
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hwflow.analytics import InitialProfile
from hwflow.analytics import SpaceTimePoint as P
from hwflow.discrete_flow import (
    ArrowConfig,
    EnvDistribution,
    Environment,
    RowLayout,
    build_dual_web,
    chapman_kolmogorov_gap,
    check_noncrossing,
    corrupt_dual,
    current_fluctuations,
    current_identity_check,
    dual_cdf_from_forward,
    dual_distribution,
    evolve_smoothing,
    exact_current_covariance,
    gen_environment,
    initial_state,
    lattice_point,
    pair_collision_probability,
    parity_round,
    propagate_kernel,
    quenched_mean_field,
    quenched_mean_fluctuations,
    sample_web,
    two_sided_walk,
)
from hwflow.errors import DomainError
from hwflow.mc_harness.stats import fit_scaling
from hwflow.seeding import derive_rng

FIXTURES = Path(__file__).parent / "fixtures"
BETA22 = EnvDistribution.beta(2, 2)
UNIF = EnvDistribution.uniform()


# ----------------------------------------------------------------------------
# environments


def test_deterministic_environment_is_constant():
    env = gen_environment((-5, 5, 0, 4), EnvDistribution.deterministic(0.5), seed=1)
    assert np.all(env.values == 0.5)


def test_beta_environment_mean():
    env = gen_environment((0, 631, 0, 316), BETA22, seed=2)
    v = env.values
    assert v.size >= 100_000
    assert np.all((v >= 0) & (v <= 1))
    se = math.sqrt(BETA22.var / v.size)
    assert abs(v.mean() - 0.5) <= 3 * se


def test_environment_determinism_and_streams():
    a = gen_environment((-10, 10, 0, 10), UNIF, seed=5)
    b = gen_environment((-10, 10, 0, 10), UNIF, seed=5)
    c = gen_environment((-10, 10, 0, 10), UNIF, seed=6)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_sites_have_even_parity():
    env = gen_environment((-3, 4, -2, 3), UNIF, seed=0)
    lay = env.layout
    for t in range(-2, 4):
        assert np.all((lay.positions(t) + t) % 2 == 0)
    with pytest.raises(DomainError):
        env.omega_at(0, 1)


def test_environment_json_round_trip():
    env = gen_environment((-6, 7, -3, 5), BETA22, seed=9)
    text = env.to_json()
    assert "values" not in json.loads(text)
    back = Environment.from_json(text)
    assert back.window == env.window
    assert np.array_equal(back.values, env.values)


def test_distribution_moments():
    d = EnvDistribution.beta(2, 3)
    assert d.mean == pytest.approx(0.4)
    assert d.second_moment == pytest.approx(2 * 3 / (5 * 5 * 6) + 0.16)
    assert d.drift == pytest.approx(-0.2)
    assert d.sigma0_sq == pytest.approx(4 * d.var)
    tp = EnvDistribution.two_point(0.2, 0.9, 0.25)
    assert tp.mean == pytest.approx(0.25 * 0.2 + 0.75 * 0.9)
    assert EnvDistribution.from_dict(tp.to_dict()) == tp
    with pytest.raises(DomainError):
        EnvDistribution.beta(0, 1)
    with pytest.raises(DomainError):
        EnvDistribution.deterministic(1.5)


def test_parity_rounding_ties_go_down():
    assert parity_round(1.0, 0) == 0
    assert parity_round(3.0, 0) == 2
    assert parity_round(-1.0, 0) == -2
    assert parity_round(2.0, 1) == 1
    assert parity_round(2.1, 1) == 3


# ----------------------------------------------------------------------------
# kernels


def test_kernel_identity_at_zero_horizon():
    env = gen_environment((-4, 4, 0, 3), UNIF, seed=1)
    k = propagate_kernel(env, (2, 0), 0)
    assert k.as_dict() == {2: 1.0}


def test_kernel_simple_random_walk():
    env = gen_environment((-4, 4, 0, 3), EnvDistribution.deterministic(0.5), seed=1)
    assert propagate_kernel(env, (0, 0), 2).as_dict() == {-2: 0.25, 0: 0.5, 2: 0.25}


def test_kernel_parity_and_window_errors():
    env = gen_environment((-4, 4, 0, 3), UNIF, seed=1)
    with pytest.raises(DomainError):
        propagate_kernel(env, (1, 0), 2)
    with pytest.raises(DomainError):
        propagate_kernel(env, (0, 0), 9)


@pytest.mark.parametrize("seed", range(20))
def test_chapman_kolmogorov(seed):
    rng = derive_rng(seed, "ck-test")
    t = int(rng.integers(2, 33))
    u = int(rng.integers(0, t + 1))
    env = gen_environment((-40, 40, 0, 32), BETA22, seed=seed)
    assert chapman_kolmogorov_gap(env, (0, 0), u, t) <= 1e-12


def test_kernel_mass_and_support():
    env = gen_environment((-30, 30, 0, 25), UNIF, seed=3)
    k = propagate_kernel(env, (4, 0), 25)
    assert abs(k.probs.sum() - 1) <= 1e-12
    assert np.all(np.abs(k.support - 4) <= 25)
    assert np.all((k.support + 25) % 2 == 0)


def test_kernel_translation_invariance_in_law():
    reps = 10_000
    a = np.empty((reps, 3))
    b = np.empty((reps, 3))
    for i in range(reps):
        env = gen_environment((-1, 5, 0, 3), UNIF, seed=i)
        a[i] = propagate_kernel(env, (0, 0), 2).probs
        b[i] = propagate_kernel(env, (2, 2), 4).probs
    for j in range(3):
        for f in (lambda v: v, np.square):
            x, y = f(a[:, j]), f(b[:, j])
            se = math.sqrt(x.var(ddof=1) / reps + y.var(ddof=1) / reps)
            assert abs(x.mean() - y.mean()) <= 3 * se


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), x=st.integers(-5, 5), gap=st.integers(1, 6))
def test_monotone_coupling(seed, x, gap):
    env = gen_environment((-40, 40, 0, 12), UNIF, seed=seed)
    lo, hi = 2 * x, 2 * x + 2 * gap
    ka = propagate_kernel(env, (lo, 0), 12)
    kb = propagate_kernel(env, (hi, 0), 12)
    for y in range(lo - 14, hi + 15):
        assert ka.cdf_above(y) <= kb.cdf_above(y) + 1e-12


def test_dual_kernel_is_bona_fide():
    env = gen_environment((-30, 30, 0, 10), BETA22, seed=4)
    s, t = 0, 10
    for z in range(-9, 10, 2):  # odd site (z, t)
        ys = np.arange(-20, 21, 2)
        cdf = np.array([dual_cdf_from_forward(env, int(y), s, z, t) for y in ys])
        assert np.all((cdf >= -1e-12) & (cdf <= 1 + 1e-12))
        assert np.all(np.diff(cdf) >= -1e-12)
        assert cdf[0] <= 1e-12 and abs(cdf[-1] - 1) <= 1e-12
        # the dual walk itself has exactly this law
        pos, pr = dual_distribution(env, z, t, s)
        direct = np.array([pr[pos < y].sum() for y in ys])
        assert np.max(np.abs(direct - cdf)) <= 1e-12
    for y in (-4, 0, 6):
        vals = [dual_cdf_from_forward(env, y, s, z, t) for z in range(-15, 16, 2)]
        assert np.all(np.diff(vals) <= 1e-12)


def test_dual_distribution_errors():
    env = gen_environment((-5, 5, 0, 4), UNIF, seed=0)
    with pytest.raises(DomainError):
        dual_distribution(env, 0, 4, 0)
    with pytest.raises(DomainError):
        dual_distribution(env, 1, 2, 3)


def test_quenched_mean_field_constant_environments():
    env = gen_environment((-20, 20, 0, 10), EnvDistribution.deterministic(0.5), seed=0)
    m = quenched_mean_field(env, 10)
    for x in (-4, 0, 6):
        assert m.value(x, 0) == pytest.approx(x, abs=1e-12)
    env = gen_environment((-30, 30, 0, 10), EnvDistribution.deterministic(0.8), seed=0)
    m = quenched_mean_field(env, 10)
    for x, s in ((0, 0), (3, 3), (-2, 6)):
        assert m.value(x, s) == pytest.approx(x + (10 - s) * 0.6, abs=1e-12)
    with pytest.raises(DomainError):
        m.value(1, 0)


def test_quenched_mean_matches_kernel():
    env = gen_environment((-30, 30, 0, 15), UNIF, seed=8)
    m = quenched_mean_field(env, 15)
    k = propagate_kernel(env, (2, 0), 15)
    assert m.value(2, 0) == pytest.approx(float(k.support @ k.probs), abs=1e-12)


def test_variance_identity_small_scale():
    n, reps = 256, 4000
    sample = quenched_mean_fluctuations(UNIF, n, [P(1.0, 0.0)], reps, seed=21)
    raw = sample.values[:, 0] * n ** 0.25  # E^w X_n - n beta
    v = raw.var(ddof=1)
    se = v * math.sqrt(2 / (reps - 1))  # near-Gaussian variance standard error
    oracle = UNIF.sigma0_sq * pair_collision_probability(UNIF, n).sum()
    assert abs(v - oracle) <= 3 * se


# ----------------------------------------------------------------------------
# pair collisions


def _return_probability_oracle(n):
    step = np.array([0.25, 0.5, 0.25])  # difference of two +-1 walks, in units of 2
    dist = np.array([1.0])
    out = []
    for _ in range(n):
        out.append(dist[dist.size // 2])
        dist = np.convolve(dist, step)
    return np.array(out)


def test_pair_collision_basics():
    p = pair_collision_probability(BETA22, 10)
    assert p[0] == 1.0
    assert np.all((p > 0) & (p <= 1))
    np.testing.assert_allclose(pair_collision_probability(EnvDistribution.deterministic(0.5), 60),
                               _return_probability_oracle(60), atol=1e-14)
    with pytest.raises(DomainError):
        pair_collision_probability(BETA22, 0)


@pytest.mark.parametrize("dist", [BETA22, UNIF, EnvDistribution.two_point(0.1, 0.8, 0.5)])
def test_pair_collision_decay_slope(dist):
    p = pair_collision_probability(dist, 257)
    k = np.arange(16, 257)
    fit = fit_scaling(k, p[16:257])
    assert -0.6 <= fit.slope <= -0.4


def test_collision_sum_scaling():
    ns = np.array([64, 256, 1024, 4096])
    sums = [pair_collision_probability(UNIF, int(n)).sum() for n in ns]
    assert 0.4 <= fit_scaling(ns, sums).slope <= 0.6


# ----------------------------------------------------------------------------
# webs


def test_all_right_web():
    env = gen_environment((-10, 10, 0, 8), EnvDistribution.deterministic(1.0), seed=0)
    web = sample_web(env, 3)
    assert web.right.all()
    np.testing.assert_array_equal(web.path(-4, 0, 6), -4 + np.arange(7))
    dual = build_dual_web(web)
    assert dual.left.all()


def test_arrow_frequency():
    env = gen_environment((0, 0, 0, 0), EnvDistribution.deterministic(0.7), seed=0)
    hits = sum(sample_web(env, 0, key=("web", i)).arrow(0, 0) for i in range(10_000))
    se = math.sqrt(0.7 * 0.3 / 10_000)
    assert abs(hits / 10_000 - 0.7) <= 3 * se


def test_coalescence():
    env = gen_environment((-40, 40, 0, 40), UNIF, seed=12)
    web = sample_web(env, 1)
    merged = 0
    for x in range(-20, 20, 2):
        a = web.path(x, 0, 30)
        b = web.path(x + 2, 0, 30)
        n = min(a.size, b.size)
        meet = np.flatnonzero(a[:n] == b[:n])
        if meet.size:
            merged += 1
            np.testing.assert_array_equal(a[meet[0]:n], b[meet[0]:n])
        assert np.all(a[:n] <= b[:n])
    assert merged > 0


def test_web_determinism():
    env = gen_environment((-10, 10, 0, 10), UNIF, seed=0)
    a, b = sample_web(env, 4), sample_web(env, 4)
    assert np.array_equal(a.right, b.right)
    assert np.array_equal(build_dual_web(a).left, build_dual_web(a).left)


def test_dual_web_hand_fixture():
    fx = json.loads((FIXTURES / "dual_2x2.json").read_text())
    lay = RowLayout.rectangle(*fx["window"])
    right = np.zeros(lay.size, dtype=bool)
    for key, val in fx["forward_right"].items():
        x, t = (int(v) for v in key.split(","))
        r = lay.row(t)
        right[lay.offset[r] + (x - lay.lo[r]) // 2] = val
    dual = build_dual_web(ArrowConfig(lay, right))
    for step in fx["dual_steps"]:
        (x, t), (x_end, t_end) = step["from"], step["to"]
        assert t_end == t - 1
        assert (x_end == x - 1) == dual.arrow_left(x, t)
    assert check_noncrossing(ArrowConfig(lay, right), dual) == (True, None)


def test_noncrossing_random_webs():
    window = (0, 99, 0, 99)
    for seed in range(100):
        env = gen_environment(window, UNIF, seed=seed)
        web = sample_web(env, seed)
        ok, witness = check_noncrossing(web, build_dual_web(web))
        assert ok and witness is None


def test_noncrossing_detects_corruption():
    env = gen_environment((0, 39, 0, 39), UNIF, seed=3)
    web = sample_web(env, 3)
    dual = build_dual_web(web)
    for index in (0, 37, 401, web.right.size - 1):
        ok, witness = check_noncrossing(web, corrupt_dual(dual, index))
        assert not ok
        (x, t, xf), (y, s, yd) = witness
        assert s == t + 1 and abs(xf - x) == 1 and abs(yd - y) == 1
        assert (x - yd) * (xf - y) < 0


def test_noncrossing_one_column_window():
    env = gen_environment((0, 0, 0, 0), UNIF, seed=0)
    web = sample_web(env, 0)
    assert check_noncrossing(web, build_dual_web(web)) == (True, None)


def test_noncrossing_window_mismatch():
    a = sample_web(gen_environment((0, 9, 0, 9), UNIF, seed=0), 0)
    b = build_dual_web(sample_web(gen_environment((0, 11, 0, 9), UNIF, seed=0), 0))
    with pytest.raises(DomainError):
        check_noncrossing(a, b)


def test_dual_paths_do_not_cross_forward_paths():
    env = gen_environment((-30, 30, 0, 30), BETA22, seed=7)
    web = sample_web(env, 7)
    dual = build_dual_web(web)
    fwd = web.path(0, 0, 20)
    for z in range(-13, 14, 2):
        back = dual.path(z, 20, 0)  # positions at times 20, 19, ..., 0
        side = np.sign(back[::-1][: fwd.size] - fwd)
        assert np.all(side == side[0])


# ----------------------------------------------------------------------------
# smoothing and currents


def _smoothing_env(t, seed, dist=UNIF):
    return gen_environment((-60, 60, -t, -1), dist, seed=seed)


def test_smoothing_constant_profile():
    env = _smoothing_env(15, 1)
    grid = np.arange(-60, 61, 2)
    z = evolve_smoothing(env, initial_state(grid, np.full(grid.size, 3.25)), 15)
    vals = np.array(list(z.as_dict().values()))
    assert vals.size > 0
    np.testing.assert_allclose(vals, 3.25, atol=1e-12)


def test_smoothing_linear_profile_is_quenched_mean():
    t = 12
    env = _smoothing_env(t, 2)
    grid = np.arange(-60, 61, 2)
    z = evolve_smoothing(env, initial_state(grid, grid.astype(float)), t)
    m = quenched_mean_field(env, 0, -t)
    for x in range(-20, 21, 2):
        assert z.value(x) == pytest.approx(m.value(x, -t), abs=1e-12)


def test_smoothing_min_max_preservation():
    t = 10
    for seed in range(100):
        env = _smoothing_env(t, seed, BETA22)
        grid = np.arange(-60, 61, 2)
        z0 = derive_rng(seed, "profile").normal(size=grid.size)
        z = evolve_smoothing(env, initial_state(grid, z0), t).as_dict()
        for x, v in z.items():
            cone = np.abs(grid - x) <= t
            assert z0[cone].min() - 1e-12 <= v <= z0[cone].max() + 1e-12


def test_smoothing_errors():
    env = _smoothing_env(5, 0)
    z0 = initial_state([0, 2, 4], [1.0, 2.0, 3.0])
    with pytest.raises(DomainError):
        evolve_smoothing(env, z0, 9)
    with pytest.raises(DomainError):
        initial_state([0, 4], [1.0, 2.0])
    z = evolve_smoothing(env, z0, 0)
    assert z.as_dict() == {0: 1.0, 2: 2.0, 4: 3.0}
    with pytest.raises(DomainError):
        evolve_smoothing(env, z0, 5).value(0)  # cone leaves the supplied data


def test_current_single_atom():
    env = _smoothing_env(10, 3)
    lhs, rhs, gap = current_identity_check(env, {-1: 2.5}, 0, -30, 10)
    assert lhs == pytest.approx(-2.5) and rhs == pytest.approx(-2.5)
    assert gap <= 1e-12


def test_current_zero_time():
    env = _smoothing_env(4, 0)
    assert current_identity_check(env, {3: 1.0, -5: 2.0}, 0, 0, 0) == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("method", ["forward", "dual"])
def test_current_identity_random(method):
    for seed in range(100):
        rng = derive_rng(seed, "current-test")
        t = int(rng.integers(1, 21))
        env = _smoothing_env(20, seed, BETA22)
        atoms = {int(2 * rng.integers(-15, 15) + 1): float(rng.exponential()) for _ in range(10)}
        x = int(2 * rng.integers(-8, 9))
        y = int(2 * rng.integers(-8, 9) + t % 2)
        _, _, gap = current_identity_check(env, atoms, x, y, t, method=method)
        assert gap <= 1e-10


def test_current_identity_errors():
    env = _smoothing_env(4, 0)
    with pytest.raises(DomainError):
        current_identity_check(env, {1: 1.0}, 1, 0, 2)
    with pytest.raises(DomainError):
        current_identity_check(env, {1: 1.0}, 0, 0, 2, method="sideways")
    with pytest.raises(DomainError):
        current_identity_check(env, {2: 1.0}, 0, 0, 2)


# ----------------------------------------------------------------------------
# fluctuation observables


@pytest.mark.parametrize("p", [0.5, 0.7])
def test_quenched_mean_deterministic_is_zero(p):
    s = quenched_mean_fluctuations(EnvDistribution.deterministic(p), 64,
                                   [P(1.0, 0.0), P(0.5, 1.0), P(2.0, -0.5)], 5, seed=0)
    assert s.values.shape == (5, 3)
    np.testing.assert_allclose(s.values, 0.0, atol=1e-9)


def test_quenched_mean_is_centered():
    reps = 10_000
    s = quenched_mean_fluctuations(UNIF, 64, [P(1.0, 0.0)], reps, seed=3)
    v = s.values[:, 0]
    assert abs(v.mean()) <= 3 * v.std(ddof=1) / math.sqrt(reps)


def test_quenched_mean_chunking_and_offsets():
    pts = [P(1.0, 0.0), P(1.0, 0.5)]
    full = quenched_mean_fluctuations(BETA22, 64, pts, 40, seed=2, chunk=5)
    again = quenched_mean_fluctuations(BETA22, 64, pts, 40, seed=2, chunk=5)
    one = quenched_mean_fluctuations(BETA22, 64, pts, 40, seed=2, chunk=64)
    tail = quenched_mean_fluctuations(BETA22, 64, pts, 15, seed=2, first=25, chunk=5)
    assert np.array_equal(full.values, again.values)
    # batch width only changes floating-point summation order
    np.testing.assert_allclose(full.values, one.values, rtol=0, atol=1e-14)
    np.testing.assert_allclose(full.values[25:], tail.values, rtol=0, atol=1e-14)


def test_lattice_rounding():
    lp = lattice_point(P(1.0, 0.5), 100, beta=0.2)
    assert lp.N == 100
    assert lp.start == parity_round(5.0 - 20.0, 0)
    assert (lp.start + lp.N) % 2 == 0
    assert lp.anchor == 4  # 5 is a tie between 4 and 6


def test_two_sided_walk():
    w = two_sided_walk(derive_rng(0, "w"), -10, 20)
    assert w.size == 16 and w[5] == 0
    assert set(np.abs(np.diff(w))) <= {0.0, 2.0}
    with pytest.raises(DomainError):
        two_sided_walk(derive_rng(0, "w"), 2, 4)
    # unit variance per lattice unit
    ends = np.array([two_sided_walk(derive_rng(i, "w"), 0, 40)[-1] for i in range(4000)])
    se = 40 * math.sqrt(2 / 3999)
    assert abs(ends.var(ddof=1) - 40) <= 3 * se


def test_current_zero_everything():
    s = current_fluctuations(UNIF, InitialProfile.zero(), 64, [P(1.0, 0.0), P(0.5, 1.0)], 10, seed=0,
                             include_noise=False)
    assert np.all(s.values == 0.0)


def test_current_linear_profile_proportional_to_quenched_mean():
    c = 1.7
    pts = [P(1.0, 0.0), P(0.5, 1.0), P(1.0, -0.75)]
    n = 64
    z = current_fluctuations(BETA22, InitialProfile.linear(c), n, pts, 30, seed=4, include_noise=False)
    a = quenched_mean_fluctuations(BETA22, n, pts, 30, seed=4)
    offset = np.array([lp.start + BETA22.drift * lp.N - lp.anchor for lp in z.lattice]) * n ** -0.25
    np.testing.assert_allclose(z.values, c * (a.values + offset), atol=1e-12)


def test_current_covariance_matches_exact_oracle():
    n, reps = 256, 4000
    prof = InitialProfile.sine(1.0)
    p, q = P(1.0, 0.0), P(1.0, 0.5)
    s = current_fluctuations(BETA22, prof, n, [p, q], reps, seed=8)
    u, v = s.values[:, 0] - s.values[:, 0].mean(), s.values[:, 1] - s.values[:, 1].mean()
    prod = u * v
    est = prod.sum() / (reps - 1)
    se = prod.std(ddof=1) / math.sqrt(reps)
    exact, parts = exact_current_covariance(BETA22, prof, n, p, q)
    assert set(parts) == {"profile", "noise"}
    assert exact == pytest.approx(sum(parts.values()))
    assert abs(est - exact) <= 3 * se


def test_exact_oracle_requires_common_time():
    with pytest.raises(DomainError):
        exact_current_covariance(UNIF, InitialProfile.zero(), 16, P(1.0, 0.0), P(0.5, 0.0))


def test_exact_oracle_noise_only_at_zero_time_is_zero():
    cov, _ = exact_current_covariance(UNIF, InitialProfile.zero(), 16, P(0.0, 0.0), P(0.0, 1.0))
    assert cov == 0.0


def test_quenched_mean_marginal_looks_gaussian():
    s = quenched_mean_fluctuations(UNIF, 256, [P(1.0, 0.0)], 2000, seed=1)
    v = s.values[:, 0]
    res = stats.kstest((v - v.mean()) / v.std(ddof=1), "norm")
    assert res.pvalue > 0.01
