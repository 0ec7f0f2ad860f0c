"""Acceptance suite: one test per release criterion, each printing a PASS/FAIL line.

Thresholds are fixed in advance and are not tuned to the outcome. When a
criterion fails, the test fails.
"""
import math

import numpy as np
import pytest
from scipy import integrate

from hwflow import analytics as an
from hwflow import sticky_sim
from hwflow.analytics import SpaceTimePoint as P
from hwflow.analytics import StickyParams
from hwflow.discrete_flow import (
    EnvDistribution,
    build_dual_web,
    chapman_kolmogorov_gap,
    check_noncrossing,
    current_identity_check,
    gen_environment,
    sample_web,
)
from hwflow.mc_harness import ExperimentConfig, run_experiment
from hwflow.mc_harness.stats import covariance_matrix
from hwflow.seeding import derive_rng

UNIFORM = {"kind": "beta", "a": 1.0, "b": 1.0}


@pytest.fixture
def emit(capsys):
    def _emit(label, ok, detail, extra=()):
        with capsys.disabled():
            print()
            for line in extra:
                print(f"  {line}")
            print(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
        assert ok, f"{label}: {detail}"
    return _emit


def experiment(doc, jobs=1):
    return run_experiment(ExperimentConfig.from_dict(doc), jobs=jobs)


def check_line(res, name):
    return res.checks[name].line()


# ----------------------------------------------------------------------------


def test_criterion_1_exact_identities(emit):
    uni = EnvDistribution.uniform()
    ck = 0.0
    for i in range(100):
        rng = derive_rng(1, "acc-ck", i)
        t = int(rng.integers(1, 33))
        u = int(rng.integers(0, t + 1))
        env = gen_environment((-t - 2, t + 2, 0, t), uni, seed=1, key=("acc-ck-env", i))
        ck = max(ck, chapman_kolmogorov_gap(env, (0, 0), u, t))
    cur = 0.0
    for i in range(100):
        rng = derive_rng(1, "acc-current", i)
        t = int(rng.integers(0, 21))
        env = gen_environment((-60, 60, -20, -1), uni, seed=1, key=("acc-cur-env", i))
        atoms = {int(2 * rng.integers(-15, 15) + 1): float(rng.exponential()) for _ in range(10)}
        x = int(2 * rng.integers(-8, 9))
        y = int(2 * rng.integers(-8, 9) + t % 2)
        cur = max(cur, current_identity_check(env, atoms, x, y, t)[2])
    crossings = 0
    for i in range(1000):
        env = gen_environment((0, 99, 0, 99), uni, seed=1, key=("acc-web-env", i))
        web = sample_web(env, 1, key=("acc-web", i))
        crossings += not check_noncrossing(web, build_dual_web(web))[0]
    ok = ck <= 1e-12 and cur <= 1e-10 and crossings == 0
    emit("criterion 1 exact identities", ok,
         f"CK max gap={ck:.3g} (<= 1e-12), current max gap={cur:.3g} (<= 1e-10), "
         f"crossing pairs={crossings}/1000")


def test_criterion_2_formula_cross_checks(emit):
    rng = np.random.default_rng(2)
    g_gap = 0.0
    for _ in range(50):
        t = rng.uniform(0.1, 5)
        x1, x2 = rng.uniform(-3, 3, size=2)
        nu = rng.uniform(0.2, 3)
        g_gap = max(g_gap, abs(an.gamma_cov(P(t, x1), P(t, x2), nu) - an.cov_G(x1 - x2, t, nu)))
    b_gap = max(an.appendix_b_check(x, t)[2] for x in np.geomspace(1e-3, 10, 9) for t in np.geomspace(1e-2, 1e2, 5))
    m_gap = 0.0
    for t in (0.1, 1.0, 10.0, 100.0):
        oracle, _ = integrate.quad(lambda u: an.local_time_tail(u, t, 1.0, 0.0), 0, t / 2,
                                   epsabs=1e-13, epsrel=1e-12, limit=200)
        m_gap = max(m_gap, abs(oracle - an.mean_local_time_zero(t, 1.0)))
    h_ratio = 0.0
    d_ratio = 0.0
    h = 1e-5
    for _ in range(200):
        x = rng.uniform(-4, 4)
        t = rng.uniform(0.05, 5)
        nu = rng.uniform(0.1, 3)
        h_ratio = max(h_ratio, abs(an.cov_H(x, t, nu)) / (6 * nu * nu))
        if abs(x) > 10 * h:
            d = (an.cov_G(x + h, t, nu) - an.cov_G(x - h, t, nu)) / (2 * h)
            d_ratio = max(d_ratio, abs(d) / (2 * nu))
    ok = g_gap <= 1e-8 and b_gap <= 1e-8 and m_gap <= 1e-8 and h_ratio <= 1 and d_ratio <= 1
    emit("criterion 2 formula cross-checks", ok,
         f"|Gamma-G|={g_gap:.2g}, appendix gap={b_gap:.2g}, mean-local-time vs tail integral={m_gap:.2g} "
         f"(all <= 1e-8); max |H|/6nu^2={h_ratio:.3f}, max |dG/dx|/2nu={d_ratio:.3f} (<= 1)")


def test_criterion_3_continuum_mc_vs_closed_forms(emit):
    doc = {"experiment": "two_point_cov", "replicates": 100_000, "master_seed": 3,
           "params": {"nu": 1.0, "beta": 0.0, "start": [0.0, 0.0], "dt": 1e-4, "reference": "published",
                      "tail_u": [0.1, 0.3, 0.6]}}
    res = experiment(doc)
    names = ["cov_vs_published", "meet_vs_published",
             "tail_u0.1_vs_published", "tail_u0.3_vs_published", "tail_u0.6_vs_published"]
    failed = [n for n in names if not res.checks[n].passed]
    diag = [check_line(res, n) for n in names]
    diag += ["occupation-normalized references for the same sample:"]
    diag += [check_line(res, n.replace("published", "occupation")) for n in names]
    st = res.statistics
    emit("criterion 3 continuum MC vs closed forms", not failed,
         f"cov={st['cov_x1_x2']['value']:.4f}+-{st['cov_x1_x2']['se']:.4f} vs G+H={st['references']['published']['cov']:.4f}; "
         f"meet={st['meet_occupation']['mean']:.4f}+-{st['meet_occupation']['mean_se']:.4f} vs "
         f"{st['references']['published']['meet']:.4f}; failing: {failed or 'none'}",
         extra=diag)


def test_criterion_4_return_probability_decay(emit):
    res = experiment({"experiment": "return_decay", "replicates": 20_000, "master_seed": 4,
                      "params": {"nu": 1.0, "t_block": 1.0, "fit_range": [8, 64], "n_blocks": 65,
                                 "slope_band": [-0.65, -0.35]}})
    c = res.checks["slope_in_band"]
    emit("criterion 4 return-probability decay", c.passed,
         f"slope={c.statistic:.4f} (stderr {res.fits['return_slope']['stderr']:.3g}) in [-0.65, -0.35]")


def test_criterion_5_discrete_variance_identity(emit):
    res = experiment({"experiment": "quenched_mean", "scales": [64, 256, 1024, 4096],
                      "replicates": 10_000, "master_seed": 5,
                      "params": {"dist": UNIFORM, "points": [[1, 0]], "ks_scale": 256,
                                 "replicates_per_scale": {"1024": 4000, "4096": 1000}}})
    ident = res.checks["variance_identity_n256"]
    slope = res.checks["variance_slope_in_band"]
    e = res.statistics["scales"]["256"]
    emit("criterion 5 discrete variance identity", ident.passed and slope.passed,
         f"n=256: Var={e['var_unrescaled']:.4f}+-{e['var_unrescaled_se']:.4f} vs "
         f"sigma0^2 sum p_k={e['variance_identity']:.4f} (|z|={ident.statistic:.2f} <= 3); "
         f"slope over 64..4096={slope.statistic:.4f} in [0.4, 0.6]")


def test_criterion_6_fluctuation_theorems(emit):
    qm = experiment({"experiment": "quenched_mean", "scales": [1024], "replicates": 10_000, "master_seed": 6,
                     "params": {"dist": UNIFORM, "points": [[1, 0]]}})
    add = experiment({"experiment": "current", "scales": [256], "replicates": 10_000, "master_seed": 6,
                      "params": {"dist": UNIFORM, "points": [[1, 0]],
                                 "profile": {"kind": "linear", "slope": 1.0}}})
    zks = experiment({"experiment": "current", "scales": [1024], "replicates": 10_000, "master_seed": 6,
                      "params": {"dist": UNIFORM, "points": [[1, 0]], "additivity_scales": [],
                                 "profile": {"kind": "linear", "slope": 1.0}, "ks_scale": 1024}})
    a_ks = qm.checks["ks_normal_n1024"]
    gap = add.checks["variance_additivity_n256"]
    z_ks = zks.checks["ks_normal_n1024"]
    ok = a_ks.passed and gap.passed and z_ks.passed
    emit("criterion 6 fluctuation theorems", ok,
         f"a_n KS={a_ks.statistic:.4f} (1% crit {a_ks.threshold:.4f}); additivity |z|={gap.statistic:.2f} (<= 3); "
         f"z_n KS={z_ks.statistic:.4f} (1% crit {z_ks.threshold:.4f})")


def test_criterion_7_limit_field_sampler(emit):
    pts = [P(1.0, 0.0), P(1.0, 0.5), P(2.0, 0.0), P(0.5, -1.0)]
    prm = StickyParams(1.0)
    worst = {}
    for kernel, fprime in (("gamma", 0.0), ("gamma0", 0.0), ("z_limit", 0.8)):
        draws = sticky_sim.sample_gaussian_field(pts, kernel, prm, fprime, seed=7, n_draws=100_000)
        C, S = covariance_matrix(draws)
        K = an.kernel_matrix(pts, kernel, nu=1.0, fprime_x0=fprime)
        iu = np.triu_indices(len(pts))
        worst[kernel] = float(np.max(np.abs(C[iu] - K[iu]) / S[iu]))
    ok = all(v <= 3 for v in worst.values())
    emit("criterion 7 limit-field sampler", ok,
         ", ".join(f"{k} max |z|={v:.2f}" for k, v in worst.items()) + " (<= 3)")


def test_criterion_8_reproducibility(emit):
    docs = [
        {"experiment": "qip", "scales": [16, 64, 256], "params": {"environments": 4}},
        {"experiment": "quenched_mean", "scales": [16, 64, 256], "replicates": 200, "chunk_size": 16},
        {"experiment": "current", "scales": [64], "replicates": 150, "params": {"oracle": True}},
        {"experiment": "two_point_cov", "replicates": 400, "chunk_size": 100, "params": {"dt": 0.005}},
        {"experiment": "local_time", "replicates": 100, "chunk_size": 25, "params": {"dt": 0.001}},
        {"experiment": "return_decay", "replicates": 300, "chunk_size": 64,
         "params": {"n_blocks": 17, "fit_range": [2, 16], "dt": 0.02}},
        {"experiment": "quenched_mean", "model": "continuum", "replicates": 2000, "chunk_size": 500},
    ]
    differing = []
    for doc in docs:
        doc = {**doc, "master_seed": 8}
        serial = experiment(doc, jobs=1).payload_json()
        if experiment(doc, jobs=2).payload_json() != serial or experiment(doc, jobs=1).payload_json() != serial:
            differing.append(doc["experiment"])
    emit("criterion 8 reproducibility", not differing,
         f"{len(docs) - len(differing)}/{len(docs)} experiments bit-identical across reruns and --jobs 1/2"
         + (f"; differing: {differing}" if differing else ""))
