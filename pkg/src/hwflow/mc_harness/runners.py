"""Experiment runners.

Each replicate owns a random stream derived from the experiment seed and its
index, and per-replicate outputs are gathered in replicate order before any
statistic is computed, so results do not depend on chunking or on the number
of worker processes.
"""
from __future__ import annotations

import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy import stats as sps

from .. import analytics, sticky_sim
from ..analytics import InitialProfile, SpaceTimePoint, StickyParams
from ..discrete_flow import env as denv
from ..discrete_flow import fluctuations as dfluct
from ..discrete_flow.kernels import forward_step, pair_collision_probability
from ..errors import ConfigError, DomainError
from .config import ExperimentConfig, get_param
from .result import Check, EnsembleResult, Table
from .stats import (covariance, covariance_matrix, fit_scaling, ks_normal_fitted, ks_statistic,
                    lattice_ks, moments, proportion)


def experiment_seed(master_seed, *tags):
    """64-bit seed for one experiment role, derived from the master seed."""
    key = [zlib.crc32(str(t).encode()) for t in tags]
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def default_jobs():
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def _pmap(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _ranges(total, chunk):
    return [(first, min(chunk, total - first)) for first in range(0, total, chunk)]


def _dist(cfg):
    spec = get_param(cfg, "dist", {"kind": "beta", "a": 1.0, "b": 1.0})
    if not isinstance(spec, dict):
        raise ConfigError("params.dist: expected an object")
    try:
        return denv.EnvDistribution.from_dict(spec)
    except DomainError as exc:
        raise ConfigError(f"params.dist: {exc}") from None


def _sticky(cfg):
    try:
        return StickyParams(get_param(cfg, "nu", 1.0, float), get_param(cfg, "beta", 0.0, float))
    except DomainError as exc:
        raise ConfigError(f"params: {exc}") from None


def _points(cfg, default):
    raw = get_param(cfg, "points", default)
    try:
        return [SpaceTimePoint(float(t), float(r)) for t, r in raw]
    except (TypeError, ValueError, DomainError):
        raise ConfigError("params.points: expected a list of [t, r] pairs with t >= 0") from None


def _profile(cfg):
    return _profile_from_spec(get_param(cfg, "profile", {"kind": "linear", "slope": 1.0}))


def _profile_from_spec(spec):
    if not isinstance(spec, dict):
        raise ConfigError("params.profile: expected an object")
    x0 = float(spec.get("x0", 0.0))
    kind = spec.get("kind")
    if kind == "linear":
        return InitialProfile.linear(float(spec.get("slope", 1.0)), x0)
    if kind == "zero":
        return InitialProfile.zero(x0)
    if kind == "sine":
        return InitialProfile.sine(float(spec.get("amplitude", 1.0)), float(spec.get("wavenumber", 1.0)), x0)
    raise ConfigError(f"params.profile.kind: expected linear, zero or sine, got {kind!r}")


def _new_result(cfg, seeds):
    return EnsembleResult(cfg.experiment, cfg.model, cfg.to_dict(), cfg.digest(), seeds,
                          selected=cfg.assertions)


def _finish(res, cfg, t0):
    if cfg.assertions is not None:
        missing = [a for a in cfg.assertions if a not in res.checks]
        if missing:
            raise ConfigError(f"assertions: unknown check(s) {missing}; available {sorted(res.checks)}")
    res.wall_time = time.perf_counter() - t0
    return res


def _se_check(name, est, se, ref, k=3.0):
    z = abs(est - ref) / se if se > 0 else (0.0 if est == ref else math.inf)
    return Check(name, bool(z <= k), float(z), k,
                 f"estimate={est:.6g} se={se:.3g} reference={ref:.6g} (|z| <= {k})")


# ----------------------------------------------------------------------------
# continuum: two-point covariance


def _two_point_chunk(start, nu, beta, dt, horizon, first, count, seed, bandwidth, method):
    b = sticky_sim.simulate_two_point_batch(start, StickyParams(nu, beta), dt, horizon, count, seed,
                                            bandwidth=bandwidth, local_time=method, first=first)
    return np.column_stack([b.x1, b.x2, b.meet_occupation, b.local_time])


def run_two_point_cov(cfg: ExperimentConfig, jobs=1):
    t0 = time.perf_counter()
    prm = _sticky(cfg)
    start = tuple(float(v) for v in get_param(cfg, "start", [0.0, 0.0]))
    dt = get_param(cfg, "dt", 1e-3, float)
    horizon = get_param(cfg, "horizon", 1.0, float)
    bandwidth = get_param(cfg, "bandwidth", None)
    method = get_param(cfg, "local_time", "bridge", str)
    ref = get_param(cfg, "reference", "published", str)
    if ref not in ("published", "occupation"):
        raise ConfigError("params.reference: expected 'published' or 'occupation'")
    us = [float(u) for u in get_param(cfg, "tail_u", [0.1, 0.3, 0.6])]
    chunk = cfg.chunk_size or 200
    seed = experiment_seed(cfg.master_seed, cfg.experiment)
    tasks = [(start, prm.nu, prm.beta, dt, horizon, f, c, seed, bandwidth, method)
             for f, c in _ranges(cfg.replicates, chunk)]
    try:
        data = np.vstack(_pmap(_two_point_chunk, tasks, jobs))
    except DomainError as exc:
        raise ConfigError(f"params: {exc}") from None
    x1, x2, meet, lt = data.T
    d0 = start[0] - start[1]
    res = _new_result(cfg, {"master_seed": cfg.master_seed, "experiment_seed": seed})
    cov, cov_se = covariance(x1, x2)
    mm = moments(meet)
    st = {"cov_x1_x2": {"value": cov, "se": cov_se}, "meet_occupation": mm,
          "var_x1": moments(x1)["var"], "var_x2": moments(x2)["var"],
          "dt": dt, "horizon": horizon,
          "bandwidth": sticky_sim.default_bandwidth(dt) if bandwidth is None else bandwidth,
          "local_time_method": method, "reference": ref, "tail": {}}
    refs = {}
    for norm in ("published", "occupation"):
        c_ref = analytics.two_point_cov(d0, horizon, prm.nu, norm)
        m_ref = (2 * prm.nu * analytics.mean_local_time_zero(horizon, prm.nu, norm) if d0 == 0 else c_ref)
        tails = {u: analytics.local_time_tail(u, horizon, prm.nu, d0, norm) for u in us}
        refs[norm] = {"cov": c_ref, "meet": m_ref, "tail": tails}
        res.add_check(_se_check(f"cov_vs_{norm}", cov, cov_se, c_ref))
        res.add_check(_se_check(f"meet_vs_{norm}", mm["mean"], mm["mean_se"], m_ref))
        for u in us:
            p, se = proportion(lt > u)
            st["tail"][str(u)] = {"value": p, "se": se}
            # an empirical tail of exactly 0 against a zero reference passes with se = 0
            res.add_check(_se_check(f"tail_u{u}_vs_{norm}", p, se, tails[u]))
    st["references"] = refs
    z = (x1 - start[0] - prm.beta * horizon) / math.sqrt(horizon)
    ks = ks_statistic(z, sps.norm.cdf)
    st["marginal_ks"] = ks.to_dict()
    res.add_check(Check("marginal_ks_01", ks.pass_01, ks.statistic, ks.crit_01, "X1 standardized vs N(0,1)"))
    res.statistics = st
    if cfg.assertions is None:
        res.selected = [n for n in res.checks if n.endswith(ref) or n == "marginal_ks_01"]
    res.tables["replicates"] = Table(["replicate", "x1", "x2", "meet_occupation", "local_time"],
                                     [[i, *row] for i, row in enumerate(data.tolist())])
    return _finish(res, cfg, t0)


# ----------------------------------------------------------------------------
# continuum: local-time estimators on plain Brownian motion


def _mean_abs_normal(mu, s):
    if s == 0:
        return abs(mu)
    return s * math.sqrt(2 / math.pi) * math.exp(-mu * mu / (2 * s * s)) + mu * (1 - 2 * sps.norm.cdf(-mu / s))


def _local_time_chunk(x0, var, dt, horizon, first, count, seed, bandwidths, estimators):
    out = np.empty((count, len(bandwidths) * len(estimators)))
    for i in range(count):
        path = sticky_sim.simulate_bm(x0, var, dt, horizon, seed, key=("bm", first + i))
        col = 0
        for est in estimators:
            for bw in bandwidths:
                out[i, col] = sticky_sim.estimate_local_time(path, 0.0, var, bw, est).values[-1]
                col += 1
    return out


def run_local_time(cfg: ExperimentConfig, jobs=1):
    t0 = time.perf_counter()
    x0 = get_param(cfg, "x0", 0.0, float)
    var = get_param(cfg, "variance_rate", 1.0, float)
    dt = get_param(cfg, "dt", 1e-4, float)
    horizon = get_param(cfg, "horizon", 1.0, float)
    bws = [float(b) for b in get_param(cfg, "bandwidths", [1e-2])]
    ests = list(get_param(cfg, "estimators", ["epsilon-occupation", "bridge-mean"]))
    for e in ests:
        if e not in sticky_sim.ESTIMATORS:
            raise ConfigError(f"params.estimators: unknown estimator {e!r}")
    seed = experiment_seed(cfg.master_seed, cfg.experiment)
    chunk = cfg.chunk_size or 100
    tasks = [(x0, var, dt, horizon, f, c, seed, bws, ests) for f, c in _ranges(cfg.replicates, chunk)]
    data = np.vstack(_pmap(_local_time_chunk, tasks, jobs))
    reference = 0.5 * (_mean_abs_normal(x0, math.sqrt(var * horizon)) - abs(x0))
    res = _new_result(cfg, {"master_seed": cfg.master_seed, "experiment_seed": seed})
    st = {"reference_mean": reference, "estimates": {}}
    col = 0
    cols = ["replicate"]
    for est in ests:
        for bw in bws:
            m = moments(data[:, col])
            st["estimates"][f"{est}@{bw}"] = m
            res.add_check(_se_check(f"mean_{est}@{bw}", m["mean"], m["mean_se"], reference))
            cols.append(f"{est}@{bw}")
            col += 1
    res.statistics = st
    res.tables["replicates"] = Table(cols, [[i, *row] for i, row in enumerate(data.tolist())])
    return _finish(res, cfg, t0)


# ----------------------------------------------------------------------------
# continuum: return-probability decay


def _return_chunk(nu, beta, t_block, n_blocks, first, count, seed, dt):
    return sticky_sim.return_hit_counts(StickyParams(nu, beta), t_block, n_blocks, first, count, seed, dt)


def run_return_decay(cfg: ExperimentConfig, jobs=1):
    t0 = time.perf_counter()
    prm = _sticky(cfg)
    t_block = get_param(cfg, "t_block", 1.0, float)
    k_lo, k_hi = (int(v) for v in get_param(cfg, "fit_range", [8, 64]))
    n_blocks = get_param(cfg, "n_blocks", k_hi + 1, int)
    if k_hi >= n_blocks:
        raise ConfigError("params.fit_range: upper end must be below n_blocks")
    dt = get_param(cfg, "dt", 0.01, float)
    band = [float(v) for v in get_param(cfg, "slope_band", [-0.65, -0.35])]
    seed = experiment_seed(cfg.master_seed, cfg.experiment)
    chunk = cfg.chunk_size or 256
    tasks = [(prm.nu, prm.beta, t_block, n_blocks, f, c, seed, dt) for f, c in _ranges(cfg.replicates, chunk)]
    hits = np.sum(_pmap(_return_chunk, tasks, jobs), axis=0)
    p = hits / cfg.replicates
    se = np.sqrt(p * (1 - p) / cfg.replicates)
    k = np.arange(n_blocks)
    sel = (k >= k_lo) & (k <= k_hi) & (p > 0)
    fit = fit_scaling(k[sel], p[sel])
    res = _new_result(cfg, {"master_seed": cfg.master_seed, "experiment_seed": seed})
    res.statistics = {"p": p.tolist(), "se": se.tolist(), "t_block": t_block, "dt": dt}
    res.fits["return_slope"] = fit.to_dict()
    res.add_check(Check("slope_in_band", fit.within(*band), fit.slope, band,
                        f"fit over k in [{k_lo}, {k_hi}] stderr={fit.stderr:.3g}"))
    res.add_check(Check("first_block_sure", bool(p[0] >= 1 - 3 * max(se[0], 1 / cfg.replicates)), float(p[0]), 1.0))
    slack = 2 * np.sqrt(se[:-1] ** 2 + se[1:] ** 2)
    worst = float(np.max(p[1:] - p[:-1] - slack))
    res.add_check(Check("nonincreasing_2se", worst <= 0, worst, 0.0, "max of p[k+1] - p[k] - 2 se"))
    res.tables["profile"] = Table(["k", "p", "se"], [[int(i), float(a), float(b)] for i, a, b in zip(k, p, se)])
    return _finish(res, cfg, t0)


# ----------------------------------------------------------------------------
# discrete: quenched invariance principle


def _qip_env(dist, ns, seed, index):
    n_max = max(ns)
    layout = denv.RowLayout.cones([(0, 0)], n_max)
    values = denv.stack_values(layout, dist, seed, [("env", index)])[0]
    beta = dist.drift
    sd1 = math.sqrt(max(1 - beta * beta, 0.0))
    p = np.ones(1)
    drift = np.zeros(n_max + 1)
    ks = {}
    for k in range(n_max):
        om = values[layout.slice(k, -k, k)]
        p = forward_step(p, om)
        support = -(k + 1) + 2.0 * np.arange(k + 2)
        drift[k + 1] = abs(p @ support - (k + 1) * beta)
        if k + 1 in ns:
            n = k + 1
            ks[n] = lattice_ks(support, p, lambda x: sps.norm.cdf(x, n * beta, sd1 * math.sqrt(n)))
    stat = {n: float(np.max(drift[: n + 1]) / math.sqrt(n)) for n in ns}
    return ks, stat


def run_qip(cfg: ExperimentConfig, jobs=1):
    t0 = time.perf_counter()
    dist = _dist(cfg)
    ns = sorted(int(n) for n in (cfg.scales or [256, 1024, 4096]))
    n_env = get_param(cfg, "environments", 20, int)
    ks_max = get_param(cfg, "ks_threshold", 0.05, float)
    need = get_param(cfg, "min_decreasing", max(1, math.ceil(0.9 * n_env)), int)
    seed = experiment_seed(cfg.master_seed, cfg.experiment)
    out = _pmap(_qip_env, [(dist, ns, seed, i) for i in range(n_env)], jobs)
    res = _new_result(cfg, {"master_seed": cfg.master_seed, "experiment_seed": seed})
    ks_table = np.array([[o[0][n] for n in ns] for o in out])
    dr_table = np.array([[o[1][n] for n in ns] for o in out])
    top = float(ks_table[:, -1].max())
    res.add_check(Check("ks_all_below", top <= ks_max, top, ks_max, f"max KS at n={ns[-1]} over {n_env} environments"))
    if len(ns) >= 2:
        # a drift statistic that is zero at every scale (nonrandom environment) counts as decreasing
        flat = (dr_table[:, 1:] <= 1e-12) & (dr_table[:, :-1] <= 1e-12)
        dec = int(np.sum(np.all((np.diff(dr_table, axis=1) < 0) | flat, axis=1)))
        res.add_check(Check("drift_decreasing", dec >= need, dec, need, "environments with decreasing drift statistic"))
    if dist.kind == "deterministic":
        beta = dist.drift
        sd1 = math.sqrt(max(1 - beta * beta, 0.0))
        ref = []
        for n in ns:
            j = np.arange(n + 1)
            ref.append(lattice_ks(2.0 * j - n, sps.binom.pmf(j, n, dist.p),
                                  lambda x: sps.norm.cdf(x, n * beta, sd1 * math.sqrt(n))))
        gap = float(np.max(np.abs(ks_table - np.array(ref)[None, :])))
        res.add_check(Check("matches_binomial_clt", gap <= 1e-9, gap, 1e-9, "KS equals binomial-vs-Gaussian value"))
        res.statistics["binomial_ks"] = dict(zip(map(str, ns), ref))
    res.statistics.update({"scales": ns, "ks": ks_table.tolist(), "drift_statistic": dr_table.tolist()})
    res.tables["environments"] = Table(
        ["environment"] + [f"ks_{n}" for n in ns] + [f"drift_{n}" for n in ns],
        [[i, *a, *b] for i, (a, b) in enumerate(zip(ks_table.tolist(), dr_table.tolist()))])
    return _finish(res, cfg, t0)


# ----------------------------------------------------------------------------
# discrete / continuum: quenched-mean fluctuations


def _qm_chunk(dist, n, points, first, count, seed):
    s = dfluct.quenched_mean_fluctuations(dist, n, points, count, seed, first=first)
    return s.values


def _gauss_chunk(points, kernel, nu, fprime, first, count, seed):
    # the stream depends on the chunk start, so draws are fixed by chunk_size alone
    return sticky_sim.sample_gaussian_field(points, kernel, StickyParams(nu), fprime,
                                            seed=experiment_seed(seed, first), n_draws=count)


def _lattice_chunk(cfg, n, pts):
    """Environments per batch: the configured size, else about 2**24 stacked sites."""
    if cfg.chunk_size:
        return cfg.chunk_size
    N = max(denv.round_half_down(n * p.t) for p in pts)
    sites = len(pts) * (N + 1) * (N + 2) // 2
    return int(max(1, min(64, 2 ** 24 // max(sites, 1))))


def _replicates_for(cfg, n):
    per = get_param(cfg, "replicates_per_scale", {})
    return int(per.get(str(n), cfg.replicates))


def run_quenched_mean(cfg: ExperimentConfig, jobs=1):
    t0 = time.perf_counter()
    pts = _points(cfg, [[1, 0], [1, 0.5], [1, 1], [1, 2]])
    seed = experiment_seed(cfg.master_seed, cfg.experiment)
    res = _new_result(cfg, {"master_seed": cfg.master_seed, "experiment_seed": seed})
    if cfg.model == "continuum":
        return _finish(_quenched_mean_continuum(cfg, pts, seed, res, jobs), cfg, t0)
    dist = _dist(cfg)
    ns = [int(n) for n in (cfg.scales or [256])]
    ks_at = get_param(cfg, "ks_scale", ns[-1], int)
    per_scale = {}
    unrescaled = []
    rows = []
    for n in ns:
        reps = _replicates_for(cfg, n)
        chunk = _lattice_chunk(cfg, n, pts)
        nseed = experiment_seed(seed, n)
        tasks = [(dist, n, pts, f, c, nseed) for f, c in _ranges(reps, chunk)]
        vals = np.vstack(_pmap(_qm_chunk, tasks, jobs))
        lat = [dfluct.lattice_point(p, n, dist.drift) for p in pts]
        C, S = covariance_matrix(vals)
        mean = [moments(vals[:, j]) for j in range(len(pts))]
        m0 = mean[0]
        var_un = m0["var"] * math.sqrt(n)
        var_un_se = m0["var_se"] * math.sqrt(n)
        ident = dist.sigma0_sq * float(np.sum(pair_collision_probability(dist, lat[0].N))) if lat[0].N else 0.0
        entry = {"replicates": reps, "lattice": [lp.to_dict() for lp in lat],
                 "mean": [m["mean"] for m in mean], "mean_se": [m["mean_se"] for m in mean],
                 "cov": C.tolist(), "cov_se": S.tolist(), "var_unrescaled": var_un,
                 "var_unrescaled_se": var_un_se, "variance_identity": ident}
        for j, m in enumerate(mean):
            res.add_check(_se_check(f"mean_zero_n{n}_p{j}", m["mean"], m["mean_se"], 0.0))
        if var_un_se > 0 or ident == 0:
            res.add_check(_se_check(f"variance_identity_n{n}", var_un, var_un_se, ident))
        if n == ks_at and m0["var"] > 0:
            ks = ks_normal_fitted(vals[:, 0])
            entry["ks_first_point"] = ks.to_dict()
            res.add_check(Check(f"ks_normal_n{n}", ks.pass_01, ks.statistic, ks.crit_01,
                                "fitted-variance Gaussian, 1% level"))
        if len(pts) >= 3 and C[0, 0] > 0 and all(p.t == pts[0].t for p in pts):
            ratio = C[0] / C[0, 0]
            rse = S[0] / C[0, 0]
            slack = 2 * np.sqrt(rse[1:] ** 2 + rse[:-1] ** 2)
            worst = float(np.max(ratio[1:] - ratio[:-1] - slack))
            entry["cov_ratio"] = ratio.tolist()
            res.add_check(Check(f"cov_ratio_decreasing_n{n}", worst <= 0, worst, 0.0,
                                "max of ratio[j+1] - ratio[j] - 2 se"))
        per_scale[str(n)] = entry
        unrescaled.append(var_un)
        rows.extend([n, r, j, float(v)] for r, row in enumerate(vals.tolist()) for j, v in enumerate(row))
    res.statistics = {"scales": per_scale, "dist": dist.to_dict(), "sigma0_sq": dist.sigma0_sq,
                      "drift": dist.drift}
    if len(ns) >= 3 and all(v > 0 for v in unrescaled):
        band = [float(v) for v in get_param(cfg, "slope_band", [0.4, 0.6])]
        fit = fit_scaling(ns, unrescaled)
        res.fits["variance_scaling"] = fit.to_dict()
        res.add_check(Check("variance_slope_in_band", fit.within(*band), fit.slope, band,
                            f"stderr={fit.stderr:.3g}"))
    res.tables["values"] = Table(["n", "replicate", "point", "value"], rows)
    return _finish(res, cfg, t0)


def _quenched_mean_continuum(cfg, pts, seed, res, jobs):
    kernel = get_param(cfg, "kernel", "gamma", str)
    nu = get_param(cfg, "nu", 1.0, float)
    fprime = get_param(cfg, "fprime_x0", 0.0, float)
    chunk = cfg.chunk_size or 10000
    tasks = [(pts, kernel, nu, fprime, f, c, seed) for f, c in _ranges(cfg.replicates, chunk)]
    try:
        draws = np.vstack(_pmap(_gauss_chunk, tasks, jobs))
        K = analytics.kernel_matrix(pts, kernel, nu=nu, fprime_x0=fprime)
    except DomainError as exc:
        raise ConfigError(f"params: {exc}") from None
    C, S = covariance_matrix(draws)
    worst = 0.0
    for i in range(len(pts)):
        for j in range(i, len(pts)):
            z = abs(C[i, j] - K[i, j]) / S[i, j] if S[i, j] > 0 else 0.0
            worst = max(worst, z)
    res.statistics = {"kernel": kernel, "empirical_cov": C.tolist(), "cov_se": S.tolist(),
                      "analytic_cov": K.tolist()}
    res.add_check(Check("field_cov_within_3se", worst <= 3.0, worst, 3.0, "max |z| over matrix entries"))
    for j in range(len(pts)):
        m = moments(draws[:, j])
        res.add_check(_se_check(f"field_mean_zero_p{j}", m["mean"], m["mean_se"], 0.0))
    return res


# ----------------------------------------------------------------------------
# discrete: current fluctuations


def _cur_chunk(dist, profile_spec, n, points, first, count, seed, inc_f, inc_w):
    prof = _profile_from_spec(profile_spec)
    s = dfluct.current_fluctuations(dist, prof, n, points, count, seed, inc_f, inc_w, first=first)
    return s.values


def run_current(cfg: ExperimentConfig, jobs=1):
    t0 = time.perf_counter()
    dist = _dist(cfg)
    spec = get_param(cfg, "profile", {"kind": "linear", "slope": 1.0})
    prof = _profile(cfg)
    pts = _points(cfg, [[1, 0], [1, 0.5]])
    ns = [int(n) for n in (cfg.scales or [256])]
    use_oracle = bool(get_param(cfg, "oracle", False))
    ks_at = get_param(cfg, "ks_scale", None)
    additivity_at = get_param(cfg, "additivity_scales", ns)
    seed = experiment_seed(cfg.master_seed, cfg.experiment)
    res = _new_result(cfg, {"master_seed": cfg.master_seed, "experiment_seed": seed})
    per_scale = {}
    rows = []
    variants = {"full": (True, True), "profile": (True, False), "noise": (False, True)}
    for n in ns:
        reps = _replicates_for(cfg, n)
        chunk = _lattice_chunk(cfg, n, pts)
        entry = {"replicates": reps}
        wanted = ["full"] + (["profile", "noise"] if n in additivity_at else [])
        stats_by = {}
        for name in wanted:
            inc_f, inc_w = variants[name]
            vseed = experiment_seed(seed, n, name)
            tasks = [(dist, spec, n, pts, f, c, vseed, inc_f, inc_w) for f, c in _ranges(reps, chunk)]
            vals = np.vstack(_pmap(_cur_chunk, tasks, jobs))
            C, S = covariance_matrix(vals)
            m0 = moments(vals[:, 0])
            stats_by[name] = (m0, C, S)
            entry[name] = {"mean": m0["mean"], "mean_se": m0["mean_se"], "var": m0["var"],
                           "var_se": m0["var_se"], "cov": C.tolist(), "cov_se": S.tolist()}
            res.add_check(_se_check(f"mean_zero_n{n}_{name}", m0["mean"], m0["mean_se"], 0.0))
            if use_oracle and len(pts) >= 2 and pts[0].t == pts[1].t:
                ref, parts = dfluct.exact_current_covariance(dist, prof, n, pts[0], pts[1], inc_f, inc_w)
                entry[name]["oracle_cov01"] = ref
                res.add_check(_se_check(f"oracle_cov_n{n}_{name}", C[0, 1], S[0, 1], ref))
            if name == "full" and ks_at is not None and int(ks_at) == n and m0["var"] > 0:
                ks = ks_normal_fitted(vals[:, 0])
                entry["ks_first_point"] = ks.to_dict()
                res.add_check(Check(f"ks_normal_n{n}", ks.pass_01, ks.statistic, ks.crit_01,
                                    "fitted-variance Gaussian, 1% level"))
            rows.extend([n, name, r, j, float(v)] for r, row in enumerate(vals.tolist()) for j, v in enumerate(row))
        if "profile" in stats_by:
            full, pf, nz = (stats_by[k][0] for k in ("full", "profile", "noise"))
            gap = full["var"] - pf["var"] - nz["var"]
            se = math.sqrt(full["var_se"] ** 2 + pf["var_se"] ** 2 + nz["var_se"] ** 2)
            entry["additivity_gap"] = {"value": gap, "se": se}
            res.add_check(_se_check(f"variance_additivity_n{n}", gap, se, 0.0))
        per_scale[str(n)] = entry
    res.statistics = {"scales": per_scale, "dist": dist.to_dict(), "profile": spec}
    res.tables["values"] = Table(["n", "variant", "replicate", "point", "value"], rows)
    return _finish(res, cfg, t0)


RUNNERS = {
    "qip": run_qip,
    "quenched_mean": run_quenched_mean,
    "current": run_current,
    "two_point_cov": run_two_point_cov,
    "local_time": run_local_time,
    "return_decay": run_return_decay,
}


def run_experiment(cfg: ExperimentConfig, jobs=1):
    return RUNNERS[cfg.experiment](cfg, jobs=jobs)
