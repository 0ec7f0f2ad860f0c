"""Command-line entry point.

Exit status: 0 all checks pass, 1 an assertion failed, 2 bad configuration or
arguments, 3 a numerical failure inside a computation.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, analytics, sticky_sim
from .analytics import StickyParams
from .discrete_flow import env as denv
from .discrete_flow import kernels, smoothing, web
from .discrete_flow.fluctuations import quenched_mean_fluctuations
from .errors import ConfigError, DomainError, InvariantError, NumericError
from .mc_harness import load_config, run_experiment
from .mc_harness.runners import default_jobs
from .mc_harness.stats import moments
from .seeding import derive_rng

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
GOLDEN_RTOL = 1e-9
GOLDEN_ATOL = 1e-12


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _emit(text, out_dir, name):
    if out_dir is None:
        sys.stdout.write(text)
        return None
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    target = path / name
    target.write_text(text, encoding="utf-8")
    return target


def _line(ok, label, statistic, threshold):
    print(f"{'PASS' if ok else 'FAIL'} {label}: statistic={statistic:.6g} threshold={threshold}")


def _read_json(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _overlay(args, path, fields):
    """Fill unset flags from a config document; explicit flags win."""
    doc = _read_json(path)
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if attr not in fields:
            raise ConfigError(f"{path}: unknown key {key!r}")
        if getattr(args, attr, None) is None:
            setattr(args, attr, value)


# ----------------------------------------------------------------------------
# analytics-eval


_EVAL_FIELDS = ("op", "x", "t", "u", "nu", "x0", "r", "s", "q", "fprime")


def cmd_analytics_eval(args):
    if args.config:
        _overlay(args, args.config, _EVAL_FIELDS)
        for n in _EVAL_FIELDS[1:]:
            v = getattr(args, n)
            if v is not None and not isinstance(v, list):
                setattr(args, n, [v])
    if args.op is None:
        raise ConfigError("analytics-eval: --op is required")
    names, _ = analytics.OPERATIONS.get(args.op, (None, None))
    if names is None:
        raise ConfigError(f"--op: unknown operation {args.op!r}; choose from {sorted(analytics.OPERATIONS)}")
    given = {}
    for n in names:
        vals = getattr(args, n, None)
        if vals is None:
            if n == "x0":
                vals = [0.0]
            else:
                raise ConfigError(f"--{n}: required for --op {args.op}")
        given[n] = vals
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["op", *names, "value", "est_error"])
    for combo in itertools.product(*(given[n] for n in names)):
        kw = dict(zip(names, combo))
        try:
            value, err = analytics.evaluate(args.op, **kw)
        except DomainError as exc:
            raise ConfigError(f"{args.op}{tuple(combo)}: {exc}") from None
        w.writerow([args.op, *(repr(float(v)) for v in combo), repr(float(value)), repr(float(err))])
    _emit(buf.getvalue(), args.out, f"analytics_{args.op}.csv")
    return EXIT_OK


# ----------------------------------------------------------------------------
# simulate


_SIM_DEFAULTS = {"x1": 0.0, "x2": 0.0, "nu": 1.0, "beta": 0.0, "dt": 1e-3, "horizon": 1.0,
                 "bandwidth": None, "replicates": 1000}


def cmd_simulate(args):
    if args.config:
        _overlay(args, args.config, tuple(_SIM_DEFAULTS))
    for k, v in _SIM_DEFAULTS.items():
        if getattr(args, k) is None:
            setattr(args, k, v)
    if args.kind != "two-point":
        raise ConfigError(f"simulate: unknown kind {args.kind!r}")
    if args.replicates < 1:
        raise ConfigError("--replicates must be positive")
    try:
        prm = StickyParams(args.nu, args.beta)
        batch = sticky_sim.simulate_two_point_batch((args.x1, args.x2), prm, args.dt, args.horizon,
                                                    args.replicates, args.seed, bandwidth=args.bandwidth)
    except DomainError as exc:
        raise ConfigError(f"simulate: {exc}") from None
    cols = batch.columns()
    names = ["replicate", "x1", "x2", "meet_occupation", "local_time"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for i in range(args.replicates):
        w.writerow([int(cols["replicate"][i])] + [repr(float(cols[c][i])) for c in names[1:]])
    text = buf.getvalue()
    meta = {
        "kind": "two-point",
        "params": prm.to_dict(),
        "start": [args.x1, args.x2],
        "dt": args.dt,
        "horizon": args.horizon,
        "bandwidth": sticky_sim.default_bandwidth(args.dt) if args.bandwidth is None else args.bandwidth,
        "replicates": args.replicates,
        "seed": args.seed,
        "stream_key": ["two-point", "<replicate>"],
        "generator": "PCG64",
        "csv_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "package_version": __version__,
    }
    if args.out is None:
        sys.stdout.write(text)
    else:
        _emit(text, args.out, "two_point.csv")
        _emit(json.dumps(meta, indent=2, sort_keys=True) + "\n", args.out, "two_point.json")
        n = args.replicates
        if n >= 2:
            c = float(np.cov(batch.x1, batch.x2)[0, 1])
            print(f"simulated {n} replicates: cov(X1,X2)={c:.6g} mean meet={float(np.mean(batch.meet_occupation)):.6g}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# discrete-check


def _check_ck(args, rng):
    worst = 0.0
    for i in range(args.n_envs):
        H = int(rng.integers(2, args.horizon + 1))
        env = denv.gen_environment((-H - 2, H + 2, 0, H), denv.EnvDistribution.uniform(), args.seed,
                                   key=("ck", i))
        u = int(rng.integers(0, H + 1))
        worst = max(worst, kernels.chapman_kolmogorov_gap(env, (0, 0), u, H))
    return worst <= 1e-12, "chapman-kolmogorov max gap", worst, 1e-12


def _check_current(args, rng):
    worst = 0.0
    for i in range(args.n_envs):
        t = int(rng.integers(0, args.horizon + 1))
        x = 2 * int(rng.integers(-5, 6))
        y = int(rng.integers(-5, 6)) * 2 + (t % 2)
        atoms = {int(2 * rng.integers(-12, 12) + 1): float(rng.random()) for _ in range(10)}
        span = max(abs(x), abs(y) + t, *(abs(z) + 1 for z in atoms)) + 2
        env = denv.gen_environment((-span, span, -max(t, 1), 0), denv.EnvDistribution.uniform(), args.seed,
                                   key=("current", i))
        worst = max(worst, smoothing.current_identity_check(env, atoms, x, y, t)[2])
    return worst <= 1e-10, "current identity max gap", worst, 1e-10


def _check_noncrossing(args, rng):
    bad = 0
    size = args.size
    for i in range(args.n_envs):
        env = denv.gen_environment((0, size - 1, 0, size - 1), denv.EnvDistribution.uniform(), args.seed,
                                   key=("web-env", i))
        arrows = web.sample_web(env, args.seed, key=("web", i))
        ok, _ = web.check_noncrossing(arrows, web.build_dual_web(arrows))
        bad += not ok
    return bad == 0, f"non-crossing violations over {args.n_envs} webs", float(bad), 0


def _check_duality(args, rng):
    worst = 0.0
    for i in range(args.n_envs):
        t = int(rng.integers(1, args.horizon + 1))
        env = denv.gen_environment((-t - 4, t + 4, -t, 0), denv.EnvDistribution.uniform(), args.seed,
                                   key=("duality", i))
        y = 2 * int(rng.integers(-2, 3)) + (t % 2)
        z = 2 * int(rng.integers(-2, 3)) + 1
        fwd = kernels.dual_cdf_from_forward(env, y, -t, z, 0)
        pos, pr = kernels.dual_distribution(env, z, 0, -t)
        worst = max(worst, abs(fwd - float(pr[pos < y].sum())))
    return worst <= 1e-12, "forward/dual kernel duality max gap", worst, 1e-12


def _check_variance(args, rng):
    dist = denv.EnvDistribution.uniform()
    n = args.horizon
    s = quenched_mean_fluctuations(dist, n, [(1, 0)], args.n_envs, args.seed)
    m = moments(s.values[:, 0] * n ** 0.25)
    var, se = m["var"], m["var_se"]
    ref = dist.sigma0_sq * float(kernels.pair_collision_probability(dist, n).sum())
    z = abs(var - ref) / se
    return z <= 3, f"variance identity |z| (var={var:.5g}, reference={ref:.5g})", z, 3


CHECKS = {
    "chapman-kolmogorov": _check_ck,
    "current-identity": _check_current,
    "noncrossing": _check_noncrossing,
    "duality": _check_duality,
    "variance-identity": _check_variance,
}


_CHECK_DEFAULTS = {"what": None, "n_envs": 100, "horizon": 20, "size": 100}


def cmd_discrete_check(args):
    if args.config:
        _overlay(args, args.config, tuple(_CHECK_DEFAULTS))
    for k, v in _CHECK_DEFAULTS.items():
        if getattr(args, k) is None:
            setattr(args, k, v)
    if args.what not in CHECKS:
        raise ConfigError(f"discrete-check: --what must be one of {sorted(CHECKS)}, got {args.what!r}")
    rng = derive_rng(args.seed, "discrete-check", args.what)
    if args.n_envs < 1:
        raise ConfigError("--n-envs must be positive")
    ok, label, stat, thr = CHECKS[args.what](args, rng)
    _line(ok, label, stat, thr)
    return EXIT_OK if ok else EXIT_FAIL


# ----------------------------------------------------------------------------
# experiment


def cmd_experiment(args):
    if args.config is None:
        raise ConfigError("experiment: --config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    res = run_experiment(cfg, jobs=args.jobs)
    for line in res.summary_lines():
        print(line)
    out = args.out or cfg.output
    if out is not None:
        res.write(out)
    if not res.passed:
        print(f"failing assertions: {', '.join(res.failures)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# ----------------------------------------------------------------------------
# golden


def default_golden_dir():
    return Path(str(resources.files("hwflow") / "goldens"))


def load_grid(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read grid ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    grids = data.get("grids", []) if isinstance(data, dict) else None
    if not isinstance(grids, list):
        raise ConfigError(f"{path}: 'grids' must be a list")
    for i, g in enumerate(grids):
        if not isinstance(g, dict) or "name" not in g or "op" not in g:
            raise ConfigError(f"{path}: grids[{i}]: needs 'name' and 'op'")
        if g["op"] not in analytics.OPERATIONS:
            raise ConfigError(f"{path}: grids[{i}].op: unknown operation {g['op']!r}")
        names = analytics.OPERATIONS[g["op"]][0]
        params = g.get("params", {})
        missing = [n for n in names if n not in params]
        if missing:
            raise ConfigError(f"{path}: grids[{i}].params: missing {missing}")
    return grids


def golden_rows(grid):
    names = analytics.OPERATIONS[grid["op"]][0]
    axes = [[float(v) for v in grid["params"][n]] for n in names]
    rows = []
    for combo in itertools.product(*axes):
        value, _ = analytics.evaluate(grid["op"], **dict(zip(names, combo)))
        rows.append((combo, float(value)))
    return names, rows


def render_golden(grid):
    names, rows = golden_rows(grid)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["op", *names, "value"])
    for combo, value in rows:
        w.writerow([grid["op"], *(repr(v) for v in combo), repr(value)])
    return buf.getvalue()


def _read_values(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [float(r["value"]) for r in csv.DictReader(fh)]


def cmd_golden(args):
    out_dir = Path(args.out) if args.out else default_golden_dir()
    grid_path = Path(args.config) if args.config else default_golden_dir() / "grid.json"
    grids = load_grid(grid_path)
    if not grids:
        print("golden: empty grid, nothing to do")
        return EXIT_OK
    drifted, written, same = [], [], []
    pending = {}
    for g in grids:
        text = render_golden(g)
        target = out_dir / f"{g['name']}.csv"
        if target.exists():
            old = _read_values(target)
            new = [float(r.split(",")[-1]) for r in text.splitlines()[1:]]
            close = len(old) == len(new) and all(
                abs(a - b) <= GOLDEN_ATOL + GOLDEN_RTOL * abs(a) for a, b in zip(old, new))
            if not close:
                drifted.append(g["name"])
                pending[target] = text
            else:
                same.append(g["name"])
        else:
            pending[target] = text
    if drifted and not args.overwrite_goldens:
        for name in drifted:
            print(f"FAIL golden {name}: values drift beyond rtol={GOLDEN_RTOL}; rerun with --overwrite-goldens")
        return EXIT_FAIL
    out_dir.mkdir(parents=True, exist_ok=True)
    for target, text in pending.items():
        target.write_text(text, encoding="utf-8")
        written.append(target.stem)
    for name in same:
        print(f"PASS golden {name}: matches committed values")
    for name in written:
        print(f"WROTE golden {name}")
    return EXIT_OK


# ----------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=_u64, default=None, help="master seed override (u64)")
    p.add_argument("--jobs", type=int, default=default_jobs(), help="worker processes")
    p.add_argument("--out", help="output directory")


def _add_eval_args(p):
    p.add_argument("--op", help=f"one of {', '.join(sorted(analytics.OPERATIONS))}")
    for name in ("x", "t", "u", "nu", "x0", "r", "s", "q", "fprime"):
        p.add_argument(f"--{name}", type=_floats, default=None, help="comma-separated grid values")
    p.set_defaults(func=cmd_analytics_eval)


def build_parser():
    parser = _Parser(prog="hwflow", description="Sticky Brownian flows: formulas, simulation, checks.")
    parser.add_argument("--version", action="version", version=f"hwflow {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("analytics-eval", help="evaluate a closed-form operation on a grid")
    _add_common(p)
    _add_eval_args(p)
    a = sub.add_parser("analytics", help="alias group: 'analytics eval'")
    asub = a.add_subparsers(dest="action", required=True, parser_class=_Parser)
    pe = asub.add_parser("eval")
    _add_common(pe)
    _add_eval_args(pe)

    p = sub.add_parser("simulate", help="simulate the sticky 2-point motion")
    p.add_argument("kind", choices=["two-point"])
    _add_common(p)
    p.add_argument("--x1", type=float, default=None)
    p.add_argument("--x2", type=float, default=None)
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("discrete-check", help="exact and statistical checks of the lattice model")
    _add_common(p)
    p.add_argument("--what", choices=sorted(CHECKS))
    p.add_argument("--n-envs", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--size", type=int, default=None)
    p.set_defaults(func=cmd_discrete_check)

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment from a JSON config")
    _add_common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("golden", help="regenerate or verify golden formula tables")
    _add_common(p)
    p.add_argument("--overwrite-goldens", action="store_true")
    p.set_defaults(func=cmd_golden)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "seed", None) is None and args.func is not cmd_experiment:
            args.seed = 0
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be at least 1")
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        extra = ""
        if exc.estimate is not None:
            extra = f" (estimate={exc.estimate}, error bound={exc.error_bound})"
        print(f"numeric error: {exc}{extra}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, InvariantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
