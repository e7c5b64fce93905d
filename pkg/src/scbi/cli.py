"""Command-line entry point: ``scbi <subcommand> [flags]``.

Hypothesis and datum indices are 1-based on the command line and in CSV
output.  Every ``--out`` CSV gets a ``<stem>.manifest.json`` sidecar; running
``scbi --from-manifest <manifest>`` repeats the run with the recorded
parameters and rewrites the same bytes.

Exit codes: 0 success, 1 domain error (the error class is printed), 2 usage.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .core import MarginalSpec, normalize_columns, normalize_vector
from .errors import ScbiError
from .estimators import EpisodeConfig, Mode, roc_report, run_episode
from .fixtures import FIXTURES
from .gridworld import GridWorldConfig, gridworld_mismatch_experiment, run_gridworld_comparison
from .io import read_manifest, table_to_csv, write_csv, write_manifest
from .measure import AtomicMeasure, component, expectation, psi_step, ratio, variance
from .sinkhorn import SinkhornConfig, sinkhorn_scale

# argparse destinations that describe where/how to run, not what to compute
_RUNTIME_KEYS = {"out", "threads", "config", "from_manifest", "command", "handler"}


# -- input helpers ----------------------------------------------------------------

def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _shape(text: str) -> tuple[int, int]:
    try:
        n, m = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NxM, got {text!r}") from None
    return n, m


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def load_matrix(path) -> np.ndarray:
    """Plain comma-separated rows, one per line, no header."""
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _matrix(args, prefix: str = "") -> np.ndarray:
    fixture = getattr(args, prefix + "fixture")
    path = getattr(args, prefix + "matrix")
    if path:
        return load_matrix(path)
    if fixture:
        return FIXTURES.matrix(fixture)
    raise ValueError("give --matrix FILE or --fixture NAME")


def _prior(spec: str | None, m: int) -> np.ndarray:
    if not spec:
        return np.full(m, 1.0 / m)
    if spec[0].isalpha():
        theta = FIXTURES.prior(spec)
    else:
        theta = normalize_vector(_floats(spec))
    if theta.size != m:
        raise ValueError(f"prior has {theta.size} entries, matrix has {m} columns")
    return theta


def _hyp(h: int, m: int) -> int:
    if not 1 <= h <= m:
        raise ValueError(f"--h must lie in 1..{m}, got {h}")
    return h - 1


# -- subcommand handlers: each returns (rows, columns) --------------------------

def cmd_sinkhorn(args):
    M = _matrix(args)
    n, m = M.shape
    r = args.rows if args.rows is not None else np.ones(n)
    c = args.cols if args.cols is not None else np.full(m, n / m)
    res = sinkhorn_scale(M, MarginalSpec(r, c), SinkhornConfig(args.tolerance, args.max_iterations))
    rows = [{"row": i + 1, **{f"col_{j + 1}": res.scaled[i, j] for j in range(m)}} for i in range(n)]
    print(f"# iterations={res.iterations} final_error={res.final_error:.3g}", file=sys.stderr)
    return rows, None


def cmd_episode(args):
    T = _matrix(args)
    L = _matrix(args, "learner_") if (args.learner_matrix or args.learner_fixture) else T
    m = T.shape[1]
    pt = _prior(args.prior, m)
    pl = _prior(args.learner_prior, m) if args.learner_prior else pt
    h = _hyp(args.h, m)
    cfg = EpisodeConfig(T, L, pt, pl, true_hypothesis=h, rounds=args.rounds, mode=Mode(args.mode), seed=args.seed)
    tr = run_episode(cfg)
    rows = []
    for k in range(args.rounds + 1):
        row = {"round": k, "datum": int(tr.data[k - 1]) + 1 if k else ""}
        row.update({f"teacher_theta_{j + 1}": tr.teacher_posteriors[k, j] for j in range(m)})
        row.update({f"learner_theta_{j + 1}": tr.learner_posteriors[k, j] for j in range(m)})
        row.update(teacher_log_odds=tr.teacher_log_odds[k], learner_log_odds=tr.learner_log_odds[k])
        rows.append(row)
    return rows, None


def cmd_roc(args):
    M = normalize_columns(_matrix(args))
    rep = roc_report(M)
    bi, sc = rep.per_hypothesis_bi, rep.per_hypothesis_scbi
    rows = [dict(h=h + 1, roc_bi=bi[h], bi_argmin=rep.relevant_column_bi[h] + 1, roc_scbi=sc[h],
                 scbi_argmin=rep.relevant_column[h] + 1, scbi_minus_bi=sc[h] - bi[h])
            for h in range(M.shape[1])]
    return rows, None


def cmd_roc_compare(args):
    n, m = args.shape
    res = ex.roc_comparison(n, m, args.samples, args.seed, args.threads, args.chunk)
    return [res.as_row()], None


def cmd_short_run(args):
    n, m = args.shape
    rows = ex.short_run_stats(n, m, args.matrices, args.exact_rounds, args.mc_rounds, args.episodes,
                              args.seed, _hyp(args.h, m), args.threads)
    for r in rows:
        r["h"] += 1
    return rows, ex.SHORT_RUN_COLUMNS


def cmd_exact_tree(args):
    M = _matrix(args)
    m = M.shape[1]
    theta0 = _prior(args.prior, m)
    h = _hyp(args.h, m)
    lo, hi = args.band
    mu = AtomicMeasure.dirac(theta0)
    rows = []
    for k in range(args.rounds + 1):
        if k:
            if M.shape[0] ** k > args.cap:
                raise ScbiError(f"{M.shape[0]}^{k} atoms exceeds --cap {args.cap}")
            mu = psi_step(M, h, mu)
        row = dict(round=k, atoms=len(mu), mean_theta_h=expectation(mu, component(h)),
                   sd_theta_h=float(np.sqrt(variance(mu, component(h)))),
                   middle_mass=mu.mass_between(h, lo, hi))
        row.update({f"mean_ratio_{j + 1}": expectation(mu, ratio(j, h)) for j in range(m) if j != h})
        rows.append(row)
    return rows, None


def _scheme_params(args) -> dict:
    p = {}
    if getattr(args, "radii", None) is not None:
        p["radii"] = list(args.radii)
    for key in ("layers", "radius_step", "count", "n_directions"):
        v = getattr(args, key, None)
        if v is not None:
            p[key] = v
    return p


def cmd_stability_prior(args):
    M = _matrix(args)
    m = M.shape[1]
    h = _hyp(args.h, m)
    rows = ex.prior_perturbation_sweep(M, _prior(args.prior, m), h, args.scheme, _scheme_params(args),
                                       args.episodes, args.seed, args.threads,
                                       fixture_id=args.fixture or Path(args.matrix).stem, k_max=args.k_max)
    for r in rows:
        r["h"] += 1
    return rows, None


def cmd_stability_matrix(args):
    M = _matrix(args)
    m = M.shape[1]
    h = _hyp(args.h, m)
    rows = ex.matrix_perturbation_sweep(M, _prior(args.prior, m), h, args.column, args.scheme,
                                        _scheme_params(args), args.episodes, args.seed, args.threads,
                                        fixture_id=args.fixture or Path(args.matrix).stem, k_max=args.k_max)
    for r in rows:
        r["column"] += 1
    return rows, None


def cmd_gridworld(args):
    cfg = GridWorldConfig(width=args.width, gamma=args.gamma)
    if args.experiment == "comparison":
        return run_gridworld_comparison(cfg, [a.strip() for a in args.trajectory.split(",") if a.strip()]), None
    if args.seed is None:
        raise _UsageError("gridworld --experiment mismatch needs --seed")
    return gridworld_mismatch_experiment(cfg, args.episodes, args.seed, args.rounds, args.offset), None


def cmd_fixtures(args):
    rows = []
    raw = FIXTURES.raw()
    names = list(FIXTURES.matrices_3x3) + list(FIXTURES.matrices_4x4) + list(FIXTURES.priors_3) \
        + list(FIXTURES.priors_4)
    for name in names:
        if name.startswith("m"):
            A = np.array(raw[name]) if args.raw else FIXTURES.matrix(name)
        else:
            A = np.array(raw[name])[None, :] if args.raw else FIXTURES.prior(name)[None, :]
        for i, vals in enumerate(A):
            rows.append({"name": name, "row": i + 1, **{f"v{j + 1}": v for j, v in enumerate(vals)}})
    return rows, ["name", "row", "v1", "v2", "v3", "v4"]


class _UsageError(Exception):
    pass


# -- parser ----------------------------------------------------------------------

def _add_matrix_flags(p, prefix: str = ""):
    label = prefix.replace("_", "-")
    g = p.add_mutually_exclusive_group()
    g.add_argument(f"--{label}matrix", help="matrix file: comma-separated rows, no header")
    g.add_argument(f"--{label}fixture", help="fixture matrix name (m1..m5, m1p..m3p)")


def _add_common(p, seed_required: bool | None):
    p.add_argument("--out", help="write CSV here (plus a .manifest.json sidecar) instead of stdout")
    p.add_argument("--threads", type=_positive_int, default=None, help="worker threads (default: all cores)")
    p.add_argument("--config", help="key=value file of defaults; flags on the command line win")
    if seed_required is not None:
        p.add_argument("--seed", type=int, required=seed_required, default=None, help="base random seed")


def _add_sweep_flags(p):
    p.add_argument("--prior", default=None, help="prior: fixture name or comma list (default uniform)")
    p.add_argument("--h", type=int, default=1, help="true hypothesis (1-based)")
    p.add_argument("--episodes", type=_positive_int, default=1000, help="episodes per point")
    p.add_argument("--k-max", type=_positive_int, default=3000, help="round cap per episode")
    p.add_argument("--layers", type=int, default=None, help="circles/disc layers")
    p.add_argument("--radius-step", type=float, default=None, help="circles/disc radius step")
    p.add_argument("--count", type=int, default=None, help="points for uniform/equi_kl/interpolation")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="scbi", formatter_class=fmt,
                                     description="Sequential cooperative Bayesian inference experiments.")
    parser.add_argument("--from-manifest", help="rerun the recorded command from a manifest file")
    parser.add_argument("--out", dest="top_out", help="output path for --from-manifest (default: recorded path)")
    parser.add_argument("--threads", dest="top_threads", type=_positive_int, default=None,
                        help="worker threads for --from-manifest")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("sinkhorn", help="scale one matrix to given marginals", formatter_class=fmt)
    _add_matrix_flags(p)
    p.add_argument("--rows", type=_floats, default=None, help="row sums (default all 1)")
    p.add_argument("--cols", type=_floats, default=None, help="column sums (default n/m each)")
    p.add_argument("--tolerance", type=float, default=1e-12, help="stop when row error is below this")
    p.add_argument("--max-iterations", type=int, default=10_000, help="sweep cap")
    _add_common(p, None)
    p.set_defaults(handler=cmd_sinkhorn)

    p = sub.add_parser("episode", help="one BI or SCBI teaching episode (trace)", formatter_class=fmt)
    _add_matrix_flags(p)
    _add_matrix_flags(p, "learner_")
    p.add_argument("--mode", choices=[m.value for m in Mode], default="scbi", help="inference rule")
    p.add_argument("--prior", default=None, help="teacher prior: fixture name or comma list (default uniform)")
    p.add_argument("--learner-prior", default=None, help="learner prior (default: teacher's)")
    p.add_argument("--h", type=int, default=1, help="true hypothesis (1-based)")
    p.add_argument("--rounds", type=int, default=10, help="rounds to simulate")
    _add_common(p, True)
    p.set_defaults(handler=cmd_episode)

    p = sub.add_parser("roc", help="asymptotic BI and SCBI rates for one matrix", formatter_class=fmt)
    _add_matrix_flags(p)
    _add_common(p, None)
    p.set_defaults(handler=cmd_roc)

    p = sub.add_parser("roc-compare", help="P and E over random matrices of one shape", formatter_class=fmt)
    p.add_argument("--shape", type=_shape, required=True, help="NxM (rows x columns), N >= M")
    p.add_argument("--samples", type=_positive_int, default=100_000, help="random matrices")
    p.add_argument("--chunk", type=_positive_int, default=ex.CHUNK, help="matrices per task")
    _add_common(p, True)
    p.set_defaults(handler=cmd_roc_compare)

    p = sub.add_parser("short-run", help="short-run mean/spread of theta(h), BI vs SCBI", formatter_class=fmt)
    p.add_argument("--shape", type=_shape, default=(3, 3), help="NxM")
    p.add_argument("--matrices", type=_positive_int, default=100, help="random matrices")
    p.add_argument("--exact-rounds", type=int, default=5, help="rounds for exact enumeration")
    p.add_argument("--mc-rounds", type=int, default=10, help="rounds for Monte Carlo")
    p.add_argument("--episodes", type=int, default=1000, help="Monte Carlo episodes per matrix")
    p.add_argument("--h", type=int, default=1, help="true hypothesis (1-based)")
    _add_common(p, True)
    p.set_defaults(handler=cmd_short_run)

    p = sub.add_parser("exact-tree", help="exact posterior law over rounds", formatter_class=fmt)
    _add_matrix_flags(p)
    p.add_argument("--prior", default=None, help="prior: fixture name or comma list (default uniform)")
    p.add_argument("--h", type=int, default=1, help="true hypothesis (1-based)")
    p.add_argument("--rounds", type=int, default=6, help="rounds k (n^k atoms)")
    p.add_argument("--band", type=_floats, default=np.array([0.1, 0.9]), help="lo,hi for middle_mass")
    p.add_argument("--cap", type=int, default=10_000_000, help="maximum number of atoms")
    _add_common(p, None)
    p.set_defaults(handler=cmd_exact_tree)

    p = sub.add_parser("stability-prior", help="successful rate under learner-prior perturbation",
                       formatter_class=fmt)
    _add_matrix_flags(p)
    _add_sweep_flags(p)
    p.add_argument("--scheme", choices=["rays", "circles", "uniform"], default="rays", help="point layout")
    p.add_argument("--radii", type=_floats, default=None, help="ray radii (rays scheme)")
    p.add_argument("--n-directions", type=int, default=None, help="ray count")
    _add_common(p, True)
    p.set_defaults(handler=cmd_stability_prior)

    p = sub.add_parser("stability-matrix", help="successful rate under learner-matrix perturbation",
                       formatter_class=fmt)
    _add_matrix_flags(p)
    _add_sweep_flags(p)
    p.add_argument("--column", choices=["relevant", "irrelevant"], default="relevant", help="column perturbed")
    p.add_argument("--scheme", choices=["disc", "equi_kl", "interpolation"], default="disc", help="layout")
    _add_common(p, True)
    p.set_defaults(handler=cmd_stability_matrix)

    p = sub.add_parser("gridworld", help="grid-world teaching comparison or gamma mismatch",
                       formatter_class=fmt)
    p.add_argument("--experiment", choices=["comparison", "mismatch"], default="comparison", help="which table")
    p.add_argument("--gamma", type=float, default=0.9, help="discount factor")
    p.add_argument("--width", type=int, default=5, help="grid width")
    p.add_argument("--trajectory", default="left,up", help="actions for the comparison")
    p.add_argument("--episodes", type=_positive_int, default=10_000, help="mismatch episodes")
    p.add_argument("--rounds", type=int, default=2, help="mismatch trajectory length")
    p.add_argument("--offset", type=float, default=0.1, help="learner gamma offset magnitude")
    _add_common(p, False)
    p.set_defaults(handler=cmd_gridworld)

    p = sub.add_parser("fixtures", help="dump the built-in matrices and priors", formatter_class=fmt)
    p.add_argument("--raw", action="store_true", help="printed literals instead of renormalized values")
    _add_common(p, None)
    p.set_defaults(handler=cmd_fixtures)
    return parser


# -- config files and dispatch -------------------------------------------------------

def read_config(path) -> list[str]:
    """``key=value`` lines (``#`` comments) turned into ``--key value`` flags."""
    flags = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _UsageError(f"bad config line {line!r}; expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes"):
            flags.append(flag)
        elif value.lower() not in ("false", "no"):
            flags += [flag, value]
    return flags


def _expand_config(argv: list[str], commands) -> list[str]:
    out, cfg = [], None
    it = iter(argv)
    for tok in it:
        if tok == "--config":
            cfg = next(it, None)
        elif tok.startswith("--config="):
            cfg = tok.split("=", 1)[1]
        else:
            out.append(tok)
    if cfg is None:
        return argv
    pos = next((i for i, t in enumerate(out) if t in commands), None)
    if pos is None:
        raise _UsageError("--config needs a subcommand")
    return out[:pos + 1] + read_config(cfg) + out[pos + 1:] + ["--config", cfg]


def _parameters(args) -> dict:
    params = {}
    for k, v in vars(args).items():
        if k in _RUNTIME_KEYS or k.startswith("top_"):
            continue
        params[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return params


def _restore(params: dict) -> dict:
    out = dict(params)
    for key in ("rows", "cols", "band", "radii"):
        if out.get(key) is not None:
            out[key] = np.asarray(out[key], dtype=float)
    if out.get("shape") is not None:
        out["shape"] = tuple(out["shape"])
    return out


def run(args) -> int:
    rows, columns = args.handler(args)
    if args.out:
        path = write_csv(args.out, rows, columns)
        write_manifest(path, args.command, _parameters(args), getattr(args, "seed", None))
        print(f"wrote {path}")
    else:
        sys.stdout.write(table_to_csv(rows, columns))
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    commands = parser._subparsers._group_actions[0].choices
    try:
        argv = _expand_config(argv, commands)
    except (_UsageError, OSError) as exc:
        parser.print_usage(sys.stderr)
        print(f"scbi: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.from_manifest:
            man = read_manifest(args.from_manifest)
            driver = man["driver"]
            sub = commands[driver]
            ns = argparse.Namespace(**_restore(man["parameters"]))
            ns.command = driver
            ns.handler = sub.get_default("handler")
            ns.out = args.top_out or man["outputs"][0]
            ns.threads = args.top_threads
            ns.config = None
            return run(ns)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("scbi: error: a subcommand or --from-manifest is required", file=sys.stderr)
            return 2
        return run(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"scbi: error: {exc}", file=sys.stderr)
        return 2
    except (ScbiError, ValueError, KeyError, IndexError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
