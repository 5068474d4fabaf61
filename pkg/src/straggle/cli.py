"""Command-line front end.

Exit status: 0 on success, 1 on usage errors, 2 on data or convergence
errors. Numeric results go to files; a short summary goes to stdout.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import checks
from .harness import ExperimentConfig, run_trials, variance_sweep
from .matrix import (ConvergenceError, MatrixMarketError, estimate_bounds,
                     gen_laplacian_3d, load_matrix, matvec, write_matrix_market)
from .sampling import SeedSpec, StraggleDistribution
from .solvers import (ChebyshevParams, RichardsonParams, chebyshev_classical,
                      chebyshev_coeffs, chebyshev_straggler, correction_factor,
                      omega_cr, richardson_classical, richardson_straggler)

OUTPUT_DIR_ENV = "STRAGGLE_OUTPUT_DIR"

# config-file keys -> argparse destinations
_CONFIG_FLAGS = {
    "matrix": "matrix", "method": "method", "mode": "mode", "tau": "tau",
    "half_width": "half_width", "dist_kind": "dist_kind", "m_values": "m",
    "trials": "trials", "master_seed": "seed", "rhs": "rhs", "initial": "initial",
    "initial_seed": "initial_seed", "bounds": "bounds", "alpha_factor": "alpha_factor",
    "beta_factor": "beta_factor", "omega_factor": "omega_factor",
    "l_prefixes": "l_prefixes",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")


def _float_pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lambda_min,lambda_max': {text!r}")
    return lo, hi


def _out_path(path: str | None, default_name: str) -> str:
    if path:
        return path
    return os.path.join(os.environ.get(OUTPUT_DIR_ENV, "."), default_name)


def read_config(path: str) -> dict:
    """Flat key-value file: a JSON object, or ``key = value`` lines."""
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                key, sep, value = line.partition(":")
            if not sep:
                raise UsageError(f"config line is not key = value: {raw!r}")
            doc[key.strip()] = value.strip()
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a flat key-value mapping")
    unknown = set(doc) - set(_CONFIG_FLAGS)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return doc


def _coerce(key, value):
    if value is None:
        return None
    if key in ("m", "l_prefixes"):
        return value if isinstance(value, list) else _int_list(value)
    if key == "bounds":
        return tuple(value) if isinstance(value, list) else _float_pair(value)
    if key in ("trials", "seed", "half_width", "initial_seed"):
        return int(value)
    if key in ("tau", "alpha_factor", "beta_factor", "omega_factor"):
        return float(value)
    return value


def _experiment_config(args, **overrides) -> ExperimentConfig:
    values = {}
    if args.config:
        for key, value in read_config(args.config).items():
            values[_CONFIG_FLAGS[key]] = _coerce(_CONFIG_FLAGS[key], value)
    for dest in _CONFIG_FLAGS.values():
        given = getattr(args, dest, None)
        if given is not None:
            values[dest] = given
    values.update(overrides)
    if "matrix" not in values:
        raise UsageError("a matrix source is required (--matrix or config)")
    inverse = {v: k for k, v in _CONFIG_FLAGS.items()}
    try:
        return ExperimentConfig(**{inverse[k]: v for k, v in values.items()})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_experiment_flags(p, m_required=False):
    p.add_argument("--config", help="flat key-value config file; flags override it")
    p.add_argument("--matrix", help="path to .mtx, or laplacian3d:<n> / laplacian1d:<n>")
    p.add_argument("--method", choices=("richardson", "chebyshev"))
    p.add_argument("--mode", choices=("classical", "straggler_corrected",
                                      "straggler_uncorrected"))
    p.add_argument("--tau", type=float)
    p.add_argument("--half-width", dest="half_width", type=int)
    p.add_argument("--dist-kind", dest="dist_kind",
                   choices=("uniform_interval", "fixed", "full"))
    p.add_argument("--m", type=_int_list, help="iteration counts, e.g. 20,50")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rhs", help="'ones' (A times all-ones) or a vector file")
    p.add_argument("--initial", choices=("zero", "gaussian", "omega_v"))
    p.add_argument("--initial-seed", dest="initial_seed", type=int)
    p.add_argument("--bounds", type=_float_pair, help="explicit lambda_min,lambda_max")
    p.add_argument("--alpha-factor", dest="alpha_factor", type=float)
    p.add_argument("--beta-factor", dest="beta_factor", type=float)
    p.add_argument("--omega-factor", dest="omega_factor", type=float)
    p.add_argument("--l-prefixes", dest="l_prefixes", type=_int_list)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--json", help="also write the JSON record here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="straggle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-laplacian", help="write the 7-point 3-D Laplacian")
    p.add_argument("--n", type=int, required=True, help="grid points per dimension")
    p.add_argument("--out")

    p = sub.add_parser("eig-bounds", help="power-iteration spectral bounds")
    p.add_argument("--matrix", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="JSON output path")

    p = sub.add_parser("solve", help="one run of a solver, final iterate to a file")
    p.add_argument("--matrix", required=True)
    p.add_argument("--method", choices=("richardson", "chebyshev"), default="richardson")
    p.add_argument("--mode", default="straggler_corrected",
                   choices=("classical", "straggler_corrected", "straggler_uncorrected"))
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--half-width", dest="half_width", type=int, default=100)
    p.add_argument("--dist-kind", dest="dist_kind", default="uniform_interval",
                   choices=("uniform_interval", "fixed", "full"))
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("experiment", help="Monte-Carlo trials to CSV/JSON")
    _add_experiment_flags(p)

    p = sub.add_parser("variance-sweep", help="average sample variance versus m")
    _add_experiment_flags(p)

    sub.add_parser("verify", help="exactness checks of the expectation identities")
    return parser


def _cmd_gen_laplacian(args):
    if args.n < 1:
        raise UsageError("--n must be positive")
    A = gen_laplacian_3d(args.n)
    out = _out_path(args.out, f"laplacian3d_{args.n}.mtx")
    write_matrix_market(A, out, comment=f"7-point Laplacian, {args.n}^3 grid")
    print(f"wrote {out}: N={A.n} nnz={A.nnz}")


def _cmd_eig_bounds(args):
    A = load_matrix(args.matrix)
    b = estimate_bounds(A, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
    out = _out_path(args.out, "bounds.json")
    doc = {"matrix": args.matrix, "n": A.n, "lambda_min": b.lambda_min,
           "lambda_max": b.lambda_max, "omega_cr": omega_cr(b)}
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"lambda_min={b.lambda_min:.10g} lambda_max={b.lambda_max:.10g} -> {out}")


def _cmd_solve(args):
    if not 0.0 < args.tau <= 1.0:
        raise UsageError(f"--tau must lie in (0, 1], got {args.tau}")
    if args.m < 0:
        raise UsageError("--m must be nonnegative")
    A = load_matrix(args.matrix)
    v = matvec(A, np.ones(A.n))
    b = estimate_bounds(A)
    dist = StraggleDistribution.from_tau(args.tau, A.n, args.dist_kind, args.half_width)
    scale = correction_factor(dist) if args.mode == "straggler_corrected" else 1.0
    seed = SeedSpec(args.seed, args.trial)
    if args.method == "richardson":
        w = omega_cr(b)
        params = RichardsonParams(w, args.m, omega_hat=scale * w)
        if args.mode == "classical":
            z = richardson_classical(A, v, params).final
        else:
            z = richardson_straggler(A, v, params, dist, seed).final
    else:
        eta, nu = chebyshev_coeffs(0.9 * b.lambda_min, 1.1 * b.lambda_max)
        params = ChebyshevParams(eta, nu, args.m, nu_hat=scale * nu)
        if args.mode == "classical":
            z = chebyshev_classical(A, v, params).final
        else:
            z = chebyshev_straggler(A, v, params, dist, seed).final
    out = _out_path(args.out, "solution.txt")
    np.savetxt(out, z, fmt="%.17g")
    res = np.linalg.norm(v - matvec(A, z)) / np.linalg.norm(v)
    print(f"{args.method}/{args.mode} m={args.m}: relative residual {res:.3e} -> {out}")


def _write_record(record, args, default_name):
    out = _out_path(args.out, default_name)
    record.write(out)
    if args.json:
        with open(args.json, "w", newline="") as fh:
            fh.write(record.to_json())
    return out


def _cmd_experiment(args):
    cfg = _experiment_config(args)
    rec = run_trials(cfg, threads=args.threads)
    out = _write_record(rec, args, "experiment.csv")
    L = cfg.trials
    for m in cfg.m_values:
        s = rec.get(m, L)
        print(f"m={m:<4d} L={L:<6d} mse_vs_zm={s.mse_vs_zm:.4e} mse_vs_z={s.mse_vs_z:.4e}")
    print(f"wrote {out} ({rec.elapsed_seconds:.1f}s)")


def _cmd_variance_sweep(args):
    cfg = _experiment_config(args)
    if cfg.trials < 2:
        raise UsageError("variance-sweep needs --trials >= 2")
    rec = variance_sweep(cfg, cfg.m_values, cfg.trials, threads=args.threads)
    out = _write_record(rec, args, "variance.csv")
    for m in cfg.m_values:
        print(f"m={m:<4d} avg_sample_variance={rec.get(m).avg_sample_variance:.4e}")
    print(f"wrote {out} ({rec.elapsed_seconds:.1f}s)")


def _cmd_verify(args):
    results = checks.run_all()
    for c in results:
        print(c.line())
    return 0 if all(c.passed for c in results) else 2


COMMANDS = {
    "gen-laplacian": _cmd_gen_laplacian,
    "eig-bounds": _cmd_eig_bounds,
    "solve": _cmd_solve,
    "experiment": _cmd_experiment,
    "variance-sweep": _cmd_variance_sweep,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args) or 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: input file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except (MatrixMarketError, ConvergenceError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
