"""Command-line entry point and delimited-text result emission.

One command per process; every run is a pure function of its resolved
configuration and seed (SMALLBALL_SEED supplies the default seed).  Output
files carry ``#``-prefixed metadata lines (version, seed, resolved config and
its digest) above the CSV header, and floats are printed with 17 significant
digits so re-parsing reproduces them bit-exactly.

Exit codes: 0 success, 2 validation failure (offending key named), 3
numerical failure (cell named when applicable).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import threading

import numpy as np

from . import __version__
from .norms import L1, SLOPE, TRACE, RegNorm
from .rates import (
    CORRELATED,
    ISO_GAUSSIAN,
    RADEMACHER,
    DesignModel,
    NoiseModel,
    RateConstants,
    critical_radii,
    width_closed_form,
    width_mc,
)
from .simulate import ExperimentSpec, ExperimentResult, make_target, run_experiment, run_trial
from .sparsity import (
    LambdaPolicy,
    select_lambda,
    solve_sparsity_equation,
    sparsity_condition,
    sparsity_margin_oracle,
)


class ValidationError(Exception):
    pass


class NumericalError(Exception):
    pass


def format_value(v) -> str:
    if isinstance(v, bool):
        return "True" if v else "False"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def emit_results(rows: list, header: list, path: str, meta: dict) -> None:
    """Write metadata lines, a header row, then one CSV row per record."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        for k, v in meta.items():
            f.write(f"# {k}={v}\n")
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(c) for c in row])


def parse_results(path: str):
    """Re-read an emitted file: (metadata dict, header, rows of strings)."""
    meta, header, rows = {}, None, []
    with open(path, newline="", encoding="utf-8") as f:
        plain = []
        for line in f:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v
            else:
                plain.append(line)
        for rec in csv.reader(plain):
            if header is None:
                header = rec
            elif rec:
                rows.append(rec)
    return meta, header, rows


def config_digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _meta(command: str, cfg: dict) -> dict:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return {
        "smallball_version": __version__,
        "command": command,
        "seed": cfg.get("seed", 0),
        "config_digest": config_digest(cfg),
        "config": blob,
    }


def _load_matrix(path: str) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def _build_norm(args) -> RegNorm:
    if args.norm == TRACE:
        if args.m is None or args.T is None:
            raise ValidationError("norm=trace requires --m and --T")
        return RegNorm.trace(args.m, args.T)
    if args.d is None:
        raise ValidationError(f"norm={args.norm} requires --d")
    if args.norm == SLOPE:
        if getattr(args, "beta_file", None):
            beta = np.loadtxt(args.beta_file, delimiter=",", dtype=float).ravel()
            if beta.size != args.d:
                raise ValidationError("beta_file length does not match --d")
            return RegNorm.slope(weights=beta)
        return RegNorm.slope(d=args.d, C=args.slope_c)
    return RegNorm.l1(args.d)


def _build_design(args, dim) -> DesignModel:
    if args.design == CORRELATED:
        if not getattr(args, "cov_file", None):
            raise ValidationError("design=correlated-gaussian requires --cov-file")
        return DesignModel(CORRELATED, dim, _load_matrix(args.cov_file))
    return DesignModel(args.design, dim)


def _build_noise(args) -> NoiseModel:
    return NoiseModel(args.noise, args.noise_scale, args.noise_dof, args.noise_q)


def _constants(args) -> RateConstants:
    return RateConstants(args.c_q, args.c_m, args.zero_factor)


def _resolved(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys if hasattr(args, k)}


def _emit_single(args, command, keys, header, row):
    cfg = _resolved(args, keys)
    if args.out:
        emit_results([row], header, args.out, _meta(command, cfg))
    line = ",".join(f"{h}={format_value(v)}" for h, v in zip(header, row))
    print(line)


_COMMON_KEYS = [
    "norm", "d", "m", "T", "slope_c", "beta_file", "design", "cov_file",
    "noise", "noise_scale", "noise_dof", "noise_q", "delta", "kappa",
    "c_q", "c_m", "zero_factor", "seed", "out",
]


def cmd_rates(args) -> int:
    norm = _build_norm(args)
    design = _build_design(args, norm.shape)
    rep = critical_radii(
        norm, design, _build_noise(args), args.N, rho=args.rho, delta=args.delta,
        constants=_constants(args), kappa=args.kappa,
    )
    header = ["rho", "r_q", "r_m", "r", "kappa", "epsilon", "theta",
              "gamma_o_bound", "lambda_lower", "lambda_upper", "lambda_mid"]
    mid = (7.0 / 16.0) * rep.theta * rep.r**2 / rep.rho if rep.rho > 0 else float("nan")
    row = [rep.rho, rep.r_q, rep.r_m, rep.r, rep.kappa, rep.epsilon, rep.theta,
           rep.gamma_o_bound, rep.lambda_lower, rep.lambda_upper, mid]
    _emit_single(args, "rates", _COMMON_KEYS + ["N", "rho"], header, row)
    return 0


def cmd_widths(args) -> int:
    norm = _build_norm(args)
    design = _build_design(args, norm.shape)
    closed = width_closed_form(norm, args.rho, args.r, design)
    est = width_mc(norm, args.rho, args.r, design, args.trials, args.seed)
    header = ["rho", "r", "closed_form", "lower_mean", "lower_se", "upper_mean",
              "upper_se", "trials"]
    row = [args.rho, args.r, closed, est.lower_mean, est.lower_se,
           est.upper_mean, est.upper_se, est.trials]
    _emit_single(args, "widths", _COMMON_KEYS + ["rho", "r", "trials"], header, row)
    return 0


def cmd_sparsity(args) -> int:
    norm = _build_norm(args)
    design = _build_design(args, norm.shape)
    noise = _build_noise(args)
    regime = "isotropic" if design.is_isotropic else "non-isotropic"
    if args.rho is not None:
        rep = critical_radii(norm, design, noise, args.N, rho=args.rho,
                             delta=args.delta, constants=_constants(args), kappa=args.kappa)
        rho_star = args.rho
    else:
        rho_star, rep = solve_sparsity_equation(
            norm, args.s, args.N, design, noise, delta=args.delta,
            constants=_constants(args), kappa=args.kappa,
        )
    chk = sparsity_condition(norm, args.s, rho_star, rep.r, regime)
    lam = select_lambda(rep, rho_star) if chk.satisfied else float("nan")
    header = ["s", "rho", "r", "condition_lhs", "condition_rhs", "satisfied",
              "margin_lower_bound", "lambda_lower", "lambda_upper", "lambda_mid"]
    row = [args.s, rho_star, rep.r, chk.condition_lhs, chk.condition_rhs,
           chk.satisfied, chk.margin_lower_bound if chk.satisfied else float("nan"),
           rep.lambda_lower, rep.lambda_upper, lam]
    _emit_single(args, "sparsity", _COMMON_KEYS + ["N", "s", "rho"], header, row)
    return 0


def cmd_oracle(args) -> int:
    norm = _build_norm(args)
    t_star = np.array([float(x) for x in args.t_star.split(",")])
    if t_star.size != norm.dim:
        raise ValidationError("t_star length does not match --d")
    est = sparsity_margin_oracle(norm, t_star, args.rho, args.r,
                                 resolution=args.resolution, seed=args.seed)
    header = ["rho", "r", "margin", "n_feasible", "empty"]
    row = [est.rho, est.r, est.value, est.n_feasible, est.empty]
    _emit_single(args, "oracle", _COMMON_KEYS + ["rho", "r", "resolution", "t_star"],
                 header, row)
    return 0


def cmd_solve(args) -> int:
    norm = _build_norm(args)
    design = _build_design(args, norm.shape)
    noise = _build_noise(args)
    target = make_target(norm, args.s, args.amplitude, args.budget,
                         seed=args.seed)
    lam = "auto" if args.lam == "auto" else float(args.lam)
    rec = run_trial(norm, design, noise, target, args.N, lam=lam, seed=args.seed,
                    p=args.p, tol=args.tol, max_iter=args.max_iter)
    _emit_single(args, "solve",
                 _COMMON_KEYS + ["N", "s", "amplitude", "budget", "p", "lam",
                                 "tol", "max_iter"],
                 ExperimentResult.header(), rec.row())
    return 0


_EXPERIMENT_KEYS = {
    "norm": str, "slope_c": float, "design": str, "cov_file": str,
    "noise": str, "noise_scale": float, "noise_dof": float, "noise_q": float,
    "s": int, "amplitude": float, "budget": float, "p": float, "lam": object,
    "N_values": list, "dims": list, "replications": int, "seed": int,
    "tol": float, "max_iter": int, "threads": int, "out": str,
}


def _experiment_spec(cfg: dict) -> ExperimentSpec:
    dims = []
    for d in cfg["dims"]:
        dims.append(tuple(int(x) for x in d) if isinstance(d, (list, tuple)) else int(d))
    cov = _load_matrix(cfg["cov_file"]) if cfg.get("cov_file") else None
    lam = cfg["lam"]
    if lam != "auto":
        lam = float(lam)
    return ExperimentSpec(
        norm_kind=cfg["norm"],
        slope_c=cfg["slope_c"],
        design_kind=cfg["design"],
        cov=cov,
        noise_kind=cfg["noise"],
        noise_scale=cfg["noise_scale"],
        noise_dof=cfg["noise_dof"],
        noise_q=cfg["noise_q"],
        s=cfg["s"],
        amplitude=cfg["amplitude"],
        perturbation_budget=cfg["budget"],
        p=cfg["p"],
        lam=lam,
        N_values=tuple(int(n) for n in cfg["N_values"]),
        dims=tuple(dims),
        replications=cfg["replications"],
        seed=cfg["seed"],
        tol=cfg["tol"],
        max_iter=cfg["max_iter"],
    )


def cmd_experiment(args) -> int:
    cfg = {
        "norm": L1, "slope_c": 1.0, "design": ISO_GAUSSIAN, "cov_file": None,
        "noise": "gaussian", "noise_scale": 1.0, "noise_dof": 3.0, "noise_q": 2.5,
        "s": 4, "amplitude": 1.0, "budget": 0.0, "p": 1.5, "lam": "auto",
        "N_values": [256, 512, 1024], "dims": [64], "replications": 10,
        "seed": default_seed(), "tol": 1e-9, "max_iter": 20000, "threads": 1,
        "out": "experiment.csv",
    }
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            user = json.load(f)
        for k, v in user.items():
            if k not in _EXPERIMENT_KEYS:
                raise ValidationError(f"unknown config key {k!r}")
            cfg[k] = v
    for k in ("seed", "threads", "out", "replications"):
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    spec = _experiment_spec(cfg)
    meta = _meta("experiment", cfg)

    partial_path = cfg["out"] + ".partial"
    lock = threading.Lock()
    with open(partial_path, "w", newline="", encoding="utf-8") as pf:
        for k, v in meta.items():
            pf.write(f"# {k}={v}\n")
        writer = csv.writer(pf)
        writer.writerow(ExperimentResult.header())

        def on_record(rec):
            with lock:
                writer.writerow([format_value(c) for c in rec.row()])
                pf.flush()

        result = run_experiment(spec, threads=cfg["threads"], on_record=on_record)

    emit_results(result.rows(), ExperimentResult.header(), cfg["out"], meta)
    failures = [r for r in result.records if r.failure]
    print(f"wrote {cfg['out']}: {len(result.records)} records, {len(failures)} failures")
    if failures:
        worst = failures[0]
        raise NumericalError(
            f"cell (N={worst.N}, dim={worst.dim}, rep={worst.rep}): {worst.failure}"
        )
    return 0


def default_seed() -> int:
    return int(os.environ.get("SMALLBALL_SEED", "0"))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--norm", choices=[L1, SLOPE, TRACE], default=L1)
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--slope-c", dest="slope_c", type=float, default=1.0)
    p.add_argument("--beta-file", dest="beta_file")
    p.add_argument("--design", choices=[ISO_GAUSSIAN, RADEMACHER, CORRELATED],
                   default=ISO_GAUSSIAN)
    p.add_argument("--cov-file", dest="cov_file")
    p.add_argument("--noise", choices=["gaussian", "student-t"], default="gaussian")
    p.add_argument("--noise-scale", dest="noise_scale", type=float, default=1.0)
    p.add_argument("--noise-dof", dest="noise_dof", type=float, default=3.0)
    p.add_argument("--noise-q", dest="noise_q", type=float, default=2.5)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--kappa", type=float, default=0.5)
    p.add_argument("--c-q", dest="c_q", type=float, default=1.0)
    p.add_argument("--c-m", dest="c_m", type=float, default=1.0)
    p.add_argument("--zero-factor", dest="zero_factor", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smallball")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rates", help="critical radii and the lambda window at a given rho")
    _add_common(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("widths", help="closed-form width bound and Monte Carlo sandwich")
    _add_common(p)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--trials", type=int, default=10000)
    p.set_defaults(func=cmd_widths)

    p = sub.add_parser("sparsity", help="sparsity condition / smallest feasible rho")
    _add_common(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--rho", type=float, default=None)
    p.set_defaults(func=cmd_sparsity)

    p = sub.add_parser("oracle", help="norming-margin oracle at small dimension")
    _add_common(p)
    p.add_argument("--t-star", dest="t_star", required=True,
                   help="comma-separated target entries")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--resolution", type=int, default=100000)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("solve", help="one synthetic solve with explicit or theory lambda")
    _add_common(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--s", type=int, default=4)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--budget", type=float, default=0.0)
    p.add_argument("--p", type=float, default=1.5)
    p.add_argument("--lam", default="auto")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=20000)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiment", help="seeded factorial sweep from a JSON config")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None:
        args.seed = default_seed()
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
