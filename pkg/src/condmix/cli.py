"""Command line interface.

Subcommands: generate, fit, select, kl, slope, theory, experiment. Results
are printed as JSON (sorted keys) or written to ``--output``; tables go to
``--output-dir``. Usage errors exit with status 2, data errors with 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .divergence import hellinger_tensorized, jkl_tensorized, kl_tensorized
from .exceptions import CondMixError
from .experiments import DEFAULT_LADDER, ExperimentConfig, ladder_csv, loglog_slope, run_experiment, truth_density
from .initialization import InitConfig
from .model import Dataset, MixtureParams, ModelSpec, sample
from .newton_em import FitConfig, FitResult
from .selection import fit_one, model_dim, select, select_from_fits, slope_heuristic
from .theory import entropy_constants, milder_penalty, run_bracket_trials, sigma_m_bound, theoretical_penalty

log = logging.getLogger("condmix")


class DataError(Exception):
    """Bad input file or content; maps to exit status 1."""


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------


def int_range(text: str) -> list[int]:
    """``"1..20"``, ``"1,3,5"`` or a mix such as ``"1..3,7"``."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..")
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise ValueError
                out.extend(range(lo, hi + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer range {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty range")
    return out


def floor_arg(text: str):
    if text in ("fixed", "data"):
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("variance floor must be 'fixed', 'data' or a positive number") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("explicit variance floor must be positive")
    return value


def kappa_arg(text: str):
    if text == "slope":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("kappa must be a number or 'slope'") from None
    if value < 0:
        raise argparse.ArgumentTypeError("kappa must be non-negative")
    return value


def _global_parent() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes (default 1)")
    g.add_argument("--output-dir", default=argparse.SUPPRESS, help="directory for CSV/JSON tables")
    return g


def _fit_parent() -> argparse.ArgumentParser:
    f = argparse.ArgumentParser(add_help=False)
    f.add_argument("--weight-degree", type=int, default=1)
    f.add_argument("--mean-degree", type=int, default=1)
    f.add_argument("--init", choices=("regular", "naive", "clever"), default="regular")
    f.add_argument("--init-trials", type=int, default=50)
    f.add_argument("--race-steps", type=int, default=3)
    f.add_argument("--final-steps", type=int, default=10)
    f.add_argument("--max-em-iters", type=int, default=200)
    f.add_argument("--em-rel-tol", type=float, default=1e-6)
    f.add_argument("--newton-steps", type=int, default=5)
    f.add_argument("--variance-floor", type=floor_arg, default="fixed")
    f.add_argument("--alpha", type=float, default=0.05)
    f.add_argument("--stop", choices=("tol", "fixed"), default="tol")
    f.add_argument("--enforce-coeff-bounds", action="store_true")
    return f


def build_parser() -> argparse.ArgumentParser:
    gp = _global_parent()
    fp = _fit_parent()
    parser = argparse.ArgumentParser(
        prog="condmix", description="Conditional density estimation with Gaussian regression mixtures.", parents=[gp]
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[gp], help="sample a dataset as CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--example", choices=("P", "NP"))
    src.add_argument("--truth", help="MixtureParams JSON file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--output", help="CSV path (default stdout)")

    p = sub.add_parser("fit", parents=[gp, fp], help="fit one model")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--output", help="JSON path (default stdout)")

    p = sub.add_parser("select", parents=[gp, fp], help="fit a range of K and select one")
    p.add_argument("--data", required=True)
    p.add_argument("--k-range", type=int_range, default=int_range("1..10"))
    p.add_argument("--kappa", type=kappa_arg, default=1.0)
    p.add_argument("--penalty", choices=("dim_only", "dim_plus_xm", "theory"), default="dim_only")
    p.add_argument("--C", type=float, default=None, help="constant of the theory penalty")
    p.add_argument("--no-params", action="store_true", help="omit fitted parameters from the JSON")
    p.add_argument("--output", help="JSON path (default stdout)")

    p = sub.add_parser("kl", parents=[gp], help="Monte-Carlo divergence from a truth to a fit")
    p.add_argument("--truth", required=True, help="'P', 'NP' or a MixtureParams JSON file")
    p.add_argument("--fit", required=True, help="FitResult or MixtureParams JSON file")
    p.add_argument("--data", required=True, help="CSV whose covariates are the design points")
    p.add_argument("--my", type=int, default=1000)
    p.add_argument("--divergence", choices=("kl", "jkl", "hellinger"), default="kl")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--output", help="JSON path (default stdout)")

    p = sub.add_parser("slope", parents=[gp, fp], help="slope-heuristic calibration of kappa")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV to fit over --k-range")
    src.add_argument("--selection", help="JSON written by 'select'")
    p.add_argument("--k-range", type=int_range, default=int_range("1..10"))
    p.add_argument("--grid-min", type=float, default=0.01)
    p.add_argument("--grid-max", type=float, default=10.0)
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("--output", help="JSON path (default stdout)")

    p = sub.add_parser("theory", parents=[gp], help="penalty constants and bracket checks")
    tsub = p.add_subparsers(dest="theory_command", required=True)
    t = tsub.add_parser("constants", parents=[gp], help="entropy and penalty constants")
    t.add_argument("--spec", help="ModelSpec JSON file (default: K=2 affine model)")
    t.add_argument("--kmax", type=int, default=20)
    t.add_argument("--kappa", type=float, default=1.0)
    t.add_argument("--c-u", type=float, default=1.0)
    t.add_argument("--n", type=int, default=None, help="also report penalties at this sample size")
    t.add_argument("--output", help="JSON path (default stdout)")
    t = tsub.add_parser("verify-bracket", parents=[gp], help="randomized Gaussian bracket verification")
    t.add_argument("--trials", type=int, default=200)
    t.add_argument("--p", type=int, default=1, choices=(1, 2))
    t.add_argument("--delta", type=float, default=0.5)
    t.add_argument("--kappa", type=float, default=1.0)
    t.add_argument("--mean-gap-factor", type=float, default=1.0)
    t.add_argument("--output", help="JSON path (default stdout)")

    p = sub.add_parser("experiment", parents=[gp, fp], help="simulation study with CSV tables")
    p.add_argument("--example", choices=("P", "NP"), default="P")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--k-range", type=int_range, default=int_range("1..10"))
    p.add_argument("--seeds", type=int_range, default=None, help="replicate seeds (default 0..54)")
    p.add_argument("--kappa", type=kappa_arg, default=1.0)
    p.add_argument("--penalty", choices=("dim_only", "dim_plus_xm"), default="dim_only")
    p.add_argument("--my", type=int, default=1000)
    p.add_argument("--selected-only", action="store_true", help="estimate KL of the selected model only")
    p.add_argument("--ladder", type=int_range, default=None,
                   help=f"sample sizes for the risk curve, e.g. {','.join(map(str, DEFAULT_LADDER))}")
    return parser


# ---------------------------------------------------------------------------
# I/O helpers
# ---------------------------------------------------------------------------


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None


def _read_data(path: str) -> Dataset:
    try:
        return Dataset.from_csv(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _params_from(obj: dict) -> MixtureParams:
    try:
        return MixtureParams.from_dict(obj["params"] if "params" in obj else obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"cannot read mixture parameters: {exc}") from None


def _truth(text: str) -> MixtureParams:
    if text in ("P", "NP"):
        return truth_density(text)
    return _params_from(_read_json(text))


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _out_dir(args) -> str | None:
    d = getattr(args, "output_dir", None)
    if d:
        os.makedirs(d, exist_ok=True)
    return d


def _configs(args, seed: int) -> tuple[InitConfig, FitConfig]:
    init = InitConfig(args.init, args.init_trials, args.race_steps, args.final_steps, 5, seed)
    fit = FitConfig(args.max_em_iters, args.em_rel_tol, args.newton_steps, args.variance_floor, args.alpha,
                    args.enforce_coeff_bounds, args.stop)
    return init, fit


def _template(args, data: Dataset) -> ModelSpec:
    return ModelSpec(K=1, weight_degree=args.weight_degree, mean_degree=args.mean_degree, d=data.d, p=data.p)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> None:
    truth = truth_density(args.example) if args.example else _params_from(_read_json(args.truth))
    if args.n < 1:
        raise DataError("--n must be positive")
    data = sample(truth, args.n, args.seed)
    _emit(data.to_csv(), args.output)


def cmd_fit(args) -> None:
    data = _read_data(args.data)
    init, fit = _configs(args, args.seed)
    spec = _template(args, data).with_K(args.k)
    res = fit_one(data, spec, init, fit)
    _emit(dumps(res.to_dict()), args.output)


def cmd_select(args) -> None:
    data = _read_data(args.data)
    init, fit = _configs(args, args.seed)
    res = select(data, args.k_range, _template(args, data), init, fit, kappa=args.kappa,
                 penalty_mode=args.penalty, C=args.C)
    out_dir = _out_dir(args)
    if out_dir:
        with open(os.path.join(out_dir, "slope_path.csv"), "w", newline="") as fh:
            fh.write(res.dim_path_csv())
    _emit(dumps(res.to_dict(include_params=not args.no_params)), args.output)


def cmd_kl(args) -> None:
    truth = _truth(args.truth)
    fitted = _params_from(_read_json(args.fit))
    data = _read_data(args.data)
    if truth.d != data.d or fitted.d != data.d or truth.p != fitted.p:
        raise DataError("dimensions of truth, fit and data disagree")
    if args.my < 2:
        raise DataError("--my must be at least 2")
    if args.divergence == "kl":
        est = kl_tensorized(truth, fitted, data.x, args.my, args.seed)
    elif args.divergence == "jkl":
        if not 0 < args.rho < 1:
            raise DataError("--rho must lie in (0, 1)")
        est = jkl_tensorized(truth, fitted, args.rho, data.x, args.my, args.seed)
    else:
        est = hellinger_tensorized(truth, fitted, data.x, args.my, args.seed)
    _emit(dumps({"divergence": args.divergence, **est.to_dict()}), args.output)


def cmd_slope(args) -> None:
    grid = np.logspace(np.log10(args.grid_min), np.log10(args.grid_max), args.grid_size)
    if args.selection:
        obj = _read_json(args.selection)
        try:
            fits = {int(K): FitResult.from_dict(f) for K, f in obj["fits"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"selection JSON lacks fitted models: {exc}") from None
        if not fits:
            raise DataError("selection JSON lacks fitted models (was it written with --no-params?)")
        specs = {K: f.spec for K, f in fits.items()}
    else:
        data = _read_data(args.data)
        init, fit = _configs(args, args.seed)
        template = _template(args, data)
        specs = {K: template.with_K(K) for K in args.k_range}
        fits = {K: fit_one(data, specs[K], init, fit) for K in args.k_range}
    sh = slope_heuristic(fits, specs, grid)
    res = select_from_fits(fits, specs, sh.kappa_prescribed, kappa_grid=grid)
    out_dir = _out_dir(args)
    if out_dir:
        with open(os.path.join(out_dir, "slope_path.csv"), "w", newline="") as fh:
            fh.write(res.dim_path_csv())
    _emit(dumps({
        "kappa_hat": sh.kappa_hat,
        "kappa_prescribed": sh.kappa_prescribed,
        "chosen_K": res.chosen_K,
        "dims": {str(K): model_dim(specs[K]) for K in sorted(specs)},
        "loglik": {str(K): fits[K].loglik for K in sorted(fits)},
        "dim_path": [list(t) for t in sh.dim_path],
    }), args.output)


def cmd_theory(args) -> None:
    if args.theory_command == "constants":
        spec = ModelSpec.from_dict(_read_json(args.spec)) if args.spec else ModelSpec(K=2)
        consts = entropy_constants(spec, args.kmax, args.kappa, args.c_u)
        out = {"spec": spec.to_dict(), "constants": consts.to_dict(), "kraft_constant": 1.0 / (np.e - 1.0),
               "c_U_note": "c_U is a free universal constant; its value enters C1 additively through ln(c_U)"}
        if args.n is not None:
            dim = model_dim(spec)
            sb = sigma_m_bound(dim, consts.frakC, args.n)
            out.update({
                "n": args.n,
                "dim": dim,
                "theoretical_penalty": theoretical_penalty(spec, args.n, consts),
                "milder_penalty": milder_penalty(spec, args.n, consts),
                "sigma_m": sb.sigma,
                "n_sigma_m_sq": sb.n_sigma_sq,
                "n_sigma_m_sq_bound": sb.bound,
            })
        _emit(dumps(out), args.output)
    else:
        if not 0 < args.delta <= np.sqrt(2.0):
            raise DataError("--delta must lie in (0, sqrt(2)]")
        res = run_bracket_trials(args.trials, args.p, args.delta, args.kappa, args.seed, args.mean_gap_factor)
        _emit(dumps({"p": args.p, "delta": args.delta, "kappa": args.kappa,
                     "mean_gap_factor": args.mean_gap_factor, **res.to_dict()}), args.output)


def cmd_experiment(args) -> int:
    init, fit = _configs(args, args.seed)
    seeds = args.seeds if args.seeds is not None else list(range(55))
    base = ExperimentConfig(args.example, args.n, tuple(args.k_range), tuple(seeds), args.kappa, args.penalty,
                            args.my, not args.selected_only, args.weight_degree, args.mean_degree, init, fit,
                            args.threads)
    out_dir = _out_dir(args)
    sizes = args.ladder or [args.n]
    results = {}
    for n in sizes:
        cfg = ExperimentConfig(**{**base.__dict__, "n": n})
        sub = None if out_dir is None else (out_dir if len(sizes) == 1 else os.path.join(out_dir, f"n{n}"))
        results[n] = run_experiment(cfg, sub)
    summary = {str(n): r.summary() for n, r in results.items()}
    out = {"results": summary}
    if len(sizes) > 1:
        ok = [n for n, r in results.items() if r.ok_records]
        out["loglog_slope"] = loglog_slope(ok, [results[n].mean_kl_selected()[0] for n in ok]) if len(ok) > 1 else None
        out["ladder_note"] = "sample-size ladder chosen by the user or the default design"
        if out_dir:
            with open(os.path.join(out_dir, "risk_vs_n.csv"), "w", newline="") as fh:
                fh.write(ladder_csv(results))
    sys.stdout.write(dumps(out))
    return 1 if any(r.failure_rate > 0.5 for r in results.values()) else 0


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "select": cmd_select,
    "kl": cmd_kl,
    "slope": cmd_slope,
    "theory": cmd_theory,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("seed", 0), ("threads", 1), ("output_dir", None)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        status = COMMANDS[args.command](args)
    except (DataError, CondMixError, ValueError) as exc:
        print(f"condmix {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
