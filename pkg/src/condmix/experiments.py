"""Simulation experiments on the two reference conditional densities.

Both examples share the gate ``w_2(x) = 15x - 7`` on X ~ U[0, 1] and
component variances 0.3 and 0.4.

``P``
    Affine means ``-15x + 8`` and ``0.4x + 0.6``: the truth lies in the
    K = 2 affine model.
``NP``
    Quadratic means ``15x^2 - 22x + 7.4`` and ``-0.4x^2``: no affine model
    contains the truth.

Per seed an experiment samples data, runs the selection over ``K_range``
and estimates the tensorized KL divergence from the truth to every fitted
model and to the selected one.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .divergence import kl_tensorized
from .exceptions import CondMixError
from .initialization import InitConfig
from .model import MixtureParams, ModelSpec, make_params, sample
from .newton_em import FitConfig
from .selection import model_dim, select

log = logging.getLogger(__name__)

DEFAULT_LADDER = (500, 1000, 2000, 5000, 10000)
REFERENCE_DIM = 8  # K = 2 affine model with scalar covariate and response

__all__ = [
    "DEFAULT_LADDER",
    "ExperimentConfig",
    "ExperimentResult",
    "SeedRecord",
    "loglog_slope",
    "run_experiment",
    "run_ladder",
    "run_seed",
    "truth_density",
]


def truth_density(example: str) -> MixtureParams:
    """Conditional density of example ``"P"`` or ``"NP"``."""
    gate = [[0.0, 0.0], [-7.0, 15.0]]
    if example == "P":
        return make_params(gate, [[8.0, -15.0], [0.6, 0.4]], [0.3, 0.4])
    if example == "NP":
        return make_params(gate, [[7.4, -22.0, 15.0], [0.0, 0.0, -0.4]], [0.3, 0.4], weight_degree=1)
    raise ValueError(f"unknown example {example!r}, expected 'P' or 'NP'")


def _derive(*keys) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation study at a single sample size.

    ``kappa`` is a number or ``"slope"``. With ``kl_all_K`` the KL of every
    fitted model is estimated, otherwise only the selected one.
    """

    example: str = "P"
    n: int = 2000
    K_range: tuple = tuple(range(1, 11))
    seeds: tuple = tuple(range(55))
    kappa: float | str = 1.0
    penalty_mode: str = "dim_only"
    my: int = 1000
    kl_all_K: bool = True
    weight_degree: int = 1
    mean_degree: int = 1
    init: InitConfig = InitConfig()
    fit: FitConfig = FitConfig()
    threads: int = 1

    def __post_init__(self):
        truth_density(self.example)
        if self.n < 10:
            raise ValueError("n must be at least 10")
        K_range = tuple(int(K) for K in self.K_range)
        if not K_range or min(K_range) < 1 or max(K_range) > 50:
            raise ValueError("K_range must be a non-empty subset of 1..50")
        object.__setattr__(self, "K_range", K_range)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.kappa != "slope" and float(self.kappa) < 0:
            raise ValueError("kappa must be non-negative or 'slope'")

    @property
    def spec_template(self) -> ModelSpec:
        return ModelSpec(K=1, weight_degree=self.weight_degree, mean_degree=self.mean_degree)

    def to_dict(self) -> dict:
        return {
            "example": self.example,
            "n": self.n,
            "K_range": list(self.K_range),
            "seeds": list(self.seeds),
            "kappa": self.kappa,
            "penalty_mode": self.penalty_mode,
            "my": self.my,
            "kl_all_K": self.kl_all_K,
            "weight_degree": self.weight_degree,
            "mean_degree": self.mean_degree,
            "init": self.init.to_dict(),
            "fit": self.fit.to_dict(),
        }


@dataclass(frozen=True)
class SeedRecord:
    seed: int
    n: int
    chosen_K: int | None
    kappa_used: float | None = None
    kappa_hat: float | None = None
    kl: dict = field(default_factory=dict)  # K -> (value, std error)
    kl_selected: tuple | None = None
    loglik: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    dim_path: tuple = ()
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_seed(cfg: ExperimentConfig, seed: int) -> SeedRecord:
    """Data, selection and KL estimates of one replicate."""
    truth = truth_density(cfg.example)
    data = sample(truth, cfg.n, _derive(seed, cfg.n, 0))
    init_cfg = InitConfig(**{**cfg.init.to_dict(), "seed": _derive(seed, cfg.n, 1)})
    try:
        res = select(
            data, cfg.K_range, cfg.spec_template, init_cfg, cfg.fit, kappa=cfg.kappa, penalty_mode=cfg.penalty_mode
        )
    except CondMixError as exc:
        log.warning("seed %d failed: %s", seed, exc)
        return SeedRecord(seed, cfg.n, None, error=str(exc))
    Ks = sorted(res.fits) if cfg.kl_all_K else [res.chosen_K]
    ests = kl_tensorized(truth, [res.fits[K].params for K in Ks], data.x, cfg.my, _derive(seed, cfg.n, 2))
    kl = {K: (e.value, e.mc_std_error) for K, e in zip(Ks, ests)}
    return SeedRecord(
        seed,
        cfg.n,
        res.chosen_K,
        res.kappa_used,
        res.kappa_hat,
        kl,
        kl[res.chosen_K],
        {K: f.loglik for K, f in res.fits.items()},
        {K: f.loglik_trace for K, f in res.fits.items()},
        res.dim_path,
    )


def _run_seed_args(args):
    return run_seed(*args)


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    records: tuple

    @property
    def ok_records(self) -> list:
        return [r for r in self.records if r.ok]

    @property
    def failure_rate(self) -> float:
        return 1.0 - len(self.ok_records) / len(self.records)

    def mean_kl_by_K(self) -> dict:
        """K -> (mean over seeds, std error of that mean from the MC errors)."""
        out = {}
        for K in self.config.K_range:
            vals = [r.kl[K] for r in self.ok_records if K in r.kl]
            if vals:
                v = np.array(vals)
                out[K] = (float(v[:, 0].mean()), float(np.sqrt(np.sum(v[:, 1] ** 2)) / len(v)))
        return out

    def mean_kl_selected(self) -> tuple:
        v = np.array([r.kl_selected for r in self.ok_records])
        return float(v[:, 0].mean()), float(np.sqrt(np.sum(v[:, 1] ** 2)) / len(v))

    def chosen_counts(self) -> dict:
        counts = {K: 0 for K in self.config.K_range}
        for r in self.ok_records:
            counts[r.chosen_K] += 1
        return counts

    def summary(self) -> dict:
        n = self.config.n
        by_K = self.mean_kl_by_K()
        sel = self.mean_kl_selected() if self.ok_records else (float("nan"), float("nan"))
        return {
            "config": self.config.to_dict(),
            "n_ok": len(self.ok_records),
            "failures": {str(r.seed): r.error for r in self.records if not r.ok},
            "mean_kl_by_K": {str(K): {"mean": m, "se": s} for K, (m, s) in sorted(by_K.items())},
            "mean_kl_selected": {"mean": sel[0], "se": sel[1]},
            "argmin_K_mean_kl": min(by_K, key=lambda K: by_K[K][0]) if by_K else None,
            "chosen_K_counts": {str(K): c for K, c in self.chosen_counts().items()},
            "kappa_hat": [r.kappa_hat for r in self.ok_records],
            "reference_dim_over_2n": REFERENCE_DIM / (2.0 * n),
        }

    # CSV tables, all with a header row
    def boxplot_csv(self) -> str:
        return _csv(
            ["seed", "K", "kl", "kl_se", "selected"],
            [[r.seed, K, v, s, int(K == r.chosen_K)] for r in self.ok_records for K, (v, s) in sorted(r.kl.items())],
        )

    def histogram_csv(self) -> str:
        return _csv(["K", "count"], [[K, c] for K, c in sorted(self.chosen_counts().items())])

    def selected_csv(self) -> str:
        return _csv(
            ["seed", "chosen_K", "dim", "kappa_used", "kappa_hat", "kl", "kl_se"],
            [
                [r.seed, r.chosen_K, model_dim(self.config.spec_template.with_K(r.chosen_K)), r.kappa_used,
                 "" if r.kappa_hat is None else r.kappa_hat, r.kl_selected[0], r.kl_selected[1]]
                for r in self.ok_records
            ],
        )

    def slope_path_csv(self) -> str:
        return _csv(["seed", "kappa", "dimension"], [[r.seed, k, dm] for r in self.ok_records for k, dm in r.dim_path])

    def loglik_trace_csv(self) -> str:
        return _csv(
            ["seed", "K", "iteration", "loglik"],
            [[r.seed, K, i, v] for r in self.ok_records for K, tr in sorted(r.traces.items()) for i, v in enumerate(tr)],
        )

    def write(self, output_dir: str) -> None:
        os.makedirs(output_dir, exist_ok=True)
        files = {
            "boxplot.csv": self.boxplot_csv(),
            "histogram.csv": self.histogram_csv(),
            "selected.csv": self.selected_csv(),
            "slope_path.csv": self.slope_path_csv(),
            "loglik_trace.csv": self.loglik_trace_csv(),
            "summary.json": json.dumps(self.summary(), sort_keys=True, indent=2) + "\n",
        }
        for name, text in files.items():
            with open(os.path.join(output_dir, name), "w", newline="") as fh:
                fh.write(text)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, output_dir: str | None = None) -> ExperimentResult:
    """Run every seed (in a process pool when ``cfg.threads > 1``) and optionally write the tables."""
    args = [(cfg, s) for s in cfg.seeds]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            records = tuple(pool.map(_run_seed_args, args))
    else:
        records = tuple(run_seed(*a) for a in args)
    result = ExperimentResult(cfg, records)
    if output_dir is not None:
        result.write(output_dir)
    return result


def loglog_slope(sizes, mean_kls) -> float:
    """Least-squares slope of ``ln(mean KL)`` against ``ln n``."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(mean_kls, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def ladder_csv(results: dict) -> str:
    rows = []
    for n, res in sorted(results.items()):
        m, s = res.mean_kl_selected()
        rows.append([n, m, s, len(res.ok_records), REFERENCE_DIM / (2.0 * n)])
    return _csv(["n", "mean_kl", "mean_kl_se", "n_seeds", "reference_dim_over_2n"], rows)


def run_ladder(cfg: ExperimentConfig, sizes=DEFAULT_LADDER, output_dir: str | None = None) -> tuple[dict, float]:
    """Repeat the experiment over sample sizes; returns results by n and the log-log slope."""
    results = {}
    for n in sizes:
        sub = ExperimentConfig(**{**cfg.__dict__, "n": int(n)})
        results[int(n)] = run_experiment(sub, None if output_dir is None else os.path.join(output_dir, f"n{n}"))
    slope = loglog_slope(list(results), [r.mean_kl_selected()[0] for r in results.values()])
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, "risk_vs_n.csv"), "w", newline="") as fh:
            fh.write(ladder_csv(results))
        with open(os.path.join(output_dir, "ladder_summary.json"), "w") as fh:
            json.dump({"sizes": list(results), "loglog_slope": slope, "ladder_note": "default ladder is a design choice"},
                      fh, sort_keys=True, indent=2)
            fh.write("\n")
    return results, slope
