"""``gapcheck`` command-line front end.

Usage::

    gapcheck <command> [--config PATH] [--set key=value]... [--out DIR]
             [--formats csv,json,svg] [--seed N]

Every random stream in a run is derived from the single run seed with
:func:`gapcheck.rng.derive_seed`, keyed by the command name.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as sps

from . import __version__
from .bounds import diagnose
from .config import COMMANDS, FORMATS, RunConfig, build_config
from .errors import (ConfigParseError, DivergenceDetected, GapcheckError, InvalidBatchSpec,
                     InvalidNormalizer, OracleUnavailable, ShapeError)
from .estimators import EstimatorConfig, bias_variance_sweep, iwlb_samples, oracle_log_evidence
from .models import LogNormalRatioModel, Model, ProposalParams, model_from_spec, sample_log_weights
from .optimize import fit
from .report import COUPLE_CSV_HEADER, SWEEP_CSV_HEADER, dumps_csv, dumps_json, write_atomic
from .rng import derive_seed
from .stats import stats_from_values
from .svgplot import concentration_svg, iqr_shrinkage, majorizer_svg

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_ORACLE = 3
EXIT_IO = 4
EXIT_DIVERGENCE = 5

EPILOG = """\
exit codes:
  0  success
  1  other library error
  2  configuration error (ConfigParseError, invalid shapes or batch specs)
  3  oracle unavailable (model has no closed-form evidence)
  4  I/O error while reading the config or writing outputs
  5  divergence detected during fit

On failure a single JSON line {"error": <category>, "message": <text>} is
written to stderr.
"""

Output = Tuple[Path, str]


def build_model(cfg: RunConfig) -> Tuple[Model, Optional[ProposalParams]]:
    kind = cfg["model.kind"]
    if kind == "lognormal":
        return model_from_spec("lognormal", m=cfg["model.m"], s=cfg["model.s"]), None
    model = model_from_spec(kind, A=cfg["model.A"], noise_std=cfg["model.noise_std"], v=cfg["model.v"])
    q = ProposalParams(cfg["proposal.loc"], cfg["proposal.log_scale"])
    if q.dim != model.d_h:
        raise ShapeError(f"proposal.loc has {q.dim} entries but model.A has {model.d_h} columns")
    return model, q


def _fmt_opt(v: Optional[float]) -> str:
    return "inapplicable" if v is None else f"{v:.6g}"


def _run_diagnose(cfg: RunConfig) -> List[Output]:
    model, q = build_model(cfg)
    est = EstimatorConfig(k=cfg["estimator.k"], replications=cfg["estimator.replications"],
                          seed=derive_seed(cfg.seed, "diagnose"), coupling=cfg["estimator.coupling"])
    bf = cfg["estimator.brute_force_samples"] or None
    rep = diagnose(model, q, est, brute_force_samples=bf)
    payload = rep.to_dict()
    payload["seed"] = cfg.seed
    outputs = []
    if "json" in cfg.formats:
        path = write_atomic(cfg.out_dir / "report.json", dumps_json(payload))
        outputs.append((path, f"gap={rep.gap:.6g}+-{rep.gap_std_error:.2g} "
                              f"prop2_bound={_fmt_opt(rep.prop2_bound)} "
                              f"corollary_bound={_fmt_opt(rep.corollary_bound)}"))
    return outputs


def _run_sweep(cfg: RunConfig) -> List[Output]:
    model, q = build_model(cfg)
    res = bias_variance_sweep(model, q, cfg["sweep.k_grid"], cfg["sweep.budget"],
                              derive_seed(cfg.seed, "sweep-k"), cfg["estimator.coupling"])
    outputs = []
    if "csv" in cfg.formats:
        rows = [[getattr(r, c) for c in SWEEP_CSV_HEADER] for r in res.rows]
        path = write_atomic(cfg.out_dir / "sweep.csv", dumps_csv(SWEEP_CSV_HEADER, rows))
        outputs.append((path, f"{len(rows)} rows, k={res.rows[0].k}..{res.rows[-1].k}, "
                              f"replications={res.replications}"))
    if "json" in cfg.formats:
        ks = [r.k for r in res.rows]
        payload = {
            "seed": cfg.seed,
            "log_evidence": res.log_evidence,
            "replications": res.replications,
            "pool_size": res.pool_size,
            "coupling": res.coupling.value,
            "rows": [r.as_dict() for r in res.rows],
            "paired": [vars(p) for p in res.paired],
            "loglog_slope_gap": res.loglog_slope(ks[0], ks[-1]) if len(ks) > 1 else None,
        }
        path = write_atomic(cfg.out_dir / "sweep.json", dumps_json(payload))
        outputs.append((path, f"paired comparisons={len(res.paired)}"))
    return outputs


def _run_couple(cfg: RunConfig) -> List[Output]:
    model, q = build_model(cfg)
    seed = derive_seed(cfg.seed, "couple-compare")
    reports = []
    for coupling in cfg["couple.couplings"]:
        est = EstimatorConfig(k=cfg["couple.k"], replications=cfg["couple.replications"],
                              seed=seed, coupling=coupling)
        reports.append(diagnose(model, q, est))
    outputs = []
    if "csv" in cfg.formats:
        rows = [[r.coupling, r.k, r.n, r.gap, r.gap_std_error, r.sigma_x**2, r.sigma_y**2,
                 r.prop2_bound, r.corollary_bound] for r in reports]
        path = write_atomic(cfg.out_dir / "couple.csv", dumps_csv(COUPLE_CSV_HEADER, rows))
        outputs.append((path, ", ".join(f"{r.coupling}: gap={r.gap:.4g} var_x={r.sigma_x**2:.4g}"
                                        for r in reports)))
    if "json" in cfg.formats:
        payload = {"seed": cfg.seed, "reports": [dict(r.to_dict(), seed=cfg.seed) for r in reports]}
        path = write_atomic(cfg.out_dir / "couple.json", dumps_json(payload))
        outputs.append((path, f"{len(reports)} reports"))
    return outputs


def _run_fit(cfg: RunConfig) -> List[Output]:
    model, q0 = build_model(cfg)
    if q0 is None:
        raise ConfigParseError("fit needs model.kind = \"gaussian_linear\"")
    trace = fit(model, q0, cfg["fit.steps"], cfg["fit.step_size"], k=cfg["fit.k"],
                seed=derive_seed(cfg.seed, "fit"), num_blocks=cfg["fit.num_blocks"],
                eval_every=cfg["fit.eval_every"], eval_samples=cfg["fit.eval_samples"])
    last = trace.records[-1]
    rho = float(sps.spearmanr(trace.column("gap"), trace.column("sigma_y")).statistic)
    outputs = []
    if "csv" in cfg.formats:
        path = write_atomic(cfg.out_dir / "trace.csv", dumps_csv(trace.csv_header(), trace.csv_rows()))
        outputs.append((path, f"{len(trace.records)} records, final gap={last.gap:.4g}"))
    if "json" in cfg.formats:
        payload = {
            "seed": cfg.seed,
            "steps": cfg["fit.steps"],
            "k": trace.k,
            "final_gap": last.gap,
            "final_loc": list(last.loc),
            "final_log_scale": list(last.log_scale),
            "spearman_gap_sigma_y": rho,
        }
        path = write_atomic(cfg.out_dir / "fit.json", dumps_json(payload))
        outputs.append((path, f"spearman(gap, sigma_y)={rho:.4f}"))
    return outputs


def concentration_data(model: Model, q: Optional[ProposalParams], k_values: Sequence[int],
                       points: int, seed: int) -> dict:
    """``k -> (X_K / p(v), log of that)`` with ``points`` values per ``k``."""
    log_p = oracle_log_evidence(model)
    data = {}
    for i, k in enumerate(sorted(set(k_values))):
        batch = sample_log_weights(model, q, points * k, derive_seed(seed, "figures", i))
        y = iwlb_samples(batch, k) - log_p
        data[k] = (np.exp(y), y)
    return data


def majorizer_inputs(model: Model, q: Optional[ProposalParams], seed: int) -> Tuple[float, float, float, float]:
    """``(mu_x, nu_x, c_x, mu_y)`` for ``X / p(v)``, with ``C_X = sigma_X``."""
    if isinstance(model, LogNormalRatioModel):
        p = model.mu_x
        return 1.0, model.nu_x / p, model.sigma_x / p, model.mu_y - math.log(p)
    log_p = oracle_log_evidence(model)
    y = sample_log_weights(model, q, 100_000, derive_seed(seed, "figures-majorizer")).log_weights - log_p
    xs = stats_from_values(np.exp(y))
    return xs.mean, xs.median, xs.std, float(np.mean(y))


def _run_figures(cfg: RunConfig, majorizer: bool = False) -> List[Output]:
    model, q = build_model(cfg)
    outputs = []
    if "svg" not in cfg.formats:
        return outputs
    ks = sorted(set(cfg["figures.k_values"]))
    data = concentration_data(model, q, ks, cfg["figures.points"], cfg.seed)
    svg = concentration_svg(data)
    path = write_atomic(cfg.out_dir / "fig_concentration.svg", svg)
    summary = f"k={ks}"
    if len(ks) >= 2:
        summary += f", IQR(X_{ks[0]})/IQR(X_{ks[-1]})={iqr_shrinkage(data, ks[0], ks[-1]):.3f}"
    outputs.append((path, summary))
    if majorizer or cfg["figures.majorizer"]:
        mu_x, nu_x, c_x, mu_y = majorizer_inputs(model, q, cfg.seed)
        path = write_atomic(cfg.out_dir / "fig_majorizer.svg", majorizer_svg(mu_x, nu_x, c_x, mu_y))
        outputs.append((path, f"tangent at median={nu_x:.4g}, C_X={c_x:.4g}"))
    return outputs


def run(cfg: RunConfig, *, majorizer: bool = False) -> List[Output]:
    """Execute ``cfg.command`` and return ``(path, summary)`` for each file written."""
    if cfg.command == "diagnose":
        return _run_diagnose(cfg)
    if cfg.command == "sweep-k":
        return _run_sweep(cfg)
    if cfg.command == "couple-compare":
        return _run_couple(cfg)
    if cfg.command == "fit":
        return _run_fit(cfg)
    if cfg.command == "figures":
        return _run_figures(cfg, majorizer=majorizer)
    raise ConfigParseError(f"unknown command {cfg.command!r}")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigParseError, InvalidBatchSpec, ShapeError, InvalidNormalizer)):
        return EXIT_CONFIG
    if isinstance(exc, OracleUnavailable):
        return EXIT_ORACLE
    if isinstance(exc, DivergenceDetected):
        return EXIT_DIVERGENCE
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return EXIT_OTHER


def _category(exc: BaseException) -> str:
    if isinstance(exc, GapcheckError):
        return exc.category
    if isinstance(exc, OSError):
        return "io_error"
    if isinstance(exc, ValueError):
        return "config_error"
    return "error"


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gapcheck",
        description="Estimate variational gaps and check dispersion-based bounds on them.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, default=None, help="TOML file of dotted keys")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable; TOML value syntax)")
    parser.add_argument("--out", default=None, help="output directory (output.dir)")
    parser.add_argument("--formats", default=None, help="comma-separated subset of " + ",".join(FORMATS))
    parser.add_argument("--seed", type=int, default=None, help="run seed (seed)")
    parser.add_argument("--majorizer", action="store_true", help="figures: also write fig_majorizer.svg")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    extra = {}
    if args.out is not None:
        extra["output.dir"] = args.out
    if args.formats is not None:
        extra["output.formats"] = [f.strip() for f in args.formats.split(",") if f.strip()]
    if args.seed is not None:
        extra["seed"] = args.seed
    try:
        cfg = build_config(args.command, args.config, args.overrides, extra)
        outputs = run(cfg, majorizer=args.majorizer)
    except (GapcheckError, OSError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": _category(exc), "message": str(exc)}) + "\n")
        return exit_code_for(exc)
    for path, summary in outputs:
        print(f"wrote {path}: {summary}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
