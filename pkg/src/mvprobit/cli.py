"""Command-line surface: simulation, fitting, and report subcommands.

Exit codes: 0 success, 2 configuration or usage error, 1 runtime failure.
Report subcommands write delimited output plus a rendered PNG figure in
the same directory.  The default output root is the environment variable
MVPROBIT_OUTPUT_ROOT (falling back to the working directory); every
subcommand accepts an explicit --out directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import plots
from .builtin_params import gp_study_parameters
from .chains import ChainDraws
from .corr import CorrelationMatrix, CovarianceMatrix
from .data import (
    design_covariates,
    gaussian_covariates,
    read_panel_csv,
    simulate_panel,
    write_json17,
    write_panel_csv,
)
from .diagnostics import (
    geweke_joint_test,
    iact_ratio_report,
    summary_csv_rows,
    summary_table,
    summary_text,
)
from .gibbs import ModelSpec, SamplerConfig, run_chain, run_px_chain
from .predict import extract_graph, posterior_predictive
from .priors import prior_study

ENV_OUTPUT_ROOT = "MVPROBIT_OUTPUT_ROOT"

_ENGINES = ("gibbs", "px")

_GRAPH_SOURCES = {
    "R": ("corr_eps_draws", "error correlations"),
    "R_inv": ("precision_eps_draws", "error precision"),
    "partial": ("partial_corr_eps_draws", "error partial correlations"),
    "r_alpha": ("corr_alpha_draws", "random-effect correlations"),
    "sigma_alpha": ("sigma_alpha_draws", "random-effect covariance"),
}


class ConfigError(Exception):
    """User-facing configuration problem; maps to exit code 2."""


def _out_dir(explicit: str | None, name: str) -> Path:
    if explicit is not None:
        path = Path(explicit)
    else:
        path = Path(os.environ.get(ENV_OUTPUT_ROOT, ".")) / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, rows: list[list[str]]) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(",".join(row) + "\n")


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


_SPEC_FIELDS = {f.name: f for f in fields(ModelSpec)}
_CONFIG_FIELDS = {f.name: f for f in fields(SamplerConfig)}
_TOP_LEVEL = {"engine", "replicates"}

_NUMERIC = (int, float)
_CONFIG_TYPES = {
    "model": int, "beta_prior": str, "beta_prior_variance": _NUMERIC,
    "sigma_alpha_prior": str, "iw_dof": _NUMERIC, "iw_scale": (*_NUMERIC, list),
    "hiw_dof": _NUMERIC, "hiw_scale": _NUMERIC, "corr_dof": _NUMERIC,
    "iterations": int, "burn_in": int, "thin": int, "seed": int,
    "beta_mode": str, "alpha_mode": str, "antithetic_start": int,
    "adapt_steps": int, "target_accept": _NUMERIC, "max_depth": int,
    "store_alpha": bool, "store_latent_probe": bool, "probe_cell": list,
    "engine": str, "replicates": int,
}


def _validate_fit_config(raw: dict) -> tuple[dict, dict, str, int]:
    """Split a flat config dict into ModelSpec/SamplerConfig kwargs."""
    known = set(_SPEC_FIELDS) | set(_CONFIG_FIELDS) | _TOP_LEVEL
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(
            f"unknown config keys: {', '.join(unknown)}; "
            f"known keys: {', '.join(sorted(known))}"
        )
    for key, value in raw.items():
        if value is None:
            continue
        want = _CONFIG_TYPES[key]
        if isinstance(value, bool) and want is not bool:
            raise ConfigError(f"config key {key!r} has wrong type")
        if not isinstance(value, want):
            raise ConfigError(f"config key {key!r} has wrong type")
    engine = raw.get("engine", "gibbs")
    if engine not in _ENGINES:
        raise ConfigError(f"engine must be one of {_ENGINES}")
    replicates = int(raw.get("replicates", 1))
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    spec_kwargs = {k: v for k, v in raw.items() if k in _SPEC_FIELDS}
    cfg_kwargs = {k: v for k, v in raw.items() if k in _CONFIG_FIELDS}
    if "probe_cell" in cfg_kwargs:
        cfg_kwargs["probe_cell"] = tuple(cfg_kwargs["probe_cell"])
    return spec_kwargs, cfg_kwargs, engine, replicates


def _build_fit_objects(spec_kwargs, cfg_kwargs) -> tuple[ModelSpec, SamplerConfig]:
    try:
        return ModelSpec(**spec_kwargs), SamplerConfig(**cfg_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _fit_one(payload) -> str:
    data_path, spec_kwargs, cfg_kwargs, engine, out_dir = payload
    data = read_panel_csv(data_path)
    spec, cfg = _build_fit_objects(spec_kwargs, cfg_kwargs)
    runner = run_chain if engine == "gibbs" else run_px_chain
    draws = runner(data, spec, cfg)
    draws.save(out_dir)
    return str(out_dir)


# -- subcommands -----------------------------------------------------------


def _cmd_simulate(args) -> int:
    out = _out_dir(args.out, "simulate")
    rng = np.random.default_rng(args.seed)
    codebook = None
    if args.paper_params:
        par = gp_study_parameters()
        beta = par["beta"]
        r_eps, sigma_alpha = par["r_eps"], par["sigma_alpha"]
        codebook = par["codebook"]
        covariates = design_covariates(codebook)
        n_z = 0
    elif args.truth is not None:
        raw = _load_json(args.truth)
        for key in ("beta", "r_eps", "sigma_alpha"):
            if key not in raw:
                raise ConfigError(f"truth file is missing {key!r}")
        beta = np.asarray(raw["beta"], dtype=float)
        if beta.ndim != 2:
            raise ConfigError("truth beta must be a 2-d array")
        try:
            r_eps = CorrelationMatrix(np.asarray(raw["r_eps"], dtype=float))
            sigma_alpha = CovarianceMatrix(
                np.asarray(raw["sigma_alpha"], dtype=float)
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        n_z = int(raw.get("n_z_cov", 0))
        if not 0 <= n_z < beta.shape[1]:
            raise ConfigError("n_z_cov must leave at least one panel column")
        covariates = gaussian_covariates(beta.shape[1] - 1 - n_z)
    else:
        raise ConfigError("simulate needs --paper-params or --truth FILE")

    z_covariates = None
    if n_z:
        def z_covariates(z_rng, n_ind, _n=n_z):
            labels = tuple(f"z{m + 1}" for m in range(_n))
            return labels, z_rng.standard_normal((_n, n_ind))

    try:
        data, truth = simulate_panel(
            beta, r_eps, sigma_alpha, args.n_ind, args.n_per, rng,
            covariates=covariates, z_covariates=z_covariates,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_panel_csv(data, out / "panel.csv")
    write_json17(truth, out / "truth.json")
    if codebook is not None:
        write_json17(codebook.to_json(), out / "codebook.json")
    print(f"wrote {out / 'panel.csv'} ({data.n_outcomes} outcomes, "
          f"{data.n_ind} individuals, {data.n_per} periods)")
    return 0


def _cmd_fit(args) -> int:
    raw = _load_json(args.config) if args.config else {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.iterations is not None:
        raw["iterations"] = args.iterations
    if args.burn_in is not None:
        raw["burn_in"] = args.burn_in
    if args.replicates is not None:
        raw["replicates"] = args.replicates
    if args.engine is not None:
        raw["engine"] = args.engine
    spec_kwargs, cfg_kwargs, engine, replicates = _validate_fit_config(raw)
    _build_fit_objects(spec_kwargs, cfg_kwargs)  # validate before running
    if not Path(args.data).exists():
        raise ConfigError(f"data file not found: {args.data}")
    out = _out_dir(args.out, "fit")

    if replicates == 1:
        _fit_one((args.data, spec_kwargs, cfg_kwargs, engine, out))
        print(f"wrote chain to {out}")
        return 0

    base_seed = int(cfg_kwargs.get("seed", 0))
    seeds = np.random.SeedSequence(base_seed).generate_state(replicates)
    payloads = []
    for rep in range(replicates):
        rep_kwargs = dict(cfg_kwargs, seed=int(seeds[rep]))
        rep_dir = out / f"rep-{rep + 1:02d}"
        rep_dir.mkdir(parents=True, exist_ok=True)
        payloads.append((args.data, spec_kwargs, rep_kwargs, engine, rep_dir))
    workers = min(replicates, os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for done in pool.map(_fit_one, payloads):
            print(f"wrote chain to {done}")
    write_json17(
        {"replicates": replicates, "base_seed": base_seed,
         "seeds": [int(s) for s in seeds], "engine": engine},
        out / "fit_manifest.json",
    )
    return 0


def _load_chain(path: str) -> ChainDraws:
    try:
        return ChainDraws.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load chain from {path}: {exc}") from exc


def _cmd_diagnose(args) -> int:
    draws = _load_chain(args.chain)
    out = _out_dir(args.out, "diagnose")
    summaries = summary_table(draws)
    _write_csv(out / "summary.csv", summary_csv_rows(summaries))
    (out / "summary.txt").write_text(summary_text(summaries))
    plots.save_iact_figure(summaries, out / "iact.png")
    for block in ("beta", "corr_eps_vech", "sigma_alpha_diag"):
        if block in draws.blocks:
            plots.save_trace_figure(draws, block, out / f"trace_{block}.png")
    if args.baseline is not None:
        base = _load_chain(args.baseline)
        report = iact_ratio_report(draws, base)
        _write_csv(out / "iact_ratio.csv", report.to_csv_rows())
        (out / "iact_ratio.txt").write_text(report.to_text())
    print(f"wrote diagnostics to {out}")
    return 0


def _parse_bundle(text: str, n_outcomes: int) -> tuple[int, ...]:
    try:
        bundle = tuple(int(tok) for tok in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bundle must be comma-separated integers: {text!r}")
    if not bundle or len(set(bundle)) != len(bundle) or not all(
        1 <= b <= n_outcomes for b in bundle
    ):
        raise ConfigError(
            f"bundle positions must be distinct and in 1..{n_outcomes}"
        )
    return bundle


def _cmd_predict(args) -> int:
    draws = _load_chain(args.chain)
    out = _out_dir(args.out, "predict")
    meta = draws.meta
    k_panel = int(meta["n_cov"]) - len(meta.get("z_labels") or [])
    if args.x is not None:
        try:
            x_new = np.array([float(tok) for tok in args.x.split(",")])
        except ValueError:
            raise ConfigError(f"--x must be comma-separated numbers: {args.x!r}")
    else:
        x_new = np.zeros(k_panel)
        x_new[0] = 1.0
    bundle = None
    if args.bundle is not None:
        bundle = _parse_bundle(args.bundle, int(meta["n_outcomes"]))
    try:
        summary = posterior_predictive(
            draws, x_new, bundle=bundle, n_mc=args.n_mc,
            rng=np.random.default_rng(args.seed), level=args.level,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_csv(out / "predict.csv", summary.to_csv_rows())
    plots.save_predict_figure(summary, out / "predict.png")
    print(f"wrote predictions to {out}")
    return 0


def _cmd_graph(args) -> int:
    draws = _load_chain(args.chain)
    out = _out_dir(args.out, "graph")
    accessor, _ = _GRAPH_SOURCES[args.matrix]
    try:
        entry_draws = getattr(draws, accessor)()
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"chain lacks draws for {args.matrix}: {exc}") from exc
    labels = draws.meta.get("outcome_labels")
    edges = extract_graph(
        entry_draws, level=args.level, labels=labels, matrix=args.matrix
    )
    _write_csv(out / "edges.csv", edges.to_csv_rows())
    (out / "graph.dot").write_text(edges.to_dot())
    plots.save_graph_figure(edges, out / "graph.png")
    print(f"wrote {len(edges.edges)} edges to {out}")
    return 0


def _cmd_prior_study(args) -> int:
    out = _out_dir(args.out, "prior-study")
    nu = args.nu if args.nu is not None else args.dim + 1.0
    if args.dim < 2:
        raise ConfigError("dim must be >= 2")
    if args.draws < 10:
        raise ConfigError("need at least 10 draws")
    study = prior_study(args.dim, nu, args.draws, np.random.default_rng(args.seed))
    pair_labels = [f"({i},{j})" for i, j in study["pair_index"]]
    for key, stem in (("corr_draws", "corr"), ("partial_draws", "partial")):
        arr = study[key]
        rows = [pair_labels] + [[f"{v:.17g}" for v in row] for row in arr]
        _write_csv(out / f"{stem}_draws.csv", rows)
    summary = {k: v for k, v in study.items()
               if k not in ("corr_draws", "partial_draws")}
    write_json17(summary, out / "summary.json")
    plots.save_prior_study_figure(study, out / "prior_study.png")
    print(f"wrote prior study to {out} "
          f"(KS uniform p={study['ks_uniform_pvalue']:.3g})")
    return 0


def _cmd_geweke_test(args) -> int:
    out = _out_dir(args.out, "geweke-test")
    combos = None
    if args.combo:
        combos = []
        for text in args.combo:
            parts = tuple(text.split("+"))
            if len(parts) != 3:
                raise ConfigError(
                    f"combo must look like iw+normal+independent: {text!r}"
                )
            combos.append(parts)
    try:
        result = geweke_joint_test(
            n_outcomes=args.n_outcomes, n_ind=args.n_ind, n_per=args.n_per,
            n_cov=args.n_cov, sweeps=args.sweeps, seed=args.seed,
            combos=combos, variance_scale=args.variance_scale,
            adapt_sweeps=args.adapt_sweeps,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_csv(out / "geweke.csv", result.to_csv_rows())
    (out / "geweke.txt").write_text(result.to_text())
    plots.save_geweke_figure(result, out / "geweke.png")
    print(f"wrote z table to {out}; max |z| = {result.max_abs_z():.2f}")
    return 0


# -- parser ----------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvprobit",
        description="Bayesian multivariate probit panel sampler and reports",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic panel")
    p.add_argument("--paper-params", action="store_true",
                   help="use the built-in study parameter set (D=8)")
    p.add_argument("--truth", help="JSON file with beta, r_eps, sigma_alpha")
    p.add_argument("--n-ind", type=int, default=162)
    p.add_argument("--n-per", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="run the sampler on a panel CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="flat JSON config; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--engine", choices=_ENGINES)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("diagnose", help="summaries and mixing reports")
    p.add_argument("--chain", required=True)
    p.add_argument("--baseline", help="second chain for the IACT-ratio report")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("predict", help="posterior predictive probabilities")
    p.add_argument("--chain", required=True)
    p.add_argument("--x", help="panel covariate vector, comma separated")
    p.add_argument("--bundle", help="outcome positions, e.g. 3,4")
    p.add_argument("--n-mc", type=int, default=2000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("graph", help="dependence graph from stored draws")
    p.add_argument("--chain", required=True)
    p.add_argument("--matrix", choices=sorted(_GRAPH_SOURCES), default="R_inv")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("prior-study", help="correlation prior margins")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--nu", type=float)
    p.add_argument("--draws", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_prior_study)

    p = sub.add_parser("geweke-test", help="joint-distribution correctness")
    p.add_argument("--sweeps", type=int, default=20000)
    p.add_argument("--adapt-sweeps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variance-scale", type=float, default=1.0)
    p.add_argument("--combo", action="append",
                   help="prior+prior+mode triple, repeatable")
    p.add_argument("--n-outcomes", type=int, default=2)
    p.add_argument("--n-ind", type=int, default=3)
    p.add_argument("--n-per", type=int, default=2)
    p.add_argument("--n-cov", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_geweke_test)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001  (runtime failures map to 1)
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
