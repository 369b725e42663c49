"""Command-line interface.

Every command writes into ``--out DIR``.  Data files embed a manifest (the
command, a digest of the resolved configuration, the seed and tool
versions); wall-clock timestamps live only in ``run.json`` so that two runs
with the same manifest produce byte-identical data files.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import platform
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .checks import MIN_DRAWS, rb_check, variance_oracle
from .errors import IO_EXIT_CODE, USAGE_EXIT_CODE, ConfigError, MRError
from .fixtures import gwas_fixture, write_fixture
from .gwas_io import DEFAULT_R2_THRESHOLD, read_ld, read_summary, write_rejects
from .pipeline import METHODS, analyze
from .selection import DEFAULT_ETA, LAMBDA_RIVW, SelectionConfig
from .simulate import (
    PROFILE_EPS_GRID,
    PROFILE_PI_GRID,
    MethodSpec,
    SimConfig,
    run_experiment,
    winners_curse_profile,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("rivw")

_SIM_FIELDS = {f.name for f in fields(SimConfig)}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- manifest


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def build_manifest(command: str, config: dict, seed) -> dict:
    return {
        "command": command,
        "config_digest": hashlib.sha256(_canonical(config).encode()).hexdigest(),
        "seed": seed,
        "versions": f"rivw {__version__}; numpy {np.__version__}; scipy {scipy.__version__}; pandas {pd.__version__}",
        "config": config,
    }


def write_tsv(frame: pd.DataFrame, path: Path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# manifest: {_canonical(manifest)}\n")
        frame.to_csv(fh, sep="\t", index=False, na_rep="NA", lineterminator="\n")


def write_json(payload: dict, path: Path, manifest: dict) -> None:
    doc = {"manifest": manifest, **payload}
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_run_sidecar(out: Path, manifest: dict, started: _dt.datetime, argv) -> None:
    finished = _dt.datetime.now(_dt.timezone.utc)
    doc = {
        "manifest": manifest,
        "argv": list(argv),
        "started": started.isoformat(),
        "finished": finished.isoformat(),
        "python": platform.python_version(),
    }
    (out / "run.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ------------------------------------------------------------------ config


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


def sim_config_from_dict(d: dict) -> SimConfig:
    """Build a SimConfig from a parsed TOML table.

    ``methods`` is a list of tables with keys ``estimator``, ``lam`` and
    optionally ``eta``; unknown keys are rejected.
    """
    d = dict(d)
    unknown = set(d) - _SIM_FIELDS
    if unknown:
        raise ConfigError(f"unknown simulation key(s): {', '.join(sorted(unknown))}")
    if "methods" in d:
        specs = []
        for m in d["methods"]:
            if not isinstance(m, dict) or "estimator" not in m:
                raise ConfigError("each method needs an 'estimator' key")
            extra = set(m) - {"estimator", "lam", "eta"}
            if extra:
                raise ConfigError(f"unknown method key(s): {', '.join(sorted(extra))}")
            specs.append(MethodSpec(**m))
        d["methods"] = tuple(specs)
    try:
        return SimConfig(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _require_seed(seed) -> int:
    if seed is None:
        raise UsageError("a seed is required (--seed or 'seed' in the config)")
    return int(seed)


# ---------------------------------------------------------------- commands


def cmd_analyze(args) -> dict:
    if args.method == "rivw":
        _require_seed(args.seed)
    exposure = read_summary(args.exposure)
    outcome = read_summary(args.outcome)
    ld = read_ld(args.ld) if args.ld else None
    res = analyze(
        exposure,
        outcome,
        ld,
        method=args.method,
        lam=args.lam,
        eta=args.eta,
        alpha=args.alpha,
        seed=args.seed if args.seed is not None else 0,
        r2_threshold=args.r2,
    )
    config = {
        "exposure": _file_digest(args.exposure),
        "outcome": _file_digest(args.outcome),
        "ld": _file_digest(args.ld) if args.ld else None,
        "method": args.method,
        "lambda": res.lam,
        "eta": res.eta,
        "alpha": args.alpha,
        "r2_threshold": args.r2,
    }
    manifest = build_manifest("analyze", config, args.seed)
    out = args.out
    report = res.report.to_dict()
    write_json(
        {
            "report": report,
            "harmonization": res.harmonization.to_dict(),
            "n_after_pruning": res.n_pruned,
            "n_rejected_exposure": len(exposure.rejects),
            "n_rejected_outcome": len(outcome.rejects),
        },
        out / "report.json",
        manifest,
    )
    write_tsv(res.diagnostics, out / "diagnostics.tsv", manifest)
    write_rejects(exposure.rejects, out / "rejects_exposure.tsv")
    write_rejects(outcome.rejects, out / "rejects_outcome.tsv")
    r = res.report
    print(
        f"{r.method.value}: beta = {r.beta_hat:.5g} (se {r.se:.3g}), "
        f"{100 * (1 - r.alpha_level):g}% CI [{r.ci_low:.5g}, {r.ci_high:.5g}], "
        f"{r.n_selected} IVs, F = {r.f_stat:.3g}"
    )
    return manifest


def _file_digest(path) -> dict:
    h = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return {"name": Path(path).name, "sha256": h}


def _resolved_sim_config(args) -> SimConfig:
    raw = load_toml(args.config) if args.config else {}
    raw = dict(raw.get("simulation", raw))
    raw.pop("profile", None)
    if args.reps is not None:
        raw["n_reps"] = args.reps
    if args.seed is not None:
        raw["seed"] = args.seed
    unknown = set(raw) - _SIM_FIELDS
    if unknown:
        raise ConfigError(f"unknown simulation key(s): {', '.join(sorted(unknown))}")
    raw["seed"] = _require_seed(raw.get("seed"))
    return sim_config_from_dict(raw)


def metrics_frame(result) -> pd.DataFrame:
    rows = []
    for m in result.metrics:
        rows.append(
            {
                "method": m.method,
                "beta_hat": m.mean_beta,
                "monte_sd": m.monte_sd,
                "mean_se": m.mean_se,
                "coverage": m.coverage,
                "ci_length": m.mean_ci_length,
                "n_ivs": m.mean_n_ivs,
                "kappa": m.mean_kappa,
                "f_stat": m.mean_f,
                "n_reps_effective": m.n_reps_effective,
                "n_reps_failed": m.n_reps_failed,
            }
        )
    return pd.DataFrame(rows)


def cmd_simulate(args) -> dict:
    cfg = _resolved_sim_config(args)
    manifest = build_manifest("simulate", cfg.to_dict(), cfg.seed)
    out = args.out
    if args.gwas:
        fx = gwas_fixture(cfg, rep=0)
        write_fixture(fx, out)
        print(f"wrote summary-statistics fixture for replicate 0 to {out}")
        return manifest
    result = run_experiment(cfg)
    table = metrics_frame(result)
    write_tsv(table, out / "metrics.tsv", manifest)
    payload = {"metrics": [m.to_dict() for m in result.metrics], "iv_proportion": result.iv_proportion}
    if args.traces:
        payload["reps"] = [
            {"rep": o.rep, "results": [r.__dict__ for r in o.results], "n_gws": o.n_gws, "n_gws_band": o.n_gws_band}
            for o in result.reps
        ]
    write_json(payload, out / "metrics.json", manifest)
    with pd.option_context("display.width", 160, "display.max_columns", 20):
        print(table.to_string(index=False))
    return manifest


def cmd_profile(args) -> dict:
    raw = load_toml(args.config) if args.config else {}
    prof = dict(raw.get("profile", {}))
    eps_grid = tuple(prof.pop("eps_grid", PROFILE_EPS_GRID))
    pi_grid = tuple(prof.pop("pi_grid", PROFILE_PI_GRID))
    if prof:
        raise ConfigError(f"unknown profile key(s): {', '.join(sorted(prof))}")
    base = _resolved_sim_config(args)
    config = {**base.to_dict(), "eps_grid": list(eps_grid), "pi_grid": list(pi_grid)}
    config.pop("methods")
    manifest = build_manifest("profile", config, base.seed)
    points = winners_curse_profile(base, eps_grid, pi_grid)
    table = pd.DataFrame([pt.to_dict() for pt in points])
    write_tsv(table, args.out / "profile.tsv", manifest)
    write_json({"points": [pt.to_dict() for pt in points]}, args.out / "profile.json", manifest)
    print(table.to_string(index=False))
    return manifest


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def cmd_rb_check(args) -> dict:
    seed = _require_seed(args.seed)
    if args.draws < MIN_DRAWS:
        raise UsageError(f"--draws must be at least {MIN_DRAWS}")
    cfg = SelectionConfig(args.lam, args.eta, seed)
    multiples = _parse_floats(args.ratios)
    ratios = [r * args.lam for r in multiples]
    rows, hist = rb_check(ratios, cfg, args.draws, bins=args.bins)
    config = {"ratios_over_lambda": multiples, "lambda": args.lam, "eta": args.eta, "draws": args.draws, "bins": args.bins}
    manifest = build_manifest("rb-check", config, seed)
    summary = pd.DataFrame([r.to_dict() for r in rows])
    write_tsv(summary, args.out / "rb_summary.tsv", manifest)
    write_tsv(pd.DataFrame(hist), args.out / "rb_histogram.tsv", manifest)
    print(summary.to_string(index=False))
    return manifest


def cmd_oracle(args) -> dict:
    cfg = SelectionConfig(args.lam, args.eta, args.seed)
    rep = variance_oracle(args.gamma, args.sigma_x, cfg, args.draws)
    config = {"gamma": args.gamma, "sigma_x": args.sigma_x, "lambda": args.lam, "eta": args.eta, "draws": args.draws}
    manifest = build_manifest("oracle", config, args.seed)
    doc = rep.to_dict()
    if args.out is not None:
        write_json({"oracle": doc}, args.out / "oracle.json", manifest)
    for key, value in doc.items():
        print(f"{key}\t{value!r}")
    return manifest


# ------------------------------------------------------------------ parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rivw", description="Winner's-curse-corrected two-sample Mendelian randomization.")
    ap.add_argument("--version", action="version", version=f"rivw {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="estimate the causal effect from two summary-statistics files")
    p.add_argument("--exposure", required=True, type=Path)
    p.add_argument("--outcome", required=True, type=Path)
    p.add_argument("--ld", type=Path, help="TSV of pairwise r2 (snp_id_a, snp_id_b, r2)")
    p.add_argument("--method", choices=METHODS, default="rivw")
    p.add_argument("--lambda", dest="lam", type=float, help="selection cutoff on |z| (default depends on method)")
    p.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--r2", type=float, default=DEFAULT_R2_THRESHOLD, help="LD pruning threshold")
    p.add_argument("--seed", type=int, help="pseudo-noise seed (required for rivw)")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_analyze)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "run the Monte Carlo simulation"),
        ("profile", cmd_profile, "bias of IVW and RIVW across instrument-strength settings"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, help="TOML configuration")
        p.add_argument("--reps", type=_positive_int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True, type=Path)
        if name == "simulate":
            p.add_argument("--traces", action="store_true", help="include per-replicate results in the JSON")
            p.add_argument("--gwas", action="store_true", help="write replicate 0 as summary-statistics files instead")
        p.set_defaults(func=func)

    p = sub.add_parser("rb-check", help="raw versus Rao-Blackwellized effects among selected SNPs")
    p.add_argument("--ratios", default="0.1,1,4", help="true z-scores as multiples of lambda (comma-separated)")
    p.add_argument("--lambda", dest="lam", type=float, default=LAMBDA_RIVW)
    p.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p.add_argument("--draws", type=int, default=100_000, help="retained (selected) draws per ratio")
    p.add_argument("--bins", type=_positive_int, default=60)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_rb_check)

    p = sub.add_parser("oracle", help="compare three routes to the RB variance")
    p.add_argument("--gamma", required=True, type=float)
    p.add_argument("--sigma-x", dest="sigma_x", required=True, type=float)
    p.add_argument("--lambda", dest="lam", type=float, default=LAMBDA_RIVW)
    p.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p.add_argument("--draws", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    started = _dt.datetime.now(_dt.timezone.utc)
    try:
        if getattr(args, "out", None) is not None:
            args.out.mkdir(parents=True, exist_ok=True)
        manifest = args.func(args)
        if getattr(args, "out", None) is not None:
            write_run_sidecar(args.out, manifest, started, argv)
    except UsageError as exc:
        print(f"rivw {args.command}: {exc}", file=sys.stderr)
        return USAGE_EXIT_CODE
    except MRError as exc:
        print(f"rivw {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"rivw {args.command}: I/O error: {exc}", file=sys.stderr)
        return IO_EXIT_CODE
    return 0


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
