"""Acceptance gate.

Each test prints one ``PASS``/``FAIL`` line for its criterion.  Full mode
uses 2000 replicates; ``RIVW_SMOKE=1`` runs 500 and widens every interval
half-width around its centre by sqrt(2000/500) = 2.
"""

import math
import os
from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from rivw.checks import rb_check, variance_oracle
from rivw.cli import main
from rivw.fixtures import gwas_fixture, write_fixture
from rivw.gwas_io import read_ld, read_summary
from rivw.pipeline import analyze
from rivw.selection import LAMBDA_GWS, LAMBDA_RIVW, SelectionConfig
from rivw.simulate import PROFILE_EPS_GRID, PROFILE_PI_GRID, MethodSpec, SimConfig, run_experiment, table2_config, winners_curse_profile

SMOKE = os.environ.get("RIVW_SMOKE", "") not in ("", "0")
N_REPS = 500 if SMOKE else 2000
WIDEN = math.sqrt(2000 / N_REPS)

RIVW = MethodSpec("rivw", LAMBDA_RIVW, 0.5)
IVW = MethodSpec("ivw", LAMBDA_GWS)


def within(value, lo, hi):
    c, h = (lo + hi) / 2, (hi - lo) / 2 * WIDEN
    return c - h <= value <= c + h


def band(lo, hi):
    c, h = (lo + hi) / 2, (hi - lo) / 2 * WIDEN
    return f"[{c - h:.4g}, {c + h:.4g}]"


@pytest.fixture
def report(capsys):
    def emit(criterion, checks):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{text} {'ok' if passed else 'FAILED'}" for text, passed in checks)
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        assert ok, detail

    return emit


@lru_cache(maxsize=None)
def table2(block):
    cfg = replace(table2_config(block), n_reps=N_REPS, methods=(RIVW, IVW))
    res = run_experiment(cfg)
    return res.metric("rivw"), res.metric("ivw")


def test_criterion_1_low_block(report):
    r, _ = table2("low")
    report(
        "1 (low block, RIVW)",
        [
            (f"mean {r.mean_beta:.4f} in {band(0.197, 0.203)}", within(r.mean_beta, 0.197, 0.203)),
            (f"monte sd {r.monte_sd:.4f} in {band(0.019, 0.025)}", within(r.monte_sd, 0.019, 0.025)),
            (f"coverage {r.coverage:.4f} in {band(0.94, 0.96)}", within(r.coverage, 0.94, 0.96)),
            (f"#IVs {r.mean_n_ivs:.1f} in {band(130, 165)}", within(r.mean_n_ivs, 130, 165)),
        ],
    )


IVW_BANDS = {"low": (0.175, 0.190), "medium": (0.178, 0.186), "high": (0.190, 0.196)}


def test_criterion_2_medium_high_and_ivw(report):
    checks = []
    for block in ("medium", "high"):
        r, _ = table2(block)
        checks.append((f"{block} RIVW mean {r.mean_beta:.4f} in {band(0.198, 0.202)}", within(r.mean_beta, 0.198, 0.202)))
        checks.append((f"{block} RIVW coverage {r.coverage:.4f} in {band(0.93, 0.97)}", within(r.coverage, 0.93, 0.97)))
    for block, (lo, hi) in IVW_BANDS.items():
        _, i = table2(block)
        checks.append((f"{block} IVW mean {i.mean_beta:.4f} in {band(lo, hi)}", within(i.mean_beta, lo, hi)))
    report("2 (medium/high blocks, IVW bias)", checks)


def test_criterion_3_rb_unbiased(report):
    cfg = SelectionConfig(LAMBDA_RIVW, 0.5, seed=20240103)
    rows, _ = rb_check([0.1 * LAMBDA_RIVW, LAMBDA_RIVW, 4 * LAMBDA_RIVW], cfg, n_draws=100_000)
    checks = [(f"ratio {row.ratio / LAMBDA_RIVW:g}*lambda RB z {row.z_rb:+.2f}", abs(row.z_rb) <= 3) for row in rows]
    checks.append((f"weak raw z {rows[0].z_raw:+.1f} beyond 3", abs(rows[0].z_raw) > 3))
    report("3 (RB unbiasedness, 1e5 draws)", checks)


def test_criterion_4_variance_oracle(report):
    cfg = SelectionConfig(LAMBDA_RIVW, 0.5, seed=20240104)
    checks = []
    for name, ratio in (("weak", 0.1), ("moderate", 1.0), ("strong", 4.0)):
        rep = variance_oracle(ratio * LAMBDA_RIVW, 1.0, cfg, n_draws=1_000_000)
        checks.append((f"{name} max |z| {rep.max_abs_z():.2f}", rep.max_abs_z() <= 3))
    report("4 (quadrature vs MC variance vs mean RB variance, 1e6 draws)", checks)


def test_criterion_5_se_calibration(report):
    checks = []
    for block in ("low", "medium", "high"):
        r, _ = table2(block)
        ratio = r.mean_se / r.monte_sd
        checks.append((f"{block} se/sd {ratio:.3f} in {band(0.9, 1.1)}", within(ratio, 0.9, 1.1)))
    report("5 (SE / Monte Carlo SD)", checks)


def test_criterion_6_balanced_pleiotropy(report):
    base = table2_config("low")
    cfg = replace(base, rho=0.5, tau2=base.eps_x2, n_reps=N_REPS, seed=20240105, methods=(RIVW,))
    r = run_experiment(cfg).metric("rivw")
    z = (r.mean_beta - cfg.beta) / r.mc_se_beta
    report(
        "6 (balanced pleiotropy)",
        [
            (f"bias z {z:+.2f} within 3", abs(z) <= 3),
            (f"coverage {r.coverage:.4f} in {band(0.93, 0.97)}", within(r.coverage, 0.93, 0.97)),
        ],
    )


def test_criterion_7_winners_curse_profile(report):
    base = SimConfig(p=200_000, rho=1.0, beta=0.2, n_reps=N_REPS, seed=20240102)
    points = [pt for pt in winners_curse_profile(base, PROFILE_EPS_GRID, PROFILE_PI_GRID) if pt.skipped is None]
    checks = []
    # each pi traces one curve; IVW bias must rise with the borderline share
    for pi in PROFILE_PI_GRID:
        curve = sorted((pt for pt in points if pt.pi == pi), key=lambda pt: pt.iv_proportion)
        bias = [pt.bias_ivw for pt in curve]
        rising = all(b > a for a, b in zip(bias, bias[1:]))
        checks.append((f"pi={pi:g} IVW bias {['%.3f' % b for b in bias]} strictly increasing", rising and len(bias) >= 2))
    worst = max(pt.bias_rivw for pt in points)
    checks.append((f"max RIVW bias {worst:.4f} < 0.05 over {len(points)} points", worst < 0.05))
    pooled = [pt.bias_ivw for pt in sorted(points, key=lambda pt: pt.iv_proportion)]
    with_ties = all(b > a for a, b in zip(pooled, pooled[1:]))
    report("7 (IVW bias vs borderline share)", checks)
    if not with_ties:
        print("note: pooled across pi the ordering has near-ties in IV proportion")


def test_criterion_8_null_effect(report):
    cfg = replace(table2_config("low"), beta=0.0, n_reps=N_REPS, seed=20240106, methods=(RIVW,))
    r = run_experiment(cfg).metric("rivw")
    t1 = 1 - r.coverage
    report("8 (type-I error under beta = 0)", [(f"rejection rate {t1:.4f} in {band(0.03, 0.07)}", within(t1, 0.03, 0.07))])


def test_criterion_9_determinism(report, tmp_path):
    cfg = tmp_path / "sim.toml"
    cfg.write_text(
        "[simulation]\np = 20000\npi_x = 0.01\npi_y = 0.01\neps_x2 = 2e-4\ntau2 = 2e-4\nn_reps = 3\nseed = 5\n"
        '[[simulation.methods]]\nestimator = "rivw"\nlam = 4.0556269811219074\neta = 0.5\n'
        '[[simulation.methods]]\nestimator = "ivw3"\nlam = 5.451310438136473\n'
        "[profile]\neps_grid = [2e-4]\npi_grid = [0.01]\n"
    )
    main(["simulate", "--config", str(cfg), "--gwas", "--out", str(tmp_path / "fx")])
    fx = tmp_path / "fx"
    commands = {
        "simulate": (["simulate", "--config", str(cfg), "--traces"], ["metrics.tsv", "metrics.json"]),
        "simulate --gwas": (["simulate", "--config", str(cfg), "--gwas"], ["exposure.tsv", "outcome.tsv", "ld.tsv"]),
        "profile": (["profile", "--config", str(cfg)], ["profile.tsv", "profile.json"]),
        "rb-check": (["rb-check", "--seed", "3", "--draws", "10000"], ["rb_summary.tsv", "rb_histogram.tsv"]),
        "oracle": (["oracle", "--gamma", "1", "--sigma-x", "1", "--draws", "20000"], ["oracle.json"]),
        "analyze": (
            ["analyze", "--exposure", str(fx / "exposure.tsv"), "--outcome", str(fx / "outcome.tsv"), "--ld", str(fx / "ld.tsv"), "--seed", "7"],
            ["report.json", "diagnostics.tsv"],
        ),
    }
    checks = []
    for name, (args, files) in commands.items():
        codes = [main(args + ["--out", str(tmp_path / f"{name}-{k}")]) for k in (0, 1)]
        same = all((tmp_path / f"{name}-0" / f).read_bytes() == (tmp_path / f"{name}-1" / f).read_bytes() for f in files)
        checks.append((name, codes == [0, 0] and same))
    report("9 (bitwise replay)", checks)


def test_criterion_10_fixture_coverage(report, tmp_path):
    n_seeds, covered = 100, 0
    for seed in range(n_seeds):
        cfg = SimConfig(p=20_000, pi_x=0.01, pi_y=0.0, eps_x2=2e-4, tau2=0.0, beta=1.0, seed=1000 + seed)
        d = tmp_path / str(seed)
        write_fixture(gwas_fixture(cfg), d)
        res = analyze(read_summary(d / "exposure.tsv"), read_summary(d / "outcome.tsv"), read_ld(d / "ld.tsv"), seed=seed)
        covered += res.report.ci_low <= 1.0 <= res.report.ci_high
    rate = covered / n_seeds
    report("10 (analyze on simulated fixtures)", [(f"RIVW CI covers 1 in {covered}/{n_seeds}", rate >= 0.93)])
