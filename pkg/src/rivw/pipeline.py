"""End-to-end analysis of a pair of summary-statistics files."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DomainError
from .estimators import DEFAULT_ALPHA, EstimateReport, PairArrays, divw, hard_threshold, ivw, rivw, srivw
from .gwas_io import DEFAULT_R2_THRESHOLD, HarmonizeReport, LdInfo, SummaryData, harmonize, sigma_prune
from .selection import DEFAULT_ETA, LAMBDA_GWS, LAMBDA_RIVW, SelectionConfig, rb_arrays, select_randomized_mask

METHODS = ("rivw", "srivw", "ivw", "divw")
DEFAULT_LAMBDA = {"rivw": LAMBDA_RIVW, "srivw": LAMBDA_RIVW, "ivw": LAMBDA_GWS, "divw": 0.0}


@dataclass
class AnalysisResult:
    report: EstimateReport
    diagnostics: pd.DataFrame
    harmonization: HarmonizeReport
    n_pruned: int
    lam: float
    eta: float


def pseudo_noise_for(seed: int, n: int, eta: float) -> np.ndarray:
    """Pseudo-noise for ``n`` SNPs, in the pipeline's canonical SNP order."""
    ss = np.random.SeedSequence(int(seed))
    return eta * np.random.Generator(np.random.Philox(ss)).standard_normal(n)


def analyze(
    exposure: SummaryData,
    outcome: SummaryData,
    ld: LdInfo | None = None,
    method: str = "rivw",
    lam: float | None = None,
    eta: float = DEFAULT_ETA,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    r2_threshold: float = DEFAULT_R2_THRESHOLD,
) -> AnalysisResult:
    """Harmonize, prune, select and estimate.

    Pseudo-noise is drawn from ``seed`` in chromosome/position/id order of
    the pruned SNPs, so the selection does not depend on input row order.
    """
    if method not in METHODS:
        raise DomainError(f"method must be one of {METHODS}, got {method!r}")
    lam = DEFAULT_LAMBDA[method] if lam is None else float(lam)
    pairs, hreport, aligned = harmonize(exposure, outcome)
    keep = sigma_prune(aligned, ld, r2_threshold)
    mask = np.array([s in keep for s in pairs.snp_id], dtype=bool)
    pairs = pairs.subset(mask)
    n = len(pairs)

    noise = np.full(n, np.nan)
    rb = None
    if method in ("rivw", "srivw"):
        cfg = SelectionConfig(lam, eta, seed)
        rb = rb_arrays(pairs.gamma_hat, pairs.sigma_x, lam, eta)
        if method == "rivw":
            noise = pseudo_noise_for(seed, n, eta)
            selected = select_randomized_mask(pairs.z, lam, noise)
            report = rivw(pairs, selected, cfg, alpha)
        else:
            selected = np.ones(n, dtype=bool)
            report = srivw(pairs, cfg, alpha)
    elif method == "ivw":
        selected = hard_threshold(pairs.z, lam)
        report = ivw(pairs, selected, alpha)
    else:
        selected = hard_threshold(pairs.z, lam) if lam > 0 else np.ones(n, dtype=bool)
        report = divw(pairs, selected, alpha)

    diag = _diagnostics(pairs, noise, selected, rb)
    return AnalysisResult(report, diag, hreport, n, lam, eta)


def _diagnostics(pairs: PairArrays, noise, selected, rb) -> pd.DataFrame:
    nan = np.full(len(pairs), np.nan)
    return pd.DataFrame(
        {
            "snp_id": pairs.snp_id,
            "gamma_hat": pairs.gamma_hat,
            "sigma_x": pairs.sigma_x,
            "Gamma_hat": pairs.Gamma_hat,
            "sigma_y": pairs.sigma_y,
            "z": pairs.z,
            "pseudo_noise": noise,
            "selected": selected.astype(int),
            "gamma_rb": nan if rb is None else rb.gamma_rb,
            "sigma2_rb": nan if rb is None else rb.sigma2_rb,
            "weight_cond": nan if rb is None else rb.weight_cond,
        }
    )
