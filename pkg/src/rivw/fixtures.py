"""Synthetic GWAS summary-statistics files built from one simulated replicate.

The files look like real inputs: allele labels are random, the outcome file
codes about half the SNPs on the opposite allele (some on the opposite
strand), rows are shuffled, and a few complications are mixed in so the
full harmonize/prune path is exercised:

* LD proxies: copies of real SNPs with noisier estimates, listed in the LD
  table with high r2, which sigma-based pruning should remove;
* palindromic null SNPs, which harmonization drops.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd

from .simulate import SimConfig, draw_replicate, substream

ROLE_FIXTURE = 5

_PAIRS = np.array([("A", "C"), ("A", "G"), ("C", "T"), ("G", "T"), ("C", "A"), ("G", "A"), ("T", "C"), ("T", "G")])
_FLIP = str.maketrans("ACGT", "TGCA")


class GwasFixture(NamedTuple):
    exposure: pd.DataFrame
    outcome: pd.DataFrame
    ld: pd.DataFrame
    gamma: np.ndarray  # true exposure effects of the independent SNPs


def gwas_fixture(
    cfg: SimConfig,
    rep: int = 0,
    n_proxies: int = 200,
    n_palindromic: int = 50,
    proxy_se_factor: float = 1.5,
    swap_prob: float = 0.5,
    strand_prob: float = 0.1,
) -> GwasFixture:
    truth, draw = draw_replicate(cfg, rep, third=False)
    rng = substream(cfg.seed, rep, ROLE_FIXTURE)
    p = cfg.p
    sx, sy = cfg.sigma_x, cfg.sigma_y

    ids = np.array([f"rs{i + 1}" for i in range(p)], dtype=object)
    chrom = (np.arange(p) % 22 + 1).astype(str)
    pos = 1000 * (np.arange(p) // 22 + 1)
    alleles = _PAIRS[rng.integers(0, len(_PAIRS), p)]
    bx, by = draw.pairs.gamma_hat, draw.pairs.Gamma_hat
    se_x, se_y = np.full(p, sx), np.full(p, sy)

    # proxies share the true effects of their partner but carry more noise
    src = rng.choice(p, size=min(n_proxies, p), replace=False)
    k = src.size
    prox_ids = np.array([f"rs{p + i + 1}" for i in range(k)], dtype=object)
    prox_bx = truth.gamma[src] + proxy_se_factor * sx * rng.standard_normal(k)
    prox_by = truth.Gamma[src] + proxy_se_factor * sy * rng.standard_normal(k)

    pal_ids = np.array([f"rs{p + k + i + 1}" for i in range(n_palindromic)], dtype=object)
    pal_alleles = np.array([("A", "T"), ("C", "G")])[rng.integers(0, 2, n_palindromic)]

    all_ids = np.concatenate([ids, prox_ids, pal_ids])
    all_chrom = np.concatenate([chrom, chrom[src], np.full(n_palindromic, "23")])
    all_pos = np.concatenate([pos, pos[src] + 1, 1000 * np.arange(1, n_palindromic + 1)])
    all_alleles = np.concatenate([alleles, alleles[src], pal_alleles])
    all_bx = np.concatenate([bx, prox_bx, sx * rng.standard_normal(n_palindromic)])
    all_by = np.concatenate([by, prox_by, sy * rng.standard_normal(n_palindromic)])
    all_sx = np.concatenate([se_x, np.full(k, proxy_se_factor * sx), np.full(n_palindromic, sx)])
    all_sy = np.concatenate([se_y, np.full(k, proxy_se_factor * sy), np.full(n_palindromic, sy)])
    m = all_ids.size

    exposure = pd.DataFrame(
        {
            "snp_id": all_ids,
            "chrom": all_chrom,
            "pos": all_pos,
            "effect_allele": all_alleles[:, 0],
            "other_allele": all_alleles[:, 1],
            "beta": all_bx,
            "se": all_sx,
            "n": cfg.n_x,
        }
    )

    ea, oa, beta_y = all_alleles[:, 0].copy(), all_alleles[:, 1].copy(), all_by.copy()
    swap = rng.random(m) < swap_prob
    swap[k + p:] = False  # palindromic swaps are indistinguishable from strand flips
    ea[swap], oa[swap] = all_alleles[swap, 1], all_alleles[swap, 0]
    beta_y[swap] = -beta_y[swap]
    strand = rng.random(m) < strand_prob
    strand[k + p:] = False
    ea = np.array([a.translate(_FLIP) if s else a for a, s in zip(ea, strand)], dtype=object)
    oa = np.array([a.translate(_FLIP) if s else a for a, s in zip(oa, strand)], dtype=object)
    outcome = pd.DataFrame(
        {
            "SNP": all_ids,
            "CHR": all_chrom,
            "BP": all_pos,
            "A1": ea,
            "A2": oa,
            "BETA": beta_y,
            "SE": all_sy,
            "N": cfg.n_y,
        }
    )

    ld = pd.DataFrame({"snp_id_a": ids[src], "snp_id_b": prox_ids, "r2": rng.uniform(0.5, 0.99, k)})
    exposure = exposure.iloc[rng.permutation(m)].reset_index(drop=True)
    outcome = outcome.iloc[rng.permutation(m)].reset_index(drop=True)
    return GwasFixture(exposure, outcome, ld, truth.gamma)


def write_fixture(fx: GwasFixture, out_dir) -> dict:
    """Write the three TSV files and return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"exposure": out / "exposure.tsv", "outcome": out / "outcome.tsv", "ld": out / "ld.tsv"}
    for key, frame in (("exposure", fx.exposure), ("outcome", fx.outcome), ("ld", fx.ld)):
        frame.to_csv(paths[key], sep="\t", index=False, lineterminator="\n")
    return paths
