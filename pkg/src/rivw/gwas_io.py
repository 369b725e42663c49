"""GWAS summary-statistics ingestion, allele harmonization and LD pruning.

Input files are tab-separated with a header.  Column names are matched
case-insensitively against an alias table, so common layouts (``SNP``,
``BETA``, ``SE``, ``EA``, ``NEA`` ...) load without conversion.  Rows that
fail validation are not dropped silently: they are returned in a rejects
table with a reason.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import FormatError, PipelineError
from .estimators import PairArrays

log = logging.getLogger(__name__)

CANONICAL = ("snp_id", "chrom", "pos", "effect_allele", "other_allele", "beta", "se", "eaf", "pvalue", "n")
REQUIRED = ("snp_id", "chrom", "pos", "effect_allele", "other_allele", "beta", "se")

DEFAULT_ALIASES = {
    "snp_id": ("snp_id", "snp", "rsid", "rs_id", "markername", "id", "variant_id"),
    "chrom": ("chrom", "chr", "chromosome", "#chrom"),
    "pos": ("pos", "bp", "position", "base_pair_location"),
    "effect_allele": ("effect_allele", "ea", "a1", "alt", "allele1"),
    "other_allele": ("other_allele", "nea", "a2", "ref", "allele2"),
    "beta": ("beta", "b", "effect"),
    "se": ("se", "standard_error", "sebeta", "stderr"),
    "eaf": ("eaf", "frq", "af", "freq", "effect_allele_frequency"),
    "pvalue": ("pvalue", "p", "pval", "p_value"),
    "n": ("n", "samplesize", "sample_size"),
}

BASES = frozenset("ACGT")
_COMPLEMENT = {"A": "T", "T": "A", "C": "G", "G": "C"}
PALINDROMIC = frozenset({("A", "T"), ("T", "A"), ("C", "G"), ("G", "C")})

DEFAULT_R2_THRESHOLD = 0.001


@dataclass(frozen=True)
class FormatSpec:
    """Column aliases and parsing options for a summary-statistics file."""

    aliases: dict = field(default_factory=lambda: dict(DEFAULT_ALIASES))
    sep: str = "\t"
    na_values: tuple = ("NA",)

    def with_aliases(self, **extra: Iterable[str]) -> "FormatSpec":
        merged = {k: tuple(v) for k, v in self.aliases.items()}
        for key, names in extra.items():
            merged[key] = tuple(names) + merged.get(key, ())
        return FormatSpec(merged, self.sep, self.na_values)


@dataclass(frozen=True)
class SummaryRecord:
    snp_id: str
    chrom: str
    pos: int
    effect_allele: str
    other_allele: str
    beta: float
    se: float
    eaf: float | None = None
    pvalue: float | None = None
    n: int | None = None


def _opt(v, cast):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else cast(v)


@dataclass
class SummaryData:
    """Validated records (as a frame with canonical columns) plus rejects."""

    frame: pd.DataFrame
    rejects: pd.DataFrame
    source: str | None = None

    def __len__(self):
        return len(self.frame)

    def records(self) -> list[SummaryRecord]:
        out = []
        for row in self.frame.itertuples(index=False):
            out.append(
                SummaryRecord(
                    row.snp_id,
                    row.chrom,
                    int(row.pos),
                    row.effect_allele,
                    row.other_allele,
                    float(row.beta),
                    float(row.se),
                    _opt(row.eaf, float),
                    _opt(row.pvalue, float),
                    _opt(row.n, int),
                )
            )
        return out

    @classmethod
    def from_records(cls, records: Sequence[SummaryRecord]) -> "SummaryData":
        frame = pd.DataFrame([vars(r) for r in records], columns=list(CANONICAL))
        return validate_frame(frame)


def _resolve_columns(header: Sequence[str], spec: FormatSpec) -> dict:
    lowered = {}
    for col in header:
        lowered.setdefault(col.strip().lower(), col)
    mapping = {}
    for canon in CANONICAL:
        for alias in (canon,) + tuple(spec.aliases.get(canon, ())):
            if alias.lower() in lowered:
                mapping[canon] = lowered[alias.lower()]
                break
    missing = [c for c in REQUIRED if c not in mapping]
    if missing:
        raise FormatError(f"missing required column(s): {', '.join(missing)}")
    return mapping


def read_summary(path, spec: FormatSpec | None = None) -> SummaryData:
    """Parse a summary-statistics TSV into validated records and rejects."""
    spec = spec or FormatSpec()
    path = Path(path)
    try:
        raw = pd.read_csv(
            path,
            sep=spec.sep,
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            comment=None,
        )
    except pd.errors.EmptyDataError:
        raise FormatError(f"{path}: file is empty or has no header") from None
    except pd.errors.ParserError as exc:
        raise FormatError(f"{path}: {exc}") from None
    mapping = _resolve_columns(list(raw.columns), spec)
    frame = pd.DataFrame({canon: raw[col] for canon, col in mapping.items()})
    for canon in CANONICAL:
        if canon not in frame:
            frame[canon] = ""
    frame = frame[list(CANONICAL)]
    na = set(spec.na_values) | {""}
    frame = frame.apply(lambda s: s.str.strip()).mask(lambda d: d.isin(na))
    data = validate_frame(frame)
    data.source = str(path)
    if len(data.rejects):
        log.info("%s: %d rows rejected", path, len(data.rejects))
    return data


def validate_frame(frame: pd.DataFrame) -> SummaryData:
    """Type-convert canonical columns and route invalid rows to rejects."""
    missing = [c for c in REQUIRED if c not in frame.columns]
    if missing:
        raise FormatError(f"missing required column(s): {', '.join(missing)}")
    f = frame.copy()
    for col in CANONICAL:
        if col not in f.columns:
            f[col] = pd.NA
    reason = pd.Series(pd.NA, index=f.index, dtype=object)

    def flag(mask, text):
        nonlocal reason
        mask = mask.fillna(False).astype(bool) & reason.isna()
        reason = reason.mask(mask, text)

    f["snp_id"] = f["snp_id"].astype(object)
    flag(f["snp_id"].isna(), "missing snp_id")
    f["chrom"] = f["chrom"].astype(object).where(f["chrom"].isna(), f["chrom"].astype(str))
    flag(f["chrom"].isna(), "missing chrom")
    pos = pd.to_numeric(f["pos"], errors="coerce")
    flag(pos.isna() | (pos < 0) | (pos != np.floor(pos)), "invalid pos")
    for col in ("effect_allele", "other_allele"):
        f[col] = f[col].astype(object).where(f[col].isna(), f[col].astype(str).str.upper())
        flag(~f[col].isin(BASES), f"invalid {col}")
    flag(f["effect_allele"] == f["other_allele"], "identical alleles")
    beta = pd.to_numeric(f["beta"], errors="coerce")
    flag(~np.isfinite(beta.astype(float)), "non-numeric beta")
    se = pd.to_numeric(f["se"], errors="coerce")
    flag(~np.isfinite(se.astype(float)), "non-numeric SE")
    flag(se <= 0, "nonpositive SE")
    eaf = pd.to_numeric(f["eaf"], errors="coerce")
    flag(f["eaf"].notna() & ~((eaf >= 0) & (eaf <= 1)), "invalid eaf")
    pval = pd.to_numeric(f["pvalue"], errors="coerce")
    flag(f["pvalue"].notna() & ~((pval >= 0) & (pval <= 1)), "invalid pvalue")
    n = pd.to_numeric(f["n"], errors="coerce")
    flag(f["n"].notna() & ~(n > 0), "invalid n")
    flag(f["snp_id"].duplicated(keep="first") & f["snp_id"].notna(), "duplicate snp_id")

    bad = reason.notna()
    rejects = pd.DataFrame({"snp_id": f.loc[bad, "snp_id"].fillna("NA").astype(str), "reason": reason[bad]})
    good = ~bad
    out = pd.DataFrame(
        {
            "snp_id": f.loc[good, "snp_id"].astype(str),
            "chrom": f.loc[good, "chrom"].astype(str),
            "pos": pos[good].astype(np.int64),
            "effect_allele": f.loc[good, "effect_allele"].astype(str),
            "other_allele": f.loc[good, "other_allele"].astype(str),
            "beta": beta[good].astype(float),
            "se": se[good].astype(float),
            "eaf": eaf[good].astype(float),
            "pvalue": pval[good].astype(float),
            "n": n[good].astype(float),
        }
    ).reset_index(drop=True)
    return SummaryData(out, rejects.reset_index(drop=True))


def _as_summary(records) -> SummaryData:
    if isinstance(records, SummaryData):
        return records
    if isinstance(records, pd.DataFrame):
        return validate_frame(records)
    return SummaryData.from_records(list(records))


@dataclass
class HarmonizeReport:
    n_exposure: int
    n_outcome: int
    n_kept: int
    n_flipped: int
    dropped: pd.DataFrame  # snp_id, reason

    def to_dict(self) -> dict:
        return {
            "n_exposure": self.n_exposure,
            "n_outcome": self.n_outcome,
            "n_kept": self.n_kept,
            "n_flipped": self.n_flipped,
            "n_dropped": int(len(self.dropped)),
            "dropped_by_reason": {k: int(v) for k, v in self.dropped["reason"].value_counts().sort_index().items()},
        }


def _complement(s: pd.Series) -> pd.Series:
    return s.map(_COMPLEMENT)


def sort_key_frame(frame: pd.DataFrame) -> pd.DataFrame:
    return frame.sort_values(["chrom", "pos", "snp_id"], kind="mergesort").reset_index(drop=True)


def harmonize(exposure, outcome) -> tuple[PairArrays, HarmonizeReport, pd.DataFrame]:
    """Align outcome effects to the exposure effect allele.

    Returns the instrument pairs (sorted by chromosome, position and id), a
    report, and the aligned merged table with exposure metadata.  Strand
    ambiguous (palindromic) SNPs are dropped, as are SNPs missing from the
    outcome data or whose alleles cannot be matched even after strand
    complementing.
    """
    exp = _as_summary(exposure).frame
    out = _as_summary(outcome).frame
    merged = exp.merge(out, on="snp_id", how="left", suffixes=("", "_out"), indicator=True)

    E, O = merged["effect_allele"], merged["other_allele"]
    e, o = merged["effect_allele_out"], merged["other_allele_out"]
    absent = merged["_merge"] == "left_only"
    palin = pd.Series([(a, b) in PALINDROMIC for a, b in zip(E, O)], index=merged.index)
    same = (e == E) & (o == O)
    swapped = (e == O) & (o == E)
    ce, co = _complement(e), _complement(o)
    strand_same = (ce == E) & (co == O)
    strand_swapped = (ce == O) & (co == E)
    keep = same | strand_same
    flip = swapped | strand_swapped

    reason = pd.Series(pd.NA, index=merged.index, dtype=object)
    reason[absent] = "absent from outcome"
    reason[~absent & palin] = "palindromic"
    reason[reason.isna() & ~(keep | flip)] = "allele mismatch"

    dropped = pd.DataFrame({"snp_id": merged.loc[reason.notna(), "snp_id"], "reason": reason[reason.notna()]})
    for r, count in dropped["reason"].value_counts().items():
        log.info("harmonize: dropped %d SNPs (%s)", count, r)

    ok = reason.isna()
    aligned = merged.loc[ok].copy()
    sign = np.where(flip[ok] & ~keep[ok], -1.0, 1.0)
    aligned["beta_out"] = aligned["beta_out"].to_numpy() * sign
    aligned["flipped"] = sign < 0
    aligned = sort_key_frame(aligned)
    if aligned.empty:
        raise PipelineError("no SNPs left after harmonizing exposure and outcome")

    pairs = PairArrays(
        aligned["beta"].to_numpy(float),
        aligned["se"].to_numpy(float),
        aligned["beta_out"].to_numpy(float),
        aligned["se_out"].to_numpy(float),
        aligned["snp_id"].to_numpy(object),
    )
    report = HarmonizeReport(len(exp), len(out), len(aligned), int(aligned["flipped"].sum()), dropped.reset_index(drop=True))
    return pairs, report, aligned


@dataclass
class LdInfo:
    """Pairwise r^2 values and/or cluster labels among SNPs.

    SNPs sharing a cluster label count as fully correlated.  Pairs that are
    not listed are treated as independent.
    """

    pairs: list = field(default_factory=list)
    clusters: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = []
        for a, b, r2 in self.pairs:
            r2 = float(r2)
            if not 0.0 <= r2 <= 1.0:
                raise FormatError(f"r2 for ({a}, {b}) outside [0, 1]: {r2}")
            if a != b:
                clean.append((str(a), str(b), r2))
        self.pairs = clean

    def neighbours(self, r2_threshold: float) -> dict:
        adj: dict = {}
        for a, b, r2 in self.pairs:
            if r2 >= r2_threshold:
                adj.setdefault(a, set()).add(b)
                adj.setdefault(b, set()).add(a)
        groups: dict = {}
        for snp, c in self.clusters.items():
            groups.setdefault(c, set()).add(str(snp))
        for members in groups.values():
            for snp in members:
                adj.setdefault(snp, set()).update(members - {snp})
        return adj

    def r2(self, a: str, b: str) -> float:
        if a != b and a in self.clusters and self.clusters.get(a) == self.clusters.get(b):
            return 1.0
        best = 0.0
        for x, y, r2 in self.pairs:
            if {x, y} == {a, b}:
                best = max(best, r2)
        return best


def read_ld(path) -> LdInfo:
    """Read a pairwise LD file with columns ``snp_id_a snp_id_b r2``."""
    try:
        df = pd.read_csv(path, sep="\t", dtype={"snp_id_a": str, "snp_id_b": str})
    except pd.errors.EmptyDataError:
        raise FormatError(f"{path}: LD file is empty") from None
    missing = {"snp_id_a", "snp_id_b", "r2"} - set(df.columns)
    if missing:
        raise FormatError(f"{path}: LD file missing column(s) {sorted(missing)}")
    return LdInfo(list(zip(df["snp_id_a"], df["snp_id_b"], df["r2"].astype(float))))


def sigma_prune(records, ld: LdInfo | None, r2_threshold: float = DEFAULT_R2_THRESHOLD) -> set:
    """Greedy LD pruning ordered by exposure standard error.

    Repeatedly keeps the remaining SNP with the smallest SE and removes its
    LD partners (r^2 >= threshold).  Ties in SE are broken by chromosome,
    position and id.  Effect sizes and p-values are never consulted, so the
    retained set carries no selection on the exposure estimates.
    """
    frame = _as_summary(records).frame
    if ld is None:
        return set(frame["snp_id"])
    adj = ld.neighbours(r2_threshold)
    order = frame.sort_values(["se", "chrom", "pos", "snp_id"], kind="mergesort")["snp_id"]
    removed: set = set()
    retained: set = set()
    for snp in order:
        if snp in removed:
            continue
        retained.add(snp)
        removed.update(adj.get(snp, ()))
    return retained


def write_rejects(rejects: pd.DataFrame, path) -> None:
    rejects[["snp_id", "reason"]].to_csv(path, sep="\t", index=False)


def write_summary(frame: pd.DataFrame, path) -> None:
    """Write canonical-column records, ``NA`` for missing optionals."""
    out = frame.reindex(columns=list(CANONICAL))
    out.to_csv(path, sep="\t", index=False, na_rep="NA")
