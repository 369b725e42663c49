"""Ratio-type causal effect estimators for two-sample summary data.

Every estimator here has the form

    beta = sum(a_j / sy_j^2) / sum(b_j / sy_j^2)

with a per-SNP numerator ``a_j = Gamma_j * g_j * w_j`` and denominator
``b_j = (g_j^2 - v_j) * w_j``.  They differ only in the exposure effect ``g``
(raw or Rao-Blackwellized), the measurement-error correction ``v`` and the
weights ``w``.  Standard errors use the residual sandwich

    V = sum((a_j - beta * b_j)^2 / sy_j^4) / (sum(b_j / sy_j^2))^2
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateInstrumentsError, DomainError, InsufficientInstrumentsError
from .gauss import norm_quantile
from .selection import RbArrays, RbInstrument, SelectionConfig, rb_arrays

MIN_INSTRUMENTS = 3
DEFAULT_ALPHA = 0.05


class Method(str, enum.Enum):
    IVW = "IVW"
    DIVW = "dIVW"
    RIVW = "RIVW"
    SRIVW = "sRIVW"
    IVW3 = "ThreeSampleIVW"
    DIVW3 = "ThreeSampledIVW"


@dataclass(frozen=True)
class InstrumentPair:
    gamma_hat: float
    sigma_x: float
    Gamma_hat: float
    sigma_y: float
    snp_id: str | None = None

    def __post_init__(self):
        vals = (self.gamma_hat, self.sigma_x, self.Gamma_hat, self.sigma_y)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite summary statistic for {self.snp_id}")
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise DomainError(f"standard errors must be positive for {self.snp_id}")


@dataclass
class PairArrays:
    """Column-oriented instrument set; the form every estimator works on."""

    gamma_hat: np.ndarray
    sigma_x: np.ndarray
    Gamma_hat: np.ndarray
    sigma_y: np.ndarray
    snp_id: np.ndarray | None = None
    _z: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.gamma_hat = np.asarray(self.gamma_hat, dtype=float)
        self.sigma_x = np.broadcast_to(np.asarray(self.sigma_x, dtype=float), self.gamma_hat.shape)
        self.Gamma_hat = np.asarray(self.Gamma_hat, dtype=float)
        self.sigma_y = np.broadcast_to(np.asarray(self.sigma_y, dtype=float), self.gamma_hat.shape)
        if self.Gamma_hat.shape != self.gamma_hat.shape:
            raise DomainError("exposure and outcome arrays differ in length")
        if np.any(self.sigma_x <= 0) or np.any(self.sigma_y <= 0):
            raise DomainError("standard errors must be positive")
        self._z = None

    def __len__(self):
        return self.gamma_hat.shape[0]

    @property
    def z(self) -> np.ndarray:
        if self._z is None:
            self._z = self.gamma_hat / self.sigma_x
        return self._z

    @classmethod
    def from_pairs(cls, pairs: Sequence[InstrumentPair]) -> "PairArrays":
        return cls(
            np.array([p.gamma_hat for p in pairs], dtype=float),
            np.array([p.sigma_x for p in pairs], dtype=float),
            np.array([p.Gamma_hat for p in pairs], dtype=float),
            np.array([p.sigma_y for p in pairs], dtype=float),
            np.array([p.snp_id for p in pairs], dtype=object),
        )

    def to_pairs(self) -> list[InstrumentPair]:
        ids = self.snp_id if self.snp_id is not None else [None] * len(self)
        return [
            InstrumentPair(float(g), float(sx), float(G), float(sy), i)
            for g, sx, G, sy, i in zip(self.gamma_hat, self.sigma_x, self.Gamma_hat, self.sigma_y, ids)
        ]

    def subset(self, index) -> "PairArrays":
        return PairArrays(
            self.gamma_hat[index],
            self.sigma_x[index],
            self.Gamma_hat[index],
            self.sigma_y[index],
            None if self.snp_id is None else self.snp_id[index],
        )


@dataclass(frozen=True)
class EstimateReport:
    method: Method
    beta_hat: float
    se: float
    ci_low: float
    ci_high: float
    alpha_level: float
    n_selected: int
    f_stat: float
    kappa_hat: float | None = None

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        if self.kappa_hat is None:
            del d["kappa_hat"]
        return d


def as_arrays(pairs) -> PairArrays:
    if isinstance(pairs, PairArrays):
        return pairs
    return PairArrays.from_pairs(list(pairs))


def _index(selected, n: int):
    if selected is None:
        return slice(None)
    sel = np.asarray(selected)
    if sel.dtype == bool:
        if sel.shape != (n,):
            raise DomainError("selection mask length does not match the instruments")
        return np.flatnonzero(sel)
    return np.sort(sel.astype(np.intp))


def _count(idx, n: int) -> int:
    return n if isinstance(idx, slice) else int(idx.size)


def residual_terms(Gamma_hat, g, v, beta: float, w=1.0) -> np.ndarray:
    """Per-SNP residuals ``Gamma*g*w - beta*(g^2 - v)*w``."""
    return Gamma_hat * g * w - beta * (np.square(g) - v) * w


def ratio_fit(Gamma_hat, sigma_y, g, v, w=1.0) -> tuple[float, float]:
    """Point estimate and residual-sandwich variance for one ratio estimator."""
    inv_sy2 = 1.0 / np.square(sigma_y)
    num = np.sum(Gamma_hat * g * w * inv_sy2)
    den = np.sum((np.square(g) - v) * w * inv_sy2)
    if not den > 0:
        raise DegenerateInstrumentsError(f"estimator denominator {den:.6g} is not positive")
    beta = num / den
    resid = residual_terms(Gamma_hat, g, v, beta, w)
    var = np.sum(np.square(resid) * np.square(inv_sy2)) / den**2
    return float(beta), float(var)


def _report(method, beta, var, alpha, n_selected, f_stat, kappa=None) -> EstimateReport:
    se = math.sqrt(max(var, 0.0))
    q = norm_quantile(1.0 - alpha / 2.0)
    return EstimateReport(method, beta, se, beta - q * se, beta + q * se, alpha, int(n_selected), f_stat, kappa)


def _guard(n: int, method: Method):
    if n < MIN_INSTRUMENTS:
        raise InsufficientInstrumentsError(
            f"{method.value} needs at least {MIN_INSTRUMENTS} instruments, got {n}", n
        )


def f_statistic(pairs, selected=None) -> float:
    """Mean squared exposure z-score over the instruments used."""
    data = as_arrays(pairs)
    idx = _index(selected, len(data))
    if _count(idx, len(data)) == 0:
        raise DomainError("F statistic of an empty instrument set")
    return float(np.mean(np.square(data.z[idx])))


def kappa(gamma_true, sigma_x, selected=None) -> float:
    """Post-selection instrument strength; needs the true effects."""
    z = np.asarray(gamma_true, dtype=float) / np.asarray(sigma_x, dtype=float)
    idx = _index(selected, z.shape[0])
    return float(np.mean(np.square(z[idx]))) if _count(idx, z.shape[0]) else float("nan")


def _kappa_or_none(gamma_true, data, idx):
    if gamma_true is None:
        return None
    return kappa(np.asarray(gamma_true)[idx], data.sigma_x[idx])


def ivw(pairs, selected=None, alpha: float = DEFAULT_ALPHA, gamma_true=None, method=Method.IVW) -> EstimateReport:
    """Classical inverse-variance weighted estimate on the selected SNPs."""
    data = as_arrays(pairs)
    idx = _index(selected, len(data))
    n = _count(idx, len(data))
    _guard(n, method)
    d = data if isinstance(idx, slice) else data.subset(idx)
    beta, var = ratio_fit(d.Gamma_hat, d.sigma_y, d.gamma_hat, 0.0)
    return _report(method, beta, var, alpha, n, f_statistic(d), _kappa_or_none(gamma_true, data, idx))


def divw(pairs, selected=None, alpha: float = DEFAULT_ALPHA, gamma_true=None, method=Method.DIVW) -> EstimateReport:
    """IVW with ``sigma_x^2`` subtracted from each squared exposure effect.

    With ``selected=None`` every SNP is used, which is the recommended way to
    run it.
    """
    data = as_arrays(pairs)
    idx = _index(selected, len(data))
    n = _count(idx, len(data))
    _guard(n, method)
    d = data if isinstance(idx, slice) else data.subset(idx)
    beta, var = ratio_fit(d.Gamma_hat, d.sigma_y, d.gamma_hat, np.square(d.sigma_x))
    return _report(method, beta, var, alpha, n, f_statistic(d), _kappa_or_none(gamma_true, data, idx))


def rivw_from_rb(
    rb: RbArrays | Sequence[RbInstrument],
    Gamma_hat=None,
    sigma_y=None,
    alpha: float = DEFAULT_ALPHA,
    f_stat: float = float("nan"),
    kappa_hat: float | None = None,
) -> EstimateReport:
    """RIVW on already Rao-Blackwellized selected instruments.

    With a sequence of ``RbInstrument`` whose ``source`` is an
    ``InstrumentPair``, the outcome statistics and F statistic are read from
    the sources.
    """
    if not isinstance(rb, RbArrays):
        rb = list(rb)
        if Gamma_hat is None:
            sources = [r.source for r in rb]
            if any(s is None for s in sources):
                raise DomainError("RbInstrument.source is required when outcome stats are not given")
            Gamma_hat = [s.Gamma_hat for s in sources]
            sigma_y = [s.sigma_y for s in sources]
            f_stat = f_statistic(sources) if sources else float("nan")
        g = np.array([r.gamma_rb for r in rb], dtype=float)
        v = np.array([r.sigma2_rb for r in rb], dtype=float)
    else:
        g, v = rb.gamma_rb, rb.sigma2_rb
    _guard(g.size, Method.RIVW)
    beta, var = ratio_fit(np.asarray(Gamma_hat, float), np.asarray(sigma_y, float), g, v)
    return _report(Method.RIVW, beta, var, alpha, g.size, f_stat, kappa_hat)


def rivw(
    pairs,
    selected,
    cfg: SelectionConfig = SelectionConfig(),
    alpha: float = DEFAULT_ALPHA,
    gamma_true=None,
) -> EstimateReport:
    """Rerandomized IVW on the set chosen by randomized selection.

    ``selected`` is the outcome of randomized selection under the same
    ``cfg.lam`` and ``cfg.eta``; the correction only depends on the observed
    exposure effects of those SNPs.
    """
    data = as_arrays(pairs)
    idx = _index(selected, len(data))
    _guard(_count(idx, len(data)), Method.RIVW)
    d = data if isinstance(idx, slice) else data.subset(idx)
    rb = rb_arrays(d.gamma_hat, d.sigma_x, cfg.lam, cfg.eta)
    return rivw_from_rb(
        rb, d.Gamma_hat, d.sigma_y, alpha, f_statistic(d), _kappa_or_none(gamma_true, data, idx)
    )


def srivw(
    pairs,
    cfg: SelectionConfig = SelectionConfig(),
    alpha: float = DEFAULT_ALPHA,
    weights=None,
    gamma_true=None,
) -> EstimateReport:
    """Smoothed RIVW: every SNP weighted by its conditional selection probability.

    No selection step is taken.  ``weights`` overrides the conditional
    selection probabilities (used to check the reduction to RIVW).
    """
    data = as_arrays(pairs)
    _guard(len(data), Method.SRIVW)
    rb = rb_arrays(data.gamma_hat, data.sigma_x, cfg.lam, cfg.eta)
    w = rb.weight_cond if weights is None else np.broadcast_to(np.asarray(weights, float), (len(data),))
    beta, var = ratio_fit(data.Gamma_hat, data.sigma_y, rb.gamma_rb, rb.sigma2_rb, w)
    k = None if gamma_true is None else kappa(gamma_true, data.sigma_x)
    return _report(Method.SRIVW, beta, var, alpha, len(data), f_statistic(data), k)


def hard_threshold(z, lam: float) -> np.ndarray:
    return np.abs(np.asarray(z, dtype=float)) > lam


def three_sample_ivw(
    pairs,
    selection_zscores,
    lam: float,
    variant: str | Method = Method.IVW,
    alpha: float = DEFAULT_ALPHA,
    gamma_true=None,
) -> EstimateReport:
    """IVW or dIVW on SNPs selected in an independent exposure sample."""
    data = as_arrays(pairs)
    zsel = np.asarray(selection_zscores, dtype=float)
    if zsel.shape != (len(data),):
        raise DomainError("need one selection z-score per instrument")
    mask = hard_threshold(zsel, lam)
    variant = Method(variant) if not isinstance(variant, Method) else variant
    if variant in (Method.IVW, Method.IVW3):
        return ivw(data, mask, alpha, gamma_true, method=Method.IVW3)
    if variant in (Method.DIVW, Method.DIVW3):
        return divw(data, mask, alpha, gamma_true, method=Method.DIVW3)
    raise DomainError(f"three-sample variant must be IVW or dIVW, got {variant}")


def residuals_at_estimate(report: EstimateReport, Gamma_hat, g, v, w=1.0) -> np.ndarray:
    """Residuals evaluated at a fitted estimate, for diagnostics."""
    return residual_terms(np.asarray(Gamma_hat, float), np.asarray(g, float), np.asarray(v, float), report.beta_hat, w)

