"""Monte Carlo engine for the mixture-model simulation design.

True SNP effects follow a four-component mixture: exposure-only,
exposure plus pleiotropy, outcome-only and null.  Each replicate draws fresh
true effects and summary statistics, runs every configured method and keeps
one ``RepResult`` per method; ``SimMetrics`` aggregates them in replicate
order.

Random numbers come from counter-based Philox substreams keyed by
``(seed, replicate, role)``.  A replicate's draws therefore do not depend on
which worker runs it or in what order, and results replay bitwise.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, ExperimentError, MRError
from .estimators import (
    EstimateReport,
    Method,
    PairArrays,
    divw,
    ivw,
    rivw,
    srivw,
    three_sample_ivw,
)
from .gauss import two_sided_threshold
from .selection import DEFAULT_ETA, LAMBDA_GWS, LAMBDA_RIVW, SelectionConfig, select_randomized_mask

ROLE_TRUTH = 0
ROLE_EXPOSURE = 1
ROLE_OUTCOME = 2
ROLE_THIRD = 3
ROLE_PSEUDO = 4

WORKERS_ENV = "RIVW_WORKERS"

ESTIMATORS = ("ivw", "divw", "rivw", "srivw", "ivw3", "divw3")
_METHOD_OF = {
    "ivw": Method.IVW,
    "divw": Method.DIVW,
    "rivw": Method.RIVW,
    "srivw": Method.SRIVW,
    "ivw3": Method.IVW3,
    "divw3": Method.DIVW3,
}


def substream(seed: int, rep: int, role: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(rep), int(role)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class MethodSpec:
    estimator: str
    lam: float = 0.0
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}; expected one of {ESTIMATORS}")
        if self.lam < 0 or not math.isfinite(self.lam):
            raise ConfigError("lambda must be non-negative")
        if self.estimator in ("rivw", "srivw") and not (self.lam > 0 and self.eta > 0):
            raise ConfigError(f"{self.estimator} needs lambda > 0 and eta > 0")

    @property
    def method(self) -> Method:
        return _METHOD_OF[self.estimator]

    @property
    def label(self) -> str:
        name = {
            "ivw": "IVW",
            "divw": "dIVW",
            "rivw": "RIVW",
            "srivw": "sRIVW",
            "ivw3": "Three-sample IVW",
            "divw3": "Three-sample dIVW",
        }[self.estimator]
        if self.estimator in ("rivw", "srivw"):
            return f"{name} (lambda={self.lam:.2f}, eta={self.eta:g})"
        return f"{name} (lambda={self.lam:.2f})"

    @property
    def needs_third_sample(self) -> bool:
        return self.estimator in ("ivw3", "divw3")


TABLE2_METHODS = (
    MethodSpec("ivw", LAMBDA_GWS),
    MethodSpec("divw", 0.0),
    MethodSpec("rivw", LAMBDA_RIVW, DEFAULT_ETA),
    MethodSpec("srivw", LAMBDA_RIVW, DEFAULT_ETA),
    MethodSpec("ivw3", LAMBDA_GWS),
    MethodSpec("ivw3", LAMBDA_RIVW),
    MethodSpec("divw3", LAMBDA_GWS),
    MethodSpec("divw3", LAMBDA_RIVW),
)


@dataclass(frozen=True)
class SimConfig:
    p: int = 200_000
    pi_x: float = 0.002
    pi_y: float = 0.002
    rho: float = 1.0
    eps_x2: float = 1e-4
    tau2: float = 1e-4
    beta: float = 0.2
    n_x: int = 100_000
    n_y: int = 100_000
    n_reps: int = 500
    seed: int = 0
    methods: tuple = TABLE2_METHODS
    pleiotropy: str = "normal"
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        self.validate()

    def validate(self):
        if self.p < 1 or self.n_x < 1 or self.n_y < 1 or self.n_reps < 1:
            raise ConfigError("p, n_x, n_y and n_reps must be positive integers")
        for name in ("pi_x", "pi_y", "rho"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {v}")
        if self.pi_x + self.pi_y > 1.0:
            raise ConfigError("pi_x + pi_y must not exceed 1")
        if not self.eps_x2 > 0:
            raise ConfigError("eps_x2 must be positive")
        if self.tau2 < 0:
            raise ConfigError("tau2 must be non-negative")
        if not 0.0 < self.h2_x < 1.0:
            raise ConfigError(f"exposure heritability p*pi_x*eps_x2 = {self.h2_x:.4g} must lie in (0, 1)")
        if not 0.0 < self.h2_y < 1.0:
            raise ConfigError(f"outcome heritability {self.h2_y:.4g} must lie in (0, 1)")
        if self.pleiotropy not in ("normal", "uniform"):
            raise ConfigError("pleiotropy must be 'normal' or 'uniform'")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not self.methods:
            raise ConfigError("at least one method is required")

    @property
    def h2_x(self) -> float:
        return self.p * self.pi_x * self.eps_x2

    @property
    def h2_y(self) -> float:
        return self.beta**2 * self.h2_x + self.p * (self.pi_x * (1.0 - self.rho) + self.pi_y) * self.tau2

    @property
    def sigma_x(self) -> float:
        return 1.0 / math.sqrt(self.n_x)

    @property
    def sigma_y(self) -> float:
        return 1.0 / math.sqrt(self.n_y)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = [asdict(m) for m in self.methods]
        return d


TABLE2_BLOCKS = {
    "low": dict(pi_x=0.002, pi_y=0.002, eps_x2=1e-4, tau2=1e-4),
    "medium": dict(pi_x=0.01, pi_y=0.01, eps_x2=1e-4, tau2=1e-4),
    "high": dict(pi_x=0.01, pi_y=0.01, eps_x2=3e-4, tau2=3e-4),
}


def table2_config(block: str, **overrides) -> SimConfig:
    try:
        params = dict(TABLE2_BLOCKS[block])
    except KeyError:
        raise ConfigError(f"unknown block {block!r}; expected one of {sorted(TABLE2_BLOCKS)}") from None
    params.update(overrides)
    return SimConfig(**params)


class TrueEffects(NamedTuple):
    gamma: np.ndarray
    alpha: np.ndarray
    Gamma: np.ndarray


class SummaryDraw(NamedTuple):
    pairs: PairArrays
    third_gamma_hat: np.ndarray | None


def draw_true_effects(cfg: SimConfig, rng: np.random.Generator) -> TrueEffects:
    """Mixture draw of exposure effects and pleiotropic effects per SNP."""
    p = cfg.p
    u = rng.random(p)
    exposure = u < cfg.pi_x
    pleio = (u >= cfg.pi_x * cfg.rho) & (u < cfg.pi_x + cfg.pi_y)
    gamma = np.zeros(p)
    alpha = np.zeros(p)
    gamma[exposure] = math.sqrt(cfg.eps_x2) * rng.standard_normal(int(exposure.sum()))
    k = int(pleio.sum())
    if cfg.pleiotropy == "normal":
        alpha[pleio] = math.sqrt(cfg.tau2) * rng.standard_normal(k)
    else:
        half_width = math.sqrt(3.0 * cfg.tau2)
        alpha[pleio] = rng.uniform(-half_width, half_width, k)
    return TrueEffects(gamma, alpha, cfg.beta * gamma + alpha)


def draw_summary_stats(
    truth: TrueEffects,
    cfg: SimConfig,
    rng_exposure: np.random.Generator,
    rng_outcome: np.random.Generator,
    rng_third: np.random.Generator | None = None,
) -> SummaryDraw:
    """Independent normal measurement errors around the true effects."""
    sx, sy = cfg.sigma_x, cfg.sigma_y
    gamma_hat = truth.gamma + sx * rng_exposure.standard_normal(cfg.p)
    Gamma_hat = truth.Gamma + sy * rng_outcome.standard_normal(cfg.p)
    third = None
    if rng_third is not None:
        third = truth.gamma + sx * rng_third.standard_normal(cfg.p)
    return SummaryDraw(PairArrays(gamma_hat, sx, Gamma_hat, sy), third)


def draw_replicate(cfg: SimConfig, rep: int, third: bool | None = None):
    """True effects and summary statistics of one replicate."""
    if third is None:
        third = any(m.needs_third_sample for m in cfg.methods)
    truth = draw_true_effects(cfg, substream(cfg.seed, rep, ROLE_TRUTH))
    draw = draw_summary_stats(
        truth,
        cfg,
        substream(cfg.seed, rep, ROLE_EXPOSURE),
        substream(cfg.seed, rep, ROLE_OUTCOME),
        substream(cfg.seed, rep, ROLE_THIRD) if third else None,
    )
    return truth, draw


def pseudo_noise(cfg: SimConfig, rep: int, eta: float) -> np.ndarray:
    """Standard-normal pseudo-noise for one replicate, scaled to ``eta``."""
    return eta * substream(cfg.seed, rep, ROLE_PSEUDO).standard_normal(cfg.p)


@dataclass(frozen=True)
class RepResult:
    beta_hat: float = float("nan")
    se: float = float("nan")
    covered: bool = False
    ci_length: float = float("nan")
    n_ivs: int = 0
    kappa: float = float("nan")
    f_stat: float = float("nan")
    error: str | None = None

    @classmethod
    def from_report(cls, report: EstimateReport, beta: float) -> "RepResult":
        return cls(
            report.beta_hat,
            report.se,
            bool(report.covers(beta)),
            report.ci_high - report.ci_low,
            report.n_selected,
            float("nan") if report.kappa_hat is None else report.kappa_hat,
            report.f_stat,
        )


@dataclass(frozen=True)
class RepOutput:
    rep: int
    results: tuple
    n_gws: int  # exposure SNPs with p < 5e-8
    n_gws_band: int  # of those, p in (5e-10, 5e-8)


_LAMBDA_5E10 = two_sided_threshold(5e-10)


def apply_method(spec: MethodSpec, draw: SummaryDraw, truth: TrueEffects, noise_std: np.ndarray | None, alpha: float):
    pairs = draw.pairs
    if spec.estimator == "ivw":
        return ivw(pairs, np.abs(pairs.z) > spec.lam, alpha, truth.gamma)
    if spec.estimator == "divw":
        sel = None if spec.lam == 0 else np.abs(pairs.z) > spec.lam
        return divw(pairs, sel, alpha, truth.gamma)
    if spec.estimator == "rivw":
        cfg = SelectionConfig(spec.lam, spec.eta)
        mask = select_randomized_mask(pairs.z, spec.lam, spec.eta * noise_std)
        return rivw(pairs, mask, cfg, alpha, truth.gamma)
    if spec.estimator == "srivw":
        return srivw(pairs, SelectionConfig(spec.lam, spec.eta), alpha, gamma_true=truth.gamma)
    variant = Method.IVW if spec.estimator == "ivw3" else Method.DIVW
    zsel = draw.third_gamma_hat / pairs.sigma_x
    return three_sample_ivw(pairs, zsel, spec.lam, variant, alpha, truth.gamma)


def run_replicate(cfg: SimConfig, rep: int) -> RepOutput:
    truth, draw = draw_replicate(cfg, rep)
    noise_std = None
    if any(m.estimator == "rivw" for m in cfg.methods):
        noise_std = substream(cfg.seed, rep, ROLE_PSEUDO).standard_normal(cfg.p)
    results = []
    for spec in cfg.methods:
        try:
            report = apply_method(spec, draw, truth, noise_std, cfg.alpha)
            results.append(RepResult.from_report(report, cfg.beta))
        except MRError as exc:
            results.append(RepResult(error=type(exc).__name__))
    absz = np.abs(draw.pairs.z)
    gws = absz > LAMBDA_GWS
    band = gws & (absz < _LAMBDA_5E10)
    return RepOutput(rep, tuple(results), int(gws.sum()), int(band.sum()))


@dataclass(frozen=True)
class SimMetrics:
    method: str
    mean_beta: float
    monte_sd: float
    mean_se: float
    coverage: float
    mean_ci_length: float
    mean_n_ivs: float
    mean_kappa: float
    mean_f: float
    n_reps_effective: int
    n_reps_failed: int
    failures: dict = field(default_factory=dict)

    @property
    def mc_se_beta(self) -> float:
        """Monte Carlo standard error of ``mean_beta``."""
        return self.monte_sd / math.sqrt(self.n_reps_effective) if self.n_reps_effective else float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def aggregate(spec: MethodSpec, results: Sequence[RepResult]) -> SimMetrics:
    ok = [r for r in results if r.error is None]
    failures: dict = {}
    for r in results:
        if r.error is not None:
            failures[r.error] = failures.get(r.error, 0) + 1
    n = len(ok)
    if n == 0:
        nan = float("nan")
        return SimMetrics(spec.label, nan, nan, nan, nan, nan, nan, nan, nan, 0, len(results), failures)
    beta = np.array([r.beta_hat for r in ok])
    return SimMetrics(
        method=spec.label,
        mean_beta=float(np.mean(beta)),
        monte_sd=float(np.std(beta, ddof=1)) if n > 1 else 0.0,
        mean_se=float(np.mean([r.se for r in ok])),
        coverage=float(np.mean([r.covered for r in ok])),
        mean_ci_length=float(np.mean([r.ci_length for r in ok])),
        mean_n_ivs=float(np.mean([r.n_ivs for r in ok])),
        mean_kappa=float(np.mean([r.kappa for r in ok])),
        mean_f=float(np.mean([r.f_stat for r in ok])),
        n_reps_effective=n,
        n_reps_failed=len(results) - n,
        failures=failures,
    )


@dataclass
class ExperimentResult:
    config: SimConfig
    metrics: list
    reps: list  # RepOutput per replicate, in replicate order

    def metric(self, estimator: str, lam: float | None = None) -> SimMetrics:
        for spec, m in zip(self.config.methods, self.metrics):
            if spec.estimator == estimator and (lam is None or abs(spec.lam - lam) < 1e-9):
                return m
        raise KeyError((estimator, lam))

    def per_rep(self, index: int) -> list:
        return [r.results[index] for r in self.reps]

    @property
    def iv_proportion(self) -> float:
        total = sum(r.n_gws for r in self.reps)
        return sum(r.n_gws_band for r in self.reps) / total if total else float("nan")


def _worker_count(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def _run_chunk(args):
    cfg, reps = args
    return [run_replicate(cfg, r) for r in reps]


def run_experiment(cfg: SimConfig, workers: int | None = None) -> ExperimentResult:
    """Run every replicate and aggregate per-method metrics.

    Replicates are independent; with ``workers > 1`` they are spread over a
    process pool and reassembled in replicate order.  Replicates where a
    method raises (typically too few instruments) count towards that method's
    ``n_reps_failed`` and are left out of its moments.
    """
    workers = _worker_count(workers)
    reps = list(range(cfg.n_reps))
    if workers == 1:
        outputs = [run_replicate(cfg, r) for r in reps]
    else:
        chunks = [reps[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_chunk, [(cfg, c) for c in chunks]))
        outputs = sorted((o for part in parts for o in part), key=lambda o: o.rep)
    metrics = [aggregate(spec, [o.results[i] for o in outputs]) for i, spec in enumerate(cfg.methods)]
    if all(m.n_reps_effective == 0 for m in metrics):
        raise ExperimentError("every method failed in every replicate")
    return ExperimentResult(cfg, metrics, outputs)


def bias_proportion(estimates, beta: float) -> float:
    """Absolute Monte Carlo bias relative to the true effect."""
    return abs(float(np.mean(estimates)) - beta) / abs(beta)


# Grid used to trace bias against the share of borderline instruments.
PROFILE_EPS_GRID = (2e-5, 3e-5, 5e-5, 1e-4, 3e-4, 5e-4)
PROFILE_PI_GRID = (0.005, 0.05)
PROFILE_METHODS = (
    MethodSpec("ivw", LAMBDA_GWS),
    MethodSpec("ivw3", LAMBDA_GWS),
    MethodSpec("rivw", LAMBDA_RIVW, DEFAULT_ETA),
)


@dataclass(frozen=True)
class ProfilePoint:
    eps_x2: float
    pi: float
    h2_x: float
    h2_y: float
    skipped: str | None
    iv_proportion: float = float("nan")
    mean_f_three_sample: float = float("nan")
    bias_ivw: float = float("nan")
    bias_three_sample_ivw: float = float("nan")
    bias_rivw: float = float("nan")
    mean_ivs_ivw: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def expected_hard_selected(cfg: SimConfig, lam: float) -> float:
    """Expected number of SNPs with |z| > lam under the mixture."""
    from .gauss import norm_sf

    relevant = 2.0 * norm_sf(lam / math.sqrt(1.0 + cfg.eps_x2 * cfg.n_x))
    null = 2.0 * norm_sf(lam)
    return cfg.p * (cfg.pi_x * relevant + (1.0 - cfg.pi_x) * null)


def winners_curse_profile(
    base: SimConfig,
    eps_grid: Sequence[float] = PROFILE_EPS_GRID,
    pi_grid: Sequence[float] = PROFILE_PI_GRID,
    workers: int | None = None,
) -> list[ProfilePoint]:
    """Bias of IVW, three-sample IVW and RIVW across a grid of effect sizes.

    ``eps_x2 = tau2`` and ``pi_x = pi_y`` vary together; other settings come
    from ``base``.  Points where either heritability leaves (0, 1), or where
    IVW would be expected to select fewer than three SNPs, are returned with
    ``skipped`` set and no estimates.
    """
    points = []
    for pi in pi_grid:
        for eps in eps_grid:
            h2x = base.p * pi * eps
            h2y = base.beta**2 * h2x + base.p * (pi * (1.0 - base.rho) + pi) * eps
            if not (0 < h2x < 1 and 0 < h2y < 1):
                points.append(ProfilePoint(eps, pi, h2x, h2y, "heritability outside (0, 1)"))
                continue
            cfg = replace(base, eps_x2=eps, tau2=eps, pi_x=pi, pi_y=pi, methods=PROFILE_METHODS)
            if expected_hard_selected(cfg, LAMBDA_GWS) < 3:
                points.append(ProfilePoint(eps, pi, h2x, h2y, "fewer than 3 instruments expected"))
                continue
            res = run_experiment(cfg, workers)
            m_ivw, m_ivw3, m_rivw = res.metrics
            points.append(
                ProfilePoint(
                    eps,
                    pi,
                    h2x,
                    h2y,
                    None,
                    iv_proportion=res.iv_proportion,
                    mean_f_three_sample=m_ivw3.mean_f,
                    bias_ivw=abs(m_ivw.mean_beta - cfg.beta) / abs(cfg.beta),
                    bias_three_sample_ivw=abs(m_ivw3.mean_beta - cfg.beta) / abs(cfg.beta),
                    bias_rivw=abs(m_rivw.mean_beta - cfg.beta) / abs(cfg.beta),
                    mean_ivs_ivw=m_ivw.mean_n_ivs,
                )
            )
    return points
