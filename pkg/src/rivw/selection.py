"""Randomized instrument selection and Rao-Blackwellized exposure effects.

A SNP is selected when its exposure z-score, perturbed by independent
pseudo-noise ``Z ~ N(0, eta^2)``, clears ``lam`` in absolute value.  Because
the perturbation is known in distribution, the selection-conditional mean of
the unbiased "initial" estimate ``gamma_hat - sigma_x * Z / eta^2`` given
``gamma_hat`` has a closed form; that is the Rao-Blackwellized estimate
returned here, together with an unbiased estimate of its conditional
variance.

Everything in this module is deterministic: the caller owns the random
streams and passes realized pseudo-noise in explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np
from scipy import special

from .errors import DomainError
from .gauss import (
    QuadratureSpec,
    exterior_moments,
    integrate,
    norm_cdf,
    norm_pdf,
    norm_sf,
    two_sided_threshold,
)

#: z-score cutoff for two-sided p < 5e-5 (about 4.06).
LAMBDA_RIVW = two_sided_threshold(5e-5)
#: genome-wide significance cutoff for two-sided p < 5e-8 (about 5.45).
LAMBDA_GWS = two_sided_threshold(5e-8)
DEFAULT_ETA = 0.5


@dataclass(frozen=True)
class SelectionConfig:
    lam: float = LAMBDA_RIVW
    eta: float = DEFAULT_ETA
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise DomainError(f"lam must be positive, got {self.lam!r}")
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise DomainError(f"eta must be positive, got {self.eta!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SelectionOutcome:
    selected: bool
    pseudo_noise: float
    score: float


@dataclass(frozen=True)
class RbInstrument:
    gamma_rb: float
    sigma2_rb: float
    weight_cond: float
    a_plus: float
    a_minus: float
    source: Any = None


class RbArrays(NamedTuple):
    gamma_rb: np.ndarray
    sigma2_rb: np.ndarray
    weight_cond: np.ndarray
    a_plus: np.ndarray
    a_minus: np.ndarray


def select_randomized(z: float, cfg: SelectionConfig, noise_draw: float) -> SelectionOutcome:
    """Apply the perturbed threshold rule to a single exposure z-score.

    ``noise_draw`` must already be on the ``N(0, eta^2)`` scale.  With
    ``noise_draw = 0`` this is the ordinary hard threshold ``|z| > lam``.
    """
    if not (math.isfinite(z) and math.isfinite(noise_draw)):
        raise DomainError("z-score and pseudo-noise must be finite")
    score = abs(z + noise_draw) - cfg.lam
    return SelectionOutcome(selected=score > 0, pseudo_noise=float(noise_draw), score=float(score))


def select_randomized_mask(z, lam: float, noise) -> np.ndarray:
    """Vectorized selection rule; returns a boolean mask."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DomainError("z-scores must be finite")
    return np.abs(z + noise) > lam


def _check_sigma(sigma_x):
    s = np.asarray(sigma_x, dtype=float)
    if not np.all(np.isfinite(s) & (s > 0)):
        raise DomainError("sigma_x must be positive and finite")
    return s


def rb_arrays(gamma_hat, sigma_x, lam: float, eta: float) -> RbArrays:
    """Rao-Blackwellized effects, variance estimates and selection weights.

    Vectorized over SNPs.  The per-SNP variance estimate can be negative; it
    is only meaningful in aggregate.
    """
    g = np.asarray(gamma_hat, dtype=float)
    s = _check_sigma(sigma_x)
    if not np.all(np.isfinite(g)):
        raise DomainError("gamma_hat must be finite")
    z = g / s
    # written symmetrically so that negating z swaps and negates the bounds
    # exactly, which makes the correction exactly odd in gamma_hat
    a_plus = (lam - z) / eta
    a_minus = (-lam - z) / eta
    weight, m1, m2 = exterior_moments(a_plus, a_minus)
    inv_eta2 = 1.0 / (eta * eta)
    gamma_rb = g - (s / eta) * m1
    sigma2_rb = s * s * (1.0 - inv_eta2 * m2 + inv_eta2 * np.square(m1))
    return RbArrays(gamma_rb, sigma2_rb, weight, a_plus, a_minus)


def rao_blackwellize(gamma_hat: float, sigma_x: float, cfg: SelectionConfig, source=None) -> RbInstrument:
    """Bias-corrected exposure effect for one selected SNP."""
    r = rb_arrays(gamma_hat, sigma_x, cfg.lam, cfg.eta)
    return RbInstrument(
        gamma_rb=float(r.gamma_rb),
        sigma2_rb=float(r.sigma2_rb),
        weight_cond=float(r.weight_cond),
        a_plus=float(r.a_plus),
        a_minus=float(r.a_minus),
        source=source,
    )


def conditional_weight(gamma_hat, sigma_x, cfg: SelectionConfig):
    """Selection probability given the observed effect, over the pseudo-noise."""
    w = rb_arrays(gamma_hat, sigma_x, cfg.lam, cfg.eta).weight_cond
    return float(w) if np.ndim(w) == 0 else w


def unconditional_weight(gamma_true_over_sigma, cfg: SelectionConfig):
    """Selection probability over both sampling noise and pseudo-noise."""
    g = np.asarray(gamma_true_over_sigma, dtype=float)
    if not np.all(np.isfinite(g)):
        raise DomainError("standardized effect must be finite")
    scale = math.sqrt(1.0 + cfg.eta**2)
    w = special.ndtr(-(cfg.lam - g) / scale) + special.ndtr((-cfg.lam - g) / scale)
    return float(w) if np.ndim(w) == 0 else w


def rb_variance_quadrature(
    gamma_true: float,
    sigma_x: float,
    cfg: SelectionConfig,
    quad: QuadratureSpec | None = None,
) -> float:
    """Exact selection-conditional variance of the Rao-Blackwellized effect.

    Evaluated by numerical integration over the standardized sampling error
    ``y = (gamma_hat - gamma) / sigma_x``.  Depends on the unknown true
    effect, so it serves as a reference value in tests and diagnostics, not
    as an estimator.
    """
    if not (math.isfinite(sigma_x) and sigma_x > 0):
        raise DomainError("sigma_x must be positive")
    lam, eta = cfg.lam, cfg.eta
    g = gamma_true / sigma_x
    prob = unconditional_weight(g, cfg)
    if not prob > 1e-300:
        raise DomainError(f"selection probability {prob:.3g} too small to condition on")
    quad = quad or QuadratureSpec()

    def bounds(y):
        b_plus = -(g + y) / eta + lam / eta
        return b_plus, b_plus - 2.0 * lam / eta

    def first(y):
        bp, bm = bounds(y)
        return y * norm_pdf(y) * (norm_pdf(bp) - norm_pdf(bm))

    def second(y):
        bp, bm = bounds(y)
        # (phi(B+) - phi(B-))^2 / mass, written to survive mass underflow
        diff = norm_pdf(bp) - norm_pdf(bm)
        return norm_pdf(y) * diff * exterior_moments(bp, bm)[1]

    # selection boundaries in y, where the integrands change fastest
    edges = (lam - g, -lam - g)
    i1 = integrate(first, quad, edges)
    i2 = integrate(second, quad, edges)
    return sigma_x**2 * (1.0 - i1 / (eta * prob) + i2 / (eta * eta * prob))


def sample_selected(
    gamma_over_sigma: float,
    cfg: SelectionConfig,
    n: int,
    rng: np.random.Generator,
    method: str = "conditional",
    chunk: int = 2_000_000,
):
    """Draw standardized exposure z-scores that survive randomized selection.

    Returns ``(z, noise)`` arrays of length ``n`` where ``z ~ N(g, 1)`` and
    ``noise ~ N(0, eta^2)`` jointly, conditioned on ``|z + noise| > lam``.

    ``method="rejection"`` simulates the selection literally and keeps the
    survivors.  ``method="conditional"`` samples the sum ``T = z - g + noise``
    from its two-sided truncated law and then ``z`` given ``T``; it is exact
    and avoids rejection when selection is rare.
    """
    g, lam, eta = float(gamma_over_sigma), cfg.lam, cfg.eta
    if method == "rejection":
        zs, ns, have = [], [], 0
        while have < n:
            z = g + rng.standard_normal(chunk)
            noise = eta * rng.standard_normal(chunk)
            keep = np.abs(z + noise) > lam
            zs.append(z[keep])
            ns.append(noise[keep])
            have += int(keep.sum())
        return np.concatenate(zs)[:n], np.concatenate(ns)[:n]
    if method != "conditional":
        raise DomainError(f"unknown sampling method {method!r}")

    s2 = 1.0 + eta * eta
    s = math.sqrt(s2)
    upper = (lam - g) / s
    lower = (-lam - g) / s
    p_up = norm_sf(upper)
    p_lo = norm_cdf(lower)
    go_up = rng.random(n) < p_up / (p_up + p_lo)
    u = 1.0 - rng.random(n)  # in (0, 1]
    # inverse-cdf draws within each tail, avoiding 1 - cdf subtraction
    t = np.where(
        go_up,
        -special.ndtri(u * p_up),
        special.ndtri(u * p_lo),
    ) * s
    err = t / s2 + math.sqrt(eta * eta / s2) * rng.standard_normal(n)
    z = g + err
    noise = t - err
    return z, noise
