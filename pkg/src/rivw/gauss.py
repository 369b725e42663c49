"""Standard normal kernels and one-dimensional adaptive quadrature.

All tail masses are computed from the complementary error function, never
as ``1 - cdf``.  The selection probabilities handled downstream are routinely
of order 1e-16, where the subtraction would return zero or noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _integrate
from scipy import special

from .errors import ConvergenceError, DomainError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Below this two-sided tail mass the ratios are evaluated in log space.
_LOG_PATH_THRESHOLD = 1e-250

# Tail mass of the standard normal beyond |y| = 12 is about 3.5e-33.
DEFAULT_TRUNCATION = 12.0


def _finite(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def norm_pdf(x):
    x = _finite(x)
    return _out(_INV_SQRT_2PI * np.exp(-0.5 * x * x))


def norm_logpdf(x):
    x = _finite(x)
    return _out(-0.5 * x * x - _LOG_SQRT_2PI)


def norm_cdf(x):
    return _out(special.ndtr(_finite(x)))


def norm_sf(x):
    """Survival function ``P[N(0,1) > x]`` without cancellation."""
    return _out(special.ndtr(-_finite(x)))


def norm_logcdf(x):
    return _out(special.log_ndtr(_finite(x)))


def norm_logsf(x):
    return _out(special.log_ndtr(-_finite(x)))


def norm_quantile(p):
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    return _out(special.ndtri(arr))


def two_sided_threshold(alpha: float) -> float:
    """z-score cutoff matching a two-sided significance level."""
    return norm_quantile(1.0 - alpha / 2.0)


def exterior_moments(a, b):
    """Moments of a standard normal restricted to ``(-inf, b) U (a, inf)``.

    Returns ``(mass, m1, m2)`` where ``mass = 1 - Phi(a) + Phi(b)``,
    ``m1 = (phi(a) - phi(b)) / mass`` and
    ``m2 = (a phi(a) - b phi(b)) / mass``.  Requires ``a >= b``.

    ``m1`` is the conditional mean and ``1 + m2`` the conditional second
    moment.  When the mass is tiny the ratios are formed in log space, where
    ``log_ndtr`` switches to its asymptotic Mills-ratio series; this keeps the
    ratios finite even when ``mass`` itself underflows to zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("interval endpoints must be finite")
    if np.any(a < b):
        raise DomainError("exterior_moments requires a >= b")
    a, b = np.broadcast_arrays(a, b)

    mass = special.ndtr(-a) + special.ndtr(b)
    pa = _INV_SQRT_2PI * np.exp(-0.5 * a * a)
    pb = _INV_SQRT_2PI * np.exp(-0.5 * b * b)
    with np.errstate(divide="ignore", invalid="ignore"):
        m1 = (pa - pb) / mass
        m2 = (a * pa - b * pb) / mass

    deep = mass < _LOG_PATH_THRESHOLD
    if np.any(deep):
        ad, bd = a[deep], b[deep]
        log_mass = np.logaddexp(special.log_ndtr(-ad), special.log_ndtr(bd))
        ra = np.exp(-0.5 * ad * ad - _LOG_SQRT_2PI - log_mass)
        rb = np.exp(-0.5 * bd * bd - _LOG_SQRT_2PI - log_mass)
        m1 = np.array(m1, copy=True)
        m2 = np.array(m2, copy=True)
        m1[deep] = ra - rb
        m2[deep] = ad * ra - bd * rb
    return _out(mass), _out(m1), _out(m2)


def mills_ratio_diff(a, b):
    """``(phi(a) - phi(b)) / (1 - Phi(a) + Phi(b))`` for ``a >= b``."""
    return exterior_moments(a, b)[1]


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 2000
    lower: float = -DEFAULT_TRUNCATION
    upper: float = DEFAULT_TRUNCATION

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if int(self.max_subdivisions) < 1:
            raise DomainError("max_subdivisions must be at least 1")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise DomainError("quadrature domain must be finite; truncate infinite ranges")
        if not self.lower < self.upper:
            raise DomainError("quadrature domain lower bound must be below upper bound")


def integrate(
    f: Callable[[float], float],
    spec: QuadratureSpec | None = None,
    breakpoints: Sequence[float] = (),
) -> float:
    """Adaptive Gauss-Kronrod integral of ``f`` over ``spec``'s domain.

    ``breakpoints`` inside the domain are passed to the subdivision as
    known locations of local difficulty (peaks, kinks).
    """
    spec = spec or QuadratureSpec()
    pts = sorted(p for p in breakpoints if spec.lower < p < spec.upper)
    value, err, info, *rest = _integrate.quad(
        f,
        spec.lower,
        spec.upper,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=int(spec.max_subdivisions),
        points=pts or None,
        full_output=1,
    )
    tolerance = max(spec.abs_tol, spec.rel_tol * abs(value))
    if not math.isfinite(value):
        raise ConvergenceError("quadrature produced a non-finite value", err)
    if err > tolerance:
        raise ConvergenceError(
            f"quadrature error estimate {err:.3g} exceeds tolerance {tolerance:.3g} "
            f"after at most {spec.max_subdivisions} subdivisions",
            err,
        )
    return float(value)
