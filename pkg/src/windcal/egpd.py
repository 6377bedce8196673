"""Extended Generalized Pareto distribution in upper-endpoint form.

The family composes a power transform G(u) = u**kappa with a GPD whose
shape is negative, so the law has a finite upper endpoint delta = -sigma/xi
and an extra lower-tail shape kappa.  All functions accept scalars or numpy
arrays for the data argument and are pure given the parameter objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Below this |xi| the GPD CDF switches to the exponential branch to avoid
# catastrophic cancellation in (1 + xi*y/sigma)**(-1/xi).
XI_EXP_SWITCH = 1e-8

# Only the power form G(u) = u**kappa is supported; slot kept so other
# G families can be added without changing call sites.
SUPPORTED_G_FAMILIES = ("power",)


@dataclass(frozen=True)
class GpdParams:
    """Generalized Pareto parameters: scale sigma > 0, shape xi."""

    sigma: float
    xi: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and np.isfinite(self.xi)):
            raise DomainError("GPD parameters must be finite")
        if self.sigma <= 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")

    @property
    def endpoint(self) -> float:
        """Upper support endpoint -sigma/xi; +inf when xi >= 0."""
        if self.xi < 0:
            return -self.sigma / self.xi
        return math.inf


@dataclass(frozen=True)
class EgpdParams:
    """Endpoint-form EGPD: endpoint delta > 0, shape xi < 0, lower-tail kappa > 0."""

    delta: float
    xi: float
    kappa: float
    g_family: str = "power"

    def __post_init__(self):
        if not (np.isfinite(self.delta) and np.isfinite(self.xi) and np.isfinite(self.kappa)):
            raise DomainError("EGPD parameters must be finite")
        if self.delta <= 0:
            raise DomainError(f"delta must be positive, got {self.delta}")
        if self.kappa <= 0:
            raise DomainError(f"kappa must be positive, got {self.kappa}")
        if self.xi >= 0:
            raise DomainError(f"endpoint form requires xi < 0, got {self.xi}")
        if self.g_family not in SUPPORTED_G_FAMILIES:
            raise DomainError(f"unsupported G family {self.g_family!r}")

    @property
    def sigma(self) -> float:
        """Implied GPD scale sigma = -xi * delta."""
        return -self.xi * self.delta

    def to_gpd(self) -> GpdParams:
        return GpdParams(sigma=self.sigma, xi=self.xi)


def _check_data(y, name="y"):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DomainError(f"{name} must be finite")
    if np.any(y < 0):
        raise DomainError(f"{name} must be nonnegative")
    return y


def gpd_cdf(y, p: GpdParams):
    """GPD CDF, exponential branch when |xi| < XI_EXP_SWITCH."""
    y = _check_data(y)
    if abs(p.xi) < XI_EXP_SWITCH:
        out = -np.expm1(-y / p.sigma)
    else:
        base = np.maximum(1.0 + p.xi * y / p.sigma, 0.0)
        out = 1.0 - base ** (-1.0 / p.xi)
    return np.clip(out, 0.0, 1.0) if out.ndim else float(np.clip(out, 0.0, 1.0))


def egpd_cdf(y, p: EgpdParams):
    """EGPD CDF (1 - (1 - y/delta)_+**(-1/xi))**kappa; 1 for y >= delta."""
    y = _check_data(y)
    # endpoint-form GPD CDF; the positive-part clamp makes values at or
    # beyond delta exactly 1 rather than NaN, and the expm1/log form keeps
    # full precision when base**(-1/xi) is close to 1
    base = np.maximum(1.0 - y / p.delta, 0.0)
    with np.errstate(divide="ignore"):
        h = -np.expm1(np.log(base) * (-1.0 / p.xi))
    out = np.clip(h, 0.0, 1.0) ** p.kappa
    return out if out.ndim else float(out)


def egpd_quantile(u, p: EgpdParams):
    """Inverse EGPD CDF: delta * (1 - (1 - u**(1/kappa))**(-xi))."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)) or np.any(u < 0) or np.any(u > 1):
        raise DomainError("u must lie in [0, 1]")
    # expm1/log forms avoid cancellation in 1 - u**(1/kappa) near both ends
    with np.errstate(divide="ignore"):
        inner = -np.expm1(np.log(u) / p.kappa)
        out = p.delta * -np.expm1(np.log(inner) * (-p.xi))
    out = np.clip(out, 0.0, p.delta)
    return out if out.ndim else float(out)


def egpd_logpdf(y, p: EgpdParams):
    """Log density of the EGPD; -inf outside the open support (0, delta)."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DomainError("y must be finite")
    inside = (y > 0.0) & (y < p.delta)
    base = np.where(inside, 1.0 - y / p.delta, 0.5)  # placeholder outside support
    # GPD density in endpoint form: h(y) = (1/sigma) * (1 - y/delta)**(-1/xi - 1)
    log_h = -math.log(p.sigma) + (-1.0 / p.xi - 1.0) * np.log(base)
    log_big_h = np.log1p(-base ** (-1.0 / p.xi))
    out = np.where(
        inside,
        math.log(p.kappa) + log_h + (p.kappa - 1.0) * log_big_h,
        -np.inf,
    )
    return out if out.ndim else float(out)


def egpd_sample(n: int, p: EgpdParams, rng) -> np.ndarray:
    """n i.i.d. draws via inverse-CDF sampling.

    ``rng`` is a numpy Generator or a seed acceptable to default_rng.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    u = rng.uniform(size=n)
    return np.asarray(egpd_quantile(u, p))
