"""Log-SNR schedule of the straight-line flow path.

On the routing axis (t=1 is pure noise) the log signal-to-noise ratio is::

    lambda(t) = 2 * (log(1 - t) - log(t))        t(lambda) = 1 / (exp(lambda / 2) + 1)

and a noise level sigma corresponds to lambda = -2 * log(sigma). The effective range
[lambda_min, lambda_max] of a schedule follows from its smallest and largest
effective sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import overload

import numpy as np
import numpy.typing as npt

from snrflow.errors import DomainError

DEFAULT_SIGMA_MIN = 0.0118
DEFAULT_SIGMA_MAX = 33.78


@overload
def log_snr(t: float) -> float: ...


@overload
def log_snr(t: npt.NDArray[np.floating]) -> npt.NDArray[np.floating]: ...


def log_snr(t):  # type: ignore[no-untyped-def]
    """lambda(t) for t strictly inside (0, 1)"""
    arr = np.asarray(t, dtype=np.float64)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError(f"log_snr is defined on (0, 1) only, got {t}")
    out = 2.0 * (np.log1p(-arr) - np.log(arr))
    return float(out) if np.ndim(t) == 0 else out


@overload
def inv_log_snr(lam: float) -> float: ...


@overload
def inv_log_snr(lam: npt.NDArray[np.floating]) -> npt.NDArray[np.floating]: ...


def inv_log_snr(lam):  # type: ignore[no-untyped-def]
    """t(lambda), the logistic function of -lambda/2, evaluated without overflow"""
    arr = np.asarray(lam, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"inv_log_snr needs a finite log-SNR, got {lam}")
    half = arr / 2.0
    e = np.exp(-np.abs(half))
    out = np.where(half >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
    return float(out) if np.ndim(lam) == 0 else out


def sigma_to_log_snr(sigma: float) -> float:
    if not sigma > 0.0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return -2.0 * math.log(sigma)


def effective_range(sigma_min_eff: float, sigma_max_eff: float) -> tuple[float, float]:
    """(lambda_min, lambda_max) spanned by the effective sigma bounds"""
    if not (0.0 < sigma_min_eff < sigma_max_eff) or not math.isfinite(sigma_max_eff):
        raise DomainError(
            f"need 0 < sigma_min < sigma_max, got sigma_min={sigma_min_eff}, sigma_max={sigma_max_eff}"
        )
    return sigma_to_log_snr(sigma_max_eff), sigma_to_log_snr(sigma_min_eff)


@dataclass(frozen=True)
class LogSnrSchedule:
    sigma_min_eff: float = DEFAULT_SIGMA_MIN
    sigma_max_eff: float = DEFAULT_SIGMA_MAX

    def __post_init__(self) -> None:
        effective_range(self.sigma_min_eff, self.sigma_max_eff)

    @property
    def lambda_min(self) -> float:
        return sigma_to_log_snr(self.sigma_max_eff)

    @property
    def lambda_max(self) -> float:
        return sigma_to_log_snr(self.sigma_min_eff)

    def lambda_of_t(self, t: float) -> float:
        return log_snr(t)

    def t_of_lambda(self, lam: float) -> float:
        return inv_log_snr(lam)

    def contains(self, lam: float) -> bool:
        return self.lambda_min < lam < self.lambda_max
