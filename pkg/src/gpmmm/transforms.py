"""Media transforms: Hill saturation, AdStock carryover, Koyck recursion, logs.

Pure functions throughout; everything here is concurrency-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class HillParams:
    """Hill saturation parameters: inflection point (spend units) and shape."""

    inflection: float
    shape: float

    def __post_init__(self):
        if not (self.inflection > 0 and math.isfinite(self.inflection)):
            raise DomainError(f"Hill inflection must be positive, got {self.inflection}")
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise DomainError(f"Hill shape must be positive, got {self.shape}")


@dataclass(frozen=True)
class StockSpec:
    """Carryover weights: decay, lag count, and weight family.

    ``pascal_shape`` applies only to the pascal family.  Weights are always
    normalized to sum to one.
    """

    decay: float
    lags: int
    family: str = "geometric"  # "geometric" | "pascal"
    pascal_shape: int = 1
    pascal_convention: str = "printed"  # "printed" | "standard"

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise DomainError(f"decay must be in [0, 1], got {self.decay}")
        if self.lags < 0:
            raise DomainError(f"lags must be >= 0, got {self.lags}")
        if self.family not in ("geometric", "pascal"):
            raise DomainError(f"unknown stock family '{self.family}'")
        if self.family == "pascal" and self.pascal_shape < 1:
            raise DomainError("pascal_shape must be a positive count")
        if self.pascal_convention not in ("printed", "standard"):
            raise DomainError(f"unknown pascal convention '{self.pascal_convention}'")


def hill(x: ArrayLike, params: HillParams) -> ArrayLike:
    """Saturation 1 / (1 + (x/k)^(-s)), with hill(0) = 0 by continuity.

    Computed as a logistic in log spend for numerical stability.  With shape
    s = 1 this reduces to the reach transformation x / (x + k).
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError("hill requires finite, nonnegative spend")
    with np.errstate(divide="ignore"):
        z = params.shape * (np.log(arr) - math.log(params.inflection))
    out = np.where(z > 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))
    out = np.where(arr == 0.0, 0.0, out)
    return float(out) if np.isscalar(x) else out


def _binom(n: int, k: int) -> int:
    if k < 0 or k > n:
        return 0
    return math.comb(n, k)


def stock_weights(spec: StockSpec) -> np.ndarray:
    """Normalized weight vector of length ``lags + 1``.

    Geometric: w_l proportional to decay^l (with 0^0 := 1, so decay 0 is the
    identity transform).  Pascal: the negative-binomial-style weights as
    printed in common MMM usage, with a switch between the two binomial
    conventions (the l-dependent factor differs; constants cancel under
    normalization).
    """
    L = spec.lags
    ell = np.arange(L + 1)
    if spec.family == "geometric":
        if spec.decay == 0.0:
            raw = np.zeros(L + 1)
            raw[0] = 1.0
        else:
            raw = spec.decay**ell.astype(float)
    else:
        tau = spec.pascal_shape
        if spec.pascal_convention == "printed":
            combs = np.array([_binom(i + tau - 1, tau) for i in ell], dtype=float)
        else:
            combs = np.array([_binom(i + tau - 1, i) for i in ell], dtype=float)
        raw = (1.0 - spec.decay) ** ell.astype(float) * combs
    total = raw.sum()
    if total <= 0:
        raise DomainError(
            f"stock weights sum to zero for {spec}; no normalizable weight vector"
        )
    return raw / total


@dataclass(frozen=True)
class AdstockResult:
    """Stocked series plus the number of leading periods dropped."""

    values: np.ndarray
    offset: int


def adstock(series: np.ndarray, spec: StockSpec) -> AdstockResult:
    """Weighted combination of current and lagged spend.

    output[t] = sum_l w_l * series[t - l] for t >= L; the first L periods are
    dropped rather than padded, and the result carries that offset.
    """
    x = np.asarray(series, dtype=float)
    L = spec.lags
    if len(x) <= L:
        raise DomainError(f"series of length {len(x)} too short for {L} lags")
    w = stock_weights(spec)
    values = np.convolve(x, w, mode="valid")
    return AdstockResult(values=values, offset=L)


def koyck_step(prev_stock: float, x: float, decay: float) -> float:
    """One step of the infinite-lag recursion: x + decay * previous stock."""
    if not 0.0 <= decay < 1.0:
        raise DomainError(f"koyck decay must be in [0, 1), got {decay}")
    return x + decay * prev_stock


@dataclass(frozen=True)
class LogGuardResult:
    """Elementwise log with flooring; flags which entries were floored."""

    values: np.ndarray
    floored: np.ndarray


def log_guard(series: np.ndarray, floor: float = 1e-6) -> LogGuardResult:
    """ln(max(value, floor)) elementwise, recording floored entries."""
    if floor <= 0:
        raise DomainError(f"floor must be positive, got {floor}")
    x = np.asarray(series, dtype=float)
    floored = x < floor
    return LogGuardResult(values=np.log(np.maximum(x, floor)), floored=floored)
