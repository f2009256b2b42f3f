"""Covariance functions and their composition.

All kernel math lives here.  Kernels are immutable values; Gram construction
is a pure function, so evaluation is safe from concurrent workers.

Two families of kernels exist:

* direct kernels (:class:`SE`, :class:`Periodic`, :class:`TrendSeason`) whose
  inputs are the quantities the covariance is computed over, and
* series-backed kernels (:class:`ScaledTime`, :class:`OnSeries`) indexed by
  time period, which look up an attached time-indexed series.  Out-of-sample
  values for those series are supplied by the caller at prediction time via
  the ``b_overrides`` argument of :func:`cross`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np
from scipy import linalg

from .errors import DomainError, FactorizationError

# Jitter ladder: relative to the mean diagonal, escalating x10 until failure.
JITTER_START = 1e-8
JITTER_MAX = 1e-2

SeriesOverrides = Mapping[str, Mapping[float, float]]


@dataclass(frozen=True)
class SEHyper:
    """Squared-exponential hyperparameters: output amplitude and lengthscale."""

    amplitude: float
    lengthscale: float

    def __post_init__(self):
        if not (self.amplitude > 0 and math.isfinite(self.amplitude)):
            raise DomainError(f"SE amplitude must be positive, got {self.amplitude}")
        if not (self.lengthscale > 0 and math.isfinite(self.lengthscale)):
            raise DomainError(f"SE lengthscale must be positive, got {self.lengthscale}")


@dataclass(frozen=True)
class PeriodicHyper:
    """Periodic-kernel hyperparameters: amplitude, lengthscale, cycle length."""

    amplitude: float
    lengthscale: float
    cycle: float

    def __post_init__(self):
        for name in ("amplitude", "lengthscale", "cycle"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"Periodic {name} must be positive, got {v}")


def _check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite {what} passed to kernel evaluation")
    return arr


class Kernel:
    """Base class; subclasses implement :meth:`pairwise`."""

    def pairwise(
        self,
        a: np.ndarray,
        b: np.ndarray,
        *,
        a_overrides: Optional[SeriesOverrides] = None,
        b_overrides: Optional[SeriesOverrides] = None,
        elementwise: bool = False,
    ) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class SE(Kernel):
    """k(z, z') = eta^2 * exp(-(z - z')^2 / (2 rho^2))."""

    hyper: SEHyper

    def pairwise(self, a, b, *, a_overrides=None, b_overrides=None, elementwise=False):
        eta, rho = self.hyper.amplitude, self.hyper.lengthscale
        if elementwise:
            d = a - b
        else:
            d = a[:, None] - b[None, :]
        return eta * eta * np.exp(-(d * d) / (2.0 * rho * rho))

    def describe(self):
        return f"SE(eta={self.hyper.amplitude:g}, rho={self.hyper.lengthscale:g})"


@dataclass(frozen=True)
class Periodic(Kernel):
    """k(z, z') = eta_S^2 * exp(-2 sin^2(pi |z - z'| / c) / rho_S^2)."""

    hyper: PeriodicHyper

    def pairwise(self, a, b, *, a_overrides=None, b_overrides=None, elementwise=False):
        h = self.hyper
        if elementwise:
            d = np.abs(a - b)
        else:
            d = np.abs(a[:, None] - b[None, :])
        s = np.sin(np.pi * d / h.cycle)
        return h.amplitude**2 * np.exp(-2.0 * s * s / h.lengthscale**2)

    def describe(self):
        h = self.hyper
        return f"Periodic(eta={h.amplitude:g}, rho={h.lengthscale:g}, c={h.cycle:g})"


@dataclass(frozen=True)
class TrendSeason(Kernel):
    """Sum of an SE trend kernel and a periodic seasonal kernel on time."""

    trend: SEHyper
    season: PeriodicHyper

    def pairwise(self, a, b, *, a_overrides=None, b_overrides=None, elementwise=False):
        kw = dict(elementwise=elementwise)
        return SE(self.trend).pairwise(a, b, **kw) + Periodic(self.season).pairwise(a, b, **kw)

    def describe(self):
        return f"TrendSeason({SE(self.trend).describe()} + {Periodic(self.season).describe()})"


def _series_lookup(
    series: Mapping[float, float],
    name: str,
    keys: np.ndarray,
    overrides: Optional[SeriesOverrides],
) -> np.ndarray:
    over = overrides.get(name) if overrides else None
    out = np.empty(len(keys))
    for i, z in enumerate(keys):
        z = float(z)
        if over is not None and z in over:
            out[i] = over[z]
        elif z in series:
            out[i] = series[z]
        else:
            raise DomainError(f"no value for period {z:g} in series '{name}'")
    return out


@dataclass(frozen=True)
class ScaledTime(Kernel):
    """Induced time-varying covariance x(t) * x(t') * k_SE(t, t').

    Indexed by period; ``scales`` maps period -> spend.  Arises when a
    GP-distributed coefficient multiplies a spend series.  Prediction-time
    scale values for unseen periods are supplied by the caller (this encodes
    intervention: the covariance at a future period depends on the spend set
    there, not on anything estimated).
    """

    se: SEHyper
    scales: Mapping[float, float] = field(hash=False)
    name: str = "x"

    def pairwise(self, a, b, *, a_overrides=None, b_overrides=None, elementwise=False):
        sa = _series_lookup(self.scales, self.name, a, a_overrides)
        sb = _series_lookup(self.scales, self.name, b, b_overrides)
        base = SE(self.se).pairwise(a, b, elementwise=elementwise)
        if elementwise:
            return sa * sb * base
        return sa[:, None] * sb[None, :] * base

    def describe(self):
        return f"ScaledTime({SE(self.se).describe()}, series='{self.name}')"


@dataclass(frozen=True)
class OnSeries(Kernel):
    """A kernel re-indexed through a time-indexed input series.

    Evaluates ``base`` at ``series[t]`` instead of at ``t`` itself.  This is
    what lets one Gram matrix over periods combine channel response kernels
    (inputs: that channel's spend) with intercept kernels (inputs: time).
    """

    base: Kernel
    series: Mapping[float, float] = field(hash=False)
    name: str = "x"

    def pairwise(self, a, b, *, a_overrides=None, b_overrides=None, elementwise=False):
        ua = _series_lookup(self.series, self.name, a, a_overrides)
        ub = _series_lookup(self.series, self.name, b, b_overrides)
        return self.base.pairwise(ua, ub, elementwise=elementwise)

    def describe(self):
        return f"OnSeries({self.base.describe()}, series='{self.name}')"


@dataclass(frozen=True)
class Sum(Kernel):
    """Sum of member kernels (a valid kernel)."""

    members: tuple

    def __init__(self, members):
        object.__setattr__(self, "members", tuple(members))

    def pairwise(self, a, b, *, a_overrides=None, b_overrides=None, elementwise=False):
        kw = dict(a_overrides=a_overrides, b_overrides=b_overrides, elementwise=elementwise)
        out = self.members[0].pairwise(a, b, **kw)
        for m in self.members[1:]:
            out = out + m.pairwise(a, b, **kw)
        return out

    def describe(self):
        return "Sum(" + ", ".join(m.describe() for m in self.members) + ")"


def evaluate(kernel: Kernel, z: float, z2: float) -> float:
    """Scalar covariance k(z, z2); rejects non-finite inputs."""
    a = _check_finite(np.atleast_1d(z), "input")
    b = _check_finite(np.atleast_1d(z2), "input")
    return float(kernel.pairwise(a, b, elementwise=True)[0])


def gram(kernel: Kernel, inputs: np.ndarray, jitter: float = 0.0) -> np.ndarray:
    """T x T symmetric covariance matrix with ``jitter`` added to the diagonal."""
    x = _check_finite(inputs, "gram inputs")
    if jitter < 0:
        raise DomainError(f"jitter must be nonnegative, got {jitter}")
    k = kernel.pairwise(x, x)
    k = 0.5 * (k + k.T)
    if jitter:
        k[np.diag_indices_from(k)] += jitter
    return k


def cross(
    kernel: Kernel,
    a: np.ndarray,
    b: np.ndarray,
    *,
    b_overrides: Optional[SeriesOverrides] = None,
) -> np.ndarray:
    """Rectangular covariance between input sets ``a`` (rows) and ``b`` (cols).

    ``b_overrides`` supplies prediction-time values for series-backed kernels,
    keyed by series name then period; the ``a`` side always uses stored series.
    """
    av = _check_finite(a, "cross inputs")
    bv = _check_finite(b, "cross inputs")
    return kernel.pairwise(av, bv, b_overrides=b_overrides)


def kdiag(
    kernel: Kernel,
    inputs: np.ndarray,
    *,
    overrides: Optional[SeriesOverrides] = None,
) -> np.ndarray:
    """Vector of k(z_i, z_i), with overrides applied on both sides."""
    x = _check_finite(inputs, "diag inputs")
    return kernel.pairwise(x, x, a_overrides=overrides, b_overrides=overrides, elementwise=True)


def jittered_cholesky(mat: np.ndarray, what: str = "kernel") -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``mat`` under the escalating-jitter policy.

    Starts at ``JITTER_START * mean(diag)`` and escalates x10 up to
    ``JITTER_MAX * mean(diag)``; raises :class:`FactorizationError` (naming
    the kernel and a condition estimate) if every level fails.
    """
    mat = np.asarray(mat, dtype=float)
    mean_diag = float(np.mean(np.diag(mat)))
    scale = mean_diag if mean_diag > 0 else 1.0
    level = JITTER_START
    while level <= JITTER_MAX * (1 + 1e-12):
        try:
            jit = level * scale
            L = linalg.cholesky(mat + jit * np.eye(mat.shape[0]), lower=True)
            return L, jit
        except linalg.LinAlgError:
            level *= 10.0
    cond = float(np.linalg.cond(mat)) if mat.size else float("nan")
    raise FactorizationError(
        f"Cholesky failed for {what} after jitter up to {JITTER_MAX:g}*mean-diag "
        f"(condition estimate {cond:.3e})"
    )
