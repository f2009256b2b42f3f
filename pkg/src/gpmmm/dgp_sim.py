"""Synthetic data generation: spending processes and the three DGP families.

Each generated dataset carries a full truth record (deterministic component,
noise draws, latent function or coefficient values, resolved hyperparameters)
so tests can verify y - noise == truth exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import gp_core, kernels, transforms
from .dataset import Dataset
from .errors import DomainError
from .seeding import derive_seed, rng_for


@dataclass(frozen=True)
class SpendingSpec:
    """AR(1) spending process x_t ~ N(gamma0 + gamma1 x_{t-1}, tau_x^2).

    Draws below ``clamp_floor`` are clamped (negative ad spend is
    meaningless); pass ``clamp_floor=-inf`` for the unclamped random walk
    used by the moment checks.
    """

    gamma0: float
    gamma1: float
    tau_x: float
    x0: float
    T: int
    clamp_floor: float = 0.0

    def __post_init__(self):
        if self.tau_x < 0:
            raise DomainError(f"tau_x must be >= 0, got {self.tau_x}")
        if self.T < 2:
            raise DomainError(f"need T >= 2 periods, got {self.T}")


def gen_spending(spec: SpendingSpec, seed: int) -> np.ndarray:
    """Simulate the spending path; deterministic per seed."""
    rng = np.random.default_rng(seed)
    x = np.empty(spec.T)
    x[0] = spec.x0
    shocks = rng.standard_normal(spec.T - 1)
    for t in range(1, spec.T):
        draw = spec.gamma0 + spec.gamma1 * x[t - 1] + spec.tau_x * shocks[t - 1]
        x[t] = max(spec.clamp_floor, draw)
    return x


@dataclass(frozen=True)
class NonlinearGPDGP:
    """Static nonlinear response drawn from a GP over spend."""

    eta: float
    rho_ratio: float


@dataclass(frozen=True)
class TimeVaryingGPDGP:
    """Linear response with a GP-drawn coefficient path over time."""

    eta: float
    rho_ratio: float


@dataclass(frozen=True)
class HillDGP:
    """Parametric Hill response: amplitude * hill(x; k, s)."""

    shape: float
    k_ratio: float
    amplitude: float = 1.0


DGPKind = Union[NonlinearGPDGP, TimeVaryingGPDGP, HillDGP]


@dataclass(frozen=True)
class DGPSpec:
    """One data generating process: response family, noise, carryover, intercept.

    ``noise_ratio`` scales the error sd against the sd of the deterministic
    component; lengthscales and Hill inflections are resolved as ratios of the
    realized input range.
    """

    kind: DGPKind
    noise_ratio: float
    carryover: Optional[transforms.StockSpec] = None
    alpha: float = 0.0

    def __post_init__(self):
        if self.noise_ratio < 0:
            raise DomainError(f"noise_ratio must be >= 0, got {self.noise_ratio}")


@dataclass
class SimDataset:
    """Simulated series plus the truth record and seed lineage."""

    t: np.ndarray
    x_raw: np.ndarray
    x: np.ndarray
    y: np.ndarray
    truth: dict
    seeds: dict

    def to_dataset(self, channel: str = "x") -> Dataset:
        return Dataset(t=self.t, y=self.y, channels={channel: self.x})


def _resolve_range(values: np.ndarray, what: str) -> float:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi <= lo:
        raise DomainError(f"degenerate {what} range [{lo}, {hi}]; cannot resolve ratio")
    return hi - lo


def gen_dataset(dgp: DGPSpec, spending: SpendingSpec, seed: int) -> SimDataset:
    """Full pipeline: spending, carryover, latent response, scaled noise."""
    seeds = {
        "master": seed,
        "spend": derive_seed(seed, "spend"),
        "func": derive_seed(seed, "func"),
        "noise": derive_seed(seed, "noise"),
    }
    x_raw = gen_spending(spending, seeds["spend"])
    if dgp.carryover is not None:
        stocked = transforms.adstock(x_raw, dgp.carryover)
        x = stocked.values
        t = np.arange(1, spending.T + 1)[stocked.offset :]
    else:
        x = x_raw.copy()
        t = np.arange(1, spending.T + 1)
    T = len(x)

    truth: dict = {"alpha": dgp.alpha, "kind": type(dgp.kind).__name__}
    if isinstance(dgp.kind, NonlinearGPDGP):
        rho = dgp.kind.rho_ratio * _resolve_range(x, "spending")
        f = gp_core.sample_prior(
            kernels.SE(kernels.SEHyper(dgp.kind.eta, rho)), x, seeds["func"]
        )
        d = dgp.alpha + f
        truth.update(rho=rho, rho_input="x", f=f)
    elif isinstance(dgp.kind, TimeVaryingGPDGP):
        rho = dgp.kind.rho_ratio * _resolve_range(t.astype(float), "time")
        beta = gp_core.sample_prior(
            kernels.SE(kernels.SEHyper(dgp.kind.eta, rho)), t.astype(float), seeds["func"]
        )
        d = dgp.alpha + beta * x
        truth.update(rho=rho, rho_input="t", beta=beta)
    elif isinstance(dgp.kind, HillDGP):
        k = dgp.kind.k_ratio * _resolve_range(x, "spending")
        params = transforms.HillParams(inflection=k, shape=dgp.kind.shape)
        d = dgp.alpha + dgp.kind.amplitude * transforms.hill(x, params)
        truth.update(hill_k=k, hill_shape=dgp.kind.shape)
    else:
        raise DomainError(f"unknown DGP kind {dgp.kind!r}")

    sigma = dgp.noise_ratio * float(np.std(d))
    noise = sigma * np.random.default_rng(seeds["noise"]).standard_normal(T)
    y = d + noise
    # both records rederived from y so y - noise == deterministic bit-exactly
    noise_rec = y - d
    truth.update(deterministic=y - noise_rec, noise=noise_rec, sigma=sigma)
    return SimDataset(t=t, x_raw=x_raw, x=x, y=y, truth=truth, seeds=seeds)


@dataclass(frozen=True)
class IntroExampleConfig:
    """Constants for the cyclic-effectiveness illustration.

    The coefficient path is sinusoidal and spending mirrors it with a lag, so
    the scatter of y on x looks like a clean nonlinear response.  Values are
    calibrated for that qualitative shape.
    """

    T: int = 96
    period: float = 24.0
    lag: int = 1
    b0: float = 1.0
    b1: float = 0.6
    c0: float = -2.0
    c1: float = 12.0
    x_noise_sd: float = 0.25
    noise_ratio: float = 0.16

    def beta(self, t: np.ndarray) -> np.ndarray:
        return self.b0 + self.b1 * np.sin(2.0 * np.pi * np.asarray(t, dtype=float) / self.period)


def gen_intro_example(seed: int, config: IntroExampleConfig = IntroExampleConfig()) -> SimDataset:
    """Time-varying linear DGP whose scatter mimics a static nonlinearity."""
    cfg = config
    t = np.arange(1, cfg.T + 1)
    beta = cfg.beta(t)
    beta_lagged = cfg.beta(t - cfg.lag)
    rng_x = rng_for(seed, "intro-x")
    x = cfg.c0 + cfg.c1 * beta_lagged + cfg.x_noise_sd * rng_x.standard_normal(cfg.T)
    x = np.maximum(x, 0.0)
    d = beta * x
    sigma = cfg.noise_ratio * float(np.std(d))
    noise = sigma * rng_for(seed, "intro-y").standard_normal(cfg.T)
    y = d + noise
    noise_rec = y - d
    return SimDataset(
        t=t,
        x_raw=x.copy(),
        x=x,
        y=y,
        truth={
            "kind": "IntroExample",
            "alpha": 0.0,
            "beta": beta,
            "deterministic": y - noise_rec,
            "noise": noise_rec,
            "sigma": sigma,
        },
        seeds={"master": seed},
    )


@dataclass(frozen=True)
class SigmoidCaseConfig:
    """Constants for the spend-optimization illustration.

    Highly autocorrelated spending, revenue following a fixed sigmoid in log
    spend with the midpoint inside the observed range, low noise.  Dollar
    scales are arbitrary; only the qualitative pattern matters.
    """

    T: int = 100
    x0: float = 8200.0
    gamma1: float = 0.97
    gamma0: float = 8200.0 * 0.03
    tau_x: float = 420.0
    clamp_floor: float = 500.0
    log_y_low: float = math.log(9500.0)
    log_y_high: float = math.log(43000.0)
    log_midpoint: float = math.log(9300.0)
    steepness: float = 9.0
    noise_ratio: float = 0.03

    def log_revenue(self, x: np.ndarray) -> np.ndarray:
        z = self.steepness * (np.log(np.asarray(x, dtype=float)) - self.log_midpoint)
        sig = 1.0 / (1.0 + np.exp(-z))
        return self.log_y_low + (self.log_y_high - self.log_y_low) * sig


def gen_sigmoid_case(seed: int, config: SigmoidCaseConfig = SigmoidCaseConfig()) -> SimDataset:
    """Static sigmoid DGP under autocorrelated spending."""
    cfg = config
    spending = SpendingSpec(
        gamma0=cfg.gamma0,
        gamma1=cfg.gamma1,
        tau_x=cfg.tau_x,
        x0=cfg.x0,
        T=cfg.T,
        clamp_floor=cfg.clamp_floor,
    )
    x = gen_spending(spending, derive_seed(seed, "sigmoid-x"))
    t = np.arange(1, cfg.T + 1)
    log_d = cfg.log_revenue(x)
    d = np.exp(log_d)
    sigma = cfg.noise_ratio * float(np.std(d))
    noise = sigma * rng_for(seed, "sigmoid-y").standard_normal(cfg.T)
    y = np.maximum(d + noise, 1.0)
    noise_rec = y - d
    return SimDataset(
        t=t,
        x_raw=x.copy(),
        x=x,
        y=y,
        truth={
            "kind": "SigmoidCase",
            "alpha": 0.0,
            "deterministic": y - noise_rec,
            "noise": noise_rec,
            "sigma": sigma,
            "log_midpoint": cfg.log_midpoint,
        },
        seeds={"master": seed},
    )
