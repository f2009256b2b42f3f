"""GP prior sampling, exact conjugate prediction, and hyperparameter inference.

Point estimation maximizes the log marginal likelihood with a bounded,
multistart Nelder-Mead search over log hyperparameters; Bayesian inference
uses adaptive random-walk Metropolis with log-normal priors.  Both are
deterministic given their seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import linalg, optimize

from . import kernels
from .errors import DomainError, FactorizationError, FitError, SamplerError
from .kernels import Kernel
from .seeding import derive_seed

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GPPosterior:
    """Conjugate GP posterior with cached factorization of K + sigma^2 I.

    ``fixed_effects`` columns (e.g. dummy covariates) are profiled out by
    generalized least squares: the GP conditions on targets minus the GLS
    fit, and predictions add the design contribution back.
    """

    train_inputs: np.ndarray
    train_targets: np.ndarray
    kernel: Kernel
    noise_sd: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float
    fixed_effects: Optional[np.ndarray] = None
    fe_weights: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return len(self.train_inputs)


def condition(
    kernel: Kernel,
    inputs: np.ndarray,
    targets: np.ndarray,
    noise_sd: float,
    fixed_effects: Optional[np.ndarray] = None,
) -> GPPosterior:
    """Factorize K + sigma^2 I and cache the target solve."""
    if noise_sd <= 0 or not math.isfinite(noise_sd):
        raise DomainError(f"noise_sd must be positive, got {noise_sd}")
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    K = kernels.gram(kernel, x)
    A = K + noise_sd**2 * np.eye(len(x))
    L, jit = kernels.jittered_cholesky(A, what=kernel.describe())

    w = None
    resid = y
    if fixed_effects is not None and fixed_effects.size:
        D = np.asarray(fixed_effects, dtype=float)
        AinvD = linalg.cho_solve((L, True), D)
        Ainvy = linalg.cho_solve((L, True), y)
        gram_d = D.T @ AinvD
        w = np.linalg.solve(gram_d, D.T @ Ainvy)
        resid = y - D @ w

    alpha = linalg.cho_solve((L, True), resid)
    return GPPosterior(
        train_inputs=x,
        train_targets=y,
        kernel=kernel,
        noise_sd=float(noise_sd),
        chol=L,
        alpha=alpha,
        jitter=jit,
        fixed_effects=None if w is None else np.asarray(fixed_effects, dtype=float),
        fe_weights=w,
    )


def sample_prior(
    kernel: Kernel,
    inputs: np.ndarray,
    seed: int,
    n: int = 1,
) -> np.ndarray:
    """Draw from the GP prior at ``inputs``: L u with u standard normal.

    Returns shape (T,) for ``n == 1``, else (n, T).  Deterministic per seed.
    """
    x = np.asarray(inputs, dtype=float)
    K = kernels.gram(kernel, x)
    L, _ = kernels.jittered_cholesky(K, what=kernel.describe())
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, len(x)))
    draws = u @ L.T
    return draws[0] if n == 1 else draws


def posterior_predict(
    gp: GPPosterior,
    test_inputs: np.ndarray,
    cross_override: Optional[kernels.SeriesOverrides] = None,
    test_design: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and pointwise variance at ``test_inputs``.

    ``cross_override`` supplies series values (e.g. counterfactual spend) for
    test periods of series-backed kernels.  Variance is floored at zero.
    """
    z = np.asarray(test_inputs, dtype=float)
    Kstar = kernels.cross(gp.kernel, gp.train_inputs, z, b_overrides=cross_override)
    mean = Kstar.T @ gp.alpha
    v = linalg.solve_triangular(gp.chol, Kstar, lower=True)
    kss = kernels.kdiag(gp.kernel, z, overrides=cross_override)
    var = np.maximum(kss - np.sum(v * v, axis=0), 0.0)
    if gp.fe_weights is not None and test_design is not None:
        mean = mean + np.asarray(test_design, dtype=float) @ gp.fe_weights
    return mean, var


def log_marginal_likelihood(gp: GPPosterior) -> float:
    """Gaussian evidence of the (profiled) targets under the factorized model."""
    y = gp.train_targets
    if gp.fe_weights is not None and gp.fixed_effects is not None:
        y = y - gp.fixed_effects @ gp.fe_weights
    fit = -0.5 * float(y @ gp.alpha)
    logdet = -float(np.sum(np.log(np.diag(gp.chol))))
    return fit + logdet - 0.5 * gp.n * LOG_2PI


@dataclass(frozen=True)
class KernelFamily:
    """A parameterized kernel: names of positive hyperparameters plus builder.

    The noise level ``sigma`` is appended automatically by the fitting
    routines and is never part of ``param_names``.
    """

    param_names: tuple
    build: Callable[[Mapping[str, float]], Kernel]


def se_family() -> KernelFamily:
    """Plain SE kernel over direct inputs, parameterized by (eta, rho)."""
    return KernelFamily(
        param_names=("eta", "rho"),
        build=lambda p: kernels.SE(kernels.SEHyper(p["eta"], p["rho"])),
    )


def default_bounds(inputs: np.ndarray, targets: np.ndarray) -> dict:
    """Data-scaled box constraints for (eta, rho, sigma).

    Chosen to exclude the degenerate optima that plague poorly identified
    GP hyperparameters: amplitude and noise relative to the target spread,
    lengthscale relative to the input range.
    """
    sd_y = float(np.std(targets))
    sd_y = sd_y if sd_y > 0 else 1.0
    rng_x = float(np.ptp(inputs))
    rng_x = rng_x if rng_x > 0 else 1.0
    return {
        "eta": (1e-3 * sd_y, 1e3 * sd_y),
        "rho": (1e-2 * rng_x, 1e1 * rng_x),
        "sigma": (1e-4 * sd_y, 1e1 * sd_y),
    }


def default_prior_medians(inputs: np.ndarray, targets: np.ndarray) -> dict:
    """Weakly informative log-normal prior medians for (eta, rho, sigma)."""
    sd_y = float(np.std(targets))
    sd_y = sd_y if sd_y > 0 else 1.0
    rng_x = float(np.ptp(inputs))
    rng_x = rng_x if rng_x > 0 else 1.0
    return {"eta": sd_y, "rho": 0.25 * rng_x, "sigma": 0.25 * sd_y}


@dataclass
class PointFit:
    """Result of type-II maximum likelihood: best kernel, noise, and LML."""

    kernel: Kernel
    sigma: float
    lml: float
    params: dict
    n_failed: int = 0


_BIG = 1e25


def _neg_lml_factory(family, inputs, targets, names, fixed_effects):
    def neg_lml(logv: np.ndarray) -> float:
        params = {name: math.exp(v) for name, v in zip(names, logv[:-1])}
        sigma = math.exp(logv[-1])
        try:
            gp = condition(family.build(params), inputs, targets, sigma, fixed_effects)
        except (FactorizationError, FloatingPointError):
            return _BIG
        lml = log_marginal_likelihood(gp)
        if not math.isfinite(lml):
            return _BIG
        return -lml

    return neg_lml


def _resolve_bounds(family, inputs, targets, bounds):
    base = default_bounds(inputs, targets)
    names = list(family.param_names) + ["sigma"]
    out = {}
    for name in names:
        if bounds and name in bounds:
            out[name] = bounds[name]
        elif name in base:
            out[name] = base[name]
        elif name.startswith("eta"):
            out[name] = base["eta"]
        elif name.startswith("rho"):
            out[name] = base["rho"]
        else:
            raise DomainError(f"no bounds supplied for hyperparameter '{name}'")
    return names, out


def fit_point(
    family: KernelFamily,
    inputs: np.ndarray,
    targets: np.ndarray,
    bounds: Optional[Mapping[str, tuple]] = None,
    restarts: int = 4,
    seed: int = 0,
    fixed_effects: Optional[np.ndarray] = None,
    maxiter: Optional[int] = None,
) -> PointFit:
    """Maximize the LML over log hyperparameters by multistart Nelder-Mead.

    Start 0 is the log-midpoint of the box; the remaining ``restarts - 1``
    starts are drawn uniformly in the log box from the seeded generator, so a
    larger restart budget always contains the smaller one's start set.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if len(targets) < 3:
        raise DomainError("need at least 3 observations to fit hyperparameters")
    names, box = _resolve_bounds(family, inputs, targets, bounds)
    lo = np.array([math.log(box[n][0]) for n in names])
    hi = np.array([math.log(box[n][1]) for n in names])
    neg_lml = _neg_lml_factory(family, inputs, targets, names[:-1], fixed_effects)

    rng = np.random.default_rng(seed)
    starts = [0.5 * (lo + hi)]
    for _ in range(max(0, restarts - 1)):
        starts.append(lo + rng.uniform(size=len(names)) * (hi - lo))

    best = None
    n_failed = 0
    for x0 in starts:
        res = optimize.minimize(
            neg_lml,
            x0,
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={
                "xatol": 1e-3,
                "fatol": 1e-6,
                "maxiter": maxiter or 250 * len(names),
            },
        )
        if res.fun >= _BIG:
            n_failed += 1
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FitError(f"all {len(starts)} restarts failed factorization")
    logv = np.clip(best.x, lo, hi)
    params = {name: math.exp(v) for name, v in zip(names[:-1], logv[:-1])}
    sigma = math.exp(logv[-1])
    return PointFit(
        kernel=family.build(params),
        sigma=sigma,
        lml=-float(best.fun),
        params=dict(params),
        n_failed=n_failed,
    )


@dataclass
class HyperDraws:
    """Equal-weight hyperparameter draws: list of (kernel params, sigma)."""

    draws: list  # [(dict, float), ...]
    provenance: str  # "point-estimate" | "metropolis"
    accept_rate: float = 1.0

    def __post_init__(self):
        if not self.draws:
            raise DomainError("HyperDraws must be nonempty")
        for params, sigma in self.draws:
            scale_params = (
                v for k, v in params.items()
                if k.startswith(("eta", "rho")) or k in ("k", "s")
            )
            if sigma <= 0 or any(v <= 0 for v in scale_params):
                raise DomainError("scale hyperparameters and sigma must be positive")


def adaptive_metropolis(
    log_post: Callable[[np.ndarray], float],
    x0: np.ndarray,
    chain_length: int,
    burn_in: int,
    seed: int,
    target_accept: float = 0.3,
    init_scale: float = 0.25,
) -> tuple[np.ndarray, float]:
    """Random-walk Metropolis with Robbins-Monro scale adaptation.

    The proposal scale is tuned toward ``target_accept`` during burn-in and
    frozen afterward.  Returns the post-burn-in chain and its acceptance rate.
    """
    if not chain_length > burn_in >= 0:
        raise DomainError("require chain_length > burn_in >= 0")
    rng = np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float).copy()
    lp = log_post(x)
    if not math.isfinite(lp):
        raise SamplerError("log posterior is not finite at the initial point")
    log_scale = math.log(init_scale)
    kept = np.empty((chain_length - burn_in, len(x)))
    accepted_total = 0
    accepted_kept = 0
    for i in range(chain_length):
        prop = x + math.exp(log_scale) * rng.standard_normal(len(x))
        lpp = log_post(prop)
        accept = math.isfinite(lpp) and math.log(rng.uniform()) < lpp - lp
        if accept:
            x, lp = prop, lpp
            accepted_total += 1
        if i < burn_in:
            log_scale += (float(accept) - target_accept) / (1.0 + i) ** 0.6
        else:
            kept[i - burn_in] = x
            accepted_kept += int(accept)
    if accepted_total == 0:
        raise SamplerError(
            f"zero accepted proposals over {chain_length} iterations "
            f"(final scale {math.exp(log_scale):.3e}, log-post {lp:.3e})"
        )
    return kept, accepted_kept / max(1, chain_length - burn_in)


def fit_metropolis(
    family: KernelFamily,
    inputs: np.ndarray,
    targets: np.ndarray,
    bounds: Optional[Mapping[str, tuple]] = None,
    chain_length: int = 2000,
    burn_in: int = 500,
    seed: int = 0,
    keep: int = 100,
    prior_medians: Optional[Mapping[str, float]] = None,
    prior_log_sd: float = 1.0,
    fixed_effects: Optional[np.ndarray] = None,
) -> HyperDraws:
    """Adaptive RWM on log hyperparameters targeting LML + log-normal priors.

    Prior medians default to data-scaled heuristics (target sd for amplitudes,
    a quarter of the input range for lengthscales, a quarter of the target sd
    for noise); bounds act as hard truncation.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    names, box = _resolve_bounds(family, inputs, targets, bounds)
    heur = default_prior_medians(inputs, targets)
    medians = {}
    for name in names:
        if prior_medians and name in prior_medians:
            medians[name] = prior_medians[name]
        elif name in heur:
            medians[name] = heur[name]
        elif name.startswith("eta"):
            medians[name] = heur["eta"]
        elif name.startswith("rho"):
            medians[name] = heur["rho"]
        else:
            raise DomainError(f"no prior median for hyperparameter '{name}'")
    mu = np.array([math.log(medians[n]) for n in names])
    lo = np.array([math.log(box[n][0]) for n in names])
    hi = np.array([math.log(box[n][1]) for n in names])
    neg_lml = _neg_lml_factory(family, inputs, targets, names[:-1], fixed_effects)

    def log_post(logv: np.ndarray) -> float:
        if np.any(logv < lo) or np.any(logv > hi):
            return -math.inf
        nl = neg_lml(logv)
        if nl >= _BIG:
            return -math.inf
        prior = -0.5 * float(np.sum(((logv - mu) / prior_log_sd) ** 2))
        return -nl + prior

    x0 = np.clip(mu, lo, hi)
    chain, rate = adaptive_metropolis(log_post, x0, chain_length, burn_in, seed)
    idx = np.unique(np.linspace(0, len(chain) - 1, min(keep, len(chain))).astype(int))
    draws = []
    for row in chain[idx]:
        params = {name: math.exp(v) for name, v in zip(names[:-1], row[:-1])}
        draws.append((params, math.exp(row[-1])))
    return HyperDraws(draws=draws, provenance="metropolis", accept_rate=rate)


def point_draws(fit: PointFit) -> HyperDraws:
    """Wrap a point estimate as a single-draw HyperDraws."""
    return HyperDraws(
        draws=[(dict(fit.params), fit.sigma)],
        provenance="point-estimate",
    )
