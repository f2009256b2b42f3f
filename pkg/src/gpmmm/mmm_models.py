"""The focal marketing mix estimators.

Four model kinds share one fitting pipeline:

* ``nonlinear_gp``     y_t = alpha + sum_j f_j(x_jt) + eps,   f_j ~ GP(0, SE)
* ``time_varying_gp``  y_t = alpha + sum_j beta_j(t) x_jt + eps, beta_j ~ GP(0, SE)
* ``log_time_varying`` the time-varying model on logged spend and outcome
* ``hill_parametric``  y_t = alpha + A * hill(x_t; k, s) + eps

All GP kernels are indexed by period: channel response kernels look up their
spend series through :class:`~gpmmm.kernels.OnSeries`, coefficient kernels use
:class:`~gpmmm.kernels.ScaledTime`, so one Gram matrix covers channels plus the
trend-season intercept.  Counterfactual spend at prediction time flows through
kernel series overrides, which is what makes predictions interventional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import linalg, optimize

from . import gp_core, kernels, transforms
from .dataset import Dataset
from .errors import DomainError, FitError
from .seeding import derive_seed
from .transforms import StockSpec

KINDS = ("nonlinear_gp", "time_varying_gp", "log_time_varying", "hill_parametric")
TIME_VARYING_KINDS = ("time_varying_gp", "log_time_varying")

# Lower bound (in periods) for coefficient-path lengthscales.  The premise of
# the time-varying model is that nearby periods share effectiveness; letting
# rho collapse below the sampling interval would turn it into a per-period
# interpolator.
MIN_BETA_LENGTHSCALE = 2.0


@dataclass(frozen=True)
class TrendSeasonIntercept:
    """Time-varying intercept: SE trend plus periodic seasonality of cycle c."""

    cycle: float


@dataclass(frozen=True)
class MetropolisInference:
    chain_length: int = 1500
    burn_in: int = 500
    keep: int = 80


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model configuration.

    ``intercept`` is "none", "constant", or a :class:`TrendSeasonIntercept`.
    ``input_transform`` applies to channel spends ("none" or "log");
    ``log_outcome`` logs the outcome.  ``log_time_varying`` forces both.
    """

    kind: str
    intercept: object = "constant"
    input_transform: str = "none"
    log_outcome: bool = False
    carryover: Optional[StockSpec] = None
    dummy_columns: tuple = ()
    inference: object = "point"
    hyper_bounds: Optional[Mapping] = None
    beta_extrapolation: str = "gp"  # "gp" | "frozen"
    restarts: int = 3
    log_floor: float = 1e-6
    hill_fixed_shape: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown model kind '{self.kind}'")
        if self.kind == "log_time_varying":
            object.__setattr__(self, "input_transform", "log")
            object.__setattr__(self, "log_outcome", True)
        if self.input_transform not in ("none", "log"):
            raise DomainError(f"unknown input transform '{self.input_transform}'")
        if self.beta_extrapolation not in ("gp", "frozen"):
            raise DomainError(f"unknown beta extrapolation '{self.beta_extrapolation}'")
        if isinstance(self.intercept, str) and self.intercept not in ("none", "constant"):
            raise DomainError(f"unknown intercept '{self.intercept}'")
        object.__setattr__(self, "dummy_columns", tuple(self.dummy_columns))


@dataclass
class ComponentCurve:
    """Posterior mean and 95% band of one additive component over a grid."""

    name: str
    grid: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    kind: str  # "response" | "coefficient" | "intercept"


@dataclass
class Prediction:
    """De-standardized predictions in the model's outcome units."""

    periods: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    draw_means: np.ndarray  # (n_draws, len(periods))
    draw_vars: np.ndarray  # (n_draws, len(periods)) latent-function variance
    extrapolated: bool


def _sd(v: np.ndarray) -> float:
    s = float(np.std(v))
    return s if s > 0 else 1.0


@dataclass
class _Prepared:
    periods: np.ndarray  # float, post-trim
    t_int: np.ndarray
    y_raw: np.ndarray
    y_model: np.ndarray
    y_std: np.ndarray
    y_loc: float
    y_scale: float
    x_model: dict
    x_std: dict
    x_loc: dict
    x_scale: dict
    design: Optional[np.ndarray]
    has_const: bool
    t_full: np.ndarray
    x_raw_full: dict
    log_flags: dict


def _prepare(dataset: Dataset, spec: ModelSpec) -> _Prepared:
    names = dataset.channel_names
    t_full = dataset.t.copy()
    x_raw_full = {ch: dataset.channels[ch].copy() for ch in names}

    if spec.carryover is not None:
        offset = spec.carryover.lags
        stocked = {
            ch: transforms.adstock(dataset.channels[ch], spec.carryover).values
            for ch in names
        }
    else:
        offset = 0
        stocked = {ch: dataset.channels[ch].copy() for ch in names}
    t_int = dataset.t[offset:]
    y_raw = dataset.y[offset:]
    if len(t_int) < 10:
        raise DomainError(
            f"only {len(t_int)} usable periods after carryover trimming; need >= 10"
        )

    log_flags = {}
    if spec.input_transform == "log":
        x_model = {}
        for ch in names:
            guarded = transforms.log_guard(stocked[ch], spec.log_floor)
            x_model[ch] = guarded.values
            log_flags[ch] = guarded.floored
    else:
        x_model = stocked
    if spec.log_outcome:
        guarded = transforms.log_guard(y_raw, spec.log_floor)
        y_model = guarded.values
        log_flags["y"] = guarded.floored
    else:
        y_model = y_raw.copy()

    y_scale = _sd(y_model)
    y_loc = 0.0 if spec.intercept == "none" else float(np.mean(y_model))
    y_std = (y_model - y_loc) / y_scale

    x_loc, x_scale, x_std = {}, {}, {}
    for ch in names:
        if spec.kind in TIME_VARYING_KINDS:
            # Scale-only: keeps beta(t) * 0 == 0 and the log-log intercept
            # time-constant.
            x_loc[ch], x_scale[ch] = 0.0, _sd(x_model[ch])
        elif spec.kind == "hill_parametric":
            x_loc[ch], x_scale[ch] = 0.0, 1.0
        else:
            x_loc[ch], x_scale[ch] = float(np.mean(x_model[ch])), _sd(x_model[ch])
        x_std[ch] = (x_model[ch] - x_loc[ch]) / x_scale[ch]

    # Fixed-effects design: a free constant (profiled by GLS) when an
    # intercept is requested, then any dummy covariates.  Centering alone
    # cannot represent a free intercept once channel terms have nonzero mean.
    cols = []
    if spec.intercept != "none":
        cols.append(np.ones(len(t_int)))
    for name in spec.dummy_columns:
        if name not in dataset.dummies:
            raise DomainError(f"dummy column '{name}' not present in dataset")
        cols.append(dataset.dummies[name][offset:])
    design = np.column_stack(cols) if cols else None

    return _Prepared(
        periods=t_int.astype(float),
        t_int=t_int,
        y_raw=y_raw,
        y_model=y_model,
        y_std=y_std,
        y_loc=y_loc,
        y_scale=y_scale,
        x_model=x_model,
        x_std=x_std,
        x_loc=x_loc,
        x_scale=x_scale,
        design=design,
        has_const=spec.intercept != "none",
        t_full=t_full,
        x_raw_full=x_raw_full,
        log_flags=log_flags,
    )


def _series_map(periods: np.ndarray, values: np.ndarray) -> dict:
    return {float(p): float(v) for p, v in zip(periods, values)}


def _build_family(prep: _Prepared, spec: ModelSpec):
    """Kernel family, bounds, and prior medians for the GP model kinds."""
    names = list(prep.x_model)
    range_t = float(np.ptp(prep.periods)) or 1.0
    param_names: list = []
    bounds: dict = {}
    medians: dict = {}
    parts: list = []

    for ch in names:
        e_name, r_name = f"eta__{ch}", f"rho__{ch}"
        param_names += [e_name, r_name]
        series = _series_map(prep.periods, prep.x_std[ch])
        if spec.kind in TIME_VARYING_KINDS:
            m_u = float(np.mean(np.abs(prep.x_std[ch]))) or 1.0
            bounds[e_name] = (1e-3 / m_u, 1e3 / m_u)
            medians[e_name] = 1.0 / m_u
            lo_rho = max(MIN_BETA_LENGTHSCALE, 1e-2 * range_t)
            bounds[r_name] = (lo_rho, 10.0 * range_t)
            medians[r_name] = max(lo_rho, 0.25 * range_t)
            parts.append(("scaled", ch, series))
        else:
            range_x = float(np.ptp(prep.x_std[ch])) or 1.0
            bounds[e_name] = (1e-3, 1e3)
            medians[e_name] = 1.0
            bounds[r_name] = (1e-2 * range_x, 10.0 * range_x)
            medians[r_name] = 0.25 * range_x
            parts.append(("mapped", ch, series))

    if isinstance(spec.intercept, TrendSeasonIntercept):
        param_names += ["eta__trend", "rho__trend", "eta__season", "rho__season"]
        bounds["eta__trend"] = (1e-3, 1e3)
        bounds["rho__trend"] = (1e-2 * range_t, 10.0 * range_t)
        bounds["eta__season"] = (1e-3, 1e3)
        bounds["rho__season"] = (1e-2, 1e1)
        medians.update(
            eta__trend=1.0,
            rho__trend=0.5 * range_t,
            eta__season=1.0,
            rho__season=1.0,
        )
    bounds["sigma"] = (1e-4, 1e1)
    medians["sigma"] = 0.25
    if spec.hyper_bounds:
        bounds.update(spec.hyper_bounds)

    cycle = spec.intercept.cycle if isinstance(spec.intercept, TrendSeasonIntercept) else None

    def build(params: Mapping[str, float]) -> kernels.Kernel:
        members = []
        for mode, ch, series in parts:
            hyp = kernels.SEHyper(params[f"eta__{ch}"], params[f"rho__{ch}"])
            if mode == "scaled":
                members.append(kernels.ScaledTime(se=hyp, scales=series, name=ch))
            else:
                members.append(kernels.OnSeries(base=kernels.SE(hyp), series=series, name=ch))
        if cycle is not None:
            members.append(
                kernels.TrendSeason(
                    trend=kernels.SEHyper(params["eta__trend"], params["rho__trend"]),
                    season=kernels.PeriodicHyper(
                        params["eta__season"], params["rho__season"], cycle
                    ),
                )
            )
        return members[0] if len(members) == 1 else kernels.Sum(members)

    family = gp_core.KernelFamily(param_names=tuple(param_names), build=build)
    return family, bounds, medians


def _fit_hill(prep: _Prepared, spec: ModelSpec, seed: int) -> gp_core.HyperDraws:
    names = list(prep.x_model)
    if len(names) != 1:
        raise DomainError("hill_parametric supports a single spending channel")
    x = prep.x_model[names[0]]
    y = prep.y_std
    rng_x = float(np.ptp(x)) or 1.0
    lk_lo, lk_hi = math.log(1e-3 * rng_x), math.log(1e3 * rng_x)
    ls_lo, ls_hi = math.log(1e-2), math.log(1e2)
    fixed_s = spec.hill_fixed_shape

    def unpack(theta):
        a, A = theta[0], theta[1]
        k = math.exp(min(max(theta[2], lk_lo), lk_hi))
        s = fixed_s if fixed_s is not None else math.exp(min(max(theta[3], ls_lo), ls_hi))
        return a, A, k, s

    def ssq(theta):
        a, A, k, s = unpack(theta)
        r = y - a - A * transforms.hill(x, transforms.HillParams(k, s))
        return float(r @ r)

    rng = np.random.default_rng(derive_seed(seed, "hill"))
    dim = 3 if fixed_s is not None else 4
    best = None
    for i in range(max(1, spec.restarts)):
        if i == 0:
            theta0 = [0.0, 1.0, math.log(0.33 * rng_x)]
            if fixed_s is None:
                theta0.append(0.0)
        else:
            theta0 = [
                rng.uniform(-1, 1),
                rng.uniform(-3, 3),
                rng.uniform(lk_lo, lk_hi),
            ]
            if fixed_s is None:
                theta0.append(rng.uniform(ls_lo, ls_hi))
        res = optimize.minimize(
            ssq, np.asarray(theta0), method="Nelder-Mead",
            options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 400 * dim},
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not math.isfinite(best.fun):
        raise FitError("Hill least-squares failed on every restart")
    a, A, k, s = unpack(best.x)
    resid = y - a - A * transforms.hill(x, transforms.HillParams(k, s))
    sigma = max(float(np.std(resid)), 1e-6)
    params = {"a": a, "A": A, "k": k, "s": s}

    if isinstance(spec.inference, MetropolisInference):
        inf = spec.inference
        n = len(y)

        def log_post(v):
            a_, A_ = v[0], v[1]
            if not (lk_lo <= v[2] <= lk_hi):
                return -math.inf
            s_ = fixed_s
            if fixed_s is None:
                if not (ls_lo <= v[3] <= ls_hi):
                    return -math.inf
                s_ = math.exp(v[3])
            lsg = v[-1]
            if not -12.0 <= lsg <= 3.0:
                return -math.inf
            k_ = math.exp(v[2])
            sg = math.exp(lsg)
            r = y - a_ - A_ * transforms.hill(x, transforms.HillParams(k_, s_))
            loglik = -0.5 * n * math.log(2 * math.pi * sg * sg) - float(r @ r) / (2 * sg * sg)
            prior = -0.5 * ((a_ / 3.0) ** 2 + (A_ / 5.0) ** 2)
            prior += -0.5 * ((v[2] - math.log(0.33 * rng_x)) ** 2)
            if fixed_s is None:
                prior += -0.5 * v[3] ** 2
            prior += -0.5 * (lsg - math.log(0.25)) ** 2
            return loglik + prior

        x0 = [a, A, math.log(k)]
        if fixed_s is None:
            x0.append(math.log(s))
        x0.append(max(math.log(sigma), -11.9))
        chain, rate = gp_core.adaptive_metropolis(
            log_post, np.asarray(x0), inf.chain_length, inf.burn_in,
            derive_seed(seed, "hill-mh"),
        )
        idx = np.unique(np.linspace(0, len(chain) - 1, min(inf.keep, len(chain))).astype(int))
        draws = []
        for row in chain[idx]:
            s_ = fixed_s if fixed_s is not None else math.exp(row[3])
            draws.append(
                ({"a": row[0], "A": row[1], "k": math.exp(row[2]), "s": s_},
                 math.exp(row[-1]))
            )
        return gp_core.HyperDraws(draws=draws, provenance="metropolis", accept_rate=rate)
    return gp_core.HyperDraws(draws=[(params, sigma)], provenance="point-estimate")


class FittedModel:
    """A trained MMM: spec, standardization records, posterior draws."""

    def __init__(self, spec: ModelSpec, prep: _Prepared, draws: gp_core.HyperDraws,
                 posteriors: list, family=None):
        self.spec = spec
        self.prep = prep
        self.draws = draws
        self.posteriors = posteriors  # GPPosterior per draw; empty for hill
        self.family = family
        self.channel_names = list(prep.x_model)
        self.train_end = int(prep.t_int[-1])

    # -- bookkeeping -------------------------------------------------------

    @property
    def n_draws(self) -> int:
        return len(self.draws.draws)

    def to_outcome(self, values: np.ndarray) -> np.ndarray:
        """Map model-unit predictions to raw outcome units (de-log)."""
        return np.exp(values) if self.spec.log_outcome else values

    def training_spend_range(self, channel: str) -> tuple:
        full = self.prep.x_raw_full[channel]
        return float(np.min(full)), float(np.max(full))

    def _se_hyper(self, draw_idx: int, part: str) -> kernels.SEHyper:
        params = self.draws.draws[draw_idx][0]
        return kernels.SEHyper(params[f"eta__{part}"], params[f"rho__{part}"])

    # -- spend plumbing ----------------------------------------------------

    def _splice_raw(self, channel: str, periods: np.ndarray, spend: np.ndarray) -> np.ndarray:
        """Raw spend history with counterfactual values swapped/appended."""
        t0 = int(self.prep.t_full[0])
        last = int(self.prep.t_full[-1])
        max_p = max(int(np.max(periods)), last)
        full = np.full(max_p - t0 + 1, np.nan)
        full[: last - t0 + 1] = self.prep.x_raw_full[channel]
        for p, v in zip(periods, spend):
            full[int(p) - t0] = v
        if np.any(np.isnan(full)):
            missing = int(np.argmax(np.isnan(full))) + t0
            raise DomainError(
                f"counterfactual spend must cover every horizon period; "
                f"missing channel '{channel}' at period {missing}"
            )
        return full

    def _counterfactual_inputs(self, periods: np.ndarray, spend: Mapping) -> tuple:
        """Transformed+standardized channel values at the requested periods."""
        periods = np.asarray(periods, dtype=int)
        out_std: dict = {}
        out_model: dict = {}
        t0 = int(self.prep.t_full[0])
        for ch in self.channel_names:
            if ch not in spend:
                raise DomainError(f"counterfactual spend missing channel '{ch}'")
            vals = np.broadcast_to(np.asarray(spend[ch], dtype=float), periods.shape).copy()
            if np.any(vals < 0):
                raise DomainError(f"negative counterfactual spend for channel '{ch}'")
            if self.spec.carryover is not None:
                full = self._splice_raw(ch, periods, vals)
                stocked = transforms.adstock(full, self.spec.carryover)
                # stocked period p sits at index p - t0 - offset
                model_vals = stocked.values[periods - t0 - stocked.offset]
            else:
                model_vals = vals
            if self.spec.input_transform == "log":
                model_vals = transforms.log_guard(model_vals, self.spec.log_floor).values
            out_model[ch] = model_vals
            out_std[ch] = (model_vals - self.prep.x_loc[ch]) / self.prep.x_scale[ch]
        return out_model, out_std

    def _test_design(self, n: int, dummies: Optional[np.ndarray]) -> Optional[np.ndarray]:
        """Fixed-effects rows for prediction: ones column plus dummy values."""
        if self.prep.design is None:
            return None
        cols = []
        if self.prep.has_const:
            cols.append(np.ones(n))
        n_dummy = self.prep.design.shape[1] - int(self.prep.has_const)
        if n_dummy:
            cols.append(
                np.zeros((n, n_dummy)) if dummies is None
                else np.asarray(dummies, dtype=float).reshape(n, n_dummy)
            )
        return np.column_stack(cols)

    def _const_weight(self) -> float:
        """Posterior-mean profiled constant, in standardized target units."""
        if not self.prep.has_const or not self.posteriors:
            return 0.0
        return float(np.mean([post.fe_weights[0] for post in self.posteriors]))

    # -- prediction --------------------------------------------------------

    def predict(
        self,
        periods: Sequence[int],
        spend: Mapping,
        *,
        allow_in_sample: bool = False,
        horizon_dummies: Optional[np.ndarray] = None,
    ) -> Prediction:
        """Posterior prediction under counterfactual spend, in model units.

        Spend outside the training range is allowed but flagged as
        extrapolation.  Horizon periods must extend the history contiguously
        when the model carries stock variables.
        """
        periods = np.asarray(periods, dtype=int)
        if not allow_in_sample and np.any(periods <= self.train_end):
            raise DomainError(
                f"horizon period {int(periods.min())} does not follow training end "
                f"{self.train_end}; pass allow_in_sample=True for interventional "
                f"in-sample queries"
            )
        x_model_new, x_std_new = self._counterfactual_inputs(periods, spend)
        extrapolated = False
        for ch in self.channel_names:
            lo, hi = float(np.min(self.prep.x_model[ch])), float(np.max(self.prep.x_model[ch]))
            if np.any(x_model_new[ch] < lo) or np.any(x_model_new[ch] > hi):
                extrapolated = True

        design_new = self._test_design(len(periods), horizon_dummies)

        if self.spec.kind == "hill_parametric":
            ch = self.channel_names[0]
            means = []
            for params, _sigma in self.draws.draws:
                hp = transforms.HillParams(params["k"], params["s"])
                means.append(params["a"] + params["A"] * transforms.hill(x_model_new[ch], hp))
            draw_means = np.asarray(means)
            draw_vars = np.zeros_like(draw_means)
        elif self.spec.kind in TIME_VARYING_KINDS and self.spec.beta_extrapolation == "frozen":
            draw_means, var_std = self._predict_frozen(periods, x_std_new, design_new)
            draw_vars = np.broadcast_to(var_std, draw_means.shape).copy()
        else:
            pf = periods.astype(float)
            overrides = {ch: _series_map(pf, x_std_new[ch]) for ch in self.channel_names}
            means, vars_ = [], []
            for post in self.posteriors:
                m, v = gp_core.posterior_predict(post, pf, cross_override=overrides,
                                                 test_design=design_new)
                means.append(m)
                vars_.append(v)
            draw_means = np.asarray(means)
            draw_vars = np.asarray(vars_)

        loc, scale = self.prep.y_loc, self.prep.y_scale
        draw_means_out = loc + scale * draw_means
        draw_vars_out = scale * scale * draw_vars
        mean = draw_means_out.mean(axis=0)
        var = draw_vars_out.mean(axis=0) + draw_means_out.var(axis=0)
        return Prediction(periods=periods, mean=mean, var=var,
                          draw_means=draw_means_out, draw_vars=draw_vars_out,
                          extrapolated=extrapolated)

    def draw_pred_sds(self, pred: Prediction) -> np.ndarray:
        """Per-draw latent-function sd at the predicted periods."""
        return np.sqrt(pred.draw_vars)

    def _beta_curve_std(self, grid: np.ndarray, channel: str) -> tuple:
        """Per-draw posterior mean/var of the standardized coefficient path."""
        u_train = self.prep.x_std[channel]
        means, vars_ = [], []
        for i, post in enumerate(self.posteriors):
            hyp = self._se_hyper(i, channel)
            se = kernels.SE(hyp)
            Kse = se.pairwise(self.prep.periods, np.asarray(grid, dtype=float))
            Kstar = Kse * u_train[:, None]  # cov(y_t, beta(t*))
            mean = Kstar.T @ post.alpha
            v = linalg.solve_triangular(post.chol, Kstar, lower=True)
            var = np.maximum(hyp.amplitude**2 - np.sum(v * v, axis=0), 0.0)
            means.append(mean)
            vars_.append(var)
        return np.asarray(means), np.asarray(vars_)

    def _intercept_curve_std(self, grid: np.ndarray) -> tuple:
        """Per-draw trend-season intercept component on standardized targets."""
        means, vars_ = [], []
        for i, post in enumerate(self.posteriors):
            params = self.draws.draws[i][0]
            ts = kernels.TrendSeason(
                trend=kernels.SEHyper(params["eta__trend"], params["rho__trend"]),
                season=kernels.PeriodicHyper(
                    params["eta__season"], params["rho__season"],
                    self.spec.intercept.cycle,
                ),
            )
            Kstar = ts.pairwise(self.prep.periods, np.asarray(grid, dtype=float))
            mean = Kstar.T @ post.alpha
            v = linalg.solve_triangular(post.chol, Kstar, lower=True)
            kss = kernels.kdiag(ts, np.asarray(grid, dtype=float))
            var = np.maximum(kss - np.sum(v * v, axis=0), 0.0)
            means.append(mean)
            vars_.append(var)
        return np.asarray(means), np.asarray(vars_)

    def _response_curve_std(self, grid_std: np.ndarray, channel: str) -> tuple:
        """Per-draw posterior mean/var of f_channel over standardized spend."""
        x_train = self.prep.x_std[channel]
        means, vars_ = [], []
        for i, post in enumerate(self.posteriors):
            se = kernels.SE(self._se_hyper(i, channel))
            Kstar = se.pairwise(x_train, np.asarray(grid_std, dtype=float))
            mean = Kstar.T @ post.alpha
            v = linalg.solve_triangular(post.chol, Kstar, lower=True)
            kss = kernels.kdiag(se, np.asarray(grid_std, dtype=float))
            var = np.maximum(kss - np.sum(v * v, axis=0), 0.0)
            means.append(mean)
            vars_.append(var)
        return np.asarray(means), np.asarray(vars_)

    def _predict_frozen(self, periods, x_std_new, design_new):
        """Time-varying prediction with the coefficient frozen at train end."""
        grid = np.array([float(self.train_end)])
        draw_means = np.zeros((self.n_draws, len(periods)))
        var_std = np.zeros(len(periods))
        for ch in self.channel_names:
            bmeans, bvars = self._beta_curve_std(grid, ch)
            draw_means += bmeans[:, [0]] * x_std_new[ch][None, :]
            var_std += np.mean(bvars[:, 0]) * x_std_new[ch] ** 2
        if isinstance(self.spec.intercept, TrendSeasonIntercept):
            imeans, ivars = self._intercept_curve_std(periods.astype(float))
            draw_means += imeans
            var_std += np.mean(ivars, axis=0)
        if design_new is not None:
            for i, post in enumerate(self.posteriors):
                draw_means[i] += design_new @ post.fe_weights
        return draw_means, var_std

    def fitted_values(self) -> np.ndarray:
        """In-sample posterior mean, in model units."""
        spend = {}
        t0 = int(self.prep.t_full[0])
        for ch in self.channel_names:
            idx = self.prep.t_int - t0
            spend[ch] = self.prep.x_raw_full[ch][idx]
        dummies = None
        if self.prep.design is not None:
            dummies = self.prep.design[:, int(self.prep.has_const):]
            if dummies.shape[1] == 0:
                dummies = None
        pred = self.predict(
            self.prep.t_int, spend, allow_in_sample=True, horizon_dummies=dummies
        )
        return pred.mean

    # -- component extraction ---------------------------------------------

    def components(self, grid: Optional[np.ndarray] = None, re_base: bool = False) -> list:
        """Additive component curves (channels plus intercept).

        Response curves are in outcome-model units over raw spend; coefficient
        curves are de-standardized to raw per-unit-spend effects over periods.
        ``re_base`` shifts response curves to start at zero.
        """
        out = []
        scale = self.prep.y_scale
        if self.spec.kind == "hill_parametric":
            ch = self.channel_names[0]
            g = np.linspace(*self.training_spend_range(ch), 50) if grid is None else np.asarray(grid, dtype=float)
            curves = []
            for params, _s in self.draws.draws:
                hp = transforms.HillParams(params["k"], params["s"])
                curves.append(scale * params["A"] * transforms.hill(g, hp))
            arr = np.asarray(curves)
            mean = arr.mean(axis=0)
            sd = arr.std(axis=0)
            if re_base:
                mean = mean - mean[0]
            out.append(ComponentCurve(ch, g, mean, mean - 1.96 * sd, mean + 1.96 * sd, "response"))
        elif self.spec.kind in TIME_VARYING_KINDS:
            g = self.prep.periods if grid is None else np.asarray(grid, dtype=float)
            for ch in self.channel_names:
                bmeans, bvars = self._beta_curve_std(g, ch)
                factor = scale / self.prep.x_scale[ch]
                mean = factor * bmeans.mean(axis=0)
                sd = factor * np.sqrt(np.mean(bvars, axis=0) + bmeans.var(axis=0))
                out.append(ComponentCurve(ch, g, mean, mean - 1.96 * sd, mean + 1.96 * sd, "coefficient"))
        else:
            for ch in self.channel_names:
                if grid is None:
                    lo = float(np.min(self.prep.x_model[ch]))
                    hi = float(np.max(self.prep.x_model[ch]))
                    g_model = np.linspace(lo, hi, 50)
                    g = g_model  # reported in model (possibly logged) units
                else:
                    g = np.asarray(grid, dtype=float)
                    g_model = (
                        transforms.log_guard(g, self.spec.log_floor).values
                        if self.spec.input_transform == "log" else g
                    )
                g_std = (g_model - self.prep.x_loc[ch]) / self.prep.x_scale[ch]
                fmeans, fvars = self._response_curve_std(g_std, ch)
                mean = scale * fmeans.mean(axis=0)
                sd = scale * np.sqrt(np.mean(fvars, axis=0) + fmeans.var(axis=0))
                if re_base:
                    mean = mean - mean[0]
                out.append(ComponentCurve(ch, g, mean, mean - 1.96 * sd, mean + 1.96 * sd, "response"))

        # intercept component
        g_t = self.prep.periods if grid is None or self.spec.kind not in TIME_VARYING_KINDS else np.asarray(grid, dtype=float)
        if isinstance(self.spec.intercept, TrendSeasonIntercept):
            imeans, ivars = self._intercept_curve_std(self.prep.periods if grid is None else g_t)
            mean = self.prep.y_loc + scale * imeans.mean(axis=0)
            sd = scale * np.sqrt(np.mean(ivars, axis=0) + imeans.var(axis=0))
            out.append(ComponentCurve("intercept", g_t, mean, mean - 1.96 * sd, mean + 1.96 * sd, "intercept"))
        elif self.spec.intercept == "constant":
            level = self.prep.y_loc + scale * self._const_weight()
            const = np.full(len(g_t), level)
            out.append(ComponentCurve("intercept", g_t, const, const, const, "intercept"))
        return out

    # -- log-log summaries ---------------------------------------------------

    def elasticity(self, period: int, channel: Optional[str] = None) -> tuple:
        """Posterior (mean, lo, hi) of the log-log elasticity at ``period``."""
        if self.spec.kind != "log_time_varying":
            raise DomainError("elasticity requires the log-log time-varying model")
        ch = channel or self.channel_names[0]
        bmeans, bvars = self._beta_curve_std(np.array([float(period)]), ch)
        factor = self.prep.y_scale / self.prep.x_scale[ch]
        mean = factor * float(bmeans.mean())
        sd = factor * math.sqrt(float(np.mean(bvars)) + float(bmeans.var()))
        return mean, mean - 1.96 * sd, mean + 1.96 * sd

    def loglog_params(self, period: int, channel: Optional[str] = None) -> tuple:
        """(alpha, beta) of the implied log-log model at ``period``."""
        if self.spec.kind != "log_time_varying":
            raise DomainError("loglog_params requires the log-log time-varying model")
        beta, _, _ = self.elasticity(period, channel)
        alpha = self.prep.y_loc + self.prep.y_scale * self._const_weight()
        if isinstance(self.spec.intercept, TrendSeasonIntercept):
            imeans, _ = self._intercept_curve_std(np.array([float(period)]))
            alpha += self.prep.y_scale * float(imeans.mean())
        return alpha, beta

    # -- response surfaces for optimization ---------------------------------

    def channel_curves(self, period: int, candidates: Mapping) -> tuple:
        """Posterior-mean response parts at one period, in model units.

        Returns ``(base, parts)`` where the predicted outcome for a spend
        combination is ``base + sum_j parts[ch][i_ch]``.  Used by the budget
        optimizer to evaluate a Cartesian grid without one predict call per
        point (valid because the models are additive across channels).
        """
        base = self.prep.y_loc + self.prep.y_scale * self._const_weight()
        if isinstance(self.spec.intercept, TrendSeasonIntercept):
            imeans, _ = self._intercept_curve_std(np.array([float(period)]))
            base += self.prep.y_scale * float(imeans.mean())
        parts = {}
        scale = self.prep.y_scale
        frozen = self.spec.kind in TIME_VARYING_KINDS and self.spec.beta_extrapolation == "frozen"
        beta_period = float(self.train_end) if frozen else float(period)
        for ch, cand in candidates.items():
            cand = np.asarray(cand, dtype=float)
            if self.spec.carryover is not None:
                raise DomainError(
                    "channel_curves is only valid without carryover; "
                    "use predict with spliced spend plans"
                )
            model_vals = (
                transforms.log_guard(cand, self.spec.log_floor).values
                if self.spec.input_transform == "log" else cand
            )
            if self.spec.kind == "hill_parametric":
                vals = []
                for params, _s in self.draws.draws:
                    hp = transforms.HillParams(params["k"], params["s"])
                    vals.append(scale * (params["a"] + params["A"] * transforms.hill(model_vals, hp)))
                parts[ch] = np.mean(vals, axis=0)
            elif self.spec.kind in TIME_VARYING_KINDS:
                bmeans, _ = self._beta_curve_std(np.array([beta_period]), ch)
                beta = float(bmeans.mean())
                u = (model_vals - self.prep.x_loc[ch]) / self.prep.x_scale[ch]
                parts[ch] = scale * beta * u
            else:
                g_std = (model_vals - self.prep.x_loc[ch]) / self.prep.x_scale[ch]
                fmeans, _ = self._response_curve_std(g_std, ch)
                parts[ch] = scale * fmeans.mean(axis=0)
        return base, parts


def fit(dataset: Dataset, spec: ModelSpec, seed: int = 0) -> FittedModel:
    """Fit an MMM: carryover, transforms, standardization, then inference."""
    for ch, col in dataset.channels.items():
        if np.any(col < 0):
            raise DomainError(f"channel '{ch}' has negative spend")
    prep = _prepare(dataset, spec)

    if spec.kind == "hill_parametric":
        if spec.dummy_columns:
            raise DomainError("hill_parametric does not support dummy covariates")
        draws = _fit_hill(prep, spec, seed)
        return FittedModel(spec, prep, draws, posteriors=[])

    family, bounds, medians = _build_family(prep, spec)
    if isinstance(spec.inference, MetropolisInference):
        inf = spec.inference
        draws = gp_core.fit_metropolis(
            family, prep.periods, prep.y_std, bounds=bounds,
            chain_length=inf.chain_length, burn_in=inf.burn_in, keep=inf.keep,
            seed=derive_seed(seed, "mh"), prior_medians=medians,
            fixed_effects=prep.design,
        )
    else:
        pf = gp_core.fit_point(
            family, prep.periods, prep.y_std, bounds=bounds,
            restarts=spec.restarts, seed=derive_seed(seed, "fit"),
            fixed_effects=prep.design,
        )
        draws = gp_core.point_draws(pf)

    posteriors = [
        gp_core.condition(family.build(params), prep.periods, prep.y_std, sigma,
                          prep.design)
        for params, sigma in draws.draws
    ]
    return FittedModel(spec, prep, draws, posteriors, family=family)
