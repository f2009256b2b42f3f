"""Holdout evaluation, conflation labeling, the mega-simulation, and the
conflation-rate regression.

A replicate is "conflated" when the model that is NOT the true DGP predicts
the holdout periods at least as well (MSE) as the model matching the DGP.
The harness runs a factorial grid of DGP settings with seeded replicates;
results are deterministic for a given master seed regardless of parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import dgp_sim, mmm_models, transforms
from .dataset import Dataset
from .errors import DomainError
from .mmm_models import ModelSpec
from .seeding import derive_seed

# Factor levels from the factorial design (low, medium, high).
AMPLITUDE_LEVELS = (1.0, 2.0, 5.0)
SMOOTHNESS_LEVELS = (0.1, 0.5, 1.0)
HILL_SHAPE_LEVELS = (0.5, 2.0, 3.5)
HILL_K_LEVELS = (0.1, 0.33, 1.0)
AR_COEF_LEVELS = (0.0, 0.5, 1.0)
AR_SD_LEVELS = (1.0, 5.0, 10.0)
NOISE_LEVELS = (0.01, 0.1, 0.2)
CARRYOVER_LEVELS = (0.0, 0.3, 0.8)

# Spending-process constants the factorial design does not vary.
SPEND_BASE_LEVEL = 20.0
SPEND_X0 = 20.0
DGP_STOCK_LAGS = 8


@dataclass
class HoldoutResult:
    """Point and (optionally) posterior holdout error for one model."""

    model_id: str
    mse: float
    rmse: float
    rmse_draws: Optional[np.ndarray] = None
    interval: Optional[tuple] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class SimulationSetting:
    """One cell of the factorial grid.

    ``amplitude``/``smoothness_ratio`` apply to the GP DGPs and
    ``hill_shape``/``hill_k_ratio`` to the Hill DGP; the remaining four
    factors are shared.  Desk-scale defaults keep the grid runnable on a
    workstation; the full-scale counts are a configuration away.
    """

    dgp: str  # "nonlinear" | "time_varying" | "hill"
    amplitude: float = 2.0
    smoothness_ratio: float = 0.5
    hill_shape: float = 2.0
    hill_k_ratio: float = 0.33
    ar_coef: float = 0.5
    ar_sd: float = 5.0
    noise_ratio: float = 0.1
    carryover: float = 0.3
    replicates: int = 20
    T: int = 100
    holdout: int = 10

    def __post_init__(self):
        if self.dgp not in ("nonlinear", "time_varying", "hill"):
            raise DomainError(f"unknown DGP '{self.dgp}'")
        if self.dgp == "hill":
            if self.hill_shape not in HILL_SHAPE_LEVELS or self.hill_k_ratio not in HILL_K_LEVELS:
                _warn_level("hill", (self.hill_shape, self.hill_k_ratio))
        elif (
            self.amplitude not in AMPLITUDE_LEVELS
            or self.smoothness_ratio not in SMOOTHNESS_LEVELS
        ):
            _warn_level("gp", (self.amplitude, self.smoothness_ratio))

    @property
    def setting_id(self) -> str:
        if self.dgp == "hill":
            fn = f"s{self.hill_shape:g}-k{self.hill_k_ratio:g}"
        else:
            fn = f"a{self.amplitude:g}-r{self.smoothness_ratio:g}"
        return (
            f"{self.dgp}|{fn}|g{self.ar_coef:g}|t{self.ar_sd:g}"
            f"|n{self.noise_ratio:g}|c{self.carryover:g}"
        )

    def factor_levels(self) -> dict:
        if self.dgp == "hill":
            fn = {"hill_shape": self.hill_shape, "hill_k_ratio": self.hill_k_ratio}
        else:
            fn = {"amplitude": self.amplitude, "smoothness": self.smoothness_ratio}
        fn.update(
            ar_coef=self.ar_coef,
            ar_sd=self.ar_sd,
            noise=self.noise_ratio,
            adstock=self.carryover,
        )
        return fn


_WARNED: set = set()


def _warn_level(kind, values):
    # explicit overrides are permitted but should be conscious
    if (kind, values) not in _WARNED:
        _WARNED.add((kind, values))
        import warnings

        warnings.warn(f"factor values {values} outside the enumerated {kind} levels")


@dataclass
class ConflationRecord:
    setting_id: str
    replicate_id: int
    mse_true: float
    mse_competing: float
    conflated: bool
    valid: bool = True
    error: Optional[str] = None


@dataclass
class RateRow:
    setting: SimulationSetting
    rate: Optional[float]  # None when no replicate was valid
    n_valid: int
    n_invalid: int


def conflation_label(true_mse: float, competing_mse: float, delta: float = 0.0) -> bool:
    """Competing model performs equivalently to or better than the truth."""
    for v in (true_mse, competing_mse):
        if not (math.isfinite(v) and v >= 0):
            raise DomainError(f"MSE must be finite and nonnegative, got {v}")
    return competing_mse <= true_mse * (1.0 + delta)


def conflation_label_overlap(a: HoldoutResult, b: HoldoutResult) -> bool:
    """Bayesian labeling mode: overlapping 95% posterior RMSE intervals."""
    if a.interval is None or b.interval is None:
        raise DomainError("overlap labeling requires posterior RMSE intervals")
    return a.interval[0] <= b.interval[1] and b.interval[0] <= a.interval[1]


FUNCTION_DRAWS_PER_HYPER = 4


def _holdout_one(dataset: Dataset, spec: ModelSpec, H: int, seed: int,
                 model_id: str) -> HoldoutResult:
    T = dataset.n_periods
    train = dataset.slice(0, T - H)
    hold = dataset.slice(T - H, T)
    try:
        model = mmm_models.fit(train, spec, seed=seed)
        spend = {ch: hold.channels[ch] for ch in dataset.channel_names}
        dummies = None
        if spec.dummy_columns:
            dummies = np.column_stack([hold.dummies[c] for c in spec.dummy_columns])
        pred = model.predict(hold.t, spend, horizon_dummies=dummies)
        y_hold = hold.y
        point = model.to_outcome(pred.mean)
        mse = float(np.mean((point - y_hold) ** 2))
        rmse_draws = None
        interval = None
        if model.n_draws > 1:
            # posterior distribution of the RMSE statistic: sample latent
            # function values per hyperparameter draw, score each sample
            rng = np.random.default_rng(derive_seed(seed, model_id, "fdraw"))
            sds = model.draw_pred_sds(pred)
            samples = []
            for d in range(model.n_draws):
                z = rng.standard_normal((FUNCTION_DRAWS_PER_HYPER, H))
                fsamp = pred.draw_means[d][None, :] + sds[d][None, :] * z
                samples.append(model.to_outcome(fsamp))
            fs = np.vstack(samples)
            rmse_draws = np.sqrt(np.mean((fs - y_hold[None, :]) ** 2, axis=1))
            interval = (
                float(np.percentile(rmse_draws, 2.5)),
                float(np.percentile(rmse_draws, 97.5)),
            )
        return HoldoutResult(
            model_id=model_id, mse=mse, rmse=math.sqrt(mse),
            rmse_draws=rmse_draws, interval=interval,
        )
    except Exception as exc:  # recorded, not raised: grid cells must survive
        return HoldoutResult(
            model_id=model_id, mse=float("nan"), rmse=float("nan"),
            error=f"{type(exc).__name__}: {exc}",
        )


def holdout_eval(
    dataset: Dataset,
    specs: Sequence[ModelSpec],
    H: int,
    seed: int,
    model_ids: Optional[Sequence[str]] = None,
) -> list:
    """Fit each spec on the first T-H periods and score the final H.

    The holdout is always the last H consecutive periods, predicted under the
    observed spend path.  Failures are recorded per model, not raised.
    """
    T = dataset.n_periods
    if H <= 0 or T - H < 10:
        raise DomainError(f"holdout H={H} leaves too few training periods (T={T})")
    ids = list(model_ids) if model_ids else [s.kind for s in specs]
    return [
        _holdout_one(dataset, spec, H, derive_seed(seed, mid), mid)
        for spec, mid in zip(specs, ids)
    ]


def _setting_dgp(setting: SimulationSetting) -> dgp_sim.DGPSpec:
    carry = (
        transforms.StockSpec(setting.carryover, DGP_STOCK_LAGS)
        if setting.carryover > 0 else None
    )
    if setting.dgp == "nonlinear":
        kind = dgp_sim.NonlinearGPDGP(eta=setting.amplitude, rho_ratio=setting.smoothness_ratio)
    elif setting.dgp == "time_varying":
        kind = dgp_sim.TimeVaryingGPDGP(eta=setting.amplitude, rho_ratio=setting.smoothness_ratio)
    else:
        kind = dgp_sim.HillDGP(
            shape=setting.hill_shape, k_ratio=setting.hill_k_ratio, amplitude=setting.amplitude
        )
    return dgp_sim.DGPSpec(kind=kind, noise_ratio=setting.noise_ratio, carryover=carry)


def _setting_spending(setting: SimulationSetting) -> dgp_sim.SpendingSpec:
    return dgp_sim.SpendingSpec(
        gamma0=SPEND_BASE_LEVEL * (1.0 - setting.ar_coef),
        gamma1=setting.ar_coef,
        tau_x=setting.ar_sd,
        x0=SPEND_X0,
        T=setting.T,
    )


def contender_specs(restarts: int = 2) -> tuple:
    """The two models every replicate is scored with."""
    return (
        ModelSpec(kind="nonlinear_gp", restarts=restarts),
        ModelSpec(kind="time_varying_gp", restarts=restarts),
    )


def run_replicate(
    setting: SimulationSetting, replicate_id: int, master_seed: int, delta: float = 0.0
) -> ConflationRecord:
    """Generate one dataset, evaluate both contenders, label conflation."""
    seed = derive_seed(master_seed, setting.setting_id, replicate_id)
    sid = setting.setting_id
    try:
        sim = dgp_sim.gen_dataset(_setting_dgp(setting), _setting_spending(setting), seed)
        dataset = sim.to_dataset()
    except Exception as exc:
        return ConflationRecord(sid, replicate_id, float("nan"), float("nan"),
                                False, valid=False, error=f"gen: {exc}")
    nl, tv = holdout_eval(
        dataset, contender_specs(), setting.holdout, seed,
        model_ids=("nonlinear_gp", "time_varying_gp"),
    )
    if nl.failed or tv.failed:
        return ConflationRecord(
            sid, replicate_id, float("nan"), float("nan"), False,
            valid=False, error=nl.error or tv.error,
        )
    # the nonlinear GP is the matching class for both nonlinear and Hill DGPs
    true_res, comp_res = (tv, nl) if setting.dgp == "time_varying" else (nl, tv)
    return ConflationRecord(
        sid, replicate_id, true_res.mse, comp_res.mse,
        conflated=conflation_label(true_res.mse, comp_res.mse, delta),
    )


def _replicate_star(args):
    return run_replicate(*args)


def megasim(
    settings: Sequence[SimulationSetting],
    master_seed: int = 0,
    workers: int = 1,
    delta: float = 0.0,
) -> tuple:
    """Run the grid; returns (rate rows, conflation records).

    Work units are (setting, replicate) pairs; records merge in that order,
    so output does not depend on scheduling.
    """
    if not settings:
        raise DomainError("megasim requires a nonempty grid")
    jobs = [
        (setting, rep, master_seed, delta)
        for setting in settings
        for rep in range(setting.replicates)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_replicate_star, jobs, chunksize=4))
    else:
        records = [_replicate_star(job) for job in jobs]

    rows = []
    i = 0
    for setting in settings:
        chunk = records[i: i + setting.replicates]
        i += setting.replicates
        valid = [r for r in chunk if r.valid]
        rate = (
            sum(r.conflated for r in valid) / len(valid) if valid else None
        )
        rows.append(RateRow(setting=setting, rate=rate,
                            n_valid=len(valid), n_invalid=len(chunk) - len(valid)))
    return rows, records


def full_grid(dgp: str, replicates: int = 20, T: int = 100, holdout: int = 10) -> list:
    """All 729 settings (6 factors x 3 levels) for one DGP family."""
    out = []
    fn_levels = (
        [(s, k) for s in HILL_SHAPE_LEVELS for k in HILL_K_LEVELS]
        if dgp == "hill"
        else [(a, r) for a in AMPLITUDE_LEVELS for r in SMOOTHNESS_LEVELS]
    )
    for f1, f2 in fn_levels:
        for g in AR_COEF_LEVELS:
            for tau in AR_SD_LEVELS:
                for nr in NOISE_LEVELS:
                    for c in CARRYOVER_LEVELS:
                        kwargs = dict(
                            dgp=dgp, ar_coef=g, ar_sd=tau, noise_ratio=nr,
                            carryover=c, replicates=replicates, T=T, holdout=holdout,
                        )
                        if dgp == "hill":
                            kwargs.update(hill_shape=f1, hill_k_ratio=f2)
                        else:
                            kwargs.update(amplitude=f1, smoothness_ratio=f2)
                        out.append(SimulationSetting(**kwargs))
    return out


def summarize_any_major(rows: Sequence[RateRow], major_threshold: float = 0.25) -> dict:
    """Share of settings with any conflation and with rate above the threshold."""
    rated = [r for r in rows if r.rate is not None]
    if not rated:
        return {"any": float("nan"), "major": float("nan"), "n": 0}
    any_share = sum(r.rate > 0 for r in rated) / len(rated)
    major_share = sum(r.rate > major_threshold for r in rated) / len(rated)
    return {"any": any_share, "major": major_share, "n": len(rated)}


# -- conflation-rate regression ---------------------------------------------


def student_t_sf2(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t via the regularized
    incomplete beta: p = I_{df/(df+t^2)}(df/2, 1/2)."""
    if df <= 0:
        raise DomainError("degrees of freedom must be positive")
    x = df / (df + t * t)
    return float(special.betainc(df / 2.0, 0.5, x))


@dataclass
class RegressionRow:
    term: str
    estimate: float
    std_error: float
    t_stat: float
    p_value: float


@dataclass
class RegressionTable:
    rows: list
    residual_sd: float
    df: int
    dropped: list = field(default_factory=list)

    def __getitem__(self, term: str) -> RegressionRow:
        for row in self.rows:
            if row.term == term:
                return row
        raise KeyError(term)


def ols_inference(X: np.ndarray, y: np.ndarray, names: Sequence[str]) -> RegressionTable:
    """OLS with classical standard errors; drops aliased columns."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    keep: list = []
    dropped: list = []
    for j in range(X.shape[1]):
        trial = keep + [j]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            keep.append(j)
        else:
            dropped.append(names[j])
    Xk = X[:, keep]
    n, k = Xk.shape
    if n <= k:
        raise DomainError(f"{n} observations cannot support {k} regression terms")
    beta, *_ = np.linalg.lstsq(Xk, y, rcond=None)
    resid = y - Xk @ beta
    df = n - k
    s2 = float(resid @ resid) / df
    cov = s2 * np.linalg.inv(Xk.T @ Xk)
    rows = []
    for idx, j in enumerate(keep):
        se = math.sqrt(cov[idx, idx])
        t_stat = beta[idx] / se if se > 0 else float("inf")
        rows.append(
            RegressionRow(
                term=names[j], estimate=float(beta[idx]), std_error=se,
                t_stat=float(t_stat), p_value=student_t_sf2(float(t_stat), df),
            )
        )
    return RegressionTable(rows=rows, residual_sd=math.sqrt(s2), df=df, dropped=dropped)


def rate_regression(rows: Sequence[RateRow], factors: Optional[Sequence[str]] = None) -> RegressionTable:
    """Regress per-setting conflation percentage on factor-level dummies.

    The lowest level of each factor is the omitted baseline.  Settings whose
    every replicate failed are excluded.
    """
    rated = [r for r in rows if r.rate is not None]
    if len(rated) < 3:
        raise DomainError("need at least 3 rated settings for the regression")
    levels_by_factor: dict = {}
    for r in rated:
        for name, lvl in r.setting.factor_levels().items():
            levels_by_factor.setdefault(name, set()).add(lvl)
    factors = list(factors) if factors else list(levels_by_factor)
    names = ["intercept"]
    columns = [np.ones(len(rated))]
    for name in factors:
        lvls = sorted(levels_by_factor[name])
        for lvl in lvls[1:]:  # lowest level omitted
            names.append(f"{name}={lvl:g}")
            columns.append(
                np.array([1.0 if r.setting.factor_levels()[name] == lvl else 0.0 for r in rated])
            )
        if len(lvls) < 2:
            continue
    X = np.column_stack(columns)
    y = np.array([100.0 * r.rate for r in rated])
    return ols_inference(X, y, names)
