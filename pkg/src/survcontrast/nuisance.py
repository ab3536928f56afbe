"""Nuisance estimators: Cox/Breslow survival and censoring models, kernel
conditional density of the exposure."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import Dataset, TestConfig

log = logging.getLogger(__name__)

_SQRT_2PI = np.sqrt(2.0 * np.pi)


class ConvergenceError(RuntimeError):
    def __init__(self, message, gradient_norm=float("nan")):
        super().__init__(message)
        self.gradient_norm = gradient_norm


@dataclass
class Diagnostics:
    """Mutable counters collected while building the estimator."""

    hazard_clamps: int = 0
    censoring_floor_clips: int = 0
    density_floor_clips: int = 0
    denominator_clips: int = 0
    degenerate_covariates: list = field(default_factory=list)
    solver_statuses: dict = field(default_factory=dict)
    jitter: float = 0.0
    cox_iterations: dict = field(default_factory=dict)
    kappa_effective: int | None = None
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "hazard_clamps": self.hazard_clamps,
            "censoring_floor_clips": self.censoring_floor_clips,
            "density_floor_clips": self.density_floor_clips,
            "denominator_clips": self.denominator_clips,
            "degenerate_covariates": list(self.degenerate_covariates),
            "solver_statuses": dict(sorted(self.solver_statuses.items())),
            "jitter": self.jitter,
            "cox_iterations": dict(sorted(self.cox_iterations.items())),
            "kappa_effective": self.kappa_effective,
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------------------
# step functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepCurve:
    """Non-increasing right-continuous step function on ``[0, inf)``."""

    jump_times: np.ndarray
    values: np.ndarray
    initial_value: float = 1.0

    def __call__(self, t):
        idx = np.searchsorted(self.jump_times, t, side="right")
        return self._lookup(idx)

    def left_limit(self, t):
        idx = np.searchsorted(self.jump_times, t, side="left")
        return self._lookup(idx)

    def _lookup(self, idx):
        vals = np.concatenate(([self.initial_value], self.values))
        out = vals[idx]
        return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Cox proportional hazards with Breslow baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoxModel:
    """Fitted Cox model over regressors ``(a, w1..wd)``.

    Baseline increments refer to the centred regressors, so the hazard
    increment for a subject at ``x`` is ``dLambda0 * exp((x - means) @ beta)``.
    """

    coefficients: np.ndarray
    event_times: np.ndarray
    baseline_increments: np.ndarray
    regressor_means: np.ndarray
    n_iter: int = 0
    score_norm: float = 0.0

    @classmethod
    def empty(cls, n_regressors: int) -> "CoxModel":
        z = np.zeros(n_regressors)
        return cls(coefficients=z, event_times=np.empty(0), baseline_increments=np.empty(0),
                   regressor_means=z.copy())

    def linear_predictor(self, a, w) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        beta = self.coefficients
        eta = (a - self.regressor_means[0]) * beta[0]
        if beta.shape[0] > 1:
            eta = eta + (w - self.regressor_means[1:]) @ beta[1:]
        return eta

    def survival_curve(self, a, w) -> StepCurve:
        """Fitted ``prod_{u <= t} (1 - dLambda(u|a,w))`` as a step function."""
        e = float(np.exp(self.linear_predictor(a, w)))
        q = np.minimum(self.baseline_increments * e, 1.0)
        return StepCurve(self.event_times, np.cumprod(1.0 - q))

    def survival(self, t, exp_eta, *, left: bool = False):
        """Vectorised survival at a single time for many ``exp(eta)`` values."""
        side = "left" if left else "right"
        k = np.searchsorted(self.event_times, t, side=side)
        return kernels.survival_products(exp_eta, self.baseline_increments[:k])


def _risk_set_sums(times_sorted, event_times):
    return np.searchsorted(times_sorted, event_times, side="left")


def fit_cox(dataset: Dataset, use_censoring_indicator: bool = False, *,
            tol: float = 1e-8, max_iter: int = 50, null: bool = False) -> CoxModel:
    """Maximise the Breslow partial likelihood by Newton-Raphson.

    With ``use_censoring_indicator`` the model is fitted to ``1 - delta``,
    giving the conditional censoring hazard. Regressor columns that are
    constant in the sample carry coefficient 0; ``null=True`` drops every
    regressor, so the Breslow increments become Nelson-Aalen increments.
    Steps are halved whenever the log partial likelihood decreases.

    Raises
    ------
    ValueError
        No events of the modelled type.
    ConvergenceError
        ``max|score| >= tol`` after ``max_iter`` iterations.
    """
    events = (1 - dataset.delta) if use_censoring_indicator else dataset.delta
    X = np.column_stack([dataset.A, dataset.W])
    p = X.shape[1]
    if not np.any(events == 1):
        raise ValueError("no events of the modelled type; Cox model cannot be fitted")

    means = X.mean(axis=0)
    active = np.ptp(X, axis=0) > 0
    if null:
        active[:] = False
    Xc = (X - means)[:, active]
    q = Xc.shape[1]

    order = np.argsort(dataset.Y, kind="stable")
    y_sorted = dataset.Y[order]
    x_sorted = Xc[order]
    ev_sorted = events[order] == 1
    event_times, inverse = np.unique(y_sorted[ev_sorted], return_inverse=True)
    d_counts = np.bincount(inverse, minlength=event_times.shape[0]).astype(np.float64)
    x_event_sums = np.zeros((event_times.shape[0], q))
    np.add.at(x_event_sums, inverse, x_sorted[ev_sorted])
    start = _risk_set_sums(y_sorted, event_times)

    def evaluate(beta, derivatives=True):
        eta = x_sorted @ beta
        shift = eta.max() if eta.size else 0.0
        r = np.exp(eta - shift)
        s0 = np.cumsum(r[::-1])[::-1][start]
        loglik = (x_event_sums @ beta).sum() - (d_counts * (np.log(s0) + shift)).sum()
        if not derivatives:
            return loglik, None, None, s0, shift
        rx = r[:, None] * x_sorted
        s1 = np.cumsum(rx[::-1], axis=0)[::-1][start]
        xbar = s1 / s0[:, None]
        score = (x_event_sums - d_counts[:, None] * xbar).sum(axis=0)
        rxx = rx[:, :, None] * x_sorted[:, None, :]
        s2 = np.cumsum(rxx[::-1], axis=0)[::-1][start]
        info = (d_counts[:, None, None]
                * (s2 / s0[:, None, None] - xbar[:, :, None] * xbar[:, None, :])).sum(axis=0)
        return loglik, score, info, s0, shift

    beta = np.zeros(q)
    n_iter = 0
    if q:
        loglik, score, info, _, _ = evaluate(beta)
        while np.max(np.abs(score)) >= tol:
            if n_iter >= max_iter:
                gnorm = float(np.max(np.abs(score)))
                raise ConvergenceError(
                    f"Cox fit did not converge in {max_iter} iterations (max|score| = {gnorm:.3e})",
                    gradient_norm=gnorm)
            try:
                step = np.linalg.solve(info, score)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(info, score, rcond=None)[0]
            n_iter += 1
            for _ in range(30):
                cand = beta + step
                cand_ll, *_ = evaluate(cand, derivatives=False)
                if np.isfinite(cand_ll) and cand_ll >= loglik - 1e-12 * abs(loglik):
                    break
                step = step / 2.0
            beta = cand
            loglik, score, info, _, _ = evaluate(beta)
        score_norm = float(np.max(np.abs(score)))
    else:
        score_norm = 0.0

    _, _, _, s0, shift = evaluate(beta, derivatives=False)
    increments = d_counts / (s0 * np.exp(shift))
    coef = np.zeros(p)
    coef[active] = beta
    return CoxModel(coefficients=coef, event_times=event_times, baseline_increments=increments,
                    regressor_means=means, n_iter=n_iter, score_norm=score_norm)


def conditional_survival(model: CoxModel, t, a, w, *, left: bool = False) -> float:
    """``S(t|a,w)``, or its left limit ``S(t-|a,w)`` when ``left`` is set."""
    e = np.exp(model.linear_predictor(a, w))
    s, n_clamped = model.survival(t, np.atleast_1d(e), left=left)
    if n_clamped:
        log.debug("clamped %d hazard increments above 1", n_clamped)
    return float(min(max(s[0], 0.0), 1.0))


def conditional_censoring_surv_leftlim(model: CoxModel, t, a, w, floor: float | None = None,
                                       diagnostics: Diagnostics | None = None) -> float:
    """``G(t-|a,w) = prod_{u < t}(1 - dLambda_c(u|a,w))`` with optional floor."""
    g = conditional_survival(model, t, a, w, left=True)
    if floor is not None and g < floor:
        if diagnostics is not None:
            diagnostics.censoring_floor_clips += 1
        g = floor
    return g


# ---------------------------------------------------------------------------
# kernel conditional density of the exposure
# ---------------------------------------------------------------------------

def silverman_bandwidth(x: np.ndarray) -> float:
    n = x.shape[0]
    sd = np.std(x, ddof=1) if n > 1 else 0.0
    return float(1.06 * sd * n ** (-0.2))


@dataclass(frozen=True)
class DensityModel:
    """Gaussian-kernel estimate of ``g(a|w)`` floored at ``floor``.

    A bandwidth of 0 in ``bandwidth_w`` marks a degenerate covariate whose
    kernel weight is uniform.
    """

    bandwidth_a: float
    bandwidth_w: np.ndarray
    A_train: np.ndarray
    W_train: np.ndarray
    floor: float

    def _w_weights(self, w):
        # rows: query points, columns: training points
        w = np.atleast_2d(np.asarray(w, dtype=np.float64))
        out = np.ones((w.shape[0], self.W_train.shape[0]))
        for j, h in enumerate(self.bandwidth_w):
            if h > 0:
                z = (w[:, j][:, None] - self.W_train[:, j][None, :]) / h
                out *= np.exp(-0.5 * z * z)
        return out

    def _a_kernel(self, a):
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        z = (a[:, None] - self.A_train[None, :]) / self.bandwidth_a
        return np.exp(-0.5 * z * z) / (self.bandwidth_a * _SQRT_2PI)

    def raw_pairwise(self, a, w) -> np.ndarray:
        """Unfloored ``g(a_i | w_j)`` for every query pair, shape ``(len(a), len(w))``."""
        ka = self._a_kernel(a)                       # (n_a, n_train)
        kw = self._w_weights(w)                      # (n_w, n_train)
        denom = kw.sum(axis=1)
        return (ka @ kw.T) / denom[None, :]

    def pairwise(self, a, w) -> tuple[np.ndarray, int]:
        g = self.raw_pairwise(a, w)
        low = g < self.floor
        return np.where(low, self.floor, g), int(np.count_nonzero(low))

    def __call__(self, a, w) -> float:
        g, _ = self.pairwise(np.atleast_1d(a), np.atleast_2d(w))
        return float(g[0, 0])


def fit_conditional_density(dataset: Dataset, config: TestConfig | None = None,
                            diagnostics: Diagnostics | None = None) -> DensityModel:
    """Rule-of-thumb bandwidths ``1.06 sd n^(-1/5)`` per dimension."""
    floor = config.density_floor if config is not None else 1e-3
    if dataset.n < 10:
        raise ValueError("conditional density needs at least 10 observations")
    if config is not None and config.bandwidth_a is not None:
        h_a = float(config.bandwidth_a)
    else:
        h_a = silverman_bandwidth(dataset.A)
    if config is not None and config.bandwidth_w is not None:
        h_w = np.asarray(config.bandwidth_w, dtype=np.float64)
    else:
        h_w = np.array([silverman_bandwidth(dataset.W[:, j]) for j in range(dataset.d)])
    for j, h in enumerate(h_w):
        if not h > 0:
            msg = f"covariate w{j + 1} has zero variance; its kernel weight is uniform"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            if diagnostics is not None:
                diagnostics.degenerate_covariates.append(j + 1)
            h_w[j] = 0.0
    return DensityModel(bandwidth_a=h_a, bandwidth_w=h_w, A_train=dataset.A,
                        W_train=dataset.W, floor=floor)


# ---------------------------------------------------------------------------
# bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NuisanceFit:
    survival: CoxModel
    censoring: CoxModel
    density: DensityModel
    floor: float = 1e-3


def fit_nuisances(dataset: Dataset, config: TestConfig,
                  diagnostics: Diagnostics | None = None) -> NuisanceFit:
    survival = fit_cox(dataset)
    if np.any(dataset.delta == 0):
        censoring = fit_cox(dataset, use_censoring_indicator=True)
    else:
        censoring = CoxModel.empty(1 + dataset.d)
    density = fit_conditional_density(dataset, config, diagnostics)
    if diagnostics is not None:
        diagnostics.cox_iterations = {"survival": survival.n_iter, "censoring": censoring.n_iter}
    return NuisanceFit(survival=survival, censoring=censoring, density=density,
                       floor=config.density_floor)


def at_risk_prob(fit: NuisanceFit, y, a, w) -> float:
    """``R(y|a,w) = S(y-|a,w) G(y-|a,w)``, floored at ``fit.floor``."""
    s = conditional_survival(fit.survival, y, a, w, left=True)
    g = conditional_survival(fit.censoring, y, a, w, left=True)
    return max(s * g, fit.floor)
