"""Plug-in and one-step estimators of linear contrasts of the counterfactual
survival curve ``a -> theta^a(t)``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import Dataset, TestConfig
from .nuisance import (Diagnostics, NuisanceFit, at_risk_prob, conditional_survival)


@dataclass(frozen=True)
class ThetaCurve:
    """``theta^a(t) = mean_i S(t|a, W_i)`` at the observed exposures and any
    extra evaluation points. ``theta_bar`` is centred by the mean over the
    observed exposures only."""

    t: float
    observed: np.ndarray        # theta at A_1..A_n
    eval_exposures: np.ndarray  # extra points (may be empty)
    theta: np.ndarray           # theta at eval_exposures

    @property
    def center(self) -> float:
        return float(self.observed.mean())

    @property
    def observed_bar(self) -> np.ndarray:
        return self.observed - self.center

    @property
    def theta_bar(self) -> np.ndarray:
        return self.theta - self.center


@dataclass(frozen=True)
class EifMatrix:
    values: np.ndarray

    @property
    def centered(self) -> np.ndarray:
        return self.values - self.values.mean(axis=0)


@dataclass(frozen=True)
class PsiVector:
    plugin: np.ndarray
    onestep: np.ndarray
    eif: EifMatrix


def _theta_matrix(fit: NuisanceFit, t: float, a_eval: np.ndarray, W: np.ndarray):
    # S(t | a_m, W_i) for every (m, i); exp(eta) factorises over a and w
    model = fit.survival
    beta = model.coefficients
    eta_a = (a_eval - model.regressor_means[0]) * beta[0]
    eta_w = (W - model.regressor_means[1:]) @ beta[1:] if W.shape[1] else np.zeros(W.shape[0])
    exp_eta = np.exp(eta_a[:, None] + eta_w[None, :])
    return model.survival(t, exp_eta)


def theta_plugin(fit: NuisanceFit, dataset: Dataset, t: float, a: float) -> float:
    """``n^-1 sum_i S(t | a, W_i)``."""
    s, _ = _theta_matrix(fit, t, np.atleast_1d(np.asarray(a, dtype=np.float64)), dataset.W)
    return float(np.clip(s, 0.0, 1.0).mean())


def theta_curve(fit: NuisanceFit, dataset: Dataset, t: float, eval_exposures=None,
                diagnostics: Diagnostics | None = None) -> ThetaCurve:
    extra = np.empty(0) if eval_exposures is None else np.asarray(eval_exposures, dtype=np.float64)
    points = np.concatenate([dataset.A, extra])
    s, n_clamped = _theta_matrix(fit, t, points, dataset.W)
    if diagnostics is not None:
        diagnostics.hazard_clamps += n_clamped
    theta = np.clip(s, 0.0, 1.0).mean(axis=1)
    return ThetaCurve(t=float(t), observed=theta[:dataset.n], eval_exposures=extra,
                      theta=theta[dataset.n:])


def psi_plugin(theta: ThetaCurve, h_values) -> np.ndarray | float:
    """``n^-1 sum_i theta_bar^{A_i}(t) h(A_i)``; ``h_values`` may be ``(n,)`` or ``(n, m)``."""
    h = np.asarray(h_values, dtype=np.float64)
    bar = theta.observed_bar
    if h.ndim == 1:
        return float(bar @ h / bar.shape[0])
    return bar @ h / bar.shape[0]


def martingale_integral(fit: NuisanceFit, t, y, a, w,
                        diagnostics: Diagnostics | None = None) -> float:
    """``sum_{u <= t ^ y} dLambda(u|a,w) / (S(u|a,w) G(u-|a,w))`` over the
    event model's jump times; denominators are floored at ``fit.floor``."""
    model = fit.survival
    e = float(np.exp(model.linear_predictor(a, w)))
    upper = min(t, y)
    total = 0.0
    for u, dl in zip(model.event_times, model.baseline_increments):
        if u > upper:
            break
        q = min(dl * e, 1.0)
        s = conditional_survival(model, u, a, w)
        g = conditional_survival(fit.censoring, u, a, w, left=True)
        den = s * g
        if den < fit.floor:
            den = fit.floor
            if diagnostics is not None:
                diagnostics.denominator_clips += 1
        total += q / den
    return total


@dataclass(frozen=True)
class EifPieces:
    """Per-subject factors of the estimated influence function.

    ``D(O_i; h) = (h(A_i) - mean h) * weight_i`` with
    ``weight_i = S(t|A_i,W_i) * ratio_i * (H_i - J_i)``.
    """

    s_t: np.ndarray
    h_int: np.ndarray
    jump: np.ndarray
    density_ratio: np.ndarray

    @property
    def weight(self) -> np.ndarray:
        return self.s_t * self.density_ratio * (self.h_int - self.jump)


def density_ratio(fit: NuisanceFit, dataset: Dataset,
                  diagnostics: Diagnostics | None = None) -> np.ndarray:
    """``n^-1 sum_j g(A_i|W_j) / g(A_i|W_i)`` for every subject."""
    g, n_clip = fit.density.pairwise(dataset.A, dataset.W)
    if diagnostics is not None:
        diagnostics.density_floor_clips += n_clip
    return g.mean(axis=1) / np.diag(g)


def eif_pieces(fit: NuisanceFit, dataset: Dataset, t: float,
               diagnostics: Diagnostics | None = None) -> EifPieces:
    sm, cm = fit.survival, fit.censoring
    exp_s = np.exp(sm.linear_predictor(dataset.A, dataset.W))
    exp_c = np.exp(cm.linear_predictor(dataset.A, dataset.W))
    s_t, h_int, jump, n_clip = kernels.martingale_terms(
        exp_s, exp_c, dataset.Y, dataset.delta, t,
        sm.event_times, sm.baseline_increments, cm.event_times, cm.baseline_increments,
        fit.floor)
    ratio = density_ratio(fit, dataset, diagnostics)
    if diagnostics is not None:
        diagnostics.denominator_clips += n_clip
    return EifPieces(s_t=s_t, h_int=h_int, jump=jump, density_ratio=ratio)


def eif_row(fit: NuisanceFit, dataset: Dataset, i: int, h_values, t: float,
            diagnostics: Diagnostics | None = None) -> float:
    """Scalar route to ``D(O_i; h)``, one subject at a time.

    Slow, and kept separate from :func:`psi_onestep_batch` so the two can be
    checked against each other.
    """
    h = np.asarray(h_values, dtype=np.float64)
    obs = dataset.observation(i)
    a, w, y = obs.a, np.asarray(obs.w), obs.y
    s_t = conditional_survival(fit.survival, t, a, w)
    bracket = martingale_integral(fit, t, y, a, w, diagnostics)
    if obs.delta == 1 and y <= t:
        s_left = conditional_survival(fit.survival, y, a, w, left=True)
        s_y = conditional_survival(fit.survival, y, a, w)
        r = at_risk_prob(fit, y, a, w)
        den = max(s_y * r, fit.floor)
        bracket -= s_left / den
    g_row = np.array([fit.density(a, dataset.W[j]) for j in range(dataset.n)])
    z = (h[i] - h.mean()) * s_t * g_row.mean() / fit.density(a, w)
    return bracket * z


def psi_onestep_batch(fit: NuisanceFit, dataset: Dataset, config: TestConfig, generators,
                      diagnostics: Diagnostics | None = None, *,
                      theta: ThetaCurve | None = None,
                      pieces: EifPieces | None = None) -> PsiVector:
    """One-step estimates for every column of ``generators``.

    ``generators`` is an ``(n, m)`` array of contrast values ``h_j(A_i)`` (a
    1-d array is treated as one column). ``onestep = plugin + eif.mean(0)``.
    """
    h = np.asarray(generators, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    if h.shape[0] != dataset.n:
        raise ValueError("generators must have one row per observation")
    if theta is None:
        theta = theta_curve(fit, dataset, config.t, diagnostics=diagnostics)
    if pieces is None:
        pieces = eif_pieces(fit, dataset, config.t, diagnostics)
    plugin = psi_plugin(theta, h)
    values = (h - h.mean(axis=0)) * pieces.weight[:, None]
    onestep = plugin + values.mean(axis=0)
    return PsiVector(plugin=plugin, onestep=onestep, eif=EifMatrix(values))
