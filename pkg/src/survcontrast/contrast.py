"""Finite approximations of the contrast class and the supremum statistic."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import ClassKind, Dataset, TestConfig
from .estimator import PsiVector, eif_pieces, psi_onestep_batch, theta_curve
from .nuisance import Diagnostics, NuisanceFit

EXACT = "exact"
CONVERGED = "converged"
MAXITER = "maxiter"
_STATUS_NAMES = {kernels.STATUS_EXACT: EXACT, kernels.STATUS_CONVERGED: CONVERGED,
                 kernels.STATUS_MAXITER: MAXITER}

FEASIBILITY_TOL = 1e-8


@dataclass(frozen=True)
class ExposureGrid:
    thresholds: np.ndarray   # a_0 < a_1 < ... < a_kappa
    bin_masses: np.ndarray   # empirical mass of [a_{j-1}, a_j), last bin closed

    @property
    def kappa(self) -> int:
        return self.thresholds.shape[0] - 1

    def bin_index(self, a) -> np.ndarray:
        idx = np.searchsorted(self.thresholds, np.asarray(a, dtype=np.float64), side="right") - 1
        return np.clip(idx, 0, self.kappa - 1)


@dataclass(frozen=True)
class ContrastClassSpec:
    kind: ClassKind
    grid: ExposureGrid
    lam: float = math.inf
    monotone_method: str = "exact"

    def __post_init__(self):
        object.__setattr__(self, "kind", ClassKind.parse(self.kind))
        if self.kind is ClassKind.BOX_TV and not self.lam > 0:
            raise ValueError("lambda must be positive for the box+TV class")
        if self.grid.kappa < 1:
            raise ValueError("grid needs at least one bin")

    @property
    def uses_basis(self) -> bool:
        return self.kind is not ClassKind.INDICATOR

    def generator_matrix(self, a) -> np.ndarray:
        if self.uses_basis:
            return bin_matrix(self.grid, a)
        return indicator_matrix(self.grid, a)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "kappa": self.grid.kappa,
            "lambda": "inf" if math.isinf(self.lam) else self.lam,
            "thresholds": [float(x) for x in self.grid.thresholds],
        }


@dataclass(frozen=True)
class SupResult:
    value: float
    argmax: np.ndarray | int
    status: str


def build_grid(A, kappa: int) -> ExposureGrid:
    """Thresholds at the empirical ``j/kappa`` quantiles of ``A``.

    Tied quantiles are merged, which lowers the effective number of bins (a
    warning is emitted).
    """
    A = np.asarray(A.A if isinstance(A, Dataset) else A, dtype=np.float64)
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    if np.unique(A).shape[0] < 2:
        raise ValueError("need at least two distinct exposure values")
    probs = np.arange(1, kappa) / kappa
    interior = np.quantile(A, probs, method="inverted_cdf") if kappa > 1 else np.empty(0)
    thresholds = np.unique(np.concatenate([[A.min()], interior, [A.max()]]))
    if thresholds.shape[0] - 1 < kappa:
        warnings.warn(f"tied exposure quantiles: kappa reduced from {kappa} to "
                      f"{thresholds.shape[0] - 1}", RuntimeWarning, stacklevel=2)
    k = thresholds.shape[0] - 1
    idx = np.clip(np.searchsorted(thresholds, A, side="right") - 1, 0, k - 1)
    counts = np.bincount(idx, minlength=k)
    return ExposureGrid(thresholds=thresholds, bin_masses=counts / A.shape[0])


def indicator_generators(grid: ExposureGrid) -> list:
    """``h_j(a) = (-1)^{1(a <= a_j)}`` then ``h'_j(a) = (-1)^{1(a >= a_j)}``, j = 1..kappa."""
    def lower(aj):
        return lambda a: np.where(np.asarray(a) <= aj, -1.0, 1.0)

    def upper(aj):
        return lambda a: np.where(np.asarray(a) >= aj, -1.0, 1.0)

    cuts = grid.thresholds[1:]
    return [lower(aj) for aj in cuts] + [upper(aj) for aj in cuts]


def indicator_matrix(grid: ExposureGrid, a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)[:, None]
    cuts = grid.thresholds[1:][None, :]
    return np.hstack([np.where(a <= cuts, -1.0, 1.0), np.where(a >= cuts, -1.0, 1.0)])


def bin_matrix(grid: ExposureGrid, a) -> np.ndarray:
    """Bin indicators ``b_j(a) = 1{a in [a_{j-1}, a_j)}``, last bin closed."""
    idx = grid.bin_index(a)
    out = np.zeros((idx.shape[0], grid.kappa))
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out


def sup_indicator(psi_values) -> SupResult:
    v = np.abs(np.asarray(psi_values, dtype=np.float64))
    j = int(np.argmax(v))
    return SupResult(value=float(v[j]), argmax=j, status=EXACT)


def total_variation(beta) -> float:
    return float(np.abs(np.diff(beta)).sum())


def sup_box_tv(c, lam: float = math.inf) -> SupResult:
    """``max |c @ beta|`` over ``|beta_j| <= 1``, ``sum |beta_j - beta_{j-1}| <= lam``.

    ``lam = inf`` (or any ``lam >= 2 (kappa - 1)``, where the variation bound
    cannot bind) has the closed form ``sum |c_j|``. Otherwise a dense simplex
    solves the LP; the polytope is symmetric under ``beta -> -beta`` so one
    maximisation covers both signs.
    """
    c = np.asarray(c, dtype=np.float64)
    k = c.shape[0]
    if math.isinf(lam) or lam >= 2 * (k - 1):
        beta = np.where(c >= 0, 1.0, -1.0)
        return SupResult(value=float(np.abs(c).sum()), argmax=beta, status=EXACT)
    value, beta, status = kernels.box_tv_lp(c, lam)
    if np.any(np.abs(beta) > 1 + FEASIBILITY_TOL) or total_variation(beta) > lam + FEASIBILITY_TOL:
        raise RuntimeError("box+TV solution violates its constraints")
    if value < 0:
        value, beta = -value, -beta
    return SupResult(value=float(value), argmax=beta, status=_STATUS_NAMES[status])


def sup_monotone_variance(c, masses, method: str = "exact") -> SupResult:
    """``max |c @ beta|`` over non-decreasing ``beta`` with unit empirical variance.

    ``beta`` is taken with zero weighted mean: when ``sum(c) = 0`` (always the
    case for one-step basis values) shifting ``beta`` changes neither the
    objective nor the variance. ``method="exact"`` projects ``c / masses`` on
    the monotone cone with weighted PAVA and normalises; ``"projected_gradient"``
    runs projected ascent with the same projection.
    """
    c = np.asarray(c, dtype=np.float64)
    p = np.asarray(masses, dtype=np.float64)
    if np.any(p <= 0):
        raise ValueError("bin masses must be positive")
    if method == "exact":
        value, beta = kernels.monotone_variance_exact(c, p)
        status = EXACT
    elif method == "projected_gradient":
        value, beta, code = kernels.monotone_variance_pg(c, p)
        status = _STATUS_NAMES[code]
    else:
        raise ValueError(f"unknown method {method!r}")
    check_monotone_feasible(beta, p)
    return SupResult(value=float(value), argmax=beta, status=status)


def check_monotone_feasible(beta, p, tol=FEASIBILITY_TOL):
    beta = np.asarray(beta)
    mean = float(p @ beta)
    var = float(p @ beta**2) - mean**2
    if var > 1 + tol or np.any(np.diff(beta) < -tol):
        raise RuntimeError("monotone solution violates its constraints")


def sup_over_class(spec: ContrastClassSpec, c) -> SupResult:
    """Supremum of ``|psi(h)|`` given per-generator (or per-basis) values ``c``."""
    kind = spec.kind
    if kind is ClassKind.INDICATOR:
        return sup_indicator(c)
    if kind is ClassKind.BOX_ONLY:
        return sup_box_tv(c, math.inf)
    if kind is ClassKind.BOX_TV:
        return sup_box_tv(c, spec.lam)
    return sup_monotone_variance(c, spec.grid.bin_masses, spec.monotone_method)


def make_spec(dataset: Dataset, config: TestConfig) -> ContrastClassSpec:
    grid = build_grid(dataset.A, int(config.kappa))
    lam = config.lam if config.class_kind is ClassKind.BOX_TV else math.inf
    return ContrastClassSpec(kind=config.class_kind, grid=grid, lam=lam,
                             monotone_method=config.monotone_method)


def sup_statistic(dataset: Dataset, fit: NuisanceFit, config: TestConfig,
                  diagnostics: Diagnostics | None = None,
                  spec: ContrastClassSpec | None = None):
    """One-step supremum over the configured class.

    Returns ``(SupResult, PsiVector, ContrastClassSpec)``. For the indicator
    class the psi vector covers all ``2 kappa`` generators; for the basis
    classes it covers the ``kappa`` bin indicators.
    """
    if spec is None:
        spec = make_spec(dataset, config)
    if diagnostics is not None:
        diagnostics.kappa_effective = spec.grid.kappa
    gens = spec.generator_matrix(dataset.A)
    theta = theta_curve(fit, dataset, config.t, diagnostics=diagnostics)
    pieces = eif_pieces(fit, dataset, config.t, diagnostics)
    psi = psi_onestep_batch(fit, dataset, config, gens, diagnostics, theta=theta, pieces=pieces)
    result = sup_over_class(spec, psi.onestep)
    if diagnostics is not None:
        diagnostics.solver_statuses[f"statistic:{result.status}"] = 1
    return result, psi, spec
