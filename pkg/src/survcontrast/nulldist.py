"""Monte Carlo approximation of the null distribution and the full test."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._accel import backend
from .contrast import (ContrastClassSpec, _STATUS_NAMES, make_spec, sup_statistic)
from .data import ClassKind, Dataset, TestConfig, validate
from .nuisance import Diagnostics, fit_nuisances

log = logging.getLogger(__name__)

JITTER_SCHEDULE = (1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)

SCALE_CONVENTION = ("statistic = sqrt(n) * sup|psi|; null draws are sup|m| with "
                    "m ~ N(0, Sigma_n), Sigma_n = n^-1 * Dbar' Dbar")


class PipelineError(RuntimeError):
    """Failure in one stage of :func:`run_test`; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class NullSampler:
    covariance: np.ndarray
    cholesky_factor: np.ndarray
    seed: int
    jitter_used: float

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]

    def normal(self, u_index: int) -> np.ndarray:
        return standard_normal(self.seed, u_index, self.dim)

    def xi(self, u_index: int) -> np.ndarray:
        return self.cholesky_factor @ self.normal(u_index)


def standard_normal(seed: int, u_index: int, size: int) -> np.ndarray:
    """Draw ``u_index`` of a counter-based stream: Philox keyed by ``seed``,
    with the draw index in the high counter word so streams never overlap."""
    bitgen = np.random.Philox(key=int(seed), counter=[0, int(u_index), 0, 0])
    return np.random.Generator(bitgen).standard_normal(size)


def build_covariance(eif, seed: int = 0) -> NullSampler:
    """``Sigma_n = n^-1 Dbar' Dbar`` from a (column-centred) EIF matrix.

    Cholesky is attempted with jitter ``1e-12 ... 1e-6`` (times
    ``max(1, mean diagonal)``) until it succeeds.
    """
    D = np.asarray(getattr(eif, "centered", eif), dtype=np.float64)
    if D.ndim == 1:
        D = D[:, None]
    D = D - D.mean(axis=0)
    n = D.shape[0]
    cov = D.T @ D / n
    cov = 0.5 * (cov + cov.T)
    m = cov.shape[0]
    scale = max(1.0, float(np.trace(cov)) / max(m, 1))
    for jit in JITTER_SCHEDULE:
        amount = jit * scale
        try:
            L = np.linalg.cholesky(cov + amount * np.eye(m))
        except np.linalg.LinAlgError:
            continue
        return NullSampler(covariance=cov, cholesky_factor=L, seed=int(seed), jitter_used=amount)
    raise np.linalg.LinAlgError("covariance numerically degenerate")


def _sup_rows(xi: np.ndarray, spec: ContrastClassSpec):
    kind = spec.kind
    if kind is ClassKind.INDICATOR:
        return np.abs(xi).max(axis=1), np.full(xi.shape[0], kernels.STATUS_EXACT)
    if kind is ClassKind.BOX_ONLY or (kind is ClassKind.BOX_TV
                                      and spec.lam >= 2 * (xi.shape[1] - 1)):
        return np.abs(xi).sum(axis=1), np.full(xi.shape[0], kernels.STATUS_EXACT)
    if kind is ClassKind.BOX_TV:
        return kernels.batch_box_tv(xi, spec.lam)
    return kernels.batch_monotone(xi, spec.grid.bin_masses, spec.monotone_method)


def draw_null_sup(sampler: NullSampler, spec: ContrastClassSpec, u_index: int) -> float:
    """One draw ``M^(u)`` of the supremum of the approximating Gaussian process."""
    xi = sampler.xi(u_index)
    values, _ = _sup_rows(xi[None, :], spec)
    return float(values[0])


def null_draws(sampler: NullSampler, spec: ContrastClassSpec, num_draws: int,
               threads: int = 1, diagnostics: Diagnostics | None = None) -> np.ndarray:
    """All ``M^(u)``, ``u = 0..num_draws-1``; identical for any ``threads``."""
    Z = np.empty((num_draws, sampler.dim))
    for u in range(num_draws):
        Z[u] = sampler.normal(u)
    xi = Z @ sampler.cholesky_factor.T
    threads = max(1, int(threads))
    if threads == 1 or num_draws < 2 * threads:
        values, statuses = _sup_rows(xi, spec)
    else:
        chunks = np.array_split(np.arange(num_draws), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda idx: _sup_rows(xi[idx], spec), chunks))
        values = np.concatenate([p[0] for p in parts])
        statuses = np.concatenate([p[1] for p in parts])
    if diagnostics is not None:
        codes, counts = np.unique(statuses, return_counts=True)
        for code, count in zip(codes, counts):
            key = f"draws:{_STATUS_NAMES[int(code)]}"
            diagnostics.solver_statuses[key] = diagnostics.solver_statuses.get(key, 0) + int(count)
    return values


def p_value(statistic: float, draws) -> float:
    """``(1 + #{M^(u) >= statistic}) / (U + 1)``."""
    draws = np.asarray(draws, dtype=np.float64)
    if draws.size < 1:
        raise ValueError("need at least one null draw")
    return float((1 + np.count_nonzero(draws >= statistic)) / (draws.size + 1))


@dataclass
class TestResult:
    __test__ = False

    statistic: float
    sup_psi: float
    draws: np.ndarray
    p_value: float
    alpha: float
    reject: bool
    n: int
    config: TestConfig
    spec: dict
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    psi_onestep: np.ndarray | None = None
    psi_plugin: np.ndarray | None = None

    def to_dict(self, include_draws: bool = False) -> dict:
        out = {
            "statistic": self.statistic,
            "sup_psi": self.sup_psi,
            "p_value": self.p_value,
            "reject": bool(self.reject),
            "alpha": self.alpha,
            "num_null_draws": int(self.draws.size),
            "n": self.n,
            "t": self.config.t,
            "seed": int(self.config.seed),
            "config": self.config.to_dict(),
            "contrast_class": self.spec,
            "scale_convention": SCALE_CONVENTION,
            "diagnostics": self.diagnostics.to_dict(),
        }
        if include_draws:
            out["draws"] = [float(x) for x in self.draws]
        return out


def run_test(dataset: Dataset, config: TestConfig, threads: int = 1) -> TestResult:
    """Fit nuisances, compute the one-step supremum and its Monte Carlo p-value."""
    diag = Diagnostics()
    stage = "validate"
    try:
        diag.warnings.extend(validate(dataset, config))
        stage = "nuisance"
        fit = fit_nuisances(dataset, config, diag)
        stage = "contrast"
        spec = make_spec(dataset, config)
        sup, psi, spec = sup_statistic(dataset, fit, config, diag, spec)
        stage = "covariance"
        eif = psi.eif.centered
        if spec.kind is ClassKind.INDICATOR:
            # draws for h'_j are tied to those for h_j (m(h'_j) = -m(h_j))
            eif = eif[:, :spec.grid.kappa]
        sampler = build_covariance(eif, seed=config.seed)
        diag.jitter = sampler.jitter_used
        stage = "null draws"
        draws = null_draws(sampler, spec, int(config.num_null_draws), threads, diag)
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage label
        raise PipelineError(stage, exc) from exc

    statistic = math.sqrt(dataset.n) * sup.value
    p = p_value(statistic, draws)
    log.info("n=%d statistic=%.6g p=%.4g backend=%s", dataset.n, statistic, p, backend())
    return TestResult(statistic=statistic, sup_psi=sup.value, draws=draws, p_value=p,
                      alpha=config.alpha, reject=p <= config.alpha, n=dataset.n,
                      config=config, spec=spec.to_dict(), diagnostics=diag,
                      psi_onestep=psi.onestep, psi_plugin=psi.plugin)
