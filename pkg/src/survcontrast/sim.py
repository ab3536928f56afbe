"""Synthetic data from three data-generating mechanisms (flat null, monotone
and quadratic exposure effects) and a seeded replication driver."""
from __future__ import annotations

import csv
import enum
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, TestConfig

log = logging.getLogger(__name__)

TAU = 35
T_EVAL = 25.0

# How "T ~ s exp{lp}" is read: exponential whose hazard is exp(lp)/s
# (mean s*exp(-lp)), whose mean is s*exp(lp), or whose rate is s*exp(lp).
PARAMETRIZATIONS = ("hazard", "mean", "rate")


class SettingKind(str, enum.Enum):
    A_NULL = "A"
    B_MONOTONE = "B"
    C_QUADRATIC = "C"

    @classmethod
    def parse(cls, value) -> "SettingKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper()[:1]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown setting {value!r}; expected A, B or C") from None


@dataclass(frozen=True)
class SimSetting:
    kind: SettingKind
    n: int
    tau: float = TAU
    t_eval: float = T_EVAL
    parametrization: str = "hazard"

    def __post_init__(self):
        object.__setattr__(self, "kind", SettingKind.parse(self.kind))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.parametrization not in PARAMETRIZATIONS:
            raise ValueError(f"parametrization must be one of {PARAMETRIZATIONS}")


def _expit(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.logaddexp(0.0, x)


def gen_covariates(n: int, rng: np.random.Generator) -> np.ndarray:
    """``W1 ~ U(1, 2)`` and ``W2 ~ Bernoulli(0.5)``, independent."""
    w1 = rng.uniform(1.0, 2.0, size=n)
    w2 = rng.integers(0, 2, size=n).astype(np.float64)
    return np.column_stack([w1, w2])


def exposure_slope(W: np.ndarray) -> np.ndarray:
    return 5.0 * (_expit(-1.0 + W[:, 0] - W[:, 1]) - 0.5)


def exposure_density(a, slope):
    """``g(a|w) = expit(slope a) / int_{-1}^{1} expit(slope x) dx`` on ``(-1, 1)``."""
    a = np.asarray(a, dtype=np.float64)
    slope = np.asarray(slope, dtype=np.float64)
    small = np.abs(slope) < 1e-8
    safe = np.where(small, 1.0, slope)
    # the normaliser equals 1 for every slope: softplus(s) - softplus(-s) = s
    norm = np.where(small, 2.0 * _expit(0.0), (_softplus(safe) - _softplus(-safe)) / safe)
    dens = _expit(slope * a) / norm
    return np.where(np.abs(a) <= 1, dens, 0.0)


def inverse_exposure_cdf(u, slope):
    u = np.asarray(u, dtype=np.float64)
    slope = np.asarray(slope, dtype=np.float64)
    small = np.abs(slope) < 1e-8
    s = np.where(small, 1.0, slope)
    c = _softplus(-s) + u * s
    # log(e^c - 1) without overflow
    a = (c + np.log(-np.expm1(-c))) / s
    return np.where(small, 2.0 * u - 1.0, np.clip(a, -1.0, 1.0))


def gen_exposure(setting: SimSetting | SettingKind | str, W: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    kind = setting.kind if isinstance(setting, SimSetting) else SettingKind.parse(setting)
    u = rng.uniform(0.0, 1.0, size=W.shape[0])
    if kind is SettingKind.A_NULL:
        return 2.0 * u - 1.0
    return inverse_exposure_cdf(u, exposure_slope(W))


def _mean_time(scale, lp, parametrization):
    if parametrization == "hazard":
        return scale * np.exp(-lp)
    if parametrization == "mean":
        return scale * np.exp(lp)
    return 1.0 / (scale * np.exp(lp))


def time_means(setting: SimSetting, A: np.ndarray, W: np.ndarray):
    """Means of the (unrounded) exponential event and censoring times."""
    f1 = -3.0 + 0.3 * W[:, 0] + 1.1 * W[:, 1]
    kind = setting.kind
    if kind is SettingKind.A_NULL:
        lp_t, lp_c = 0.2 * f1, -0.2 + 0.4 * f1
        scale_t, scale_c = 10.0, 9.0
    else:
        f2 = A if kind is SettingKind.B_MONOTONE else 1.2 - 2.0 * A**2
        lp_t, lp_c = 0.6 * f1 - 0.75 * f2, -1.2 + 0.4 * f1 - 0.5 * f2
        scale_t, scale_c = 3.5, 3.15
    par = setting.parametrization
    return _mean_time(scale_t, lp_t, par), _mean_time(scale_c, lp_c, par)


def gen_times(setting: SimSetting, A: np.ndarray, W: np.ndarray,
              rng: np.random.Generator):
    """Rounded-up exponential times, censoring truncated at ``tau``.

    Returns ``(Y, delta)`` with ``Y = min(T, C)`` and ``delta = 1(T <= C)``.
    """
    mean_t, mean_c = time_means(setting, A, W)
    T = np.ceil(rng.exponential(mean_t))
    C = np.minimum(np.ceil(rng.exponential(mean_c)), setting.tau)
    return np.minimum(T, C), (T <= C).astype(np.int64)


def simulate_dataset(setting: SimSetting, rng: np.random.Generator) -> Dataset:
    W = gen_covariates(setting.n, rng)
    A = gen_exposure(setting, W, rng)
    Y, delta = gen_times(setting, A, W, rng)
    return Dataset(W=W, A=A, Y=Y, delta=delta)


def rep_seed(master_seed: int, rep_index: int) -> int:
    """64-bit seed for replication ``rep_index``, independent of run order."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(rep_index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class RepRecord:
    rep: int
    seed: int
    statistic: float | None
    p_value: float | None
    reject: bool | None
    error: str | None = None


@dataclass
class SimReport:
    setting: SimSetting
    config: TestConfig
    master_seed: int
    records: list = field(default_factory=list)

    @property
    def reps(self) -> int:
        return len(self.records)

    @property
    def completed(self) -> list:
        return [r for r in self.records if r.error is None]

    @property
    def failures(self) -> int:
        return self.reps - len(self.completed)

    @property
    def rejections(self) -> int:
        return sum(1 for r in self.completed if r.reject)

    @property
    def rejection_rate(self) -> float:
        done = len(self.completed)
        return self.rejections / done if done else float("nan")

    @property
    def per_rep_pvalues(self) -> list:
        return [r.p_value for r in self.completed]

    def to_dict(self) -> dict:
        return {
            "setting": {
                "kind": self.setting.kind.value,
                "n": self.setting.n,
                "tau": self.setting.tau,
                "t_eval": self.setting.t_eval,
                "parametrization": self.setting.parametrization,
            },
            "config": self.config.to_dict(),
            "master_seed": int(self.master_seed),
            "reps": self.reps,
            "completed": len(self.completed),
            "failures": self.failures,
            "rejections": self.rejections,
            "rejection_rate": self.rejection_rate if self.completed else None,
            "per_rep_pvalues": self.per_rep_pvalues,
            "errors": {str(r.rep): r.error for r in self.records if r.error is not None},
        }

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rep", "seed", "statistic", "p_value", "reject", "error"])
            for r in self.records:
                writer.writerow([
                    r.rep, r.seed,
                    "" if r.statistic is None else repr(r.statistic),
                    "" if r.p_value is None else repr(r.p_value),
                    "" if r.reject is None else int(r.reject),
                    r.error or "",
                ])


def _one_rep(args) -> RepRecord:
    from .nulldist import run_test

    setting, config, master_seed, rep = args
    seed = rep_seed(master_seed, rep)
    rng = np.random.default_rng(seed)
    try:
        data = simulate_dataset(setting, rng)
        result = run_test(data, config.replace(seed=seed))
    except Exception as exc:  # noqa: BLE001 - failed reps are recorded, not fatal
        return RepRecord(rep=rep, seed=seed, statistic=None, p_value=None, reject=None,
                         error=f"{type(exc).__name__}: {exc}")
    return RepRecord(rep=rep, seed=seed, statistic=result.statistic, p_value=result.p_value,
                     reject=bool(result.reject))


def run_replications(setting: SimSetting, reps: int, config: TestConfig,
                     threads: int = 1, master_seed: int | None = None) -> SimReport:
    """Simulate ``reps`` datasets and run the test on each.

    Replication ``r`` uses seed :func:`rep_seed` ``(master_seed, r)`` for both
    data generation and its null draws, so the report does not depend on
    ``threads``. Failed replications are kept in the report and excluded
    from the rejection rate.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    master_seed = config.seed if master_seed is None else master_seed
    config = config.replace(t=setting.t_eval) if config.t != setting.t_eval else config
    jobs = [(setting, config, master_seed, r) for r in range(reps)]
    threads = max(1, int(threads))
    if threads == 1 or reps == 1:
        records = [_one_rep(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_one_rep, jobs, chunksize=max(1, reps // (4 * threads))))
    report = SimReport(setting=setting, config=config, master_seed=master_seed, records=records)
    if report.failures:
        log.warning("%d of %d replications failed", report.failures, reps)
    return report


def default_threads() -> int:
    value = os.environ.get("SURVCONTRAST_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            log.warning("ignoring non-integer SURVCONTRAST_THREADS=%r", value)
    return 1
