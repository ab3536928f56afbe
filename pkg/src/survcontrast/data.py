"""Observed-data container, test configuration and file I/O."""
from __future__ import annotations

import csv
import enum
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

_W_COLUMN = re.compile(r"^w(\d+)$")


class ValidationError(ValueError):
    """Raised when input data or configuration fail validation.

    ``problems`` lists every failed check, not just the first one.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ClassKind(str, enum.Enum):
    INDICATOR = "indicator"
    BOX_TV = "boxtv"
    MONOTONE_VARIANCE = "monotone"
    BOX_ONLY = "box"

    @classmethod
    def parse(cls, value) -> "ClassKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "indicator": cls.INDICATOR,
            "boxtv": cls.BOX_TV,
            "monotone": cls.MONOTONE_VARIANCE,
            "monotonevariance": cls.MONOTONE_VARIANCE,
            "box": cls.BOX_ONLY,
            "boxonly": cls.BOX_ONLY,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown contrast class {value!r}") from None


@dataclass(frozen=True)
class Observation:
    w: tuple
    a: float
    y: float
    delta: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable sample of ``(W, A, Y, delta)`` records.

    Arrays are copied on construction and marked read-only, so a dataset can be
    shared across workers without defensive copies.
    """

    W: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64).reshape(-1)
        n = A.shape[0]
        W = np.array(self.W, dtype=np.float64)
        if W.ndim == 1:
            W = W.reshape(n, -1) if W.size else np.empty((n, 0))
        Y = np.array(self.Y, dtype=np.float64).reshape(-1)
        delta = np.array(self.delta).reshape(-1)

        problems = []
        if n == 0:
            problems.append("dataset is empty")
        if W.shape[0] != n or Y.shape[0] != n or delta.shape[0] != n:
            problems.append("W, A, Y and delta must have the same number of rows")
        if problems:
            raise ValidationError(problems)
        if not np.all(np.isfinite(A)):
            problems.append("exposure values must be finite")
        if not np.all(np.isfinite(W)):
            problems.append("covariates must be finite")
        if not np.all(np.isfinite(Y)) or np.any(Y < 0):
            problems.append("follow-up times must be finite and nonnegative")
        if not np.all((delta == 0) | (delta == 1)):
            problems.append("event indicator must be 0 or 1")
        if not problems and not A.min() < A.max():
            problems.append("degenerate exposure range")
        if problems:
            raise ValidationError(problems)

        delta = delta.astype(np.int64)
        for name, arr in (("W", W), ("A", A), ("Y", Y), ("delta", delta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def __len__(self):
        return self.n

    @property
    def exposure_range(self) -> tuple[float, float]:
        return float(self.A.min()), float(self.A.max())

    def observations(self) -> Iterator[Observation]:
        for i in range(self.n):
            yield self.observation(i)

    def observation(self, i: int) -> Observation:
        return Observation(tuple(float(v) for v in self.W[i]), float(self.A[i]),
                           float(self.Y[i]), int(self.delta[i]))

    @classmethod
    def from_observations(cls, observations: Sequence[Observation]) -> "Dataset":
        observations = list(observations)
        if not observations:
            raise ValidationError("dataset is empty")
        d = len(observations[0].w)
        if any(len(o.w) != d for o in observations):
            raise ValidationError("all observations must share the covariate dimension")
        W = np.array([o.w for o in observations], dtype=np.float64).reshape(len(observations), d)
        return cls(W=W,
                   A=[o.a for o in observations],
                   Y=[o.y for o in observations],
                   delta=[o.delta for o in observations])

    def take(self, index) -> "Dataset":
        """Row subset / reordering / repetition."""
        index = np.asarray(index)
        return Dataset(W=self.W[index], A=self.A[index], Y=self.Y[index], delta=self.delta[index])


@dataclass(frozen=True)
class TestConfig:
    """Settings for one run of the flat-null test.

    ``lam`` is the total-variation bound of the box+TV class; ``math.inf``
    means unbounded. ``bandwidth_a`` / ``bandwidth_w`` override the
    rule-of-thumb bandwidths of the exposure density model.
    """

    __test__ = False  # keep pytest from collecting this class

    t: float = 25.0
    kappa: int = 20
    lam: float = 4.0
    class_kind: ClassKind = ClassKind.INDICATOR
    num_null_draws: int = 1000
    alpha: float = 0.05
    seed: int = 0
    density_floor: float = 1e-3
    bandwidth_a: float | None = None
    bandwidth_w: tuple | None = None
    monotone_method: str = "exact"

    def __post_init__(self):
        object.__setattr__(self, "class_kind", ClassKind.parse(self.class_kind))
        if self.bandwidth_w is not None:
            object.__setattr__(self, "bandwidth_w", tuple(float(b) for b in self.bandwidth_w))
        problems = []
        if not (self.t > 0 and math.isfinite(self.t)):
            problems.append("evaluation time t must be positive and finite")
        if int(self.kappa) != self.kappa or self.kappa < 2:
            problems.append("kappa must be an integer >= 2")
        if not self.lam > 0:
            problems.append("lambda must be positive")
        if int(self.num_null_draws) != self.num_null_draws or self.num_null_draws < 1:
            problems.append("number of null draws must be >= 1")
        if not 0 < self.alpha < 1:
            problems.append("alpha must lie in (0, 1)")
        if not self.density_floor > 0:
            problems.append("density floor must be positive")
        if not 0 <= int(self.seed) < 2**64:
            problems.append("seed must be a 64-bit unsigned integer")
        if self.monotone_method not in ("exact", "projected_gradient"):
            problems.append("monotone_method must be 'exact' or 'projected_gradient'")
        if problems:
            raise ValidationError(problems)

    def replace(self, **changes) -> "TestConfig":
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "kappa": int(self.kappa),
            "lambda": "inf" if math.isinf(self.lam) else self.lam,
            "class_kind": self.class_kind.value,
            "num_null_draws": int(self.num_null_draws),
            "alpha": self.alpha,
            "seed": int(self.seed),
            "density_floor": self.density_floor,
            "monotone_method": self.monotone_method,
        }


def validate(dataset: Dataset, config: TestConfig) -> list[str]:
    """Check that ``config`` can be run on ``dataset``.

    Raises :class:`ValidationError` listing every failed check. Returns a list
    of warnings (possibly empty). Never modifies the dataset.
    """
    problems = []
    warnings_ = []
    if dataset.n == 0:
        problems.append("dataset is empty")
    else:
        lo, hi = dataset.exposure_range
        if not lo < hi:
            problems.append("degenerate exposure range")
        y_max = float(dataset.Y.max())
        if not config.t < y_max:
            problems.append("evaluation time beyond follow-up")
        elif not np.any(dataset.Y >= config.t):
            problems.append("no subject at risk at the evaluation time")
        if config.bandwidth_w is not None and len(config.bandwidth_w) != dataset.d:
            problems.append("bandwidth_w length must match the covariate dimension")
    if problems:
        raise ValidationError(problems)

    if not np.any((dataset.delta == 1) & (dataset.Y <= config.t)):
        warnings_.append("no events before t; statistic degenerate")
    for msg in warnings_:
        log.warning(msg)
    return warnings_


def _format_float(x: float) -> str:
    return repr(float(x))


def load_csv(path) -> Dataset:
    """Read a dataset with header ``w1..wd, a, y, delta`` (any column order)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        problems = []
        for col in ("a", "y", "delta"):
            if col not in header:
                problems.append(f"missing column {col!r}")
        w_cols = sorted((int(m.group(1)), i) for i, h in enumerate(header)
                        if (m := _W_COLUMN.match(h)))
        if [k for k, _ in w_cols] != list(range(1, len(w_cols) + 1)):
            problems.append("covariate columns must be named w1..wd without gaps")
        unknown = [h for h in header if h not in ("a", "y", "delta") and not _W_COLUMN.match(h)]
        if unknown:
            problems.append(f"unknown columns {unknown}")
        if problems:
            raise ValidationError(problems)

        ia, iy, idelta = header.index("a"), header.index("y"), header.index("delta")
        iw = [i for _, i in w_cols]
        W, A, Y, D = [], [], [], []
        for rownum, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                problems.append(f"row {rownum}: expected {len(header)} fields, got {len(row)}")
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                bad = next(c for c in row if not _is_number(c))
                problems.append(f"row {rownum}: non-numeric cell {bad!r}")
                continue
            if not all(math.isfinite(v) for v in vals):
                problems.append(f"row {rownum}: non-finite value")
                continue
            if vals[idelta] not in (0.0, 1.0):
                problems.append(f"row {rownum}: delta must be 0 or 1, got {row[idelta].strip()}")
            if vals[iy] < 0:
                problems.append(f"row {rownum}: negative follow-up time {row[iy].strip()}")
            W.append([vals[i] for i in iw])
            A.append(vals[ia])
            Y.append(vals[iy])
            D.append(int(vals[idelta]))
        if problems:
            raise ValidationError(problems)
    if not A:
        raise ValidationError(f"{path}: no data rows")
    return Dataset(W=np.array(W, dtype=np.float64).reshape(len(A), len(iw)), A=A, Y=Y, delta=D)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def save_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` so that :func:`load_csv` restores it bit-for-bit."""
    header = [f"w{j + 1}" for j in range(dataset.d)] + ["a", "y", "delta"]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n):
            writer.writerow([_format_float(v) for v in dataset.W[i]]
                            + [_format_float(dataset.A[i]), _format_float(dataset.Y[i]),
                               str(int(dataset.delta[i]))])


def write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")
