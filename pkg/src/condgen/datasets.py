"""Synthetic conditional-law tasks and CSV dataset I/O.

All tasks share a standard normal predictor ``X``.  Responses:

* ``helix``:  ``Y1 = 2X + U sin(2U) + e1``, ``Y2 = 2X + U cos(2U) + e2``
* ``circle``: ``Y1 = X + 3 sin(U) + e1``,   ``Y2 = X + 3 cos(U) + e2``
* ``linear_gaussian``: ``Y = slope * X + intercept + scale * N(0, 1)``

with ``U ~ Uniform[0, 2 pi]`` and ``e1, e2 ~ N(0, sigma^2)`` drawn
independently.  Draw order inside one dataset is fixed (x, then u,
then e1, then e2, each as a whole vector) so a seed pins every value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import make_rng

TASK_KINDS = ("helix", "circle", "linear_gaussian")


@dataclass(frozen=True)
class ConditionalTask:
    """A named conditional law Y | X with its noise parameters."""

    kind: str
    sigma: float = 0.0
    slope: float = 1.0
    intercept: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}; expected one of {TASK_KINDS}")
        if not self.sigma >= 0.0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.kind == "linear_gaussian" and not self.scale > 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class DatasetMeta:
    task: str
    sigma: float | None = None
    seed: int | None = None


@dataclass(frozen=True)
class Dataset:
    """Aligned predictor and response arrays plus provenance."""

    x: np.ndarray
    y: np.ndarray
    meta: DatasetMeta

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 2 or y.ndim != 2:
            raise ValueError("x and y must be 2-D arrays")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"row counts differ: x has {x.shape[0]}, y has {y.shape[0]}")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValueError("dataset contains non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]


def task_dims(task: ConditionalTask) -> tuple[int, int]:
    """(predictor dim, response dim) of a task."""
    return (1, 1) if task.kind == "linear_gaussian" else (1, 2)


def helix_curve(x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return 2.0 * x + u * np.sin(2.0 * u), 2.0 * x + u * np.cos(2.0 * u)


def circle_curve(x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return x + 3.0 * np.sin(u), x + 3.0 * np.cos(u)


def sample_predictors(task: ConditionalTask, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` predictors from the task's marginal (standard normal)."""
    if n < 1:
        raise ValueError("n must be positive")
    return rng.standard_normal((n, 1))


def conditional_sample_given(
    task: ConditionalTask, x: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One response per row of ``x``, drawn from the task's conditional law."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != task_dims(task)[0]:
        raise ValueError(f"x must be (n, {task_dims(task)[0]}), got shape {x.shape}")
    n = x.shape[0]
    x0 = x[:, 0]
    if task.kind == "linear_gaussian":
        y = task.slope * x0 + task.intercept + task.scale * rng.standard_normal(n)
        return y[:, None]
    u = rng.uniform(0.0, 2.0 * math.pi, n)
    e1 = task.sigma * rng.standard_normal(n)
    e2 = task.sigma * rng.standard_normal(n)
    curve = helix_curve if task.kind == "helix" else circle_curve
    y1, y2 = curve(x0, u)
    return np.column_stack([y1 + e1, y2 + e2])


def true_conditional_sample(task: ConditionalTask, x, n: int, seed: int) -> np.ndarray:
    """``n`` independent responses at the single conditioning point ``x``."""
    if n < 1:
        raise ValueError("n must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    d = task_dims(task)[0]
    if x.shape != (d,):
        raise ValueError(f"conditioning point must have shape ({d},), got {x.shape}")
    return conditional_sample_given(task, np.tile(x, (n, 1)), make_rng(seed))


def _sample_task(task: ConditionalTask, n: int, seed: int) -> Dataset:
    rng = make_rng(seed)
    x = sample_predictors(task, n, rng)
    y = conditional_sample_given(task, x, rng)
    meta_sigma = task.scale if task.kind == "linear_gaussian" else task.sigma
    return Dataset(x=x, y=y, meta=DatasetMeta(task=task.kind, sigma=meta_sigma, seed=seed))


def gen_helix(n: int, sigma: float, seed: int) -> Dataset:
    """Sample a helix dataset; ``sigma == 0`` puts points exactly on the curve."""
    return _sample_task(ConditionalTask("helix", sigma=sigma), n, seed)


def gen_circle(n: int, sigma: float, seed: int) -> Dataset:
    return _sample_task(ConditionalTask("circle", sigma=sigma), n, seed)


def gen_linear_gaussian(
    n: int, slope: float, intercept: float, scale: float, seed: int
) -> Dataset:
    return _sample_task(
        ConditionalTask("linear_gaussian", slope=slope, intercept=intercept, scale=scale), n, seed
    )


def save_csv(dataset: Dataset, path) -> None:
    """Write ``x0..x{d-1},y0..y{p-1}`` rows in full round-trip precision.

    UTF-8, LF line endings, one header row; floats use Python's
    shortest round-trip representation so ``load_csv`` restores the
    exact same bits.
    """
    header = [f"x{i}" for i in range(dataset.d)] + [f"y{i}" for i in range(dataset.p)]
    rows = np.hstack([dataset.x, dataset.y])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_csv(path) -> Dataset:
    """Read a dataset written by ``save_csv`` (or any file matching its layout).

    Raises ValueError naming the offending line for a malformed header,
    a ragged row, or a non-numeric cell.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: line 1: empty file, expected a header row")
    header = lines[0].split(",")
    d = _count_prefixed(header, "x", 0)
    p = _count_prefixed(header, "y", d)
    if d < 1 or p < 1 or d + p != len(header):
        raise ValueError(
            f"{path}: line 1: header must be x0..x{{d-1}},y0..y{{p-1}}, got {lines[0]!r}"
        )
    data = np.empty((len(lines) - 1, d + p), dtype=np.float64)
    for ln, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != d + p:
            raise ValueError(f"{path}: line {ln}: expected {d + p} cells, got {len(cells)}")
        for j, cell in enumerate(cells):
            try:
                data[ln - 2, j] = float(cell)
            except ValueError:
                raise ValueError(f"{path}: line {ln}: non-numeric cell {cell!r}") from None
    return Dataset(x=data[:, :d], y=data[:, d:], meta=DatasetMeta(task="external"))


def _count_prefixed(header: list[str], prefix: str, start: int) -> int:
    count = 0
    while start + count < len(header) and header[start + count] == f"{prefix}{count}":
        count += 1
    return count
