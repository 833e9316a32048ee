"""Post-training diagnostics: conditional discrepancies and reports.

The central quantity is the biased two-sample kernel discrepancy
between generator output at a fixed conditioning point and fresh draws
from the true conditional law.  Reports serialize to versioned JSON
with deterministic bytes (sorted keys, no wall-clock fields), so equal
inputs give equal files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .datasets import ConditionalTask, Dataset, true_conditional_sample
from .ecmmd import EcmmdInputs, ecmmd_hat, mmd2_vstat
from .generator import GeneratorNet, NoiseSpec, generate, sample_noise
from .kernels import KernelConfig
from .knn_graph import build_knn_graph
from .rng import make_rng, spawn_seeds

REPORT_SCHEMA_VERSION = 1

# jsonschema document for serialized reports; tests validate against it.
REPORT_JSON_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "kernel", "seed", "sample_sizes", "grid"],
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "kernel": {
            "type": "object",
            "required": ["family", "bandwidth"],
            "properties": {
                "family": {"enum": ["gaussian", "laplace"]},
                "bandwidth": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "seed": {"type": "integer"},
        "sample_sizes": {
            "type": "object",
            "required": ["n_gen", "n_true"],
            "properties": {
                "n_gen": {"type": "integer", "minimum": 1},
                "n_true": {"type": "integer", "minimum": 1},
            },
        },
        "grid": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["x", "mmd2"],
                "properties": {
                    "x": {"type": "array", "items": {"type": "number"}},
                    "mmd2": {"type": "number"},
                    "baseline_mmd2": {"type": ["number", "null"]},
                },
            },
        },
        "holdout": {
            "type": ["object", "null"],
            "required": ["ecmmd", "k", "n"],
            "properties": {
                "ecmmd": {"type": "number"},
                "k": {"type": "integer", "minimum": 1},
                "n": {"type": "integer", "minimum": 2},
            },
        },
        "task": {"type": ["object", "null"]},
        "checkpoint_sha256": {"type": ["string", "null"]},
        "config": {"type": ["object", "null"]},
    },
}


@dataclass(frozen=True)
class ConditionalMmdPoint:
    """Discrepancy at one conditioning point, optionally with a baseline."""

    x: tuple[float, ...]
    mmd2: float
    baseline_mmd2: float | None = None


@dataclass(frozen=True)
class EvalReport:
    """Versioned, JSON-serializable evaluation summary."""

    kernel: KernelConfig
    seed: int
    n_gen: int
    n_true: int
    grid: tuple[ConditionalMmdPoint, ...] = ()
    holdout_ecmmd: float | None = None
    holdout_k: int | None = None
    holdout_n: int | None = None
    task: dict | None = None
    checkpoint_sha256: str | None = None
    config: dict | None = None
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_json(self) -> str:
        """Deterministic JSON text (sorted keys, two-space indent)."""
        holdout = None
        if self.holdout_ecmmd is not None:
            holdout = {"ecmmd": self.holdout_ecmmd, "k": self.holdout_k, "n": self.holdout_n}
        doc = {
            "schema_version": self.schema_version,
            "kernel": {"family": self.kernel.family, "bandwidth": self.kernel.bandwidth},
            "seed": self.seed,
            "sample_sizes": {"n_gen": self.n_gen, "n_true": self.n_true},
            "grid": [
                {"x": list(pt.x), "mmd2": pt.mmd2, "baseline_mmd2": pt.baseline_mmd2}
                for pt in self.grid
            ],
            "holdout": holdout,
            "task": self.task,
            "checkpoint_sha256": self.checkpoint_sha256,
            "config": self.config,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        version = doc.get("schema_version")
        if version != REPORT_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported report schema version {version!r}; "
                f"this build reads version {REPORT_SCHEMA_VERSION}"
            )
        holdout = doc.get("holdout")
        return cls(
            kernel=KernelConfig(doc["kernel"]["family"], doc["kernel"]["bandwidth"]),
            seed=doc["seed"],
            n_gen=doc["sample_sizes"]["n_gen"],
            n_true=doc["sample_sizes"]["n_true"],
            grid=tuple(
                ConditionalMmdPoint(
                    x=tuple(pt["x"]), mmd2=pt["mmd2"], baseline_mmd2=pt.get("baseline_mmd2")
                )
                for pt in doc.get("grid", [])
            ),
            holdout_ecmmd=holdout["ecmmd"] if holdout else None,
            holdout_k=holdout["k"] if holdout else None,
            holdout_n=holdout["n"] if holdout else None,
            task=doc.get("task"),
            checkpoint_sha256=doc.get("checkpoint_sha256"),
            config=doc.get("config"),
        )


def conditional_mmd_at(
    net: GeneratorNet,
    task: ConditionalTask,
    x,
    *,
    n_gen: int,
    n_true: int,
    kernel: KernelConfig,
    seed: int,
) -> float:
    """Squared discrepancy between generated and true responses at ``x``.

    Draws ``n_gen`` one-shot generator samples (fresh noise) and
    ``n_true`` true conditional samples, both pinned to children of
    ``seed``, and compares them with the biased V-statistic.
    """
    if n_gen < 1 or n_true < 1:
        raise ValueError("n_gen and n_true must be positive")
    noise_seed, true_seed = spawn_seeds(seed, 2)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    eta = sample_noise(NoiseSpec(net.config.m), n_gen, noise_seed)
    fake = generate(net, eta, np.tile(x, (n_gen, 1)))
    real = true_conditional_sample(task, x, n_true, true_seed)
    return mmd2_vstat(kernel, fake, real)


def ecmmd_on_holdout(
    net: GeneratorNet, holdout: Dataset, kernel: KernelConfig, k: int, seed: int
) -> float:
    """Estimator value on held-out data with fresh generator noise."""
    eta = sample_noise(NoiseSpec(net.config.m), holdout.n, seed)
    z = generate(net, eta, holdout.x)
    graph = build_knn_graph(holdout.x, k)
    return ecmmd_hat(EcmmdInputs(graph=graph, y=holdout.y, z=z, kernel=kernel))


def mmd_permutation_pvalue(
    kernel: KernelConfig, a: np.ndarray, b: np.ndarray, n_permutations: int, seed: int
) -> float:
    """Permutation p-value for 'same distribution' under the V-statistic.

    Includes the identity permutation in the numerator and denominator,
    so the result lies in ``(0, 1]`` and identical samples give ``1.0``.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be positive")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    observed = mmd2_vstat(kernel, a, b)
    pooled = np.vstack([a, b])
    na = a.shape[0]
    rng = make_rng(seed)
    exceed = 0
    for _ in range(n_permutations):
        perm = rng.permutation(pooled.shape[0])
        stat = mmd2_vstat(kernel, pooled[perm[:na]], pooled[perm[na:]])
        exceed += stat >= observed
    return (1 + exceed) / (1 + n_permutations)


def evaluate_generator(
    net: GeneratorNet,
    kernel: KernelConfig,
    seed: int,
    *,
    task: ConditionalTask | None = None,
    x_grid: list | None = None,
    n_gen: int = 1000,
    n_true: int = 1000,
    baseline_net: GeneratorNet | None = None,
    holdout: Dataset | None = None,
    holdout_k: int = 8,
    checkpoint_sha256: str | None = None,
    config: dict | None = None,
) -> EvalReport:
    """Run the requested diagnostics and collect them into a report.

    At least one of ``task`` (with ``x_grid``) or ``holdout`` must be
    given.  When a ``baseline_net`` is supplied, each grid point also
    records its discrepancy under the same seeds, isolating the effect
    of training.
    """
    if task is None and holdout is None:
        raise ValueError("nothing to evaluate: provide a task with x_grid and/or a holdout set")
    if task is not None and not x_grid:
        raise ValueError("task evaluation requires a non-empty x_grid")

    grid_points: list[ConditionalMmdPoint] = []
    task_doc = None
    if task is not None:
        point_seeds = spawn_seeds(seed, len(x_grid))
        for x, pseed in zip(x_grid, point_seeds):
            xvec = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=np.float64)))
            value = conditional_mmd_at(
                net, task, x, n_gen=n_gen, n_true=n_true, kernel=kernel, seed=pseed
            )
            base = None
            if baseline_net is not None:
                base = conditional_mmd_at(
                    baseline_net, task, x, n_gen=n_gen, n_true=n_true, kernel=kernel, seed=pseed
                )
            grid_points.append(ConditionalMmdPoint(x=xvec, mmd2=value, baseline_mmd2=base))
        task_doc = {
            "kind": task.kind,
            "sigma": task.sigma,
            "slope": task.slope,
            "intercept": task.intercept,
            "scale": task.scale,
        }

    holdout_value = holdout_n = holdout_k_used = None
    if holdout is not None:
        holdout_seed = spawn_seeds(seed, len(x_grid or []) + 1)[-1]
        holdout_value = ecmmd_on_holdout(net, holdout, kernel, holdout_k, holdout_seed)
        holdout_n = holdout.n
        holdout_k_used = holdout_k

    return EvalReport(
        kernel=kernel,
        seed=seed,
        n_gen=n_gen,
        n_true=n_true,
        grid=tuple(grid_points),
        holdout_ecmmd=holdout_value,
        holdout_k=holdout_k_used,
        holdout_n=holdout_n,
        task=task_doc,
        checkpoint_sha256=checkpoint_sha256,
        config=config,
    )
