"""Minibatch training of one-shot generators against the neighbor loss.

One run: draw the full noise matrix once up front, then for each epoch
randomly partition the rows into batches, rebuild the k-nearest-neighbor
graph inside every batch, and take an AdamW step on the differentiable
batch loss.  All randomness (noise, shuffles) derives from the train
seed, so a (dataset, config) pair reproduces bit for bit.

AdamW follows the decoupled form: with gradient ``g`` at step ``t``,

    m = b1 m + (1 - b1) g          mhat = m / (1 - b1^t)
    v = b2 v + (1 - b2) g^2        vhat = v / (1 - b2^t)
    theta = theta (1 - lr wd) - lr mhat / (sqrt(vhat) + eps)

i.e. weight decay multiplies the parameter directly and never touches
the moment estimates.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import BatchView, backward, forward_loss
from .datasets import Dataset
from .generator import (
    GeneratorConfig,
    GeneratorNet,
    NoiseSpec,
    checkpoint_sha256,
    init_generator,
    net_from_parameters,
    sample_noise,
    save_checkpoint,
)
from .kernels import KernelConfig, median_heuristic_bandwidth
from .knn_graph import build_knn_graph
from .rng import make_rng, spawn_seeds


class TrainingDivergedError(RuntimeError):
    """Loss or activations stopped being finite."""


@dataclass(frozen=True)
class AdamWConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if not self.eps > 0.0:
            raise ValueError("eps must be positive")
        if not self.weight_decay >= 0.0:
            raise ValueError("weight_decay must be nonnegative")


@dataclass
class AdamWState:
    """Step count plus first/second moment accumulators, one per parameter."""

    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def init_like(cls, params: list[np.ndarray]) -> "AdamWState":
        return cls(
            step=0,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adamw_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamWState,
    cfg: AdamWConfig,
    lr: float,
) -> tuple[list[np.ndarray], AdamWState]:
    """One decoupled-decay AdamW update; returns fresh arrays and state.

    With zero gradients from a zero state this reduces exactly to
    ``theta * (1 - lr * weight_decay)``.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and state must have matching lengths")
    t = state.step + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        new_params.append(p * (1.0 - lr * cfg.weight_decay) - lr * update)
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamWState(step=t, m=new_m, v=new_v)


def default_k_batch(batch_size: int) -> int:
    """Per-batch neighbor count used when the config leaves it unset."""
    return max(4, math.ceil(batch_size ** (1.0 / 3.0)))


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``kernel`` is either an explicit KernelConfig or the string
    ``"median-auto"``, which resolves a gaussian bandwidth from the
    median pairwise response distance in the first batch seen.
    ``k_batch=None`` resolves to ``default_k_batch(batch_size)``.
    """

    epochs: int
    batch_size: int = 256
    k_batch: int | None = None
    learning_rate: float = 1e-3
    adamw: AdamWConfig = field(default_factory=AdamWConfig)
    kernel: KernelConfig | str = "median-auto"
    resample_noise: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        k = self.k_batch if self.k_batch is not None else default_k_batch(self.batch_size)
        if not 1 <= k <= self.batch_size - 1:
            raise ValueError(
                f"k_batch must satisfy 1 <= k <= batch_size - 1, got {k} "
                f"with batch_size={self.batch_size}"
            )
        if isinstance(self.kernel, str) and self.kernel != "median-auto":
            raise ValueError(f"kernel must be a KernelConfig or 'median-auto', got {self.kernel!r}")

    def resolved_k_batch(self) -> int:
        return self.k_batch if self.k_batch is not None else default_k_batch(self.batch_size)


@dataclass(frozen=True)
class StepRecord:
    step: int
    epoch: int
    loss: float
    wall_ms: float


@dataclass(frozen=True)
class TrainReport:
    """Everything observable about a finished run."""

    step_records: tuple[StepRecord, ...]
    epoch_mean_losses: tuple[float, ...]
    wall_time_s: float
    kernel: KernelConfig | None
    checkpoint_sha256: str


def batch_loss_and_grads(
    net: GeneratorNet, batch: BatchView, kernel: KernelConfig, k_batch: int
) -> tuple[float, list[np.ndarray]]:
    """Loss and parameter gradients for one batch, graph built in-batch."""
    if batch.x.shape[0] < k_batch + 1:
        raise ValueError(
            f"batch of {batch.x.shape[0]} rows cannot support k_batch={k_batch}"
        )
    graph = build_knn_graph(batch.x, k_batch)
    loss, tape = forward_loss(net, batch, kernel, graph)
    return loss, backward(tape)


def train(
    dataset: Dataset, gen_config: GeneratorConfig, config: TrainConfig
) -> tuple[GeneratorNet, TrainReport]:
    """Fit a generator to ``dataset`` and report per-step losses.

    The noise matrix is drawn once before the first epoch (redrawn per
    epoch only when ``resample_noise`` is set); each epoch shuffles the
    rows and walks them in batches of ``batch_size``.  A trailing
    partial batch still yields a step unless it is too small to carry a
    ``k_batch``-neighbor graph, in which case it is dropped.  Raises
    TrainingDivergedError if a loss or activation stops being finite,
    naming the step.
    """
    if gen_config.d != dataset.d or gen_config.p != dataset.p:
        raise ValueError(
            f"generator dims (d={gen_config.d}, p={gen_config.p}) do not match "
            f"dataset (d={dataset.d}, p={dataset.p})"
        )
    if config.batch_size > dataset.n:
        raise ValueError(f"batch_size {config.batch_size} exceeds dataset size {dataset.n}")
    n = dataset.n
    b = config.batch_size
    k_batch = config.resolved_k_batch()
    noise_seed, shuffle_seed = spawn_seeds(config.seed, 2)
    spec = NoiseSpec(gen_config.m)
    eta_all = sample_noise(spec, n, noise_seed)
    epoch_noise_seeds = (
        spawn_seeds(noise_seed, config.epochs) if config.resample_noise and config.epochs else []
    )
    shuffle_rng = make_rng(shuffle_seed)

    params = init_generator(gen_config).parameters()
    opt_state = AdamWState.init_like(params)
    kernel = config.kernel if isinstance(config.kernel, KernelConfig) else None

    records: list[StepRecord] = []
    epoch_means: list[float] = []
    step = 0
    t_run = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        if config.resample_noise:
            eta_all = sample_noise(spec, n, epoch_noise_seeds[epoch - 1])
        perm = shuffle_rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, b):
            rows = perm[start : start + b]
            if rows.shape[0] < k_batch + 1:
                break  # trailing partial batch too small to carry a graph
            batch = BatchView(x=dataset.x[rows], y=dataset.y[rows], eta=eta_all[rows])
            if kernel is None:
                kernel = KernelConfig("gaussian", median_heuristic_bandwidth(batch.y))
            step += 1
            t_step = time.perf_counter()
            net = net_from_parameters(gen_config, params)
            try:
                loss, grads = batch_loss_and_grads(net, batch, kernel, k_batch)
            except ValueError as exc:
                if "non-finite" in str(exc):
                    raise TrainingDivergedError(f"step {step}: {exc}") from None
                raise
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"step {step}: non-finite loss {loss!r}")
            params, opt_state = adamw_step(params, grads, opt_state, config.adamw, config.learning_rate)
            wall_ms = (time.perf_counter() - t_step) * 1e3
            records.append(StepRecord(step=step, epoch=epoch, loss=loss, wall_ms=wall_ms))
            epoch_losses.append(loss)
        epoch_means.append(float(np.mean(epoch_losses)) if epoch_losses else math.nan)

    net = net_from_parameters(gen_config, params)
    report = TrainReport(
        step_records=tuple(records),
        epoch_mean_losses=tuple(epoch_means),
        wall_time_s=time.perf_counter() - t_run,
        kernel=kernel,
        checkpoint_sha256=checkpoint_sha256(save_checkpoint(net)),
    )
    return net, report
