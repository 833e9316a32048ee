"""condgen: one-shot conditional generators trained by a nearest-neighbor
kernel discrepancy, plus the estimator, oracles, and diagnostics around it."""

from .autodiff import BatchView, Tape, backward, finite_diff_gradient, forward_loss
from .datasets import (
    ConditionalTask,
    Dataset,
    DatasetMeta,
    gen_circle,
    gen_helix,
    gen_linear_gaussian,
    load_csv,
    save_csv,
    true_conditional_sample,
)
from .ecmmd import (
    EcmmdInputs,
    McEstimate,
    ecmmd_hat,
    ecmmd_hat_derandomized,
    ecmmd_hat_discrete,
    ecmmd_mc_oracle,
    mmd2_gaussian_analytic,
    mmd2_vstat,
)
from .evaluation import (
    EvalReport,
    conditional_mmd_at,
    ecmmd_on_holdout,
    evaluate_generator,
    mmd_permutation_pvalue,
)
from .generator import (
    CheckpointError,
    GeneratorConfig,
    GeneratorNet,
    NoiseSpec,
    generate,
    init_generator,
    load_checkpoint,
    sample_noise,
    save_checkpoint,
)
from .kernels import (
    KernelConfig,
    PairedSample,
    eval_kernel,
    gram_matrix,
    h_statistic,
    kernel_values,
    median_heuristic_bandwidth,
)
from .knn_graph import KnnGraph, build_knn_graph, degrees, neighbors
from .trainer import (
    AdamWConfig,
    AdamWState,
    TrainConfig,
    TrainReport,
    TrainingDivergedError,
    adamw_step,
    train,
)

__version__ = "0.1.0"
