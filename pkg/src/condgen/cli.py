"""Command-line entry points: train, sample, eval, estimate.

Option values resolve as built-in defaults, overridden by a JSON config
file (``--config``), overridden by explicit flags.  The resolved
options (minus execution details like ``--out``/``--threads``) are
embedded in every output artifact, and unknown config keys are
rejected.  Exit codes: 0 success, 2 usage errors (bad flags, bad
config keys), 1 runtime failures (missing files, corrupt checkpoints,
diverged training).

All outputs are deterministic given the seed: reports and estimates
carry no wall-clock fields, and the per-step ``wall_ms`` values in the
training metrics are the only non-reproducible bytes anywhere.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

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
from .ecmmd import EcmmdInputs, ecmmd_hat, ecmmd_hat_discrete
from .evaluation import evaluate_generator
from .generator import (
    GeneratorConfig,
    NoiseSpec,
    checkpoint_sha256,
    generate,
    init_generator,
    load_checkpoint,
    sample_noise,
    save_checkpoint,
)
from .kernels import KernelConfig, median_heuristic_bandwidth
from .knn_graph import build_knn_graph
from .rng import spawn_seeds
from .trainer import AdamWConfig, TrainConfig, train

PROG = "condgen"


class UsageError(Exception):
    """User-fixable invocation problem; maps to exit code 2."""


_COMMON = {"config": None, "seed": 0, "threads": None, "out": None}

_OPTION_SPECS: dict[str, dict] = {
    "train": {
        **_COMMON,
        "task": None,
        "data": None,
        "n": 4000,
        "sigma": 0.2,
        "slope": 1.0,
        "intercept": 0.0,
        "scale": 1.0,
        "epochs": 200,
        "batch_size": 256,
        "k": None,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "weight_decay": 0.01,
        "hidden": "64,64",
        "noise_dim": 3,
        "output_activation": "linear",
        "bandwidth": "median-auto",
        "resample_noise": False,
    },
    "sample": {
        **_COMMON,
        "checkpoint": None,
        "x": None,
        "n": 1000,
    },
    "eval": {
        **_COMMON,
        "checkpoint": None,
        "task": None,
        "sigma": 0.2,
        "slope": 1.0,
        "intercept": 0.0,
        "scale": 1.0,
        "holdout": None,
        "x_grid": "-1.0,0.0,1.0",
        "n_gen": 1000,
        "n_true": 1000,
        "k": 8,
        "kernel": "gaussian",
        "bandwidth": "median-auto",
        "baseline": True,
    },
    "estimate": {
        **_COMMON,
        "a": None,
        "b": None,
        "k": None,
        "discrete": False,
        "kernel": "gaussian",
        "bandwidth": "median-auto",
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG, description="Train and probe one-shot conditional generators."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file supplying defaults for this command")
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--threads", type=int, help="cap BLAS thread pools")
        p.add_argument("--out", help="output path (a directory for train)")

    p = sub.add_parser("train", help="fit a generator to synthetic or CSV data")
    common(p)
    p.add_argument("--task", choices=["helix", "circle", "linear_gaussian"])
    p.add_argument("--data", help="training CSV (mutually exclusive with --task)")
    p.add_argument("--n", type=int, help="synthetic sample size")
    p.add_argument("--sigma", type=float, help="task noise level")
    p.add_argument("--slope", type=float)
    p.add_argument("--intercept", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--k", type=int, help="neighbors per batch (default: max(4, ceil(B^(1/3))))")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--hidden", help="comma-separated hidden widths, e.g. 64,64")
    p.add_argument("--noise-dim", dest="noise_dim", type=int)
    p.add_argument("--output-activation", dest="output_activation", choices=["linear", "sigmoid"])
    p.add_argument("--bandwidth", help="gaussian bandwidth or 'median-auto'")
    p.add_argument(
        "--resample-noise", dest="resample_noise", action=argparse.BooleanOptionalAction
    )

    p = sub.add_parser("sample", help="draw one-shot samples from a checkpoint")
    common(p)
    p.add_argument("--ckpt", "--checkpoint", dest="checkpoint")
    p.add_argument(
        "--x", action="append", help="conditioning point, comma-separated; repeatable"
    )
    p.add_argument("--n", type=int, help="samples per conditioning point")

    p = sub.add_parser("eval", help="score a checkpoint against a task or holdout CSV")
    common(p)
    p.add_argument("--ckpt", "--checkpoint", dest="checkpoint")
    p.add_argument("--task", choices=["helix", "circle", "linear_gaussian"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--slope", type=float)
    p.add_argument("--intercept", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--holdout", help="holdout CSV for the neighbor estimator")
    p.add_argument("--x-grid", dest="x_grid", help="comma-separated conditioning points")
    p.add_argument("--n-gen", dest="n_gen", type=int)
    p.add_argument("--n-true", dest="n_true", type=int)
    p.add_argument("--k", type=int, help="neighbors for the holdout estimator")
    p.add_argument("--kernel", choices=["gaussian", "laplace"])
    p.add_argument("--bandwidth")
    p.add_argument("--baseline", action=argparse.BooleanOptionalAction)

    p = sub.add_parser("estimate", help="run the estimator on two paired CSVs")
    common(p)
    p.add_argument("a", nargs="?", help="CSV with the first response sample")
    p.add_argument("b", nargs="?", help="CSV with the second response sample")
    p.add_argument("--k", type=int, help="neighbors (default: max(4, ceil(n^(1/3))))")
    p.add_argument("--discrete", action=argparse.BooleanOptionalAction)
    p.add_argument("--kernel", choices=["gaussian", "laplace"])
    p.add_argument("--bandwidth")
    return parser


def _resolve_options(args: argparse.Namespace) -> dict:
    spec = _OPTION_SPECS[args.command]
    file_cfg = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            file_cfg = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError(f"config file {path} must contain a JSON object")
        unknown = sorted(set(file_cfg) - set(spec))
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    resolved = {"command": args.command}
    for key, default in spec.items():
        if key == "config":
            resolved[key] = args.config
            continue
        flag = getattr(args, key, None)
        resolved[key] = flag if flag is not None else file_cfg.get(key, default)
    if resolved["out"] is None:
        raise UsageError("--out is required (flag or config key)")
    return resolved


def _parse_bandwidth(text) -> float | str:
    if isinstance(text, (int, float)):
        value = float(text)
    elif text == "median-auto":
        return "median-auto"
    else:
        try:
            value = float(text)
        except ValueError:
            raise UsageError(f"--bandwidth must be a number or 'median-auto', got {text!r}") from None
    if not value > 0:
        raise UsageError(f"--bandwidth must be positive, got {value}")
    return value


def _parse_floats(text, what: str) -> list[float]:
    try:
        return [float(tok) for tok in str(text).split(",") if tok != ""]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers, got {text!r}") from None


def _make_task(opts: dict) -> ConditionalTask:
    return ConditionalTask(
        kind=opts["task"],
        sigma=float(opts["sigma"]),
        slope=float(opts["slope"]),
        intercept=float(opts["intercept"]),
        scale=float(opts["scale"]),
    )


def _json_line(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(", ", ": ")) + "\n"


# keys that steer execution but not results; keeping them out of the
# artifacts preserves byte-identity across --out paths and --threads
_NON_RESULT_KEYS = ("command", "config", "threads", "out")


def _embeddable(opts: dict) -> dict:
    return {k: v for k, v in opts.items() if k not in _NON_RESULT_KEYS}


def _cmd_train(opts: dict) -> None:
    if (opts["task"] is None) == (opts["data"] is None):
        raise UsageError("exactly one of --task or --data is required")
    hidden = tuple(int(w) for w in _parse_floats(opts["hidden"], "--hidden"))
    bandwidth = _parse_bandwidth(opts["bandwidth"])
    data_seed, fit_seed, init_seed = spawn_seeds(int(opts["seed"]), 3)

    if opts["task"] is not None:
        task = _make_task(opts)
        n = int(opts["n"])
        if task.kind == "helix":
            dataset = gen_helix(n, task.sigma, data_seed)
        elif task.kind == "circle":
            dataset = gen_circle(n, task.sigma, data_seed)
        else:
            dataset = gen_linear_gaussian(n, task.slope, task.intercept, task.scale, data_seed)
    else:
        dataset = load_csv(opts["data"])

    gen_config = GeneratorConfig(
        d=dataset.d,
        m=int(opts["noise_dim"]),
        p=dataset.p,
        hidden=hidden,
        output_activation=opts["output_activation"],
        seed=init_seed,
    )
    train_config = TrainConfig(
        epochs=int(opts["epochs"]),
        batch_size=int(opts["batch_size"]),
        k_batch=None if opts["k"] is None else int(opts["k"]),
        learning_rate=float(opts["learning_rate"]),
        adamw=AdamWConfig(
            beta1=float(opts["beta1"]),
            beta2=float(opts["beta2"]),
            eps=float(opts["eps"]),
            weight_decay=float(opts["weight_decay"]),
        ),
        kernel=bandwidth if bandwidth == "median-auto" else KernelConfig("gaussian", bandwidth),
        resample_noise=bool(opts["resample_noise"]),
        seed=fit_seed,
    )
    net, report = train(dataset, gen_config, train_config)

    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_bytes = save_checkpoint(net)
    (out_dir / "model.ckpt").write_bytes(ckpt_bytes)

    resolved = _embeddable(opts)
    resolved["kernel_resolved"] = (
        None
        if report.kernel is None
        else {"family": report.kernel.family, "bandwidth": report.kernel.bandwidth}
    )
    resolved["dataset"] = {"n": dataset.n, "d": dataset.d, "p": dataset.p}
    with open(out_dir / "train_metrics.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_json_line({"config": resolved}))
        for rec in report.step_records:
            fh.write(
                _json_line(
                    {
                        "step": rec.step,
                        "epoch": rec.epoch,
                        "loss": rec.loss,
                        "wall_ms": rec.wall_ms,
                    }
                )
            )
    final = report.epoch_mean_losses[-1] if report.epoch_mean_losses else math.nan
    print(
        f"trained {len(report.step_records)} steps in {report.wall_time_s:.1f}s; "
        f"final epoch mean loss {final:.6g}; checkpoint {report.checkpoint_sha256[:12]} "
        f"-> {out_dir / 'model.ckpt'}"
    )


def _cmd_sample(opts: dict) -> None:
    if opts["checkpoint"] is None:
        raise UsageError("--ckpt is required")
    if not opts["x"]:
        raise UsageError("at least one --x conditioning point is required")
    net = load_checkpoint(Path(opts["checkpoint"]).read_bytes())
    d = net.config.d
    points = []
    raw = opts["x"] if isinstance(opts["x"], list) else [opts["x"]]
    for tok in raw:
        vec = _parse_floats(tok, "--x")
        if len(vec) != d:
            raise UsageError(f"--x {tok!r} has {len(vec)} coordinates, checkpoint expects {d}")
        points.append(vec)
    n = int(opts["n"])
    if n < 0:
        raise UsageError("--n must be nonnegative")
    seeds = spawn_seeds(int(opts["seed"]), len(points))
    xs, ys = [], []
    for vec, seed in zip(points, seeds):
        eta = sample_noise(NoiseSpec(net.config.m), n, seed)
        x_rows = np.tile(np.asarray(vec), (n, 1))
        ys.append(generate(net, eta, x_rows))
        xs.append(x_rows)
    dataset = Dataset(
        x=np.vstack(xs),
        y=np.vstack(ys),
        meta=DatasetMeta(task="sampled", seed=int(opts["seed"])),
    )
    out = Path(opts["out"])
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(dataset, out)
    print(f"wrote {dataset.n} rows ({len(points)} conditioning points) to {out}")


def _resolve_eval_kernel(opts, holdout, task, x_grid, seed) -> KernelConfig:
    bandwidth = _parse_bandwidth(opts["bandwidth"])
    if bandwidth != "median-auto":
        return KernelConfig(opts["kernel"], bandwidth)
    if holdout is not None:
        ref = holdout.y
    else:
        # pool a small true sample per grid point, pinned to the seed
        draws = [
            true_conditional_sample(task, x, 256, s)
            for x, s in zip(x_grid, spawn_seeds(seed ^ 0x5EED, len(x_grid)))
        ]
        ref = np.vstack(draws)
    return KernelConfig(opts["kernel"], median_heuristic_bandwidth(ref))


def _cmd_eval(opts: dict) -> None:
    if opts["checkpoint"] is None:
        raise UsageError("--ckpt is required")
    if opts["task"] is None and opts["holdout"] is None:
        raise UsageError("provide --task (with --x-grid) and/or --holdout")
    ckpt_bytes = Path(opts["checkpoint"]).read_bytes()
    net = load_checkpoint(ckpt_bytes)
    task = _make_task(opts) if opts["task"] is not None else None
    holdout = load_csv(opts["holdout"]) if opts["holdout"] is not None else None
    x_grid = _parse_floats(opts["x_grid"], "--x-grid") if task is not None else None
    seed = int(opts["seed"])
    kernel = _resolve_eval_kernel(opts, holdout, task, x_grid, seed)
    baseline_net = init_generator(net.config) if opts["baseline"] else None
    report = evaluate_generator(
        net,
        kernel,
        seed,
        task=task,
        x_grid=x_grid,
        n_gen=int(opts["n_gen"]),
        n_true=int(opts["n_true"]),
        baseline_net=baseline_net,
        holdout=holdout,
        holdout_k=int(opts["k"]),
        checkpoint_sha256=checkpoint_sha256(ckpt_bytes),
        config=_embeddable(opts),
    )
    out = Path(opts["out"])
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json(), encoding="utf-8")
    bits = []
    if report.grid:
        bits.append(f"mean grid mmd2 {np.mean([pt.mmd2 for pt in report.grid]):.6g}")
    if report.holdout_ecmmd is not None:
        bits.append(f"holdout estimate {report.holdout_ecmmd:.6g}")
    print(f"eval ok: {'; '.join(bits)} -> {out}")


def _cmd_estimate(opts: dict) -> None:
    if opts["a"] is None or opts["b"] is None:
        raise UsageError("estimate needs two CSV paths (positional or config keys a/b)")
    da = load_csv(opts["a"])
    db = load_csv(opts["b"])
    if da.x.shape != db.x.shape or not np.array_equal(da.x, db.x):
        raise ValueError("the two CSVs must carry identical x columns")
    if da.p != db.p:
        raise ValueError(f"response dimensions differ: {da.p} vs {db.p}")
    if da.n < 2:
        raise ValueError("need at least two rows to estimate")
    bandwidth = _parse_bandwidth(opts["bandwidth"])
    if bandwidth == "median-auto":
        bandwidth = median_heuristic_bandwidth(np.vstack([da.y, db.y]))
    kernel = KernelConfig(opts["kernel"], bandwidth)

    if opts["discrete"]:
        if da.d != 1:
            raise ValueError("--discrete requires a single x column of integer labels")
        labels_f = da.x[:, 0]
        if not np.all(labels_f == np.round(labels_f)):
            raise ValueError("--discrete requires integer-valued x labels")
        value = ecmmd_hat_discrete(labels_f.astype(np.int64), da.y, db.y, kernel)
        k_used = None
    else:
        k_used = int(opts["k"]) if opts["k"] is not None else max(4, math.ceil(da.n ** (1 / 3)))
        graph = build_knn_graph(da.x, k_used)
        value = ecmmd_hat(EcmmdInputs(graph=graph, y=da.y, z=db.y, kernel=kernel))

    doc = {
        "config": _embeddable(opts),
        "estimate": value,
        "n": da.n,
        "k": k_used,
        "discrete": bool(opts["discrete"]),
        "kernel": {"family": kernel.family, "bandwidth": kernel.bandwidth},
    }
    out = Path(opts["out"])
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"estimate {value:.6g} (n={da.n}) -> {out}")


_HANDLERS = {
    "train": _cmd_train,
    "sample": _cmd_sample,
    "eval": _cmd_eval,
    "estimate": _cmd_estimate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 2
    try:
        opts = _resolve_options(args)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    try:
        limit = None if opts["threads"] is None else int(opts["threads"])
        with threadpool_limits(limits=limit):
            _HANDLERS[args.command](opts)
        return 0
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
