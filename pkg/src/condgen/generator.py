"""One-shot conditional generator networks and checkpoint serialization.

The generator is a plain ReLU multi-layer perceptron mapping a
concatenated ``[noise, predictor]`` vector to a response in a single
forward pass — sampling never iterates.  Weights are He-initialized
(``std = sqrt(2 / fan_in)``), biases start at zero.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .rng import make_rng

CHECKPOINT_FORMAT = "condgen-checkpoint"
CHECKPOINT_VERSION = 1

OUTPUT_ACTIVATIONS = ("linear", "sigmoid")


class CheckpointError(ValueError):
    """Raised for unreadable, corrupted, or wrong-version checkpoints."""


@dataclass(frozen=True)
class NoiseSpec:
    """Dimension of the standard normal noise fed to the generator."""

    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"noise dimension must be positive, got {self.m}")


@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture of the generator network.

    ``d``/``m``/``p`` are the predictor, noise, and response dimensions;
    the input layer has width ``d + m``.  ``seed`` pins initialization.
    """

    d: int
    m: int
    p: int
    hidden: tuple[int, ...] = (64, 64)
    output_activation: str = "linear"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if min(self.d, self.m, self.p) < 1:
            raise ValueError("d, m, p must all be positive")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden must be a non-empty tuple of positive widths")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(
                f"output_activation must be one of {OUTPUT_ACTIVATIONS}, "
                f"got {self.output_activation!r}"
            )

    def layer_widths(self) -> list[int]:
        """Widths from input to output: ``[d + m, *hidden, p]``."""
        return [self.d + self.m, *self.hidden, self.p]

    def num_params(self) -> int:
        """Total parameter count ``sum_i w_i * (w_{i-1} + 1)``."""
        widths = self.layer_widths()
        return sum(w_out * (w_in + 1) for w_in, w_out in zip(widths[:-1], widths[1:]))


@dataclass(frozen=True)
class GeneratorNet:
    """A generator's architecture plus its weight and bias arrays.

    ``weights[i]`` has shape ``(w_in, w_out)`` and acts by right
    multiplication; the arrays are treated as immutable — optimizers
    produce new nets via ``net_from_parameters``.
    """

    config: GeneratorConfig
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        widths = self.config.layer_widths()
        expected = list(zip(widths[:-1], widths[1:]))
        if len(self.weights) != len(expected) or len(self.biases) != len(expected):
            raise ValueError(f"expected {len(expected)} layers, got {len(self.weights)}")
        for li, (w_in, w_out) in enumerate(expected):
            if self.weights[li].shape != (w_in, w_out):
                raise ValueError(
                    f"layer {li} weight shape {self.weights[li].shape} != ({w_in}, {w_out})"
                )
            if self.biases[li].shape != (w_out,):
                raise ValueError(f"layer {li} bias shape {self.biases[li].shape} != ({w_out},)")

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list, interleaved ``[W0, b0, W1, b1, ...]``."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def init_generator(config: GeneratorConfig) -> GeneratorNet:
    """He-initialized network drawn from the config's seed."""
    rng = make_rng(config.seed)
    widths = config.layer_widths()
    weights, biases = [], []
    for w_in, w_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.standard_normal((w_in, w_out)) * np.sqrt(2.0 / w_in))
        biases.append(np.zeros(w_out))
    return GeneratorNet(config=config, weights=tuple(weights), biases=tuple(biases))


def net_from_parameters(config: GeneratorConfig, params: list[np.ndarray]) -> GeneratorNet:
    """Rebuild a net from the interleaved list produced by ``parameters()``."""
    n_layers = len(config.layer_widths()) - 1
    if len(params) != 2 * n_layers:
        raise ValueError(f"expected {2 * n_layers} parameter arrays, got {len(params)}")
    return GeneratorNet(
        config=config, weights=tuple(params[0::2]), biases=tuple(params[1::2])
    )


def sample_noise(spec: NoiseSpec, n: int, seed: int) -> np.ndarray:
    """``(n, m)`` standard normal noise matrix, deterministic in the seed."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return make_rng(seed).standard_normal((n, spec.m))


def generate(net: GeneratorNet, eta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Responses for ``[eta, x]`` inputs in one forward pass.

    ``eta`` is ``(n, m)``, ``x`` is ``(n, d)``; the result is ``(n, p)``.
    Raises if the output contains non-finite values.
    """
    eta = np.asarray(eta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    cfg = net.config
    if eta.ndim != 2 or eta.shape[1] != cfg.m:
        raise ValueError(f"eta must be (n, {cfg.m}), got shape {eta.shape}")
    if x.ndim != 2 or x.shape[1] != cfg.d:
        raise ValueError(f"x must be (n, {cfg.d}), got shape {x.shape}")
    if eta.shape[0] != x.shape[0]:
        raise ValueError(f"row counts differ: eta has {eta.shape[0]}, x has {x.shape[0]}")
    h = np.concatenate([eta, x], axis=1)
    last = len(net.weights) - 1
    for li, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if li < last:
            h = np.maximum(h, 0.0)
        elif cfg.output_activation == "sigmoid":
            h = _sigmoid(h)
    if not np.isfinite(h).all():
        raise ValueError("generator produced non-finite outputs")
    return h


def _sigmoid(t: np.ndarray) -> np.ndarray:
    # evaluate on the negative half-line only, for overflow safety
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _array_record(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def _array_from_record(rec: dict, what: str) -> np.ndarray:
    try:
        raw = base64.b64decode(rec["data"].encode("ascii"), validate=True)
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        return arr.reshape(rec["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: bad {what} record ({exc})") from None


def _canonical_payload(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(net: GeneratorNet) -> bytes:
    """Serialize a net to a self-describing JSON byte string.

    Layout: a single JSON object with the format tag, version, the
    generator config, per-layer base64 little-endian float64 arrays,
    and a sha256 checksum over the canonical (sorted-keys, no
    whitespace) serialization of everything else.  Serialization is
    deterministic, so equal nets give equal bytes.
    """
    cfg = net.config
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": {
            "d": cfg.d,
            "m": cfg.m,
            "p": cfg.p,
            "hidden": list(cfg.hidden),
            "output_activation": cfg.output_activation,
            "seed": cfg.seed,
        },
        "layers": [
            {"weight": _array_record(w), "bias": _array_record(b)}
            for w, b in zip(net.weights, net.biases)
        ],
    }
    doc["checksum"] = hashlib.sha256(_canonical_payload(doc)).hexdigest()
    return _canonical_payload(doc)


def load_checkpoint(data: bytes) -> GeneratorNet:
    """Inverse of ``save_checkpoint``; round-trips weights bitwise.

    Raises CheckpointError on malformed JSON, a missing or wrong format
    tag, an unsupported version, a checksum mismatch, or arrays that do
    not match the declared architecture.
    """
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("corrupt checkpoint: missing format tag")
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version!r}; this build reads version "
            f"{CHECKPOINT_VERSION}"
        )
    stored = doc.pop("checksum", None)
    actual = hashlib.sha256(_canonical_payload(doc)).hexdigest()
    if stored != actual:
        raise CheckpointError("corrupt checkpoint: checksum mismatch")
    try:
        c = doc["config"]
        config = GeneratorConfig(
            d=int(c["d"]),
            m=int(c["m"]),
            p=int(c["p"]),
            hidden=tuple(int(w) for w in c["hidden"]),
            output_activation=str(c["output_activation"]),
            seed=int(c["seed"]),
        )
        layers = doc["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: bad config ({exc})") from None
    if not isinstance(layers, list):
        raise CheckpointError("corrupt checkpoint: layers must be a list")
    weights, biases = [], []
    for li, rec in enumerate(layers):
        if not isinstance(rec, dict) or "weight" not in rec or "bias" not in rec:
            raise CheckpointError(f"corrupt checkpoint: layer {li} missing weight or bias")
        weights.append(_array_from_record(rec["weight"], f"layer {li} weight"))
        biases.append(_array_from_record(rec["bias"], f"layer {li} bias"))
    try:
        return GeneratorNet(config=config, weights=tuple(weights), biases=tuple(biases))
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None


def checkpoint_sha256(data: bytes) -> str:
    """Hex digest identifying a serialized checkpoint."""
    return hashlib.sha256(data).hexdigest()
