"""Minimal reverse-mode differentiation for the batch training loss.

A ``Tape`` records a graph of dense float64 operations — affine maps,
ReLU, sigmoid, column concatenation, pairwise squared distances, exp,
constant scaling, and masked sums — which is exactly the vocabulary
needed to push the neighbor-averaged discrepancy loss through a
feed-forward generator.  ``backward`` replays the tape once and
returns gradients for the declared parameter leaves.

Everything is plain numpy; there is no broadcasting beyond what the
listed ops define, and pairwise distances are differentiated without
ever materialising the ``(n, m, q)`` difference tensor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .generator import GeneratorNet
from .kernels import KernelConfig
from .knn_graph import KnnGraph

_SQDIST_BLOCK_ROWS = 1024


@dataclass
class Node:
    """One tape record: a value, parent node ids, and a vector-Jacobian rule."""

    value: np.ndarray
    parents: tuple[int, ...]
    vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None


@dataclass(frozen=True)
class BatchView:
    """Aligned predictor/response/noise rows for one training batch."""

    x: np.ndarray
    y: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        eta = np.asarray(self.eta, dtype=np.float64)
        if x.ndim != 2 or y.ndim != 2 or eta.ndim != 2:
            raise ValueError("batch arrays must be 2-D")
        if not (x.shape[0] == y.shape[0] == eta.shape[0]):
            raise ValueError(
                f"row counts differ: x {x.shape[0]}, y {y.shape[0]}, eta {eta.shape[0]}"
            )
        for name, arr in (("x", x), ("y", y), ("eta", eta)):
            if not np.isfinite(arr).all():
                raise ValueError(f"batch array {name} contains non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "eta", eta)


class Tape:
    """Append-only op recorder; node handles are integer indices."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.param_ids: list[int] = []
        self.root: int | None = None
        self._consumed = False

    def value(self, nid: int) -> np.ndarray:
        return self.nodes[nid].value

    def _push(self, value, parents=(), vjp=None) -> int:
        self.nodes.append(Node(np.asarray(value, dtype=np.float64), tuple(parents), vjp))
        return len(self.nodes) - 1

    # -- leaves ---------------------------------------------------------

    def constant(self, value) -> int:
        return self._push(value)

    def param(self, value) -> int:
        nid = self._push(value)
        self.param_ids.append(nid)
        return nid

    # -- ops ------------------------------------------------------------

    def matmul(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        out = av @ bv

        def vjp(g):
            return g @ bv.T, av.T @ g

        return self._push(out, (a, b), vjp)

    def add_bias(self, a: int, b: int) -> int:
        """Add a length-k bias row to every row of an (n, k) matrix."""
        av, bv = self.value(a), self.value(b)
        out = av + bv[None, :]

        def vjp(g):
            return g, g.sum(axis=0)

        return self._push(out, (a, b), vjp)

    def relu(self, a: int) -> int:
        av = self.value(a)
        out = np.maximum(av, 0.0)
        mask = av > 0.0  # derivative at exactly zero is zero

        def vjp(g):
            return (g * mask,)

        return self._push(out, (a,), vjp)

    def sigmoid(self, a: int) -> int:
        av = self.value(a)
        out = np.empty_like(av)
        pos = av >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
        e = np.exp(av[~pos])
        out[~pos] = e / (1.0 + e)

        def vjp(g):
            return (g * out * (1.0 - out),)

        return self._push(out, (a,), vjp)

    def concat_cols(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        out = np.concatenate([av, bv], axis=1)
        split = av.shape[1]

        def vjp(g):
            return g[:, :split], g[:, split:]

        return self._push(out, (a, b), vjp)

    def pairwise_sqdist(self, a: int, b: int) -> int:
        """D[i, j] = ||a_i - b_j||^2 from explicit coordinate differences."""
        av, bv = self.value(a), self.value(b)
        n = av.shape[0]
        out = np.empty((n, bv.shape[0]), dtype=np.float64)
        for start in range(0, n, _SQDIST_BLOCK_ROWS):
            stop = min(start + _SQDIST_BLOCK_ROWS, n)
            diff = av[start:stop, None, :] - bv[None, :, :]
            out[start:stop] = np.sum(diff * diff, axis=-1)

        def vjp(g):
            ga = 2.0 * (av * g.sum(axis=1)[:, None] - g @ bv)
            gb = 2.0 * (bv * g.sum(axis=0)[:, None] - g.T @ av)
            return ga, gb

        return self._push(out, (a, b), vjp)

    def exp(self, a: int) -> int:
        out = np.exp(self.value(a))

        def vjp(g):
            return (g * out,)

        return self._push(out, (a,), vjp)

    def scale(self, a: int, c: float) -> int:
        c = float(c)

        def vjp(g):
            return (g * c,)

        return self._push(self.value(a) * c, (a,), vjp)

    def add(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        if av.shape != bv.shape:
            raise ValueError(f"add expects equal shapes, got {av.shape} and {bv.shape}")

        def vjp(g):
            return g, g

        return self._push(av + bv, (a, b), vjp)

    def sub(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        if av.shape != bv.shape:
            raise ValueError(f"sub expects equal shapes, got {av.shape} and {bv.shape}")

        def vjp(g):
            return g, -g

        return self._push(av - bv, (a, b), vjp)

    def masked_sum(self, a: int, mask: np.ndarray) -> int:
        """Scalar sum of the entries selected by a fixed 0/1 mask."""
        av = self.value(a)
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != av.shape:
            raise ValueError(f"mask shape {mask.shape} != value shape {av.shape}")
        out = np.float64(np.sum(av * mask))

        def vjp(g):
            return (g * mask,)

        return self._push(out, (a,), vjp)


def backward(tape: Tape) -> list[np.ndarray]:
    """Gradients of the tape's root with respect to its parameter leaves.

    Single reverse sweep in creation order (parents always precede
    children, so that order is topological).  A tape can be consumed
    once; a second call raises.
    """
    if tape._consumed:
        raise RuntimeError("tape already consumed by a previous backward pass")
    if tape.root is None:
        raise RuntimeError("tape has no root; run a forward loss first")
    tape._consumed = True
    root = tape.nodes[tape.root]
    if root.value.shape != ():
        raise ValueError("backward requires a scalar root")
    grads: dict[int, np.ndarray] = {tape.root: np.float64(1.0)}
    for nid in range(tape.root, -1, -1):
        node = tape.nodes[nid]
        if node.vjp is None:
            continue  # leaf: any accumulated gradient stays for collection
        g = grads.pop(nid, None)
        if g is None:
            continue
        for pid, pg in zip(node.parents, node.vjp(g)):
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
    return [
        np.asarray(grads.get(pid, np.zeros_like(tape.nodes[pid].value)), dtype=np.float64)
        for pid in tape.param_ids
    ]


def _adjacency_mask(graph: KnnGraph) -> np.ndarray:
    mask = np.zeros((graph.n, graph.n), dtype=np.float64)
    rows = np.repeat(np.arange(graph.n), graph.k)
    mask[rows, graph.out_neighbors.ravel()] = 1.0
    return mask


def forward_loss(
    net: GeneratorNet, batch: BatchView, kernel: KernelConfig, graph: KnnGraph
) -> tuple[float, Tape]:
    """Record the batch loss on a fresh tape and return (value, tape).

    The loss is the neighbor-averaged four-term statistic with the
    generator output ``z = net([eta, x])`` in the generated slot:

        (1 / (n k)) * sum_edges [K(y_i, y_j) - K(y_i, z_j)
                                 - K(z_i, y_j) + K(z_i, z_j)]

    Only the gaussian kernel family is differentiable here.  The value
    agrees with ``ecmmd_hat`` on the same inputs to float accuracy.
    """
    if kernel.family != "gaussian":
        raise ValueError("forward_loss supports only the gaussian kernel family")
    cfg = net.config
    if batch.eta.shape[1] != cfg.m or batch.x.shape[1] != cfg.d or batch.y.shape[1] != cfg.p:
        raise ValueError(
            f"batch dims (d={batch.x.shape[1]}, m={batch.eta.shape[1]}, p={batch.y.shape[1]}) "
            f"do not match generator (d={cfg.d}, m={cfg.m}, p={cfg.p})"
        )
    n = batch.x.shape[0]
    if graph.n != n:
        raise ValueError(f"graph has {graph.n} vertices but batch has {n} rows")

    tape = Tape()
    y = tape.constant(batch.y)
    h = tape.concat_cols(tape.constant(batch.eta), tape.constant(batch.x))
    params = net.parameters()
    last = len(net.weights) - 1
    for li in range(last + 1):
        w = tape.param(params[2 * li])
        b = tape.param(params[2 * li + 1])
        h = tape.add_bias(tape.matmul(h, w), b)
        if li < last:
            h = tape.relu(h)
        elif cfg.output_activation == "sigmoid":
            h = tape.sigmoid(h)
        if not np.isfinite(tape.value(h)).all():
            raise ValueError(f"non-finite activation after layer {li}")
    z = h

    coeff = -1.0 / (2.0 * kernel.bandwidth * kernel.bandwidth)
    k_yy = tape.exp(tape.scale(tape.pairwise_sqdist(y, y), coeff))
    k_yz = tape.exp(tape.scale(tape.pairwise_sqdist(y, z), coeff))
    k_zz = tape.exp(tape.scale(tape.pairwise_sqdist(z, z), coeff))

    mask = _adjacency_mask(graph)
    cross = tape.add(tape.masked_sum(k_yz, mask), tape.masked_sum(k_yz, mask.T))
    total = tape.add(tape.sub(tape.masked_sum(k_yy, mask), cross), tape.masked_sum(k_zz, mask))
    loss = tape.scale(total, 1.0 / (n * graph.k))
    tape.root = loss
    value = float(tape.value(loss))
    if not np.isfinite(value):
        raise ValueError("non-finite loss value")
    return value, tape


def finite_diff_gradient(
    net: GeneratorNet,
    batch: BatchView,
    kernel: KernelConfig,
    graph: KnnGraph,
    step: float = 1e-5,
) -> list[np.ndarray]:
    """Central-difference gradient of the batch loss, one coordinate at a time.

    Exists to cross-check ``backward``; cost is two forward passes per
    scalar parameter, so keep the nets small.
    """
    from .generator import net_from_parameters

    base = [p.copy() for p in net.parameters()]
    grads = [np.zeros_like(p) for p in base]
    for pi, p in enumerate(base):
        flat = p.reshape(-1)
        gflat = grads[pi].reshape(-1)
        for idx in range(flat.shape[0]):
            orig = flat[idx]
            flat[idx] = orig + step
            up, _ = forward_loss(net_from_parameters(net.config, base), batch, kernel, graph)
            flat[idx] = orig - step
            down, _ = forward_loss(net_from_parameters(net.config, base), batch, kernel, graph)
            flat[idx] = orig
            gflat[idx] = (up - down) / (2.0 * step)
    return grads
