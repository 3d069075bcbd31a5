"""The full model: one convolution layer, one max-pool layer, and a stack
of dense layers, trained by plain gradient descent on cross-entropy.

Also owns the binary model-file format. Everything here is deterministic:
a fixed seed fixes initialization, shuffle order, and therefore every
byte of every artifact a run produces.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, NamedTuple

import numpy as np

from . import tensor
from .activations import ActivationKind, apply, derivative
from .dataio import Dataset
from .errors import DomainError, ParseError, ShapeError, TruncationError
from .layers import (
    ConvGeometry,
    DenseLayer,
    ForwardTrace,
    KernelBank,
    PoolGeometry,
    conv_backward,
    conv_forward,
    conv_output_dims,
    dense_backward,
    dense_forward,
    maxpool_backward,
    maxpool_forward,
    pool_output_dims,
)
from .losses import LossKind, ce_grad, loss

MODEL_MAGIC = b"CNNF"
MODEL_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    """Geometry description from which a network can be initialized."""

    conv: ConvGeometry
    pool: PoolGeometry
    dense_widths: tuple[int, ...]

    def flat_length(self) -> int:
        h1, w1, d1 = conv_output_dims(self.conv)
        h2, w2, d2 = pool_output_dims(h1, w1, d1, self.pool)
        return h2 * w2 * d2


@dataclass
class Network:
    """Parameters and topology: conv -> pool -> flatten -> dense stack."""

    bank: KernelBank
    conv_activation: ActivationKind
    pool: PoolGeometry
    dense: list[DenseLayer]
    loss_kind: LossKind = LossKind.CROSS_ENTROPY

    def __post_init__(self):
        if not self.dense:
            raise ShapeError("network needs at least one dense layer")
        h1, w1, d1 = conv_output_dims(self.bank.geometry)
        h2, w2, d2 = pool_output_dims(h1, w1, d1, self.pool)
        flat = h2 * w2 * d2
        n_in = flat
        for i, layer in enumerate(self.dense):
            if layer.n_in != n_in:
                raise ShapeError(
                    f"dense[{i}] expects {layer.n_in} inputs, chain provides {n_in}"
                )
            n_in = layer.n_out

    @property
    def class_count(self) -> int:
        return self.dense[-1].n_out


@dataclass
class GradientSet:
    """Loss gradients mirroring every parameter of a Network."""

    kernels: np.ndarray
    conv_biases: np.ndarray
    dense_w: list[np.ndarray]
    dense_b: list[np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    rng_seed: int

    def __post_init__(self):
        # 0 is a lawful no-op that leaves the network untouched.
        if self.learning_rate < 0:
            raise DomainError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("epochs and batch_size must be >= 1")
        if not 0 <= self.rng_seed < 1 << 64:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.rng_seed}")


class EpochStats(NamedTuple):
    epoch: int
    mean_loss: float
    accuracy: float


def init(arch: Architecture, seed: int) -> Network:
    """Fresh network with uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights
    and zero biases, fully determined by ``seed``."""
    if not arch.dense_widths:
        raise ShapeError("architecture needs at least one dense width")
    if not 0 <= seed < 1 << 64:
        raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed}")
    rng = np.random.Generator(np.random.PCG64(seed))
    g = arch.conv
    bound = 1.0 / np.sqrt(g.in_c * g.k_h * g.k_w)
    kernels = rng.uniform(-bound, bound, size=(g.n_kernels, g.in_c, g.k_h, g.k_w))
    bank = KernelBank(kernels=kernels, biases=np.zeros(g.n_kernels), geometry=g)
    layers = []
    n_in = arch.flat_length()
    last = len(arch.dense_widths) - 1
    for i, width in enumerate(arch.dense_widths):
        bound = 1.0 / np.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(width, n_in))
        kind = ActivationKind.SIGMOID if i == last else ActivationKind.RELU
        layers.append(DenseLayer(weights=w, biases=np.zeros(width), activation=kind))
        n_in = width
    return Network(
        bank=bank,
        conv_activation=ActivationKind.RELU,
        pool=arch.pool,
        dense=layers,
    )


def forward(net: Network, image: np.ndarray) -> tuple[np.ndarray, list[ForwardTrace]]:
    """Run the image through the whole network.

    Returns the predicted vector and one trace per layer, in order:
    conv, pool, then each dense layer.
    """
    _, act, conv_trace = conv_forward(image, net.bank, net.conv_activation)
    pooled, pool_trace = maxpool_forward(act, net.pool)
    a = tensor.flatten(pooled)
    traces = [conv_trace, pool_trace]
    for layer in net.dense:
        _, a, t = dense_forward(a, layer)
        traces.append(t)
    return a, traces


def backward(net: Network, traces: list[ForwardTrace], y: np.ndarray) -> GradientSet:
    """Gradient of the cross-entropy loss for one sample, using the traces
    the matching forward call produced."""
    y = np.asarray(y, dtype=np.float64)
    if len(traces) != 2 + len(net.dense):
        raise ShapeError(f"expected {2 + len(net.dense)} traces, got {len(traces)}")
    if y.shape != (net.class_count,):
        raise ShapeError(f"label shape {y.shape} != ({net.class_count},)")
    conv_trace, pool_trace = traces[0], traces[1]
    final = traces[-1]
    yhat = apply(net.dense[-1].activation, final.preact)
    grad = ce_grad(yhat, y)
    dense_w: list[np.ndarray] = []
    dense_b: list[np.ndarray] = []
    for layer, trace in zip(reversed(net.dense), reversed(traces[2:])):
        gw, gb, grad = dense_backward(grad, layer, trace)
        dense_w.append(gw)
        dense_b.append(gb)
    dense_w.reverse()
    dense_b.reverse()
    pooled_shape = pool_trace.argmax_rows.shape
    grad_act = maxpool_backward(tensor.unflatten(grad, pooled_shape), pool_trace)
    grad_preact = grad_act * derivative(net.conv_activation, conv_trace.preact)
    gk, gcb = conv_backward(grad_preact, conv_trace.input, net.bank)
    return GradientSet(kernels=gk, conv_biases=gcb, dense_w=dense_w, dense_b=dense_b)


def _check_mirror(net: Network, grads: GradientSet) -> None:
    if grads.kernels.shape != net.bank.kernels.shape:
        raise ShapeError("kernel gradient shape does not mirror the network")
    if grads.conv_biases.shape != net.bank.biases.shape:
        raise ShapeError("conv bias gradient shape does not mirror the network")
    if len(grads.dense_w) != len(net.dense) or len(grads.dense_b) != len(net.dense):
        raise ShapeError("dense gradient count does not mirror the network")
    for layer, gw, gb in zip(net.dense, grads.dense_w, grads.dense_b):
        if gw.shape != layer.weights.shape or gb.shape != layer.biases.shape:
            raise ShapeError("dense gradient shape does not mirror the network")


def sgd_step(net: Network, grads: GradientSet, alpha: float) -> Network:
    """One plain gradient-descent update: theta <- theta - alpha * grad."""
    if alpha <= 0:
        raise DomainError(f"learning rate must be > 0, got {alpha}")
    _check_mirror(net, grads)
    bank = KernelBank(
        kernels=net.bank.kernels - alpha * grads.kernels,
        biases=net.bank.biases - alpha * grads.conv_biases,
        geometry=net.bank.geometry,
    )
    dense = [
        DenseLayer(
            weights=layer.weights - alpha * gw,
            biases=layer.biases - alpha * gb,
            activation=layer.activation,
        )
        for layer, gw, gb in zip(net.dense, grads.dense_w, grads.dense_b)
    ]
    return Network(
        bank=bank,
        conv_activation=net.conv_activation,
        pool=net.pool,
        dense=dense,
        loss_kind=net.loss_kind,
    )


def _mean_grads(batch: list[GradientSet]) -> GradientSet:
    n = len(batch)
    acc = GradientSet(
        kernels=np.zeros_like(batch[0].kernels),
        conv_biases=np.zeros_like(batch[0].conv_biases),
        dense_w=[np.zeros_like(g) for g in batch[0].dense_w],
        dense_b=[np.zeros_like(g) for g in batch[0].dense_b],
    )
    for gs in batch:
        acc.kernels += gs.kernels
        acc.conv_biases += gs.conv_biases
        for a, g in zip(acc.dense_w, gs.dense_w):
            a += g
        for a, g in zip(acc.dense_b, gs.dense_b):
            a += g
    acc.kernels /= n
    acc.conv_biases /= n
    for a in acc.dense_w:
        a /= n
    for a in acc.dense_b:
        a /= n
    return acc


def train(
    net: Network, data: Dataset, cfg: TrainConfig
) -> tuple[Network, list[EpochStats]]:
    """Mini-batch gradient descent; the batch gradient is the mean of the
    per-sample gradients.

    Shuffle order comes from a counter-based generator keyed on the seed,
    one non-overlapping stream per epoch, so runs are reproducible
    bit-for-bit. History records post-epoch metrics on the training set.
    """
    if len(data.images) == 0:
        raise DomainError("cannot train on an empty dataset")
    n = len(data.images)
    history: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        if cfg.learning_rate > 0:
            rng = np.random.Generator(
                np.random.Philox(key=cfg.rng_seed, counter=epoch * (1 << 64))
            )
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                grads = []
                for i in idx:
                    _, traces = forward(net, data.images[i])
                    grads.append(backward(net, traces, data.labels[i]))
                net = sgd_step(net, _mean_grads(grads), cfg.learning_rate)
        mean_loss, accuracy = evaluate(net, data)
        history.append(EpochStats(epoch + 1, mean_loss, accuracy))
    return net, history


def evaluate(net: Network, data: Dataset) -> tuple[float, float]:
    """Mean loss and argmax accuracy over a dataset (ties go to the lowest
    class index)."""
    if len(data.images) == 0:
        raise DomainError("cannot evaluate an empty dataset")
    total = 0.0
    correct = 0
    for image, label in zip(data.images, data.labels):
        yhat, _ = forward(net, image)
        total += loss(net.loss_kind, yhat, label)
        if int(np.argmax(yhat)) == int(np.argmax(label)):
            correct += 1
    n = len(data.images)
    return total / n, correct / n


# --- model file ---------------------------------------------------------
#
# Little-endian throughout. Layout, with no padding between sections:
#
#   magic   "CNNF"
#   u32     version (1)
#   u32 x8  conv geometry: in_h, in_w, in_c, k_h, k_w, n_kernels, stride, pad
#   u32 x2  pool geometry: window, stride
#   u32     dense layer count
#   per dense layer: u32 n_in, u32 n_out, u8 activation tag
#   f64[]   conv kernels, filter-major (kernel, channel, row, col)
#   f64[]   conv biases
#   per dense layer: f64[] weights row-major, then f64[] biases


def save(net: Network, sink: str | BinaryIO) -> None:
    """Write the network to a path or binary stream; load() restores it
    bit-for-bit."""
    g = net.bank.geometry
    out = io.BytesIO()
    out.write(MODEL_MAGIC)
    out.write(struct.pack("<I", MODEL_VERSION))
    out.write(
        struct.pack(
            "<8I", g.in_h, g.in_w, g.in_c, g.k_h, g.k_w, g.n_kernels, g.stride, g.pad
        )
    )
    out.write(struct.pack("<2I", net.pool.window, net.pool.stride))
    out.write(struct.pack("<I", len(net.dense)))
    for layer in net.dense:
        out.write(struct.pack("<IIB", layer.n_in, layer.n_out, int(layer.activation)))
    out.write(np.ascontiguousarray(net.bank.kernels, dtype="<f8").tobytes())
    out.write(np.ascontiguousarray(net.bank.biases, dtype="<f8").tobytes())
    for layer in net.dense:
        out.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        out.write(np.ascontiguousarray(layer.biases, dtype="<f8").tobytes())
    blob = out.getvalue()
    if hasattr(sink, "write"):
        sink.write(blob)
    else:
        with open(sink, "wb") as f:
            f.write(blob)


class _Reader:
    """Sequential reader that names the section a truncation happened in."""

    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, section: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncationError(
                f"file truncated in section '{section}' "
                f"(need {n} bytes at offset {self.pos}, have {len(self.blob) - self.pos})"
            )
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, section: str) -> int:
        return struct.unpack("<I", self.take(4, section))[0]

    def u8(self, section: str) -> int:
        return self.take(1, section)[0]

    def f64_array(self, count: int, section: str) -> np.ndarray:
        raw = self.take(8 * count, section)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def load(source: str | BinaryIO) -> Network:
    """Read a model file, raising a distinct ParseError for bad magic,
    version mismatch, truncation, or inconsistent extents."""
    if hasattr(source, "read"):
        blob = source.read()
    else:
        with open(source, "rb") as f:
            blob = f.read()
    r = _Reader(blob)
    magic = r.take(4, "magic")
    if magic != MODEL_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    version = r.u32("version")
    if version != MODEL_VERSION:
        raise ParseError(f"unsupported model version {version}")
    vals = [r.u32("conv geometry") for _ in range(8)]
    try:
        conv = ConvGeometry(*vals)
        pool = PoolGeometry(r.u32("pool geometry"), r.u32("pool geometry"))
    except ValueError as e:
        raise ParseError(f"inconsistent geometry: {e}") from e
    n_dense = r.u32("dense count")
    if n_dense < 1 or n_dense > 1_000_000:
        raise ParseError(f"implausible dense layer count {n_dense}")
    dense_geom = []
    for i in range(n_dense):
        n_in = r.u32(f"dense[{i}] geometry")
        n_out = r.u32(f"dense[{i}] geometry")
        tag = r.u8(f"dense[{i}] geometry")
        try:
            kind = ActivationKind(tag)
        except ValueError as e:
            raise ParseError(f"dense[{i}] has unknown activation tag {tag}") from e
        if n_in < 1 or n_out < 1:
            raise ParseError(f"dense[{i}] has non-positive extents {n_in}x{n_out}")
        dense_geom.append((n_in, n_out, kind))
    g = conv
    kernels = r.f64_array(
        g.n_kernels * g.in_c * g.k_h * g.k_w, "conv kernels"
    ).reshape(g.n_kernels, g.in_c, g.k_h, g.k_w)
    biases = r.f64_array(g.n_kernels, "conv biases")
    layers = []
    for i, (n_in, n_out, kind) in enumerate(dense_geom):
        w = r.f64_array(n_in * n_out, f"dense[{i}] weights").reshape(n_out, n_in)
        b = r.f64_array(n_out, f"dense[{i}] biases")
        layers.append(DenseLayer(weights=w, biases=b, activation=kind))
    if r.pos != len(blob):
        raise ParseError(f"{len(blob) - r.pos} trailing bytes after parameters")
    try:
        return Network(
            bank=KernelBank(kernels=kernels, biases=biases, geometry=conv),
            conv_activation=ActivationKind.RELU,
            pool=pool,
            dense=layers,
        )
    except ValueError as e:
        raise ParseError(f"inconsistent extents: {e}") from e
