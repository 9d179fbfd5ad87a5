"""Victim models exposed as hard-label oracles.

The analytic victims (hyperplane, sphere) have closed-form minimal
adversarial distances and are the main verification targets. The MLP
victim loads hand-writable JSON weight files, and the CIFAR-10 loader reads
the standard binary batch format.

MLP weight file layout::

    {
      "class_count": 2,
      "layers": [
        {"weights": [[...], ...], "biases": [...], "activation": "relu"},
        {"weights": [[...], ...], "biases": [...], "activation": "none"}
      ]
    }

``weights`` rows are output units (shape ``out x in``), so a layer computes
``act(W @ x + b)``. Inputs are flattened before the first layer.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import AttackError, DecisionOracle, LabelledPair, ShapeMismatch, l2_distance

CIFAR_SHAPE = (3, 32, 32)
CIFAR_RECORD = 1 + 3 * 32 * 32


class MalformedFile(AttackError, ValueError):
    pass


class LabelOutOfRange(AttackError, ValueError):
    pass


class Unsupported(AttackError, TypeError):
    pass


class HyperplaneOracle:
    """Label 1 where ``w . x >= b``, else 0."""

    def __init__(self, w, b: float, shape: Sequence[int] | None = None):
        self.w = np.asarray(w, dtype=np.float64).ravel()
        if not np.linalg.norm(self.w) > 0:
            raise ValueError("w must be non-zero")
        self.b = float(b)
        self._shape = tuple(shape) if shape is not None else (self.w.size,)

    def label_of(self, x) -> int:
        return int(float(np.dot(self.w, np.asarray(x, dtype=np.float64).ravel())) >= self.b)

    def class_count(self) -> int:
        return 2

    def input_shape(self) -> tuple[int, ...]:
        return self._shape


class SphereOracle:
    """Label 1 where ``|x - c| >= r``, else 0."""

    def __init__(self, c, r: float, shape: Sequence[int] | None = None):
        self.c = np.asarray(c, dtype=np.float64).ravel()
        if not r > 0:
            raise ValueError("r must be positive")
        self.r = float(r)
        self._shape = tuple(shape) if shape is not None else (self.c.size,)

    def label_of(self, x) -> int:
        return int(float(np.linalg.norm(np.asarray(x, dtype=np.float64).ravel() - self.c)) >= self.r)

    def class_count(self) -> int:
        return 2

    def input_shape(self) -> tuple[int, ...]:
        return self._shape


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "none"


class MlpOracle:
    def __init__(self, layers: Sequence[Layer], class_count: int | None = None,
                 input_shape: Sequence[int] | None = None):
        if not layers:
            raise ValueError("an MLP needs at least one layer")
        width = layers[0].weights.shape[1]
        for i, layer in enumerate(layers):
            if layer.activation not in ("relu", "none"):
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.weights.ndim != 2 or layer.weights.shape[1] != width:
                raise ValueError(f"layer {i}: expected {width} inputs, weights are {layer.weights.shape}")
            if layer.biases.shape != (layer.weights.shape[0],):
                raise ValueError(f"layer {i}: bias length {layer.biases.shape} does not match weights")
            width = layer.weights.shape[0]
        if class_count is not None and class_count != width:
            raise ValueError(f"final layer width {width} != class_count {class_count}")
        self.layers = list(layers)
        self.m = width
        self._shape = tuple(input_shape) if input_shape is not None else (layers[0].weights.shape[1],)

    def logits(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64).ravel()
        if h.size != self.layers[0].weights.shape[1]:
            raise ShapeMismatch(f"input has {h.size} values, network expects {self.layers[0].weights.shape[1]}")
        for layer in self.layers:
            h = layer.weights @ h + layer.biases
            if layer.activation == "relu":
                h = np.maximum(h, 0.0)
        return h

    def label_of(self, x) -> int:
        # np.argmax returns the first maximal index
        return int(np.argmax(self.logits(x)))

    def class_count(self) -> int:
        return self.m

    def input_shape(self) -> tuple[int, ...]:
        return self._shape

    def to_dict(self) -> dict:
        return {
            "class_count": self.m,
            "input_shape": list(self._shape),
            "layers": [
                {"weights": l.weights.tolist(), "biases": l.biases.tolist(), "activation": l.activation}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "MlpOracle":
        layers = [
            Layer(np.asarray(l["weights"], dtype=np.float64), np.asarray(l["biases"], dtype=np.float64),
                  l.get("activation", "none"))
            for l in spec["layers"]
        ]
        return cls(layers, spec.get("class_count"), spec.get("input_shape"))


def mlp_label(oracle: MlpOracle, x) -> int:
    return oracle.label_of(x)


def load_mlp(path) -> MlpOracle:
    with open(path, encoding="utf-8") as fh:
        return MlpOracle.from_dict(json.load(fh))


def save_mlp(oracle: MlpOracle, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(oracle.to_dict(), fh, indent=1)


class CountingOracle:
    """Forwards queries to ``inner`` and counts them."""

    def __init__(self, inner: DecisionOracle):
        self.inner = inner
        self.count = 0
        self._lock = threading.Lock()

    def label_of(self, x) -> int:
        with self._lock:
            self.count += 1
        return self.inner.label_of(x)

    def class_count(self) -> int:
        return self.inner.class_count()

    def input_shape(self) -> tuple[int, ...]:
        return self.inner.input_shape()


def optimal_adversarial_distance(oracle, x0) -> float:
    """Closed-form minimal L2 distance from ``x0`` to the other class.

    Box constraints are ignored, so the value is exact only when the optimum
    lies inside [0, 1]^d.
    """
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    if isinstance(oracle, HyperplaneOracle):
        return abs(float(np.dot(oracle.w, x0)) - oracle.b) / float(np.linalg.norm(oracle.w))
    if isinstance(oracle, SphereOracle):
        return abs(oracle.r - float(np.linalg.norm(x0 - oracle.c)))
    raise Unsupported(f"no closed form for {type(oracle).__name__}")


def load_cifar10_batch(path) -> list[tuple[np.ndarray, int]]:
    """Read a CIFAR-10 binary batch: per record one label byte, then 3072
    pixel bytes (R, G, B planes, each 32x32 row-major). Pixels scale to [0, 1]."""
    raw = Path(path).read_bytes()
    if len(raw) % CIFAR_RECORD:
        raise MalformedFile(f"{path}: {len(raw)} bytes is not a multiple of {CIFAR_RECORD}")
    if not raw:
        return []
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0]
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise LabelOutOfRange(f"{path}: record {int(bad[0])} has label {int(labels[bad[0]])}")
    pixels = records[:, 1:].astype(np.float64) / 255.0
    return [(pixels[i].reshape(CIFAR_SHAPE), int(labels[i])) for i in range(len(records))]


def select_starting_point(x0, original_label: int, pool: Sequence[tuple[np.ndarray, int]]) -> np.ndarray:
    """Closest pool member (L2) whose label differs from ``original_label``."""
    best, best_d = None, float("inf")
    for x, label in pool:
        if label == original_label:
            continue
        d = l2_distance(x, x0)
        if d < best_d:
            best, best_d = x, d
    if best is None:
        raise ValueError("no pool member carries a different label")
    return best


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def sphere_instances(n: int, dim: int = 16, radius: float = 0.4, start_factor: float = 2.0,
                     seed: int = 0) -> list[LabelledPair]:
    """``n`` sphere victims with x0 at the centre, so the optimum is ``radius``.

    Centres sit near the middle of the box and starting points at
    ``start_factor * radius`` from the centre; geometries whose start leaves
    [0.05, 0.95]^d are redrawn, keeping the box inactive.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        c = 0.5 + rng.uniform(-0.05, 0.05, dim)
        x1 = c + start_factor * radius * _unit(rng, dim)
        if x1.min() < 0.05 or x1.max() > 0.95:
            continue
        oracle = SphereOracle(c, radius)
        out.append(LabelledPair(oracle, c.copy(), oracle.label_of(c), x1,
                                {"optimum": radius, "kind": "sphere"}))
    return out


def hyperplane_instances(n: int, dim: int = 16, margin: float = 0.4, start_height: float = 2.0,
                         tangent_offset: float = 0.0, seed: int = 0) -> list[LabelledPair]:
    """``n`` hyperplane victims with x0 at signed distance ``-margin``.

    The start point is ``x0 + start_height*margin*w + tangent_offset*margin*u``
    for a random unit ``u`` orthogonal to ``w``; the default starts on the
    normal ray, the analogue of the radial sphere start. A non-zero
    ``tangent_offset`` makes the walk slide along the boundary.
    """
    if start_height <= 1.0:
        raise ValueError("start_height must exceed 1 so x1 lies on the far side")
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        w = _unit(rng, dim)
        x0 = 0.5 + rng.uniform(-0.05, 0.05, dim)
        b = float(np.dot(w, x0)) + margin
        tangent = _unit(rng, dim)
        tangent -= np.dot(tangent, w) * w
        tangent /= np.linalg.norm(tangent)
        x1 = x0 + margin * (start_height * w + tangent_offset * tangent)
        if x1.min() < 0.05 or x1.max() > 0.95:
            continue
        oracle = HyperplaneOracle(w, b)
        out.append(LabelledPair(oracle, x0, oracle.label_of(x0), x1,
                                {"optimum": margin, "kind": "hyperplane"}))
    return out
