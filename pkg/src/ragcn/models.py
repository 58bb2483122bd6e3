"""Classifier, weighting networks and learned graph constructor."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import ndmath as nd
from .graph import ConfigurationError, normalize
from .ndmath import DenseTensor, DimensionError

VARIANTS = ("per-class", "class-weighting", "single-network", "shared-trunk")


@dataclass
class Layer:
    weight: DenseTensor  # in x out
    bias: DenseTensor  # 1 x out


class ModelParams:
    """Ordered affine layers; consecutive dimensions chain."""

    def __init__(self, layers: Sequence[Layer]):
        self.layers = list(layers)
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weight.cols != nxt.weight.rows:
                raise DimensionError(f"layer dims do not chain: {prev.weight.shape} -> {nxt.weight.shape}")

    @classmethod
    def init(cls, dims: Sequence[int], rng: np.random.Generator) -> "ModelParams":
        """Glorot-uniform weights, zero biases."""
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            layers.append(Layer(DenseTensor(w, requires_grad=True), DenseTensor(np.zeros((1, fan_out)), requires_grad=True)))
        return cls(layers)

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].weight.rows] + [l.weight.cols for l in self.layers]

    def tensors(self) -> list[DenseTensor]:
        return [t for l in self.layers for t in (l.weight, l.bias)]

    def copy(self) -> "ModelParams":
        return ModelParams(
            [Layer(DenseTensor(l.weight.data, True), DenseTensor(l.bias.data, True)) for l in self.layers]
        )

    def to_dict(self) -> dict:
        def enc(t: DenseTensor):
            return {"shape": list(t.shape), "data": t.data.ravel().tolist()}

        return {"layers": [{"weight": enc(l.weight), "bias": enc(l.bias)} for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        def dec(e):
            return DenseTensor(np.array(e["data"], dtype=np.float64).reshape(e["shape"]), requires_grad=True)

        return cls([Layer(dec(l["weight"]), dec(l["bias"])) for l in d["layers"]])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "ModelParams":
        return cls.from_dict(json.loads(s))


def _as_prop(a_norm):
    if a_norm is None or isinstance(a_norm, DenseTensor):
        return a_norm
    return DenseTensor(a_norm)


def gcn_logits(
    params: ModelParams, a_norm, x, dropout: float = 0.0, rng=None, training: bool = False, ax: DenseTensor | None = None
) -> DenseTensor:
    """Stacked GC layers without the output softmax.

    Each layer propagates with ``a_norm`` then applies its affine map; hidden
    layers use ReLU followed by dropout. ``a_norm=None`` skips propagation (MLP).
    ``ax`` may carry a precomputed ``a_norm @ x`` for the first layer.
    """
    a = _as_prop(a_norm)
    h = nd.as_tensor(x)
    if a is not None and a.rows != h.rows:
        raise DimensionError(f"propagation matrix {a.shape} does not match {h.rows} feature rows")
    if h.cols != params.dims[0]:
        raise DimensionError(f"features have {h.cols} columns, first layer expects {params.dims[0]}")
    last = len(params.layers) - 1
    for i, layer in enumerate(params.layers):
        if i == 0 and ax is not None:
            hw = nd.matmul(ax, layer.weight)
        else:
            # A (H W) equals (A H) W; this order is cheaper when H is wide.
            hw = nd.matmul(h, layer.weight)
            if a is not None:
                hw = nd.matmul(a, hw)
        h = nd.add(hw, layer.bias)
        if i < last:
            h = nd.dropout(nd.relu(h), dropout, rng, training)
    return h


def gcn_forward(
    params: ModelParams, a_norm, x, dropout: float = 0.0, rng=None, training: bool = False, ax: DenseTensor | None = None
) -> DenseTensor:
    """Class-probability matrix Q (rows sum to one)."""
    return nd.softmax(gcn_logits(params, a_norm, x, dropout, rng, training, ax), axis=1)


def mlp_forward(params: ModelParams, x, dropout: float = 0.0, rng=None, training: bool = False) -> DenseTensor:
    return gcn_forward(params, None, x, dropout, rng, training)


def weighting_forward(params_c: ModelParams, a_c_norm, x_c, dropout: float = 0.0, rng=None, training: bool = False) -> DenseTensor:
    """Softmax-normalized sample weights (n_c x 1) over one class's training nodes."""
    x_c = nd.as_tensor(x_c)
    if x_c.rows == 0:
        raise ConfigurationError("weighting network needs at least one node")
    scores = gcn_logits(params_c, a_c_norm, x_c, dropout, rng, training)
    return nd.softmax(scores, axis=0)


# ------------------------------------------------------------------ weighting set


@dataclass
class ClassBlock:
    """Training nodes of one class and their normalized induced subgraph."""

    index: np.ndarray
    a_norm: DenseTensor
    x: DenseTensor


@dataclass
class SampleWeights:
    """Output of a weighting variant.

    ``weights[c]`` is an n_c x 1 tensor over ``blocks[c].index``;
    ``distributions`` are the probability vectors the entropy term acts on.
    """

    weights: list[DenseTensor]
    distributions: list[DenseTensor]


def class_blocks(adjacency: np.ndarray, features: np.ndarray, labels, train_mask, n_classes: int) -> list[ClassBlock]:
    labels = np.asarray(labels)
    train_mask = np.asarray(train_mask, dtype=bool)
    blocks = []
    for c in range(n_classes):
        idx = np.flatnonzero(train_mask & (labels == c))
        if idx.size == 0:
            raise ConfigurationError(f"class {c} has no training nodes")
        sub = adjacency[np.ix_(idx, idx)]
        blocks.append(ClassBlock(idx, DenseTensor(normalize(sub)), DenseTensor(features[idx])))
    return blocks


class WeightingNetworks:
    """The adversary: per-class GCN weighting networks or one of their ablations.

    per-class        one network per class (default)
    class-weighting  per-class networks; mean raw score per class, softmax over classes
    single-network   one network shared by all classes, softmax within each class
    shared-trunk     shared hidden layer(s), class-specific output layer
    """

    def __init__(self, variant: str, n_features: int, n_classes: int, rng: np.random.Generator, hidden: Sequence[int] = (2,)):
        if variant not in VARIANTS:
            raise ValueError(f"unknown weighting variant {variant!r}; expected one of {VARIANTS}")
        self.variant = variant
        self.n_classes = n_classes
        dims = [n_features, *hidden, 1]
        if variant in ("per-class", "class-weighting"):
            self.nets = [ModelParams.init(dims, rng) for _ in range(n_classes)]
        elif variant == "single-network":
            self.nets = [ModelParams.init(dims, rng)]
        else:
            trunk = ModelParams.init(dims[:-1], rng)
            heads = [ModelParams.init(dims[-2:], rng) for _ in range(n_classes)]
            self.nets = [trunk, *heads]

    def param_groups(self) -> list[list[DenseTensor]]:
        """One parameter list per independently optimized network."""
        return [net.tensors() for net in self.nets]

    def _scores(self, c: int, block: ClassBlock, dropout, rng, training) -> DenseTensor:
        if self.variant in ("per-class", "class-weighting"):
            return gcn_logits(self.nets[c], block.a_norm, block.x, dropout, rng, training)
        if self.variant == "single-network":
            return gcn_logits(self.nets[0], block.a_norm, block.x, dropout, rng, training)
        trunk, head = self.nets[0], self.nets[1 + c]
        h = gcn_logits(trunk, block.a_norm, block.x, dropout, rng, training)
        h = nd.dropout(nd.relu(h), dropout, rng, training)
        return gcn_logits(head, block.a_norm, h)

    def forward(self, blocks: Sequence[ClassBlock], dropout: float = 0.0, rng=None, training: bool = False) -> SampleWeights:
        scores = [self._scores(c, b, dropout, rng, training) for c, b in enumerate(blocks)]
        if self.variant != "class-weighting":
            weights = [nd.softmax(s, axis=0) for s in scores]
            return SampleWeights(weights, weights)
        means = [nd.scale(nd.col_sum(s), 1.0 / s.rows) for s in scores]
        class_w = nd.softmax(nd.concat(means, axis=1), axis=1)
        weights = [
            nd.matmul(DenseTensor(np.ones((b.index.size, 1))), nd.select_rows(nd.transpose(class_w), [c]))
            for c, b in enumerate(blocks)
        ]
        return SampleWeights(weights, [class_w])


def weighting_variant_forward(variant_nets: WeightingNetworks, blocks: Sequence[ClassBlock], **kw) -> SampleWeights:
    return variant_nets.forward(blocks, **kw)


# ---------------------------------------------------------------- learned graph


def learned_graph_forward(embed_params: ModelParams, x, a: float, b: float) -> DenseTensor:
    """Edge weights sigmoid(a * ||e_i - e_j|| + b) from an MLP embedding of the nodes."""
    emb = gcn_logits(embed_params, None, x)
    d = nd.pairwise_distance(emb)
    return nd.sigmoid(nd.add(nd.scale(d, a), DenseTensor([[b]])))


def normalize_weighted(w: DenseTensor) -> DenseTensor:
    """Self-looped symmetric normalization of a weighted adjacency tensor.

    The diagonal of ``w`` is dropped and replaced by unit self-loops.
    """
    n = w.rows
    off = nd.mul(w, DenseTensor(1.0 - np.eye(n)))
    a_hat = nd.add(off, DenseTensor(np.eye(n)))
    dinv = nd.power(nd.row_sum(a_hat), -0.5)
    return nd.mul(nd.mul(a_hat, dinv), nd.transpose(dinv))
