"""Finite-difference checks over random instances of every trainable architecture."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import ndmath as nd
from .graph import build_threshold_graph, normalize
from .models import VARIANTS, ModelParams, WeightingNetworks, class_blocks, gcn_forward, learned_graph_forward, normalize_weighted
from .ndmath import DenseTensor
from .training import entropy_term, weighted_ce


def _instance(rng: np.random.Generator, n_classes: int):
    n = int(rng.integers(6, 10))
    f = int(rng.integers(2, 5))
    x = rng.normal(size=(n, f))
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    # Every class keeps at least two labeled nodes.
    train = np.zeros(n, dtype=bool)
    for c in range(n_classes):
        train[np.flatnonzero(labels == c)[:2]] = True
    adj = build_threshold_graph(rng.normal(size=(n, 2)), "euclidean", 1.2)
    return x, labels, train, adj


def _classifier_case(rng, use_graph: bool, use_ax: bool):
    n_classes = int(rng.integers(2, 4))
    x, labels, train, adj = _instance(rng, n_classes)
    hidden = int(rng.integers(2, 5))
    params = ModelParams.init([x.shape[1], hidden, n_classes], rng)
    for p in params.tensors():
        p.data += rng.normal(scale=0.3, size=p.shape)
    a = DenseTensor(normalize(adj)) if use_graph else None
    ax = DenseTensor(a.data @ x) if use_ax else None
    idx = np.flatnonzero(train)
    w = rng.random(idx.size) + 0.1
    drop_seed = int(rng.integers(2**31))

    def loss():
        q = gcn_forward(params, a, x, 0.3, nd.make_rng(drop_seed), True, ax)
        return weighted_ce(q, labels, idx, w)

    return loss, params.tensors()


def _weighting_case(rng, variant: str):
    n_classes = int(rng.integers(2, 4))
    x, labels, train, adj = _instance(rng, n_classes)
    blocks = class_blocks(adj, x, labels, train, n_classes)
    nets = WeightingNetworks(variant, x.shape[1], n_classes, rng, hidden=(int(rng.integers(2, 4)),))
    for group in nets.param_groups():
        for p in group:
            p.data += rng.normal(scale=0.3, size=p.shape)
    q = DenseTensor(nd.softmax(rng.normal(size=(x.shape[0], n_classes))).data)
    order = np.concatenate([b.index for b in blocks])
    alpha = float(rng.uniform(0.0, 1.0))

    def loss():
        sw = nets.forward(blocks)
        obj = weighted_ce(q, labels, order, nd.concat(sw.weights, axis=0))
        return nd.add(obj, nd.scale(entropy_term(sw.distributions), alpha))

    return loss, [p for g in nets.param_groups() for p in g]


def _learned_graph_case(rng):
    n_classes = 2
    x, labels, train, _ = _instance(rng, n_classes)
    embed = ModelParams.init([x.shape[1], 3, 2], rng)
    clf = ModelParams.init([x.shape[1], 3, n_classes], rng)
    for p in embed.tensors() + clf.tensors():
        p.data += rng.normal(scale=0.3, size=p.shape)
    idx = np.flatnonzero(train)
    a, b = float(rng.uniform(-2.0, -0.5)), float(rng.uniform(0.0, 1.5))

    def loss():
        prop = normalize_weighted(learned_graph_forward(embed, x, a, b))
        return weighted_ce(gcn_forward(clf, prop, x), labels, idx, np.ones(idx.size))

    return loss, embed.tensors() + clf.tensors()


ARCHITECTURES: dict[str, Callable] = {
    "gcn classifier": lambda rng: _classifier_case(rng, True, False),
    "gcn classifier (precomputed AX)": lambda rng: _classifier_case(rng, True, True),
    "mlp classifier": lambda rng: _classifier_case(rng, False, False),
    **{f"weighting {v}": (lambda rng, v=v: _weighting_case(rng, v)) for v in VARIANTS},
    "learned graph constructor": _learned_graph_case,
}


def run_suite(instances: int = 50, seed: int = 0, h: float = 1e-5) -> dict[str, float]:
    """Worst relative error per architecture over ``instances`` random draws."""
    rng = nd.make_rng(seed)
    worst = {}
    for name, make in ARCHITECTURES.items():
        err = 0.0
        for _ in range(instances):
            loss, params = make(rng)
            err = max(err, nd.gradcheck(loss, params, h=h))
        worst[name] = err
    return worst
