"""Losses, the adversarial re-weighting loop and the static-weight baselines."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import ndmath as nd
from .datasets import AttributedGraph
from .graph import ConfigurationError, normalize
from .metrics import MetricsReport, evaluate
from .models import VARIANTS, ModelParams, WeightingNetworks, class_blocks, gcn_forward, learned_graph_forward, normalize_weighted
from .ndmath import AdamState, DenseTensor, Tape

MODES = ("ragcn", "gcn", "mlp")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    mode: str = "ragcn"
    weighted: bool = False  # baselines only: static class weights vs plain mean CE
    alpha: float = 0.5
    k: int = 1
    lr_classifier: float = 0.001
    lr_weighting: float = 0.01
    epochs: int = 1000
    dropout: float = 0.5
    hidden: tuple[int, ...] = (4,)
    weight_hidden: tuple[int, ...] = (2,)
    weight_dropout: bool = False
    variant: str = "per-class"
    seed: int = 0
    # "fixed" uses the dataset graph; "learned" adds the graph constructor.
    graph: str = "fixed"
    graph_scale: float = -1.0
    graph_offset: float = 1.0
    embed_hidden: tuple[int, ...] = (8, 4)

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        self.weight_hidden = tuple(self.weight_hidden)
        self.embed_hidden = tuple(self.embed_hidden)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.graph not in ("fixed", "learned"):
            raise ValueError("graph must be 'fixed' or 'learned'")
        if self.graph == "learned" and self.mode == "mlp":
            raise ValueError("the learned graph constructor needs a graph-based classifier")

    @property
    def method(self) -> str:
        if self.mode == "ragcn":
            name = "ragcn" if self.variant == "per-class" else f"ragcn:{self.variant}"
        else:
            name = f"{self.mode}-{'weighted' if self.weighted else 'unweighted'}"
        return name + ("+graph" if self.graph == "learned" else "")


@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)
    best_iteration: int = -1
    best_val_macro_f1: float = -math.inf
    best_params: ModelParams | None = field(default=None, repr=False)
    best_embed: ModelParams | None = field(default=None, repr=False)
    # Weights learned at the end of training, keyed by node index.
    final_weights: dict[int, float] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records)


# ------------------------------------------------------------------------ losses


def static_class_weights(labels, train_mask, n_classes: int | None = None) -> np.ndarray:
    """beta_c = 1 - |Y_L^c| / |Y_L|."""
    y = np.asarray(labels)[np.asarray(train_mask, dtype=bool)]
    n_classes = int(np.asarray(labels).max()) + 1 if n_classes is None else n_classes
    counts = np.bincount(y, minlength=n_classes)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ConfigurationError(f"class {int(empty[0])} has no training samples")
    return 1.0 - counts / counts.sum()


def weighted_ce(q: DenseTensor, labels, index, weights) -> DenseTensor:
    """-sum_i w_i log q_i[label_i] over the labeled nodes ``index``."""
    index = np.asarray(index)
    labels = np.asarray(labels)
    picked = nd.pick(q, index, labels[index])
    if np.any(picked.data <= 0):
        bad = index[np.flatnonzero(picked.data[:, 0] <= 0)[0]]
        raise nd.DomainError(f"predicted probability of the true class is zero at node {bad}")
    w = weights if isinstance(weights, DenseTensor) else DenseTensor(np.asarray(weights, dtype=float).reshape(-1, 1))
    return nd.neg(nd.sum_all(nd.mul(w, nd.log(picked))))


def entropy_term(distributions: Sequence) -> DenseTensor:
    """sum over groups of -sum_i w_i log w_i, with 0 log 0 = 0."""
    total = None
    for w in distributions:
        w = nd.as_tensor(w)
        if np.any(w.data < 0):
            raise nd.DomainError("entropy of negative weights")
        if np.any(w.data == 0):
            # Zero entries contribute nothing; drop them to keep log finite.
            keep = np.flatnonzero(w.data.ravel() > 0)
            w = nd.select_rows(w if w.cols == 1 else nd.transpose(w), keep)
        elif w.cols != 1:
            w = nd.transpose(w)
        h = nd.neg(nd.sum_all(nd.mul(w, nd.log(w))))
        total = h if total is None else nd.add(total, h)
    return total if total is not None else DenseTensor([[0.0]])


def ascent_direction_check(losses, weights) -> np.ndarray:
    """d/dz_j of sum_i softmax(z)_i * loss_i, i.e. w_j (loss_j - sum_i w_i loss_i)."""
    losses = np.asarray(losses, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return weights * (losses - np.dot(weights, losses))


# ----------------------------------------------------------------------- runtime


class _Problem:
    """Data-dependent constants shared by the trainers."""

    def __init__(self, graph: AttributedGraph, config: TrainConfig):
        self.graph = graph
        self.config = config
        self.x = DenseTensor(graph.features)
        self.labels = graph.labels
        self.train_idx = np.flatnonzero(graph.train_mask)
        self.a_norm = None if config.mode == "mlp" else DenseTensor(normalize(graph.adjacency))
        self.ax = None
        if self.a_norm is not None and config.graph == "fixed":
            self.ax = DenseTensor(self.a_norm.data @ graph.features)
        seeds = np.random.SeedSequence(config.seed).spawn(3)
        self.init_rng = np.random.Generator(np.random.PCG64(seeds[0]))
        self.drop_rng = np.random.Generator(np.random.PCG64(seeds[1]))
        self.weight_rng = np.random.Generator(np.random.PCG64(seeds[2]))
        dims = [graph.features.shape[1], *config.hidden, graph.n_classes]
        self.classifier = ModelParams.init(dims, self.init_rng)
        self.embed = None
        if config.graph == "learned":
            self.embed = ModelParams.init([graph.features.shape[1], *config.embed_hidden], self.init_rng)

    def classifier_params(self) -> list[DenseTensor]:
        params = self.classifier.tensors()
        return params + (self.embed.tensors() if self.embed else [])

    def propagation(self) -> DenseTensor | None:
        if self.embed is None:
            return self.a_norm
        w = learned_graph_forward(self.embed, self.x, self.config.graph_scale, self.config.graph_offset)
        return normalize_weighted(w)

    def forward(self, training: bool) -> DenseTensor:
        return gcn_forward(self.classifier, self.propagation(), self.x, self.config.dropout, self.drop_rng, training, self.ax)

    def learned_adjacency(self) -> np.ndarray:
        w = learned_graph_forward(self.embed, self.x, self.config.graph_scale, self.config.graph_offset).data.copy()
        np.fill_diagonal(w, 0.0)
        return w

    def validate(self, q: np.ndarray, history: TrainHistory, iteration: int, loss: float) -> None:
        report = evaluate(q, self.labels, self.graph.val_mask)
        history.records.append(
            {
                "iteration": iteration,
                "train_loss": loss,
                "val_accuracy": report.accuracy,
                "val_macro_f1": report.macro_f1,
                "val_roc_auc": report.roc_auc,
            }
        )
        if report.macro_f1 > history.best_val_macro_f1:
            history.best_val_macro_f1 = report.macro_f1
            history.best_iteration = iteration
            history.best_params = self.classifier.copy()
            history.best_embed = self.embed.copy() if self.embed else None


def _check_finite(value: float, iteration: int, what: str) -> None:
    if not math.isfinite(value):
        raise TrainingError(f"{what} became non-finite at iteration {iteration}")


def _descend(problem: _Problem, opt: AdamState, node_weights: DenseTensor, index, iteration: int) -> float:
    params = problem.classifier_params()
    with Tape() as tape:
        q = problem.forward(training=True)
        try:
            loss = weighted_ce(q, problem.labels, index, node_weights)
        except nd.DomainError as exc:
            raise TrainingError(f"classifier saturated at iteration {iteration}: {exc}") from exc
    _check_finite(loss.item(), iteration, "classifier loss")
    grads = nd.backward(tape, loss, params)
    nd.adam_step(params, [grads[id(p)] for p in params], opt, problem.config.lr_classifier, "descend")
    return loss.item()


def baseline_train(graph: AttributedGraph, config: TrainConfig, callback=None) -> tuple[ModelParams, TrainHistory]:
    """GCN/MLP trained on plain mean CE or on static class-weighted CE.

    ``callback(iteration, q, weights)`` is called after every iteration with the
    evaluation-mode probabilities and the per-node training weights.
    """
    if config.mode == "ragcn":
        raise ValueError("baseline_train handles mode 'gcn' or 'mlp'")
    problem = _Problem(graph, config)
    idx = problem.train_idx
    if config.weighted:
        beta = static_class_weights(graph.labels, graph.train_mask, graph.n_classes)
        w = beta[graph.labels[idx]]
    else:
        w = np.full(idx.size, 1.0 / idx.size)
    node_weights = DenseTensor(w.reshape(-1, 1))
    opt = AdamState.for_params(problem.classifier_params())
    history = TrainHistory()
    for it in range(config.epochs):
        for _ in range(config.k):
            loss = _descend(problem, opt, node_weights, idx, it)
        q = problem.forward(training=False).data
        problem.validate(q, history, it, loss)
        if callback:
            callback(it, q, w)
    return history.best_params, history


def ragcn_train(graph: AttributedGraph, config: TrainConfig, callback=None) -> tuple[ModelParams, TrainHistory]:
    """Alternate k descent steps on the classifier with one ascent step per weighting network.

    ``callback(iteration, q, weights)`` receives the evaluation-mode
    probabilities and the per-class weight vectors after each ascent step.
    """
    if config.mode != "ragcn":
        raise ValueError("ragcn_train needs mode 'ragcn'")
    problem = _Problem(graph, config)
    blocks = class_blocks(graph.adjacency, graph.features, graph.labels, graph.train_mask, graph.n_classes)
    adversary = WeightingNetworks(config.variant, graph.features.shape[1], graph.n_classes, problem.init_rng, config.weight_hidden)
    w_drop = config.dropout if config.weight_dropout else 0.0
    order = np.concatenate([b.index for b in blocks])

    opt_d = AdamState.for_params(problem.classifier_params())
    opt_w = [AdamState.for_params(group) for group in adversary.param_groups()]
    history = TrainHistory()

    for it in range(config.epochs):
        if problem.embed is not None and it > 0:
            _refresh_blocks(blocks, problem)
        for _ in range(config.k):
            sw = adversary.forward(blocks, w_drop, problem.weight_rng, training=w_drop > 0)
            node_weights = DenseTensor(np.vstack([w.data for w in sw.weights]))
            loss = _descend(problem, opt_d, node_weights, order, it)

        q = problem.forward(training=False)
        q_const = DenseTensor(q.data)
        groups = adversary.param_groups()
        flat = [p for g in groups for p in g]
        with Tape() as tape:
            sw = adversary.forward(blocks, w_drop, problem.weight_rng, training=w_drop > 0)
            objective = weighted_ce(q_const, problem.labels, order, nd.concat(sw.weights, axis=0))
            if config.alpha > 0:
                objective = nd.add(objective, nd.scale(entropy_term(sw.distributions), config.alpha))
        _check_finite(objective.item(), it, "weighting objective")
        grads = nd.backward(tape, objective, flat)
        for group, opt in zip(groups, opt_w):
            nd.adam_step(group, [grads[id(p)] for p in group], opt, config.lr_weighting, "ascend")

        problem.validate(q.data, history, it, loss)
        if callback:
            callback(it, q.data, [w.data.ravel() for w in adversary.forward(blocks).weights])

    sw = adversary.forward(blocks)
    history.final_weights = {int(i): float(v) for i, v in zip(order, np.vstack([w.data for w in sw.weights]).ravel())}
    return history.best_params, history


def _refresh_blocks(blocks, problem: _Problem) -> None:
    # With a learned graph the weighting networks see its current class-restricted weights.
    w = problem.learned_adjacency()
    for b in blocks:
        b.a_norm = DenseTensor(normalize(w[np.ix_(b.index, b.index)]))


def train(graph: AttributedGraph, config: TrainConfig, callback=None) -> tuple[ModelParams, TrainHistory]:
    if config.mode == "ragcn":
        return ragcn_train(graph, config, callback)
    return baseline_train(graph, config, callback)


def predict_proba(graph: AttributedGraph, config: TrainConfig, params: ModelParams, embed: ModelParams | None = None) -> np.ndarray:
    """Evaluation-mode class probabilities for every node."""
    if config.mode == "mlp":
        a = None
    elif config.graph == "learned":
        a = normalize_weighted(learned_graph_forward(embed, graph.features, config.graph_scale, config.graph_offset))
    else:
        a = normalize(graph.adjacency)
    return gcn_forward(params, a, graph.features).data


def fit_and_evaluate(graph: AttributedGraph, config: TrainConfig, mask=None) -> tuple[MetricsReport, TrainHistory]:
    """Train, then score the best-validation snapshot on ``mask`` (test by default)."""
    params, history = train(graph, config)
    q = predict_proba(graph, config, params, history.best_embed)
    return evaluate(q, graph.labels, graph.test_mask if mask is None else mask), history


def config_to_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
