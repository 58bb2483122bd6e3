"""Synthetic benchmark generators, CSV ingestion and stratified splits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import ConfigurationError, build_threshold_graph
from .ndmath import make_rng


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    pass


class LabelError(ValueError):
    pass


@dataclass
class AttributedGraph:
    features: np.ndarray  # N x F, adjacency features already removed
    adjacency: np.ndarray  # N x N binary, symmetric, zero diagonal
    labels: np.ndarray  # N ints in 0..C-1
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    n_classes: int = 0
    adj_features: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not self.n_classes:
            self.n_classes = int(self.labels.max()) + 1
        n = self.labels.shape[0]
        if self.features.shape[0] != n or self.adjacency.shape != (n, n):
            raise ValueError("features, adjacency and labels disagree on the node count")
        masks = np.stack([self.train_mask, self.val_mask, self.test_mask]).astype(int)
        if masks.shape[1] != n or not np.all(masks.sum(axis=0) == 1):
            raise ValueError("train/val/test masks must be disjoint and cover every node")
        missing = set(range(self.n_classes)) - set(self.labels[self.train_mask].tolist())
        if missing:
            raise ConfigurationError(f"classes {sorted(missing)} have no training nodes")

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def class_counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.n_classes).tolist()


# ------------------------------------------------------------------------ splits


def _largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    raw = [total * f for f in fractions]
    counts = [math.floor(r) for r in raw]
    short = total - sum(counts)
    # Ties on the remainder go to the earlier split.
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def stratified_split(labels, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class proportional train/val/test masks, shuffled within each class."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ValueError(f"split fractions must be three positive numbers summing to 1, got {fractions}")
    labels = np.asarray(labels)
    rng = make_rng(seed)
    masks = [np.zeros(labels.shape[0], dtype=bool) for _ in range(3)]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        counts = _largest_remainder(idx.size, fractions)
        raw = [idx.size * f for f in fractions]
        while min(counts) == 0 and idx.size >= len(counts):
            # Small classes: take a sample from the split furthest above its share.
            donor = max((i for i in range(len(counts)) if counts[i] > 1), key=lambda i: (counts[i] - raw[i], counts[i]))
            counts[donor] -= 1
            counts[counts.index(0)] += 1
        if min(counts) == 0:
            raise ConfigurationError(f"class {c} has {idx.size} samples, too few to appear in every split")
        idx = rng.permutation(idx)
        start = 0
        for mask, k in zip(masks, counts):
            mask[idx[start : start + k]] = True
            start += k
    return masks[0], masks[1], masks[2]


# --------------------------------------------------------------------- synthetic


@dataclass
class SyntheticSpec:
    n: int = 1000
    f_graph: int = 10
    f_node: int = 10
    class_weights: Sequence[float] = (0.95, 0.05)
    class_sep: float = 1.1
    flip_fraction: float = 0.05
    gamma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        w = np.asarray(self.class_weights, dtype=float)
        if w.size < 2 or np.any(w <= 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
            raise ValueError(f"class_weights must be a positive distribution, got {list(self.class_weights)}")
        if self.f_graph < 1 or self.f_node < 1:
            raise ValueError("f_graph and f_node must both be >= 1")
        if not 0.0 <= self.flip_fraction < 1.0:
            raise ValueError("flip_fraction must lie in [0, 1)")


def _hypercube_vertices(k: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    if dim < 63 and k > 2**dim:
        raise ConfigurationError(f"{k} classes need more than the {2**dim} vertices of a {dim}-cube")
    seen: set[bytes] = set()
    out = []
    while len(out) < k:
        v = rng.integers(0, 2, size=dim).astype(np.float64)
        key = v.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(v)
    return np.array(out)


def generate_synthetic(spec: SyntheticSpec) -> AttributedGraph:
    """Hypercube-vertex Gaussian clusters, one per class, with cosine threshold graph.

    All ``f_graph + f_node`` dimensions are informative. Each class gets its own
    random mixing matrix with U(-1, 1) entries. Label noise permutes the labels
    of a random ``flip_fraction`` subset, which keeps the class counts exact.
    """
    rng = make_rng(spec.seed)
    dim = spec.f_graph + spec.f_node
    counts = _largest_remainder(spec.n, spec.class_weights)
    centroids = (2.0 * _hypercube_vertices(len(counts), dim, rng) - 1.0) * spec.class_sep

    blocks, labels = [], []
    for c, (k, centroid) in enumerate(zip(counts, centroids)):
        z = rng.standard_normal((k, dim))
        mixing = 2.0 * rng.random((dim, dim)) - 1.0
        blocks.append(z @ mixing + centroid)
        labels.append(np.full(k, c))
    x = np.vstack(blocks)
    y = np.concatenate(labels)

    n_flip = int(round(spec.flip_fraction * spec.n))
    if n_flip > 1:
        chosen = rng.choice(spec.n, size=n_flip, replace=False)
        y[chosen] = y[rng.permutation(chosen)]

    order = rng.permutation(spec.n)
    x, y = x[order], y[order]
    adjacency = build_threshold_graph(x[:, : spec.f_graph], "cosine", spec.gamma)
    masks = stratified_split(y, seed=spec.seed)
    return AttributedGraph(
        x[:, spec.f_graph :].copy(), adjacency, y, *masks, n_classes=len(counts), adj_features=x[:, : spec.f_graph].copy()
    )


def generate_gaussian_toy(seed: int = 0, gamma: float = 0.5, n: int = 1000, minor_fraction: float = 0.1) -> AttributedGraph:
    """Two 4-d Gaussian classes at 90:10: N(0, I) and N(1, 0.3 I).

    The first two features build a euclidean threshold graph; the last two are
    node features.
    """
    rng = make_rng(seed)
    n_minor = int(round(n * minor_fraction))
    n_major = n - n_minor
    major = rng.standard_normal((n_major, 4))
    minor = 1.0 + math.sqrt(0.3) * rng.standard_normal((n_minor, 4))
    x = np.vstack([major, minor])
    y = np.concatenate([np.zeros(n_major, dtype=np.int64), np.ones(n_minor, dtype=np.int64)])
    order = rng.permutation(n)
    x, y = x[order], y[order]
    adjacency = build_threshold_graph(x[:, :2], "euclidean", gamma)
    masks = stratified_split(y, seed=seed)
    return AttributedGraph(x[:, 2:].copy(), adjacency, y, *masks, n_classes=2, adj_features=x[:, :2].copy())


# --------------------------------------------------------------------------- csv


@dataclass
class DatasetSchema:
    feature_cols: list[str]
    label_col: str
    adj_cols: list[str]
    metric: str = "absolute-difference"
    gamma: float = 1.0
    standardize: bool = True
    classes: list | None = field(default=None)

    def __post_init__(self):
        if set(self.feature_cols) & set(self.adj_cols):
            raise SchemaError("adjacency columns overlap feature columns")
        if self.label_col in self.feature_cols or self.label_col in self.adj_cols:
            raise SchemaError("label column must differ from feature and adjacency columns")
        if not self.feature_cols or not self.adj_cols:
            raise SchemaError("schema needs at least one feature column and one adjacency column")

    @classmethod
    def from_json(cls, path) -> "DatasetSchema":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        missing = {"feature_cols", "label_col", "adj_cols", "metric", "gamma"} - raw.keys()
        if missing:
            raise SchemaError(f"schema {path} lacks keys {sorted(missing)}")
        return cls(**raw)


def load_csv_dataset(path, schema: DatasetSchema, seed: int = 0) -> AttributedGraph:
    """Read a header-first numeric CSV; build the graph from ``schema.adj_cols``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        rows = [r for r in reader if r]

    col = {name: i for i, name in enumerate(header)}
    for name in [*schema.feature_cols, *schema.adj_cols, schema.label_col]:
        if name not in col:
            raise SchemaError(f"{path}: column {name!r} missing from header")

    def numeric(names):
        out = np.empty((len(rows), len(names)))
        for r, row in enumerate(rows):
            for j, name in enumerate(names):
                cell = row[col[name]].strip() if col[name] < len(row) else ""
                try:
                    out[r, j] = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: row {r + 2}, column {name!r}: non-numeric value {cell!r}") from None
                if not math.isfinite(out[r, j]):
                    raise ParseError(f"{path}: row {r + 2}, column {name!r}: non-finite value {cell!r}")
        return out

    x = numeric(schema.feature_cols)
    x_adj = numeric(schema.adj_cols)
    raw_labels = [row[col[schema.label_col]].strip() for row in rows]
    labels = _encode_labels(raw_labels, schema.classes, path)

    if schema.standardize:
        std = x.std(axis=0)
        x = (x - x.mean(axis=0)) / np.where(std > 0, std, 1.0)
    adjacency = build_threshold_graph(x_adj, schema.metric, schema.gamma)
    masks = stratified_split(labels, seed=seed)
    n_classes = len(schema.classes) if schema.classes else int(labels.max()) + 1
    return AttributedGraph(x, adjacency, labels, *masks, n_classes=n_classes, adj_features=x_adj)


def _encode_labels(raw: list[str], classes, path) -> np.ndarray:
    if classes is not None:
        lookup = {str(c): i for i, c in enumerate(classes)}
        out = []
        for r, value in enumerate(raw):
            if value not in lookup:
                raise LabelError(f"{path}: row {r + 2}: unknown label {value!r}; expected one of {list(lookup)}")
            out.append(lookup[value])
        return np.array(out, dtype=np.int64)
    out = []
    for r, value in enumerate(raw):
        try:
            f = float(value)
        except ValueError:
            raise ParseError(f"{path}: row {r + 2}: non-numeric label {value!r}") from None
        if f != int(f) or f < 0:
            raise LabelError(f"{path}: row {r + 2}: label {value!r} is not a class id")
        out.append(int(f))
    labels = np.array(out, dtype=np.int64)
    present = set(labels.tolist())
    if present != set(range(max(present) + 1)):
        raise LabelError(f"{path}: class ids {sorted(present)} are not contiguous from 0")
    return labels


# ----------------------------------------------------------------------- presets


def bundled_dataset(name: str) -> tuple[Path, DatasetSchema]:
    """CSV path and schema of a dataset shipped with the package (diabetes, haberman)."""
    base = resources.files("ragcn") / "data"
    csv_path = Path(str(base / f"{name}.csv"))
    if not csv_path.exists():
        raise FileNotFoundError(f"no bundled dataset named {name!r}")
    return csv_path, DatasetSchema.from_json(Path(str(base / f"{name}.schema.json")))


def write_csv(graph: AttributedGraph, path, adj_features: np.ndarray | None = None) -> None:
    """Dump node features (and optional adjacency features) with labels and split."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        fx = [f"x{j}" for j in range(graph.features.shape[1])]
        fa = [] if adj_features is None else [f"adj{j}" for j in range(adj_features.shape[1])]
        w.writerow([*fa, *fx, "label", "split"])
        split = np.where(graph.train_mask, "train", np.where(graph.val_mask, "val", "test"))
        for i in range(graph.n):
            a = [] if adj_features is None else [repr(float(v)) for v in adj_features[i]]
            w.writerow([*a, *(repr(float(v)) for v in graph.features[i]), int(graph.labels[i]), split[i]])
