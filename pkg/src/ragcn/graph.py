"""Population-graph construction and GCN propagation matrices."""

from __future__ import annotations

import numpy as np

from .ndmath import DomainError

METRICS = ("absolute-difference", "cosine", "euclidean")


class ConfigurationError(ValueError):
    """Inputs are valid individually but inconsistent for the requested operation."""


def _pairwise(x: np.ndarray, metric: str) -> np.ndarray:
    if metric == "absolute-difference":
        # Summed absolute difference; equals |x_i - x_j| for a single feature.
        return np.abs(x[:, None, :] - x[None, :, :]).sum(axis=2)
    if metric == "euclidean":
        sq = (x * x).sum(axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
        return np.sqrt(np.maximum(d2, 0.0))
    if metric == "cosine":
        norms = np.linalg.norm(x, axis=1)
        if np.any(norms == 0):
            raise DomainError("cosine distance undefined for a zero feature vector")
        unit = x / norms[:, None]
        return np.clip(1.0 - unit @ unit.T, 0.0, 2.0)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def build_threshold_graph(x_adj, metric: str, gamma: float) -> np.ndarray:
    """Binary symmetric adjacency with a_ij = 1 iff i != j and dist(x_i, x_j) < gamma."""
    if gamma < 0:
        raise ValueError(f"threshold must be non-negative, got {gamma}")
    x = np.asarray(x_adj, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    dist = _pairwise(x, metric)
    a = (dist < gamma).astype(np.float64)
    # Cosine of identical directions can land a hair off zero; keep exact symmetry.
    a = np.maximum(a, a.T)
    np.fill_diagonal(a, 0.0)
    return a


def normalize(a: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.

    Works for weighted adjacencies too; the diagonal of ``a`` must be zero.
    """
    a = np.asarray(a, dtype=np.float64)
    a_hat = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * d[:, None] * d[None, :]


def spectral_radius(m: np.ndarray, iters: int = 500, seed: int = 0) -> float:
    """Power-iteration estimate of the largest |eigenvalue| of a symmetric matrix."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = m @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        lam = norm
        v = w / norm
    return float(lam)


def class_subgraph(a: np.ndarray, labels, train_mask, c: int) -> tuple[np.ndarray, np.ndarray]:
    """Labeled training nodes of class ``c`` and the adjacency induced on them."""
    labels = np.asarray(labels)
    idx = np.flatnonzero(np.asarray(train_mask, dtype=bool) & (labels == c))
    if idx.size == 0:
        raise ConfigurationError(f"class {c} has no training nodes")
    return idx, a[np.ix_(idx, idx)]


def density(a: np.ndarray) -> float:
    """Fraction of off-diagonal entries that are edges."""
    n = a.shape[0]
    if n < 2:
        raise ValueError("density needs at least two nodes")
    off = a.sum() - np.trace(a)
    return float(off / (n * (n - 1)))
