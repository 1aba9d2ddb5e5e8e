"""Clustering quality metrics."""

from __future__ import annotations

import numpy as np


def contingency_table(labels_true, labels_pred) -> np.ndarray:
    """Joint count matrix of two labelings."""
    labels_true = np.asarray(labels_true)
    labels_pred = np.asarray(labels_pred)
    if labels_true.shape != labels_pred.shape:
        raise ValueError(
            f"length mismatch: {labels_true.shape[0]} true vs {labels_pred.shape[0]} predicted"
        )
    _, ti = np.unique(labels_true, return_inverse=True)
    _, pi = np.unique(labels_pred, return_inverse=True)
    kt, kp = ti.max() + 1, pi.max() + 1
    counts = np.zeros((kt, kp), dtype=np.int64)
    np.add.at(counts, (ti, pi), 1)
    return counts


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def nmi(labels_true, labels_pred) -> float:
    """Normalized mutual information, I(U;V) / sqrt(H(U) H(V)), natural logs.

    Degenerate cases: 1.0 when both partitions are single-cluster (they are
    then identical as partitions); 0.0 when exactly one of them has zero
    entropy.
    """
    counts = contingency_table(labels_true, labels_pred)
    n = counts.sum()
    joint = counts / n
    pu = joint.sum(axis=1)
    pv = joint.sum(axis=0)
    hu, hv = _entropy(pu), _entropy(pv)
    if hu == 0.0 and hv == 0.0:
        return 1.0
    if hu == 0.0 or hv == 0.0:
        return 0.0
    nz = joint > 0
    outer = np.outer(pu, pv)
    mi = float((joint[nz] * (np.log(joint[nz]) - np.log(outer[nz]))).sum())
    return min(max(mi / np.sqrt(hu * hv), 0.0), 1.0)


def inertia(X, assign, centroids) -> float:
    """Total squared Euclidean distance to the assigned centroids."""
    X = np.asarray(X, dtype=float)
    centroids = np.asarray(centroids, dtype=float)
    return float(((X - centroids[np.asarray(assign)]) ** 2).sum())


def per_sample_quasi_loglik(total_loglik: float, n: int) -> float:
    return float(total_loglik) / n
