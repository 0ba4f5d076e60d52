from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import adjusted_rand_score, fowlkes_mallows_score
from sklearn.metrics.cluster import contingency_matrix


class ClusteringScores(NamedTuple):
    acc: float
    fi: float
    ari: float


class SelectionScores(NamedTuple):
    p1: int
    pvc: float


def _check_lengths(estimate: np.ndarray, truth: np.ndarray) -> None:
    if estimate.shape != truth.shape or estimate.ndim != 1:
        raise ValueError(f"length mismatch: estimate {estimate.shape} vs truth {truth.shape}")


def clustering_accuracy(phi_est: np.ndarray, phi_true: np.ndarray) -> float:
    """Fraction of rows matched under the best one-to-one map of estimated to true labels."""
    table = contingency_matrix(phi_true, phi_est)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / len(phi_true))


def clustering_metrics(phi_est, phi_true) -> ClusteringScores:
    """
    Accuracy, Fowlkes-Mallows index and adjusted Rand index of an estimated partition.

    Args:
        phi_est (array-like): Estimated labels
        phi_true (array-like): True labels

    Returns:
        ClusteringScores: (acc, fi, ari)
    """
    phi_est, phi_true = np.asarray(phi_est), np.asarray(phi_true)
    _check_lengths(phi_est, phi_true)
    return ClusteringScores(
        acc=clustering_accuracy(phi_est, phi_true),
        fi=float(fowlkes_mallows_score(phi_true, phi_est)),
        ari=float(adjusted_rand_score(phi_true, phi_est)),
    )


def selection_metrics(gamma_hat, gamma_true) -> SelectionScores:
    """Number of selected variables and proportion of variables classified correctly."""
    gamma_hat = np.asarray(gamma_hat, dtype=bool)
    gamma_true = np.asarray(gamma_true, dtype=bool)
    _check_lengths(gamma_hat, gamma_true)
    return SelectionScores(p1=int(gamma_hat.sum()), pvc=float(np.mean(gamma_hat == gamma_true)))
