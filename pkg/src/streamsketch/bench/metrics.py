"""Evaluation metrics for the ANN and KDE experiments."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ..errors import ConfigError
from ..oracle import SUCCESS


def recall_at_k(candidates: Sequence, truth: np.ndarray, k: int = 50) -> float:
    """Mean over queries of ``|C ∩ NN_k(q)| / k``, with ``C`` a candidate id set."""
    truth = np.asarray(truth)
    if len(candidates) != len(truth):
        raise ConfigError("candidate sets and ground truth differ in length")
    if len(truth) == 0:
        return float("nan")
    k = min(k, truth.shape[1])
    hits = [np.intersect1d(np.asarray(c), t[:k]).size for c, t in zip(candidates, truth)]
    return float(np.mean(hits) / k)


def crann_accuracy(labels: Sequence[str]) -> float:
    if len(labels) == 0:
        return float("nan")
    return sum(lbl == SUCCESS for lbl in labels) / len(labels)


def compression(bytes_used: float, n: int, dim: int) -> float:
    """Sketch size relative to storing all ``n`` points as float32."""
    return bytes_used / (n * dim * 4)


def qps(queries: int, seconds: float) -> float:
    return queries / seconds if seconds > 0 else float("inf")


def compute_metrics(results: dict, ground_truth: dict | None, config: dict) -> dict:
    """Bundle the ANN metrics of one run.

    ``results`` holds ``candidates``, ``labels``, ``bytes`` and ``seconds``;
    ``ground_truth`` holds ``knn`` (query x k nearest ids).
    """
    if ground_truth is None or "knn" not in ground_truth:
        raise ConfigError("ground truth nearest neighbors are required")
    n, dim = config["n"], config["dim"]
    return {
        "recall@50": recall_at_k(results["candidates"], ground_truth["knn"], 50),
        "crann_accuracy": crann_accuracy(results["labels"]),
        "compression": compression(results["bytes"], n, dim),
        "qps": qps(len(results["labels"]), results["seconds"]),
    }
