"""Link-prediction and clustering metrics, K-means, and multi-seed aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

from .linalg import sigmoid


class UndefinedMetricError(ValueError):
    pass


@dataclass
class ScoredEdges:
    pairs: np.ndarray
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: list[float] = field(default_factory=list)


@dataclass
class MetricsReport:
    per_seed: list[dict[str, float]]
    mean: dict[str, float]
    std: dict[str, float]

    def to_dict(self) -> dict:
        return {"per_seed": self.per_seed, "mean": self.mean, "std": self.std}


def score_edges(z: np.ndarray, pos_pairs, neg_pairs) -> ScoredEdges:
    pos = np.asarray(pos_pairs, dtype=np.int64).reshape(-1, 2)
    neg = np.asarray(neg_pairs, dtype=np.int64).reshape(-1, 2)
    pairs = np.concatenate([pos, neg])
    left, right = z[pairs[:, 0]], z[pairs[:, 1]]
    # accumulate in dimension order, as gemm does, so scores equal the decoder's bit for bit
    logits = np.zeros(len(pairs))
    for k in range(z.shape[1]):
        logits += left[:, k] * right[:, k]
    labels = np.concatenate([np.ones(len(pos), np.int64), np.zeros(len(neg), np.int64)])
    return ScoredEdges(pairs, sigmoid(logits), labels)


def _split_classes(scored: ScoredEdges):
    pos = scored.scores[scored.labels == 1]
    neg = scored.scores[scored.labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("need at least one positive and one negative")
    return pos, neg


def auc(scored: ScoredEdges) -> float:
    """P(random positive outscores random negative), ties counting 1/2."""
    pos, neg = _split_classes(scored)
    ranks = rankdata(np.concatenate([pos, neg]))  # average ranks for ties
    u = ranks[:pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def average_precision(scored: ScoredEdges) -> float:
    """Mean of precision@k over the ranks k of positives, ranking by descending score.

    Tied scores keep their input order (stable sort), so positives listed first
    win ties.
    """
    n_pos = int(scored.labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-scored.scores, kind="stable")
    hits = scored.labels[order]
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(precision[hits == 1].sum() / n_pos)


# -- clustering ---------------------------------------------------------------

def _inertia(x, centroids, labels) -> float:
    diff = x - centroids[labels]
    return float(np.sum(diff * diff))


def _sq_dists(x, centroids):
    return ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    closest = ((x - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centroids[c] = x[idx]
        closest = np.minimum(closest, ((x - centroids[c]) ** 2).sum(axis=1))
    return centroids


def _lloyd(x, centroids, max_iter, tol):
    history = []
    labels = np.argmin(_sq_dists(x, centroids), axis=1)
    history.append(_inertia(x, centroids, labels))
    for _ in range(max_iter):
        new = centroids.copy()
        for c in range(centroids.shape[0]):
            members = labels == c
            if members.any():
                new[c] = x[members].mean(axis=0)
            else:
                # empty cluster: re-seed from the point farthest from its centroid
                far = int(np.argmax(((x - new[labels]) ** 2).sum(axis=1)))
                new[c] = x[far]
                labels = labels.copy()
                labels[far] = c
        new_labels = np.argmin(_sq_dists(x, new), axis=1)
        shift = float(np.sum((new - centroids) ** 2))
        centroids = new
        history.append(_inertia(x, centroids, new_labels))
        if np.array_equal(new_labels, labels) or shift <= tol:
            labels = new_labels
            break
        labels = new_labels
    return labels, centroids, history


def kmeans(z: np.ndarray, k: int, rng, restarts: int = 10, max_iter: int = 300,
           tol: float = 0.0) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding; lowest-inertia run of ``restarts``."""
    x = np.asarray(z, dtype=np.float64)
    if not 1 <= k <= x.shape[0]:
        raise ValueError(f"need 1 <= k <= N, got k={k}, N={x.shape[0]}")
    best = None
    for _ in range(max(1, restarts)):
        labels, centroids, history = _lloyd(x, _kmeanspp(x, k, rng), max_iter, tol)
        inertia = history[-1]
        if best is None or inertia < best.inertia:
            best = ClusterAssignment(labels, centroids, inertia, history)
    return best


def contingency(pred, truth) -> np.ndarray:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("assignment and labels differ in length")
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def clustering_accuracy(pred, truth) -> float:
    """Best accuracy over one-to-one cluster-to-class matchings (Hungarian method)."""
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / table.sum())


def _entropy(counts) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth) -> float:
    """I(U;V) / sqrt(H(U) H(V)), natural log; 0 when either entropy is 0."""
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    hu = _entropy(table.sum(axis=1))
    hv = _entropy(table.sum(axis=0))
    if hu == 0.0 or hv == 0.0:
        return 0.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return float(min(max(mi / math.sqrt(hu * hv), 0.0), 1.0))


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def ari(pred, truth) -> float:
    """Adjusted Rand index from pair counts."""
    table = contingency(pred, truth)
    n = table.sum()
    index = _comb2(table).sum()
    a = _comb2(table.sum(axis=1)).sum()
    b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    expected = a * b / total if total > 0 else 0.0
    max_index = 0.5 * (a + b)
    if max_index == expected:
        # both partitions trivial in the same way
        return 1.0 if index == max_index else 0.0
    return float((index - expected) / (max_index - expected))


# -- aggregation ---------------------------------------------------------------

def aggregate(per_seed: list[dict[str, float]]) -> MetricsReport:
    """Mean and population standard deviation of each metric across seeds."""
    if not per_seed:
        raise ValueError("no per-seed metrics to aggregate")
    keys = list(per_seed[0])
    mean, std = {}, {}
    for k in keys:
        v = np.asarray([m[k] for m in per_seed], dtype=np.float64)
        mean[k] = float(v.mean())
        std[k] = float(v.std())
    return MetricsReport([dict(m) for m in per_seed], mean, std)


def format_table(rows: dict[str, MetricsReport], metrics: list[str]) -> str:
    """Aligned text table: mean in percent, std as a decimal, e.g. ``92.9 ± 0.003``."""
    width = max([len(r) for r in rows] + [6])
    head = f"{'Method':<{width}}" + "".join(f"  {m:>16}" for m in metrics)
    lines = [head, "-" * len(head)]
    for name, rep in rows.items():
        cells = "".join(f"  {100 * rep.mean[m]:>7.1f} ± {rep.std[m]:<6.3f}" for m in metrics)
        lines.append(f"{name:<{width}}{cells}")
    return "\n".join(lines)
