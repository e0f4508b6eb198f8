"""Graph containers, file loaders, normalization, edge splitting and SBM generation."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from math import comb
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .linalg import as_sparse, make_rng

log = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Malformed input file; message carries path and line number."""


class GraphValidationError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


@dataclass
class Graph:
    adjacency: sp.csr_matrix
    features: np.ndarray
    labels: np.ndarray | None = None
    n_classes: int | None = None

    def __post_init__(self):
        n = self.adjacency.shape[0]
        if self.adjacency.shape != (n, n):
            raise GraphValidationError("adjacency must be square")
        if self.features.shape[0] != n:
            raise GraphValidationError(f"features have {self.features.shape[0]} rows, expected {n}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise GraphValidationError("labels length must equal node count")
            if self.n_classes is None:
                self.n_classes = int(self.labels.max()) + 1 if n else 0

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return len(undirected_edges(self.adjacency))


@dataclass
class EdgeSplit:
    train_adjacency: sp.csr_matrix
    train_pos: np.ndarray
    val_pos: np.ndarray
    val_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray


@dataclass
class SbmSpec:
    block_sizes: tuple[int, ...]
    p_in: float
    p_out: float
    features: str = "identity"  # or "onehot"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_out < self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out < p_in <= 1")
        if self.features not in ("identity", "onehot"):
            raise ValueError(f"unknown feature mode {self.features!r}")
        if not self.block_sizes or min(self.block_sizes) < 1:
            raise ValueError("block sizes must be positive")


def adjacency_from_edges(edges, n: int) -> sp.csr_matrix:
    """Symmetric 0/1 adjacency from (i, j) pairs; self-loops and duplicates dropped."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    e = e[e[:, 0] != e[:, 1]]
    if e.size and (e.min() < 0 or e.max() >= n):
        raise GraphValidationError(f"node index out of range [0, {n})")
    lo, hi = np.minimum(e[:, 0], e[:, 1]), np.maximum(e[:, 0], e[:, 1])
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if e.size else np.zeros((0, 2), np.int64)
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    a = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    return as_sparse(a)


def undirected_edges(adj: sp.spmatrix) -> np.ndarray:
    """Canonical (i < j) edge list, sorted lexicographically."""
    upper = sp.triu(adj, k=1).tocoo()
    pairs = np.stack([upper.row, upper.col], axis=1).astype(np.int64)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def _data_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split()


def read_edges(path) -> np.ndarray:
    path = Path(path)
    out = []
    for lineno, tok in _data_lines(path):
        if len(tok) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected 2 node indices, got {len(tok)} fields")
        try:
            out.append((int(tok[0]), int(tok[1])))
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-integer node index") from None
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


def read_features(path) -> np.ndarray:
    """Sparse-triplet ("N C" header) or dense ("DENSE N C" header) feature file."""
    path = Path(path)
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise GraphFormatError(f"{path}: empty feature file") from None
    dense = header[0] == "DENSE"
    dims = header[1:] if dense else header
    if len(dims) != 2:
        raise GraphFormatError(f"{path}:{lineno}: bad header {' '.join(header)!r}")
    try:
        n, c = int(dims[0]), int(dims[1])
    except ValueError:
        raise GraphFormatError(f"{path}:{lineno}: bad header {' '.join(header)!r}") from None
    x = np.zeros((n, c))
    if dense:
        row = 0
        for lineno, tok in lines:
            if len(tok) != c:
                raise GraphFormatError(f"{path}:{lineno}: expected {c} values, got {len(tok)}")
            if row >= n:
                raise GraphFormatError(f"{path}:{lineno}: more than {n} rows")
            try:
                x[row] = [float(t) for t in tok]
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-numeric value") from None
            row += 1
        if row != n:
            raise GraphFormatError(f"{path}: expected {n} rows, got {row}")
        return x
    for lineno, tok in lines:
        if len(tok) != 3:
            raise GraphFormatError(f"{path}:{lineno}: expected 'node feature value'")
        try:
            i, j, v = int(tok[0]), int(tok[1]), float(tok[2])
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: malformed triplet") from None
        if not (0 <= i < n and 0 <= j < c):
            raise GraphValidationError(f"{path}:{lineno}: index ({i}, {j}) outside {n}x{c}")
        x[i, j] = v
    return x


def read_labels(path) -> np.ndarray:
    path = Path(path)
    out = []
    for lineno, tok in _data_lines(path):
        if len(tok) != 1:
            raise GraphFormatError(f"{path}:{lineno}: expected one class id")
        try:
            out.append(int(tok[0]))
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-integer class id") from None
    return np.asarray(out, dtype=np.int64)


def load_graph(edges_path, features_path, labels_path=None) -> Graph:
    x = read_features(features_path)
    n = x.shape[0]
    adj = adjacency_from_edges(read_edges(edges_path), n)
    labels = None
    if labels_path is not None:
        labels = read_labels(labels_path)
        if labels.shape[0] != n:
            raise GraphValidationError(f"{labels_path}: {labels.shape[0]} labels for {n} nodes")
    return Graph(adj, x, labels)


def write_graph(g: Graph, out_dir, name: str = "graph") -> dict[str, Path]:
    """Write edge/feature/label files in the loader's formats (sparse triplets)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"edges": out_dir / f"{name}.edges", "features": out_dir / f"{name}.features"}
    with open(paths["edges"], "w", encoding="utf-8", newline="\n") as fh:
        for i, j in undirected_edges(g.adjacency):
            fh.write(f"{i} {j}\n")
    n, c = g.features.shape
    rows, cols = np.nonzero(g.features)
    with open(paths["features"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{n} {c}\n")
        for i, j in zip(rows, cols):
            fh.write(f"{i} {j} {float(g.features[i, j])!r}\n")
    if g.labels is not None:
        paths["labels"] = out_dir / f"{name}.labels"
        with open(paths["labels"], "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{int(v)}\n" for v in g.labels)
    return paths


def row_normalize(x: np.ndarray) -> np.ndarray:
    s = x.sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return x / s


def normalize(adj) -> sp.csr_matrix:
    """D~^-1/2 (A + I) D~^-1/2 for a symmetric, zero-diagonal adjacency (or a Graph)."""
    if isinstance(adj, Graph):
        adj = adj.adjacency
    n = adj.shape[0]
    a_tilde = as_sparse(adj + sp.identity(n, format="csr"))
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    out = a_tilde.tocoo()
    vals = out.data / np.sqrt(deg[out.row] * deg[out.col])
    return as_sparse(sp.csr_matrix((vals, (out.row, out.col)), shape=(n, n)))


def _sample_non_edges(adj: sp.csr_matrix, count: int, rng: np.random.Generator) -> np.ndarray:
    n = adj.shape[0]
    n_edges = adj.nnz // 2
    available = comb(n, 2) - n_edges
    if count > available:
        raise SamplingError(f"need {count} negative pairs but only {available} non-edges exist")
    if count == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if available < 2 * count or n <= 256:
        # small or dense graphs: enumerate every non-edge and pick without replacement
        iu, ju = np.triu_indices(n, k=1)
        mask = np.asarray(adj[iu, ju]).ravel() == 0
        cand = np.stack([iu[mask], ju[mask]], axis=1)
        pick = rng.choice(cand.shape[0], size=count, replace=False)
        return cand[pick].astype(np.int64)
    seen: set[tuple[int, int]] = set()
    out = []
    lil = adj.tolil()
    while len(out) < count:
        i, j = (int(v) for v in rng.integers(0, n, size=2))
        if i == j:
            continue
        i, j = min(i, j), max(i, j)
        if (i, j) in seen or lil[i, j] != 0:
            continue
        seen.add((i, j))
        out.append((i, j))
    return np.asarray(out, dtype=np.int64)


def split_edges(g: Graph, val_frac: float, test_frac: float,
                rng: np.random.Generator) -> EdgeSplit:
    """Uniformly partition undirected edges into train/val/test and sample negatives.

    Negatives are non-edges of the full graph, so a held-out positive can never
    be drawn as a negative. val and test negatives are disjoint.
    """
    if not (val_frac > 0 and test_frac > 0 and val_frac + test_frac < 1):
        raise ValueError("need val_frac, test_frac > 0 and val_frac + test_frac < 1")
    edges = undirected_edges(g.adjacency)
    n_val = int(np.floor(len(edges) * val_frac))
    n_test = int(np.floor(len(edges) * test_frac))
    if n_val < 1 or n_test < 1 or len(edges) - n_val - n_test < 1:
        raise SamplingError(f"{len(edges)} edges is too few for a {val_frac}/{test_frac} split")
    perm = rng.permutation(len(edges))
    val_pos = edges[np.sort(perm[:n_val])]
    test_pos = edges[np.sort(perm[n_val:n_val + n_test])]
    train_pos = edges[np.sort(perm[n_val + n_test:])]
    neg = _sample_non_edges(g.adjacency, n_val + n_test, rng)
    return EdgeSplit(
        train_adjacency=adjacency_from_edges(train_pos, g.n_nodes),
        train_pos=train_pos,
        val_pos=val_pos,
        val_neg=neg[:n_val],
        test_pos=test_pos,
        test_neg=neg[n_val:],
    )


def generate_sbm(spec: SbmSpec) -> Graph:
    rng = make_rng(spec.seed)
    sizes = np.asarray(spec.block_sizes, dtype=np.int64)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = int(sizes.sum())
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], spec.p_in, spec.p_out)
    keep = rng.random(iu.size) < p
    adj = adjacency_from_edges(np.stack([iu[keep], ju[keep]], axis=1), n)
    if spec.features == "onehot":
        x = np.eye(len(sizes))[labels]
    else:
        x = np.eye(n)
    return Graph(adj, x, labels, n_classes=len(sizes))
