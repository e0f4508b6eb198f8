"""Converters from public citation-network distributions into the loader's text formats.

Two layouts are recognised in a raw directory:

* LINQS tables: ``<name>.content`` (``id feat_1 ... feat_C label``) and
  ``<name>.cites`` (``cited citing``).
* Planetoid pickles: ``ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index}``.
"""
from __future__ import annotations

import json
import logging
import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import Graph, adjacency_from_edges, write_graph

log = logging.getLogger(__name__)

PLANETOID_PARTS = ("x", "tx", "allx", "y", "ty", "ally", "graph", "test.index")


class ConversionError(RuntimeError):
    pass


def _detect(raw: Path) -> tuple[str, str]:
    for content in sorted(raw.glob("*.content")):
        name = content.stem
        if not (raw / f"{name}.cites").is_file():
            raise ConversionError(f"found {content.name} but missing {name}.cites")
        return "linqs", name
    for graph_file in sorted(raw.glob("ind.*.graph")):
        name = graph_file.name.split(".")[1]
        missing = [p for p in PLANETOID_PARTS if not (raw / f"ind.{name}.{p}").is_file()]
        if missing:
            raise ConversionError(f"Planetoid layout for {name!r} is missing ind.{name}.{missing[0]}")
        return "planetoid", name
    raise ConversionError(f"{raw}: no <name>.content/<name>.cites pair and no ind.<name>.graph file")


def convert_linqs(raw: Path, name: str) -> Graph:
    ids, feats, classes = [], [], []
    with open(raw / f"{name}.content", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok:
                continue
            if len(tok) < 3:
                raise ConversionError(f"{name}.content:{lineno}: too few fields")
            ids.append(tok[0])
            feats.append([float(t) for t in tok[1:-1]])
            classes.append(tok[-1])
    if len({len(f) for f in feats}) != 1:
        raise ConversionError(f"{name}.content: rows have differing feature counts")
    index = {pid: i for i, pid in enumerate(ids)}
    if len(index) != len(ids):
        raise ConversionError(f"{name}.content: duplicate paper ids")
    edges, dropped = [], 0
    with open(raw / f"{name}.cites", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok:
                continue
            if len(tok) != 2:
                raise ConversionError(f"{name}.cites:{lineno}: expected two ids")
            if tok[0] in index and tok[1] in index:
                edges.append((index[tok[0]], index[tok[1]]))
            else:
                dropped += 1
    if dropped:
        log.warning("%s: dropped %d citations to papers absent from %s.content", name, dropped, name)
    class_names = sorted(set(classes))
    labels = np.asarray([class_names.index(c) for c in classes], dtype=np.int64)
    x = np.asarray(feats, dtype=np.float64)
    return Graph(adjacency_from_edges(edges, len(ids)), x, labels, n_classes=len(class_names))


def _unpickle(path: Path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def convert_planetoid(raw: Path, name: str) -> Graph:
    """Same assembly as the reference Planetoid loader, including the padding of
    test nodes that are missing from the Citeseer test index."""
    obj = {p: _unpickle(raw / f"ind.{name}.{p}") for p in PLANETOID_PARTS if p != "test.index"}
    test_idx = np.asarray([int(v) for v in (raw / f"ind.{name}.test.index").read_text().split()])
    test_sorted = np.sort(test_idx)
    tx, ty = sp.lil_matrix(obj["tx"]), np.asarray(obj["ty"])
    if name == "citeseer":
        full = range(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        tx = tx_ext
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        ty = ty_ext
    features = sp.vstack((sp.lil_matrix(obj["allx"]), tx)).tolil()
    features[test_idx, :] = features[test_sorted, :]
    onehot = np.vstack((np.asarray(obj["ally"]), ty))
    onehot[test_idx, :] = onehot[test_sorted, :]
    n = features.shape[0]
    edges = [(int(i), int(j)) for i, nbrs in obj["graph"].items() for j in nbrs]
    labels = np.argmax(onehot, axis=1).astype(np.int64)
    return Graph(adjacency_from_edges(edges, n), np.asarray(features.todense(), dtype=np.float64),
                 labels, n_classes=onehot.shape[1])


def prepare(raw_dir, out_dir) -> dict:
    """Convert a raw dataset directory and write files plus ``manifest.json``."""
    raw, out = Path(raw_dir), Path(out_dir)
    if not raw.is_dir():
        raise ConversionError(f"raw dataset directory not found: {raw}")
    layout, name = _detect(raw)
    g = convert_linqs(raw, name) if layout == "linqs" else convert_planetoid(raw, name)
    paths = write_graph(g, out, name)
    manifest = {
        "name": name,
        "source_layout": layout,
        "n_nodes": g.n_nodes,
        "n_edges": g.n_edges,
        "n_features": int(g.features.shape[1]),
        "n_classes": int(g.n_classes),
        "files": {k: p.name for k, p in sorted(paths.items())},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest
