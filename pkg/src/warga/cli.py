"""Command-line runner: ``warga {prepare,synth,train,sweep,eval}``.

Settings are resolved in this order, later wins: built-in defaults, dataset
profile (selected by dataset name), ``--config`` JSON file, explicit flags.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import ConversionError, prepare
from .evaluation import aggregate, ari, clustering_accuracy, format_table, kmeans, nmi
from .graph import Graph, SbmSpec, generate_sbm, load_graph, split_edges, write_graph
from .linalg import make_rng
from .models import save_checkpoint
from .training import TrainConfig, TrainingError, link_metrics, train

log = logging.getLogger("warga")

# per-dataset schedules; names are matched case-insensitively against the manifest name
PROFILES = {
    "cora": {"epochs": 200, "lr_encoder": 1e-3, "lr_critic": 1e-3},
    "citeseer": {"epochs": 200, "lr_encoder": 1e-3, "lr_critic": 1e-3},
    "pubmed": {"epochs": 1500, "lr_encoder": 5e-3, "lr_critic": 5e-3},
}

VAL_FRAC, TEST_FRAC = 0.05, 0.10
KMEANS_SEED_OFFSET = 7919  # keeps the K-means stream apart from the training stream


@dataclass
class ExperimentConfig:
    data: str
    train: TrainConfig
    seeds: list[int]
    out: str
    split_seed: int = 0
    kmeans_restarts: int = 10
    workers: int = 1
    dataset_name: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"duplicate seeds in {self.seeds}")

    def to_dict(self) -> dict:
        return {"data": self.data, "dataset_name": self.dataset_name, "train": self.train.to_dict(),
                "seeds": list(self.seeds), "split_seed": self.split_seed, "out": self.out,
                "kmeans_restarts": self.kmeans_restarts, "val_frac": VAL_FRAC, "test_frac": TEST_FRAC}


def version_string() -> str:
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                           cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5)
        if r.returncode == 0 and r.stdout.strip():
            return f"{__version__}+{r.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def parse_seeds(text: str) -> list[int]:
    """``"0..9"`` (inclusive range), ``"1,4,7"`` or a mix such as ``"0..2,10"``."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    return seeds


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


# -- dataset access -------------------------------------------------------------

def load_dataset(data_dir) -> tuple[Graph, dict]:
    data_dir = Path(data_dir)
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"{data_dir}: no manifest.json (run `warga prepare` or `warga synth`)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    files = manifest["files"]
    labels = data_dir / files["labels"] if "labels" in files else None
    g = load_graph(data_dir / files["edges"], data_dir / files["features"], labels)
    return g, manifest


def dataset_split(g: Graph, split_seed: int):
    return split_edges(g, VAL_FRAC, TEST_FRAC, make_rng(split_seed))


# -- persistence ------------------------------------------------------------------

def write_embedding(path, z: np.ndarray) -> None:
    """Text format: header ``N e`` then N rows of e round-trippable floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{z.shape[0]} {z.shape[1]}\n")
        for row in z:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    np.save(Path(path).with_suffix(".npy"), z)


def read_embedding(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"embedding not found: {path}")
    with open(path, encoding="utf-8") as fh:
        n, e = (int(v) for v in fh.readline().split())
        z = np.array([[float(v) for v in line.split()] for line in fh if line.strip()])
    return z.reshape(n, e)


def _dump(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def clustering_metrics(z, labels, n_classes, seed, restarts) -> dict[str, float]:
    assign = kmeans(z, n_classes, make_rng(seed + KMEANS_SEED_OFFSET), restarts)
    return {"acc": clustering_accuracy(assign.labels, labels),
            "nmi": nmi(assign.labels, labels),
            "ari": ari(assign.labels, labels)}


def evaluate_embedding(z, g: Graph, split, seed: int, restarts: int) -> dict:
    out = {"test": link_metrics(z, split.test_pos, split.test_neg),
           "val": link_metrics(z, split.val_pos, split.val_neg)}
    if g.labels is not None:
        out["clustering"] = clustering_metrics(z, g.labels, g.n_classes, seed, restarts)
    return out


# -- commands -----------------------------------------------------------------------

def _run_seed(exp: ExperimentConfig, seed: int) -> dict:
    g, _ = load_dataset(exp.data)
    split = dataset_split(g, exp.split_seed)
    cfg = TrainConfig(**{**exp.train.to_dict(), "seed": seed})
    run_dir = Path(exp.out) / f"seed_{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    report = train(g, split, cfg)
    metrics = {"seed": seed, "split_seed": exp.split_seed, "model": cfg.model,
               **evaluate_embedding(report.embedding, g, split, seed, exp.kmeans_restarts)}
    save_checkpoint(run_dir / "checkpoint.json", report.params,
                    meta={"config": cfg.to_dict(), "version": version_string()})
    write_embedding(run_dir / "embedding.txt", report.embedding)
    with open(run_dir / "losses.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "reconstruction", "regularizer", "total", "val_auc", "val_ap"])
        for i, lb in enumerate(report.losses):
            w.writerow([i + 1, repr(lb.reconstruction), repr(lb.regularizer), repr(lb.total),
                        "" if report.val_auc[i] is None else repr(report.val_auc[i]),
                        "" if report.val_ap[i] is None else repr(report.val_ap[i])])
    _dump(run_dir / "metrics.json", metrics)
    _dump(run_dir / "timing.json", {"seconds": report.seconds})
    log.info("seed %d: test AUC %.4f AP %.4f (%.1fs)", seed, metrics["test"]["auc"],
             metrics["test"]["ap"], report.seconds)
    return metrics


def _flatten(m: dict) -> dict[str, float]:
    flat = {"auc": m["test"]["auc"], "ap": m["test"]["ap"]}
    if "clustering" in m:
        flat.update(m["clustering"])
    return flat


def cmd_train(exp: ExperimentConfig) -> dict:
    out = Path(exp.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "config.json", {**exp.to_dict(), "version": version_string()})
    if exp.workers > 1 and len(exp.seeds) > 1:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            per_seed = list(pool.map(_run_seed, [exp] * len(exp.seeds), exp.seeds))
    else:
        per_seed = [_run_seed(exp, s) for s in exp.seeds]
    report = aggregate([_flatten(m) for m in per_seed])
    _dump(out / "report.json", {"model": exp.train.model, "seeds": list(exp.seeds), **report.to_dict()})
    name = f"{exp.train.model.upper()} ({exp.dataset_name or Path(exp.data).name})"
    table = format_table({name: report}, list(report.mean))
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    log.info("\n%s", table)
    return report.to_dict()


def cmd_sweep(exp: ExperimentConfig, first: list[int], second: list[int]) -> dict:
    if min(first + second) < 1:
        raise ValueError("layer widths must be >= 1")
    out = Path(exp.out)
    grid = {"first": first, "second": second, "auc": [], "ap": []}
    for d in first:
        row_auc, row_ap = [], []
        for e in second:
            cell = ExperimentConfig(**{**exp.__dict__,
                                       "train": TrainConfig(**{**exp.train.to_dict(), "hidden": d, "embed": e}),
                                       "out": str(out / f"cell_{d}x{e}")})
            rep = cmd_train(cell)
            row_auc.append(rep["mean"]["auc"])
            row_ap.append(rep["mean"]["ap"])
        grid["auc"].append(row_auc)
        grid["ap"].append(row_ap)
    _dump(out / "sweep.json", grid)
    for metric in ("auc", "ap"):
        with open(out / f"sweep_{metric}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["first\\second"] + second)
            for d, row in zip(first, grid[metric]):
                w.writerow([d] + [repr(v) for v in row])
    return grid


def cmd_eval(run_dir, data_dir, split_seed: int | None = None, restarts: int | None = None) -> dict:
    """Recompute link and clustering metrics from a saved embedding."""
    run_dir = Path(run_dir)
    ckpt = run_dir / "checkpoint.json"
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    z = read_embedding(run_dir / "embedding.txt")
    saved = json.loads((run_dir / "metrics.json").read_text(encoding="utf-8"))
    parent_cfg = run_dir.parent / "config.json"
    exp_cfg = json.loads(parent_cfg.read_text(encoding="utf-8")) if parent_cfg.is_file() else {}
    if split_seed is None:
        split_seed = saved["split_seed"]
    if restarts is None:
        restarts = exp_cfg.get("kmeans_restarts", 10)
    g, _ = load_dataset(data_dir)
    if z.shape[0] != g.n_nodes:
        raise ValueError(f"embedding has {z.shape[0]} rows, dataset has {g.n_nodes} nodes")
    split = dataset_split(g, split_seed)
    return {"seed": saved["seed"], "split_seed": split_seed, "model": saved["model"],
            **evaluate_embedding(z, g, split, saved["seed"], restarts)}


def cmd_synth(spec: SbmSpec, out_dir) -> dict:
    g = generate_sbm(spec)
    name = "sbm"
    paths = write_graph(g, out_dir, name)
    manifest = {"name": name, "source_layout": "sbm", "n_nodes": g.n_nodes, "n_edges": g.n_edges,
                "n_features": int(g.features.shape[1]), "n_classes": int(g.n_classes),
                "sbm": {"block_sizes": list(spec.block_sizes), "p_in": spec.p_in, "p_out": spec.p_out,
                        "features": spec.features, "seed": spec.seed},
                "files": {k: p.name for k, p in sorted(paths.items())}}
    _dump(Path(out_dir) / "manifest.json", manifest)
    return manifest


# -- argument handling ---------------------------------------------------------------

_TRAIN_FLAGS = {
    # field: (flag, type, help)
    "model": ("--model", str, "warga | gae | vgae | arga | arvga"),
    "epochs": ("--epochs", int, "training epochs T"),
    "critic_iters": ("--critic-iters", int, "critic (or K) iterations per epoch"),
    "batch_size": ("--batch-size", int, "critic batch size m; omit for full batch m = N"),
    "hidden": ("--hidden", int, "first GCN layer width"),
    "embed": ("--embed", int, "embedding width"),
    "critic_hidden": ("--critic-hidden", _int_list, "critic/discriminator hidden widths, e.g. 16,64"),
    "lr_encoder": ("--lr-encoder", float, "encoder Adam learning rate"),
    "lr_critic": ("--lr-critic", float, "critic/discriminator Adam learning rate"),
    "clip": ("--clip", float, "critic clipping bound"),
    "lam": ("--lam", float, "regularizer weight"),
    "final_activation": ("--final-activation", str, "relu | linear on the embedding layer"),
    "weighted_recon": ("--weighted-recon", int, "1/0: pos_weight/norm weighting of the reconstruction loss"),
    "include_diagonal": ("--include-diagonal", int, "1/0: self-pairs in the reconstruction target"),
    "normalize_features": ("--normalize-features", int, "1/0: row-normalize features"),
    "kl_weight": ("--kl-weight", float, "KL weight for vgae/arvga; omit for 1/N"),
    "eval_every": ("--eval-every", int, "validation cadence in epochs"),
}


def _add_experiment_args(p: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    p.add_argument("--data", required=True, help="prepared dataset directory (contains manifest.json)")
    p.add_argument("--out", required=True, help="output run directory")
    p.add_argument("--config", help="flat JSON file of settings; flags override it")
    p.add_argument("--seeds", default=None, help="training seeds, e.g. 0..9 (default 0)")
    p.add_argument("--split-seed", type=int, default=None, help="edge split seed (default 0)")
    p.add_argument("--kmeans-restarts", type=int, default=None, help="K-means restarts (default 10)")
    p.add_argument("--workers", type=int, default=None, help="parallel seed workers (default 1)")
    for name, (flag, typ, text) in _TRAIN_FLAGS.items():
        default = getattr(defaults, name)
        p.add_argument(flag, dest=name, type=typ, default=None, help=f"{text} (default {default})")


def build_experiment(args) -> ExperimentConfig:
    _, manifest = load_dataset(args.data)
    name = str(manifest.get("name", "")).lower()
    settings: dict = {}
    if name in PROFILES:
        settings.update(PROFILES[name])
        log.info("dataset profile %r: %s", name, PROFILES[name])
    if args.config:
        settings.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for key in list(_TRAIN_FLAGS) + ["seeds", "split_seed", "kmeans_restarts", "workers"]:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    seeds = settings.pop("seeds", [0])
    if isinstance(seeds, str):
        seeds = parse_seeds(seeds)
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = set(settings) - train_keys - {"split_seed", "kmeans_restarts", "workers"}
    if unknown:
        raise ValueError(f"unknown settings: {sorted(unknown)}")
    for k in ("weighted_recon", "include_diagonal", "normalize_features"):
        if k in settings:
            settings[k] = bool(settings[k])
    cfg = TrainConfig(**{k: v for k, v in settings.items() if k in train_keys})
    log.info("schedule: epochs=%d lr_encoder=%g lr_critic=%g", cfg.epochs, cfg.lr_encoder, cfg.lr_critic)
    return ExperimentConfig(data=str(args.data), train=cfg, seeds=list(seeds), out=str(args.out),
                            split_seed=settings.get("split_seed", 0),
                            kmeans_restarts=settings.get("kmeans_restarts", 10),
                            workers=settings.get("workers", 1), dataset_name=name)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="warga", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="convert a raw Cora/Citeseer/PubMed directory")
    p.add_argument("raw_dir")
    p.add_argument("out_dir")

    p = sub.add_parser("synth", help="write a stochastic-block-model dataset")
    p.add_argument("--blocks", type=_int_list, default=[50, 50], help="block sizes (default 50,50)")
    p.add_argument("--p-in", type=float, default=0.2, help="within-block edge probability (default 0.2)")
    p.add_argument("--p-out", type=float, default=0.01, help="cross-block edge probability (default 0.01)")
    p.add_argument("--features", default="identity", help="identity | onehot (default identity)")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train over one or more seeds")
    _add_experiment_args(p)

    p = sub.add_parser("sweep", help="grid over first-layer and embedding widths")
    _add_experiment_args(p)
    p.add_argument("--first", type=_int_list, default=[32, 64, 128], help="first-layer widths (default 32,64,128)")
    p.add_argument("--second", type=_int_list, default=[16, 32, 64, 128],
                   help="embedding widths (default 16,32,64,128)")

    p = sub.add_parser("eval", help="recompute metrics from a saved seed run directory")
    p.add_argument("--run", required=True, help="seed run directory (contains checkpoint.json)")
    p.add_argument("--data", required=True)
    p.add_argument("--split-seed", type=int, default=None, help="defaults to the run's split seed")
    p.add_argument("--out", help="write metrics JSON here instead of stdout")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "prepare":
            print(json.dumps(prepare(args.raw_dir, args.out_dir), indent=2, sort_keys=True))
        elif args.command == "synth":
            spec = SbmSpec(tuple(args.blocks), args.p_in, args.p_out, args.features, args.seed)
            print(json.dumps(cmd_synth(spec, args.out), indent=2, sort_keys=True))
        elif args.command == "train":
            cmd_train(build_experiment(args))
        elif args.command == "sweep":
            cmd_sweep(build_experiment(args), args.first, args.second)
        elif args.command == "eval":
            metrics = cmd_eval(args.run, args.data, args.split_seed)
            if args.out:
                _dump(args.out, metrics)
            else:
                print(json.dumps(metrics, indent=2, sort_keys=True))
    except (TrainingError, ConversionError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
