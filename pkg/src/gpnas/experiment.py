"""Experiment orchestration: sweeps, checkpointing and report emission.

A sweep evaluates every architecture under every kernel-scoring
configuration and every training budget, checkpointing each work item as
a JSON file keyed by (arch id, config) so interrupted runs resume.
Reports are CSV files with full provenance per row and are byte-identical
across re-runs with the same config and seeds.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import cost, metrics
from .arch import CellSpec, NetworkPlan, assemble_network, parse_arch, sample_random_arch
from .data import (
    DatasetSplit,
    LabeledSet,
    load_cifar,
    make_split,
    make_synthetic,
    split_pools,
    standardize,
)
from .errors import GpnasError
from .forward import ConvNet, InitConfig
from .nngp import InferenceConfig, nngp_validation_accuracy
from .trainer import TrainConfig, evaluate_accuracy, train

REPORT_HEADER = ("arch_id", "proxy_name", "N_D", "N_val", "n_ensemble",
                 "epochs", "score", "flops", "seed")
PQETP_PERCENTILES = (50.0, 80.0, 95.0, 99.0)
MAX_N_D = 8000  # kernel-inference cost grows as N_D^3; capped


@dataclass(frozen=True)
class SyntheticSpec:
    num_labels: int = 2
    dims: int = 16
    per_class: int = 1500
    separation: float = 3.0
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: architectures x scoring configs x training budgets."""

    nngp_triples: tuple[tuple[int, int, int], ...] = ((100, 500, 8),)
    epoch_budgets: tuple[int, ...] = (4,)
    seed: int = 0
    n_archs: int = 10
    arch_file: str | None = None
    max_vertices: int = 7
    max_edges: int = 9
    out_dir: str = "runs"
    workers: int = 1
    dataset: str = "synthetic"        # "synthetic" | "cifar" | "pools"
    data_dir: str | None = None
    pools: tuple | None = None        # (train LabeledSet, val LabeledSet, L)
    train_pool_size: int = 2000
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    plan: NetworkPlan = field(default_factory=lambda: NetworkPlan(
        stem_channels=8, num_blocks=2, cells_per_block=1,
        input_shape=(4, 4, 1), num_classes=2))
    init: InitConfig = field(default_factory=InitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_d_grid: tuple[int, ...] = (100, 500, 2000, 8000)
    n_val_grid: tuple[int, ...] = (500, 2000, 5000, 10000)
    ensemble_grid: tuple[int, ...] = (1, 2, 4, 8, 16, 32)

    def __post_init__(self):
        for n_d, n_val, n_ens in self.nngp_triples:
            if n_d > MAX_N_D:
                raise ValueError(f"N_D={n_d} exceeds the {MAX_N_D} cap")
            if (n_d not in self.n_d_grid or n_val not in self.n_val_grid
                    or n_ens not in self.ensemble_grid):
                raise ValueError(f"triple {(n_d, n_val, n_ens)} outside declared grids")


def _parse_triples(text: str) -> tuple[tuple[int, int, int], ...]:
    triples = []
    for part in text.split(","):
        part = part.strip()
        if part:
            n_d, n_val, n_ens = (int(v) for v in part.split(":"))
            triples.append((n_d, n_val, n_ens))
    return tuple(triples)


def config_from_file(path: str, **overrides) -> ExperimentConfig:
    """Build an ExperimentConfig from a flat [section] key=value file.

    Only keys present in the file override the defaults; keyword
    arguments override the file.
    """
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    kw = {}
    exp = parser["experiment"] if parser.has_section("experiment") else {}
    if "nngp_triples" in exp:
        kw["nngp_triples"] = _parse_triples(exp["nngp_triples"])
    if "epoch_budgets" in exp:
        kw["epoch_budgets"] = tuple(
            int(v) for v in exp["epoch_budgets"].split(",") if v.strip())
    for key, cast in (("seed", int), ("n_archs", int), ("max_vertices", int),
                      ("max_edges", int), ("out_dir", str), ("workers", int),
                      ("arch_file", str)):
        if key in exp and str(exp[key]).strip():
            kw[key] = cast(exp[key])
    for key in ("n_d_grid", "n_val_grid", "ensemble_grid"):
        if key in exp:
            kw[key] = tuple(int(v) for v in exp[key].split(",") if v.strip())
    if parser.has_section("data"):
        d = parser["data"]
        if "dataset" in d:
            kw["dataset"] = d["dataset"]
        if "data_dir" in d and d["data_dir"].strip():
            kw["data_dir"] = d["data_dir"]
        if "train_pool_size" in d:
            kw["train_pool_size"] = d.getint("train_pool_size")
        kw["synthetic"] = SyntheticSpec(
            num_labels=d.getint("num_labels", SyntheticSpec.num_labels),
            dims=d.getint("dims", SyntheticSpec.dims),
            per_class=d.getint("per_class", SyntheticSpec.per_class),
            separation=d.getfloat("separation", SyntheticSpec.separation),
            seed=d.getint("synthetic_seed", SyntheticSpec.seed))
    if parser.has_section("plan"):
        p = parser["plan"]
        base = NetworkPlan(
            stem_channels=p.getint("stem_channels", 8),
            num_blocks=p.getint("num_blocks", 2),
            cells_per_block=p.getint("cells_per_block", 1),
            input_shape=(p.getint("input_height", 4),
                         p.getint("input_width", 4),
                         p.getint("input_channels", 1)))
        kw["plan"] = base
    if parser.has_section("nngp"):
        n = parser["nngp"]
        kw["init"] = InitConfig(
            seed=n.getint("seed", 0),
            readout_weight_variance=n.getfloat("readout_weight_variance", 1.0),
            conv_gain=n.getfloat("conv_gain", 2.0),
            bn_momentum=n.getfloat("bn_momentum", 0.997),
            bn_warmup_batch=n.getint("bn_warmup_batch", 250))
    if parser.has_section("train"):
        t = parser["train"]
        kw["train"] = TrainConfig(
            epochs=t.getint("epochs", 4),
            batch_size=t.getint("batch_size", 64),
            learning_rate=t.getfloat("learning_rate", 0.05),
            momentum=t.getfloat("momentum", 0.9),
            weight_decay=t.getfloat("weight_decay", 0.0),
            seed=t.getint("seed", 0))
    kw.update(overrides)
    return ExperimentConfig(**kw)


def load_architectures(cfg: ExperimentConfig) -> list[tuple[str, CellSpec]]:
    """(arch id, cell) list from the arch file, or seeded random cells."""
    cells: list[CellSpec] = []
    if cfg.arch_file:
        with open(cfg.arch_file) as fh:
            cells = [parse_arch(line) for line in fh if line.strip()]
    else:
        for i in range(cfg.n_archs):
            cells.append(sample_random_arch((cfg.seed, i), cfg.max_vertices,
                                            cfg.max_edges))
    return [(f"a{i:04d}", cell) for i, cell in enumerate(cells)]


def build_pools(cfg: ExperimentConfig) -> tuple[LabeledSet, LabeledSet, int]:
    """Standardized (train pool, val pool, label count) for the sweep."""
    if cfg.dataset == "pools":
        if cfg.pools is None:
            raise ValueError("dataset='pools' needs cfg.pools")
        train_pool, val_pool, num_labels = cfg.pools
    elif cfg.dataset == "cifar":
        if not cfg.data_dir:
            raise ValueError("cifar dataset needs data_dir")
        train_raw, test_raw = load_cifar(cfg.data_dir)
        train_pool = LabeledSet(standardize(train_raw.x), train_raw.y)
        val_pool = LabeledSet(standardize(test_raw.x), test_raw.y)
        num_labels = 10
    elif cfg.dataset == "synthetic":
        s = cfg.synthetic
        ds = make_synthetic(s.num_labels, s.dims, s.per_class, s.separation, s.seed)
        train_pool, val_pool = split_pools(ds, cfg.train_pool_size, cfg.seed)
        num_labels = s.num_labels
    else:
        raise ValueError(f"unknown dataset {cfg.dataset!r}")
    expect = int(np.prod(cfg.plan.input_shape))
    got = int(np.prod(train_pool.x.shape[1:]))
    if expect != got:
        raise ValueError(f"plan input shape {cfg.plan.input_shape} wants "
                         f"{expect} values per sample, data has {got}")
    return train_pool, val_pool, num_labels


# --- checkpoint store: one JSON per (arch_id, config) key ---

def _checkpoint_path(out_dir: str, key: str) -> str:
    return os.path.join(out_dir, "checkpoints", f"{key}.json")


def _load_checkpoint(out_dir: str, key: str):
    path = _checkpoint_path(out_dir, key)
    if os.path.exists(path):
        with open(path) as fh:
            return json.load(fh)
    return None


def _store_checkpoint(out_dir: str, key: str, record: dict) -> None:
    path = _checkpoint_path(out_dir, key)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(record, fh, sort_keys=True)
    os.replace(tmp, path)


def nngp_work_item(cell: CellSpec, cfg: ExperimentConfig, split: DatasetSplit,
                   triple: tuple[int, int, int]) -> dict:
    n_d, n_val, n_ens = triple
    graph = assemble_network(cell, replace(cfg.plan, num_classes=split.num_labels))
    warmup = min(cfg.init.bn_warmup_batch, n_d)
    init_cfg = replace(cfg.init, bn_warmup_batch=warmup)
    inf_cfg = InferenceConfig(n_ensemble=n_ens)
    acc, best_eps, _ = nngp_validation_accuracy(ConvNet(graph, init_cfg), split, inf_cfg)
    flops = cost.nngp_flops(cost.count_inference_flops(graph), graph.feature_dim,
                            n_ens, n_d, n_val, split.num_labels,
                            len(inf_cfg.reg_grid))
    return {"score": acc, "best_eps": best_eps, "flops": flops,
            "params": cost.count_params(graph)}


def train_work_item(cell: CellSpec, cfg: ExperimentConfig,
                    train_pool: LabeledSet, val_pool: LabeledSet,
                    num_labels: int, epochs: int) -> dict:
    graph = assemble_network(cell, replace(cfg.plan, num_classes=num_labels))
    tcfg = replace(cfg.train, epochs=epochs)
    theta = train(graph, cfg.init, train_pool, tcfg)
    acc = evaluate_accuracy(graph, theta, val_pool)
    flops = cost.training_flops(cost.count_inference_flops(graph), epochs,
                                len(train_pool), len(val_pool))
    return {"score": acc, "flops": flops, "params": cost.count_params(graph)}


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(path: str, rows: list[dict]) -> None:
    rows = sorted(rows, key=lambda r: (r["arch_id"], r["proxy_name"]))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for r in rows:
            writer.writerow([_fmt(r.get(k)) for k in REPORT_HEADER])


def read_report(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def report_scores(rows: list[dict], proxy_name: str) -> dict[str, float]:
    """arch_id -> score map for one proxy, skipping failed (NaN) rows."""
    out = {}
    for r in rows:
        if r["proxy_name"] == proxy_name:
            raw = r["score"]
            if raw is None or raw == "":
                continue
            score = float(raw)
            if math.isfinite(score):
                out[r["arch_id"]] = score
    return out


def ranking_tables(rows: list[dict], truth_proxy: str,
                   k: int = 10) -> list[dict]:
    """Tau / correlation / PQETP-curve / discovered-performance rows.

    Truth is the score of `truth_proxy`; every other proxy in the report
    is compared against it over the architectures both cover.
    """
    truth = report_scores(rows, truth_proxy)
    proxies = sorted({r["proxy_name"] for r in rows} - {truth_proxy})
    table = []
    for proxy_name in proxies:
        proxy = report_scores(rows, proxy_name)
        ids = sorted(set(truth) & set(proxy))
        if len(ids) < 2:
            continue
        pairs = metrics.ScorePairSet(
            np.array([proxy[i] for i in ids]),
            np.array([truth[i] for i in ids]), ids=tuple(ids))
        rec = {"proxy_name": proxy_name, "truth_proxy": truth_proxy, "n": len(ids)}

        def _safe(fn, *a):
            try:
                return fn(*a)
            except GpnasError:
                return None

        table.append({**rec, "metric": "kendall_tau", "param": "",
                      "value": _safe(metrics.kendall_tau, pairs)})
        table.append({**rec, "metric": "pearson", "param": "",
                      "value": _safe(metrics.pearson, pairs)})
        truth_vals = np.array([truth[i] for i in ids])
        for pct in PQETP_PERCENTILES:
            p_t = float(np.percentile(truth_vals, pct))
            table.append({**rec, "metric": "pqetp", "param": f"p{pct:g}",
                          "value": _safe(metrics.pqetp, pairs, p_t)})
        kk = min(k, len(ids))
        table.append({**rec, "metric": "discovered_performance",
                      "param": f"k{kk}",
                      "value": _safe(metrics.discovered_performance, pairs, kk)})
    return table


def write_metric_table(path: str, table: list[dict]) -> None:
    header = ("proxy_name", "truth_proxy", "n", "metric", "param", "value")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in table:
            writer.writerow([_fmt(r.get(c)) for c in header])


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Full sweep; returns paths plus the list of per-item failures."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    archs = load_architectures(cfg)
    train_pool, val_pool, num_labels = build_pools(cfg)
    splits = {}
    for triple in cfg.nngp_triples:
        n_d, n_val, _ = triple
        splits[(n_d, n_val)] = make_split(train_pool, val_pool, n_d, n_val,
                                          cfg.seed, num_labels)

    items = []
    for arch_id, cell in archs:
        for triple in cfg.nngp_triples:
            n_d, n_val, n_ens = triple
            key = f"{arch_id}__nngp__nd{n_d}_nv{n_val}_ne{n_ens}"
            proxy = f"nngp-nd{n_d}-nv{n_val}-ne{n_ens}"
            base = {"arch_id": arch_id, "proxy_name": proxy, "N_D": n_d,
                    "N_val": n_val, "n_ensemble": n_ens, "epochs": "",
                    "seed": cfg.seed}
            items.append((key, base, lambda cell=cell, t=triple:
                          nngp_work_item(cell, cfg, splits[t[:2]], t)))
        for epochs in cfg.epoch_budgets:
            key = f"{arch_id}__train__e{epochs}"
            proxy = f"train-e{epochs}"
            base = {"arch_id": arch_id, "proxy_name": proxy, "N_D": "",
                    "N_val": "", "n_ensemble": "", "epochs": epochs,
                    "seed": cfg.seed}
            items.append((key, base, lambda cell=cell, e=epochs:
                          train_work_item(cell, cfg, train_pool, val_pool,
                                          num_labels, e)))

    def run_item(item):
        key, base, fn = item
        record = _load_checkpoint(cfg.out_dir, key)
        if record is None:
            try:
                record = fn()
            except Exception as exc:  # failures recorded, sweep continues
                record = {"score": None, "flops": None, "error": str(exc)}
            record["row"] = base
            _store_checkpoint(cfg.out_dir, key, record)
        return key, record

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_item, items))
    else:
        results = [run_item(item) for item in items]

    failures = [{"key": key, "error": record["error"]}
                for key, record in results if record.get("error")]
    # the report covers the whole store, so successive nngp/train sweeps
    # into one directory accumulate rows instead of clobbering each other
    rows = checkpoint_rows(cfg.out_dir)
    report_path = os.path.join(cfg.out_dir, "report.csv")
    write_report(report_path, rows)
    out = {"report": report_path, "failures": failures}
    if cfg.epoch_budgets:
        truth_proxy = f"train-e{max(cfg.epoch_budgets)}"
        table = ranking_tables(rows, truth_proxy)
        metrics_path = os.path.join(cfg.out_dir, "metrics.csv")
        write_metric_table(metrics_path, table)
        out["metrics"] = metrics_path
    if failures:
        failures_path = os.path.join(cfg.out_dir, "failures.csv")
        with open(failures_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("key", "error"))
            for f in failures:
                writer.writerow((f["key"], f["error"]))
        out["failures_csv"] = failures_path
    return out


def checkpoint_rows(out_dir: str) -> list[dict]:
    """Report rows reassembled from every checkpoint in the store."""
    ckpt_dir = os.path.join(out_dir, "checkpoints")
    rows = []
    if not os.path.isdir(ckpt_dir):
        return rows
    for fname in sorted(os.listdir(ckpt_dir)):
        if not fname.endswith(".json"):
            continue
        with open(os.path.join(ckpt_dir, fname)) as fh:
            record = json.load(fh)
        rows.append({**record["row"], "score": record.get("score"),
                     "flops": record.get("flops")})
    return rows
