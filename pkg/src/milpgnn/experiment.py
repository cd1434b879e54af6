"""Dataset pipeline (generate, label) and experiment orchestration (train, evaluate, report).

Labels for a dataset are computed against one shared random vector omega,
drawn from ``omega_seed`` and recorded in the manifest. Canonical solutions of
foldable instances use the order of the omega-augmented graph; unfoldable
instances are ordered from the graph alone, so their targets do not depend on
omega.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .generators import GenConfig, generate
from .gnn import GnnModel, Readout, Task, TrainConfig, evaluate, train
from .instance import MilpGraph, attach_random_features, encode_graph, sample_random_features
from .io import Manifest, read_label_doc, write_instance, write_label
from .oracle import DEFAULT_TOL, canonical_solution, solve_milp
from .wl import is_foldable


class MissingLabels(FileNotFoundError):
    pass


class ConfigMismatch(ValueError):
    pass


RESULT_COLUMNS = (
    "experiment", "task", "variant", "d", "n_params", "seed", "train_err", "test_err",
    "epochs", "wall_ms", "n_train", "n_test", "manifest", "checkpoint",
)
# columns that legitimately differ between identical reruns
NONDETERMINISTIC_COLUMNS = ("wall_ms",)


# -- datasets -----------------------------------------------------------------------

def generate_dataset(cfg: GenConfig, out_dir) -> Manifest:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    insts = generate(cfg)
    files = []
    for k, inst in enumerate(insts):
        name = f"inst_{k:05d}.json"
        write_instance(inst, out / name)
        files.append(name)
    config = {key: (v.value if hasattr(v, "value") else v) for key, v in dataclasses.asdict(cfg).items()}
    manifest = Manifest(out, files, cfg.variant.value, cfg.seed, config)
    manifest.write()
    return manifest


def shared_omega(omega_seed: int, m: int, n: int):
    return sample_random_features(m, n, np.random.default_rng(omega_seed))


def label_dataset(manifest: Manifest, omega_seed: int = 0, canonical: bool = True,
                  node_limit: int = 10**6, progress=None) -> Manifest:
    """Solve every instance; write ``<name>.label.json`` files and record them in the manifest."""
    labels = []
    for k, (name, inst) in enumerate(zip(manifest.files, manifest.load_instances())):
        lab = solve_milp(inst, node_limit=node_limit)
        canon = None
        if canonical and lab.feasible:
            g = encode_graph(inst)
            omega = shared_omega(omega_seed, inst.m, inst.n) if is_foldable(g) else None
            canon = canonical_solution(inst, random_features=omega, label=lab, node_limit=node_limit)
        label_name = name[:-len(".json")] + ".label.json"
        write_label(lab, manifest.root / label_name, canon)
        labels.append(label_name)
        if progress is not None:
            progress(k, lab)
    manifest.labels = labels
    manifest.config["omega_seed"] = int(omega_seed)
    manifest.config["tolerances"] = dataclasses.asdict(DEFAULT_TOL)
    manifest.write()
    return manifest


# -- experiment spec ----------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    task: Task
    train_manifest: str
    test_manifest: Optional[str] = None
    variant: Optional[str] = None
    d_values: Tuple[int, ...] = (2, 4, 8, 16, 32, 64, 128)
    epochs: int = 1000
    seeds: Tuple[int, ...] = (0, 1, 2)
    random_features: bool = False
    train_size: Optional[int] = None
    test_size: Optional[int] = None
    batch_size: int = 20
    learning_rate: float = 1e-4
    layers: int = 2
    init: str = "he"
    stop_at_error: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "d_values", tuple(int(d) for d in self.d_values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.d_values or not self.seeds:
            raise ValueError("need at least one d and one seed")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0, batch_size and learning_rate positive")

    @classmethod
    def from_dict(cls, doc: dict, base: Optional[Path] = None) -> "ExperimentSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        doc = dict(doc)
        for key in ("train_manifest", "test_manifest"):
            if doc.get(key) is not None and base is not None and not Path(doc[key]).is_absolute():
                doc[key] = str(base / doc[key])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["task"] = self.task.value
        doc["d_values"], doc["seeds"] = list(self.d_values), list(self.seeds)
        return doc

    def with_overrides(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    @property
    def variant_label(self) -> str:
        if self.variant:
            return self.variant
        base = Manifest.read(self.train_manifest).variant
        return base + "+rand" if self.random_features else base


@dataclass
class TaskData:
    graphs: List[MilpGraph]
    targets: list
    omega_seed: Optional[int]
    manifest: Manifest = field(repr=False)


def _load_labels(manifest: Manifest) -> List[dict]:
    if manifest.labels is None:
        raise MissingLabels(f"dataset {manifest.root} has no labels; run the label step first")
    missing = [p for p in manifest.label_paths() if not p.exists()]
    if missing:
        raise MissingLabels(f"label file {missing[0]} is missing")
    return [read_label_doc(p) for p in manifest.label_paths()]


def load_task_data(manifest_path, task: Task, size: Optional[int] = None,
                   random_features: bool = False) -> TaskData:
    """Instances and targets for ``task``; OBJ and SOLU keep only feasible instances.

    ``size`` counts instances before the feasibility filter.
    """
    manifest = Manifest.read(manifest_path)
    insts = manifest.load_instances()
    labels = _load_labels(manifest)
    if size is not None:
        if size > len(insts):
            raise ConfigMismatch(f"requested {size} instances but {manifest.root} holds {len(insts)}")
        insts, labels = insts[:size], labels[:size]
    omega_seed = manifest.config.get("omega_seed")
    graphs, targets = [], []
    for inst, lab in zip(insts, labels):
        if task is Task.FEAS:
            target = float(lab["feasible"])
        elif not lab["feasible"]:
            continue
        elif task is Task.OBJ:
            target = float(lab["objective"])
        else:
            if "canonical_solution" not in lab:
                raise MissingLabels(f"{manifest.root} was labeled without canonical solutions")
            target = np.asarray(lab["canonical_solution"], dtype=float)
        g = encode_graph(inst)
        if random_features:
            if omega_seed is None:
                raise ConfigMismatch(f"{manifest.root} records no omega seed")
            g = attach_random_features(g, shared_omega(omega_seed, g.m, g.n))
        graphs.append(g)
        targets.append(target)
    if not graphs:
        raise ConfigMismatch(f"no usable instances for task {task.value} in {manifest.root}")
    return TaskData(graphs, targets, omega_seed, manifest)


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def run_experiment(spec: ExperimentSpec, out_dir, progress=None) -> List[dict]:
    """Train one model per (d, seed), write checkpoints, logs and ``results.csv``."""
    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    train_data = load_task_data(spec.train_manifest, spec.task, spec.train_size, spec.random_features)
    test_data = None
    if spec.test_manifest is not None:
        test_data = load_task_data(spec.test_manifest, spec.task, spec.test_size, spec.random_features)
        if spec.random_features and test_data.omega_seed != train_data.omega_seed:
            raise ConfigMismatch("train and test sets were labeled with different omega seeds")
    readout = Readout.NODE if spec.task is Task.SOLU else Readout.GRAPH
    variant = spec.variant_label
    rows = []
    for d in spec.d_values:
        for seed in spec.seeds:
            tag = f"{spec.name}_d{d}_s{seed}"
            model = GnnModel(d, spec.layers, readout, spec.random_features, seed, spec.init)
            cfg = TrainConfig(learning_rate=spec.learning_rate, epochs=spec.epochs,
                              batch_size=spec.batch_size, seed=seed, task=spec.task,
                              stop_at_error=spec.stop_at_error)
            start = time.perf_counter()
            log = train(model, train_data.graphs, train_data.targets, cfg, out / "logs" / f"{tag}.csv")
            wall_ms = (time.perf_counter() - start) * 1e3
            test_err = None
            if test_data is not None:
                test_err = evaluate(model, spec.task, test_data.graphs, test_data.targets)
            ckpt = Path("checkpoints") / f"{tag}.npz"
            model.save(out / ckpt)
            row = {
                "experiment": spec.name, "task": spec.task.value, "variant": variant, "d": d,
                "n_params": model.n_params, "seed": seed, "train_err": _fmt(log.final_error),
                "test_err": _fmt(test_err), "epochs": len(log.rows), "wall_ms": f"{wall_ms:.1f}",
                "n_train": len(train_data.graphs), "n_test": len(test_data.graphs) if test_data else 0,
                "manifest": str(Path(spec.train_manifest)), "checkpoint": str(ckpt),
            }
            rows.append(row)
            if progress is not None:
                progress(row)
    rows.sort(key=lambda r: (r["experiment"], r["d"], r["seed"]))
    write_results(rows, out / "results.csv")
    return rows


def write_results(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in RESULT_COLUMNS})


def read_results(path) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def comparable_rows(rows: Sequence[dict]) -> List[tuple]:
    """Rows with the timing column dropped, for rerun comparisons."""
    keep = [c for c in RESULT_COLUMNS if c not in NONDETERMINISTIC_COLUMNS]
    return [tuple(str(r[c]) for c in keep) for r in rows]


# -- report -------------------------------------------------------------------------

SUMMARY_COLUMNS = ("experiment", "task", "variant", "d", "n_train", "n_params", "seeds",
                   "train_err", "test_err")

FIGURES = {
    "fig4_feasibility.csv": (("feas",), ("variant", "n_params", "d", "err")),
    "fig5a_objective.csv": (("obj",), ("variant", "n_params", "err")),
    "fig5b_solution.csv": (("solu",), ("variant", "n_params", "err")),
}


def _median(values: List[str]) -> Optional[float]:
    vals = [float(v) for v in values if v not in ("", None)]
    return statistics.median(vals) if vals else None


def summarize(rows: Sequence[dict]) -> List[dict]:
    """Median over seeds of every (experiment, task, variant, d, n_train) cell."""
    if not rows:
        raise ValueError("empty results")
    groups: Dict[tuple, List[dict]] = {}
    for r in rows:
        key = (r["experiment"], r["task"], r["variant"], int(r["d"]), int(r["n_train"]))
        groups.setdefault(key, []).append(r)
    out = []
    for key in sorted(groups):
        rs = groups[key]
        out.append({
            "experiment": key[0], "task": key[1], "variant": key[2], "d": key[3], "n_train": key[4],
            "n_params": int(rs[0]["n_params"]), "seeds": len(rs),
            "train_err": _median([r["train_err"] for r in rs]),
            "test_err": _median([r["test_err"] for r in rs]),
        })
    return out


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cell(x) -> str:
    return "" if x is None else repr(x)


def report(results_path, out_dir=None) -> str:
    """Summary text; with ``out_dir``, also summary.csv and per-figure plot-data CSVs."""
    summary = summarize(read_results(results_path))
    text = io.StringIO()
    for s in summary:
        line = (f"{s['experiment']} {s['task']} {s['variant']} d={s['d']} n_train={s['n_train']} "
                f"params={s['n_params']} seeds={s['seeds']} train_err={_cell(s['train_err'])}")
        if s["test_err"] is not None:
            line += f" test_err={_cell(s['test_err'])}"
        text.write(line + "\n")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS,
                   [[_cell(s[c]) if c in ("train_err", "test_err") else s[c] for c in SUMMARY_COLUMNS]
                    for s in summary])
        for name, (tasks, cols) in FIGURES.items():
            sel = [s for s in summary if s["task"] in tasks]
            if sel:
                _write_csv(out / name, cols, [
                    [_cell(s["train_err"]) if c == "err" else s[c] for c in cols] for s in sel
                ])
        gen = [s for s in summary if s["test_err"] is not None]
        if gen:
            _write_csv(out / "generalization.csv",
                       ("experiment", "task", "variant", "d", "n_train", "train_err", "test_err"),
                       [[s["experiment"], s["task"], s["variant"], s["d"], s["n_train"],
                         _cell(s["train_err"]), _cell(s["test_err"])] for s in gen])
    return text.getvalue()
