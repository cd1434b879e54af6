"""Command line entry point: ``milpgnn <verb> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import experiment as ex
from .canon import FoldableInput, sort_graph
from .generators import GenConfig, RejectionLimit
from .gnn import GnnModel, Readout, Task, TrainConfig, train
from .instance import InvalidInstance, attach_random_features, encode_graph
from .io import Manifest, read_instance, write_label
from .oracle import NodeLimit, UnboundedDomain, canonical_solution, solve_milp
from .wl import check_fold_partition, refine_colors


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _is_manifest(path: Path) -> bool:
    return path.is_dir() or path.name == Manifest.NAME


# -- verbs ------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _load_config(args.config)
    for key in ("variant", "seed", "count", "m", "n", "nnz"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    cfg.setdefault("seed", 0)
    manifest = ex.generate_dataset(GenConfig(**cfg), args.out)
    print(f"wrote {len(manifest.files)} instances to {manifest.root}")
    return 0


def cmd_label(args) -> int:
    cfg = _load_config(args.config)
    omega_seed = args.omega_seed if args.omega_seed is not None else cfg.get("omega_seed", args.seed or 0)
    node_limit = cfg.get("node_limit", args.node_limit)
    feasible = 0
    for target in args.paths:
        path = Path(target)
        if _is_manifest(path):
            manifest = ex.label_dataset(Manifest.read(path), omega_seed, not args.no_canonical, node_limit)
            docs = manifest.load_labels()
            feasible += sum(d["feasible"] for d in docs)
            print(f"labeled {len(docs)} instances in {manifest.root}")
            continue
        inst = read_instance(path)
        lab = solve_milp(inst, node_limit=node_limit)
        canon = None
        if lab.feasible and not args.no_canonical:
            g = encode_graph(inst)
            omega = ex.shared_omega(omega_seed, inst.m, inst.n) if not refine_colors(g).is_discrete else None
            canon = canonical_solution(inst, random_features=omega, label=lab, node_limit=node_limit)
        out = Path(args.out) / (path.stem + ".label.json") if args.out else path.with_suffix(".label.json")
        write_label(lab, out, canon)
        feasible += lab.feasible
        print(f"{path}: feasible={int(lab.feasible)} objective={lab.objective!r} nodes={lab.node_count}")
    print(f"feasible: {feasible}")
    return 0


def _dump_colors(coloring, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "side", "index", "color"])
        for r, (vc, wc) in enumerate(coloring.history):
            w.writerows([r, "V", i, c] for i, c in enumerate(vc))
            w.writerows([r, "W", j, c] for j, c in enumerate(wc))


def cmd_analyze(args) -> int:
    path = Path(args.path)
    if _is_manifest(path):
        manifest = Manifest.read(path)
        insts = manifest.load_instances()
        foldable = sum(not refine_colors(encode_graph(i)).is_discrete for i in insts)
        print(f"{len(insts)} instances, {foldable} foldable")
        if args.dump_colors:
            raise SystemExit("--dump-colors needs a single instance file")
        return 0
    inst = read_instance(path)
    g = encode_graph(inst)
    if args.omega_seed is not None:
        g = attach_random_features(g, ex.shared_omega(args.omega_seed, g.m, g.n))
    col = refine_colors(g)
    print(f"rounds: {col.rounds}")
    print(f"V blocks: {col.s} of {g.m}; W blocks: {col.t} of {g.n}")
    print(f"foldable: {str(not col.is_discrete).lower()}")
    if args.omega_seed is None:
        print(f"partition check: {'pass' if check_fold_partition(inst, col) else 'fail'}")
    if args.dump_colors:
        _dump_colors(col, args.dump_colors)
    return 0


def cmd_canon(args) -> int:
    inst = read_instance(args.path)
    g = encode_graph(inst)
    omega = None
    if args.omega_seed is not None:
        omega = ex.shared_omega(args.omega_seed, g.m, g.n)
        g = attach_random_features(g, omega)
    order = sort_graph(g)
    print("order: " + " ".join(str(j) for j in order.sigma_w))
    if args.solve:
        x = canonical_solution(inst, order=order.sigma_w)
        print("solution: " + " ".join(repr(float(v)) for v in x))
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    task = Task(args.task or cfg.get("task", "feas"))
    d = args.d or cfg.get("d", 16)
    rand = args.random_features or cfg.get("random_features", False)
    data = ex.load_task_data(args.manifest, task, args.size or cfg.get("size"), rand)
    model = GnnModel(d, cfg.get("layers", 2), Readout.NODE if task is Task.SOLU else Readout.GRAPH,
                     rand, args.seed if args.seed is not None else cfg.get("seed", 0), cfg.get("init", "he"))
    tc = TrainConfig(
        learning_rate=args.lr or cfg.get("learning_rate", 1e-4),
        epochs=args.epochs if args.epochs is not None else cfg.get("epochs", 100),
        batch_size=args.batch_size or cfg.get("batch_size", 20),
        seed=model.seed, task=task,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = train(model, data.graphs, data.targets, tc, out / "train_log.csv")
    model.save(out / "model.npz")
    print(f"final {task.value} train error: {log.final_error!r} ({model.n_params} parameters)")
    return 0


def cmd_experiment(args) -> int:
    if args.config is None:
        raise SystemExit("experiment needs --config <spec.json>")
    spec = ex.ExperimentSpec.load(args.config)
    spec = spec.with_overrides(
        seeds=None if args.seed is None else (args.seed,),
        epochs=args.epochs,
        d_values=None if not args.d else tuple(args.d),
    )

    def progress(row):
        print(f"d={row['d']} seed={row['seed']} train_err={row['train_err']} test_err={row['test_err']}",
              flush=True)

    rows = ex.run_experiment(spec, args.out, progress)
    print(f"wrote {len(rows)} rows to {Path(args.out) / 'results.csv'}")
    return 0


def cmd_report(args) -> int:
    print(ex.report(args.results, args.out), end="")
    return 0


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="milpgnn", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required)
        sp.add_argument("--config", help="JSON file with default options")

    sp = sub.add_parser("gen", help="generate a dataset")
    common(sp, out_required=True)
    sp.add_argument("--variant", choices=["d1", "d2", "d2gen", "counterexample"])
    sp.add_argument("--count", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--nnz", type=int)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("label", help="solve instances and write label files")
    common(sp)
    sp.add_argument("paths", nargs="+", help="instance files or dataset directories/manifests")
    sp.add_argument("--omega-seed", type=int, help="seed of the shared random vector (default: --seed or 0)")
    sp.add_argument("--node-limit", type=int, default=10**6)
    sp.add_argument("--no-canonical", action="store_true", help="skip canonical solutions")
    sp.set_defaults(func=cmd_label)

    sp = sub.add_parser("analyze", help="WL refinement and foldability")
    common(sp)
    sp.add_argument("path")
    sp.add_argument("--omega-seed", type=int, help="attach the shared random vector first")
    sp.add_argument("--dump-colors", metavar="CSV", help="write per-round colors")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("canon", help="canonical variable order (and solution)")
    common(sp)
    sp.add_argument("path")
    sp.add_argument("--omega-seed", type=int)
    sp.add_argument("--solve", action="store_true", help="also print the canonical optimal solution")
    sp.set_defaults(func=cmd_canon)

    sp = sub.add_parser("train", help="train one model on a labeled dataset")
    common(sp, out_required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--task", choices=[t.value for t in Task])
    sp.add_argument("--d", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--size", type=int)
    sp.add_argument("--random-features", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("experiment", help="run an experiment spec")
    common(sp, out_required=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--d", type=int, nargs="*")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("report", help="summarize a results CSV")
    common(sp)
    sp.add_argument("results")
    sp.set_defaults(func=cmd_report)
    return p


EXPECTED_ERRORS = (
    ValueError, FileNotFoundError, KeyError, InvalidInstance, FoldableInput, UnboundedDomain,
    NodeLimit, RejectionLimit, json.JSONDecodeError,
)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EXPECTED_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
