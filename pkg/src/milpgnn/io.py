"""On-disk formats: instance documents, label files and dataset manifests.

All files are UTF-8 JSON. Floats are written with Python's shortest
round-trip repr, so values written here read back bit-exactly.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import List, Optional, Sequence

from .instance import MilpInstance, Sense

FORMAT_VERSION = 1


def _bound_out(v, inf_text):
    return inf_text if v is None else float(v)


def _bound_in(v, inf_text):
    if isinstance(v, str):
        if v.strip() != inf_text:
            raise ValueError(f"bad bound {v!r}; expected a number or {inf_text!r}")
        return None
    if not math.isfinite(v):
        return None
    return float(v)


def instance_to_dict(inst: MilpInstance) -> dict:
    return {
        "m": inst.m,
        "n": inst.n,
        "A": [[i, j, v] for i, j, v in inst.entries],
        "b": [float(v) for v in inst.b],
        "senses": [s.symbol for s in inst.senses],
        "c": [float(v) for v in inst.c],
        "l": [_bound_out(v, "-inf") for v in inst.lower],
        "u": [_bound_out(v, "+inf") for v in inst.upper],
        "I": list(inst.integer_indices),
    }


def instance_from_dict(doc: dict) -> MilpInstance:
    m, n = int(doc["m"]), int(doc["n"])
    mask = [False] * n
    for j in doc.get("I", []):
        mask[int(j)] = True
    return MilpInstance(
        m, n, [(int(i), int(j), float(v)) for i, j, v in doc["A"]],
        [float(v) for v in doc["b"]], [Sense.parse(s) for s in doc["senses"]],
        [float(v) for v in doc["c"]],
        [_bound_in(v, "-inf") for v in doc["l"]], [_bound_in(v, "+inf") for v in doc["u"]],
        mask,
    )


def dumps_instance(inst: MilpInstance) -> str:
    return json.dumps(instance_to_dict(inst), separators=(",", ":"), allow_nan=False)


def write_instance(inst: MilpInstance, path) -> None:
    Path(path).write_text(dumps_instance(inst) + "\n", encoding="utf-8")


def read_instance(path) -> MilpInstance:
    return instance_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def label_to_dict(label) -> dict:
    return {
        "feasible": int(label.feasible),
        "objective": "inf" if not label.feasible else float(label.objective),
        "solution": None if label.solution is None else [float(v) for v in label.solution],
        "node_count": int(label.node_count),
    }


def label_from_dict(doc: dict):
    from .oracle import OracleLabel

    feasible = bool(doc["feasible"])
    objective = math.inf if doc["objective"] == "inf" else float(doc["objective"])
    solution = doc.get("solution")
    return OracleLabel(feasible, objective, None if solution is None else tuple(solution),
                       int(doc.get("node_count", 0)))


def write_label(label, path, canonical=None) -> None:
    doc = label_to_dict(label)
    if canonical is not None:
        doc["canonical_solution"] = [float(v) for v in canonical]
    Path(path).write_text(json.dumps(doc, allow_nan=False) + "\n", encoding="utf-8")


def read_label_doc(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


class Manifest:
    """Index of a generated dataset directory."""

    NAME = "manifest.json"

    def __init__(self, root, files: Sequence[str], variant: str, seed: int,
                 config: Optional[dict] = None, labels: Optional[Sequence[str]] = None):
        self.root = Path(root)
        self.files = list(files)
        self.variant = variant
        self.seed = int(seed)
        self.config = dict(config or {})
        self.labels = None if labels is None else list(labels)

    def to_dict(self) -> dict:
        doc = {
            "version": FORMAT_VERSION,
            "variant": self.variant,
            "seed": self.seed,
            "config": self.config,
            "files": self.files,
        }
        if self.labels is not None:
            doc["labels"] = self.labels
        return doc

    def write(self) -> Path:
        path = self.root / self.NAME
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "Manifest":
        path = Path(path)
        if path.is_dir():
            path = path / cls.NAME
        doc = json.loads(path.read_text(encoding="utf-8"))
        return cls(path.parent, doc["files"], doc["variant"], doc["seed"], doc.get("config"),
                   doc.get("labels"))

    @property
    def path(self) -> Path:
        return self.root / self.NAME

    def instance_paths(self) -> List[Path]:
        return [self.root / f for f in self.files]

    def label_paths(self) -> List[Path]:
        if self.labels is None:
            raise FileNotFoundError(f"dataset {self.root} has not been labeled")
        return [self.root / f for f in self.labels]

    def load_instances(self) -> List[MilpInstance]:
        return [read_instance(p) for p in self.instance_paths()]

    def load_labels(self) -> List[dict]:
        return [read_label_doc(p) for p in self.label_paths()]
