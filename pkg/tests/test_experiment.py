import csv
import json

import numpy as np
import pytest

from milpgnn import GenConfig, Task, encode_graph, is_foldable
from milpgnn.experiment import (
    ConfigMismatch,
    ExperimentSpec,
    MissingLabels,
    comparable_rows,
    generate_dataset,
    label_dataset,
    load_task_data,
    read_results,
    report,
    run_experiment,
    shared_omega,
    summarize,
    write_results,
    RESULT_COLUMNS,
)
from milpgnn.io import Manifest


@pytest.fixture(scope="module")
def d2_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("d2")
    label_dataset(generate_dataset(GenConfig(seed=3, count=8, variant="d2"), root), omega_seed=5)
    return root


@pytest.fixture(scope="module")
def d1_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("d1")
    label_dataset(generate_dataset(GenConfig(seed=1, count=10), root))
    return root


def test_generate_and_label(d2_dir):
    m = Manifest.read(d2_dir)
    assert m.variant == "d2" and m.seed == 3 and len(m.files) == 8
    assert m.config["omega_seed"] == 5 and m.config["tolerances"]["feas"] == 1e-7
    docs = m.load_labels()
    assert [d["feasible"] for d in docs] == [1, 0] * 4
    insts = m.load_instances()
    for inst, doc in zip(insts, docs):
        if doc["feasible"]:
            x = np.array(doc["canonical_solution"])
            assert inst.max_violation(x) <= 1e-7
            assert x @ inst.c == pytest.approx(doc["objective"], abs=1e-9)
            assert is_foldable(encode_graph(inst))


def test_unfoldable_canonical_ignores_omega(d1_dir, tmp_path):
    other = tmp_path / "again"
    label_dataset(generate_dataset(GenConfig(seed=1, count=10), other), omega_seed=99)
    a = Manifest.read(d1_dir).load_labels()
    b = Manifest.read(other).load_labels()
    assert a == b


def test_shared_omega_deterministic():
    a, b = shared_omega(7, 6, 20), shared_omega(7, 6, 20)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_load_task_data(d2_dir, d1_dir):
    feas = load_task_data(d2_dir, Task.FEAS)
    assert feas.targets == [1.0, 0.0] * 4
    obj = load_task_data(d2_dir, Task.OBJ, size=4, random_features=True)
    assert len(obj.graphs) == 2 and obj.omega_seed == 5
    om = shared_omega(5, 6, 20)
    assert np.array_equal(obj.graphs[0].random_features[1], om[1])
    solu = load_task_data(d1_dir, Task.SOLU)
    assert all(len(t) == 20 for t in solu.targets)
    with pytest.raises(ConfigMismatch):
        load_task_data(d2_dir, Task.FEAS, size=100)


def test_missing_labels(tmp_path):
    generate_dataset(GenConfig(seed=0, count=2, variant="d2"), tmp_path)
    with pytest.raises(MissingLabels):
        load_task_data(tmp_path, Task.FEAS)


def test_unlabeled_canonical(tmp_path):
    m = generate_dataset(GenConfig(seed=0, count=2, variant="d2"), tmp_path)
    label_dataset(m, canonical=False)
    with pytest.raises(MissingLabels):
        load_task_data(tmp_path, Task.SOLU)
    assert load_task_data(tmp_path, Task.OBJ).targets == [0.0]


def test_spec_validation(tmp_path, d2_dir):
    doc = {"name": "x", "task": "feas", "train_manifest": "d2", "d_values": [2], "epochs": 1}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(doc))
    spec = ExperimentSpec.load(path)
    assert spec.train_manifest == str(tmp_path / "d2")
    assert ExperimentSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict(dict(doc, bogus=1))
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict(dict(doc, d_values=[]))
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict(dict(doc, task="nope"))
    assert spec.with_overrides(epochs=None, seeds=(4,)).seeds == (4,)


def _spec(train, test=None, **kw):
    base = dict(name="t", task="feas", train_manifest=str(train), test_manifest=test, d_values=(2, 4),
                epochs=3, seeds=(0, 1), batch_size=4)
    base.update(kw)
    return ExperimentSpec(**base)


def test_run_experiment_and_determinism(d2_dir, tmp_path):
    spec = _spec(d2_dir, str(d2_dir), random_features=True)
    rows = run_experiment(spec, tmp_path / "a")
    again = run_experiment(spec, tmp_path / "b")
    assert comparable_rows(read_results(tmp_path / "a" / "results.csv")) == \
        comparable_rows(read_results(tmp_path / "b" / "results.csv"))
    assert [(r["d"], r["seed"]) for r in rows] == [(2, 0), (2, 1), (4, 0), (4, 1)]
    assert rows[0]["variant"] == "d2+rand"
    for r in rows:
        assert (tmp_path / "a" / r["checkpoint"]).exists()
        assert (tmp_path / "a" / "logs" / f"t_d{r['d']}_s{r['seed']}.csv").exists()
        assert r["manifest"] == str(d2_dir) and r["n_test"] == 8
    with open(tmp_path / "a" / "results.csv") as fh:
        assert tuple(next(csv.reader(fh))) == RESULT_COLUMNS
    assert again == [dict(r, wall_ms=a["wall_ms"]) for r, a in zip(rows, again)]


def test_omega_mismatch(d2_dir, tmp_path):
    other = tmp_path / "other"
    label_dataset(generate_dataset(GenConfig(seed=3, count=8, variant="d2"), other), omega_seed=6)
    with pytest.raises(ConfigMismatch):
        run_experiment(_spec(d2_dir, str(other), random_features=True), tmp_path / "out")


def _row(**kw):
    row = {c: "" for c in RESULT_COLUMNS}
    row.update(experiment="e", task="obj", variant="d1", d=4, n_params=10, seed=0, train_err="0.5",
               test_err="", epochs=1, wall_ms="1.0", n_train=5, n_test=0, manifest="m", checkpoint="c")
    row.update(kw)
    return row


def test_report_single_row(tmp_path):
    write_results([_row()], tmp_path / "r.csv")
    text = report(tmp_path / "r.csv", tmp_path / "rep")
    assert "train_err=0.5" in text and "seeds=1" in text
    with open(tmp_path / "rep" / "fig5a_objective.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows == [["variant", "n_params", "err"], ["d1", "10", "0.5"]]
    assert not (tmp_path / "rep" / "fig4_feasibility.csv").exists()


def test_report_median_over_seeds(tmp_path):
    rows = [_row(seed=s, train_err=e, test_err=t, task="feas")
            for s, e, t in [(0, "0.1", "0.4"), (1, "0.3", "0.2"), (2, "0.2", "0.3")]]
    write_results(rows, tmp_path / "r.csv")
    (s,) = summarize(read_results(tmp_path / "r.csv"))
    assert s["train_err"] == 0.2 and s["test_err"] == 0.3 and s["seeds"] == 3
    report(tmp_path / "r.csv", tmp_path / "rep")
    lines = (tmp_path / "rep" / "fig4_feasibility.csv").read_text().splitlines()
    assert lines == ["variant,n_params,d,err", "d1,10,4,0.2"]
    gen = (tmp_path / "rep" / "generalization.csv").read_text().splitlines()
    assert gen[0].startswith("experiment,task,") and len(gen) == 2


def test_report_empty(tmp_path):
    write_results([], tmp_path / "r.csv")
    with pytest.raises(ValueError):
        report(tmp_path / "r.csv")
