import json

import numpy as np

from uxeval.cli import main
from uxeval.io import load_array_npy, save_tabular_csv
from uxeval.oracle import LinearModel, generate_synthetic, save_model

from conftest import make_tabular


def _setup_run(tmp_path, seed=11):
    data = generate_synthetic("tabular-linear", 15, seed)
    save_tabular_csv(data.dataset, tmp_path / "data.csv")
    save_model(LinearModel(data.true_weights[None, :], [0.0]), tmp_path / "model.json")
    doc = {
        "dataset": {"path": "data.csv", "kind": "tabular"},
        "model": {"kind": "linear", "params": "model.json"},
        "explainers": [{"method": "exact-shapley"}, {"method": "random"}],
        "metrics": {"perturb_samples": 3},
        "profile": "healthcare",
        "seed": seed,
    }
    (tmp_path / "config.json").write_text(json.dumps(doc))
    return tmp_path / "config.json"


def test_evaluate_command(tmp_path, capsys):
    config = _setup_run(tmp_path)
    code = main(["evaluate", "--config", str(config), "--out", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "| Method |" in out
    assert (tmp_path / "out" / "report.json").exists()
    assert (tmp_path / "out" / "report.md").exists()
    assert (tmp_path / "out" / "per_instance_random.csv").exists()


def test_evaluate_uses_config_output_dir(tmp_path):
    data = generate_synthetic("tabular-linear", 8, 2)
    save_tabular_csv(data.dataset, tmp_path / "data.csv")
    save_model(LinearModel(data.true_weights[None, :], [0.0]), tmp_path / "model.json")
    doc = {
        "dataset": {"path": "data.csv", "kind": "tabular"},
        "model": {"kind": "linear", "params": "model.json"},
        "explainers": [{"method": "random"}],
        "metrics": {"perturb_samples": 2},
        "profile": "finance",
        "seed": 2,
        "output_dir": str(tmp_path / "from-config"),
    }
    (tmp_path / "config.json").write_text(json.dumps(doc))
    assert main(["evaluate", "--config", str(tmp_path / "config.json")]) == 0
    assert (tmp_path / "from-config" / "report.json").exists()


def test_evaluate_format_selection(tmp_path):
    config = _setup_run(tmp_path)
    code = main(["evaluate", "--config", str(config), "--out", str(tmp_path / "out"),
                 "--format", "json"])
    assert code == 0
    assert (tmp_path / "out" / "report.json").exists()
    assert not (tmp_path / "out" / "report.md").exists()


def test_evaluate_exit_code_config_error(tmp_path):
    assert main(["evaluate", "--config", str(tmp_path / "missing.json")]) == 1


def test_evaluate_exit_code_data_error(tmp_path):
    config = _setup_run(tmp_path)
    (tmp_path / "data.csv").unlink()
    assert main(["evaluate", "--config", str(config), "--out", str(tmp_path / "o")]) == 2


def test_explain_command_writes_npy_and_sidecar(tmp_path, capsys):
    config = _setup_run(tmp_path)
    out = tmp_path / "attr.npy"
    code = main(["explain", "--config", str(config), "--method", "exact-shapley",
                 "--out", str(out)])
    assert code == 0
    stack = load_array_npy(out, ndim=2)
    assert stack.shape == (15, 6)
    sidecar = json.loads(out.with_suffix(".npy.json").read_text())
    assert sidecar["method"] == "exact-shapley"
    assert len(sidecar["target_classes"]) == 15


def test_explain_unknown_method_is_config_error(tmp_path):
    config = _setup_run(tmp_path)
    assert main(["explain", "--config", str(config), "--method", "nope",
                 "--out", str(tmp_path / "a.npy")]) == 1


def test_profiles_list_and_show(capsys):
    assert main(["profiles", "list"]) == 0
    out = capsys.readouterr().out.split()
    assert out == ["healthcare", "finance", "agriculture", "security"]
    assert main(["profiles", "show", "security"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["weights"]["fidelity"] == 25


def test_profiles_show_unknown(capsys):
    assert main(["profiles", "show", "astrology"]) == 1


def test_drift_command(tmp_path, capsys):
    data = generate_synthetic("tabular-linear", 50, 3).dataset
    save_tabular_csv(data, tmp_path / "ref.csv")
    X = data.feature_matrix().copy()
    X[:, 1] += 6.0 * X[:, 1].std()
    save_tabular_csv(make_tabular(X), tmp_path / "cur.csv")
    code = main(["drift", "--reference", str(tmp_path / "ref.csv"),
                 "--current", str(tmp_path / "cur.csv")])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["feature_drift"] is True
    assert doc["feature_psi"][1] > 0.2


def test_drift_small_reference_exit_code(tmp_path):
    small = generate_synthetic("tabular-linear", 4, 3).dataset
    save_tabular_csv(small, tmp_path / "ref.csv")
    save_tabular_csv(small, tmp_path / "cur.csv")
    assert main(["drift", "--reference", str(tmp_path / "ref.csv"),
                 "--current", str(tmp_path / "cur.csv")]) == 2


def test_synth_tabular_deterministic(tmp_path, capsys):
    for name in ("a.csv", "b.csv"):
        assert main(["synth", "--kind", "tabular-linear", "--n", "10",
                     "--seed", "3", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    assert len(meta["true_weights"]) == 6


def test_synth_image_shapes(tmp_path):
    out = tmp_path / "imgs.npy"
    assert main(["synth", "--kind", "image-shapes", "--n", "4",
                 "--seed", "2", "--out", str(out)]) == 0
    arr = load_array_npy(out, ndim=3)
    assert arr.shape == (4, 8, 8)
    masks = load_array_npy(tmp_path / "imgs.mask.npy", ndim=3)
    assert set(np.unique(masks)) <= {0.0, 1.0}


def test_external_oracle_through_cli(tmp_path):
    import sys

    stub = (
        "import json, sys\n"
        "for line in sys.stdin:\n"
        "    req = json.loads(line)\n"
        "    print(json.dumps({'id': req['id'], 'y': [0.5, 0.5]}), flush=True)\n"
    )
    (tmp_path / "stub.py").write_text(stub)
    data = generate_synthetic("tabular-linear", 6, 1)
    save_tabular_csv(data.dataset, tmp_path / "data.csv")
    doc = {
        "dataset": {"path": "data.csv", "kind": "tabular"},
        "model": {"kind": "external",
                  "command": [sys.executable, "-u", str(tmp_path / "stub.py")],
                  "timeout": 10.0},
        "explainers": [{"method": "kshap", "samples": 70}],
        "metrics": {"perturb_samples": 2},
        "profile": "finance",
        "seed": 1,
    }
    (tmp_path / "config.json").write_text(json.dumps(doc))
    code = main(["evaluate", "--config", str(tmp_path / "config.json"),
                 "--out", str(tmp_path / "out")])
    assert code == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["methods"][0]["name"] == "kshap"
