import json
import subprocess
import sys

import pytest

from cosseg.cli import main
from cosseg.forest import load_model


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "all", "--packets", "1000", "--seed", "3", "--out", str(out)]) == 0
    return out


def _inputs(d):
    return [str(p) for p in sorted(d.glob("*.csv"), key=lambda p: ["file_transfer", "video", "voip", "chat", "p2p"].index(p.stem))]


@pytest.fixture(scope="module")
def selected(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("sel")
    assert main(["select", *_inputs(synth_dir), "--out-dir", str(out), "--seed", "1"]) == 0
    return out


def run(args, capsys):
    code = main(args)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_synth_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["synth", "voip", "--packets", "300", "--seed", "5", "--out", str(a)], capsys)[0] == 0
    assert run(["synth", "voip", "--packets", "300", "--seed", "5", "--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "timestamp,length,direction,iat"


def test_synth_invalid_profile(tmp_path, capsys):
    code, _, err = run(["synth", "email", "--out", str(tmp_path / "x.csv")], capsys)
    assert code == 1
    assert err.startswith("cosseg: error: ProfileError:")
    assert len(err.strip().splitlines()) == 1


def test_featurize_row_count(synth_dir, capsys):
    code, out, _ = run(["featurize", *_inputs(synth_dir), "--n", "30"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines[0].split(",")) == 12
    assert len(lines) - 1 == 5 * (1000 // 30)


def test_missing_file_and_usage_errors(tmp_path, capsys):
    code, _, err = run(["featurize", str(tmp_path / "nope.csv"), "--n", "10"], capsys)
    assert code == 1 and "input not found" in err
    with pytest.raises(SystemExit) as exc:
        main(["featurize", str(tmp_path / "nope.csv")])
    assert exc.value.code == 2
    assert "--n" in capsys.readouterr().err


def test_select_writes_artifacts(selected, synth_dir, capsys):
    assert {p.name for p in selected.iterdir()} == {"model.json", "grid.csv", "grid.json"}
    model = load_model(selected / "model.json")
    assert [c.name for c in model.classes] == ["file_transfer", "video", "voip", "chat", "p2p"]
    assert json.loads((selected / "grid.json").read_text())["met_benchmark"] is True


def test_select_full_grid_and_infeasible_warnings(synth_dir, tmp_path, capsys):
    code, out, err = run(
        ["select", *_inputs(synth_dir), "--out-dir", str(tmp_path), "--full-grid", "--format", "json"], capsys
    )
    assert code == 0
    summary = json.loads(out)
    # 1000 packets per class: S_T=50 at N=20 leaves no test segment, etc.
    assert summary["cells_evaluated"] + summary["cells_skipped"] == 25
    assert summary["cells_skipped"] > 0
    assert "cosseg: warning: skipped cell" in err
    assert len((tmp_path / "grid.csv").read_text().splitlines()) == summary["cells_evaluated"] + 1


def test_select_is_byte_identical(synth_dir, tmp_path, capsys):
    for d in ("a", "b"):
        run(["select", *_inputs(synth_dir), "--out-dir", str(tmp_path / d), "--seed", "8"], capsys)
    for name in ("model.json", "grid.csv", "grid.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_evaluate_and_classify_agree(selected, synth_dir, capsys):
    model = str(selected / "model.json")
    code, out, _ = run(["evaluate", model, *_inputs(synth_dir), "--skip", "0", "--format", "json"], capsys)
    assert code == 0
    rep = json.loads(out)
    voip = next(c for c in rep["per_class"] if c["label"] == "voip")
    n = load_model(model).train_meta.n
    assert voip["support"] == 1000 // n

    code, out, _ = run(["classify", model, f"voip={synth_dir / 'voip.csv'}", "--format", "csv"], capsys)
    rows = out.splitlines()[1:]
    predicted_voip = sum(r.endswith(",voip") for r in rows)
    assert len(rows) == 1000 // n
    assert predicted_voip == voip["recall"] * voip["support"]


def test_classify_line_count(selected, synth_dir, tmp_path, capsys):
    assert main(["synth", "chat", "--packets", "1000", "--out", str(tmp_path / "c.csv")]) == 0
    capsys.readouterr()
    code, out, _ = run(["classify", str(selected / "model.json"), str(tmp_path / "c.csv"), "--n", "20"], capsys)
    assert code == 0
    assert len(out.splitlines()) == 50


def test_evaluate_table_and_no_segments(selected, synth_dir, capsys):
    model = str(selected / "model.json")
    code, out, _ = run(["evaluate", model, *_inputs(synth_dir)], capsys)
    assert code == 0 and out.startswith("CoS label")
    code, _, err = run(["evaluate", model, *_inputs(synth_dir), "--skip", "1000"], capsys)
    assert code == 1 and "no segments" in err
    code, _, err = run(["evaluate", model, f"email={synth_dir / 'chat.csv'}"], capsys)
    assert code == 1 and "not known to the model" in err


def test_unknown_model_version(tmp_path, selected, capsys):
    doc = json.loads((selected / "model.json").read_text())
    doc["version"] = 7
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run(["importance", str(bad)], capsys)
    assert code == 1 and "ModelVersionError" in err


def test_importance_outputs(selected, capsys):
    code, out, _ = run(["importance", str(selected / "model.json"), "--format", "json"], capsys)
    values = json.loads(out)
    assert len(values) == 11
    assert sum(values.values()) == pytest.approx(1.0, abs=1e-9)
    code, out, _ = run(["importance", str(selected / "model.json"), "--scaled", "--format", "csv"], capsys)
    scaled = [float(line.split(",")[1]) for line in out.splitlines()[1:]]
    assert max(scaled) == 1.0


def test_train_from_inputs_and_matrix(synth_dir, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["train", *_inputs(synth_dir), "--n", "20", "--s-t", "20", "--seed", "4"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    matrix = tmp_path / "m.csv"
    assert main(["featurize", *_inputs(synth_dir), "--n", "20", "--out", str(matrix)]) == 0
    assert main(["train", str(matrix), "--out", str(tmp_path / "c.json")]) == 0
    assert load_model(tmp_path / "c.json").train_meta.n == 20


def test_train_single_class_errors(synth_dir, tmp_path, capsys):
    code, _, err = run(
        ["train", str(synth_dir / "voip.csv"), "--n", "20", "--s-t", "10", "--out", str(tmp_path / "m.json")], capsys
    )
    assert code == 1 and "2 classes" in err


def test_config_file_and_flag_precedence(synth_dir, tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('n = 50\nout = "%s"\n' % (tmp_path / "from_config.csv"))
    assert main(["featurize", *_inputs(synth_dir), "--config", str(cfg)]) == 0
    assert len((tmp_path / "from_config.csv").read_text().splitlines()) == 1 + 5 * 20
    code, out, _ = run(["featurize", *_inputs(synth_dir), "--config", str(cfg), "--n", "100", "--out", "-"], capsys)
    assert len(out.splitlines()) == 1 + 5 * 10


def test_seed_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("COSSEG_SEED", "5")
    assert main(["synth", "voip", "--packets", "200", "--out", str(tmp_path / "env.csv")]) == 0
    assert main(["synth", "voip", "--packets", "200", "--seed", "5", "--out", str(tmp_path / "flag.csv")]) == 0
    assert (tmp_path / "env.csv").read_bytes() == (tmp_path / "flag.csv").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "cosseg", "synth", "p2p", "--packets", "50", "--out", str(tmp_path / "p.csv")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "p.csv").exists()
