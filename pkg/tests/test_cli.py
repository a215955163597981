import json

import numpy as np
import pytest

from doorslam.cli import main
from doorslam.model import default_spec, init_weights, load_model, save_model
from doorslam.wire import EventFrame, encode


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synth", "--n", "4", "--seed", "3", "--out", str(root)]) == 0
    return root


@pytest.fixture(scope="module")
def model_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "m.json"
    spec = default_spec()
    save_model(path, spec, init_weights(spec, 0))
    return path


class TestSynth:
    def test_rerun_identical(self, dataset, tmp_path, capsys):
        assert main(["synth", "--n", "4", "--seed", "3", "--out", str(tmp_path / "again")]) == 0
        for f in dataset.iterdir():
            assert (tmp_path / "again" / f.name).read_bytes() == f.read_bytes()
        assert capsys.readouterr().out.strip().endswith("manifest.json")

    def test_unwritable(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["synth", "--n", "1", "--out", str(blocker / "d")]) != 0
        assert "error" in capsys.readouterr().err


class TestTrain:
    def test_zero_epochs_saves_initial_weights(self, dataset, tmp_path, capsys):
        out = tmp_path / "m.json"
        assert main(["train", "--manifest", str(dataset), "--out", str(out), "--epochs", "0", "--seed", "5"]) == 0
        spec, w = load_model(out)
        assert spec == default_spec()
        init = init_weights(spec, 5)
        assert all(np.array_equal(w.tensors[k], init.tensors[k]) for k in init.tensors)
        assert capsys.readouterr().out == ""

    def test_epoch_lines(self, dataset, tmp_path, capsys):
        out = tmp_path / "m.json"
        args = ["train", "--manifest", str(dataset / "manifest.json"), "--out", str(out), "--epochs", "2"]
        assert main(args + ["--no-augment"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert [line.split()[1] for line in lines] == ["1/2", "2/2"]
        assert all("loss=" in line and "accuracy=" in line for line in lines)

    def test_missing_manifest(self, tmp_path, capsys):
        assert main(["train", "--manifest", str(tmp_path), "--out", str(tmp_path / "m.json")]) == 1
        assert "manifest not found" in capsys.readouterr().err


class TestEval:
    def test_rows(self, dataset, model_path, tmp_path, capsys):
        csv = tmp_path / "r.csv"
        argv = ["eval", "--model", str(model_path), "--manifest", str(dataset), "--ratios", "0,0.5", "--csv", str(csv)]
        assert main(argv) == 0
        report = json.loads(capsys.readouterr().out)
        assert [r["noise_ratio"] for r in report["rows"]] == [0.0, 0.5]
        assert all(r["n_test"] == 2 for r in report["rows"])
        assert csv.read_text().splitlines()[0] == "ratio,accuracy,tp,tn,fp,fn"

    def test_missing_model(self, dataset, tmp_path, capsys):
        assert main(["eval", "--model", str(tmp_path / "none.json"), "--manifest", str(dataset)]) == 1
        assert "model not found" in capsys.readouterr().err


class TestSimulateListen:
    def run(self, model_path, tmp_path, *extra):
        log, frames = tmp_path / "log.jsonl", tmp_path / "f.bin"
        argv = ["simulate", "--model", str(model_path), "--log", str(log), "--frames", str(frames), "--duration", "30"]
        return main(argv + list(extra)), log, frames

    def test_empty_scenario(self, model_path, tmp_path):
        rc, log, frames = self.run(model_path, tmp_path, "--events", "")
        assert rc == 0 and log.read_text() == "" and frames.read_bytes() == b""

    def test_events_round_trip(self, model_path, tmp_path, capsys):
        rc, log, frames = self.run(model_path, tmp_path, "--events", "slam@4,normal@12,slam@20", "--device-id", "9")
        assert rc == 0
        records = [json.loads(line) for line in log.read_text().splitlines()]
        assert [r["seq"] for r in records] == [0, 1]
        assert len(frames.read_bytes()) == 32
        capsys.readouterr()
        assert main(["listen", str(frames), "--jsonl"]) == 0
        heard = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert [h["device_id"] for h in heard] == [9, 9]
        assert [h["label"] for h in heard] == [r["label"] for r in records]

    def test_bad_schedule(self, model_path, tmp_path, capsys):
        rc, _, _ = self.run(model_path, tmp_path, "--events", "slam@4,slam@6")
        assert rc == 1 and "refractory" in capsys.readouterr().err

    def test_listen_table_and_resync(self, tmp_path, capsys):
        path = tmp_path / "f.bin"
        path.write_bytes(b"\x00\xff" + encode(EventFrame(2, 0, 1500, 1, 255, 2400)) + encode(EventFrame(2, 1, 9000, 0, 0, 0)))
        assert main(["listen", str(path)]) == 0
        out, err = capsys.readouterr()
        rows = out.splitlines()
        assert rows[0].split() == ["device", "seq", "time_s", "label", "conf", "peak_g"]
        assert rows[1].split() == ["2", "0", "1.500", "slam", "1.000", "2.400"]
        assert len(rows) == 3
        assert "skipped 2 byte(s)" in err

    def test_listen_empty_file(self, tmp_path, capsys):
        path = tmp_path / "f.bin"
        path.write_bytes(b"")
        assert main(["listen", str(path), "--jsonl"]) == 0
        assert capsys.readouterr().out == ""

    def test_listen_missing_file(self, tmp_path, capsys):
        assert main(["listen", str(tmp_path / "none.bin")]) == 1


class TestConfigPrecedence:
    def test_file_then_flag(self, model_path, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('[sim]\nevents = "slam@4"\ndevice_id = 3\n')
        log, frames = tmp_path / "log.jsonl", tmp_path / "f.bin"
        base = ["simulate", "--model", str(model_path), "--log", str(log), "--frames", str(frames)]
        base += ["--config", str(cfg), "--duration", "15"]
        assert main(base) == 0
        assert json.loads(log.read_text())["device_id"] == 3
        assert main(base + ["--set", "sim.device_id=4"]) == 0
        assert json.loads(log.read_text())["device_id"] == 4
        assert main(base + ["--set", "sim.device_id=4", "--device-id", "5"]) == 0
        assert json.loads(log.read_text())["device_id"] == 5

    def test_unknown_key(self, dataset, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path / "d"), "--set", "synth.colour=red"]) == 1
        assert "colour" in capsys.readouterr().err

    def test_malformed_set(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path / "d"), "--set", "synth.seed"]) == 1
