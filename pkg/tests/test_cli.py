import json
import subprocess
import sys

import pytest

from tepo.cli import main
from tepo.synthdata import read_dataset


def run_cli(*args):
    return main(list(args))


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data") / "ds"
    assert run_cli("gen-data", "--out", str(d), "--cases", "30", "--seed", "7") == 0
    return d


class TestGenData:
    def test_writes_expected_file_count(self, tmp_path):
        out = tmp_path / "ds"
        assert run_cli("gen-data", "--out", str(out), "--cases", "10", "--seed", "7") == 0
        assert len(list(out.iterdir())) == 21

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("gen-data", "--out", str(a), "--cases", "5", "--seed", "3")
        run_cli("gen-data", "--out", str(b), "--cases", "5", "--seed", "3")
        for f in sorted(a.iterdir()):
            assert f.read_bytes() == (b / f.name).read_bytes()

    def test_size_flag(self, tmp_path):
        out = tmp_path / "ds"
        assert run_cli("gen-data", "--out", str(out), "--cases", "2",
                       "--seed", "1", "--size", "32x48") == 0
        cases = read_dataset(out)
        assert cases[0].shape == (32, 48)

    def test_unwritable_dir_fails_with_error_line(self, tmp_path, capsys):
        # a path below a regular file is unwritable even for root
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        target = blocker / "ds"
        code = run_cli("gen-data", "--out", str(target), "--cases", "2",
                       "--seed", "1")
        assert code != 0
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        assert "blocker" in err


class TestTrain:
    def test_train_writes_checkpoint_and_log(self, dataset, tmp_path):
        ckpt = tmp_path / "agent.tepo"
        code = run_cli("train", "--data", str(dataset), "--out", str(ckpt),
                       "--episodes", "4", "--episode-len", "2", "--seed", "1",
                       "--split", "all")
        assert code == 0
        assert ckpt.read_bytes()[:4] == b"TEPO"
        log = tmp_path / "agent.tepo.log.csv"
        lines = log.read_text().splitlines()
        assert lines[1] == "episode,steps,mean_reward,final_dice,loss,epsilon"
        assert len(lines) == 2 + 4

    def test_same_seed_same_checkpoint(self, dataset, tmp_path):
        outs = []
        for name in ("a", "b"):
            ckpt = tmp_path / f"{name}.tepo"
            run_cli("train", "--data", str(dataset), "--out", str(ckpt),
                    "--episodes", "3", "--episode-len", "2", "--seed", "9",
                    "--split", "all")
            outs.append(ckpt.read_bytes())
        assert outs[0] == outs[1]

    def test_missing_data_dir_fails(self, tmp_path, capsys):
        code = run_cli("train", "--data", str(tmp_path / "nope"),
                       "--out", str(tmp_path / "x.tepo"))
        assert code != 0
        assert capsys.readouterr().err.startswith("error: ")


class TestEval:
    def test_eval_writes_json_and_csv(self, dataset, tmp_path):
        out = tmp_path / "report"
        code = run_cli("eval", "--data", str(dataset), "--policy", "random",
                       "--steps", "9", "--out", str(out), "--split", "all",
                       "--jobs", "1")
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["policy"] == "random"
        assert len(report["per_step"]) == 9
        csv_lines = (tmp_path / "report.csv").read_text().splitlines()
        assert csv_lines[0].startswith("# config: ")
        header = csv_lines[1].split(",")
        assert header == ["policy", "step", "action0_pct", "action1_pct",
                          "action2_pct", "action3_pct", "dice_mean",
                          "dice_std", "misunderstandings"]
        assert len(csv_lines) == 2 + 9  # config echo + header + one row per step

    def test_eval_deterministic(self, dataset, tmp_path):
        blobs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            run_cli("eval", "--data", str(dataset), "--policy", "random",
                    "--out", str(out), "--split", "all", "--seed", "5",
                    "--jobs", "1")
            blobs.append((out.with_suffix(".json").read_bytes(),
                          out.with_suffix(".csv").read_bytes()))
        assert blobs[0] == blobs[1]

    def test_policy_ckpt_roundtrip(self, dataset, tmp_path):
        ckpt = tmp_path / "agent.tepo"
        run_cli("train", "--data", str(dataset), "--out", str(ckpt),
                "--episodes", "3", "--episode-len", "2", "--split", "all")
        out = tmp_path / "ck_report"
        code = run_cli("eval", "--data", str(dataset), "--policy",
                       f"ckpt:{ckpt}", "--out", str(out), "--split", "all",
                       "--jobs", "1")
        assert code == 0

    def test_missing_checkpoint_fails(self, dataset, tmp_path, capsys):
        code = run_cli("eval", "--data", str(dataset), "--policy",
                       "ckpt:/nonexistent.tepo", "--out", str(tmp_path / "r"))
        assert code != 0
        assert capsys.readouterr().err.startswith("error: ")

    def test_unknown_policy_fails(self, dataset, tmp_path, capsys):
        code = run_cli("eval", "--data", str(dataset), "--policy", "psychic",
                       "--out", str(tmp_path / "r"))
        assert code != 0
        assert "error:" in capsys.readouterr().err


class TestConfigHandling:
    def test_config_file_overrides_defaults(self, dataset, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"mock": {"corruption_fraction": 0.0}}))
        out = tmp_path / "clean"
        run_cli("eval", "--data", str(dataset), "--policy", "oracle",
                "--config", str(cfg), "--out", str(out), "--split", "all",
                "--jobs", "1")
        report = json.loads(out.with_suffix(".json").read_text())
        # q=0: the oracle's box resolves everything it needs; dice climbs to 1
        assert report["per_step"][-1]["dice_mean"] > 0.99
        assert report["config"]["mock"]["corruption_fraction"] == 0.0

    def test_unknown_config_key_rejected(self, dataset, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"mock": {"corruption": 0.1}}))
        code = run_cli("eval", "--data", str(dataset), "--policy", "random",
                       "--config", str(cfg), "--out", str(tmp_path / "r"))
        assert code != 0
        assert "mock.corruption" in capsys.readouterr().err

    def test_config_echoed_into_report(self, dataset, tmp_path):
        out = tmp_path / "echo"
        run_cli("eval", "--data", str(dataset), "--policy", "random",
                "--out", str(out), "--split", "all", "--jobs", "1")
        report = json.loads(out.with_suffix(".json").read_text())
        assert report["config"]["env"]["episode_len"] == 9
        assert report["config"]["clinician"]["box_margin"] == 10


class TestHelp:
    @pytest.mark.parametrize("cmd", ["gen-data", "train", "eval", "serve-mock"])
    def test_help_lists_flags_and_defaults(self, cmd):
        proc = subprocess.run(
            [sys.executable, "-m", "tepo.cli", cmd, "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "--help" in proc.stdout
        assert "default" in proc.stdout.lower()
