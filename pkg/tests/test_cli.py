import contextlib
import io
import json

import numpy as np
import pytest

from goya.cli import main
from goya.data import PromptManifest, read_dataset


def run_cli(argv):
    """Invoke the CLI in process, returning (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        rc = main(argv)
    return rc, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full gen-synthetic -> train -> export chain shared by read-only tests."""
    root = tmp_path_factory.mktemp("pipeline")
    paths = {
        "train": root / "train.gemb",
        "val": root / "val.gemb",
        "run": root / "run",
        "content": root / "content.gemb",
        "style": root / "style.gemb",
    }
    for name, n, seed in (("train", 120, 3), ("val", 40, 4)):
        rc, out, err = run_cli([
            "gen-synthetic", "--n", str(n), "--content-clusters", "4",
            "--style-classes", "3", "--d-img", "16", "--d-txt", "8",
            "--noise", "0.2", "--rng-seed", str(seed), "--out", str(paths[name]),
        ])
        assert rc == 0, err
    rc, out, err = run_cli([
        "train", "--train", str(paths["train"]), "--val", str(paths["val"]),
        "--out-dir", str(paths["run"]), "--epochs", "2", "--batch-size", "32",
        "--embed-dim", "16", "--proj-dim", "4", "--eps-t", "0.5",
        "--rng-seed", "0", "--threads", "1",
    ])
    assert rc == 0, err
    paths["train_report"] = json.loads(out)
    rc, out, err = run_cli([
        "export", "--checkpoint", str(paths["run"] / "best.gckp"),
        "--data", str(paths["val"]),
        "--out-content", str(paths["content"]), "--out-style", str(paths["style"]),
    ])
    assert rc == 0, err
    paths["export_report"] = json.loads(out)
    return paths


class TestPipeline:
    def test_train_report(self, pipeline):
        report = pipeline["train_report"]
        assert set(report) == {
            "best_checkpoint", "final_checkpoint", "log", "best_epoch", "best_val_total",
        }
        assert (pipeline["run"] / "best.gckp").exists()
        assert (pipeline["run"] / "final.gckp").exists()
        log_lines = (pipeline["run"] / "train_log.jsonl").read_text().splitlines()
        assert len(log_lines) == 2

    def test_export_wrote_both_spaces(self, pipeline):
        report = pipeline["export_report"]
        assert report["records"] == 40 and report["embed_dim"] == 16
        content = read_dataset(pipeline["content"])
        style = read_dataset(pipeline["style"])
        val = read_dataset(pipeline["val"])
        assert content.d_img == 16 and style.d_img == 16
        assert content.texts is None
        assert np.array_equal(content.record_ids, val.record_ids)
        assert np.array_equal(style.style_ids, val.style_ids)
        assert not np.array_equal(content.images, style.images)

    def test_eval_dc(self, pipeline):
        rc, out, err = run_cli([
            "eval-dc", "--content", str(pipeline["content"]),
            "--style", str(pipeline["style"]),
        ])
        assert rc == 0, err
        report = json.loads(out)
        assert set(report) == {"dc", "n_total", "n_used"}
        assert report["n_total"] == 40 and report["n_used"] == 40
        assert 0.0 <= report["dc"] <= 1.0

    def test_eval_dc_subsample_cap(self, pipeline):
        rc, out, _ = run_cli([
            "eval-dc", "--content", str(pipeline["content"]),
            "--style", str(pipeline["style"]), "--max-n", "10",
        ])
        assert rc == 0
        assert json.loads(out)["n_used"] == 10

    def test_eval_probe(self, pipeline, tmp_path):
        confusion = tmp_path / "cm.csv"
        rc, out, err = run_cli([
            "eval-probe", "--train", str(pipeline["style"]),
            "--test", str(pipeline["style"]), "--label", "style",
            "--epochs", "10", "--batch-size", "64",
            "--confusion-out", str(confusion),
        ])
        assert rc == 0, err
        report = json.loads(out)
        assert report["label"] == "style"
        assert report["n_classes"] == 3
        assert 0.0 <= report["accuracy"] <= 1.0
        assert len(report["per_class_accuracy"]) == 3
        lines = confusion.read_text().splitlines()
        assert lines[0] == "true\\pred,0,1,2"
        assert len(lines) == 4

    def test_eval_probe_missing_label_column(self, pipeline):
        # synthetic data stores no genre labels
        rc, _, err = run_cli([
            "eval-probe", "--train", str(pipeline["style"]),
            "--test", str(pipeline["style"]), "--label", "genre",
        ])
        assert rc == 1
        assert json.loads(err)["error"] == "DataError"

    def test_retrieve_to_file(self, pipeline, tmp_path):
        out_csv = tmp_path / "hits.csv"
        val = read_dataset(pipeline["val"])
        query = int(val.record_ids[0])
        rc, _, err = run_cli([
            "retrieve", "--db", str(pipeline["style"]), "--query-id", str(query),
            "--k", "3", "--out", str(out_csv),
        ])
        assert rc == 0, err
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "query_id,rank,result_id,similarity"
        assert len(lines) == 4
        first = lines[1].split(",")
        # the query is its own nearest neighbor at similarity 1
        assert first[:3] == [str(query), "1", str(query)]
        assert float(first[3]) == pytest.approx(1.0, abs=1e-5)

    def test_retrieve_to_stdout(self, pipeline):
        val = read_dataset(pipeline["val"])
        rc, out, _ = run_cli([
            "retrieve", "--db", str(pipeline["style"]),
            "--query-id", str(int(val.record_ids[1])), "--k", "2",
        ])
        assert rc == 0
        assert out.startswith("query_id,rank,result_id,similarity\n")
        assert len(out.splitlines()) == 3

    def test_retrieve_unknown_id(self, pipeline):
        rc, _, err = run_cli([
            "retrieve", "--db", str(pipeline["style"]), "--query-id", "999999",
        ])
        assert rc == 1
        assert json.loads(err)["error"] == "DataError"


class TestGenPrompts:
    def test_manifest(self, tmp_path):
        contents = tmp_path / "contents.txt"
        contents.write_text("a cat\na dog\n")
        out = tmp_path / "m.jsonl"
        rc, stdout, err = run_cli([
            "gen-prompts", "--contents", str(contents), "--out", str(out),
            "--per-content", "5", "--seeds-per-prompt", "4", "--rng-seed", "1",
        ])
        assert rc == 0, err
        report = json.loads(stdout)
        assert report == {"prompts": 10, "specs": 40, "out": str(out)}
        manifest = PromptManifest.read_jsonl(out)
        assert manifest.n_prompts == 10
        assert all(e.prompt == f"{e.content_text}, {e.style_text}" for e in manifest.entries)

    def test_too_many_styles_per_content(self, tmp_path):
        contents = tmp_path / "contents.txt"
        contents.write_text("a cat\n")
        rc, _, err = run_cli([
            "gen-prompts", "--contents", str(contents),
            "--out", str(tmp_path / "m.jsonl"), "--per-content", "30",
        ])
        assert rc == 1
        report = json.loads(err)
        assert report["error"] == "ConfigError"
        assert "\n" not in err.strip()


class TestGenSynthetic:
    def test_same_seed_same_bytes(self, tmp_path):
        args = ["gen-synthetic", "--n", "50", "--content-clusters", "3",
                "--style-classes", "2", "--d-img", "8", "--d-txt", "4",
                "--rng-seed", "9"]
        a, b = tmp_path / "a.gemb", tmp_path / "b.gemb"
        assert run_cli(args + ["--out", str(a)])[0] == 0
        assert run_cli(args + ["--out", str(b)])[0] == 0
        assert a.read_bytes() == b.read_bytes()

    def test_report_shape(self, tmp_path):
        rc, out, _ = run_cli([
            "gen-synthetic", "--n", "10", "--content-clusters", "2",
            "--style-classes", "2", "--d-img", "8", "--d-txt", "4",
            "--out", str(tmp_path / "x.gemb"),
        ])
        assert rc == 0
        report = json.loads(out)
        assert report["records"] == 10 and report["d_img"] == 8 and report["n_styles"] == 2


class TestTrainResolution:
    def test_flags_override_config_file(self, pipeline, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({
            "architecture": {"embed_dim": 16, "proj_dim": 4},
            "loss": {"eps_t": 0.5},
            "optimizer": {"epochs": 5, "batch_size": 32},
        }))
        out_dir = tmp_path / "run"
        rc, _, err = run_cli([
            "train", "--train", str(pipeline["train"]), "--val", str(pipeline["val"]),
            "--out-dir", str(out_dir), "--config", str(cfg_path), "--epochs", "2",
        ])
        assert rc == 0, err
        assert len((out_dir / "train_log.jsonl").read_text().splitlines()) == 2

    def test_input_dim_must_match_data(self, pipeline, tmp_path):
        rc, _, err = run_cli([
            "train", "--train", str(pipeline["train"]), "--val", str(pipeline["val"]),
            "--out-dir", str(tmp_path / "run"), "--input-dim", "32",
            "--embed-dim", "16", "--eps-t", "0.5",
        ])
        assert rc == 1
        report = json.loads(err)
        assert report["error"] == "ConfigError"
        assert "input_dim" in report["message"]

    def test_bad_config_json(self, pipeline, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{oops")
        rc, _, err = run_cli([
            "train", "--train", str(pipeline["train"]), "--val", str(pipeline["val"]),
            "--out-dir", str(tmp_path / "run"), "--config", str(bad),
        ])
        assert rc == 1
        assert json.loads(err)["error"] == "ConfigError"


class TestErrorSurface:
    def test_missing_file_is_runtime_error(self, tmp_path):
        rc, _, err = run_cli([
            "eval-dc", "--content", str(tmp_path / "no.gemb"),
            "--style", str(tmp_path / "no2.gemb"),
        ])
        assert rc == 1
        report = json.loads(err)
        assert report["error"] == "FileNotFoundError"
        assert err.count("\n") == 1  # single line

    def test_unknown_flag_is_usage_error(self, tmp_path):
        rc, _, err = run_cli(["gen-prompts", "--contents", "x", "--out", "y", "--bogus"])
        assert rc == 2
        assert json.loads(err)["error"] == "UsageError"

    def test_unknown_command_is_usage_error(self):
        rc, _, err = run_cli(["frobnicate"])
        assert rc == 2
        assert json.loads(err)["error"] == "UsageError"

    def test_missing_command_is_usage_error(self):
        rc, _, err = run_cli([])
        assert rc == 2
        assert json.loads(err)["error"] == "UsageError"

    def test_corrupt_input_file(self, tmp_path):
        bad = tmp_path / "bad.gemb"
        bad.write_bytes(b"not a dataset at all")
        rc, _, err = run_cli(["retrieve", "--db", str(bad), "--query-id", "0"])
        assert rc == 1
        assert json.loads(err)["error"] == "FormatError"

    def test_help_exits_zero_and_lists_defaults(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        assert "(default: 30)" in text  # epochs
        assert "(default: 0.0005)" in text  # lr

    def test_top_level_help(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for command in ("gen-prompts", "gen-synthetic", "train", "export",
                        "eval-dc", "eval-probe", "retrieve"):
            assert command in text
