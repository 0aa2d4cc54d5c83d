import json

import numpy as np
import pytest

from xova.cli import main

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None


EVAL_SCHEMA = {
    "type": "object",
    "required": ["n_test", "p_at", "macro_precision", "macro_recall"],
    "properties": {
        "n_test": {"type": "integer", "minimum": 0},
        "p_at": {
            "type": "object",
            "additionalProperties": {"type": "number", "minimum": 0, "maximum": 1},
        },
        "macro_precision": {"type": "number", "minimum": 0, "maximum": 1},
        "macro_recall": {"type": "number", "minimum": 0, "maximum": 1},
    },
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Synthetic train/test pair shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    rc = main(
        [
            "synth",
            "--n", "300", "--d", "25", "--l", "10",
            "--tail", "1.2", "--seed", "11",
            "--out", str(root / "train.txt"),
            "--test-out", str(root / "test.txt"),
            "--test-frac", "0.2",
        ]
    )
    assert rc == 0
    return root


def train_args(root, model="model.txt", **over):
    args = {
        "--data": str(root / "train.txt"),
        "--loss": "squared-hinge",
        "--init": "aop",
        "--model-out": str(root / model),
        "--threads": "1",
    }
    args.update(over)
    out = ["train"]
    for k, v in args.items():
        if v is None:
            out.append(k)
        else:
            out.extend([k, v])
    return out


class TestSynth:
    def test_deterministic_files(self, tmp_path):
        for name in ("a.txt", "b.txt"):
            rc = main(
                ["synth", "--n", "50", "--d", "10", "--l", "4", "--tail", "1.0",
                 "--seed", "3", "--out", str(tmp_path / name)]
            )
            assert rc == 0
        assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()

    def test_header_and_split_size(self, workdir):
        train = (workdir / "train.txt").read_text().splitlines()
        test = (workdir / "test.txt").read_text().splitlines()
        assert train[0] == "240 25 10"
        assert test[0] == "60 25 10"

    def test_invalid_sizes_exit_1(self, tmp_path):
        rc = main(["synth", "--n", "0", "--d", "5", "--l", "2", "--seed", "1",
                   "--out", str(tmp_path / "x.txt")])
        assert rc == 1


class TestTrain:
    def test_train_writes_model_and_report(self, workdir, capsys):
        rc = main(train_args(workdir) + ["--diag-out", str(workdir / "report.json")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "trained 10 labels" in out
        header = (workdir / "model.txt").read_text().splitlines()[0]
        assert header.startswith("xova v1 10 26 25 squared-hinge aop")
        report = json.loads((workdir / "report.json").read_text())
        assert report["init_params"] == {"s": 1.0, "t": -2.0}
        labels_csv = (workdir / "report.json.labels.csv").read_text().splitlines()
        assert labels_csv[0] == "label,positives,outer_iters,hvp_touches,wall_ms,final_loss,termination"
        assert len(labels_csv) == 11

    def test_logistic_default_t_is_minus_three(self, workdir):
        rc = main(
            train_args(workdir, model="log.model")
            + ["--loss", "logistic", "--diag-out", str(workdir / "log.json")]
        )
        assert rc == 0
        report = json.loads((workdir / "log.json").read_text())
        assert report["init_params"]["t"] == -3.0

    def test_explicit_aop_t_respected(self, workdir):
        rc = main(
            train_args(workdir, model="t5.model")
            + ["--loss", "logistic", "--aop-t", "-5", "--diag-out", str(workdir / "t5.json")]
        )
        assert rc == 0
        assert json.loads((workdir / "t5.json").read_text())["init_params"]["t"] == -5.0

    def test_bias_init_without_augmentation_exit_1(self, workdir, capsys):
        rc = main(train_args(workdir, model="x.model") + ["--init", "bias", "--no-augment"])
        assert rc == 1
        assert "bias" in capsys.readouterr().err

    def test_reproducible_across_threads(self, workdir):
        rc1 = main(train_args(workdir, model="m1.model", **{"--threads": "1"}))
        rc2 = main(train_args(workdir, model="m2.model", **{"--threads": "4"}))
        assert rc1 == rc2 == 0
        assert (workdir / "m1.model").read_bytes() == (workdir / "m2.model").read_bytes()

    def test_missing_data_exit_2(self, workdir):
        rc = main(train_args(workdir, **{"--data": str(workdir / "nope.txt")}))
        assert rc == 2

    def test_usage_error_exit_1(self):
        assert main(["train", "--loss", "squared-hinge"]) == 1
        assert main(["train", "--data", "x", "--model-out", "y", "--loss", "bogus"]) == 1


@pytest.fixture(scope="module")
def trained(workdir):
    model = workdir / "pe.model"
    rc = main(train_args(workdir, model="pe.model"))
    assert rc == 0
    return model


class TestPredictEval:

    def test_predict_lines(self, workdir, trained):
        out = workdir / "pred.txt"
        rc = main(["predict", "--model", str(trained), "--data", str(workdir / "test.txt"),
                   "--k", "3", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 60
        first = lines[0].split()
        assert len(first) == 3
        scores = [float(tok.split(":")[1]) for tok in first]
        assert scores == sorted(scores, reverse=True)

    def test_predict_empty_file(self, workdir, trained, tmp_path):
        empty = tmp_path / "empty.txt"
        empty.write_text("0 25 10\n")
        out = tmp_path / "pred.txt"
        rc = main(["predict", "--model", str(trained), "--data", str(empty),
                   "--k", "1", "--out", str(out)])
        assert rc == 0
        assert out.read_text() == ""

    def test_predict_dim_mismatch_exit_2(self, workdir, trained, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("1 7 10\n 0:1.0\n")
        rc = main(["predict", "--model", str(trained), "--data", str(bad),
                   "--k", "1", "--out", str(tmp_path / "p.txt")])
        assert rc == 2

    def test_eval_prints_and_json(self, workdir, trained, capsys, tmp_path):
        jpath = tmp_path / "eval.json"
        rc = main(["eval", "--model", str(trained), "--data", str(workdir / "test.txt"),
                   "--k", "1,3,5", "--json", str(jpath)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "P@1 " in out and "P@3 " in out and "P@5 " in out
        assert "macro-P" in out and "macro-R" in out
        data = json.loads(jpath.read_text())
        if jsonschema is not None:
            jsonschema.validate(data, EVAL_SCHEMA)

    def test_k_list_order_independent(self, workdir, trained, capsys):
        rc = main(["eval", "--model", str(trained), "--data", str(workdir / "test.txt"),
                   "--k", "5,1,3"])
        assert rc == 0
        out1 = capsys.readouterr().out
        rc = main(["eval", "--model", str(trained), "--data", str(workdir / "test.txt"),
                   "--k", "1,3,5"])
        assert rc == 0
        assert capsys.readouterr().out == out1

    def test_perfect_model_p1(self, tmp_path, capsys):
        # single instance, single label, hand-built perfect model
        data = tmp_path / "d.txt"
        data.write_text("1 2 2\n1 0:1.0\n")
        model = tmp_path / "m.model"
        model.write_text("xova v1 2 2 -1 squared-hinge zero\n0 0\n1 1 0:2.0\n")
        rc = main(["eval", "--model", str(model), "--data", str(data), "--k", "1"])
        assert rc == 0
        assert "P@1 1.0000" in capsys.readouterr().out


class TestDiagSummary:
    def test_merge_and_columns(self, workdir, tmp_path):
        for init in ("zero", "aop"):
            rc = main(
                train_args(workdir, model=f"{init}.model")
                + ["--init", init, "--diag-out", str(workdir / f"{init}.json")]
            )
            assert rc == 0
        prefix = tmp_path / "cmp"
        rc = main(["diag-summary", "--reports", str(workdir / "zero.json"),
                   str(workdir / "aop.json"), "--out", str(prefix)])
        assert rc == 0
        frac = (tmp_path / "cmp.active_fraction.csv").read_text().splitlines()
        assert frac[0] == "iteration,zero,aop"
        first_row = frac[1].split(",")
        assert first_row[0] == "0"
        assert float(first_row[1]) == 1.0  # zero init, squared hinge
        buckets = (tmp_path / "cmp.positives_buckets.csv").read_text().splitlines()
        header = buckets[0].split(",")
        assert header[:2] == ["bucket_lo", "bucket_hi"]
        los = [int(r.split(",")[0]) for r in buckets[1:]]
        his = [int(r.split(",")[1]) for r in buckets[1:]]
        pow_rows = [(lo, hi) for lo, hi in zip(los, his) if lo >= 1]
        assert all(hi == 2 * lo for lo, hi in pow_rows)
        # edges cover the maximum positive count
        report = json.loads((workdir / "zero.json").read_text())
        max_pos = max(r["positives"] for r in report["labels"])
        assert his[-1] > max_pos

    def test_single_report(self, workdir, tmp_path):
        prefix = tmp_path / "single"
        rc = main(["diag-summary", "--reports", str(workdir / "zero.json"),
                   "--out", str(prefix)])
        assert rc == 0
        frac = (tmp_path / "single.active_fraction.csv").read_text().splitlines()
        assert frac[0] == "iteration,zero"

    def test_mixed_datasets_rejected(self, workdir, tmp_path, capsys):
        other = tmp_path / "other"
        rc = main(["synth", "--n", "100", "--d", "25", "--l", "10", "--tail", "1.2",
                   "--seed", "99", "--out", str(tmp_path / "other.txt")])
        assert rc == 0
        rc = main(["train", "--data", str(tmp_path / "other.txt"), "--init", "zero",
                   "--model-out", str(tmp_path / "o.model"),
                   "--diag-out", str(tmp_path / "o.json")])
        assert rc == 0
        rc = main(["diag-summary", "--reports", str(workdir / "zero.json"),
                   str(tmp_path / "o.json"), "--out", str(tmp_path / "bad")])
        assert rc == 1
        assert "different datasets" in capsys.readouterr().err


class TestExitCodes:
    def test_no_command_is_usage_error(self):
        assert main([]) == 1

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 1

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0
