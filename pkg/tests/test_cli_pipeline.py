import json
import shlex
import sys

import pytest

from rod_studio.cli import rod_cli as cli
from rod_studio.fusion.net import zero_fusion_net


def run(monkeypatch, command):
    monkeypatch.setattr(sys, "argv", ["rod-studio", *shlex.split(command)])
    cli.main()


def last_json(stream):
    return json.loads(stream.strip().splitlines()[-1])


def pipeline(monkeypatch, root):
    data = root / "data"
    root.mkdir(parents=True)
    (root / "split.json").write_text(
        json.dumps({"percentages": [0.5, 1.0]}), encoding="utf-8"
    )
    (root / "scene.json").write_text(
        json.dumps({"ambiguity_rate": 0.8, "grid_res": 16}), encoding="utf-8"
    )
    samples, relmaps = data / "samples.jsonl", data / "relmaps.jsonl"
    run(monkeypatch, f"gen --spec {root / 'scene.json'} --n 200 --seed 3 --out {data}")
    run(
        monkeypatch,
        f"split --mode lowdata --spec {root / 'split.json'} --samples {samples} "
        f"--seed 4 --out {root / 'manifest.json'}",
    )
    run(
        monkeypatch,
        f"train-fusion --samples {samples} --relmaps {relmaps} "
        f"--manifest {root / 'manifest.json'} --split lowdata_50% "
        f"--epochs 60 --seed 5 --out {root / 'net.json'} --log {root / 'loss.csv'}",
    )
    run(
        monkeypatch,
        f"score --samples {samples} --relmaps {relmaps} --mode learned "
        f"--net {root / 'net.json'} --out {root / 'preds.json'}",
    )
    run(
        monkeypatch,
        f"eval --samples {samples} --preds {root / 'preds.json'} "
        f"--out {root / 'report.json'} --log {root / 'eval.log.json'}",
    )
    return [
        samples,
        relmaps,
        root / "manifest.json",
        root / "net.json",
        root / "loss.csv",
        root / "preds.json",
        root / "report.json",
        root / "eval.log.json",
    ]


def test_pipeline_is_byte_identical_across_runs(tmp_path, monkeypatch, capsys):
    first = pipeline(monkeypatch, tmp_path / "a")
    second = pipeline(monkeypatch, tmp_path / "b")
    for x, y in zip(first, second):
        assert x.read_bytes() == y.read_bytes(), x.name

    report = json.loads((tmp_path / "a" / "report.json").read_text(encoding="utf-8"))
    assert 0.0 <= report["top1"] <= 1.0
    assert report["n"] == 200
    assert report["top1"] <= report["oracle_top1"]
    loss_lines = (tmp_path / "a" / "loss.csv").read_text(encoding="utf-8").splitlines()
    assert loss_lines[0] == "epoch,loss"
    assert len(loss_lines) == 61
    assert last_json(capsys.readouterr().out)["command"] == "eval"


def test_zero_net_ties_to_first_candidate(tmp_path, monkeypatch):
    run(monkeypatch, f"gen --n 40 --seed 1 --out {tmp_path}")
    net_path = tmp_path / "zero.json"
    net_path.write_text(zero_fusion_net().model_dump_json(), encoding="utf-8")
    inputs = (
        f"--samples {tmp_path / 'samples.jsonl'} "
        f"--relmaps {tmp_path / 'relmaps.jsonl'}"
    )
    run(
        monkeypatch,
        f"score {inputs} --mode learned --net {net_path} --out {tmp_path / 'l.json'}",
    )
    run(monkeypatch, f"score {inputs} --mode zeroshot --out {tmp_path / 'z.json'}")
    learned = json.loads((tmp_path / "l.json").read_text(encoding="utf-8"))
    zeroshot = json.loads((tmp_path / "z.json").read_text(encoding="utf-8"))
    assert set(learned["predictions"].values()) == {0}
    assert any(v != 0 for v in zeroshot["predictions"].values())


def test_few_shot_split_command(tmp_path, monkeypatch, capsys):
    run(monkeypatch, f"gen --n 60 --seed 2 --out {tmp_path}")
    spec = tmp_path / "fs.json"
    spec.write_text(
        json.dumps(
            {"support_categories": ["person"], "support_size": 2, "novel_sizes": [1, 2]}
        ),
        encoding="utf-8",
    )
    run(
        monkeypatch,
        f"split --mode fewshot --spec {spec} --samples {tmp_path / 'samples.jsonl'} "
        f"--seed 0 --out {tmp_path / 'm.json'}",
    )
    manifest = json.loads((tmp_path / "m.json").read_text(encoding="utf-8"))
    assert manifest["mode"] == "fewshot"
    assert set(manifest["splits"]) == {"support_2", "novel_1", "novel_2"}
    summary = last_json(capsys.readouterr().out)
    assert summary["splits"] == {"support_2": 2, "novel_1": 1, "novel_2": 2}


def test_export_field(tmp_path, monkeypatch):
    out = tmp_path / "grid.json"
    run(monkeypatch, f"export-field --terms 'bottom left' --res 4 --out {out}")
    grid = json.loads(out.read_text(encoding="utf-8"))
    assert grid["terms"] == ["bottom left"]
    values = grid["values"]
    assert len(values) == 16
    # row-major: last row, first column is the bottom-left cell
    assert values[12] == max(values)


def test_sweep_reports_every_split(tmp_path, monkeypatch):
    tr, ev = tmp_path / "tr", tmp_path / "ev"
    run(monkeypatch, f"gen --n 60 --seed 8 --out {tr}")
    run(monkeypatch, f"gen --n 30 --seed 9 --out {ev}")
    split_spec = tmp_path / "split.json"
    split_spec.write_text(json.dumps({"percentages": [0.25, 1.0]}), encoding="utf-8")
    run(
        monkeypatch,
        f"split --mode lowdata --spec {split_spec} --samples {tr / 'samples.jsonl'} "
        f"--out {tmp_path / 'm.json'}",
    )
    run(
        monkeypatch,
        f"sweep --samples {tr / 'samples.jsonl'} --relmaps {tr / 'relmaps.jsonl'} "
        f"--manifest {tmp_path / 'm.json'} --eval-samples {ev / 'samples.jsonl'} "
        f"--eval-relmaps {ev / 'relmaps.jsonl'} --epochs 20 "
        f"--out {tmp_path / 'curve.json'}",
    )
    curve = json.loads((tmp_path / "curve.json").read_text(encoding="utf-8"))
    assert [r["split"] for r in curve["rows"]] == ["lowdata_25%", "lowdata_100%"]
    for row in curve["rows"]:
        for key in ("detector", "zeroshot", "learned"):
            assert 0.0 <= row[key] <= 1.0


def test_failure_prints_error_object_and_writes_nothing(tmp_path, monkeypatch, capsys):
    run(monkeypatch, f"gen --n 5 --seed 1 --out {tmp_path}")
    preds = tmp_path / "preds.json"
    preds.write_text(
        json.dumps({"mode": "zeroshot", "predictions": {"s000000": 0}}),
        encoding="utf-8",
    )
    report = tmp_path / "report.json"
    with pytest.raises(SystemExit) as exc:
        run(
            monkeypatch,
            f"eval --samples {tmp_path / 'samples.jsonl'} --preds {preds} "
            f"--out {report}",
        )
    assert exc.value.code == 1
    error = last_json(capsys.readouterr().err)
    assert error["error"] == "MissingPrediction"
    assert error["id"] == "s000001"
    assert not report.exists()


def test_learned_mode_requires_net(tmp_path, monkeypatch, capsys):
    run(monkeypatch, f"gen --n 3 --out {tmp_path}")
    with pytest.raises(SystemExit):
        run(
            monkeypatch,
            f"score --samples {tmp_path / 'samples.jsonl'} --mode learned "
            f"--out {tmp_path / 'p.json'}",
        )
    assert last_json(capsys.readouterr().err)["error"] == "RodStudioError"


@pytest.mark.parametrize(
    "command, flag",
    [
        ("score --samples {samples} --top-n 0 --out {out}", "--top-n"),
        ("export-field --terms left --res 0 --out {out}", "--res"),
    ],
)
def test_non_positive_counts_fail_cleanly(tmp_path, monkeypatch, capsys, command, flag):
    run(monkeypatch, f"gen --n 3 --seed 1 --out {tmp_path}")
    out = tmp_path / "result.json"
    with pytest.raises(SystemExit) as exc:
        run(monkeypatch, command.format(samples=tmp_path / "samples.jsonl", out=out))
    assert exc.value.code == 1
    error = last_json(capsys.readouterr().err)
    assert error["error"] == "RodStudioError"
    assert error["flag"] == flag
    assert not out.exists()


def test_gen_writes_nothing_when_an_output_is_blocked(tmp_path, monkeypatch, capsys):
    (tmp_path / "relmaps.jsonl").mkdir()
    with pytest.raises(SystemExit) as exc:
        run(monkeypatch, f"gen --n 4 --seed 1 --out {tmp_path}")
    assert exc.value.code == 1
    assert last_json(capsys.readouterr().err)["error"] == "IsADirectoryError"
    assert not (tmp_path / "samples.jsonl").exists()
    assert [p.name for p in tmp_path.iterdir()] == ["relmaps.jsonl"]


def test_train_keeps_previous_net_when_loss_log_is_blocked(tmp_path, monkeypatch):
    run(monkeypatch, f"gen --n 20 --seed 6 --out {tmp_path}")
    net_path = tmp_path / "net.json"
    net_path.write_text("previous\n", encoding="utf-8")
    (tmp_path / "loss.csv").mkdir()
    with pytest.raises(SystemExit):
        run(
            monkeypatch,
            f"train-fusion --samples {tmp_path / 'samples.jsonl'} --epochs 2 "
            f"--out {net_path} --log {tmp_path / 'loss.csv'}",
        )
    assert net_path.read_text(encoding="utf-8") == "previous\n"


def test_sweep_ranks_references_as_configured(tmp_path, monkeypatch):
    run(monkeypatch, f"gen --n 20 --seed 8 --out {tmp_path}")
    samples = tmp_path / "samples.jsonl"
    manifest = tmp_path / "m.json"
    split_spec = tmp_path / "split.json"
    split_spec.write_text(json.dumps({"percentages": [1.0]}), encoding="utf-8")
    run(
        monkeypatch,
        f"split --mode lowdata --spec {split_spec} --samples {samples} "
        f"--out {manifest}",
    )
    config = tmp_path / "engine.yaml"
    config.write_text("reference:\n  top_n: 2\n  use_priors: false\n", encoding="utf-8")
    seen = []
    predict_all = cli._predict_all

    def recording(*args):
        seen.append(args[5:])
        return predict_all(*args)

    monkeypatch.setattr(cli, "_predict_all", recording)
    run(
        monkeypatch,
        f"sweep --samples {samples} --manifest {manifest} --eval-samples {samples} "
        f"--epochs 2 --config {config} --out {tmp_path / 'curve.json'}",
    )
    assert seen and set(seen) == {(2, False)}
    curve = json.loads((tmp_path / "curve.json").read_text(encoding="utf-8"))
    assert curve["reference_priors"] is False
    assert curve["top_n"] == 2
