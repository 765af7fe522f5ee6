import json

import pytest

from rod_studio.benchmark.synth import SceneSpec, generate
from rod_studio.errors import DimensionMismatch, DuplicateId, ParseError
from rod_studio.persistence.jsonl import (
    atomic_write_many,
    ingest,
    read_samples,
    relmaps_jsonl,
    samples_jsonl,
)


def write_lines(path, rows):
    path.write_text(
        "".join((r if isinstance(r, str) else json.dumps(r)) + "\n" for r in rows),
        encoding="utf-8",
    )
    return path


def sample_row(sid, **overrides):
    row = {
        "id": sid,
        "w": 100,
        "h": 50,
        "phrase": "red cup on the left",
        "gt": [10, 10, 20, 20],
        "category": "cup",
        "candidates": [
            {"box": [10, 10, 20, 20], "score": 0.9},
            {"box": [70, 10, 20, 20], "score": 0.4},
        ],
    }
    row.update(overrides)
    return row


def test_reads_well_formed_samples_with_pixel_boxes(tmp_path):
    path = write_lines(tmp_path / "s.jsonl", [sample_row(f"a{i}") for i in range(3)])
    samples = read_samples(path)
    assert [s.id for s in samples] == ["a0", "a1", "a2"]
    gt = samples[0].gt
    assert (gt.x1, gt.y1, gt.x2, gt.y2) == pytest.approx((0.1, 0.2, 0.3, 0.6))
    assert samples[0].scores == [0.9, 0.4]


def test_header_switches_to_normalized_boxes(tmp_path):
    rows = [
        {"header": {"box_format": "xyxy_norm"}},
        sample_row(
            "n0",
            gt=[0.1, 0.2, 0.3, 0.6],
            candidates=[{"box": [0.5, 0.5, 0.9, 0.9], "score": 0.3}],
        ),
    ]
    samples = read_samples(write_lines(tmp_path / "s.jsonl", rows))
    assert samples[0].gt.as_list() == [0.1, 0.2, 0.3, 0.6]
    assert samples[0].candidates[0].box.as_list() == [0.5, 0.5, 0.9, 0.9]


def test_header_after_first_sample_is_rejected(tmp_path):
    rows = [sample_row("a"), {"header": {"box_format": "xyxy_norm"}}]
    with pytest.raises(ParseError) as exc:
        read_samples(write_lines(tmp_path / "s.jsonl", rows))
    assert exc.value.line == 2


def test_invalid_json_reports_line_number(tmp_path):
    rows = [sample_row("a"), "", "{not json"]
    with pytest.raises(ParseError) as exc:
        read_samples(write_lines(tmp_path / "s.jsonl", rows))
    assert exc.value.line == 3
    assert exc.value.to_dict()["line"] == 3


def test_schema_error_reports_line_number(tmp_path):
    bad = sample_row("b")
    del bad["phrase"]
    with pytest.raises(ParseError) as exc:
        read_samples(write_lines(tmp_path / "s.jsonl", [sample_row("a"), bad]))
    assert exc.value.line == 2
    assert "phrase" in exc.value.message


def test_out_of_range_score_is_rejected(tmp_path):
    bad = sample_row("a", candidates=[{"box": [0, 0, 10, 10], "score": 1.5}])
    with pytest.raises(ParseError):
        read_samples(write_lines(tmp_path / "s.jsonl", [bad]))


def test_zero_area_ground_truth_is_rejected(tmp_path):
    bad = sample_row("z", gt=[10, 10, 0, 20])
    with pytest.raises(ParseError) as exc:
        read_samples(write_lines(tmp_path / "s.jsonl", [bad]))
    assert "z" in exc.value.message


def test_phrase_without_words_is_rejected(tmp_path):
    rows = [sample_row("a"), sample_row("dots", phrase="...")]
    with pytest.raises(ParseError) as exc:
        read_samples(write_lines(tmp_path / "s.jsonl", rows))
    assert exc.value.line == 2
    assert "dots" in exc.value.message


def test_duplicate_ids_are_rejected(tmp_path):
    rows = [sample_row("a"), sample_row("b"), sample_row("a")]
    with pytest.raises(DuplicateId) as exc:
        read_samples(write_lines(tmp_path / "s.jsonl", rows))
    assert exc.value.details == {"id": "a", "line": 3}


def test_relmap_dimension_mismatch_names_the_sample(tmp_path):
    samples = write_lines(tmp_path / "s.jsonl", [sample_row("a")])
    relmaps = write_lines(
        tmp_path / "r.jsonl", [{"id": "a", "w": 2, "h": 2, "values": [0.1] * 3}]
    )
    with pytest.raises(DimensionMismatch) as exc:
        ingest(samples, relmaps)
    assert exc.value.details["id"] == "a"
    assert exc.value.details == {"id": "a", "expected": 4, "actual": 3}


def test_missing_relmap_falls_back_to_neutral_visual_prior(tmp_path):
    samples = write_lines(tmp_path / "s.jsonl", [sample_row("a"), sample_row("b")])
    relmaps = write_lines(
        tmp_path / "r.jsonl", [{"id": "a", "w": 2, "h": 1, "values": [1.0, 0.0]}]
    )
    dataset = ingest(samples, relmaps)
    assert dataset.missing_relmaps == 1
    with_map, without_map = dataset.bundles()
    # left candidate covers the left cell, right candidate the right one
    assert with_map.h_v == [1.0, 0.0]
    assert without_map.h_v == [0.5, 0.5]


def test_relmap_values_are_clamped(tmp_path):
    samples = write_lines(tmp_path / "s.jsonl", [sample_row("a")])
    relmaps = write_lines(
        tmp_path / "r.jsonl", [{"id": "a", "w": 2, "h": 1, "values": [1.4, -0.2]}]
    )
    grid = ingest(samples, relmaps).grids["a"]
    assert grid.values == (1.0, 0.0)
    assert grid.clamped == 2


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out" / "file.json"
    atomic_write_many([(target, "first\n")])
    atomic_write_many([(target, "second\n")])
    assert target.read_text(encoding="utf-8") == "second\n"
    assert [p.name for p in target.parent.iterdir()] == ["file.json"]


def test_write_many_places_nothing_when_one_target_fails(tmp_path):
    first = tmp_path / "out" / "samples.jsonl"
    blocked = tmp_path / "out" / "relmaps.jsonl"
    blocked.mkdir(parents=True)
    with pytest.raises(IsADirectoryError):
        atomic_write_many([(first, "a\n"), (blocked, "b\n")])
    assert not first.exists()
    assert sorted(p.name for p in first.parent.iterdir()) == ["relmaps.jsonl"]


def test_write_many_replaces_every_target(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "sub" / "b.json"
    a.write_text("old\n", encoding="utf-8")
    atomic_write_many([(a, "new a\n"), (b, "new b\n")])
    assert a.read_text(encoding="utf-8") == "new a\n"
    assert b.read_text(encoding="utf-8") == "new b\n"


def test_generated_corpus_ingests_without_loss(tmp_path):
    scenes = generate(SceneSpec(grid_res=8), 25, seed=11)
    samples_path = tmp_path / "samples.jsonl"
    relmaps_path = tmp_path / "relmaps.jsonl"
    atomic_write_many(
        [
            (samples_path, samples_jsonl([s for s, _ in scenes])),
            (relmaps_path, relmaps_jsonl([(s.id, g) for s, g in scenes])),
        ]
    )

    dataset = ingest(samples_path, relmaps_path)
    assert dataset.missing_relmaps == 0
    assert dataset.samples == [s for s, _ in scenes]
    assert [dataset.grids[s.id].values for s, _ in scenes] == [
        g.values for _, g in scenes
    ]
