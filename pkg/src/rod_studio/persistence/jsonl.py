"""JSON Lines ingestion with per-line validation, and atomic writers."""

import errno
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from rod_studio.config import PriorConfig, SpatialVocabulary
from rod_studio.errors import (
    DimensionMismatch,
    DuplicateId,
    ParseError,
    RodStudioError,
)
from rod_studio.grounding.priors import PriorBundle, RelevanceGrid, compute_bundle
from rod_studio.grounding.sample import Sample
from rod_studio.logging import get_logger
from rod_studio.persistence.records import (
    DEFAULT_BOX_FORMAT,
    BoxFormat,
    Header,
    RelmapRecord,
    SampleRecord,
)

log = get_logger("rod_studio.persistence")


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    loc = ".".join(str(p) for p in err.get("loc", ()))
    return f"{loc}: {err.get('msg')}" if loc else str(err.get("msg"))


def read_jsonl(path: Path) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield ``(line_number, object)`` for every non-blank line."""
    with Path(path).open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON ({e.msg})", line_no, str(path))
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line_no, str(path))
            yield line_no, obj


def read_samples(path: Path) -> List[Sample]:
    fmt: BoxFormat = DEFAULT_BOX_FORMAT
    samples: List[Sample] = []
    seen = set()
    for line_no, obj in read_jsonl(path):
        if "header" in obj:
            if samples:
                raise ParseError("header must be the first line", line_no, str(path))
            try:
                fmt = Header.model_validate(obj["header"]).box_format
            except ValidationError as e:
                raise ParseError(_first_error(e), line_no, str(path)) from e
            continue
        try:
            record = SampleRecord.model_validate(obj)
        except ValidationError as e:
            raise ParseError(_first_error(e), line_no, str(path)) from e
        if record.id in seen:
            raise DuplicateId(record.id, line=line_no)
        seen.add(record.id)
        try:
            samples.append(record.to_sample(fmt))
        except (RodStudioError, ValidationError) as e:
            msg = _first_error(e) if isinstance(e, ValidationError) else e.message
            raise ParseError(f"{record.id}: {msg}", line_no, str(path)) from e
    log.info("Read %d samples from %s (box_format=%s)", len(samples), path, fmt)
    return samples


def read_relmaps(path: Path) -> Dict[str, RelevanceGrid]:
    grids: Dict[str, RelevanceGrid] = {}
    clamped = 0
    for line_no, obj in read_jsonl(path):
        try:
            record = RelmapRecord.model_validate(obj)
        except ValidationError as e:
            raise ParseError(_first_error(e), line_no, str(path)) from e
        if record.id in grids:
            raise DuplicateId(record.id, line=line_no)
        if len(record.values) != record.w * record.h:
            raise DimensionMismatch(record.id, record.w * record.h, len(record.values))
        try:
            grid = record.to_grid()
        except ValueError as e:
            raise ParseError(f"{record.id}: {e}", line_no, str(path)) from e
        clamped += grid.clamped
        grids[record.id] = grid
    if clamped:
        log.warning("Clamped %d relevance values in %s", clamped, path)
    log.info("Read %d relevance maps from %s", len(grids), path)
    return grids


class Dataset(BaseModel):
    """Validated samples joined with their relevance maps by id."""

    model_config = ConfigDict(frozen=True)

    samples: List[Sample]
    grids: Dict[str, RelevanceGrid] = Field(default_factory=dict)
    missing_relmaps: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    def ids(self) -> List[str]:
        return [s.id for s in self.samples]

    def labeled(self) -> List[Tuple[str, str]]:
        return [(s.id, s.category) for s in self.samples]

    def subset(self, ids: Sequence[str]) -> "Dataset":
        by_id = {s.id: s for s in self.samples}
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise RodStudioError(
                f"{len(missing)} split ids are not in the dataset",
                missing=missing[:10],
            )
        chosen = [by_id[i] for i in ids]
        return Dataset(
            samples=chosen,
            grids={s.id: self.grids[s.id] for s in chosen if s.id in self.grids},
            missing_relmaps=sum(1 for s in chosen if s.id not in self.grids),
        )

    def bundles(
        self,
        config: Optional[PriorConfig] = None,
        vocabulary: Optional[SpatialVocabulary] = None,
    ) -> List[PriorBundle]:
        return [
            compute_bundle(s, self.grids.get(s.id), config, vocabulary)
            for s in self.samples
        ]


def ingest(samples_path: Path, relmaps_path: Optional[Path] = None) -> Dataset:
    samples = read_samples(samples_path)
    grids = read_relmaps(relmaps_path) if relmaps_path else {}
    ids = {s.id for s in samples}
    unused = sum(1 for i in grids if i not in ids)
    if unused:
        log.debug("Ignoring %d relevance maps without a sample", unused)
    grids = {i: g for i, g in grids.items() if i in ids}
    missing = sum(1 for s in samples if s.id not in grids)
    if missing:
        log.warning(
            "%d samples have no relevance map; visual prior falls back to neutral",
            missing,
        )
    return Dataset(samples=samples, grids=grids, missing_relmaps=missing)


def _stage(path: Path, text: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except BaseException:
        os.unlink(tmp)
        raise
    return tmp


def atomic_write_many(outputs: Sequence[Tuple[Path, str]]) -> None:
    """Write several files so that either all of them land or none do.

    Every text goes to a temp file beside its target first; targets are only
    renamed into place once all temp files are written. A failed rename
    removes the targets already placed by this call.
    """
    staged: List[Tuple[str, Path]] = []
    placed: List[Path] = []
    try:
        for path, text in outputs:
            path = Path(path)
            staged.append((_stage(path, text), path))
        for _, path in staged:
            if path.is_dir():
                raise IsADirectoryError(
                    errno.EISDIR, "output path is a directory", str(path)
                )
        for tmp, path in staged:
            os.replace(tmp, path)
            placed.append(path)
    except BaseException:
        for path in placed:
            path.unlink(missing_ok=True)
        log.error("Write failed; removed %d partially written outputs", len(placed))
        raise
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def dumps_jsonl(rows: Sequence[Dict[str, Any]]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)


def samples_jsonl(samples: Sequence[Sample]) -> str:
    rows: List[Dict[str, Any]] = [{"header": {"box_format": "xyxy_norm"}}]
    rows.extend(SampleRecord.from_sample(s).model_dump(mode="json") for s in samples)
    return dumps_jsonl(rows)


def relmaps_jsonl(items: Sequence[Tuple[str, RelevanceGrid]]) -> str:
    return dumps_jsonl(
        [RelmapRecord.from_grid(i, g).model_dump(mode="json") for i, g in items]
    )
