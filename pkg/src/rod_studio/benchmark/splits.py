"""Deterministic low-data and few-shot benchmark splits.

All randomness comes from SplitMix64::

    state = (state + 0x9E3779B97F4A7C15) mod 2**64
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9  mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB          mod 2**64
    out = z ^ (z >> 31)

and a Fisher-Yates shuffle that, for ``i`` from ``n - 1`` down to 1, swaps
position ``i`` with ``out % (i + 1)``. Every split is a prefix of one
permutation, so smaller splits nest inside larger ones.
"""

import hashlib
import json
import math
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from rod_studio.errors import DuplicateId, EmptyDataset, InsufficientPool
from rod_studio.logging import get_logger

log = get_logger("rod_studio.benchmark")

MASK64 = (1 << 64) - 1
DEFAULT_PERCENTAGES = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05]


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def shuffle(self, items: Sequence[str]) -> List[str]:
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.next() % (i + 1)
            out[i], out[j] = out[j], out[i]
        return out


def _strictly_increasing(values: Sequence[float]) -> bool:
    return all(a < b for a, b in zip(values, values[1:]))


class SplitSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: Literal["lowdata", "fewshot"] = "lowdata"
    percentages: List[float] = Field(default_factory=lambda: list(DEFAULT_PERCENTAGES))
    support_categories: List[str] = Field(default_factory=lambda: ["person"])
    support_size: Union[int, List[int]] = 1000
    novel_sizes: List[int] = Field(default_factory=lambda: [500, 1000, 2000])
    seed: int = 0

    @field_validator("percentages")
    @classmethod
    def _check_percentages(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("percentages must not be empty")
        if any(not (0.0 < p <= 1.0) for p in v):
            raise ValueError("percentages must lie in (0, 1]")
        if not _strictly_increasing(v):
            raise ValueError("percentages must be strictly increasing")
        return v

    @model_validator(mode="after")
    def _check_sizes(self) -> "SplitSpec":
        if not self.novel_sizes or not _strictly_increasing(self.novel_sizes):
            raise ValueError("novel_sizes must be non-empty and strictly increasing")
        if not self.support_sizes or not _strictly_increasing(self.support_sizes):
            raise ValueError("support sizes must be strictly increasing")
        if min(self.novel_sizes + self.support_sizes) < 1:
            raise ValueError("split sizes must be positive")
        return self

    @property
    def support_sizes(self) -> List[int]:
        if isinstance(self.support_size, int):
            return [self.support_size]
        return list(self.support_size)

    def digest(self) -> str:
        canonical = json.dumps(
            self.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class SplitManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: Literal["lowdata", "fewshot"]
    seed: int
    spec: SplitSpec
    spec_hash: str
    splits: Dict[str, List[str]]

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2) + "\n"

    def ids(self, name: str) -> List[str]:
        if name not in self.splits:
            raise KeyError(f"unknown split {name!r}; have {sorted(self.splits)}")
        return self.splits[name]


def split_count(fraction: float, total: int) -> int:
    return max(1, math.floor(fraction * total + 0.5))


def lowdata_name(fraction: float) -> str:
    return f"lowdata_{fraction * 100:g}%"


def _check_unique(ids: Iterable[str]) -> List[str]:
    seen = set()
    out = []
    for i in ids:
        if i in seen:
            raise DuplicateId(i)
        seen.add(i)
        out.append(i)
    return out


def sample_low_data(
    ids: Sequence[str],
    percentages: Optional[Sequence[float]] = None,
    seed: int = 0,
) -> SplitManifest:
    ids = _check_unique(ids)
    if not ids:
        raise EmptyDataset("no sample ids to split")
    spec = SplitSpec(
        mode="lowdata",
        percentages=list(percentages or DEFAULT_PERCENTAGES),
        seed=seed,
    )
    order = SplitMix64(seed).shuffle(ids)
    splits = {
        lowdata_name(p): order[: split_count(p, len(order))] for p in spec.percentages
    }
    log.info("Low-data manifest: n=%d splits=%d seed=%d", len(ids), len(splits), seed)
    return SplitManifest(
        mode="lowdata", seed=seed, spec=spec, spec_hash=spec.digest(), splits=splits
    )


def sample_few_shot(
    labeled: Sequence[Tuple[str, str]], spec: SplitSpec, seed: Optional[int] = None
) -> SplitManifest:
    """Support splits from ``spec.support_categories``, novel splits from the rest."""
    seed = spec.seed if seed is None else seed
    spec = spec.model_copy(update={"mode": "fewshot", "seed": seed})
    ids = _check_unique(i for i, _ in labeled)
    if not ids:
        raise EmptyDataset("no sample ids to split")
    support_cats = set(spec.support_categories)
    support_pool = [i for i, cat in labeled if cat in support_cats]
    novel_pool = [i for i, cat in labeled if cat not in support_cats]
    for family, pool, sizes in (
        ("support", support_pool, spec.support_sizes),
        ("novel", novel_pool, spec.novel_sizes),
    ):
        if sizes[-1] > len(pool):
            raise InsufficientPool(
                f"{family} split of {sizes[-1]} requested from a pool of {len(pool)}",
                family=family,
                requested=sizes[-1],
                available=len(pool),
            )
    rng = SplitMix64(seed)
    support_order = rng.shuffle(support_pool)
    novel_order = rng.shuffle(novel_pool)
    splits: Dict[str, List[str]] = {}
    for n in spec.support_sizes:
        splits[f"support_{n}"] = support_order[:n]
    for n in spec.novel_sizes:
        splits[f"novel_{n}"] = novel_order[:n]
    log.info(
        "Few-shot manifest: support_pool=%d novel_pool=%d seed=%d",
        len(support_pool),
        len(novel_pool),
        seed,
    )
    return SplitManifest(
        mode="fewshot", seed=seed, spec=spec, spec_hash=spec.digest(), splits=splits
    )


def build_manifest(
    spec: SplitSpec, labeled: Sequence[Tuple[str, str]], seed: Optional[int] = None
) -> SplitManifest:
    seed = spec.seed if seed is None else seed
    if spec.mode == "lowdata":
        return sample_low_data([i for i, _ in labeled], spec.percentages, seed)
    return sample_few_shot(labeled, spec, seed)
