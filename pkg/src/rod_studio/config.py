"""Engine configuration and task-file loading.

Task files live under ``tasks/`` at the repository root; ``ROD_STUDIO_TASKS_DIR``
points the loaders at another directory. The spatial vocabulary is per
language (``tasks/spatial_vocab/<lang>.yaml``, falling back to ``en.yaml``) and
the numeric engine settings sit in ``tasks/engine/default.yaml``.
"""

import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from rod_studio.errors import ConfigError
from rod_studio.logging import get_logger

log = get_logger("rod_studio.config")

DEFAULT_LANGUAGE = os.getenv("ROD_STUDIO_LANG", "en")

DEFAULT_BASE_WORDS: Dict[str, str] = {
    "left": "left",
    "right": "right",
    "top": "top",
    "bottom": "bottom",
    "center": "center",
}

DEFAULT_SYNONYMS: Dict[str, str] = {
    "leftmost": "left",
    "rightmost": "right",
    "upper": "top",
    "uppermost": "top",
    "lower": "bottom",
    "lowest": "bottom",
    "middle": "center",
}


class SpatialVocabulary(BaseModel):
    """Words that map onto the five base spatial kinds."""

    model_config = ConfigDict(frozen=True)

    language: str = "en"
    base: Dict[str, str] = Field(default_factory=lambda: dict(DEFAULT_BASE_WORDS))
    synonyms: Dict[str, str] = Field(default_factory=lambda: dict(DEFAULT_SYNONYMS))

    @model_validator(mode="after")
    def _check_targets(self) -> "SpatialVocabulary":
        kinds = set(DEFAULT_BASE_WORDS)
        for word, kind in self.base.items():
            if kind not in kinds:
                raise ValueError(f"base word {word!r} maps to unknown kind {kind!r}")
        for word, target in self.synonyms.items():
            if target not in self.base:
                raise ValueError(f"synonym {word!r} maps to non-base word {target!r}")
        return self

    def lookup(self, token: str) -> Optional[str]:
        """Return the base kind for a token, resolving synonyms first."""
        word = self.synonyms.get(token, token)
        return self.base.get(word)


class CompositeWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    vertical: float = Field(1.0, ge=0.0)
    horizontal: float = Field(1.0, ge=0.0)

    @model_validator(mode="after")
    def _not_both_zero(self) -> "CompositeWeights":
        if self.vertical + self.horizontal <= 0.0:
            raise ValueError("composite weights must not both be zero")
        return self


class PriorConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    decay: Literal["linear", "gaussian"] = "linear"
    sigma: float = Field(0.35, gt=0.0)
    neutral: float = Field(0.5, ge=0.0, le=1.0)
    use_spatial: bool = True
    use_visual: bool = True
    composite_weights: CompositeWeights = Field(default_factory=CompositeWeights)


class LossWeights(BaseModel):
    """Weights shared by the matching cost and the training loss."""

    model_config = ConfigDict(frozen=True)

    cls: float = Field(1.0, ge=0.0)
    l1: float = Field(5.0, ge=0.0)
    giou: float = Field(2.0, ge=0.0)
    conf: float = Field(1.0, ge=0.0)
    prior: float = Field(1.0, ge=0.0)


class FusionConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.05, gt=0.0)
    init_scale: float = Field(0.5, gt=0.0)
    epochs: int = Field(500, ge=0)


class ReferenceConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    top_n: Optional[int] = Field(None, ge=1)
    use_priors: bool = True


class EvaluationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    iou_threshold: float = Field(0.5, gt=0.0, le=1.0)


class EngineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    priors: PriorConfig = Field(default_factory=PriorConfig)
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    reference: ReferenceConfig = Field(default_factory=ReferenceConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)


def tasks_dir() -> Path:
    base_dir_env = os.getenv("ROD_STUDIO_TASKS_DIR")
    if base_dir_env:
        return Path(base_dir_env)
    return Path(__file__).resolve().parents[2] / "tasks"


def _read_yaml(path: Path) -> Dict[str, Any]:
    try:
        with path.open("r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except Exception as e:
        log.error("Failed to load task file %s: %s", path, e)
        return {}
    if not isinstance(data, dict):
        log.error("Task file %s does not contain a mapping; ignoring", path)
        return {}
    log.info("Loaded task file: %s", path)
    return data


def load_vocabulary(language: str = DEFAULT_LANGUAGE) -> SpatialVocabulary:
    base_dir = tasks_dir() / "spatial_vocab"
    candidate = base_dir / f"{language}.yaml"
    if not candidate.exists():
        log.warning(
            "Spatial vocabulary for lang=%s not found at %s; falling back to en.yaml",
            language,
            candidate,
        )
        candidate = base_dir / "en.yaml"
    if not candidate.exists():
        log.warning("No vocabulary file at %s; using built-in defaults", candidate)
        return SpatialVocabulary()
    data = _read_yaml(candidate)
    if not data:
        return SpatialVocabulary()
    try:
        return SpatialVocabulary(
            language=str(data.get("language", language)),
            base=data.get("base") or dict(DEFAULT_BASE_WORDS),
            synonyms=data.get("synonyms") or {},
        )
    except ValidationError as e:
        raise ConfigError(f"Invalid spatial vocabulary in {candidate}: {e}") from e


def load_engine_config(path: Optional[str | Path] = None) -> EngineConfig:
    if path is None:
        env_path = os.getenv("ROD_STUDIO_ENGINE_CONFIG")
        path = Path(env_path) if env_path else tasks_dir() / "engine" / "default.yaml"
    path = Path(path)
    if not path.exists():
        log.warning("Engine config %s not found; using built-in defaults", path)
        return EngineConfig()
    data = _read_yaml(path)
    try:
        return EngineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid engine config in {path}: {e}") from e
