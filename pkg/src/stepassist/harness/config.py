"""Pipeline configuration: one file, strict validation, flag overrides on top.

Everything tunable lives here so a run is reproducible from its config dict.
Unknown keys are rejected rather than ignored; a typo should fail at startup,
not silently run with a default.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..checker import CheckerConfig
from ..motion import FlowConfig
from ..perception import KeyMomentConfig, SamplerConfig
from ..reasoner import OracleConfig

REASONER_KINDS = ("oracle", "remote")
DETECTOR_KINDS = ("annotation", "synthetic", "null")
STRUCTURER_KINDS = ("scripted", "remote")


@dataclass(frozen=True)
class ReasonerSpec:
    kind: str = "oracle"
    oracle: OracleConfig = OracleConfig()
    endpoint: str | None = None
    model: str | None = None
    timeout: float = 30.0


@dataclass(frozen=True)
class DetectorSpec:
    kind: str = "annotation"
    threshold: int = 150
    min_area: int = 16


@dataclass(frozen=True)
class StructurerSpec:
    kind: str = "scripted"
    endpoint: str | None = None
    model: str | None = None
    timeout: float = 60.0


@dataclass(frozen=True)
class PipelineConfig:
    sampler: SamplerConfig = SamplerConfig()
    key_moment: KeyMomentConfig = KeyMomentConfig()
    flow: FlowConfig = FlowConfig()
    checker: CheckerConfig = CheckerConfig()
    reasoner: ReasonerSpec = ReasonerSpec()
    detector: DetectorSpec = DetectorSpec()
    structurer: StructurerSpec = StructurerSpec()
    corpus_dir: str | None = None
    record_latency: bool = False
    pace: bool = False

    def validate(self) -> "PipelineConfig":
        """Fail fast on anything a run would only trip over mid-session."""
        if self.reasoner.kind not in REASONER_KINDS:
            raise ValueError(f"reasoner kind must be one of {REASONER_KINDS}")
        if self.reasoner.kind == "remote" and not self.reasoner.endpoint:
            raise ValueError("remote reasoner requires an endpoint")
        if self.detector.kind not in DETECTOR_KINDS:
            raise ValueError(f"detector kind must be one of {DETECTOR_KINDS}")
        if self.structurer.kind not in STRUCTURER_KINDS:
            raise ValueError(f"structurer kind must be one of {STRUCTURER_KINDS}")
        if self.structurer.kind == "remote" and not self.structurer.endpoint:
            raise ValueError("remote structurer requires an endpoint")
        if self.corpus_dir is not None and not Path(self.corpus_dir).is_dir():
            raise ValueError(f"corpus directory {self.corpus_dir} does not exist")
        return self


_SECTION_TYPES: dict[str, type] = {
    "sampler": SamplerConfig,
    "key_moment": KeyMomentConfig,
    "flow": FlowConfig,
    "checker": CheckerConfig,
    "reasoner": ReasonerSpec,
    "detector": DetectorSpec,
    "structurer": StructurerSpec,
}


def _build_section(cls: type, obj: dict[str, Any], path: str) -> Any:
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in obj.items():
        if key not in fields:
            raise ValueError(f"unknown config key {path}.{key}")
        if key == "oracle" and isinstance(value, dict):
            value = _build_section(OracleConfig, value, f"{path}.oracle")
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(obj: dict[str, Any]) -> PipelineConfig:
    kwargs: dict[str, Any] = {}
    for key, value in obj.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        elif key in ("corpus_dir", "record_latency", "pace"):
            kwargs[key] = value
        else:
            raise ValueError(f"unknown config key {key}")
    return PipelineConfig(**kwargs).validate()


def config_from_file(path: str | Path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def config_to_dict(cfg: PipelineConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)
