"""Run configuration: one flat key/value file, overridable per CLI flag."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable

from .augment import AugmentPolicy
from .protocols import ProtocolConfig
from .segmenter import ClassifyConfig

__all__ = ["ConfigError", "RunConfig", "parse_config_text", "load_config"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    rttm_dir: str = ""
    audio_dir: str = ""
    out_dir: str = ""
    window: float = 1.5
    hop: float = 0.5
    min_speech: float = 0.25
    min_presence: float = 0.30
    ignore_floor: float = 0.05
    overlap_epsilon: float = 0.01
    min_overlap: float = 0.015
    max_target: int = 50
    max_nontarget: int = 50
    easy_lo: float = 0.01
    easy_hi: float = 0.49
    hard_lo: float = 0.50
    hard_hi: float = 1.00
    p_overlap: float = 0.25
    p_change: float = 0.25
    overlap_snr_lo: float = 0.0
    overlap_snr_hi: float = 20.0
    change_snr_lo: float = -5.0
    change_snr_hi: float = 15.0
    overlap_crop_lo: float = 0.2
    overlap_crop_hi: float = 0.7
    change_crop_lo: float = 0.2
    change_crop_hi: float = 0.3
    peak_normalize: bool = False
    seed: int = 0
    workers: int = 1
    collar: float = 0.25
    overlap_scoring: bool = True

    def classify_config(self) -> ClassifyConfig:
        return ClassifyConfig(
            min_speech=self.min_speech,
            min_presence=self.min_presence,
            ignore_floor=self.ignore_floor,
            overlap_epsilon=self.overlap_epsilon,
            min_overlap=self.min_overlap,
        )

    def protocol_config(self) -> ProtocolConfig:
        return ProtocolConfig(
            max_target=self.max_target,
            max_nontarget=self.max_nontarget,
            easy_band=(self.easy_lo, self.easy_hi),
            hard_band=(self.hard_lo, self.hard_hi),
        )

    def augment_policy(self) -> AugmentPolicy:
        return AugmentPolicy(
            p_overlap=self.p_overlap,
            p_change=self.p_change,
            overlap_snr_db=(self.overlap_snr_lo, self.overlap_snr_hi),
            change_snr_db=(self.change_snr_lo, self.change_snr_hi),
            overlap_crop_s=(self.overlap_crop_lo, self.overlap_crop_hi),
            change_crop_s=(self.change_crop_lo, self.change_crop_hi),
            peak_normalize=self.peak_normalize,
            seed=self.seed,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, value: str):
    kind = _FIELD_TYPES[name]
    if kind == "bool":
        lowered = value.strip().lower()
        if lowered in ("1", "true", "on", "yes"):
            return True
        if lowered in ("0", "false", "off", "no"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {value!r}")
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{name}: expected a {kind}, got {value!r}") from None
    return value


def parse_config_text(text: str | Iterable[str]) -> dict:
    """Parse 'key = value' lines; '#' starts a comment."""
    lines = text.splitlines() if isinstance(text, str) else text
    out: dict = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw.strip()!r}")
        key = key.strip()
        value = value.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {line_no}: unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    values: dict = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value
    return RunConfig(**values)
