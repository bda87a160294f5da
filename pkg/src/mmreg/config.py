"""Pipeline configuration and its flat ``section.key = value`` file format.

Values are JSON literals, so the file is also valid TOML::

    detector.nms_radius = 4
    wpmom.sigmas = [2.0, 4.0, 6.0]
    matching.model = "similarity"
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .descriptor import DescriptorParams
from .detector import DetectorParams
from .loggabor import BankParams
from .phasecong import PCParams


@dataclass(frozen=True)
class PyramidParams:
    n_levels: int = 5
    scale_factor: float = 2.0**0.5
    blur_sigma: float = 1.0


@dataclass(frozen=True)
class WpmomParams:
    sigmas: tuple = (2.0, 4.0, 6.0)


@dataclass(frozen=True)
class MatchingParams:
    ratio: float = 0.9
    inlier_tol: float = 2.0
    iterations: int = 2000
    model: str = "similarity"
    ncm_tol: float = 3.0
    level_gap: int = 2
    min_inliers: int = 8
    dedup_px: float = 1.0


@dataclass(frozen=True)
class PipelineConfig:
    pyramid: PyramidParams = field(default_factory=PyramidParams)
    bank: BankParams = field(default_factory=BankParams)
    pc: PCParams = field(default_factory=PCParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    wpmom: WpmomParams = field(default_factory=WpmomParams)
    descriptor: DescriptorParams = field(default_factory=DescriptorParams)
    matching: MatchingParams = field(default_factory=MatchingParams)
    seed: int = 0

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if dataclasses.is_dataclass(value):
                for sub in dataclasses.fields(value):
                    lines.append(f"{f.name}.{sub.name} = {_encode(getattr(value, sub.name))}")
            else:
                lines.append(f"{f.name} = {_encode(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        updates: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                parsed = json.loads(value)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: cannot parse value {value!r}") from exc
            updates[key] = parsed
        return cls().with_updates(updates)

    def with_updates(self, updates: dict) -> "PipelineConfig":
        """Copy with dotted-key overrides; unknown keys raise ``KeyError``."""
        sections = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        nested: dict = {}
        top: dict = {}
        for key, value in updates.items():
            section, _, name = key.partition(".")
            if section not in sections:
                raise KeyError(f"unknown config key {key!r}")
            current = sections[section]
            if not name:
                if dataclasses.is_dataclass(current):
                    raise KeyError(f"config key {key!r} names a section, not a value")
                top[section] = _coerce(current, value, key)
                continue
            if not dataclasses.is_dataclass(current) or name not in {
                    f.name for f in dataclasses.fields(current)}:
                raise KeyError(f"unknown config key {key!r}")
            if value is None and _field_default(current, name) is None:
                nested.setdefault(section, {})[name] = None
                continue
            nested.setdefault(section, {})[name] = _coerce(getattr(current, name), value, key)
        for section, values in nested.items():
            top[section] = dataclasses.replace(sections[section], **values)
        return dataclasses.replace(self, **top)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _field_default(obj, name):
    f = next(f for f in dataclasses.fields(obj) if f.name == name)
    return f.default


def _encode(value) -> str:
    if isinstance(value, tuple):
        value = list(value)
    return json.dumps(value)


def _coerce(default, value, key):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"{key}: expected a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise TypeError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or (default is None and isinstance(value, (int, float))):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise TypeError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or not value:
            raise TypeError(f"{key}: expected a nonempty list")
        return tuple(float(v) for v in value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise TypeError(f"{key}: expected a string")
        return value
    raise TypeError(f"{key}: unsupported value {value!r}")


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(path, encoding="utf-8") as fh:
        return PipelineConfig.from_text(fh.read())
