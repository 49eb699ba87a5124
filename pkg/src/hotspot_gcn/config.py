"""Pipeline configuration: nested dataclasses addressed by flat dotted keys.

Config files hold one ``section.key = value`` per line; ``#`` starts a
comment. Lists are comma separated.
"""
from __future__ import annotations

import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .artifacts import canonical_json
from .gcn import GcnConfig


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    raw_csv: str = "crimes.csv"
    work_dir: str = "work"


@dataclass
class BBoxConfig:
    min_lat: float = 41.6
    max_lat: float = 42.1
    min_lon: float = -87.9
    max_lon: float = -87.5


@dataclass
class GridConfig:
    cell_lat_deg: float = 0.02
    cell_lon_deg: float = 0.02


@dataclass
class GraphConfig:
    threshold_km: float = 3.0
    epsilon: float = 1e-6


@dataclass
class FeaturesConfig:
    min_count: int = 1000
    split_ratios: list[float] = field(default_factory=lambda: [0.7, 0.1, 0.2])
    split_seed: int = 0


@dataclass
class KdeConfig:
    bandwidths_km: list[float] = field(default_factory=lambda: [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0])
    cv_folds: int = 5
    seed: int = 0
    max_samples: int = 100_000
    cv_max_samples: int = 2_000
    fit_fraction: float = 0.7
    quantile: float = 0.2


@dataclass
class SvmConfig:
    # 0 selects the data-dependent defaults (1/n_features, 1/n_train, 50*n_train)
    gamma: float = 0.0
    lam: float = 0.0
    iterations: int = 0
    seed: int = 0


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    bbox: BBoxConfig = field(default_factory=BBoxConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    gcn: GcnConfig = field(default_factory=GcnConfig)
    kde: KdeConfig = field(default_factory=KdeConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def flat(self) -> dict[str, object]:
        return {f"{s}.{k}": v for s, sec in self.to_dict().items() for k, v in sec.items()}

    def hash(self) -> str:
        """Digest of everything except file locations."""
        d = self.to_dict()
        d.pop("paths")
        return hashlib.sha256(canonical_json(d).encode()).hexdigest()[:12]

    def set(self, key: str, text: str) -> None:
        try:
            section, name = key.strip().split(".", 1)
        except ValueError:
            raise ConfigError(f"config key {key!r} must look like section.name") from None
        sec = getattr(self, section, None)
        if sec is None or not dataclasses.is_dataclass(sec):
            raise ConfigError(f"unknown config section {section!r}")
        hints = typing.get_type_hints(type(sec))
        if name not in hints:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(sec, name, _coerce(hints[name], text.strip()))
            if hasattr(sec, "__post_init__"):
                sec.__post_init__()
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None

    def validate(self) -> None:
        try:
            from .geo import BBox
            BBox(**dataclasses.asdict(self.bbox))
            self.gcn.__post_init__()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        r = self.features.split_ratios
        if len(r) != 3 or min(r) <= 0 or abs(sum(r) - 1) > 1e-9:
            raise ConfigError(f"features.split_ratios must be 3 positive numbers summing to 1, got {r}")
        if not 0 < self.kde.quantile < 1:
            raise ConfigError("kde.quantile must be in (0, 1)")
        if not 0 < self.kde.fit_fraction < 1:
            raise ConfigError("kde.fit_fraction must be in (0, 1)")
        if self.graph.threshold_km <= 0 or self.grid.cell_lat_deg <= 0 or self.grid.cell_lon_deg <= 0:
            raise ConfigError("threshold and cell sizes must be positive")

    def to_text(self) -> str:
        lines = []
        for key, value in self.flat().items():
            if isinstance(value, list):
                value = ", ".join(repr(v) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(tp, text: str):
    origin = typing.get_origin(tp)
    if origin is list:
        (inner,) = typing.get_args(tp)
        return [inner(t) for t in (x.strip() for x in text.split(",")) if t]
    if tp is bool:
        return text.lower() in ("1", "true", "yes")
    return tp(text)


def load_config(path=None, overrides: list[str] | None = None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            cfg.set(key, value)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must be key=value")
        key, value = item.split("=", 1)
        cfg.set(key, value)
    cfg.validate()
    return cfg
