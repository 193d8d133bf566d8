"""Pipeline configuration loaded from YAML."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from pathlib import Path

import yaml

from .predict import FAMILIES, FAST_GRIDS, FULL_GRIDS


class ConfigError(ValueError):
    pass


DEFAULT_MCCA_GROUPS = {
    "volume": "login_volume",
    "regularity": "regularity",
    "hourly": "hourly",
    "weekday_weekend": "weekday_weekend",
}

DEFAULT_TIERS = [
    ["gender", "ethnicity", "student_year", "admit_type", "enrollment_type"],
    ["start_gpa"],
    ["chronotype", "n_courses", "volume", "regularity", "hourly", "weekday_weekend"],
    ["end_gpa"],
]


@dataclass
class InputConfig:
    generate: bool = True
    spec: str = "nonlinear"            # "default" or "nonlinear"
    spec_overrides: dict = field(default_factory=dict)
    data_dir: str | None = None


@dataclass
class SemesterConfig:
    start: str | None = None
    end: str | None = None
    cutoff: str | None = None


@dataclass
class FeatureConfig:
    entropy_k: int = 3
    min_enrollment: int = 3


@dataclass
class ClusterConfig:
    kmin: int = 1
    kmax: int = 8
    band: int = 3


@dataclass
class ModelConfig:
    families: list[str] = field(default_factory=lambda: list(FAMILIES))
    preset: str = "fast"               # "fast" or "full"
    grids: dict = field(default_factory=dict)   # per-family overrides of the preset
    outer_folds: int = 5
    inner_folds: int = 3

    def grid(self, family: str) -> dict:
        base = (FAST_GRIDS if self.preset == "fast" else FULL_GRIDS)[family]
        return {**base, **self.grids.get(family, {})}


@dataclass
class LimeConfig:
    n_samples: int = 200
    scale: float = 0.3
    model: str | None = None           # None: family with the best CV R2
    regression_features: list = field(default_factory=lambda: ["vol_median", "reg_mean"])


@dataclass
class MccaConfig:
    groups: dict = field(default_factory=lambda: dict(DEFAULT_MCCA_GROUPS))
    penalty_grid: list = field(default_factory=lambda: [0.3, 0.5, 0.7, 1.0])
    max_iters: int = 25
    max_support: float = 0.5


@dataclass
class CausalConfig:
    alpha: float = 0.05
    max_cond: int = 3
    tiers: list = field(default_factory=lambda: [list(t) for t in DEFAULT_TIERS])
    cause_only: list = field(default_factory=lambda: ["start_gpa"])
    pag_default: str = "<->"
    fci_variables: list = field(default_factory=lambda: [
        "start_gpa", "volume", "regularity", "hourly", "weekday_weekend", "end_gpa"])


@dataclass
class PipelineConfig:
    seed: int
    out_dir: str
    input: InputConfig = field(default_factory=InputConfig)
    semester: SemesterConfig = field(default_factory=SemesterConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    models: ModelConfig = field(default_factory=ModelConfig)
    lime: LimeConfig = field(default_factory=LimeConfig)
    mcca: MccaConfig = field(default_factory=MccaConfig)
    causal: CausalConfig = field(default_factory=CausalConfig)
    base_dir: str = "."

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    @property
    def out_path(self) -> Path:
        return self.path(self.out_dir)

    def section_hash(self, *names: str) -> str:
        d = asdict(self)
        payload = {n: d[n] for n in names}
        payload["seed"] = self.seed
        return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()

    def window(self) -> tuple[datetime, datetime, datetime]:
        s = self.semester
        return (datetime.fromisoformat(s.start), datetime.fromisoformat(s.end),
                datetime.fromisoformat(s.cutoff))

    def validate(self) -> None:
        if self.seed is None or not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        for name in ("start", "end", "cutoff"):
            v = getattr(self.semester, name)
            if v is None:
                raise ConfigError(f"semester.{name} is required")
            try:
                datetime.fromisoformat(str(v))
            except ValueError:
                raise ConfigError(f"semester.{name} is not an ISO date: {v!r}") from None
        t0, t1, cut = self.window()
        if not t0 < cut <= t1:
            raise ConfigError("semester.cutoff must lie inside (start, end]")
        if self.input.generate:
            if self.input.spec not in ("default", "nonlinear"):
                raise ConfigError(f"input.spec must be 'default' or 'nonlinear', got {self.input.spec!r}")
        else:
            if not self.input.data_dir:
                raise ConfigError("input.data_dir is required when input.generate is false")
            if not self.path(self.input.data_dir).is_dir():
                raise ConfigError(f"input.data_dir does not exist: {self.input.data_dir}")
        if self.features.entropy_k < 1:
            raise ConfigError("features.entropy_k must be >= 1")
        c = self.cluster
        if not 1 <= c.kmin <= c.kmax or c.band < 0:
            raise ConfigError("cluster needs 1 <= kmin <= kmax and band >= 0")
        bad = [f for f in self.models.families if f not in FAMILIES]
        if bad or not self.models.families:
            raise ConfigError(f"unknown model families {bad}; choose from {list(FAMILIES)}")
        if self.models.preset not in ("fast", "full"):
            raise ConfigError("models.preset must be 'fast' or 'full'")
        if self.lime.n_samples < 2 or self.lime.scale <= 0:
            raise ConfigError("lime needs n_samples >= 2 and scale > 0")
        if self.lime.model is not None and self.lime.model not in self.models.families:
            raise ConfigError(f"lime.model {self.lime.model!r} is not a trained family")
        if len(self.mcca.groups) < 2 or not self.mcca.penalty_grid:
            raise ConfigError("mcca needs at least two groups and a non-empty penalty grid")
        if not 0 < self.causal.alpha < 1 or self.causal.max_cond < 0:
            raise ConfigError("causal needs 0 < alpha < 1 and max_cond >= 0")
        if self.causal.pag_default not in ("->", "<-", "<->", "none"):
            raise ConfigError("causal.pag_default must be one of ->, <-, <->, none")


_SECTIONS = {"input": InputConfig, "semester": SemesterConfig, "features": FeatureConfig,
             "cluster": ClusterConfig, "models": ModelConfig, "lime": LimeConfig,
             "mcca": MccaConfig, "causal": CausalConfig}


def config_from_dict(d: dict, base_dir: str | Path = ".") -> PipelineConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    known = {f.name for f in fields(PipelineConfig)} - {"base_dir"}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    if "seed" not in d:
        raise ConfigError("seed is required")
    kwargs = {"seed": d["seed"], "out_dir": str(d.get("out_dir", "out")), "base_dir": str(base_dir)}
    for name, cls in _SECTIONS.items():
        sec = d.get(name) or {}
        if not isinstance(sec, dict):
            raise ConfigError(f"{name} must be a mapping")
        allowed = {f.name for f in fields(cls)}
        extra = set(sec) - allowed
        if extra:
            raise ConfigError(f"unknown keys in {name}: {sorted(extra)}")
        # YAML turns bare dates into date objects
        sec = {k: (v.isoformat() if hasattr(v, "isoformat") else v) for k, v in sec.items()}
        kwargs[name] = cls(**sec)
    return PipelineConfig(**kwargs)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        d = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from None
    return config_from_dict(d, base_dir=path.parent)
