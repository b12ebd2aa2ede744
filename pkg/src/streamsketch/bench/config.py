"""Experiment configuration loaded from JSON."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigError

ANN_KINDS = ("ann-compare", "ann-scaling", "ann-qps")
KDE_KINDS = ("kde-sketch-size", "kde-window", "kde-vs-counter")
KINDS = ANN_KINDS + KDE_KINDS

DESK_SCALE = (10_000, 500)
FULL_SCALE = (50_000, 5_000)


@dataclass
class Dataset:
    """Where vectors come from.

    ``kind`` is ``fvecs``, ``csv`` or ``synthetic``. File datasets read the
    stream from ``path`` and, when given, queries from ``queries_path``;
    otherwise the queries are held out from the rows after the stream.
    Synthetic datasets use ``generator`` (``uniform`` or ``gaussian-mixture``).
    """

    kind: str = "synthetic"
    path: str | None = None
    queries_path: str | None = None
    generator: str = "uniform"
    dim: int = 32
    components: int = 10

    def validate(self):
        if self.kind not in ("fvecs", "csv", "synthetic"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "synthetic":
            if self.generator not in ("uniform", "gaussian-mixture"):
                raise ConfigError(f"unknown generator {self.generator!r}")
            if self.dim < 1:
                raise ConfigError("dataset dim must be >= 1")
            return
        for p in (self.path, self.queries_path):
            if p is not None and not os.path.exists(p):
                raise ConfigError(f"dataset file not found: {p}")
        if self.path is None:
            raise ConfigError("file datasets need a path")


@dataclass
class ExperimentConfig:
    experiment: str
    dataset: Dataset = field(default_factory=Dataset)
    etas: list[float] = field(default_factory=lambda: [0.2, 0.5, 0.8])
    epsilons: list[float] = field(default_factory=lambda: [0.5])
    stream_sizes: list[int] = field(default_factory=lambda: [1_000, 10_000, 40_000])
    rows: list[int] = field(default_factory=lambda: [100, 200, 400, 800])
    windows: list[int] = field(default_factory=lambda: [450])
    r: float | str = "auto"
    w_factor: float = 3.0
    kde_family: str = "srp"
    eps_prime: float = 0.1
    jl_dims: list[int] | None = None
    seeds: list[int] = field(default_factory=lambda: [0])
    store_count: int | None = None
    query_count: int | None = None
    full_scale: bool = False
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.dataset, dict):
            try:
                self.dataset = Dataset(**self.dataset)
            except TypeError as e:
                raise ConfigError(f"bad dataset section: {e}") from None

    def resolved_counts(self) -> tuple[int, int]:
        store, queries = FULL_SCALE if self.full_scale else DESK_SCALE
        return self.store_count or store, self.query_count or queries

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in KINDS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {KINDS}")
        grids = {
            "etas": self.etas,
            "epsilons": self.epsilons,
            "stream_sizes": self.stream_sizes,
            "rows": self.rows,
            "windows": self.windows,
            "seeds": self.seeds,
        }
        for name, grid in grids.items():
            if not grid:
                raise ConfigError(f"grid {name} is empty")
        if any(not 0 <= e <= 1 for e in self.etas):
            raise ConfigError("etas must lie in [0, 1]")
        if any(e <= 0 for e in self.epsilons):
            raise ConfigError("epsilons must be positive")
        if any(v < 1 for v in self.rows + self.windows + self.stream_sizes):
            raise ConfigError("rows, windows and stream sizes must be positive")
        if not (self.r == "auto" or (isinstance(self.r, (int, float)) and self.r > 0)):
            raise ConfigError("r must be a positive number or 'auto'")
        if self.kde_family not in ("pstable", "srp"):
            raise ConfigError("kde_family must be 'pstable' or 'srp'")
        if not 0 < self.eps_prime <= 1:
            raise ConfigError("eps_prime must be in (0, 1]")
        store, queries = self.resolved_counts()
        if store < 2 or queries < 1:
            raise ConfigError("need store_count >= 2 and query_count >= 1")
        self.dataset.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | None, experiment: str, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config (or start from defaults) and apply CLI overrides."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if raw.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {raw['experiment']!r}, not {experiment!r}")
    raw["experiment"] = experiment
    raw.update(overrides or {})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = ExperimentConfig(**raw)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return cfg.validate()
