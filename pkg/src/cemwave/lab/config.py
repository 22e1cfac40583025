"""Experiment configuration: a YAML document plus command-line overrides."""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigurationError

DEFAULT_SNAPSHOTS = (0.1, 0.2, 0.3, 0.4)
SWEEP_KEYS = ("n_coarse", "J", "ell")


@dataclass
class ExperimentConfig:
    n_fine: int = 160
    n_coarse: list[int] = field(default_factory=lambda: [20])
    J: list[int] = field(default_factory=lambda: [4])
    ell: list[int] = field(default_factory=lambda: [3])
    tau: float = 1e-4
    T: float = 0.4
    snapshot_times: list[float] = field(default_factory=lambda: list(DEFAULT_SNAPSHOTS))
    medium: dict = field(default_factory=lambda: {"generator": {"contrast": 1e4, "mode": "high"}})
    source: object = "example1"
    rho: object = 1.0
    seed: int = 0
    output_dir: str = "out"
    pressure_weight: str = "rho"
    source_rule: str = "point"
    timings: bool = True
    dump_fields: bool = False
    vtk: bool = False
    check_stability: bool = True
    points: list | None = None

    @property
    def sweep_points(self) -> list[tuple[int, int, int]]:
        """Explicit ``points`` if given, otherwise the product of the three sweep lists."""
        if self.points is not None:
            return [tuple(p) for p in self.points]
        return [(nc, J, ell) for nc in self.n_coarse for J in self.J for ell in self.ell]

    def medium_spec(self) -> dict:
        """Medium description with the top-level seed applied to the generator."""
        spec = copy.deepcopy(self.medium)
        if not spec.get("file"):
            gen = dict(spec.get("generator") or {})
            gen.setdefault("seed", self.seed)
            spec = {"generator": gen}
        return spec

    def to_dict(self) -> dict:
        return asdict(self)

    def write_resolved(self, directory) -> Path:
        path = Path(directory) / "resolved_config.yaml"
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)
        return path


def _as_list(value, key: str) -> list[int]:
    items = list(value) if isinstance(value, (list, tuple)) else [value]
    if not items:
        raise ConfigurationError(f"sweep list {key!r} is empty")
    out = []
    for item in items:
        if isinstance(item, bool) or not isinstance(item, (int, float)) or int(item) != item:
            raise ConfigurationError(f"{key} entries must be integers, got {item!r}")
        out.append(int(item))
    return out


def _multiple_of(t: float, tau: float) -> bool:
    k = t / tau
    return abs(k - round(k)) <= 1e-9 * max(1.0, abs(k))


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    for key in SWEEP_KEYS:
        setattr(cfg, key, _as_list(getattr(cfg, key), key))
    if not isinstance(cfg.n_fine, int) or cfg.n_fine < 2:
        raise ConfigurationError(f"n_fine must be an integer >= 2, got {cfg.n_fine!r}")
    if cfg.points is not None:
        if not isinstance(cfg.points, (list, tuple)) or not cfg.points:
            raise ConfigurationError("points must be a non-empty list of [n_coarse, J, ell] triples")
        points = []
        for p in cfg.points:
            if not isinstance(p, (list, tuple)) or len(p) != 3:
                raise ConfigurationError(f"point {p!r} is not an [n_coarse, J, ell] triple")
            triple = tuple(_as_list(list(p), "points"))
            if triple not in points:
                points.append(triple)
        cfg.points = [list(p) for p in points]
    for nc, J, ell in cfg.sweep_points:
        if nc < 2 or cfg.n_fine % nc:
            raise ConfigurationError(f"n_coarse={nc} must be >= 2 and divide n_fine={cfg.n_fine}")
        r2 = (cfg.n_fine // nc) ** 2
        if not 1 <= J <= r2:
            raise ConfigurationError(f"J={J} must lie in [1, {r2}] for n_coarse={nc}")
        if ell < 1:
            raise ConfigurationError(f"ell must be >= 1, got {ell}")
    try:
        cfg.tau, cfg.T = float(cfg.tau), float(cfg.T)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"tau and T must be numbers: {exc}") from exc
    if not (cfg.tau > 0 and math.isfinite(cfg.tau)) or not (cfg.T > 0 and math.isfinite(cfg.T)):
        raise ConfigurationError(f"tau and T must be positive, got tau={cfg.tau}, T={cfg.T}")
    if not _multiple_of(cfg.T, cfg.tau):
        raise ConfigurationError(f"T={cfg.T} is not an integer multiple of tau={cfg.tau}")
    cfg.snapshot_times = sorted(float(t) for t in cfg.snapshot_times)
    for t in cfg.snapshot_times:
        if t < 0 or t > cfg.T * (1 + 1e-12):
            raise ConfigurationError(f"snapshot time {t} lies outside [0, T={cfg.T}]")
        if not _multiple_of(t, cfg.tau):
            raise ConfigurationError(f"snapshot time {t} is not a multiple of tau={cfg.tau}")
    if cfg.pressure_weight not in ("rho", "plain"):
        raise ConfigurationError(f"pressure_weight must be 'rho' or 'plain', got {cfg.pressure_weight!r}")
    if cfg.source_rule not in ("point", "average"):
        raise ConfigurationError(f"source_rule must be 'point' or 'average', got {cfg.source_rule!r}")
    if not isinstance(cfg.medium, dict) or not (cfg.medium.get("file") or "generator" in cfg.medium):
        raise ConfigurationError("medium must be {file: path} or {generator: {...}}")
    return cfg


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("configuration document must be a mapping")
    known = set(ExperimentConfig.__dataclass_fields__)
    if "l" in data and "ell" not in data:
        data = {**data, "ell": data.pop("l")}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
    return validate(ExperimentConfig(**data))


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value parsed as YAML (``J=[1,2]``, ``tau=2e-5``)."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse override value {raw!r}: {exc}") from exc
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            pass
    return key.strip(), value


def load_config(path=None, overrides=()) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: invalid YAML: {exc}") from exc
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        target = data
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigurationError(f"override {key!r} descends into a non-mapping value")
        target[parts[-1]] = value
    return from_dict(data)
