"""Versioned JSON scenario files: one file fully describes one run."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .coincidence import HistogramConfig
from .detection import DetectionChain
from .dispersion import REFERENCE_AREAS, REFERENCE_GRATING, GratingParams, ModeAreas
from .franson import FransonConfig
from .source import SourceSpec

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ShgSettings:
    grid_start_nm: float = 1560.7
    grid_stop_nm: float = 1561.3
    grid_points: int = 121
    noise_rel: float = 0.02  # Gaussian noise sigma as a fraction of peak CE
    input_csv: str | None = None  # measured CE spectrum instead of synthetic data
    dispersion_csv: str | None = None  # tabulated indices; None = built-in model


@dataclass(frozen=True)
class PairSettings:
    power_mw: float = 0.008
    duration_s: float = 1.0
    tag_format: str = "binary"  # binary | csv
    slab_s: float = 1.0
    workers: int = 1
    input_tags: str | None = None  # tag file for `correlate`


@dataclass(frozen=True)
class CarScanSettings:
    powers_mw: tuple = (0.04, 0.08, 0.16, 0.32, 0.64)
    # about 200 raw accidentals per point with the default chain
    durations_s: tuple = (600.0, 150.0, 37.5, 9.4, 2.4)
    slab_s: float = 1.0
    workers: int = 1


@dataclass(frozen=True)
class FringeSettings:
    offsets_pm: tuple = tuple(round(4.05 + 0.6 * i, 10) for i in range(12))
    duration_s: float = 32.0
    power_mw: float = 0.1
    mode: str = "mc"  # mc | analytic | poisson
    histogram_offsets_pm: tuple = (7.35, 10.65)
    slab_s: float = 1.0
    workers: int = 1
    input_csv: str | None = None  # fringe table for `fringe-fit`


def franson_chain() -> DetectionChain:
    """Low-jitter chain with fixed routing used for the analyzer; 30 ps peaks need ~3 ps jitter."""
    return DetectionChain(jitter_sigma_fs=3000.0, splitter="deterministic")


@dataclass(frozen=True)
class Scenario:
    name: str = "default"
    seed: int = 0
    source: SourceSpec = field(default_factory=SourceSpec)
    detection: DetectionChain = field(default_factory=DetectionChain)
    histogram: HistogramConfig = field(default_factory=HistogramConfig)
    franson: FransonConfig = field(default_factory=FransonConfig)
    franson_detection: DetectionChain = field(default_factory=franson_chain)
    grating: GratingParams = REFERENCE_GRATING
    mode_areas: ModeAreas = REFERENCE_AREAS
    shg: ShgSettings = field(default_factory=ShgSettings)
    pairs: PairSettings = field(default_factory=PairSettings)
    car_scan: CarScanSettings = field(default_factory=CarScanSettings)
    fringe: FringeSettings = field(default_factory=FringeSettings)

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            d[f.name] = _plain(dataclasses.asdict(v)) if dataclasses.is_dataclass(v) else v
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=int(seed))


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ScenarioError(f"{where}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {unknown}")
    kw = {}
    for k, v in data.items():
        default = names[k].default
        if isinstance(default, tuple) or (names[k].default_factory is not dataclasses.MISSING
                                          and isinstance(names[k].default_factory(), tuple)):
            if not isinstance(v, list):
                raise ScenarioError(f"{where}.{k}: expected a list")
            v = tuple(v)
        kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


_SECTIONS = {
    "source": SourceSpec, "detection": DetectionChain, "histogram": HistogramConfig,
    "franson": FransonConfig, "franson_detection": DetectionChain, "grating": GratingParams,
    "mode_areas": ModeAreas, "shg": ShgSettings, "pairs": PairSettings,
    "car_scan": CarScanSettings, "fringe": FringeSettings,
}


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    allowed = set(_SECTIONS) | {"schema_version", "name", "seed"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ScenarioError(f"unknown top-level key(s) {unknown}")
    kw = {}
    for key, cls in _SECTIONS.items():
        if key in data:
            kw[key] = _build(cls, data[key], key)
    if "name" in data:
        if not isinstance(data["name"], str):
            raise ScenarioError("name must be a string")
        kw["name"] = data["name"]
    if "seed" in data:
        seed = data["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
            raise ScenarioError("seed must be an unsigned 64-bit integer")
        kw["seed"] = seed
    sc = Scenario(**kw)
    _cross_check(sc)
    return sc


def _cross_check(sc: Scenario) -> None:
    if not sc.source.pump_coherence_time_s * 1e15 > sc.franson.arm_delay_fs:
        raise ScenarioError("source pump coherence time must exceed the Franson arm delay")
    if len(sc.car_scan.powers_mw) != len(sc.car_scan.durations_s):
        raise ScenarioError("car_scan needs one duration per power")
    if sc.pairs.tag_format not in ("binary", "csv"):
        raise ScenarioError("pairs.tag_format must be 'binary' or 'csv'")
    if sc.fringe.mode not in ("mc", "analytic", "poisson"):
        raise ScenarioError("fringe.mode must be 'mc', 'analytic' or 'poisson'")
    if sc.shg.grid_points < 10 or not sc.shg.grid_stop_nm > sc.shg.grid_start_nm:
        raise ScenarioError("shg grid needs >= 10 points over an increasing range")


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(data)
