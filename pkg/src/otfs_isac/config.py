"""Scenario configuration: a YAML key-value tree mapped onto dataclasses.

Every field has a default, so an empty file is a valid configuration (the
desk-scale five-target sensing scenario). Unknown keys are rejected.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import yaml

from .channel import ArrayGeometry, CommChannel, PathTuple, RadarScene, scene_from_physical
from .frame import OtfsParams


@dataclass
class OtfsSection:
    N: int = 64
    M: int = 32
    delta_f: float = 480e3
    T_cp: float = 12.5e-6
    fc: float = 28e9
    n_tx: int = 2
    n_rx: int = 32
    qam_order: int = 64

    def params(self) -> OtfsParams:
        return OtfsParams(self.N, self.M, self.delta_f, self.T_cp, self.fc, self.n_tx, self.n_rx)


@dataclass
class ArraySection:
    tx_spacing: float = 0.5
    rx_spacing: Optional[float] = None  # None: n_tx * tx_spacing


@dataclass
class TargetSpec:
    range_m: float
    velocity_mps: float
    angle_deg: float
    snr_db: float


def _default_targets():
    # two targets beyond c/(2 delta_f) = 312.5 m, two sharing a DD cell 5 deg apart
    return [
        TargetSpec(60.0, 20.0, 20.0, 20.0),
        TargetSpec(120.0, 20.0, -10.0, 15.0),
        TargetSpec(120.0, 20.0, -5.0, 5.0),
        TargetSpec(685.0, 20.0, 20.0, 25.0),
        TargetSpec(432.5, 20.0, -10.0, 10.0),
    ]


@dataclass
class RadarSection:
    targets: List[TargetSpec] = field(default_factory=_default_targets)
    reference_target: int = 2
    snr_sweep_db: List[float] = field(default_factory=list)
    random_phases: bool = True


@dataclass
class CommPathSpec:
    alpha_re: float
    alpha_im: float
    tau: float
    nu: float
    angle_deg: float


@dataclass
class RandomCommSpec:
    n_paths: int = 11
    angle_deg: float = -30.0
    total_snr_db: float = 25.0
    lmr_db: List[float] = field(default_factory=lambda: [-10.0, 0.0, 10.0])
    max_delay: float = 1.5e-6
    max_doppler: float = 2e3
    draws: int = 20


@dataclass
class CommSection:
    paths: List[CommPathSpec] = field(default_factory=list)
    random: RandomCommSpec = field(default_factory=RandomCommSpec)


@dataclass
class DetectorSection:
    p_fa: float = 1e-3
    os_tau: int = 2
    os_nu: int = 2
    tau_max: Optional[float] = None
    nu_max: Optional[float] = 240e3
    training: int = 16
    guard: int = 2
    cfar_mode: str = "wrap"
    angle_step_deg: float = 0.5
    angle_training: int = 16
    angle_guard: Optional[int] = None
    max_omp_iter: int = 4
    fft_variant: str = "matched"


@dataclass
class AssociationSection:
    range_gate_m: Optional[float] = None  # None: half a range resolution cell
    velocity_gate_mps: Optional[float] = None  # None: half a velocity resolution cell
    angle_gate_deg: Optional[float] = None  # None: half the virtual-array beamwidth


@dataclass
class DesignSection:
    rho_grid: List[float] = field(default_factory=lambda: [round(0.1 * k, 10) for k in range(11)])
    beampattern_step_deg: float = 0.5
    profile_rho: float = 0.4


@dataclass
class ExperimentSection:
    trials: int = 100
    seed: int = 2024
    workers: int = 1
    mode: str = "search"


@dataclass
class ScenarioConfig:
    otfs: OtfsSection = field(default_factory=OtfsSection)
    array: ArraySection = field(default_factory=ArraySection)
    sigma2: float = 1.0
    radar: RadarSection = field(default_factory=RadarSection)
    comm: CommSection = field(default_factory=CommSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    association: AssociationSection = field(default_factory=AssociationSection)
    design: DesignSection = field(default_factory=DesignSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.experiment.mode not in ("search", "track"):
            raise ValueError("experiment.mode must be 'search' or 'track'")
        if self.experiment.trials < 1 or self.experiment.workers < 1:
            raise ValueError("trials and workers must be >= 1")
        n = len(self.radar.targets)
        if n and not 0 <= self.radar.reference_target < n:
            raise ValueError("radar.reference_target out of range")
        self.otfs.params()  # validates numerology

    # ------------------------------------------------------------------
    def params(self) -> OtfsParams:
        return self.otfs.params()

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.otfs.n_tx, self.otfs.n_rx, self.array.tx_spacing,
                             self.array.rx_spacing)

    def radar_scene(self, snr_override=None, phases=None) -> RadarScene:
        t = self.radar.targets
        snr = [x.snr_db for x in t]
        if snr_override is not None:
            snr[self.radar.reference_target] = float(snr_override)
        return scene_from_physical(self.params(), [x.range_m for x in t],
                                   [x.velocity_mps for x in t], [x.angle_deg for x in t],
                                   snr, self.sigma2, phases)

    def explicit_channel(self) -> Optional[CommChannel]:
        if not self.comm.paths:
            return None
        return CommChannel([PathTuple(complex(p.alpha_re, p.alpha_im), p.tau, p.nu,
                                      float(np.deg2rad(p.angle_deg))) for p in self.comm.paths])

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "ScenarioConfig":
        return _build(cls, data or {}, "config")

    @classmethod
    def from_yaml(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        data = yaml.safe_load(text)
        if data is not None and not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


_LIST_TYPES = {
    ("RadarSection", "targets"): TargetSpec,
    ("CommSection", "paths"): CommPathSpec,
}


def _coerce(value, typ, where):
    """Cast YAML scalars to the annotated type (YAML 1.1 reads ``1e-3`` as a string)."""
    try:
        if typ is float:
            return float(value)
        if typ is int:
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if typ == Optional[int]:
            return None if value is None else _coerce(value, int, where)
        if typ == Optional[float]:
            return None if value is None else float(value)
        if typ == List[float]:
            return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ValueError(f"{where}: cannot interpret {value!r} as {typ}") from None
    return value


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ValueError(f"{where} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        item_cls = _LIST_TYPES.get((cls.__name__, name))
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if item_cls is not None:
            kwargs[name] = [_build(item_cls, v, f"{where}.{name}[{i}]") for i, v in enumerate(value)]
        elif dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        else:
            kwargs[name] = _coerce(value, f.type, f"{where}.{name}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValueError(f"invalid {where}: {exc}") from exc
