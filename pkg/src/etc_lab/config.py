"""Experiment configuration files.

A configuration is a TOML document with the sections ``[plant]`` (and
``[plant.disturbance]``), ``[certificate]``, ``[trigger]``, ``[integrator]``
and ``[experiment]``. Missing keys take the defaults below; unknown keys are
errors.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .plants import DisturbanceSpec
from .sim import IntegratorConfig

__all__ = [
    "PlantSection",
    "CertificateSection",
    "TriggerSection",
    "ExperimentSection",
    "ExperimentConfig",
    "CASE_LABELS",
    "load_config",
    "default_config",
    "parse_config",
]

CASE_LABELS = ("i", "ii", "iii", "iv", "v", "vi")


@dataclass(frozen=True)
class PlantSection:
    kind: str = "lure"
    h_star: float = 0.3
    disturbance: DisturbanceSpec = field(
        default_factory=lambda: DisturbanceSpec("gaussian", variance=1.0, window=100.0)
    )


@dataclass(frozen=True)
class CertificateSection:
    upsilon1: float = 3.6e-3
    n1: float = 1.0
    n2: float = 0.47
    sigma: float = 0.99
    mu_d: float = 5.0
    lam: float = 4.7e-3
    p: float = 2.0
    lipschitz: tuple = (3.0, 1.0, 1.0)


@dataclass(frozen=True)
class TriggerSection:
    """Shared trigger parameters; a case or preset sets ``k1``, ``k2`` and the schedule."""

    preset: Optional[str] = None
    k_bar: int = 1
    k1: float = 1.0
    k2: float = 1.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    delta_bar: float = 10.0
    s_k: float = 12.5
    schedule: str = "exponential"
    D1: float = 10.0
    rho1: float = 0.05
    D2: float = 2.0
    rho2: float = 3.0
    nbar: float = 10.0
    reset_r_hat: str = "carryover"
    phi3: str = "affine"
    theta1: float = 500.0
    theta2: float = 1.0
    theta3: float = 10.0


@dataclass(frozen=True)
class ExperimentSection:
    seed: int = 20190601
    mc_count: int = 100
    duration: float = 100.0
    cases: tuple = CASE_LABELS
    initial: str = "circle"
    radius: float = 1.0
    xi0: tuple = (0.8660254037844386, 0.5)
    tau_circ_factor: float = 2.0
    T_circ: float = 50.0
    enlargement_after: str = "delta_bar"
    out_dir: str = "results"


@dataclass(frozen=True)
class ExperimentConfig:
    plant: PlantSection = field(default_factory=PlantSection)
    certificate: CertificateSection = field(default_factory=CertificateSection)
    trigger: TriggerSection = field(default_factory=TriggerSection)
    integrator: IntegratorConfig = field(default_factory=lambda: IntegratorConfig(record_stride=100))
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def as_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; embedded in every summary.

        The output directory is excluded: it does not affect any result.
        """
        data = self.as_dict()
        del data["experiment"]["out_dir"]
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed=None, duration=None, step=None, out_dir=None, cases=None,
                       mc_count=None) -> "ExperimentConfig":
        exp = {}
        if seed is not None:
            exp["seed"] = int(seed)
        if duration is not None:
            exp["duration"] = float(duration)
        if out_dir is not None:
            exp["out_dir"] = str(out_dir)
        if cases is not None:
            exp["cases"] = tuple(cases)
        if mc_count is not None:
            exp["mc_count"] = int(mc_count)
        out = self
        if exp:
            out = dataclasses.replace(out, experiment=dataclasses.replace(out.experiment, **exp))
        if step is not None:
            out = dataclasses.replace(out, integrator=dataclasses.replace(out.integrator, h=float(step)))
            if out.plant.disturbance.hold is not None:
                _check_hold(out)
        _validate(out)
        return out


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{where}]: {exc}") from exc


def _check_hold(cfg: ExperimentConfig):
    hold = cfg.plant.disturbance.hold
    h = cfg.integrator.h
    k = round(hold / h)
    if k < 1 or abs(k * h - hold) > 1e-9 * hold:
        raise ConfigError(f"disturbance hold {hold} is not a multiple of the step {h}")


def _validate(cfg: ExperimentConfig):
    e = cfg.experiment
    if len(set(e.cases)) != len(e.cases):
        raise ConfigError("case labels must be unique")
    bad = [c for c in e.cases if c not in CASE_LABELS]
    if bad:
        raise ConfigError(f"unknown case(s): {bad}; known: {list(CASE_LABELS)}")
    if e.mc_count < 1:
        raise ConfigError("mc_count must be at least 1")
    if not e.duration >= 0:
        raise ConfigError("duration must be nonnegative")
    if e.initial not in ("circle", "disk", "fixed"):
        raise ConfigError("initial must be 'circle', 'disk' or 'fixed'")
    if len(e.xi0) != 2:
        raise ConfigError("xi0 must have two entries")
    if e.enlargement_after not in ("delta_bar", "zero"):
        raise ConfigError("enlargement_after must be 'delta_bar' or 'zero'")
    if cfg.plant.kind != "lure":
        raise ConfigError("only the 'lure' plant is available from configuration files")
    t = cfg.trigger
    if t.schedule not in ("exponential", "staircase", "constant"):
        raise ConfigError("trigger.schedule must be 'exponential', 'staircase' or 'constant'")
    if len(cfg.certificate.lipschitz) != 3:
        raise ConfigError("certificate.lipschitz needs three coefficients")


def parse_config(data: dict) -> ExperimentConfig:
    sections = {"plant", "certificate", "trigger", "integrator", "experiment"}
    unknown = sorted(set(data) - sections)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    plant = dict(data.get("plant", {}))
    dist = plant.pop("disturbance", None)
    if dist is not None:
        plant["disturbance"] = _build(DisturbanceSpec, dist, "plant.disturbance")
    cfg = ExperimentConfig(
        plant=_build(PlantSection, plant, "plant"),
        certificate=_build(CertificateSection, data.get("certificate", {}), "certificate"),
        trigger=_build(TriggerSection, data.get("trigger", {}), "trigger"),
        integrator=_build(IntegratorConfig, data.get("integrator", {}), "integrator"),
        experiment=_build(ExperimentSection, data.get("experiment", {}), "experiment"),
    )
    if cfg.plant.disturbance.hold is not None:
        _check_hold(cfg)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(Path(path), "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)


def default_config() -> ExperimentConfig:
    """The packaged Lur'e benchmark configuration."""
    text = resources.files("etc_lab").joinpath("data/lure_benchmark.toml").read_text()
    return parse_config(tomllib.loads(text))
