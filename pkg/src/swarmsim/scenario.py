"""Scenario configuration: declarative description of fleet, missions,
network, disturbances and seeds, loadable from versioned YAML files."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .airframe import PlatformConfig, WindField
from .guidance import GuidanceGains
from .swarmnet import ChannelSpec

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MissionSpec:
    """One scripted mission or high-level command, issued at a sim time."""

    time: float
    kind: str  # formation_flight | target_tracking | transit | launch | rtl | land
    mission_id: int = 0
    pattern: str = "two_columns"
    route: tuple[tuple[float, float], ...] = ()
    altitude: float = 100.0
    speed: float = 19.0
    target_id: int = 0
    radius: float = 100.0
    goal: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class TargetSpec:
    position: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    shelters: tuple[tuple[tuple[float, float], ...], ...] = ()


@dataclass(frozen=True)
class SensorSpec:
    footprint_radius: float = 300.0
    noise_stddev: float = 5.0
    seed: int = 0


@dataclass(frozen=True)
class LaunchSpec:
    spacing: float = 5.0
    taxi_distance: float = 20.0
    taxi_speed: float = 8.0
    climb_altitude: float = 95.0


@dataclass(frozen=True)
class LandSpec:
    spacing: float = 20.0
    taxi_distance: float = 50.0
    capture_radius: float = 150.0


@dataclass(frozen=True)
class Rates:
    lowlevel_hz: int = 20
    guidance_hz: int = 10
    coordination_hz: int = 2

    def __post_init__(self):
        if self.lowlevel_hz % self.guidance_hz or self.guidance_hz % self.coordination_hz:
            raise ValueError("rates must divide evenly")


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    duration: float = 60.0
    rates: Rates = field(default_factory=Rates)
    fleet: list[tuple[int, PlatformConfig, tuple[float, float]]] = field(default_factory=list)
    wind: WindField = field(default_factory=WindField)
    coordination_channel: ChannelSpec = field(default_factory=ChannelSpec.latency_sensitive)
    bulk_channel: ChannelSpec = field(default_factory=ChannelSpec.latency_insensitive)
    guidance_gains: GuidanceGains = field(default_factory=GuidanceGains)
    launch: LaunchSpec = field(default_factory=LaunchSpec)
    land: LandSpec = field(default_factory=LandSpec)
    group_size_target: int = 7
    missions: list[MissionSpec] = field(default_factory=list)
    targets: list[TargetSpec] = field(default_factory=list)
    sensor: SensorSpec = field(default_factory=SensorSpec)
    heartbeat_hz: float = 5.0
    record_states: bool = True
    start_airborne: bool = False

    def validate(self) -> list[str]:
        """Return every validation failure (empty list = valid)."""
        problems = []
        if self.duration <= 0:
            problems.append("duration must be positive")
        ids = [a for a, _, _ in self.fleet]
        if len(ids) != len(set(ids)):
            problems.append("agent ids must be unique")
        for aid, platform, home in self.fleet:
            if not all(math.isfinite(c) for c in home):
                problems.append(f"agent {aid}: non-finite home position")
        for m in self.missions:
            if m.kind in ("formation_flight",) and len(m.route) < 2:
                problems.append(f"mission {m.mission_id}: formation needs a route")
            if m.kind == "target_tracking" and not (0 <= m.target_id < max(1, len(self.targets))):
                problems.append(f"mission {m.mission_id}: unknown target {m.target_id}")
        return problems

    @property
    def dt(self) -> float:
        return 1.0 / self.rates.lowlevel_hz


def _platform_from(d: dict) -> PlatformConfig:
    return PlatformConfig(
        name=d.get("name", "default"),
        cruise_speed=float(d.get("cruise_speed", 19.0)),
        min_speed=float(d.get("min_speed", 12.0)),
        max_speed=float(d.get("max_speed", 26.0)),
        mass=float(d.get("mass", 1.1)),
        max_roll=math.radians(float(d.get("max_roll_deg", 45.0))),
        max_pitch=math.radians(float(d.get("max_pitch_deg", 25.0))),
        max_thrust=float(d.get("max_thrust", 10.0)),
        endurance=float(d.get("endurance", 3600.0)),
    )


def _channel_from(d: dict, default: ChannelSpec) -> ChannelSpec:
    return ChannelSpec(
        name=default.name,
        latency_mean=float(d.get("latency_mean", default.latency_mean)),
        latency_jitter=float(d.get("latency_jitter", default.latency_jitter)),
        bandwidth=float(d.get("bandwidth", default.bandwidth)),
        loss_rate=float(d.get("loss_rate", default.loss_rate)),
        range_m=float(d.get("range", default.range_m)),
        seed=int(d.get("seed", default.seed)),
    )


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    if doc.get("version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ValueError(f"unsupported scenario schema version: {doc.get('version')}")
    cfg = ScenarioConfig(name=doc.get("name", "scenario"),
                         seed=int(doc.get("seed", 0)),
                         duration=float(doc.get("duration", 60.0)))
    r = doc.get("rates", {})
    cfg.rates = Rates(int(r.get("lowlevel_hz", 20)), int(r.get("guidance_hz", 10)),
                      int(r.get("coordination_hz", 2)))
    platform = _platform_from(doc.get("platform", {}))
    fleet = doc.get("fleet", {})
    if isinstance(fleet, dict) and "grid" in fleet:
        g = fleet["grid"]
        n = int(fleet.get("count", 1))
        ox, oy = g.get("origin", [0.0, 0.0])
        spacing = float(g.get("spacing", 100.0))
        cols = int(g.get("columns", 7))
        cfg.fleet = [
            (i + 1, platform, (ox + spacing * (i % cols), oy + spacing * (i // cols)))
            for i in range(n)
        ]
    else:
        for entry in fleet if isinstance(fleet, list) else []:
            cfg.fleet.append((int(entry["id"]),
                              _platform_from(entry.get("platform", doc.get("platform", {}))),
                              tuple(float(c) for c in entry["home"])))
    w = doc.get("wind", {})
    cfg.wind = WindField(mean_velocity=tuple(w.get("mean", [0.0, 0.0])),
                         gust_stddev=float(w.get("gust_stddev", 0.0)),
                         seed=int(w.get("seed", cfg.seed + 1)))
    ch = doc.get("channels", {})
    cfg.coordination_channel = _channel_from(
        ch.get("latency_sensitive", {}),
        ChannelSpec.latency_sensitive(seed=cfg.seed + 2))
    cfg.bulk_channel = _channel_from(
        ch.get("latency_insensitive", {}),
        ChannelSpec.latency_insensitive(seed=cfg.seed + 3))
    g = doc.get("guidance", {})
    cfg.guidance_gains = GuidanceGains(
        k_vf=float(g.get("k_vf", 0.02)),
        k_orbit=float(g.get("k_orbit", 0.02)),
        k_s=float(g.get("k_s", 3.0)),
        k_v=float(g.get("k_v", 0.1)),
        k_f=float(g.get("k_f", 0.05)),
        k_c=float(g.get("k_c", 0.05)),
        protection_radius=float(g.get("protection_radius", 60.0)),
        obstacle_lookahead=float(g.get("obstacle_lookahead", 200.0)),
        staleness_bound=float(g.get("staleness_bound", 1.0)),
    )
    launch = doc.get("launch", {})
    cfg.launch = LaunchSpec(spacing=float(launch.get("spacing", 5.0)),
                            taxi_distance=float(launch.get("taxi_distance", 20.0)),
                            taxi_speed=float(launch.get("taxi_speed", 8.0)),
                            climb_altitude=float(launch.get("climb_altitude", 95.0)))
    land = doc.get("land", {})
    cfg.land = LandSpec(spacing=float(land.get("spacing", 20.0)),
                        taxi_distance=float(land.get("taxi_distance", 50.0)),
                        capture_radius=float(land.get("capture_radius", 150.0)))
    cfg.group_size_target = int(doc.get("group_size_target", 7))
    for m in doc.get("missions", []):
        cfg.missions.append(MissionSpec(
            time=float(m["time"]),
            kind=m["kind"],
            mission_id=int(m.get("id", 0)),
            pattern=m.get("pattern", "two_columns"),
            route=tuple(tuple(float(c) for c in p) for p in m.get("route", [])),
            altitude=float(m.get("altitude", 100.0)),
            speed=float(m.get("speed", 19.0)),
            target_id=int(m.get("target_id", 0)),
            radius=float(m.get("radius", 100.0)),
            goal=tuple(m.get("goal", [0.0, 0.0])),
        ))
    for t in doc.get("targets", []):
        cfg.targets.append(TargetSpec(
            position=tuple(float(c) for c in t["position"]),
            velocity=tuple(float(c) for c in t.get("velocity", [0.0, 0.0])),
            shelters=tuple(tuple(tuple(float(c) for c in p) for p in poly)
                           for poly in t.get("shelters", [])),
        ))
    s = doc.get("sensor", {})
    cfg.sensor = SensorSpec(footprint_radius=float(s.get("footprint_radius", 300.0)),
                            noise_stddev=float(s.get("noise_stddev", 5.0)),
                            seed=int(s.get("seed", cfg.seed + 4)))
    cfg.heartbeat_hz = float(doc.get("heartbeat_hz", 5.0))
    cfg.record_states = bool(doc.get("record_states", True))
    cfg.start_airborne = bool(doc.get("start_airborne", False))
    return cfg


def load_scenario(path: str) -> ScenarioConfig:
    with open(path) as fh:
        return scenario_from_dict(yaml.safe_load(fh))


def fit_launch_spacing(n: int, taxi_time: float, target_tau_n: float) -> float:
    """Spacing so the n-th liftoff lands on target_tau_n (tau_i = (i-1)s + taxi)."""
    if n < 2:
        return target_tau_n
    return (target_tau_n - taxi_time) / (n - 1)
