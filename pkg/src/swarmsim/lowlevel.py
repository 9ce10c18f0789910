"""Low-level control: fuzzy speed/height loop, heading loop, control allocation.

The fuzzy controller takes speed and altitude errors (desired - actual),
fires a 5x5 rule table over triangular membership sets and defuzzifies by
weighted average.  Heading control is a proportional roll command on the
wrapped course error.  Allocation is a linear matrix map clamped per channel.
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass

import numpy as np
import yaml

from .airframe import G, ControlAllocationMatrix, PlatformConfig, VehicleState, VirtualControls
from .angles import wrap_error

DEFAULT_HEADING_GAIN = 0.8


def _load_default_config() -> dict:
    ref = importlib.resources.files("swarmsim.data").joinpath("controls.yaml")
    return yaml.safe_load(ref.read_text())


_DEFAULTS: dict | None = None


def default_control_config() -> dict:
    global _DEFAULTS
    if _DEFAULTS is None:
        _DEFAULTS = _load_default_config()
    return _DEFAULTS


def _tri_membership(x: float, left: float, center: float, right: float,
                    saturate_low: bool, saturate_high: bool) -> float:
    if x <= left:
        return 1.0 if saturate_low else 0.0
    if x >= right:
        return 1.0 if saturate_high else 0.0
    if x == center:
        return 1.0
    if x < center:
        return (x - left) / (center - left)
    return (right - x) / (right - center)


@dataclass(frozen=True)
class FuzzyRuleTable:
    """5x5 fuzzy rule base mapping (speed error, altitude error) to (pitch, throttle)."""

    speed_error_sets: tuple[tuple[float, float, float], ...]
    altitude_error_sets: tuple[tuple[float, float, float], ...]
    rules: tuple[tuple[tuple[float, float], ...], ...]  # [speed][alt] -> (pitch, throttle)
    trim_pitch: float = 0.0
    trim_throttle: float = 0.5

    def __post_init__(self):
        if len(self.speed_error_sets) != 5 or len(self.altitude_error_sets) != 5:
            raise ValueError("need exactly 5 membership sets per input")
        if len(self.rules) != 5 or any(len(r) != 5 for r in self.rules):
            raise ValueError("rule table must be 5x5")
        for sets in (self.speed_error_sets, self.altitude_error_sets):
            for a, b in zip(sets, sets[1:]):
                if b[0] >= a[1] + 1e-9 and b[0] > a[2]:
                    raise ValueError("membership sets leave coverage gaps")

    @classmethod
    def from_config(cls, cfg: dict) -> "FuzzyRuleTable":
        return cls(
            speed_error_sets=tuple(tuple(s) for s in cfg["speed_error_sets"]),
            altitude_error_sets=tuple(tuple(s) for s in cfg["altitude_error_sets"]),
            rules=tuple(tuple(tuple(cell) for cell in row) for row in cfg["rules"]),
            trim_pitch=float(cfg.get("trim_pitch", 0.0)),
            trim_throttle=float(cfg.get("trim_throttle", 0.5)),
        )

    @classmethod
    def default(cls) -> "FuzzyRuleTable":
        return cls.from_config(default_control_config()["fuzzy"])

    def _memberships(self, sets, x):
        n = len(sets)
        return [
            _tri_membership(x, *sets[i], saturate_low=(i == 0), saturate_high=(i == n - 1))
            for i in range(n)
        ]


def speed_height_control(
    state: VehicleState,
    desired_speed: float,
    desired_altitude: float,
    table: FuzzyRuleTable,
) -> tuple[float, float]:
    """Return (pitch_cmd, throttle_cmd) from the fuzzy rule base."""
    ev = desired_speed - state.airspeed
    eh = desired_altitude - state.altitude
    mu_v = table._memberships(table.speed_error_sets, ev)
    mu_h = table._memberships(table.altitude_error_sets, eh)
    num_p = num_t = den = 0.0
    for i, mv in enumerate(mu_v):
        if mv == 0.0:
            continue
        for j, mh in enumerate(mu_h):
            w = min(mv, mh)
            if w == 0.0:
                continue
            pitch, thr = table.rules[i][j]
            num_p += w * pitch
            num_t += w * thr
            den += w
    if den == 0.0:
        raise RuntimeError("fuzzy firing set empty; membership coverage broken")
    return (num_p / den, min(1.0, max(0.0, num_t / den)))


def heading_control(state: VehicleState, desired_course: float,
                    gain: float = DEFAULT_HEADING_GAIN,
                    max_roll: float = math.radians(45.0),
                    turn_rate_ff: float = 0.0) -> float:
    """Proportional roll command on the shortest-path course error.

    turn_rate_ff is an anticipated course rate (rad/s) on curved paths; it
    adds the coordinated-turn bank atan(v * omega / g) as feedforward so the
    proportional loop does not need a standing error to hold the turn.
    """
    err = wrap_error(desired_course - state.course)
    roll = gain * err
    if turn_rate_ff:
        roll += math.atan(state.airspeed * turn_rate_ff / G)
    return max(-max_roll, min(max_roll, roll))


def allocate(virtual: VirtualControls, matrix: ControlAllocationMatrix) -> "ActuatorVector":
    """Map virtual controls through the allocation matrix, then clamp."""
    u = np.array([
        virtual.commanded_roll,
        virtual.commanded_pitch,
        virtual.commanded_yaw_trim,
        virtual.throttle,
    ])
    raw = matrix.as_array() @ u
    channels = []
    for idx, value in enumerate(raw):
        if idx in matrix.throttle_channels:
            channels.append(min(1.0, max(0.0, float(value))))
        else:
            channels.append(min(1.0, max(-1.0, float(value))))
    return ActuatorVector(layout=matrix.layout_name, channels=tuple(channels))


def allocate_virtual(aileron_eq: float, elevator_eq: float, rudder_eq: float,
                     throttle: float, matrix: ControlAllocationMatrix) -> "ActuatorVector":
    """allocate() variant taking the four virtual-control scalars directly."""
    return allocate(
        VirtualControls(commanded_roll=aileron_eq, commanded_pitch=elevator_eq,
                        throttle=throttle, commanded_yaw_trim=rudder_eq),
        matrix,
    )


@dataclass(frozen=True)
class ActuatorVector:
    """Normalized per-channel actuator outputs for one layout."""

    layout: str
    channels: tuple[float, ...]


def allocation_matrix(layout: str) -> ControlAllocationMatrix:
    """Look up a shipped allocation matrix by layout name."""
    cfg = default_control_config()["allocation"]
    if layout not in cfg:
        raise KeyError(f"unknown allocation layout: {layout}")
    entry = cfg[layout]
    return ControlAllocationMatrix(
        layout_name=layout,
        rows=tuple(tuple(float(v) for v in row) for row in entry["rows"]),
        channel_names=tuple(entry["channels"]),
        throttle_channels=tuple(entry["throttle_channels"]),
    )


def lowlevel_step(
    platform: PlatformConfig,
    state: VehicleState,
    desired_course: float,
    desired_speed: float,
    desired_altitude: float,
    table: FuzzyRuleTable,
    heading_gain: float = DEFAULT_HEADING_GAIN,
    turn_rate_ff: float = 0.0,
) -> VirtualControls:
    """One pass of the complete low-level loop: heading + speed/height."""
    desired_speed = min(platform.max_speed, max(platform.min_speed, desired_speed))
    roll_cmd = heading_control(state, desired_course, heading_gain,
                               platform.max_roll, turn_rate_ff)
    pitch_cmd, throttle_cmd = speed_height_control(
        state, desired_speed, desired_altitude, table)
    pitch_cmd = max(-platform.max_pitch, min(platform.max_pitch, pitch_cmd))
    return VirtualControls(
        commanded_roll=roll_cmd,
        commanded_pitch=pitch_cmd,
        throttle=throttle_cmd,
    )
