"""Kinematic fixed-wing vehicle model.

A 3-DOF point-mass model (east/north position, altitude, airspeed, ground
course) with first-order roll/pitch lag.  Speed follows dV/dt = (T - D)/m -
g*sin(gamma), course follows chi_dot = (g/V)*tan(phi), climb follows
h_dot = V*sin(gamma) with gamma taken equal to pitch.  Ground velocity is air
velocity plus wind.  Integration is fixed-step RK4 so trajectories replay
bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .angles import wrap_course

G = 9.80665

# Fraction of min_speed below which the stall flag raises.
STALL_FRACTION = 0.8

# First-order attitude lag time constant, seconds.
DEFAULT_ATTITUDE_TAU = 0.5

# Gust shaping filter: first-order low-pass, 1 s time constant, stepped at
# the low-level control period.
GUST_TAU = 1.0
GUST_DT = 0.05


@dataclass(frozen=True)
class ControlAllocationMatrix:
    """Linear map from virtual controls to actuator channels.

    Columns are (aileron_eq, elevator_eq, rudder_eq, throttle); rows are
    actuator channels for the named layout.  Channels listed in
    throttle_channels clamp to [0, 1], all others to [-1, 1].
    """

    layout_name: str
    rows: tuple[tuple[float, float, float, float], ...]
    channel_names: tuple[str, ...]
    throttle_channels: tuple[int, ...]

    def __post_init__(self):
        if len(self.rows) != len(self.channel_names):
            raise ValueError("row count must match channel names")
        for row in self.rows:
            if len(row) != 4 or not all(math.isfinite(v) for v in row):
                raise ValueError("allocation rows must be 4 finite gains")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float)


@dataclass(frozen=True)
class PlatformConfig:
    """Physical envelope and configuration of one airframe type."""

    name: str
    cruise_speed: float = 19.0
    min_speed: float = 12.0
    max_speed: float = 26.0
    mass: float = 1.1
    max_roll: float = math.radians(45.0)
    max_pitch: float = math.radians(25.0)
    max_thrust: float = 10.0
    drag_coefficient: float | None = None  # fitted if None
    allocation: ControlAllocationMatrix | None = None
    endurance: float = 3600.0
    attitude_tau: float = DEFAULT_ATTITUDE_TAU

    def __post_init__(self):
        if not (0.0 < self.min_speed < self.cruise_speed < self.max_speed):
            raise ValueError("require 0 < min_speed < cruise_speed < max_speed")
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if not (0.0 < self.max_roll < math.pi / 2):
            raise ValueError("max_roll must lie in (0, pi/2)")
        if self.endurance <= 0.0:
            raise ValueError("endurance must be positive")
        if self.drag_coefficient is None:
            # Fit c so that half thrust sustains cruise: c*Vc^2 = Tmax/2.
            c = 0.5 * self.max_thrust / self.cruise_speed**2
            object.__setattr__(self, "drag_coefficient", c)

    @property
    def stall_speed(self) -> float:
        return STALL_FRACTION * self.min_speed

    def min_turn_radius(self) -> float:
        return self.cruise_speed**2 / (G * math.tan(self.max_roll))


@dataclass(frozen=True)
class VehicleState:
    """Snapshot of one vehicle at one instant."""

    east: float
    north: float
    altitude: float
    airspeed: float
    course: float  # rad in [-pi, pi), from +east, CCW positive
    roll: float
    pitch: float
    timestamp: float
    stalled: bool = False

    def position(self) -> tuple[float, float]:
        return (self.east, self.north)

    def is_finite(self) -> bool:
        return all(
            math.isfinite(v)
            for v in (self.east, self.north, self.altitude, self.airspeed,
                      self.course, self.roll, self.pitch, self.timestamp)
        )


@dataclass(frozen=True)
class VirtualControls:
    """Attitude/throttle references handed from low-level control to the airframe."""

    commanded_roll: float = 0.0
    commanded_pitch: float = 0.0
    throttle: float = 0.0
    commanded_yaw_trim: float = 0.0


@dataclass
class WindField:
    """Mean wind plus low-pass-filtered Gaussian gusts.

    The gust sequence is a pure function of (seed, t): samples are drawn from
    a single seeded stream and filtered at a fixed internal step, with the
    filtered series cached so repeated queries are cheap and identical.
    """

    mean_velocity: tuple[float, float] = (0.0, 0.0)
    gust_stddev: float = 0.0
    seed: int = 0
    _cache: list = field(default_factory=list, repr=False, compare=False)
    _rng: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.gust_stddev < 0.0:
            raise ValueError("gust_stddev must be non-negative")

    def _extend(self, k: int) -> None:
        if self._rng is None:
            self._rng = np.random.default_rng(self.seed)
        alpha = GUST_DT / GUST_TAU
        # White-noise stddev chosen so the filtered output has the requested
        # stationary standard deviation.
        sigma_w = self.gust_stddev * math.sqrt((2.0 - alpha) / alpha)
        cache = self._cache
        while len(cache) <= k:
            w = self._rng.normal(0.0, sigma_w, size=2)
            if cache:
                prev = cache[-1]
                cache.append(((1 - alpha) * prev[0] + alpha * w[0],
                              (1 - alpha) * prev[1] + alpha * w[1]))
            else:
                cache.append((alpha * w[0], alpha * w[1]))

    def sample(self, t: float) -> tuple[float, float]:
        """Wind vector (east, north) m/s at time t >= 0."""
        if t < 0.0:
            raise ValueError("t must be non-negative")
        if self.gust_stddev == 0.0:
            return self.mean_velocity
        k = int(t / GUST_DT)
        self._extend(k)
        gx, gy = self._cache[k]
        return (self.mean_velocity[0] + gx, self.mean_velocity[1] + gy)


def sample_gust(wind: WindField, t: float) -> tuple[float, float]:
    return wind.sample(t)


def total_energy(state: VehicleState, mass: float) -> float:
    """Kinetic plus potential energy, 0.5*m*V^2 + m*g*h."""
    if mass <= 0.0:
        raise ValueError("mass must be positive")
    if not (math.isfinite(state.airspeed) and math.isfinite(state.altitude)):
        raise ValueError("non-finite state")
    return 0.5 * mass * state.airspeed**2 + mass * G * state.altitude


def step_dynamics(
    platform: PlatformConfig,
    state: VehicleState,
    controls: VirtualControls,
    wind: WindField,
    dt: float,
) -> VehicleState:
    """Advance one vehicle by dt using RK4 over the kinematic model.

    Raises ValueError on non-finite input state or dt outside (0, 0.1].
    """
    if not (0.0 < dt <= 0.1):
        raise ValueError("dt must lie in (0, 0.1]")
    if not state.is_finite():
        raise ValueError("non-finite vehicle state")

    phi_c = max(-platform.max_roll, min(platform.max_roll, controls.commanded_roll))
    theta_c = max(-platform.max_pitch, min(platform.max_pitch, controls.commanded_pitch))
    throttle = max(0.0, min(1.0, controls.throttle))
    thrust = throttle * platform.max_thrust
    c_drag = platform.drag_coefficient
    m = platform.mass
    tau = platform.attitude_tau
    wx, wy = wind.sample(state.timestamp)

    def deriv(y):
        e, n, h, v, chi, phi, theta = y
        v_eff = max(v, 1.0)  # guard turn-rate singularity at low speed
        gamma = theta
        drag = c_drag * v * v
        dv = (thrust - drag) / m - G * math.sin(gamma)
        dchi = (G / v_eff) * math.tan(phi)
        dh = v * math.sin(gamma)
        vh = v * math.cos(gamma)
        de = vh * math.cos(chi) + wx
        dn = vh * math.sin(chi) + wy
        dphi = (phi_c - phi) / tau
        dtheta = (theta_c - theta) / tau
        return (de, dn, dh, dv, dchi, dphi, dtheta)

    y0 = (state.east, state.north, state.altitude, state.airspeed,
          state.course, state.roll, state.pitch)

    def axpy(y, k, s):
        return tuple(yi + s * ki for yi, ki in zip(y, k))

    k1 = deriv(y0)
    k2 = deriv(axpy(y0, (k1[0], k1[1], k1[2], k1[3], k1[4], k1[5], k1[6]), dt / 2))
    k3 = deriv(axpy(y0, k2, dt / 2))
    k4 = deriv(axpy(y0, k3, dt))
    y1 = tuple(
        yi + (dt / 6.0) * (a + 2 * b + 2 * c + d)
        for yi, a, b, c, d in zip(y0, k1, k2, k3, k4)
    )

    e, n, h, v, chi, phi, theta = y1
    v = max(v, 0.0)
    phi = max(-platform.max_roll, min(platform.max_roll, phi))
    theta = max(-platform.max_pitch, min(platform.max_pitch, theta))
    return VehicleState(
        east=e,
        north=n,
        altitude=max(h, 0.0),
        airspeed=v,
        course=wrap_course(chi),
        roll=phi,
        pitch=theta,
        timestamp=state.timestamp + dt,
        stalled=v < platform.stall_speed,
    )


def hold_state(state: VehicleState, dt: float) -> VehicleState:
    """Advance only the clock (vehicle on the ground / standby)."""
    return replace(state, timestamp=state.timestamp + dt)
