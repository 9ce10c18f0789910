"""Guidance laws: vector-field path following, formation keeping, standoff
target tracking, rendezvous speed consensus and collision avoidance.

All laws are pure functions from state snapshots to a GuidanceCommand; peer
information arrives only as message-derived snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .airframe import PlatformConfig, VehicleState
from .angles import wrap_course, wrap_error

CHI_INF = math.pi / 2  # far-field approach angle of the straight-line field
FIELD_CAPTURE_RANGE = 150.0  # m, beyond this a formation slot is chased directly


@dataclass(frozen=True)
class GuidanceGains:
    k_vf: float = 0.02        # 1/m, cross-track field gain
    k_orbit: float = 0.02     # 1/m, orbit radial gain
    k_s: float = 3.0          # m/s per rad, standoff phase-spacing gain
    k_v: float = 0.1          # 1/s, formation along-track speed gain
    k_f: float = 0.05         # 1/m, formation cross-track field gain
    k_c: float = 0.05         # 1/s, rendezvous progress-consensus gain
    protection_radius: float = 60.0   # m, collision-avoidance trigger
    obstacle_lookahead: float = 200.0  # m
    staleness_bound: float = 1.0      # s, leader snapshot freshness


@dataclass(frozen=True)
class PathSegment:
    """One leg of a route: a straight line or an orbit."""

    kind: str  # "straight" | "orbit"
    start: tuple[float, float] = (0.0, 0.0)
    end: tuple[float, float] = (0.0, 0.0)
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.0
    direction: str = "ccw"  # "cw" | "ccw"
    desired_speed: float = 19.0
    desired_altitude: float = 100.0
    rendezvous_time: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("straight", "orbit"):
            raise ValueError(f"unknown segment kind: {self.kind}")
        if self.kind == "straight" and self.start == self.end:
            raise ValueError("degenerate straight segment")
        if self.kind == "orbit" and self.radius <= 0.0:
            raise ValueError("orbit radius must be positive")

    def course(self) -> float:
        dx = self.end[0] - self.start[0]
        dy = self.end[1] - self.start[1]
        return math.atan2(dy, dx)

    def length(self) -> float:
        if self.kind == "straight":
            return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])
        return 2.0 * math.pi * self.radius


@dataclass(frozen=True)
class FormationSlot:
    """Offset held relative to a leader, in the leader's course frame."""

    leader_id: int
    along_track: float
    cross_track: float  # positive = left of leader
    altitude_offset: float = 0.0


@dataclass(frozen=True)
class StandoffSpec:
    """Cooperative orbit around a (possibly moving) target estimate."""

    target_position: tuple[float, float]
    target_velocity: tuple[float, float]
    radius: float
    n_vehicles: int
    my_index: int

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("standoff radius must be positive")
        if self.n_vehicles < 1 or not (0 <= self.my_index < self.n_vehicles):
            raise ValueError("bad vehicle count/index")


@dataclass(frozen=True)
class GuidanceCommand:
    desired_course: float
    desired_speed: float
    desired_altitude: float
    source: str  # path_follow | formation | standoff | avoid
    degraded: bool = False  # e.g. orbit center singularity, stale leader
    # Anticipated course rate (rad/s, ccw positive).  On curved paths a purely
    # proportional heading loop lags the rotating command, which biases orbits
    # wide; the roll loop turns this into a bank feedforward instead.
    turn_rate: float = 0.0


def _clamp_speed(platform: PlatformConfig, v: float) -> float:
    return min(platform.max_speed, max(platform.min_speed, v))


def cross_track_error(state: VehicleState, seg: PathSegment) -> float:
    """Signed cross-track distance, positive left of the path direction."""
    chi = seg.course()
    dx = state.east - seg.start[0]
    dy = state.north - seg.start[1]
    return -dx * math.sin(chi) + dy * math.cos(chi)


def path_progress(state: VehicleState, seg: PathSegment) -> float:
    """Along-track distance from segment start, meters."""
    chi = seg.course()
    dx = state.east - seg.start[0]
    dy = state.north - seg.start[1]
    return dx * math.cos(chi) + dy * math.sin(chi)


def vf_straight(state: VehicleState, seg: PathSegment,
                gains: GuidanceGains = GuidanceGains()) -> GuidanceCommand:
    """Straight-line vector field: course = path course - chi_inf*(2/pi)*atan(k*e)."""
    if seg.kind != "straight":
        raise ValueError("vf_straight requires a straight segment")
    e = cross_track_error(state, seg)
    chi_d = seg.course() - CHI_INF * (2.0 / math.pi) * math.atan(gains.k_vf * e)
    return GuidanceCommand(
        desired_course=wrap_course(chi_d),
        desired_speed=seg.desired_speed,
        desired_altitude=seg.desired_altitude,
        source="path_follow",
    )


def vf_orbit(state: VehicleState, center: tuple[float, float], radius: float,
             direction: str = "ccw", desired_speed: float = 19.0,
             desired_altitude: float = 100.0,
             gains: GuidanceGains = GuidanceGains()) -> GuidanceCommand:
    """Orbit vector field: tangent on the circle, radially corrective off it."""
    dx = state.east - center[0]
    dy = state.north - center[1]
    d = math.hypot(dx, dy)
    if d < 1e-9:
        # Course undefined at the center: hold current course, flag it.
        return GuidanceCommand(state.course, desired_speed, desired_altitude,
                               source="path_follow", degraded=True)
    beta = math.atan2(dy, dx)  # bearing from center to vehicle
    corr = math.atan(gains.k_orbit * (d - radius))
    omega = state.airspeed / max(radius, 1.0)
    if direction == "ccw":
        chi_d = beta + math.pi / 2 + corr
    else:
        chi_d = beta - math.pi / 2 - corr
        omega = -omega
    return GuidanceCommand(wrap_course(chi_d), desired_speed, desired_altitude,
                           source="path_follow", turn_rate=omega)


def orbit_phase(state: VehicleState, center: tuple[float, float]) -> float:
    """Angular position of the vehicle on its orbit, rad in [-pi, pi)."""
    return wrap_course(math.atan2(state.north - center[1], state.east - center[0]))


def standoff_track(platform: PlatformConfig, state: VehicleState, spec: StandoffSpec,
                   phases_of_others: Sequence[float],
                   gains: GuidanceGains = GuidanceGains()) -> GuidanceCommand:
    """Orbit a moving target while spacing phases evenly around the circle.

    Course comes from the orbit field evaluated in the frame moving with the
    target; adding the target velocity back on gives the ground command, so a
    translating circle is flown without phase-dependent radius error.  Speed
    around the circle is cruise plus a gain on the error of the gap to the
    next vehicle ahead versus the nominal 2*pi/n spacing.
    """
    cx, cy = spec.target_position
    if not (math.isfinite(cx) and math.isfinite(cy)):
        raise ValueError("non-finite target estimate")
    cmd = vf_orbit(state, (cx, cy), spec.radius, "ccw",
                   desired_speed=platform.cruise_speed,
                   desired_altitude=100.0, gains=gains)
    speed = platform.cruise_speed
    if spec.n_vehicles > 1 and phases_of_others:
        my_phase = orbit_phase(state, (cx, cy))
        # Gap to the nearest peer ahead (ccw direction).
        gaps = [(wrap_error(p - my_phase)) % (2 * math.pi) for p in phases_of_others]
        gap_ahead = min(g for g in gaps if g > 1e-12) if any(g > 1e-12 for g in gaps) \
            else 2 * math.pi
        nominal = 2.0 * math.pi / spec.n_vehicles
        phase_error = gap_ahead - nominal
        speed = platform.cruise_speed + gains.k_s * phase_error
    vcx, vcy = spec.target_velocity
    gx = speed * math.cos(cmd.desired_course) + vcx
    gy = speed * math.sin(cmd.desired_course) + vcy
    return GuidanceCommand(
        desired_course=wrap_course(math.atan2(gy, gx)),
        desired_speed=_clamp_speed(platform, math.hypot(gx, gy)),
        desired_altitude=cmd.desired_altitude,
        source="standoff",
        degraded=cmd.degraded,
        turn_rate=speed / max(spec.radius, 1.0),
    )


def follow_leader(platform: PlatformConfig, state: VehicleState,
                  leader_state: VehicleState, slot: FormationSlot,
                  now: Optional[float] = None,
                  last_command: Optional[GuidanceCommand] = None,
                  gains: GuidanceGains = GuidanceGains()) -> GuidanceCommand:
    """Hold a slot in the leader's course frame via an induced route.

    The induced route is the line through the desired slot point along the
    leader's course; the follower flies a straight-line field onto it and
    adapts speed on the along-track error.  Far from the slot the field
    saturates near chi_inf and demands turn rates a roll-limited airframe
    cannot track, so beyond FIELD_CAPTURE_RANGE the course points straight
    at the slot instead (pure pursuit) and the field takes over on arrival.
    """
    if now is not None and now - leader_state.timestamp > gains.staleness_bound:
        if last_command is not None:
            return GuidanceCommand(
                last_command.desired_course, last_command.desired_speed,
                last_command.desired_altitude, source="formation", degraded=True)
        return GuidanceCommand(state.course, platform.cruise_speed,
                               state.altitude, source="formation", degraded=True)

    chi_l = leader_state.course
    cos_l, sin_l = math.cos(chi_l), math.sin(chi_l)
    # Slot offset rotated into the world frame (cross positive = left).
    ox = slot.along_track * cos_l - slot.cross_track * sin_l
    oy = slot.along_track * sin_l + slot.cross_track * cos_l
    px = leader_state.east + ox
    py = leader_state.north + oy
    # Error expressed in the leader frame.
    dx = px - state.east
    dy = py - state.north
    along_err = dx * cos_l + dy * sin_l        # positive: slot is ahead
    cross_err = -dx * sin_l + dy * cos_l       # positive: slot is left of me
    if math.hypot(along_err, cross_err) > FIELD_CAPTURE_RANGE:
        chi_d = math.atan2(dy, dx)
    else:
        chi_d = chi_l + CHI_INF * (2.0 / math.pi) * math.atan(gains.k_f * cross_err)
    speed = leader_state.airspeed + gains.k_v * along_err
    return GuidanceCommand(
        desired_course=wrap_course(chi_d),
        desired_speed=_clamp_speed(platform, speed),
        desired_altitude=leader_state.altitude + slot.altitude_offset,
        source="formation",
    )


def desired_slot_position(leader_state: VehicleState,
                          slot: FormationSlot) -> tuple[float, float]:
    """World-frame slot point used both by guidance and by formation metrics."""
    chi_l = leader_state.course
    cos_l, sin_l = math.cos(chi_l), math.sin(chi_l)
    return (
        leader_state.east + slot.along_track * cos_l - slot.cross_track * sin_l,
        leader_state.north + slot.along_track * sin_l + slot.cross_track * cos_l,
    )


def coordinated_path_follow(platform: PlatformConfig, state: VehicleState,
                            seg: PathSegment,
                            progress_of_peers: Sequence[tuple[int, float]],
                            my_progress: float,
                            gains: GuidanceGains = GuidanceGains()) -> GuidanceCommand:
    """Path following with a progress-consensus speed term for rendezvous."""
    if seg.kind == "straight":
        cmd = vf_straight(state, seg, gains)
    else:
        cmd = vf_orbit(state, seg.center, seg.radius, seg.direction,
                       seg.desired_speed, seg.desired_altitude, gains)
    speed = seg.desired_speed
    length = seg.length()
    if progress_of_peers and length > 0.0:
        peer_mean = sum(p / length for _, p in progress_of_peers) / len(progress_of_peers)
        speed += gains.k_c * (peer_mean - my_progress / length) * length
    return GuidanceCommand(cmd.desired_course, _clamp_speed(platform, speed),
                           cmd.desired_altitude, source="path_follow")


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float


def avoid(platform: PlatformConfig, state: VehicleState,
          neighbors: Sequence[VehicleState], obstacles: Sequence[Circle] = (),
          gains: GuidanceGains = GuidanceGains()) -> Optional[GuidanceCommand]:
    """Collision-avoidance override; None when the airspace is clear.

    Steers along the repulsive bearing away from the nearest threat.  When a
    threat sits dead ahead (repulsion ambiguous) or two threats tie on
    distance, the turn resolves to the right (clockwise in the east/north
    frame).
    """
    threats: list[tuple[float, float, float]] = []  # (distance, tx, ty)
    for nb in neighbors:
        d = math.hypot(nb.east - state.east, nb.north - state.north)
        if d < gains.protection_radius:
            threats.append((d, nb.east, nb.north))
    for ob in obstacles:
        d = math.hypot(ob.center[0] - state.east, ob.center[1] - state.north) - ob.radius
        if d < gains.obstacle_lookahead:
            threats.append((max(d, 0.0), ob.center[0], ob.center[1]))
    if not threats:
        return None
    # Tie-break: among equidistant threats prefer the one more to the left,
    # so the repulsive course resolves to the right.
    def sort_key(t):
        d, tx, ty = t
        rel = wrap_error(math.atan2(ty - state.north, tx - state.east) - state.course)
        return (round(d, 9), -rel)
    threats.sort(key=sort_key)
    _, tx, ty = threats[0]
    away = math.atan2(state.north - ty, state.east - tx)
    err = wrap_error(away - state.course)
    if abs(abs(err) - math.pi) < 1e-9:
        # Threat dead astern of the repulsive bearing: break right.
        away = state.course - math.pi / 2
    return GuidanceCommand(
        desired_course=wrap_course(away),
        desired_speed=platform.cruise_speed,
        desired_altitude=state.altitude,
        source="avoid",
    )
