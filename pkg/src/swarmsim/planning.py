"""Task planning: planner factory, threat-avoiding path planning, formation
plan generation and area-coverage (lawnmower) planning.

The path planner builds a visibility graph over inflated circular threats
(circle boundaries sampled polygonally) and runs Dijkstra.  The coverage
planner sweeps boustrophedon legs aligned with the polygon's longest edge.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from shapely.geometry import LineString, Polygon

from .guidance import Circle, FormationSlot, PathSegment, StandoffSpec

DEFAULT_FOOTPRINT_WIDTH = 100.0
MIN_SLOT_SEPARATION = 30.0
CIRCLE_SAMPLES = 24
SAMPLE_MARGIN = 1.02  # sample radius factor keeping chords outside the circle


class PlanningError(RuntimeError):
    pass


@dataclass(frozen=True)
class TaskPlan:
    """Executable plan for one task on one agent."""

    task_id: int
    owner: int
    segments: tuple[PathSegment, ...]
    role: str  # leader | follower | tracker | transit
    formation_slot: Optional[FormationSlot] = None
    standoff: Optional[StandoffSpec] = None
    blocking: bool = False

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            a_end = a.end if a.kind == "straight" else a.center
            b_start = b.start if b.kind == "straight" else b.center
            if math.hypot(a_end[0] - b_start[0], a_end[1] - b_start[1]) > 1.0 + 1e-9:
                raise ValueError("plan segments are not connected")
        if self.role == "follower" and self.formation_slot is None:
            raise ValueError("follower plan requires a formation slot")
        if self.role == "tracker" and self.standoff is None:
            raise ValueError("tracker plan requires a standoff spec")


@dataclass(frozen=True)
class FormationPattern:
    """Named slot table: per member index, (leader_index, along, cross)."""

    name: str
    slots: tuple[tuple[int, float, float], ...]
    leader_indices: tuple[int, ...]

    def __post_init__(self):
        # Leaders reference themselves; followers reference a leader index.
        for li in self.leader_indices:
            if not (0 <= li < len(self.slots)):
                raise ValueError("leader index out of range")


PATTERN_NAMES = ("line", "triangle", "vee", "two_columns")


def make_pattern(name: str, n: int, spacing: float = 50.0) -> FormationPattern:
    """Generate the slot table for a named pattern and group size."""
    if name not in PATTERN_NAMES:
        raise ValueError(f"unknown formation pattern: {name}")
    if n < 1:
        raise ValueError("group size must be >= 1")
    if spacing < MIN_SLOT_SEPARATION:
        raise ValueError("slot spacing below minimum separation")
    slots: list[tuple[int, float, float]] = []
    if name == "two_columns" and n >= 2:
        leaders = (0, 1)
        # Leader 1 holds a pure cross-track offset lane from leader 0.
        slots.append((0, 0.0, 0.0))
        slots.append((1, 0.0, 2 * spacing))
        for k in range(2, n):
            col = k % 2
            row = (k - 2) // 2 + 1
            slots.append((col, -row * spacing, 0.0))
    else:
        leaders = (0,)
        slots.append((0, 0.0, 0.0))
        for k in range(1, n):
            side = 1 if k % 2 else -1
            rank = (k + 1) // 2
            if name == "line":
                slots.append((0, 0.0, side * rank * spacing))
            elif name == "vee":
                slots.append((0, -rank * spacing, side * rank * spacing))
            else:  # triangle: staggered rows behind the leader
                row = (k + 1) // 2
                slots.append((0, -row * spacing, side * spacing * ((k % 2) + row) / row))
    return FormationPattern(name, tuple(slots), leaders)


@dataclass(frozen=True)
class ReplanTrigger:
    kind: str  # conflict | staleness | threat | pattern_change | command
    timestamp: float
    payload: dict = field(default_factory=dict)

    KINDS = ("conflict", "staleness", "threat", "pattern_change", "command")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown trigger kind: {self.kind}")


# ---------------------------------------------------------------------------
# Path planning


def _segment_clear(a, b, circles: Sequence[Circle], inflation: float) -> bool:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    ln2 = dx * dx + dy * dy
    for c in circles:
        cx, cy = c.center
        r = c.radius + inflation
        if ln2 == 0.0:
            d2 = (ax - cx) ** 2 + (ay - cy) ** 2
        else:
            t = ((cx - ax) * dx + (cy - ay) * dy) / ln2
            t = max(0.0, min(1.0, t))
            px, py = ax + t * dx, ay + t * dy
            d2 = (px - cx) ** 2 + (py - cy) ** 2
        if d2 < (r - 1e-9) ** 2:
            return False
    return True


def _inside_any(p, circles: Sequence[Circle], inflation: float) -> bool:
    return any(
        math.hypot(p[0] - c.center[0], p[1] - c.center[1]) < c.radius + inflation
        for c in circles
    )


def plan_path(start: tuple[float, float], goal: tuple[float, float],
              threats: Sequence[Circle], turn_radius: float,
              desired_speed: float = 19.0,
              desired_altitude: float = 100.0) -> list[PathSegment]:
    """Collision-free polyline route via a sampled visibility graph."""
    if start == goal:
        raise PlanningError("start equals goal")
    inflation = turn_radius
    if _inside_any(goal, threats, inflation):
        raise PlanningError("goal lies inside an inflated threat")
    if _inside_any(start, threats, inflation):
        raise PlanningError("start lies inside an inflated threat")

    nodes = [start, goal]
    for c in threats:
        rr = (c.radius + inflation) * SAMPLE_MARGIN
        for k in range(CIRCLE_SAMPLES):
            a = 2 * math.pi * k / CIRCLE_SAMPLES
            p = (c.center[0] + rr * math.cos(a), c.center[1] + rr * math.sin(a))
            if not _inside_any(p, threats, inflation):
                nodes.append(p)

    n = len(nodes)
    # Dijkstra over the visibility graph (edges checked lazily).
    dist = [math.inf] * n
    prev = [-1] * n
    dist[0] = 0.0
    heap = [(0.0, 0)]
    visited = [False] * n
    while heap:
        d, u = heapq.heappop(heap)
        if visited[u]:
            continue
        visited[u] = True
        if u == 1:
            break
        ux, uy = nodes[u]
        for v in range(n):
            if visited[v] or v == u:
                continue
            w = math.hypot(nodes[v][0] - ux, nodes[v][1] - uy)
            if d + w >= dist[v]:
                continue
            if not _segment_clear(nodes[u], nodes[v], threats, inflation):
                continue
            dist[v] = d + w
            prev[v] = u
            heapq.heappush(heap, (dist[v], v))
    if not visited[1] and math.isinf(dist[1]):
        raise PlanningError("no route: goal unreachable around threats")

    waypoints = []
    v = 1
    while v != -1:
        waypoints.append(nodes[v])
        v = prev[v]
    waypoints.reverse()
    return [
        PathSegment("straight", start=a, end=b, desired_speed=desired_speed,
                    desired_altitude=desired_altitude)
        for a, b in zip(waypoints, waypoints[1:])
    ]


def path_length(segments: Sequence[PathSegment]) -> float:
    return sum(s.length() for s in segments)


# ---------------------------------------------------------------------------
# Formation planning


def offset_route(route: Sequence[PathSegment], cross: float) -> tuple[PathSegment, ...]:
    """Shift a straight route laterally by a constant cross-track offset."""
    out = []
    for seg in route:
        if seg.kind != "straight":
            out.append(seg)
            continue
        chi = seg.course()
        # Left-positive cross offset: unit left normal is (-sin, cos).
        nx, ny = -math.sin(chi), math.cos(chi)
        out.append(replace(seg,
                           start=(seg.start[0] + cross * nx, seg.start[1] + cross * ny),
                           end=(seg.end[0] + cross * nx, seg.end[1] + cross * ny)))
    return tuple(out)


def plan_formation(group: Sequence[int], pattern: FormationPattern,
                   reference_route: Sequence[PathSegment],
                   base_task_id: int = 0) -> dict[int, TaskPlan]:
    """Assign pattern slots to a group: leader plans fly (offset copies of)
    the reference route with rendezvous coordination; follower plans hold a
    FormationSlot on their assigned leader."""
    if len(group) != len(pattern.slots):
        raise ValueError("group size must equal pattern slot count")
    members = list(group)
    plans: dict[int, TaskPlan] = {}
    leader_agents = {li: members[li] for li in pattern.leader_indices}
    for idx, agent in enumerate(members):
        leader_idx, along, cross = pattern.slots[idx]
        if idx in pattern.leader_indices:
            # Leader lane offset is its slot cross offset from the reference.
            route = offset_route(reference_route, cross)
            route = tuple(replace(s, rendezvous_time=s.rendezvous_time or 0.0)
                          for s in route)
            plans[agent] = TaskPlan(base_task_id + idx, agent, route, "leader")
        else:
            slot = FormationSlot(leader_id=leader_agents[leader_idx],
                                 along_track=along, cross_track=cross)
            plans[agent] = TaskPlan(base_task_id + idx, agent, (), "follower",
                                    formation_slot=slot)
    return plans


# ---------------------------------------------------------------------------
# Coverage planning


def plan_tracking(search_area: Sequence[tuple[float, float]], turn_radius: float,
                  footprint_width: float = DEFAULT_FOOTPRINT_WIDTH,
                  start: Optional[tuple[float, float]] = None,
                  desired_speed: float = 19.0,
                  desired_altitude: float = 100.0) -> list[PathSegment]:
    """Transit plus boustrophedon sweep covering the polygon.

    Sweep legs run parallel to the polygon's longest edge, spaced one sensor
    footprint apart, each leg extended half a footprint past the boundary so
    footprint circles cover the edges.
    """
    poly = Polygon(search_area)
    if not poly.is_valid or poly.area <= 0.0:
        raise PlanningError("search area must be a simple polygon with area")

    # Align sweeps with the longest edge.
    coords = list(poly.exterior.coords)
    best_len, best_ang = -1.0, 0.0
    for a, b in zip(coords, coords[1:]):
        ln = math.hypot(b[0] - a[0], b[1] - a[1])
        if ln > best_len:
            best_len, best_ang = ln, math.atan2(b[1] - a[1], b[0] - a[0])
    ca, sa = math.cos(-best_ang), math.sin(-best_ang)

    def rot(p, c, s):
        return (p[0] * c - p[1] * s, p[0] * s + p[1] * c)

    rpoly = Polygon([rot(p, ca, sa) for p in search_area])
    minx, miny, maxx, maxy = rpoly.bounds
    half = footprint_width / 2.0
    height = maxy - miny
    n_legs = max(1, math.ceil(height / footprint_width))
    ys = [miny + height * (k + 0.5) / n_legs for k in range(n_legs)]

    legs = []
    for i, y in enumerate(ys):
        line = LineString([(minx - 1.0, y), (maxx + 1.0, y)])
        inter = line.intersection(rpoly)
        if inter.is_empty:
            continue
        xs = [c[0] for g in getattr(inter, "geoms", [inter]) for c in g.coords]
        x0, x1 = min(xs) - half, max(xs) + half
        if i % 2 == 1:
            x0, x1 = x1, x0
        legs.append(((x0, y), (x1, y)))

    cb, sb = math.cos(best_ang), math.sin(best_ang)
    pts = [(rot(a, cb, sb), rot(b, cb, sb)) for a, b in legs]
    segments: list[PathSegment] = []
    cursor = start
    for a, b in pts:
        if cursor is not None and math.hypot(a[0] - cursor[0], a[1] - cursor[1]) > 1.0:
            segments.append(PathSegment("straight", start=cursor, end=a,
                                        desired_speed=desired_speed,
                                        desired_altitude=desired_altitude))
        segments.append(PathSegment("straight", start=a, end=b,
                                    desired_speed=desired_speed,
                                    desired_altitude=desired_altitude))
        cursor = b
    return segments


# ---------------------------------------------------------------------------
# Planner factory


class _PlannerBase:
    """Common planner shape: neighbor intake, plan generation, event-driven
    replan.  Replanning with unchanged inputs yields identical plans."""

    def __init__(self):
        self.neighbor_states: dict[int, object] = {}
        self._last_args = None
        self._last_plans = None

    def receive_neighbor_state(self, agent_id: int, state) -> None:
        self.neighbor_states[agent_id] = state

    def handle_trigger(self, trigger: ReplanTrigger):
        if self._last_args is None:
            raise PlanningError("no prior plan to regenerate")
        return self.generate(*self._last_args)

    def generate(self, *args):
        raise NotImplementedError


class PathPlanner(_PlannerBase):
    def generate(self, owner, start, goal, threats, turn_radius, task_id=0):
        self._last_args = (owner, start, goal, threats, turn_radius, task_id)
        segs = tuple(plan_path(start, goal, threats, turn_radius))
        return TaskPlan(task_id, owner, segs, "transit")


class FormationPlanner(_PlannerBase):
    def generate(self, group, pattern, reference_route, base_task_id=0):
        self._last_args = (group, pattern, reference_route, base_task_id)
        return plan_formation(group, pattern, reference_route, base_task_id)


class TrackingPlanner(_PlannerBase):
    def generate(self, owner, target, radius, n_vehicles, my_index, task_id=0,
                 start=None):
        self._last_args = (owner, target, radius, n_vehicles, my_index,
                           task_id, start)
        spec = StandoffSpec(target_position=tuple(target),
                            target_velocity=(0.0, 0.0), radius=radius,
                            n_vehicles=n_vehicles, my_index=my_index)
        return TaskPlan(task_id, owner, (), "tracker", standoff=spec)


_PLANNERS = {
    "path": PathPlanner,
    "formation": FormationPlanner,
    "tracking": TrackingPlanner,
}


def make_planner(task_kind: str) -> _PlannerBase:
    """Planner factory keyed by task kind."""
    try:
        cls = _PLANNERS[task_kind]
    except KeyError:
        raise ValueError(f"unknown planner kind: {task_kind}") from None
    return cls()
