"""Per-agent control process: one observe-orient-decide-act pass per tick.

Each Agent owns its Commander state machine, peer estimates, mission plans
and guidance state.  ``ingest`` (observe/orient) consumes decoded messages;
``compute`` (decide/act) runs the rate-split control stack and returns the
next vehicle state plus outgoing traffic.  ``compute`` touches only the
agent's own fields, a read-only snapshot and the shared wind cache, so the
kernel may run it for all agents in parallel within a tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .airframe import (PlatformConfig, VehicleState, WindField, hold_state,
                       step_dynamics)
from .angles import wrap_course
from .commander import (AVOID, FAILSAFE, LAND, LAUNCH, MISSION, RTL, STANDBY,
                        TAXI, CommanderState, commander_step)
from .coordination import (Assignment, CoordinationGroup, Mission, Task,
                           allocate_tasks, decompose, form_groups,
                           resolve_conflict)
from .guidance import (Circle, FormationSlot, GuidanceCommand, GuidanceGains,
                       PathSegment, StandoffSpec, avoid,
                       coordinated_path_follow, follow_leader, orbit_phase,
                       path_progress, standoff_track, vf_orbit, vf_straight)
from .lowlevel import FuzzyRuleTable, lowlevel_step
from .planning import PATTERN_NAMES, make_pattern, offset_route, plan_formation, plan_path
from .scenario import MissionSpec, ScenarioConfig
from .swarmnet import (PRIO_COMMAND, PRIO_COORDINATION, PRIO_TELEMETRY, Ack,
                       Assignment_, Command, Detection, Heartbeat,
                       PlanProgress)

GCS_ID = 0


def _slot_world_positions(pattern, route: Sequence[tuple[float, float]],
                          group_id: int) -> list[tuple[float, float]]:
    """World position of every pattern slot at the route start, including the
    group's lane offset.  Shared by all group members, so allocation bids are
    computed over identical task positions everywhere."""
    x0, y0 = route[0]
    chi = math.atan2(route[1][1] - y0, route[1][0] - x0)
    cos_c, sin_c = math.cos(chi), math.sin(chi)
    lane = -GROUP_LANE_OFFSET * group_id
    out = []
    for k, (leader_idx, along, cross) in enumerate(pattern.slots):
        total_cross = cross + lane
        if leader_idx != k:
            total_cross += pattern.slots[leader_idx][2]
        out.append((x0 + along * cos_c - total_cross * sin_c,
                    y0 + along * sin_c + total_cross * cos_c))
    return out

# GCS command catalog (Command.kind values).
CMD_LAUNCH = 1
CMD_FORMATION = 2
CMD_TRACK = 3
CMD_RTL = 4
CMD_LAND = 5
CMD_FAILSAFE = 6

CMD_NAMES = {
    CMD_LAUNCH: "launch",
    CMD_FORMATION: "formation",
    CMD_TRACK: "tracking",
    CMD_RTL: "rtl",
    CMD_LAND: "land",
    CMD_FAILSAFE: "failsafe",
}
CMD_KINDS = {v: k for k, v in CMD_NAMES.items()}

# Lateral spacing between group reference routes, m.
GROUP_LANE_OFFSET = 300.0

# Age beyond which a target report no longer enters the fused estimate, s.
REPORT_FRESHNESS = 2.0

BATTERY_LOW_FRACTION = 0.15
LAND_SINK_RATE = 3.0  # m/s scripted descent


@dataclass
class StepResult:
    """One tick's output from Agent.compute."""

    state: VehicleState
    mode: str
    actuators: bool
    guidance: Optional[GuidanceCommand]
    records: list = field(default_factory=list)   # ("event", t, kind, data)
    outgoing: list = field(default_factory=list)  # (message, priority, recipient ids)


class Agent:
    """One UAV's full onboard stack."""

    def __init__(self, agent_id: int, platform: PlatformConfig,
                 home: tuple[float, float], scenario: ScenarioConfig,
                 initial_state: VehicleState):
        self.agent_id = agent_id
        self.platform = platform
        self.home = home
        self.scenario = scenario
        self.state = initial_state
        self.commander = CommanderState()
        self.table = FuzzyRuleTable.default()
        self.gains = scenario.guidance_gains

        ids = sorted(a for a, _, _ in scenario.fleet)
        self.fleet_ids = ids
        self.rank = ids.index(agent_id)
        self.homes = [(a, h) for a, _, h in scenario.fleet]

        # Peer knowledge (message-derived only).
        self.peers: dict[int, VehicleState] = {}       # timestamp = receive time
        self.peer_battery: dict[int, float] = {}
        self.peer_progress: dict[int, tuple[float, float]] = {}  # id -> (t, frac)
        self.reports: dict[int, dict[int, tuple[float, float, float, float, float]]] = {}

        # Mission bookkeeping.
        self.mission: Optional[MissionSpec] = None
        self.pending_mission: Optional[MissionSpec] = None
        self.group: Optional[CoordinationGroup] = None
        self.pattern = None
        self.tasks: dict[int, Task] = {}
        self.assignment: Optional[Assignment] = None
        self.role: Optional[str] = None
        self.slot: Optional[FormationSlot] = None
        self.leader_ids: tuple[int, ...] = ()
        self.standoff_cfg: Optional[tuple[int, float, int, int]] = None
        self.target_brief: Optional[tuple[float, float]] = None
        self.segments: tuple[PathSegment, ...] = ()
        self.seg_index = 0
        self._done_length = 0.0
        self.route_length = 0.0
        self.my_fraction = 0.0

        # Launch / land scripting.
        self.taxi_start: Optional[float] = None
        self._taxi_progress = 0.0
        self.land_slot: Optional[float] = None
        self._ground_progress: Optional[float] = None
        self._rtl_seg: Optional[PathSegment] = None

        self.handled_commands: set[int] = set()
        self._pending_out: list = []
        self._queued_events: list[str] = []
        self.last_cmd: Optional[GuidanceCommand] = None
        self._pass_side = 0.0
        self._pass_until = -math.inf
        self._frame_route = ()
        self.airborne_time = 0.0
        self._battery_low_sent = False

        # One-way latency compensation for dead reckoning peers.
        self._latency_comp = scenario.coordination_channel.latency_mean

        hz = scenario.rates
        self._hb_div = max(1, round(hz.lowlevel_hz / scenario.heartbeat_hz))
        self._guidance_div = hz.lowlevel_hz // hz.guidance_hz
        self._coord_div = hz.lowlevel_hz // hz.coordination_hz

    # ---------------------------------------------------------------- observe

    def ingest(self, now: float, messages: Sequence[tuple[int, object]]) -> None:
        """Fold decoded messages into peer estimates and shared state."""
        for sender, msg in messages:
            if isinstance(msg, Heartbeat):
                self.peers[sender] = VehicleState(
                    east=msg.east, north=msg.north, altitude=msg.altitude,
                    airspeed=msg.airspeed, course=msg.course,
                    roll=0.0, pitch=0.0, timestamp=now)
                self.peer_battery[sender] = msg.battery
            elif isinstance(msg, PlanProgress):
                self.peer_progress[sender] = (now, msg.progress)
            elif isinstance(msg, Assignment_):
                self._merge_assignment(msg, now)
            elif isinstance(msg, Detection):
                self._store_report(sender, now, msg)
            elif isinstance(msg, Command):
                self._handle_command(now, msg)

    def _store_report(self, reporter: int, now: float, det: Detection) -> None:
        per = self.reports.setdefault(det.target_id, {})
        per[reporter] = (now, det.east, det.north, det.vel_east, det.vel_north)

    def fused_estimate(self, target_id: int, now: float
                       ) -> Optional[tuple[tuple[float, float], tuple[float, float]]]:
        """Unweighted average of fresh reports across reporting agents."""
        per = self.reports.get(target_id)
        if not per:
            return None
        fresh = [v for v in per.values() if now - v[0] <= REPORT_FRESHNESS]
        if not fresh:
            return None
        n = len(fresh)
        pos = (sum(v[1] for v in fresh) / n, sum(v[2] for v in fresh) / n)
        vel = (sum(v[3] for v in fresh) / n, sum(v[4] for v in fresh) / n)
        return pos, vel

    def _handle_command(self, now: float, msg: Command) -> None:
        # Always acknowledge, even duplicates; act at most once per id.
        self._pending_out.append((Ack(msg.command_id), PRIO_COMMAND, (GCS_ID,)))
        if msg.command_id in self.handled_commands:
            return
        self.handled_commands.add(msg.command_id)
        if msg.kind == CMD_LAUNCH:
            self.schedule_launch(now)
        elif msg.kind == CMD_FORMATION:
            pattern = PATTERN_NAMES[msg.arg % len(PATTERN_NAMES)]
            cx = sum(h[0] for _, h in self.homes) / len(self.homes)
            cy = sum(h[1] for _, h in self.homes) / len(self.homes)
            self.request_mission(MissionSpec(
                time=now, kind="formation_flight", mission_id=msg.command_id,
                pattern=pattern, route=((cx, cy), (cx + 20_000.0, cy)),
                altitude=100.0, speed=self.platform.cruise_speed), now)
        elif msg.kind == CMD_TRACK:
            radius = msg.value if msg.value > 0.0 else 100.0
            self.request_mission(MissionSpec(
                time=now, kind="target_tracking", mission_id=msg.command_id,
                target_id=msg.arg, radius=radius), now)
        elif msg.kind == CMD_RTL:
            self._queued_events.append("rtl_command")
        elif msg.kind == CMD_FAILSAFE:
            self._queued_events.append("failsafe")
        elif msg.kind == CMD_LAND:
            self.schedule_land(now)
            self._queued_events.append("land_command")

    # ----------------------------------------------------------------- orient

    def schedule_launch(self, t0: float) -> None:
        if self.taxi_start is None:
            self.taxi_start = t0 + self.rank * self.scenario.launch.spacing

    def schedule_land(self, t0: float) -> None:
        if self.land_slot is None:
            self.land_slot = t0 + self.rank * self.scenario.land.spacing

    def queue_event(self, event: str) -> None:
        self._queued_events.append(event)

    def request_mission(self, mspec: MissionSpec, now: float) -> None:
        """Accept a mission when airborne; otherwise log the rejection and
        keep it pending until the agent reaches MISSION mode."""
        if self.commander.mode in (MISSION, AVOID):
            commander_step(self.commander, "mission_command", now)
            self.activate_mission(mspec, now)
        else:
            commander_step(self.commander, "mission_command", now)  # rejected
            self.pending_mission = mspec

    def activate_mission(self, mspec: MissionSpec, now: float) -> None:
        """Deterministic shared computation: every agent derives the same
        groups, decomposition and allocation from the static home layout."""
        groups = form_groups(self.homes,
                             self.scenario.coordination_channel.range_m,
                             self.scenario.group_size_target, now)
        group = next(g for g in groups if self.agent_id in g.members)
        n = len(group.members)
        params: dict = {}
        pattern = None
        if mspec.kind == "formation_flight":
            pattern = make_pattern(mspec.pattern, n)
            params = {"n_leaders": len(pattern.leader_indices),
                      "route_start": mspec.route[0],
                      "slot_positions": _slot_world_positions(
                          pattern, mspec.route, group.group_id)}
        elif mspec.kind == "target_tracking":
            brief = self.scenario.targets[mspec.target_id].position
            params = {"target": brief}
        elif mspec.kind == "transit":
            params = {"goal": mspec.goal}
        mission = Mission(mspec.mission_id, mspec.kind, params, timestamp=now)
        tasks = decompose(mission, group)
        home_map = dict(self.homes)
        assignment = allocate_tasks(
            tasks, group, {a: home_map[a] for a in group.members},
            mission_id=mission.mission_id, proposer=min(group.members))
        self._adopt(mspec, group, pattern, tasks, assignment)

    def _adopt(self, mspec: MissionSpec, group: CoordinationGroup, pattern,
               tasks: Sequence[Task], assignment: Assignment) -> None:
        self.mission = mspec
        self.group = group
        self.pattern = pattern
        self.tasks = {t.task_id: t for t in tasks}
        self.assignment = assignment
        my_tasks = assignment.tasks_for(self.agent_id)
        task = self.tasks[my_tasks[0]]
        self.role = task.kind
        self.slot = None
        self.standoff_cfg = None
        self.segments = ()
        self.seg_index = 0
        self._done_length = 0.0
        self.leader_ids = ()
        self._frame_route = ()
        if mspec.kind == "formation_flight":
            order = [0] * len(group.members)
            for tid, aid in assignment.award_map().items():
                order[self.tasks[tid].slot_index] = aid
            self._order_columns(order, pattern, mspec)
            route = self._reference_route(mspec, group)
            self._frame_route = route
            plans = plan_formation(order, pattern, route)
            mine = plans[self.agent_id]
            self.role = mine.role
            self.segments = mine.segments
            self.slot = mine.formation_slot
            self.route_length = sum(s.length() for s in self.segments)
            self.leader_ids = tuple(order[i] for i in pattern.leader_indices)
        elif mspec.kind == "target_tracking":
            self.target_brief = tuple(self.scenario.targets[mspec.target_id].position)
            self.standoff_cfg = (mspec.target_id, mspec.radius,
                                 len(group.members), task.slot_index)
        elif mspec.kind == "transit":
            self.segments = tuple(plan_path(
                self.state.position(), mspec.goal, [],
                self.platform.min_turn_radius(),
                desired_speed=mspec.speed, desired_altitude=mspec.altitude))
            self.route_length = sum(s.length() for s in self.segments)

    def _order_columns(self, order: list[int], pattern,
                       mspec: MissionSpec) -> None:
        """Permute follower slots within each column so that slot depth
        matches the agents' along-route order.  Without this an agent can be
        assigned a slot ahead of a teammate it would have to overtake through
        the column, which collision avoidance blocks indefinitely.  Computed
        from the static home layout, so every agent derives the same result.
        """
        x0, y0 = mspec.route[0]
        chi = math.atan2(mspec.route[1][1] - y0, mspec.route[1][0] - x0)
        cos_c, sin_c = math.cos(chi), math.sin(chi)
        home_map = dict(self.homes)
        columns: dict[tuple[int, float], list[int]] = {}
        for k, (leader_idx, along, cross) in enumerate(pattern.slots):
            if leader_idx == k:
                continue
            columns.setdefault((leader_idx, cross), []).append(k)
        for idxs in columns.values():
            # Shallowest slot first; agent furthest along the route first.
            idxs.sort(key=lambda k: -pattern.slots[k][1])
            agents = sorted(
                (order[k] for k in idxs),
                key=lambda a: (-(home_map[a][0] * cos_c + home_map[a][1] * sin_c), a))
            for k, a in zip(idxs, agents):
                order[k] = a

    def _reference_route(self, mspec: MissionSpec,
                         group: CoordinationGroup) -> tuple[PathSegment, ...]:
        segs = tuple(
            PathSegment("straight", start=a, end=b, desired_speed=mspec.speed,
                        desired_altitude=mspec.altitude)
            for a, b in zip(mspec.route, mspec.route[1:]))
        # Each group flies its own lane, offset to the right of the route.
        return offset_route(segs, -GROUP_LANE_OFFSET * group.group_id)

    def _merge_assignment(self, wire: Assignment_, now: float) -> None:
        if self.assignment is None or wire.mission_id != self.assignment.mission_id:
            return
        remote = Assignment(wire.mission_id, wire.version, tuple(wire.awards),
                            proposer=self.assignment.proposer)
        merged = resolve_conflict(self.assignment, remote)
        if merged.awards != self.assignment.awards or merged.version != self.assignment.version:
            self._adopt(self.mission, self.group, self.pattern,
                        list(self.tasks.values()),
                        replace(merged, proposer=self.assignment.proposer))

    # ------------------------------------------------------------ decide/act

    def compute(self, t: float, dt: float, snapshot: dict[int, VehicleState],
                own_detection: Optional[Detection], tick: int,
                wind: WindField) -> StepResult:
        records: list = []
        outgoing = list(self._pending_out)
        self._pending_out = []

        for ev in self._queued_events:
            self._step_commander(ev, t, records)
        self._queued_events = []

        if own_detection is not None:
            self._store_report(self.agent_id, t, own_detection)
            outgoing.append((own_detection, PRIO_COORDINATION, self._peer_ids()))

        if (self.pending_mission is not None
                and self.commander.mode in (MISSION, AVOID)):
            mspec = self.pending_mission
            self.pending_mission = None
            self._step_commander("mission_command", t, records)
            self.activate_mission(mspec, t)

        if (self.commander.mode == STANDBY and self.taxi_start is not None
                and t >= self.taxi_start):
            self.taxi_start = None  # one shot; re-arm via a new launch command
            self._step_commander("launch_command", t, records)
            self._taxi_progress = 0.0

        mode = self.commander.mode
        guidance: Optional[GuidanceCommand] = None
        actuators = False

        if mode in (STANDBY, FAILSAFE):
            new_state = hold_state(self.state, dt)
        elif mode == TAXI:
            actuators = True
            new_state = self._taxi_step(t, dt, records)
        elif mode == LAND:
            actuators = True
            new_state = self._land_step(t, dt, records)
        else:
            actuators = True
            guidance = self._guidance(t, tick, snapshot, records)
            self.last_cmd = guidance
            controls = lowlevel_step(
                self.platform, self.state, guidance.desired_course,
                guidance.desired_speed, guidance.desired_altitude, self.table,
                turn_rate_ff=guidance.turn_rate)
            new_state = step_dynamics(self.platform, self.state, controls,
                                      wind, dt)
            self._post_flight_events(new_state, t + dt, records)

        if mode not in (STANDBY, FAILSAFE):
            self.airborne_time += dt
        self._emit_periodic(t, tick, outgoing)

        self.state = new_state
        return StepResult(new_state, mode, actuators, guidance, records, outgoing)

    # --------------------------------------------------------- mode handlers

    def _taxi_step(self, t: float, dt: float, records: list) -> VehicleState:
        spec = self.scenario.launch
        self._taxi_progress += spec.taxi_speed * dt
        st = VehicleState(
            east=self.home[0] + min(self._taxi_progress, spec.taxi_distance),
            north=self.home[1], altitude=0.0, airspeed=spec.taxi_speed,
            course=0.0, roll=0.0, pitch=0.0, timestamp=t + dt)
        if self._taxi_progress >= spec.taxi_distance - 1e-9:
            self._step_commander("taxi_complete", t + dt, records)
            records.append(("liftoff", t + dt))
        return st

    def _land_step(self, t: float, dt: float, records: list) -> VehicleState:
        spec = self.scenario.land
        st = self.state
        if st.altitude > 0.0:
            speed = max(self.scenario.launch.taxi_speed, st.airspeed - 2.0 * dt)
            alt = max(0.0, st.altitude - LAND_SINK_RATE * dt)
            return VehicleState(
                east=st.east + speed * math.cos(st.course) * dt,
                north=st.north + speed * math.sin(st.course) * dt,
                altitude=alt, airspeed=speed, course=st.course,
                roll=0.0, pitch=0.0, timestamp=t + dt)
        if self._ground_progress is None:
            self._ground_progress = 0.0
        self._ground_progress += self.scenario.launch.taxi_speed * dt
        st = VehicleState(
            east=st.east + self.scenario.launch.taxi_speed * math.cos(st.course) * dt,
            north=st.north + self.scenario.launch.taxi_speed * math.sin(st.course) * dt,
            altitude=0.0, airspeed=self.scenario.launch.taxi_speed,
            course=st.course, roll=0.0, pitch=0.0, timestamp=t + dt)
        if self._ground_progress >= spec.taxi_distance - 1e-9:
            self._step_commander("touchdown", t + dt, records)
            records.append(("landed", t + dt))
            self._ground_progress = None
            self._rtl_seg = None
        return st

    def _post_flight_events(self, new_state: VehicleState, now: float,
                            records: list) -> None:
        mode = self.commander.mode
        if (mode == LAUNCH
                and new_state.altitude >= self.scenario.launch.climb_altitude - 1.0):
            self._step_commander("reached_altitude", now, records)
        elif mode == RTL:
            d = math.hypot(new_state.east - self.home[0],
                           new_state.north - self.home[1])
            if (d <= self.scenario.land.capture_radius
                    and self.land_slot is not None and now >= self.land_slot):
                self.land_slot = None  # one shot, as with taxi_start
                self._step_commander("at_home", now, records)
        battery = self.battery()
        if (battery < BATTERY_LOW_FRACTION and not self._battery_low_sent
                and mode in (MISSION, AVOID)):
            self._battery_low_sent = True
            self.schedule_land(now)
            self._step_commander("battery_low", now, records)

    # -------------------------------------------------------------- guidance

    def _guidance(self, t: float, tick: int, snapshot: dict,
                  records: list) -> GuidanceCommand:
        if tick % self._guidance_div != 0 and self.last_cmd is not None:
            return self.last_cmd
        mode = self.commander.mode
        if mode == LAUNCH:
            return GuidanceCommand(self.state.course, self.platform.cruise_speed,
                                   self.scenario.launch.climb_altitude, "path_follow")
        if mode == RTL:
            return self._rtl_guidance(t)
        # MISSION / AVOID: collision check first.
        neighbors = [self._dead_reckon(p, t) for p in self.peers
                     if p != self.agent_id and t - self.peers[p].timestamp <= 1.0]
        acmd = avoid(self.platform, self.state, neighbors, (), self.gains)
        if mode == MISSION and acmd is not None:
            self._step_commander("avoid_triggered", t, records)
            mode = self.commander.mode
        elif mode == AVOID and acmd is None:
            self._step_commander("threat_cleared", t, records)
            mode = self.commander.mode
        if mode == AVOID and acmd is not None:
            return acmd
        return self._mission_guidance(t)

    def _rtl_guidance(self, t: float) -> GuidanceCommand:
        d = math.hypot(self.state.east - self.home[0],
                       self.state.north - self.home[1])
        if d <= self.scenario.land.capture_radius:
            return vf_orbit(self.state, self.home, 100.0,
                            desired_speed=self.platform.cruise_speed,
                            desired_altitude=self.scenario.launch.climb_altitude,
                            gains=self.gains)
        if self._rtl_seg is None:
            self._rtl_seg = PathSegment(
                "straight", start=self.state.position(), end=self.home,
                desired_speed=self.platform.cruise_speed,
                desired_altitude=self.scenario.launch.climb_altitude)
        return vf_straight(self.state, self._rtl_seg, self.gains)

    def _mission_guidance(self, t: float) -> GuidanceCommand:
        if self.role == "leader" and self.segments:
            return self._leader_guidance(t)
        if self.role == "follower" and self.slot is not None:
            return self._follower_guidance(t)
        if self.role == "tracker" and self.standoff_cfg is not None:
            return self._tracker_guidance(t)
        if self.role == "transit" and self.segments:
            return self._transit_guidance(t)
        # No task: loiter over home.
        return vf_orbit(self.state, self.home, 150.0,
                        desired_speed=self.platform.cruise_speed,
                        desired_altitude=100.0, gains=self.gains)

    def _advance_segments(self) -> PathSegment:
        seg = self.segments[self.seg_index]
        while (seg.kind == "straight"
               and path_progress(self.state, seg) >= seg.length()
               and self.seg_index < len(self.segments) - 1):
            self._done_length += seg.length()
            self.seg_index += 1
            seg = self.segments[self.seg_index]
        return seg

    def _leader_guidance(self, t: float) -> GuidanceCommand:
        seg = self._advance_segments()
        prog = max(0.0, path_progress(self.state, seg))
        if self.route_length > 0.0:
            self.my_fraction = min(1.0, (self._done_length + prog) / self.route_length)
        # Progress consensus with the other leaders, exchanged as route
        # fractions and rescaled to this segment for the consensus law.
        peers = [(pid, frac * seg.length())
                 for pid, (rt, frac) in self.peer_progress.items()
                 if pid in self.leader_ids and pid != self.agent_id
                 and t - rt <= 2.0]
        return coordinated_path_follow(self.platform, self.state, seg, peers,
                                       self.my_fraction * seg.length(), self.gains)

    def _follower_guidance(self, t: float) -> GuidanceCommand:
        track = self.peers.get(self.slot.leader_id)
        if track is None or t - track.timestamp > self.gains.staleness_bound:
            stale = track if track is not None else replace(
                self.state, timestamp=-math.inf)
            return follow_leader(self.platform, self.state, stale, self.slot,
                                 now=t, last_command=self.last_cmd,
                                 gains=self.gains)
        est = self._dead_reckon(self.slot.leader_id, t)
        # Slot geometry is anchored to the route course, not the leader's
        # instantaneous heading: gust-induced heading jitter would otherwise
        # sweep deep slots sideways faster than a roll-limited follower can
        # track (the error scales with the slot's lever arm).
        chi_r = self._route_course_at(est.east, est.north)
        if chi_r is not None:
            est = replace(est, course=chi_r)
        slot = self._overtake_slot(t, est)
        return follow_leader(self.platform, self.state, est, slot,
                             now=t, last_command=self.last_cmd, gains=self.gains)

    def _route_course_at(self, east: float, north: float) -> Optional[float]:
        """Course of the formation-route segment nearest to a point."""
        best_d, best_chi = math.inf, None
        for seg in self._frame_route:
            if seg.kind != "straight":
                continue
            sx, sy = seg.start
            ex, ey = seg.end
            vx, vy = ex - sx, ey - sy
            L2 = vx * vx + vy * vy
            if L2 <= 0.0:
                continue
            u = max(0.0, min(1.0, ((east - sx) * vx + (north - sy) * vy) / L2))
            d = math.hypot(east - (sx + u * vx), north - (sy + u * vy))
            if d < best_d:
                best_d, best_chi = d, seg.course()
        return best_chi

    def _overtake_slot(self, t: float, leader_est: VehicleState) -> FormationSlot:
        """Sidestep teammates sitting in the column between here and the slot.

        Catching up along a column would otherwise drive straight through a
        teammate holding a deeper slot; tracking a laterally offset copy of
        the slot keeps enough clearance that collision avoidance never has to
        intervene, then relaxes back once the corridor is clear.
        """
        slot = self.slot
        cos_l, sin_l = math.cos(leader_est.course), math.sin(leader_est.course)

        def rel(st: VehicleState) -> tuple[float, float]:
            dx = st.east - leader_est.east
            dy = st.north - leader_est.north
            return (dx * cos_l + dy * sin_l, -dx * sin_l + dy * cos_l)

        my_along, my_cross = rel(self.state)
        blocked = False
        for pid in (self.group.members if self.group else ()):
            if pid in (self.agent_id, slot.leader_id) or pid not in self.peers:
                continue
            if t - self.peers[pid].timestamp > 1.0:
                continue
            pa, pc = rel(self._dead_reckon(pid, t))
            if (abs(pc - slot.cross_track) < 25.0
                    and my_along + 5.0 < pa < slot.along_track + 25.0):
                blocked = True
                break
        if blocked:
            if self._pass_side == 0.0:
                self._pass_side = 1.0 if my_cross >= slot.cross_track else -1.0
            self._pass_until = t + 3.0  # hold the sidestep; no flip-flopping
        elif t >= self._pass_until:
            self._pass_side = 0.0
        if self._pass_side != 0.0:
            return replace(slot,
                           cross_track=slot.cross_track + 35.0 * self._pass_side)
        return slot

    def _tracker_guidance(self, t: float) -> GuidanceCommand:
        target_id, radius, n, idx = self.standoff_cfg
        fused = self.fused_estimate(target_id, t)
        if fused is None:
            center, vel = self.target_brief, (0.0, 0.0)
        else:
            center, vel = fused
        spec = StandoffSpec(tuple(center), tuple(vel), radius, n, idx)
        phases = [orbit_phase(self._dead_reckon(pid, t), center)
                  for pid in (self.group.members if self.group else ())
                  if pid != self.agent_id and pid in self.peers
                  and t - self.peers[pid].timestamp <= 1.0]
        return standoff_track(self.platform, self.state, spec, phases, self.gains)

    def _transit_guidance(self, t: float) -> GuidanceCommand:
        seg = self._advance_segments()
        return vf_straight(self.state, seg, self.gains)

    def _dead_reckon(self, peer_id: int, t: float) -> VehicleState:
        """Advance a heartbeat-derived peer state to now along its course."""
        st = self.peers[peer_id]
        dtx = (t - st.timestamp) + self._latency_comp
        return replace(
            st,
            east=st.east + st.airspeed * math.cos(st.course) * dtx,
            north=st.north + st.airspeed * math.sin(st.course) * dtx,
            timestamp=t)

    # ----------------------------------------------------------------- comms

    def battery(self) -> float:
        return max(0.0, 1.0 - self.airborne_time / self.platform.endurance)

    def _peer_ids(self) -> tuple[int, ...]:
        if self.group is not None:
            return tuple(m for m in self.group.members if m != self.agent_id)
        return ()

    def _emit_periodic(self, t: float, tick: int, outgoing: list) -> None:
        peers = self._peer_ids()
        if self.commander.mode == FAILSAFE:
            return
        if tick % self._hb_div == 0:
            st = self.state
            # Every fifth heartbeat also goes to the ground station, giving
            # the operator a 1 Hz link-freshness signal at negligible cost.
            recipients = peers
            if tick % (self._hb_div * 5) == 0:
                recipients = peers + (GCS_ID,)
            if recipients:
                outgoing.append((Heartbeat(st.east, st.north, st.altitude,
                                           st.airspeed, st.course,
                                           self.battery()),
                                 PRIO_TELEMETRY, recipients))
        if not peers:
            return
        if tick % self._coord_div == 0:
            if self.role == "leader":
                outgoing.append((PlanProgress(self.my_fraction),
                                 PRIO_COORDINATION, peers))
            if self.assignment is not None:
                outgoing.append((Assignment_(self.assignment.mission_id,
                                             self.assignment.version,
                                             self.assignment.awards),
                                 PRIO_COORDINATION, peers))

    # ------------------------------------------------------------- commander

    def _step_commander(self, event: str, now: float, records: list) -> None:
        before = self.commander.mode
        n_trans = len(self.commander.transitions)
        n_rej = len(self.commander.rejections)
        commander_step(self.commander, event, now)
        if len(self.commander.transitions) > n_trans:
            records.append(("event", now, "transition",
                            {"from": before, "to": self.commander.mode,
                             "event": event}))
        elif len(self.commander.rejections) > n_rej:
            records.append(("event", now, "rejection",
                            {"mode": before, "event": event}))
