"""Deterministic simulation engine.

Each tick runs three phases:

1. observe (sequential): deliver due network traffic, poll inboxes, apply the
   scripted mission timeline and GCS commands;
2. compute (sequential or thread-parallel): every agent independently derives
   its next vehicle state and outgoing traffic from a read-only snapshot;
3. commit (sequential, fixed agent order): states are logged, traffic is
   queued onto the channels, sensors and targets advance.

Because phase 2 touches only per-agent data, the parallel mode is required to
produce bit-identical run logs to the sequential reference mode.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from shapely.geometry import LineString, Polygon
from shapely.prepared import prep

from .agent import CMD_KINDS, GCS_ID, Agent, StepResult
from .airframe import VehicleState
from .commander import AVOID, FAILSAFE, LAND, LAUNCH, MISSION, RTL, STANDBY, TAXI
from .guidance import desired_slot_position
from .metrics import MetricsReport, ampe, land_rate, launch_rate
from .scenario import MissionSpec, ScenarioConfig
from .swarmnet import (PRIO_COMMAND, Ack, Command, CommManager, Detection,
                       Heartbeat, SimChannel)

MODES = (STANDBY, TAXI, LAUNCH, MISSION, AVOID, RTL, LAND, FAILSAFE)
MODE_INDEX = {m: i for i, m in enumerate(MODES)}

_STATE_PACK = struct.Struct("<dB7dB")


class RunLog:
    """Append-only run record with a streaming content digest.

    State and guidance records enter the digest always; they are retained in
    memory (for replay export and metrics) only when record_states is set.
    Event records are always retained.
    """

    def __init__(self, record_states: bool = True):
        self._h = hashlib.sha256()
        self.record_states = record_states
        self.states: list[dict] = []
        self.events: list[dict] = []
        self.n_state_records = 0
        self._last_t = -math.inf

    def _monotone(self, t: float) -> None:
        if t < self._last_t - 1e-9:
            raise ValueError("run log timestamps must be monotone")
        self._last_t = max(self._last_t, t)

    def state(self, t: float, agent_id: int, st: VehicleState, mode: str,
              actuators: bool) -> None:
        self._monotone(t)
        self._h.update(_STATE_PACK.pack(
            t, agent_id & 0xFF, st.east, st.north, st.altitude, st.airspeed,
            st.course, st.roll, st.pitch,
            (MODE_INDEX[mode] << 1) | int(actuators)))
        self.n_state_records += 1
        if self.record_states:
            self.states.append({
                "kind": "state", "t": round(t, 6), "agent": agent_id,
                "east": st.east, "north": st.north, "altitude": st.altitude,
                "airspeed": st.airspeed, "course": st.course,
                "mode": mode, "actuators": actuators,
            })

    def guidance(self, t: float, agent_id: int, cmd) -> None:
        self._h.update(struct.pack(
            "<dB3d", t, agent_id & 0xFF, cmd.desired_course,
            cmd.desired_speed, cmd.desired_altitude))
        self._h.update(cmd.source.encode())

    def event(self, t: float, agent_id: int, kind: str, data: dict) -> None:
        self._monotone(t)
        payload = json.dumps(data, sort_keys=True, default=str)
        self._h.update(struct.pack("<dB", t, agent_id & 0xFF))
        self._h.update(kind.encode() + payload.encode())
        self.events.append({"kind": "event", "t": round(t, 6),
                            "agent": agent_id, "event": kind, "data": data})

    @property
    def digest(self) -> str:
        return self._h.hexdigest()

    def to_ndjson(self, path: str) -> None:
        records = sorted(self.states + self.events,
                         key=lambda r: (r["t"], r["agent"],
                                        0 if r["kind"] == "state" else 1))
        with open(path, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @staticmethod
    def read_ndjson(path: str) -> list[dict]:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]


@dataclass
class TargetTruth:
    position: list  # mutable [east, north]
    velocity: tuple[float, float]
    shelters: list  # prepared shapely polygons
    raw_shelters: list


class SimKernel:
    """Runs one scenario tick by tick; see module docstring for phases."""

    def __init__(self, scenario: ScenarioConfig, parallel: bool = False,
                 workers: int = 4):
        problems = scenario.validate()
        if problems:
            raise ValueError("invalid scenario: " + "; ".join(problems))
        self.scenario = scenario
        self.parallel = parallel
        self.dt = scenario.dt
        self.n_ticks = round(scenario.duration / self.dt)
        self.tick = 0
        self.wind = scenario.wind

        self.coord_channel = SimChannel(scenario.coordination_channel)
        self.bulk_channel = SimChannel(scenario.bulk_channel)

        self.ids = sorted(a for a, _, _ in scenario.fleet)
        self.comms = {aid: CommManager(aid, self.coord_channel)
                      for aid in self.ids}
        self.gcs_comm = CommManager(GCS_ID, self.coord_channel)
        self.gcs_position = (0.0, 0.0)

        self.agents: dict[int, Agent] = {}
        snapshot: dict[int, VehicleState] = {}
        for aid, platform, home in sorted(scenario.fleet):
            if scenario.start_airborne:
                st = VehicleState(home[0], home[1], 100.0,
                                  platform.cruise_speed, 0.0, 0.0, 0.0, 0.0)
            else:
                st = VehicleState(home[0], home[1], 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
            agent = Agent(aid, platform, home, scenario, st)
            if scenario.start_airborne:
                for ev in ("launch_command", "taxi_complete", "reached_altitude"):
                    agent._step_commander(ev, 0.0, [])
            self.agents[aid] = agent
            snapshot[aid] = st
        self._snapshot = snapshot

        self.log = RunLog(scenario.record_states)
        self.formation_records: list[tuple[float, list[float]]] = []
        self.launch_taus: dict[int, float] = {}
        self.land_taus: dict[int, float] = {}
        self._launch_t0: Optional[float] = None
        self._land_t0: Optional[float] = None

        self.targets = [
            TargetTruth(list(t.position), t.velocity,
                        [prep(Polygon(poly)) for poly in t.shelters],
                        [Polygon(poly) for poly in t.shelters])
            for t in scenario.targets
        ]
        self._sensor_rng = np.random.default_rng(scenario.sensor.seed)
        self._pending_detections: dict[int, object] = {}
        self.detection_history: list[tuple[float, int, int]] = []
        self.fusion_history: list[tuple[float, int, Optional[tuple]]] = []

        self._missions = sorted(scenario.missions, key=lambda m: m.time)
        self._mission_idx = 0
        self.gcs_acks: list[tuple[float, int, int]] = []
        self.gcs_heard: dict[int, float] = {}
        self.last_formation_errors: dict[int, float] = {}
        self._next_command_id = 1

        hz = scenario.rates
        self._guidance_div = hz.lowlevel_hz // hz.guidance_hz
        self._coord_div = hz.lowlevel_hz // hz.coordination_hz
        self._executor = ThreadPoolExecutor(max_workers=workers) if parallel else None

    # ----------------------------------------------------------------- steps

    @property
    def time(self) -> float:
        return self.tick * self.dt

    def step(self) -> None:
        t = self.time
        dt = self.dt

        # Phase 1: observe.
        for channel in (self.coord_channel, self.bulk_channel):
            for rid, sender, frame in channel.deliver_due(t):
                if rid == GCS_ID:
                    self.gcs_comm.receive(t, sender, frame)
                elif rid in self.comms:
                    self.comms[rid].receive(t, sender, frame)
        for aid in self.ids:
            msgs = self.comms[aid].poll(t)
            if msgs:
                self.agents[aid].ingest(t, msgs)
        for sender, msg in self.gcs_comm.poll(t):
            if isinstance(msg, Ack):
                self.gcs_acks.append((t, sender, msg.command_id))
            elif isinstance(msg, Heartbeat):
                self.gcs_heard[sender] = t

        while (self._mission_idx < len(self._missions)
               and self._missions[self._mission_idx].time <= t + 1e-9):
            self._issue(self._missions[self._mission_idx], t)
            self._mission_idx += 1

        # Prime the shared gust cache before any parallel access.
        self.wind.sample(t)

        # Phase 2: compute.
        detections = self._pending_detections
        self._pending_detections = {}
        snapshot = self._snapshot

        def run_one(aid: int) -> StepResult:
            return self.agents[aid].compute(t, dt, snapshot,
                                            detections.get(aid), self.tick,
                                            self.wind)

        if self._executor is not None:
            results = list(self._executor.map(run_one, self.ids))
        else:
            results = [run_one(aid) for aid in self.ids]

        # Phase 3: commit (fixed agent order).
        new_snapshot: dict[int, VehicleState] = {}
        tick_events: list[tuple[float, int, str, dict]] = []
        for aid, res in zip(self.ids, results):
            new_snapshot[aid] = res.state
            for rec in res.records:
                if rec[0] == "liftoff":
                    if aid not in self.launch_taus and self._launch_t0 is not None:
                        self.launch_taus[aid] = rec[1] - self._launch_t0
                    tick_events.append((rec[1], aid, "liftoff", {}))
                elif rec[0] == "landed":
                    if aid not in self.land_taus and self._land_t0 is not None:
                        self.land_taus[aid] = rec[1] - self._land_t0
                    tick_events.append((rec[1], aid, "landed", {}))
                elif rec[0] == "event":
                    tick_events.append((rec[1], aid, rec[2], rec[3]))
        for te, aid, kind, data in sorted(tick_events,
                                          key=lambda e: (e[0], e[1], e[2])):
            self.log.event(te, aid, kind, data)
        for aid, res in zip(self.ids, results):
            # res.mode is the mode in effect while the step ran, so the
            # (mode, actuators) pair in the log is internally consistent even
            # on ticks where the step itself transitions the commander.
            self.log.state(t + dt, aid, res.state, res.mode, res.actuators)
            if res.guidance is not None and self.tick % self._guidance_div == 0:
                self.log.guidance(t, aid, res.guidance)
            for msg, prio, recipients in res.outgoing:
                pairs = [(rid, self.gcs_position if rid == GCS_ID
                          else snapshot[rid].position())
                         for rid in recipients]
                self.comms[aid].priority_enqueue(msg, prio, pairs,
                                                 snapshot[aid].position())
            self.comms[aid].pump(t)
        self._snapshot = new_snapshot

        if self.tick % self._guidance_div == 0:
            self._record_formation(t + dt)
        if self.tick % self._coord_div == 0:
            self._sense(t + dt)
        for tg in self.targets:
            tg.position[0] += tg.velocity[0] * dt
            tg.position[1] += tg.velocity[1] * dt
        self.tick += 1

    def run(self, ampe_window: Optional[tuple[float, float]] = None
            ) -> tuple[RunLog, MetricsReport]:
        while self.tick < self.n_ticks:
            self.step()
        self.log.event(self.scenario.duration, GCS_ID, "channel_counters",
                       self.coord_channel.counters.as_dict())
        return self.log, self.metrics(ampe_window)

    # ------------------------------------------------------------ scheduling

    def _issue(self, mspec: MissionSpec, t: float) -> None:
        self.log.event(t, GCS_ID, "mission_issued",
                       {"kind": mspec.kind, "mission_id": mspec.mission_id})
        if mspec.kind == "launch":
            self._launch_t0 = t
            for agent in self.agents.values():
                agent.schedule_launch(t)
        elif mspec.kind in ("formation_flight", "target_tracking", "transit"):
            for agent in self.agents.values():
                agent.request_mission(mspec, t)
        elif mspec.kind == "rtl":
            for agent in self.agents.values():
                agent.queue_event("rtl_command")
        elif mspec.kind == "land":
            self._land_t0 = t
            for agent in self.agents.values():
                agent.schedule_land(t)
                agent.queue_event("land_command")
        else:
            raise ValueError(f"unknown scripted mission kind: {mspec.kind}")

    def send_gcs_command(self, kind: str, arg: int = 0, value: float = 0.0,
                         command_id: Optional[int] = None) -> int:
        """Inject one GCS command frame to every agent; returns command id."""
        if kind not in CMD_KINDS:
            raise ValueError(f"unknown command kind: {kind}")
        if command_id is None:
            command_id = self._next_command_id
            self._next_command_id += 1
        msg = Command(command_id, CMD_KINDS[kind], arg, value)
        pairs = [(aid, self._snapshot[aid].position()) for aid in self.ids]
        self.gcs_comm.priority_enqueue(msg, PRIO_COMMAND, pairs,
                                       self.gcs_position)
        self.gcs_comm.pump(self.time)
        self.log.event(self.time, GCS_ID, "gcs_command",
                       {"kind": kind, "command_id": command_id, "arg": arg})
        return command_id

    # --------------------------------------------------------------- sensing

    def _sense(self, t: float) -> None:
        """Kernel-side detection model, evaluated sequentially so the sensor
        noise stream is deterministic; results feed agents next tick."""
        sensor = self.scenario.sensor
        for aid in self.ids:
            agent = self.agents[aid]
            if (agent.mission is None
                    or agent.mission.kind != "target_tracking"
                    or agent.commander.mode not in (MISSION, AVOID)):
                continue
            st = self._snapshot[aid]
            for ti, tg in enumerate(self.targets):
                dx = tg.position[0] - st.east
                dy = tg.position[1] - st.north
                if math.hypot(dx, dy) > sensor.footprint_radius:
                    continue
                los = LineString([st.position(), tuple(tg.position)])
                if any(shelter.intersects(los) for shelter in tg.shelters):
                    continue
                noise = self._sensor_rng.normal(0.0, sensor.noise_stddev, 2)
                self._pending_detections[aid] = Detection(
                    ti, tg.position[0] + noise[0], tg.position[1] + noise[1],
                    tg.velocity[0], tg.velocity[1])
                self.detection_history.append((t, aid, ti))
                break
            cfg = agent.standoff_cfg
            if cfg is not None:
                self.fusion_history.append(
                    (t, aid, agent.fused_estimate(cfg[0], t)))

    # --------------------------------------------------------------- metrics

    def _record_formation(self, t: float) -> None:
        errors: list[float] = []
        for aid in self.ids:
            agent = self.agents[aid]
            if (agent.mission is None
                    or agent.mission.kind != "formation_flight"
                    or agent.commander.mode not in (MISSION, AVOID)):
                continue
            st = self._snapshot[aid]
            if agent.role == "follower" and agent.slot is not None:
                lead = self._snapshot.get(agent.slot.leader_id)
                if lead is None:
                    continue
                # Slot frame follows the route course, matching guidance.
                chi_r = agent._route_course_at(lead.east, lead.north)
                if chi_r is not None:
                    lead = replace(lead, course=chi_r)
                des = desired_slot_position(lead, agent.slot)
            elif agent.role == "leader" and agent.segments:
                des = _closest_on_polyline(agent.segments, st.position())
            else:
                continue
            err = math.hypot(des[0] - st.east, des[1] - st.north)
            errors.append(err)
            self.last_formation_errors[aid] = err
        if errors:
            self.formation_records.append((t, errors))

    def metrics(self, ampe_window: Optional[tuple[float, float]] = None
                ) -> MetricsReport:
        report = MetricsReport(duration=self.scenario.duration,
                               n_agents=len(self.ids))
        if self.formation_records:
            if ampe_window is None:
                skip = min(120.0, self.scenario.duration / 3.0)
                ampe_window = (skip, self.scenario.duration)
            report.ampe = ampe(self.formation_records, ampe_window)
        if self.launch_taus:
            taus = sorted(self.launch_taus.values())
            report.launch_times = taus
            report.launch_rate = launch_rate(taus, len(self.ids)).value
        if self.land_taus:
            taus = sorted(self.land_taus.values())
            report.land_times = taus
            report.land_rate = land_rate(taus, len(self.ids)).value
        report.channel_counters = {
            "latency_sensitive": self.coord_channel.counters.as_dict(),
            "latency_insensitive": self.bulk_channel.counters.as_dict(),
        }
        report.extras["in_flight"] = {
            "latency_sensitive": self.coord_channel.in_flight,
            "latency_insensitive": self.bulk_channel.in_flight,
        }
        return report

    def telemetry_snapshot(self) -> dict:
        """Current swarm view in gateway wire shape."""
        t = self.time
        agents = []
        for aid in self.ids:
            st = self._snapshot[aid]
            agent = self.agents[aid]
            heard = self.gcs_heard.get(aid)
            agents.append({
                "id": aid,
                "east": st.east, "north": st.north, "altitude": st.altitude,
                "airspeed": st.airspeed, "course": st.course,
                "mode": agent.commander.mode,
                "battery": agent.battery(),
                "group": agent.group.group_id if agent.group else None,
                "role": agent.role,
                "link_age": None if heard is None else t - heard,
                "formation_error": self.last_formation_errors.get(aid),
            })
        mpe = None
        if self.formation_records:
            errs = self.formation_records[-1][1]
            mpe = sum(errs) / len(errs)
        return {"t": t, "agents": agents, "mpe": mpe}


def _closest_on_polyline(segments, point: tuple[float, float]
                         ) -> tuple[float, float]:
    best = None
    best_d = math.inf
    px, py = point
    for seg in segments:
        if seg.kind != "straight":
            continue
        ax, ay = seg.start
        bx, by = seg.end
        dx, dy = bx - ax, by - ay
        ln2 = dx * dx + dy * dy
        s = 0.0 if ln2 == 0.0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / ln2))
        cx, cy = ax + s * dx, ay + s * dy
        d = math.hypot(px - cx, py - cy)
        if d < best_d:
            best_d, best = d, (cx, cy)
    return best if best is not None else point
