"""Distributed coordination: group formation, mission decomposition, auction
allocation, conflict resolution and the blocking/non-blocking task scheduler.

Every agent runs the same deterministic computations over gossiped state, so
groups and decompositions agree without a central role.  Assignments converge
through a commutative, idempotent merge (resolve_conflict) gossiped over the
latency-sensitive channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

FORMATION_FLIGHT = "formation_flight"
TARGET_TRACKING = "target_tracking"
TRANSIT = "transit"

MISSION_KINDS = (FORMATION_FLIGHT, TARGET_TRACKING, TRANSIT)

LEADER_BID_WEIGHT = 0.9
DEFAULT_WATCHDOG_TIMEOUT = 120.0


class AllocationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Mission:
    mission_id: int
    kind: str
    parameters: dict = field(default_factory=dict)
    issued_by: str = "gcs"
    timestamp: float = 0.0

    def __post_init__(self):
        if self.kind not in MISSION_KINDS:
            raise ValueError(f"unknown mission kind: {self.kind}")


@dataclass(frozen=True)
class CoordinationGroup:
    group_id: int
    members: tuple[int, ...]
    formed_at: float = 0.0


@dataclass(frozen=True)
class Task:
    task_id: int
    kind: str  # leader | follower | tracker | transit
    start: tuple[float, float]
    priority: int = 1  # lower = more urgent
    blocking: bool = False
    slot_index: int = 0  # pattern slot / standoff index


@dataclass(frozen=True)
class Assignment:
    """Task awards for one mission within one group."""

    mission_id: int
    version: int
    awards: tuple[tuple[int, int], ...]  # (task_id, agent_id), sorted by task
    proposer: int = 0

    def award_map(self) -> dict[int, int]:
        return dict(self.awards)

    def tasks_for(self, agent_id: int) -> tuple[int, ...]:
        return tuple(t for t, a in self.awards if a == agent_id)


def _sorted_awards(m: dict[int, int]) -> tuple[tuple[int, int], ...]:
    return tuple(sorted(m.items()))


def form_groups(members: Sequence[tuple[int, tuple[float, float]]],
                comm_range: float, group_size_target: int,
                now: float = 0.0) -> list[CoordinationGroup]:
    """Split the swarm into groups: connected components of the proximity
    graph, chunked along the principal spatial axis to the target size."""
    if comm_range <= 0.0:
        raise ValueError("comm_range must be positive")
    for _, pos in members:
        if not all(math.isfinite(c) for c in pos):
            raise ValueError("non-finite member position")
    ids = [m[0] for m in members]
    pos = {m[0]: m[1] for m in members}

    # Connected components (union-find over pairwise range checks).
    parent = {i: i for i in ids}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for idx, a in enumerate(ids):
        for b in ids[idx + 1:]:
            d = math.hypot(pos[a][0] - pos[b][0], pos[a][1] - pos[b][1])
            if d <= comm_range:
                parent[find(a)] = find(b)

    comps: dict[int, list[int]] = {}
    for i in ids:
        comps.setdefault(find(i), []).append(i)

    groups: list[CoordinationGroup] = []
    gid = 0
    for root in sorted(comps, key=lambda r: min(comps[r])):
        comp = sorted(comps[root])
        n_chunks = max(1, math.ceil(len(comp) / group_size_target))
        if n_chunks == 1:
            ordered = comp
        else:
            pts = np.array([pos[i] for i in comp])
            centered = pts - pts.mean(axis=0)
            _, _, vt = np.linalg.svd(centered, full_matrices=False)
            axis = vt[0]
            if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
                axis = -axis  # fix sign for determinism
            proj = centered @ axis
            ordered = [i for _, _, i in sorted(zip(proj, comp, comp))]
        # Chunk sizes as equal as possible, each <= target.
        base = len(ordered) // n_chunks
        extra = len(ordered) % n_chunks
        start = 0
        for c in range(n_chunks):
            size = base + (1 if c < extra else 0)
            chunk = ordered[start:start + size]
            start += size
            groups.append(CoordinationGroup(gid, tuple(sorted(chunk)), now))
            gid += 1
    return groups


def decompose(mission: Mission, group: CoordinationGroup,
              formation_patterns: Optional[dict] = None) -> list[Task]:
    """Break a mission into one task per group member."""
    n = len(group.members)
    base_id = mission.mission_id * 1000 + group.group_id * 100
    if mission.kind == FORMATION_FLIGHT:
        n_leaders = mission.parameters.get("n_leaders")
        if n_leaders is None:
            # Default grouping: 2 leaders per 7-member group, scaled.
            n_leaders = max(1, round(n * 2 / 7))
        n_leaders = min(n_leaders, n)
        route_start = tuple(mission.parameters.get("route_start", (0.0, 0.0)))
        # Per-slot start positions let the auction match agents to the
        # geometrically nearest slot; fall back to a shared route start.
        slot_positions = mission.parameters.get("slot_positions")
        tasks = []
        for k in range(n):
            start = tuple(slot_positions[k]) if slot_positions else route_start
            kind = "leader" if k < n_leaders else "follower"
            tasks.append(Task(base_id + k, kind, start,
                              priority=0 if kind == "leader" else 1,
                              blocking=False, slot_index=k))
        return tasks
    if mission.kind == TARGET_TRACKING:
        tgt = tuple(mission.parameters.get("target", (0.0, 0.0)))
        return [
            Task(base_id + k, "tracker", tgt, priority=0, blocking=False,
                 slot_index=k)
            for k in range(n)
        ]
    if mission.kind == TRANSIT:
        goal = tuple(mission.parameters.get("goal", (0.0, 0.0)))
        return [
            Task(base_id + k, "transit", goal, priority=1,
                 blocking=bool(mission.parameters.get("blocking", False)),
                 slot_index=k)
            for k in range(n)
        ]
    raise ValueError(f"unsupported mission kind: {mission.kind}")


def bid_cost(task: Task, position: tuple[float, float]) -> float:
    """An agent's bid for a task: distance to the task start, leader tasks
    discounted so nearer agents take the lead."""
    bid = math.hypot(position[0] - task.start[0], position[1] - task.start[1])
    if task.kind == "leader":
        bid *= LEADER_BID_WEIGHT
    return bid


def allocate_tasks(tasks: Sequence[Task], group: CoordinationGroup,
                   states: dict[int, tuple[float, float]],
                   mission_id: int = 0, proposer: int = 0,
                   version: int = 1) -> Assignment:
    """Market-based auction allocation (Bertsekas forward auction).

    Agents bid distance-based costs (leader tasks weighted by 0.9); prices
    rise until every task clears.  Agents without a known state bid infinity;
    if any task attracts no finite bid the auction fails.  The epsilon step
    is small enough that the result is optimal in practice for groups <= 21.
    """
    if len(tasks) != len(group.members):
        raise AllocationError("task count must equal group size")
    agents = sorted(group.members)
    ordered = sorted(tasks, key=lambda t: (t.priority, t.task_id))
    n = len(ordered)

    cost = {}
    finite_costs = []
    for a in agents:
        p = states.get(a)
        for j, t in enumerate(ordered):
            c = math.inf if p is None else bid_cost(t, p)
            cost[(a, j)] = c
            if math.isfinite(c):
                finite_costs.append(c)
    if not finite_costs:
        raise AllocationError("no agent with known state can bid")
    scale = max(finite_costs) - min(finite_costs) + 1.0
    eps_final = 1e-3 * scale / (n + 1)

    # Epsilon scaling: run to completion at decreasing eps, keeping prices
    # between phases.  Without scaling, cost ties make the bidding raise
    # prices by eps at a time and the auction stalls.
    price = [0.0] * n
    owner: dict[int, Optional[int]] = {}
    eps = scale / 2.0
    while True:
        owner = {j: None for j in range(n)}
        unassigned = list(agents)
        guard = 0
        while unassigned:
            guard += 1
            if guard > 1_000_000:
                raise AllocationError("auction failed to terminate")
            a = unassigned.pop(0)
            best_j, best_v, second_v = -1, -math.inf, -math.inf
            for j in range(n):
                c = cost[(a, j)]
                if not math.isfinite(c):
                    continue
                v = -c - price[j]
                if v > best_v:
                    second_v = best_v
                    best_j, best_v = j, v
                elif v > second_v:
                    second_v = v
            if best_j < 0:
                raise AllocationError("agent has no finite bid; allocation fails")
            if math.isinf(second_v):
                second_v = best_v  # only one admissible task: minimal raise
            price[best_j] += (best_v - second_v) + eps
            displaced = owner[best_j]
            owner[best_j] = a
            if displaced is not None:
                unassigned.append(displaced)
        if eps <= eps_final:
            break
        eps = max(eps / 5.0, eps_final)
    awards = {ordered[j].task_id: owner[j] for j in range(n)}
    if any(a is None for a in awards.values()):
        raise AllocationError("auction left tasks unassigned")
    return Assignment(mission_id, version, _sorted_awards(awards), proposer)


def resolve_conflict(local: Assignment, remote: Assignment) -> Assignment:
    """Commutative, idempotent merge of two assignments for the same mission.

    Higher version wins outright.  At equal version, differing content merges
    per task to the lower agent id (union over tasks) and bumps the version.
    """
    if local.mission_id != remote.mission_id:
        raise ValueError("assignments belong to different missions")
    if local.version != remote.version:
        return local if local.version > remote.version else remote
    if local.awards == remote.awards:
        return local
    lm, rm = local.award_map(), remote.award_map()
    merged = {}
    for t in set(lm) | set(rm):
        a, b = lm.get(t), rm.get(t)
        merged[t] = min(x for x in (a, b) if x is not None)
    return Assignment(local.mission_id, local.version + 1,
                      _sorted_awards(merged), min(local.proposer, remote.proposer))


@dataclass
class TaskActivation:
    task: Task
    activated_at: float
    timed_out: bool = False


class TaskScheduler:
    """Runs one agent's ordered task list with blocking semantics.

    A blocking task holds its successor until complete() is called (or the
    watchdog fires); a non-blocking task releases the successor on the tick
    after launch.
    """

    def __init__(self, tasks: Sequence[Task],
                 watchdog_timeout: float = DEFAULT_WATCHDOG_TIMEOUT):
        self._pending = list(tasks)
        self._active: list[TaskActivation] = []
        self._completed: list[int] = []
        self._gate: Optional[TaskActivation] = None  # blocking task in flight
        self.watchdog_timeout = watchdog_timeout
        self.events: list[tuple[float, str, int]] = []

    def tick(self, now: float) -> list[TaskActivation]:
        """Advance the schedule; returns tasks newly activated this tick."""
        if self._gate is not None:
            if now - self._gate.activated_at >= self.watchdog_timeout:
                self.events.append((now, "watchdog_timeout", self._gate.task.task_id))
                self._gate.timed_out = True
                self._gate = None
            else:
                return []
        # One activation per tick: a non-blocking task releases its successor
        # on the following tick, a blocking one gates until completion.
        out = []
        if self._pending:
            task = self._pending.pop(0)
            act = TaskActivation(task, now)
            self._active.append(act)
            self.events.append((now, "activated", task.task_id))
            out.append(act)
            if task.blocking:
                self._gate = act
        return out

    def complete(self, task_id: int, now: float) -> None:
        self._completed.append(task_id)
        self.events.append((now, "completed", task_id))
        if self._gate is not None and self._gate.task.task_id == task_id:
            self._gate = None

    @property
    def done(self) -> bool:
        return not self._pending and self._gate is None
