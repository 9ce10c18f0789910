"""Operator bridge between a running simulation and ground-station clients.

The gateway owns the pacing of an attached :class:`~swarmsim.simkernel.SimKernel`
and exposes it over a TCP endpoint speaking newline-delimited JSON.  Every push
period (0.5 s of simulated time by default) it advances the kernel, evaluates
the alert rules, and fans a telemetry snapshot out to every connected client.

Commands travel the other way through an acknowledgment-gated workflow: the
operator submits an ordered list of high-level commands, the gateway injects
them into the GCS uplink one at a time, resending every 2 s of simulated time
until every agent has acknowledged, and only then moves on to the next entry.
After five unanswered attempts the command is marked failed and the workflow's
failsafe policy runs (drop the rest of the queue, or order a swarm-wide return
to launch and then drop the queue).

Wire protocol (version 1), one JSON object per line:

  server to client:
    {"v": 1, "kind": "snapshot", "t", "agents", "mpe", "ampe_running",
     "alerts"}                          pushed every period
    {"v": 1, "kind": "alert", "t", "rule", "severity", "agent"}
                                        edge-triggered copy of a new alert
    {"v": 1, "kind": "command_status", "workflow", "index", "command",
     "status", "t"}                     status in pending|sent|acked|failed
    {"v": 1, "kind": "workflow_status", "workflow", "state", "t"}
                                        state in active|paused|completed|aborted
    {"v": 1, "kind": "error", "detail"} malformed or rejected client input

  client to server:
    {"kind": "command", "name": <catalog name>, "arg"?, "value"?}
    {"kind": "workflow", "commands": [{"name", "arg"?, "value"?}, ...],
     "failsafe"?: "abort_queue" | "rtl_all"}

The command catalog is the agent-side one: launch, formation, tracking, rtl,
land, failsafe.  A formation command may carry "pattern" (a pattern name) in
place of a numeric "arg".
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from .agent import CMD_KINDS
from .planning import PATTERN_NAMES
from .simkernel import SimKernel

PROTOCOL_VERSION = 1

# Alert thresholds.
LINK_STALE_S = 3.0
BATTERY_LOW = 0.20
FORMATION_ALERT_FACTOR = 2.0
FORMATION_ALERT_FLOOR = 1.0   # m; keeps the 2x rule sane when AMPE is tiny

# Workflow retry schedule, simulated seconds.
RETRY_INTERVAL = 2.0
MAX_ATTEMPTS = 5

PENDING, SENT, ACKED, FAILED = "pending", "sent", "acked", "failed"
ACTIVE, PAUSED, COMPLETED, ABORTED = "active", "paused", "completed", "aborted"

FAILSAFE_POLICIES = ("abort_queue", "rtl_all")


def _normalize_command(entry: dict) -> dict:
    """Validate one workflow entry and reduce it to name/arg/value."""
    name = entry.get("name")
    if name not in CMD_KINDS:
        raise ValueError(f"unknown command: {name!r}")
    arg = entry.get("arg", 0)
    if name == "formation" and "pattern" in entry:
        pattern = entry["pattern"]
        if pattern not in PATTERN_NAMES:
            raise ValueError(f"unknown formation pattern: {pattern!r}")
        arg = PATTERN_NAMES.index(pattern)
    return {"name": name, "arg": int(arg),
            "value": float(entry.get("value", 0.0))}


@dataclass
class CommandWorkflow:
    """One operator-submitted queue of acknowledgment-gated commands."""

    workflow_id: int
    commands: list[dict]
    failsafe: str = "abort_queue"
    statuses: list[str] = field(default_factory=list)
    state: str = ACTIVE
    index: int = 0                        # command currently being worked
    attempts: int = 0
    command_id: Optional[int] = None      # uplink id of the in-flight command
    next_send: float = 0.0

    def __post_init__(self):
        if self.failsafe not in FAILSAFE_POLICIES:
            raise ValueError(f"unknown failsafe policy: {self.failsafe!r}")
        if not self.commands:
            raise ValueError("workflow needs at least one command")
        self.statuses = [PENDING] * len(self.commands)


class GatewayCore:
    """Sim-side half of the gateway: stepping, workflow engine, alerts.

    Pure and synchronous so it can be unit tested without sockets; the
    asyncio server in :func:`serve` is a thin shell around ``advance``.

    ``ack_filter(agent_id, command_id) -> bool`` is a test hook evaluated on
    each arriving acknowledgment; returning False drops it before the
    workflow engine sees it.
    """

    def __init__(self, kernel: SimKernel, push_period: float = 0.5,
                 ack_filter: Optional[Callable[[int, int], bool]] = None):
        self.kernel = kernel
        self.push_period = push_period
        self.ack_filter = ack_filter
        self._ticks_per_push = max(1, round(push_period / kernel.dt))
        self.workflows: dict[int, CommandWorkflow] = {}
        self._queue: list[CommandWorkflow] = []
        self._next_workflow_id = 1
        self._ack_cursor = 0              # read position into kernel.gcs_acks
        self._acked_by: dict[int, set[int]] = {}   # command_id -> agent ids
        self.paused = False
        self.trace: list[tuple] = []      # (t, event, *detail), for assertions
        self._active_alerts: set[tuple] = set()
        self._ampe_sum = 0.0
        self._ampe_n = 0
        self._formation_cursor = 0

    # ----------------------------------------------------------- submission

    def submit_workflow(self, commands: list[dict],
                        failsafe: str = "abort_queue") -> int:
        """Queue an ordered command list; returns the workflow id."""
        normalized = [_normalize_command(c) for c in commands]
        wf = CommandWorkflow(self._next_workflow_id, normalized, failsafe)
        self._next_workflow_id += 1
        self.workflows[wf.workflow_id] = wf
        self._queue.append(wf)
        self.trace.append((self.kernel.time, "workflow_submitted",
                           wf.workflow_id))
        return wf.workflow_id

    def pause(self) -> None:
        self.paused = True

    def resume(self) -> None:
        self.paused = False

    # ------------------------------------------------------------- stepping

    def advance(self) -> list[dict]:
        """Advance the sim one push period; returns the outbound messages."""
        out: list[dict] = []
        for _ in range(self._ticks_per_push):
            if self.kernel.tick >= self.kernel.n_ticks:
                break
            self.kernel.step()
            self._consume_acks()
            if not self.paused:
                self._run_workflows(out)
        self._update_running_ampe()
        snapshot = self.kernel.telemetry_snapshot()
        alerts = self._evaluate_alerts(snapshot)
        snapshot.update(v=PROTOCOL_VERSION, kind="snapshot",
                        ampe_running=self.running_ampe, alerts=alerts)
        out.append(snapshot)
        for alert in alerts:
            key = (alert["rule"], alert["agent"])
            if key not in self._active_alerts:
                out.append({"v": PROTOCOL_VERSION, "kind": "alert",
                            "t": snapshot["t"], **alert})
        self._active_alerts = {(a["rule"], a["agent"]) for a in alerts}
        return out

    @property
    def finished(self) -> bool:
        return self.kernel.tick >= self.kernel.n_ticks

    @property
    def running_ampe(self) -> Optional[float]:
        if self._ampe_n == 0:
            return None
        return self._ampe_sum / self._ampe_n

    # ----------------------------------------------------------- internals

    def _consume_acks(self) -> None:
        acks = self.kernel.gcs_acks
        while self._ack_cursor < len(acks):
            _, sender, command_id = acks[self._ack_cursor]
            self._ack_cursor += 1
            if self.ack_filter is not None and \
                    not self.ack_filter(sender, command_id):
                continue
            self._acked_by.setdefault(command_id, set()).add(sender)

    def _run_workflows(self, out: list[dict]) -> None:
        wf = next((w for w in self._queue if w.state == ACTIVE), None)
        if wf is None:
            return
        t = self.kernel.time
        everyone = set(self.kernel.ids)

        if wf.statuses[wf.index] == SENT:
            acked = self._acked_by.get(wf.command_id, set())
            if everyone <= acked:
                self._set_status(wf, out, ACKED)
                self.trace.append((t, "acked", wf.workflow_id, wf.index))
                wf.index += 1
                wf.attempts = 0
                wf.command_id = None
                if wf.index >= len(wf.commands):
                    wf.state = COMPLETED
                    self._emit_workflow_status(wf, out)
                    self._queue.remove(wf)
                return
            if t >= wf.next_send:
                if wf.attempts >= MAX_ATTEMPTS:
                    self._fail_workflow(wf, out)
                else:
                    self._dispatch(wf, out, retransmit=True)
            return

        if wf.statuses[wf.index] == PENDING:
            self._dispatch(wf, out, retransmit=False)

    def _dispatch(self, wf: CommandWorkflow, out: list[dict],
                  retransmit: bool) -> None:
        cmd = wf.commands[wf.index]
        wf.command_id = self.kernel.send_gcs_command(
            cmd["name"], arg=cmd["arg"], value=cmd["value"],
            command_id=wf.command_id)
        wf.attempts += 1
        wf.next_send = self.kernel.time + RETRY_INTERVAL
        label = "retransmit" if retransmit else "dispatch"
        self.trace.append((self.kernel.time, label, wf.workflow_id, wf.index,
                           wf.command_id))
        if not retransmit:
            self._set_status(wf, out, SENT)

    def _fail_workflow(self, wf: CommandWorkflow, out: list[dict]) -> None:
        t = self.kernel.time
        self._set_status(wf, out, FAILED)
        self.trace.append((t, "failed", wf.workflow_id, wf.index))
        if wf.failsafe == "rtl_all":
            rtl_id = self.kernel.send_gcs_command("rtl")
            self.trace.append((t, "failsafe_rtl", wf.workflow_id, rtl_id))
        wf.state = ABORTED
        self._emit_workflow_status(wf, out)
        self._queue.remove(wf)

    def _set_status(self, wf: CommandWorkflow, out: list[dict],
                    status: str) -> None:
        wf.statuses[wf.index] = status
        out.append({"v": PROTOCOL_VERSION, "kind": "command_status",
                    "workflow": wf.workflow_id, "index": wf.index,
                    "command": wf.commands[wf.index]["name"],
                    "status": status, "t": self.kernel.time})

    def _emit_workflow_status(self, wf: CommandWorkflow,
                              out: list[dict]) -> None:
        out.append({"v": PROTOCOL_VERSION, "kind": "workflow_status",
                    "workflow": wf.workflow_id, "state": wf.state,
                    "t": self.kernel.time})

    def _update_running_ampe(self) -> None:
        records = self.kernel.formation_records
        while self._formation_cursor < len(records):
            _, errors = records[self._formation_cursor]
            self._formation_cursor += 1
            self._ampe_sum += sum(errors) / len(errors)
            self._ampe_n += 1

    def _evaluate_alerts(self, snapshot: dict) -> list[dict]:
        alerts: list[dict] = []
        base = max(self.running_ampe or 0.0, FORMATION_ALERT_FLOOR)
        for a in snapshot["agents"]:
            if a["link_age"] is not None and a["link_age"] > LINK_STALE_S:
                alerts.append({"rule": "link", "severity": "warning",
                               "agent": a["id"]})
            err = a["formation_error"]
            if err is not None and err > FORMATION_ALERT_FACTOR * base:
                alerts.append({"rule": "formation", "severity": "warning",
                               "agent": a["id"]})
            if a["mode"] == "FAILSAFE":
                alerts.append({"rule": "failsafe", "severity": "critical",
                               "agent": a["id"]})
            if a["battery"] < BATTERY_LOW:
                alerts.append({"rule": "battery", "severity": "warning",
                               "agent": a["id"]})
        return alerts


class GatewayServer:
    """TCP front half: one session handler per client, shared GatewayCore.

    The serve loop drives the simulation at ``push_hz`` wall rate (or flat
    out when ``realtime`` is off, which is what the tests use) and keeps
    pushing the final snapshot after the sim ends so late clients still see
    the end state.  The workflow engine pauses while no client is connected
    and resumes on reconnect.
    """

    def __init__(self, core: GatewayCore, host: str = "127.0.0.1",
                 port: int = 8808, realtime: bool = True):
        self.core = core
        self.host = host
        self.port = port
        self.realtime = realtime
        self._writers: set[asyncio.StreamWriter] = set()
        self._server: Optional[asyncio.base_events.Server] = None

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._handle_client, self.host, self.port)
        if self.port == 0:
            self.port = self._server.sockets[0].getsockname()[1]

    async def run(self) -> None:
        """Push loop; returns when the sim has finished and drained."""
        if self._server is None:
            await self.start()
        while not self.core.finished:
            if self._writers:
                self.core.resume()
            else:
                self.core.pause()
            for msg in self.core.advance():
                self._broadcast(msg)
            await self._drain()
            if self.realtime:
                await asyncio.sleep(self.core.push_period)
            else:
                await asyncio.sleep(0)

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for w in list(self._writers):
            w.close()

    # ----------------------------------------------------------- plumbing

    def _broadcast(self, msg: dict) -> None:
        line = (json.dumps(msg) + "\n").encode()
        for w in list(self._writers):
            try:
                w.write(line)
            except ConnectionError:
                self._writers.discard(w)

    async def _drain(self) -> None:
        for w in list(self._writers):
            try:
                await w.drain()
            except ConnectionError:
                self._writers.discard(w)

    async def _handle_client(self, reader: asyncio.StreamReader,
                             writer: asyncio.StreamWriter) -> None:
        self._writers.add(writer)
        self.core.resume()
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                reply = self._handle_line(line)
                if reply is not None:
                    writer.write((json.dumps(reply) + "\n").encode())
                    await writer.drain()
        except ConnectionError:
            pass
        finally:
            self._writers.discard(writer)
            if not self._writers:
                self.core.pause()

    def _handle_line(self, line: bytes) -> Optional[dict]:
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError("message must be a JSON object")
            kind = msg.get("kind")
            if kind == "command":
                wid = self.core.submit_workflow([msg])
            elif kind == "workflow":
                wid = self.core.submit_workflow(
                    msg.get("commands", []),
                    failsafe=msg.get("failsafe", "abort_queue"))
            else:
                raise ValueError(f"unknown message kind: {kind!r}")
        except (ValueError, TypeError, json.JSONDecodeError) as exc:
            return {"v": PROTOCOL_VERSION, "kind": "error", "detail": str(exc)}
        return {"v": PROTOCOL_VERSION, "kind": "workflow_status",
                "workflow": wid, "state": ACTIVE, "t": self.core.kernel.time}


async def serve(kernel: SimKernel, host: str = "127.0.0.1", port: int = 8808,
                push_hz: float = 2.0, realtime: bool = True) -> None:
    """Attach a gateway to a kernel and serve until the run completes."""
    core = GatewayCore(kernel, push_period=1.0 / push_hz)
    server = GatewayServer(core, host, port, realtime=realtime)
    await server.start()
    try:
        await server.run()
    finally:
        await server.close()
