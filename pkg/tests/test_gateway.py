"""Gateway workflow gating, failsafe policy, alert rules and the TCP shell."""

import asyncio
import json
from dataclasses import replace

import pytest

from swarmsim.airframe import PlatformConfig
from swarmsim.gateway import (
    ACKED, ACTIVE, COMPLETED, FAILED, GatewayCore, GatewayServer, PENDING,
    _normalize_command,
)
from swarmsim.scenario import LandSpec, MissionSpec, ScenarioConfig
from swarmsim.simkernel import SimKernel

PLATFORM = PlatformConfig(name="default")


def airborne_kernel(n=3, duration=120.0, seed=7):
    cfg = ScenarioConfig(
        name="gw", seed=seed, duration=duration,
        fleet=[(i + 1, PLATFORM, (100.0 * i, 0.0)) for i in range(n)],
        record_states=False, start_airborne=True)
    cfg.guidance_gains = replace(cfg.guidance_gains, protection_radius=25.0)
    return SimKernel(cfg)


def ground_kernel(duration=400.0):
    cfg = ScenarioConfig(
        name="gw-ground", seed=7, duration=duration,
        fleet=[(i + 1, PLATFORM, (50.0 * i, 0.0)) for i in range(3)],
        land=LandSpec(capture_radius=250.0),
        record_states=False)
    return SimKernel(cfg)


def run_until(core, pred, limit=200.0):
    t0 = core.kernel.time
    while not pred() and not core.finished:
        core.advance()
        if core.kernel.time - t0 > limit:
            break


class TestSubmission:
    def test_unknown_command_rejected_before_queueing(self):
        core = GatewayCore(airborne_kernel(duration=5.0))
        with pytest.raises(ValueError):
            core.submit_workflow([{"name": "self_destruct"}])
        assert core.workflows == {}

    def test_unknown_failsafe_policy_rejected(self):
        core = GatewayCore(airborne_kernel(duration=5.0))
        with pytest.raises(ValueError):
            core.submit_workflow([{"name": "rtl"}], failsafe="shrug")

    def test_pattern_name_maps_to_arg(self):
        cmd = _normalize_command({"name": "formation", "pattern": "vee"})
        assert cmd["arg"] == 2


class TestWorkflowGating:
    def test_happy_path_three_sequential_dispatches(self):
        core = GatewayCore(ground_kernel())
        wid = core.submit_workflow([{"name": "launch"},
                                    {"name": "formation", "pattern": "vee"},
                                    {"name": "land"}])
        wf = core.workflows[wid]
        run_until(core, lambda: wf.state == COMPLETED, limit=60.0)
        assert wf.state == COMPLETED
        assert wf.statuses == [ACKED, ACKED, ACKED]
        # command k+1 never dispatched before command k's ack is recorded
        order = [(ev[1], ev[3]) for ev in core.trace
                 if ev[1] in ("dispatch", "acked")]
        assert order == [("dispatch", 0), ("acked", 0),
                         ("dispatch", 1), ("acked", 1),
                         ("dispatch", 2), ("acked", 2)]

    def test_at_most_one_command_in_sent_state(self):
        core = GatewayCore(ground_kernel(duration=30.0))
        wid = core.submit_workflow([{"name": "launch"}, {"name": "rtl"},
                                    {"name": "land"}])
        wf = core.workflows[wid]
        while not core.finished and wf.state == ACTIVE:
            core.advance()
            assert wf.statuses.count("sent") <= 1

    def test_duplicate_acks_do_not_double_advance(self):
        core = GatewayCore(airborne_kernel(duration=30.0))
        wid = core.submit_workflow([{"name": "rtl"}])
        wf = core.workflows[wid]
        run_until(core, lambda: wf.statuses[0] == ACKED, limit=10.0)
        # replay every recorded ack and advance again; index must not move
        core.kernel.gcs_acks.extend(list(core.kernel.gcs_acks))
        before = dict(core.workflows)
        core.advance()
        assert core.workflows == before
        assert wf.state == COMPLETED


class TestRetryAndFailsafe:
    def test_four_lost_acks_one_logical_dispatch(self):
        drops = {"n": 0}

        def ack_filter(agent_id, command_id):
            # swallow the acks from the first four attempts (3 agents each)
            if drops["n"] < 12:
                drops["n"] += 1
                return False
            return True

        core = GatewayCore(airborne_kernel(duration=60.0),
                           ack_filter=ack_filter)
        wid = core.submit_workflow([{"name": "formation", "pattern": "vee"}])
        wf = core.workflows[wid]
        run_until(core, lambda: wf.state != ACTIVE, limit=30.0)
        assert wf.state == COMPLETED and wf.statuses == [ACKED]
        retransmits = [ev for ev in core.trace if ev[1] == "retransmit"]
        assert len(retransmits) == 4
        # same command id throughout; agents acted exactly once
        cids = {ev[4] for ev in core.trace if ev[1] in ("dispatch",
                                                        "retransmit")}
        assert len(cids) == 1
        for aid in core.kernel.ids:
            assert core.kernel.agents[aid].handled_commands == cids

    def test_five_failures_trigger_rtl_all_and_abort(self):
        core = GatewayCore(airborne_kernel(duration=120.0),
                           ack_filter=lambda aid, cid: False)
        wid = core.submit_workflow(
            [{"name": "formation", "pattern": "vee"}, {"name": "land"}],
            failsafe="rtl_all")
        wf = core.workflows[wid]
        run_until(core, lambda: wf.state != ACTIVE, limit=30.0)
        assert wf.state == "aborted"
        assert wf.statuses == [FAILED, PENDING]
        assert any(ev[1] == "failsafe_rtl" for ev in core.trace)
        # the failsafe return-to-launch actually reaches the swarm
        run_until(core, lambda: all(
            core.kernel.agents[a].commander.mode == "RTL"
            for a in core.kernel.ids), limit=10.0)
        for aid in core.kernel.ids:
            assert core.kernel.agents[aid].commander.mode == "RTL"

    def test_abort_queue_policy_sends_no_rtl(self):
        core = GatewayCore(airborne_kernel(duration=60.0),
                           ack_filter=lambda aid, cid: False)
        wid = core.submit_workflow([{"name": "land"}], failsafe="abort_queue")
        wf = core.workflows[wid]
        run_until(core, lambda: wf.state != ACTIVE, limit=30.0)
        assert wf.state == "aborted"
        assert not any(ev[1] == "failsafe_rtl" for ev in core.trace)


class TestAlerts:
    @staticmethod
    def agent_row(aid, **over):
        row = {"id": aid, "mode": "MISSION", "battery": 0.9,
               "link_age": 0.5, "formation_error": 0.2}
        row.update(over)
        return row

    def test_all_nominal_no_alerts(self):
        core = GatewayCore(airborne_kernel(duration=5.0))
        snap = {"agents": [self.agent_row(1), self.agent_row(2)]}
        assert core._evaluate_alerts(snap) == []

    def test_stale_link_flags_only_that_agent(self):
        core = GatewayCore(airborne_kernel(duration=5.0))
        snap = {"agents": [self.agent_row(1, link_age=5.0),
                           self.agent_row(2)]}
        alerts = core._evaluate_alerts(snap)
        assert alerts == [{"rule": "link", "severity": "warning", "agent": 1}]

    def test_failsafe_mode_is_critical(self):
        core = GatewayCore(airborne_kernel(duration=5.0))
        snap = {"agents": [self.agent_row(3, mode="FAILSAFE")]}
        alerts = core._evaluate_alerts(snap)
        assert alerts == [{"rule": "failsafe", "severity": "critical",
                           "agent": 3}]

    def test_low_battery_and_formation_error(self):
        core = GatewayCore(airborne_kernel(duration=5.0))
        snap = {"agents": [self.agent_row(1, battery=0.1,
                                          formation_error=50.0)]}
        rules = {a["rule"] for a in core._evaluate_alerts(snap)}
        assert rules == {"battery", "formation"}

    def test_live_run_reports_link_freshness(self):
        # agents heartbeat the ground station at 1 Hz, so link stays fresh
        core = GatewayCore(airborne_kernel(duration=12.0))
        last = None
        while not core.finished:
            last = [m for m in core.advance() if m["kind"] == "snapshot"][-1]
        for a in last["agents"]:
            assert a["link_age"] is not None and a["link_age"] <= 3.0
        assert all(al["rule"] != "link" for al in last["alerts"])


class TestServer:
    @staticmethod
    async def read_kind(reader, kind, limit=200):
        for _ in range(limit):
            line = await asyncio.wait_for(reader.readline(), timeout=10.0)
            assert line, "connection closed early"
            msg = json.loads(line)
            if msg["kind"] == kind:
                return msg
        raise AssertionError(f"no {kind} message seen")

    def run_async(self, coro):
        asyncio.run(asyncio.wait_for(coro, timeout=60.0))

    def test_two_clients_identical_snapshots_and_fidelity(self):
        async def scenario():
            kernel = airborne_kernel(duration=6.0)
            core = GatewayCore(kernel)
            server = GatewayServer(core, port=0, realtime=False)
            await server.start()
            r1, w1 = await asyncio.open_connection("127.0.0.1", server.port)
            r2, w2 = await asyncio.open_connection("127.0.0.1", server.port)
            task = asyncio.ensure_future(server.run())
            s1 = [await self.read_kind(r1, "snapshot") for _ in range(5)]
            s2 = [await self.read_kind(r2, "snapshot") for _ in range(5)]
            assert s1 == s2
            ts = [s["t"] for s in s1]
            assert ts == sorted(ts) and len(set(ts)) == len(ts)
            # snapshot fidelity: positions equal the live sim state
            latest = s1[-1]
            if latest["t"] == pytest.approx(kernel.time):
                for row in latest["agents"]:
                    st = kernel._snapshot[row["id"]]
                    assert row["east"] == pytest.approx(st.east)
                    assert row["north"] == pytest.approx(st.north)
            await task
            w1.close(); w2.close()
            await server.close()

        self.run_async(scenario())

    def test_malformed_message_keeps_connection(self):
        async def scenario():
            core = GatewayCore(airborne_kernel(duration=4.0))
            server = GatewayServer(core, port=0, realtime=False)
            await server.start()
            reader, writer = await asyncio.open_connection(
                "127.0.0.1", server.port)
            task = asyncio.ensure_future(server.run())
            writer.write(b"this is not json\n")
            await writer.drain()
            err = await self.read_kind(reader, "error")
            assert "detail" in err
            writer.write(json.dumps({"kind": "command",
                                     "name": "rtl"}).encode() + b"\n")
            await writer.drain()
            ack = await self.read_kind(reader, "workflow_status")
            assert ack["workflow"] == 1
            await task
            writer.close()
            await server.close()

        self.run_async(scenario())

    def test_no_client_pauses_workflow(self):
        core = GatewayCore(airborne_kernel(duration=10.0))
        server = GatewayServer(core, port=0, realtime=False)
        core.submit_workflow([{"name": "rtl"}])

        async def scenario():
            await server.start()
            task = asyncio.ensure_future(server.run())
            await task
            await server.close()

        self.run_async(scenario())
        # nothing connected, so the command was never injected
        assert core.workflows[1].statuses == [PENDING]
        for aid in core.kernel.ids:
            assert core.kernel.agents[aid].handled_commands == set()
