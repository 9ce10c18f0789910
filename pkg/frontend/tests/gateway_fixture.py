"""Launch a real gateway on a free port for the console tests.

Prints "PORT <n>" once listening, serves until the simulated run finishes,
then prints per-agent summary lines the tests assert on:

    AGENT_HANDLED <id> <count of distinct commands acted on>
    MODE <id> <final commander mode>

Modes: happy (ground fleet, commands execute end to end), ackdrop (the
gateway drops the first 12 acknowledgments, i.e. four full attempts of a
three-ship swarm), failall (every acknowledgment dropped, forcing the
failsafe path).
"""

import asyncio
import sys
from dataclasses import replace

from swarmsim.airframe import PlatformConfig
from swarmsim.gateway import GatewayCore, GatewayServer
from swarmsim.scenario import LandSpec, ScenarioConfig
from swarmsim.simkernel import SimKernel

PLATFORM = PlatformConfig(name="default")


def build_kernel(mode: str) -> SimKernel:
    if mode == "happy":
        cfg = ScenarioConfig(
            name="fixture-ground", seed=7, duration=400.0,
            fleet=[(i + 1, PLATFORM, (50.0 * i, 0.0)) for i in range(3)],
            land=LandSpec(capture_radius=250.0),
            record_states=False)
    else:
        cfg = ScenarioConfig(
            name="fixture-air", seed=7, duration=60.0,
            fleet=[(i + 1, PLATFORM, (100.0 * i, 0.0)) for i in range(3)],
            record_states=False, start_airborne=True)
        cfg.guidance_gains = replace(cfg.guidance_gains,
                                     protection_radius=25.0)
    return SimKernel(cfg)


def ack_filter_for(mode: str):
    if mode == "ackdrop":
        dropped = {"n": 0}

        def drop_first_attempts(agent_id, command_id):
            if dropped["n"] < 12:
                dropped["n"] += 1
                return False
            return True

        return drop_first_attempts
    if mode == "failall":
        return lambda agent_id, command_id: False
    return None


async def main(mode: str) -> None:
    kernel = build_kernel(mode)
    core = GatewayCore(kernel, ack_filter=ack_filter_for(mode))
    server = GatewayServer(core, port=0, realtime=False)
    await server.start()
    print(f"PORT {server.port}", flush=True)
    await server.run()
    await server.close()
    for aid in kernel.ids:
        agent = kernel.agents[aid]
        print(f"AGENT_HANDLED {aid} {len(agent.handled_commands)}",
              flush=True)
        print(f"MODE {aid} {agent.commander.mode}", flush=True)


if __name__ == "__main__":
    asyncio.run(main(sys.argv[1] if len(sys.argv) > 1 else "happy"))
