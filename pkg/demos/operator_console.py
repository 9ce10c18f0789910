"""Drive a running sim through the gateway exactly as an operator would.

Starts the gateway on a local port, connects a client, submits the workflow
[launch, formation vee, land], and prints every status and alert message
until the workflow completes.
"""

import asyncio
import json

from swarmsim.airframe import PlatformConfig
from swarmsim.gateway import GatewayCore, GatewayServer
from swarmsim.scenario import LandSpec, ScenarioConfig
from swarmsim.simkernel import SimKernel


def build_kernel():
    platform = PlatformConfig(name="default")
    cfg = ScenarioConfig(
        name="console-demo", seed=7, duration=400.0,
        fleet=[(i + 1, platform, (50.0 * i, 0.0)) for i in range(3)],
        land=LandSpec(capture_radius=250.0),
        record_states=False)
    return SimKernel(cfg)


async def operator(port):
    reader, writer = await asyncio.open_connection("127.0.0.1", port)
    workflow = {"kind": "workflow", "failsafe": "abort_queue",
                "commands": [{"name": "launch"},
                             {"name": "formation", "pattern": "vee"},
                             {"name": "land"}]}
    writer.write((json.dumps(workflow) + "\n").encode())
    await writer.drain()
    print("submitted workflow: launch -> formation vee -> land\n")

    while True:
        line = await reader.readline()
        if not line:
            break
        msg = json.loads(line)
        if msg["kind"] == "command_status":
            print(f"t = {msg['t']:6.1f} s   command {msg['index']} "
                  f"({msg['command']}): {msg['status']}")
        elif msg["kind"] == "alert":
            print(f"t = {msg['t']:6.1f} s   ALERT {msg['severity']}: "
                  f"{msg['rule']} on agent {msg['agent']}")
        elif msg["kind"] == "workflow_status" and msg["state"] != "active":
            print(f"\nworkflow {msg['workflow']} finished: {msg['state']}")
            break
    writer.close()


async def main():
    core = GatewayCore(build_kernel())
    server = GatewayServer(core, port=0, realtime=False)
    await server.start()
    print(f"gateway listening on 127.0.0.1:{server.port}")
    push = asyncio.ensure_future(server.run())
    await operator(server.port)
    push.cancel()
    await server.close()


if __name__ == "__main__":
    asyncio.run(main())
