"""E2E fixture: serve a 3-stage experiment over TCP, printing the port.

Usage: python3 run_server.py DATA_DIR
"""

import asyncio
import sys

from prestep.netserver import NetServer
from prestep.savequeue import BackoffPolicy
from prestep.server import ServerCore
from prestep.stages import definition_from_yaml

EXPERIMENT = """
experiment_id: e2e-demo
version: 1
title: e2e
stages:
  - id: intro
    kind: instruction
    body: |
      Reach the goal. Arrows move, space stays.
  - id: play
    kind: environment
    env: gridnav
    params:
      width: 4
      height: 4
      goal: [0, 3]
      start: {kind: fixed, cell: [3, 0]}
      step_limit: 120
    completion:
      max_episodes: 3
      min_successes: 2
      success_return_threshold: 1.0
  - id: rate
    kind: feedback
    form:
      - id: fun
        prompt: How fun was that?
        input: {kind: likert, min: 1, max: 5}
      - id: notes
        prompt: Any notes?
        input: {kind: free_text}
"""


async def main() -> None:
    import signal

    data_dir = sys.argv[1]
    definition = definition_from_yaml(EXPERIMENT)
    core = ServerCore.open(definition, data_dir, BackoffPolicy(base_ms=5.0, jitter=0.2))
    net = NetServer(core)
    host, port = await net.start_tcp("127.0.0.1", 0)
    print(f"PORT {port}", flush=True)
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    loop.add_signal_handler(signal.SIGTERM, stop.set)
    loop.add_signal_handler(signal.SIGINT, stop.set)
    try:
        await stop.wait()
    finally:
        await net.stop()  # drains the save queue before exit


if __name__ == "__main__":
    asyncio.run(main())
