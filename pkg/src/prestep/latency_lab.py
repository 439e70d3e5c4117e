"""Latency simulator: speculative prefetch vs naive request/response.

Models one participant stepping an environment across a network. The
naive protocol waits a full round trip per step (action up, compute,
observation down) before it can paint; the speculative protocol painted
from its local successor cache at the keypress, so its render path has
zero network events, at the cost of shipping every action's observation
each step.

Perceived latency is keypress-to-paint, the participant-visible metric.
Message sizes are measured from the real wire protocol (see
`measure_wire_sizes`) so bandwidth numbers reflect the implementation,
not an abstraction. Lost transmissions retransmit after a timeout of
4x the mean RTT and their bytes are counted again.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .protocol import MSG_ACTION, MSG_ENV_ACK, message_bytes

RETRANSMIT_RTT_MULTIPLE = 4.0


@dataclass(frozen=True, slots=True)
class Dist:
    """Scalar distribution: fixed(v) | uniform(lo,hi) | lognormal(mu,sigma)."""

    kind: str
    a: float
    b: float = 0.0

    @staticmethod
    def fixed(v: float) -> "Dist":
        return Dist("fixed", v)

    @staticmethod
    def uniform(lo: float, hi: float) -> "Dist":
        return Dist("uniform", lo, hi)

    @staticmethod
    def lognormal(mu: float, sigma: float) -> "Dist":
        return Dist("lognormal", mu, sigma)

    def sample(self, gen: np.random.Generator) -> float:
        if self.kind == "fixed":
            return self.a
        if self.kind == "uniform":
            return float(gen.uniform(self.a, self.b))
        if self.kind == "lognormal":
            return float(gen.lognormal(self.a, self.b))
        raise ValueError(f"unknown distribution kind {self.kind!r}")

    def mean(self) -> float:
        if self.kind == "fixed":
            return self.a
        if self.kind == "uniform":
            return (self.a + self.b) / 2.0
        if self.kind == "lognormal":
            return math.exp(self.a + self.b * self.b / 2.0)
        raise ValueError(f"unknown distribution kind {self.kind!r}")

    @staticmethod
    def parse(spec: str) -> "Dist":
        """Parse "fixed:100", "uniform:50,150", "lognormal:4.0,0.5"."""
        kind, _, args = spec.partition(":")
        parts = [float(p) for p in args.split(",")] if args else []
        if kind == "fixed" and len(parts) == 1:
            return Dist.fixed(parts[0])
        if kind == "uniform" and len(parts) == 2:
            return Dist.uniform(parts[0], parts[1])
        if kind == "lognormal" and len(parts) == 2:
            return Dist.lognormal(parts[0], parts[1])
        raise ValueError(f"bad distribution spec {spec!r}")


@dataclass(frozen=True, slots=True)
class NetworkModel:
    rtt: Dist = Dist.fixed(100.0)
    serialization_ms_per_kb: float = 0.0
    loss_prob: float = 0.0


VARIANT_SPECULATIVE = "speculative"
VARIANT_NAIVE = "naive"


@dataclass(frozen=True, slots=True)
class ProtocolVariant:
    kind: str
    action_count: int = 5
    compute_ms: float = 5.0
    think_time: Dist = Dist.fixed(300.0)
    local_render_ms: float = 0.0  # cache lookup + paint on the client


@dataclass(frozen=True, slots=True)
class StepSample:
    step: int
    keypress_ms: float
    render_ms: float
    perceived_ms: float
    bytes_up: int
    bytes_down: int


@dataclass(frozen=True, slots=True)
class LatencyTrace:
    variant: str
    steps: tuple[StepSample, ...]
    total_bytes_up: int
    total_bytes_down: int


@dataclass(frozen=True, slots=True)
class WireSizes:
    """Measured sizes (bytes) of the protocol messages a step exchanges."""

    action_bytes: int
    single_obs_reply_bytes: int  # naive ack: one observation
    frame_reply_bytes: int  # speculative ack: one observation per action
    per_action_bytes: float  # marginal frame growth per extra action
    frame_base_bytes: float


def _example_observation_payload(grid_shape: tuple[int, int]) -> dict:
    h, w = grid_shape
    grid = [[(r * w + c) % 4 for c in range(w)] for r in range(h)]
    return {"grid": grid, "overlay": None, "legal": [True] * 5}


def measure_wire_sizes(action_count: int, grid_shape: tuple[int, int] = (9, 9)) -> WireSizes:
    obs = _example_observation_payload(grid_shape)

    def frame_bytes(n: int) -> int:
        payload = {
            "frame_id": 1000,
            "stage_index": 1,
            "episode": 0,
            "step": 100,
            "observation": obs,
            "successors": {
                str(a): {"observation": obs, "reward": 0.0, "done": False} for a in range(n)
            },
        }
        return message_bytes(
            MSG_ENV_ACK,
            {"frame_id": 999, "action": 0, "reward": 0.0, "done": False,
             "episode_end": None, "stage_done": False, "next_frame": payload},
        )

    action_bytes = message_bytes(
        MSG_ACTION,
        {"kind": "env", "frame_id": 1000, "action": 1, "t1": 123456.789, "t2": 123956.789},
    )
    naive_reply = message_bytes(
        MSG_ENV_ACK,
        {"frame_id": 999, "action": 0, "reward": 0.0, "done": False,
         "episode_end": None, "stage_done": False, "observation": obs},
    )
    f1 = frame_bytes(1)
    fn = frame_bytes(action_count)
    per_action = (fn - f1) / max(action_count - 1, 1)
    return WireSizes(
        action_bytes=action_bytes,
        single_obs_reply_bytes=naive_reply,
        frame_reply_bytes=fn,
        per_action_bytes=per_action,
        frame_base_bytes=f1 - per_action,
    )


def simulate(
    variant: ProtocolVariant,
    net: NetworkModel,
    steps: int,
    seed: int,
    grid_shape: tuple[int, int] = (9, 9),
) -> LatencyTrace:
    """Closed-loop simulation of `steps` participant actions; see the
    module docstring for the timing model. Deterministic given `seed`."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if variant.kind not in (VARIANT_SPECULATIVE, VARIANT_NAIVE):
        raise ValueError(f"unknown variant {variant.kind!r}")
    gen = np.random.Generator(np.random.Philox(key=seed))
    sizes = measure_wire_sizes(variant.action_count, grid_shape)
    rto_ms = max(RETRANSMIT_RTT_MULTIPLE * net.rtt.mean(), 1.0)

    def ser_ms(nbytes: int) -> float:
        return net.serialization_ms_per_kb * (nbytes / 1024.0)

    def one_way(nbytes: int) -> tuple[float, int]:
        """Delay and bytes for one delivery, retransmissions included."""
        delay = 0.0
        sent = 0
        while True:
            sent += nbytes
            if net.loss_prob > 0.0 and gen.random() < net.loss_prob:
                delay += rto_ms
                continue
            delay += ser_ms(nbytes) + net.rtt.sample(gen) / 2.0
            return delay, sent

    samples: list[StepSample] = []
    total_up = 0
    total_down = 0
    render_prev = 0.0  # when the previous observation painted
    frame_ready = 0.0  # speculative: when the current frame became usable
    for step in range(steps):
        think = variant.think_time.sample(gen)
        if variant.kind == VARIANT_NAIVE:
            keypress = render_prev + think
            up_delay, up_bytes = one_way(sizes.action_bytes)
            down_delay, down_bytes = one_way(sizes.single_obs_reply_bytes)
            render = keypress + up_delay + variant.compute_ms + down_delay
        else:
            keypress = max(render_prev + think, frame_ready)
            render = keypress + variant.local_render_ms
            up_delay, up_bytes = one_way(sizes.action_bytes)
            down_delay, down_bytes = one_way(sizes.frame_reply_bytes)
            frame_ready = keypress + up_delay + variant.compute_ms * variant.action_count + down_delay
        samples.append(StepSample(
            step=step,
            keypress_ms=keypress,
            render_ms=render,
            perceived_ms=render - keypress,
            bytes_up=up_bytes,
            bytes_down=down_bytes,
        ))
        total_up += up_bytes
        total_down += down_bytes
        render_prev = render
    return LatencyTrace(
        variant=variant.kind,
        steps=tuple(samples),
        total_bytes_up=total_up,
        total_bytes_down=total_down,
    )


# --- reporting ---

def summarize(trace: LatencyTrace) -> dict:
    perceived = np.array([s.perceived_ms for s in trace.steps])
    n = len(trace.steps)
    return {
        "variant": trace.variant,
        "steps": n,
        "perceived_ms": {
            "mean": float(perceived.mean()),
            "median": float(np.median(perceived)),
            "p95": float(np.percentile(perceived, 95)),
        },
        "bandwidth": {
            "bytes_up_per_step": trace.total_bytes_up / n,
            "bytes_down_per_step": trace.total_bytes_down / n,
            "total_bytes": trace.total_bytes_up + trace.total_bytes_down,
        },
    }


def crossover_action_count(budget_bytes_per_step: float, sizes: WireSizes) -> int:
    """Largest action count whose speculative downlink stays within the
    per-step byte budget."""
    if sizes.per_action_bytes <= 0:
        return 0
    return max(int((budget_bytes_per_step - sizes.frame_base_bytes) // sizes.per_action_bytes), 0)


def report(
    traces: list[LatencyTrace],
    action_count: int = 5,
    budget_bytes_per_step: float = 64 * 1024.0,
) -> dict:
    if not traces:
        raise ValueError("need at least one trace")
    sizes = measure_wire_sizes(action_count)
    return {
        "schema_version": 1,
        "variants": [summarize(trace) for trace in traces],
        "wire_sizes": {
            "action_bytes": sizes.action_bytes,
            "single_obs_reply_bytes": sizes.single_obs_reply_bytes,
            "frame_reply_bytes": sizes.frame_reply_bytes,
            "per_action_bytes": sizes.per_action_bytes,
        },
        "crossover": {
            "budget_bytes_per_step": budget_bytes_per_step,
            "max_action_count_within_budget": crossover_action_count(budget_bytes_per_step, sizes),
        },
    }


def write_trace_ndjson(trace: LatencyTrace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in trace.steps:
            fh.write(json.dumps({
                "step": s.step,
                "variant": trace.variant,
                "keypress_ms": s.keypress_ms,
                "render_ms": s.render_ms,
                "perceived_ms": s.perceived_ms,
                "bytes_up": s.bytes_up,
                "bytes_down": s.bytes_down,
            }, sort_keys=True) + "\n")
