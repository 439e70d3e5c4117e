"""Task assistants: ground-truth descriptions in, chat replies out.

An advisor sees a text rendering of the environment (full state or just
the participant's observation, per stage config) plus the running
transcript, and returns one reply. Participants never see the raw
description; whatever task knowledge reaches them must flow through an
advisor message, which is the whole point of asymmetric-information
studies.

Advisors run off the session's command path under a deadline; a late or
failing advisor degrades to a fixed "unavailable" reply rather than ever
stalling environment stepping.
"""

from __future__ import annotations

import concurrent.futures
import os
import re
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx

from .envs import EnvState, Observation, StateDescription, env_for_world
from .sessions import ChatMessage
from .stages import AssistantConfig

UNAVAILABLE_TEXT = "The assistant is unavailable right now; please continue with the task."


def describe_state(state: EnvState, params: object) -> StateDescription:
    """Ground-truth description: goal, object identities and locations,
    rules. Deterministic in (state, params); rng-independent."""
    return env_for_world(state.world).describe(state, params)


def describe_observation(obs: Observation) -> StateDescription:
    """Restricted description built only from what the participant can
    see; used when a stage grants the advisor observation access only."""
    lines = [" ".join(str(v) for v in row) for row in obs.grid]
    goal = "help the participant infer the goal from what is visible"
    return StateDescription(
        goal_text=goal,
        objects=(),
        rules_text="Visible tile grid:\n" + "\n".join(lines)
        + (f"\nOverlay: {obs.overlay}" if obs.overlay else ""),
    )


class Advisor(Protocol):
    def advise(self, description: StateDescription, transcript: Sequence[ChatMessage]) -> str:
        """Return one reply. Stateless across sessions; everything the
        advisor may remember arrives via the transcript."""
        ...


class ScriptedOracleAdvisor:
    """Keyword matcher over the description: answers goal, location, and
    rule questions directly from ground truth."""

    def advise(self, description: StateDescription, transcript: Sequence[ChatMessage]) -> str:
        question = ""
        for msg in reversed(transcript):
            if msg.role == "user":
                question = msg.text.lower()
                break
        if re.search(r"\bgoal\b|\bobjective\b|\btask\b|\bdo\b", question):
            return f"Your goal: {description.goal_text}."
        if re.search(r"\bwhere\b|\blocation\b|\bobject\b|\bfind\b", question):
            if not description.objects:
                return "I can only see what you see; no object list is available."
            listing = "; ".join(
                f"{name} at row {r}, column {c}" for name, (r, c) in description.objects
            )
            return f"Objects: {listing}."
        if re.search(r"\brule\b|\bhow\b|\bwork\b", question):
            return f"Rules: {description.rules_text}"
        return (
            f"Your goal: {description.goal_text}. "
            "Ask about locations or rules for more detail."
        )


class RemoteAdvisor:
    """Minimal chat-completion client: POST one JSON body to a single
    endpoint, bearer auth, text reply. The model behind it stays
    anonymous to participants."""

    def __init__(self, endpoint: str, auth_token_env: str = "", timeout_s: float = 30.0):
        self.endpoint = endpoint
        self.auth_token_env = auth_token_env
        self.timeout_s = timeout_s

    def advise(self, description: StateDescription, transcript: Sequence[ChatMessage]) -> str:
        headers = {"content-type": "application/json"}
        token = os.environ.get(self.auth_token_env, "") if self.auth_token_env else ""
        if token:
            headers["authorization"] = f"Bearer {token}"
        body = {
            "system": description.render(),
            "messages": [
                {"role": msg.role, "content": msg.text}
                for msg in transcript
                if not msg.unavailable
            ],
        }
        response = httpx.post(self.endpoint, json=body, headers=headers, timeout=self.timeout_s)
        response.raise_for_status()
        return str(response.json()["text"])


def build_advisor(config: AssistantConfig) -> Advisor:
    if config.advisor == "oracle":
        return ScriptedOracleAdvisor()
    if config.advisor == "remote":
        return RemoteAdvisor(
            endpoint=config.endpoint,
            auth_token_env=config.auth_token_env,
            timeout_s=config.deadline_ms / 1000.0,
        )
    raise ValueError(f"unknown advisor kind {config.advisor!r}")


@dataclass(frozen=True, slots=True)
class AdvisorReply:
    text: str
    unavailable: bool


def run_advisor_with_deadline(
    advisor: Advisor,
    description: StateDescription,
    transcript: Sequence[ChatMessage],
    deadline_ms: float,
) -> AdvisorReply:
    """Run one advisor call in a worker thread, bounded by the deadline.
    Any overrun or failure becomes the fixed unavailable reply.

    On timeout the worker thread is abandoned, not joined: the reply must
    go out by the deadline. The advisor's own transport timeout bounds
    how long the stray thread lives.
    """
    pool = concurrent.futures.ThreadPoolExecutor(max_workers=1)
    future = pool.submit(advisor.advise, description, list(transcript))
    try:
        text = future.result(timeout=deadline_ms / 1000.0)
        return AdvisorReply(text=text, unavailable=False)
    except concurrent.futures.TimeoutError:
        return AdvisorReply(text=UNAVAILABLE_TEXT, unavailable=True)
    except Exception:
        return AdvisorReply(text=UNAVAILABLE_TEXT, unavailable=True)
    finally:
        pool.shutdown(wait=False, cancel_futures=True)
