"""Experiments as ordered stage lists, and the progression machine.

An experiment is a pool of typed stages (instruction, feedback,
environment) plus optional named conditions, each an alternative ordering
over the pool. Sessions are assigned a condition deterministically from
their seed, so assignment is random across participants but replayable
for any one of them.

`advance` is a pure transition over `StageProgress`; the session layer
and the restore fold both drive it with the same persisted events, which
is what keeps live progress and recovered progress identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import yaml

from .envs import get_env, registered_kinds
from .errors import ConfigError, ProtocolError
from .rng import Rng

PHASE_SHOWING = "showing"
PHASE_INTERACTING = "interacting"
PHASE_COMPLETE = "complete"

KIND_INSTRUCTION = "instruction"
KIND_FEEDBACK = "feedback"
KIND_ENVIRONMENT = "environment"

_CONDITION_STREAM = 0xC0DD17  # label for the condition-assignment branch


# --- feedback form schema ---

@dataclass(frozen=True, slots=True)
class LikertInput:
    min: int
    max: int
    labels: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class RadioInput:
    options: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class FreeTextInput:
    pass


@dataclass(frozen=True, slots=True)
class SliderInput:
    min: float
    max: float
    step: float


InputSpec = Union[LikertInput, RadioInput, FreeTextInput, SliderInput]

_INPUT_KINDS = {
    "likert": LikertInput,
    "radio": RadioInput,
    "free_text": FreeTextInput,
    "slider": SliderInput,
}


@dataclass(frozen=True, slots=True)
class Question:
    id: str
    prompt: str
    input: InputSpec


@dataclass(frozen=True, slots=True)
class FormSchema:
    questions: tuple[Question, ...]


def check_answer(question: Question, value: object) -> str | None:
    """One validation issue string, or None when the answer fits."""
    spec = question.input
    if isinstance(spec, LikertInput):
        if not isinstance(value, int) or isinstance(value, bool):
            return "expected an integer"
        if not spec.min <= value <= spec.max:
            return f"out of range [{spec.min}, {spec.max}]"
    elif isinstance(spec, RadioInput):
        if value not in spec.options:
            return "not one of the options"
    elif isinstance(spec, FreeTextInput):
        if not isinstance(value, str):
            return "expected text"
    elif isinstance(spec, SliderInput):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            return "expected a number"
        if not spec.min <= float(value) <= spec.max:
            return f"out of range [{spec.min}, {spec.max}]"
    return None


# --- stage configs ---

@dataclass(frozen=True, slots=True)
class InstructionStage:
    id: str
    body: str
    kind: str = KIND_INSTRUCTION


@dataclass(frozen=True, slots=True)
class FeedbackStage:
    id: str
    form: FormSchema
    kind: str = KIND_FEEDBACK


@dataclass(frozen=True, slots=True)
class CompletionRule:
    max_episodes: int
    min_successes: int
    success_return_threshold: float


@dataclass(frozen=True, slots=True)
class AssistantConfig:
    advisor: str = "oracle"  # "oracle" | "remote"
    deadline_ms: float = 20000.0
    sees: str = "state"  # "state" | "observation"
    endpoint: str = ""
    auth_token_env: str = ""


@dataclass(frozen=True, slots=True)
class EnvironmentStage:
    id: str
    env_kind: str
    params: object
    completion: CompletionRule
    assistant: AssistantConfig | None = None
    kind: str = KIND_ENVIRONMENT


StageConfig = Union[InstructionStage, FeedbackStage, EnvironmentStage]


@dataclass(frozen=True, slots=True)
class Condition:
    name: str
    stage_ids: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class ExperimentDefinition:
    experiment_id: str
    version: int
    title: str
    consent: str
    stages: tuple[StageConfig, ...]
    conditions: tuple[Condition, ...]

    def stage_by_id(self, stage_id: str) -> StageConfig:
        for stage in self.stages:
            if stage.id == stage_id:
                return stage
        raise KeyError(stage_id)

    def stages_for_condition(self, name: str) -> tuple[StageConfig, ...]:
        for cond in self.conditions:
            if cond.name == name:
                return tuple(self.stage_by_id(sid) for sid in cond.stage_ids)
        raise KeyError(name)

    def assign_condition(self, session_seed: int) -> str:
        idx = Rng(session_seed).split(_CONDITION_STREAM).randint(len(self.conditions))
        return self.conditions[idx].name


# --- progression ---

@dataclass(frozen=True, slots=True)
class StageProgress:
    stage_index: int
    episode_index: int
    successes: int
    phase: str


@dataclass(frozen=True, slots=True)
class ContinueEvent:
    pass


@dataclass(frozen=True, slots=True)
class FeedbackSubmitted:
    pass


@dataclass(frozen=True, slots=True)
class EpisodeEnded:
    episode_return: float


StageEvent = Union[ContinueEvent, FeedbackSubmitted, EpisodeEnded]


def initial_progress(stages: tuple[StageConfig, ...]) -> StageProgress:
    if not stages:
        return StageProgress(0, 0, 0, PHASE_COMPLETE)
    return StageProgress(0, 0, 0, _entry_phase(stages[0]))


def _entry_phase(stage: StageConfig) -> str:
    return PHASE_INTERACTING if stage.kind == KIND_ENVIRONMENT else PHASE_SHOWING


def _enter_next(stages: tuple[StageConfig, ...], index: int) -> StageProgress:
    nxt = index + 1
    if nxt >= len(stages):
        return StageProgress(index, 0, 0, PHASE_COMPLETE)
    return StageProgress(nxt, 0, 0, _entry_phase(stages[nxt]))


def advance(
    stages: tuple[StageConfig, ...],
    progress: StageProgress,
    event: StageEvent,
) -> StageProgress:
    """Pure progression step; out-of-phase events raise ProtocolError and
    leave the caller's progress untouched."""
    if progress.phase == PHASE_COMPLETE:
        raise ProtocolError("out_of_phase", "experiment already complete")
    stage = stages[progress.stage_index]
    if isinstance(event, ContinueEvent):
        if stage.kind != KIND_INSTRUCTION or progress.phase != PHASE_SHOWING:
            raise ProtocolError("out_of_phase", f"continue not valid in {stage.kind}/{progress.phase}")
        return _enter_next(stages, progress.stage_index)
    if isinstance(event, FeedbackSubmitted):
        if stage.kind != KIND_FEEDBACK or progress.phase != PHASE_SHOWING:
            raise ProtocolError("out_of_phase", f"feedback not valid in {stage.kind}/{progress.phase}")
        return _enter_next(stages, progress.stage_index)
    if isinstance(event, EpisodeEnded):
        if stage.kind != KIND_ENVIRONMENT or progress.phase != PHASE_INTERACTING:
            raise ProtocolError("out_of_phase", f"episode end not valid in {stage.kind}/{progress.phase}")
        rule = stage.completion
        successes = progress.successes + (
            1 if event.episode_return >= rule.success_return_threshold else 0
        )
        episodes = progress.episode_index + 1
        if successes >= rule.min_successes or episodes >= rule.max_episodes:
            return _enter_next(stages, progress.stage_index)
        return replace(progress, episode_index=episodes, successes=successes)
    raise ProtocolError("out_of_phase", f"unknown event {type(event).__name__}")


def submit_feedback(
    stages: tuple[StageConfig, ...],
    progress: StageProgress,
    answers: dict[str, object],
) -> StageProgress:
    """Validate answers against the current feedback form and advance.

    Raises FormValidationError listing every offending question id;
    progress is unchanged on failure (the caller keeps its value).
    """
    if progress.phase == PHASE_COMPLETE:
        raise ProtocolError("out_of_phase", "experiment already complete")
    stage = stages[progress.stage_index]
    if stage.kind != KIND_FEEDBACK:
        raise ProtocolError("out_of_phase", f"no feedback form in a {stage.kind} stage")
    issues: dict[str, str] = {}
    for question in stage.form.questions:
        if question.id not in answers:
            issues[question.id] = "missing answer"
            continue
        problem = check_answer(question, answers[question.id])
        if problem:
            issues[question.id] = problem
    for qid in answers:
        if all(q.id != qid for q in stage.form.questions):
            issues[qid] = "no such question"
    if issues:
        raise FormValidationError(issues)
    return advance(stages, progress, FeedbackSubmitted())


class FormValidationError(ProtocolError):
    def __init__(self, issues: dict[str, str]):
        detail = "; ".join(f"{qid}: {msg}" for qid, msg in sorted(issues.items()))
        super().__init__("invalid_feedback", f"invalid answers ({detail})")
        self.issues = issues


# --- definition validation ---

@dataclass(frozen=True, slots=True)
class Issue:
    stage_id: str
    field: str
    message: str

    def __str__(self) -> str:
        return f"[{self.stage_id}] {self.field}: {self.message}"


def validate_definition(definition: ExperimentDefinition) -> list[Issue]:
    """Structural validation; an empty list means the definition is
    servable as-is."""
    issues: list[Issue] = []
    if not definition.experiment_id:
        issues.append(Issue("-", "experiment_id", "must be non-empty"))
    if definition.version < 1:
        issues.append(Issue("-", "version", "must be >= 1"))
    seen_ids: set[str] = set()
    for stage in definition.stages:
        if stage.id in seen_ids:
            issues.append(Issue(stage.id, "id", "duplicate stage id"))
        seen_ids.add(stage.id)
        if stage.kind == KIND_ENVIRONMENT:
            issues.extend(_validate_env_stage(stage))
        elif stage.kind == KIND_FEEDBACK:
            issues.extend(_validate_form(stage))
    if not definition.conditions:
        issues.append(Issue("-", "conditions", "at least one condition required"))
    names = set()
    for cond in definition.conditions:
        if cond.name in names:
            issues.append(Issue("-", f"conditions.{cond.name}", "duplicate condition name"))
        names.add(cond.name)
        if not cond.stage_ids:
            issues.append(Issue("-", f"conditions.{cond.name}", "empty stage list"))
        for sid in cond.stage_ids:
            if sid not in seen_ids:
                issues.append(Issue("-", f"conditions.{cond.name}", f"unknown stage id {sid!r}"))
    return issues


def _validate_env_stage(stage: EnvironmentStage) -> list[Issue]:
    issues: list[Issue] = []
    if stage.env_kind not in registered_kinds():
        issues.append(
            Issue(stage.id, "env", f"unknown environment kind {stage.env_kind!r} "
                                   f"(registered: {', '.join(registered_kinds())})")
        )
        return issues
    try:
        get_env(stage.env_kind).validate_params(stage.params)
    except ConfigError as exc:
        issues.append(Issue(stage.id, f"params.{exc.field}", str(exc)))
    rule = stage.completion
    if rule.max_episodes < 1:
        issues.append(Issue(stage.id, "completion.max_episodes", "must be >= 1"))
    if rule.min_successes < 0:
        issues.append(Issue(stage.id, "completion.min_successes", "must be >= 0"))
    if rule.min_successes > rule.max_episodes:
        issues.append(
            Issue(stage.id, "completion.min_successes",
                  f"min successes {rule.min_successes} exceeds max episodes {rule.max_episodes}")
        )
    if stage.assistant is not None:
        if stage.assistant.advisor not in ("oracle", "remote"):
            issues.append(Issue(stage.id, "assistant.advisor",
                                f"unknown advisor {stage.assistant.advisor!r}"))
        if stage.assistant.sees not in ("state", "observation"):
            issues.append(Issue(stage.id, "assistant.sees", "must be 'state' or 'observation'"))
        if stage.assistant.advisor == "remote" and not stage.assistant.endpoint:
            issues.append(Issue(stage.id, "assistant.endpoint", "remote advisor needs an endpoint"))
        if stage.assistant.deadline_ms <= 0:
            issues.append(Issue(stage.id, "assistant.deadline_ms", "must be positive"))
    return issues


def _validate_form(stage: FeedbackStage) -> list[Issue]:
    issues: list[Issue] = []
    seen: set[str] = set()
    for q in stage.form.questions:
        if q.id in seen:
            issues.append(Issue(stage.id, f"form.{q.id}", "duplicate question id"))
        seen.add(q.id)
        if isinstance(q.input, LikertInput) and q.input.min >= q.input.max:
            issues.append(Issue(stage.id, f"form.{q.id}.likert", "min must be < max"))
        if isinstance(q.input, RadioInput) and not q.input.options:
            issues.append(Issue(stage.id, f"form.{q.id}.radio", "no options"))
        if isinstance(q.input, SliderInput):
            if q.input.min >= q.input.max:
                issues.append(Issue(stage.id, f"form.{q.id}.slider", "min must be < max"))
            if q.input.step <= 0:
                issues.append(Issue(stage.id, f"form.{q.id}.slider", "step must be positive"))
    return issues


# --- config document (YAML) ---

def definition_from_yaml(text: str) -> ExperimentDefinition:
    """Parse and strictly check an experiment config document. Unknown
    fields are rejected so typos fail at server start, not mid-study."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("-", f"not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("-", "top level must be a mapping")
    _reject_unknown(doc, {"experiment_id", "version", "title", "consent", "stages", "conditions"}, "")
    try:
        stages = tuple(_stage_from_payload(raw) for raw in doc["stages"])
        conditions_raw = doc.get("conditions")
        if conditions_raw is None:
            conditions = (Condition("default", tuple(s.id for s in stages)),)
        else:
            conditions = tuple(
                Condition(str(c["name"]), tuple(str(s) for s in c["stages"]))
                for c in conditions_raw
            )
        definition = ExperimentDefinition(
            experiment_id=str(doc["experiment_id"]),
            version=int(doc["version"]),
            title=str(doc.get("title", "")),
            consent=str(doc.get("consent", "")),
            stages=stages,
            conditions=conditions,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("-", f"malformed experiment document: {exc!r}") from exc
    return definition


def definition_to_yaml(definition: ExperimentDefinition) -> str:
    doc = {
        "experiment_id": definition.experiment_id,
        "version": definition.version,
        "title": definition.title,
        "consent": definition.consent,
        "stages": [_stage_to_payload(stage) for stage in definition.stages],
        "conditions": [
            {"name": c.name, "stages": list(c.stage_ids)} for c in definition.conditions
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False, width=100)


def _reject_unknown(payload: dict, known: set[str], where: str) -> None:
    for key in payload:
        if key not in known:
            raise ConfigError(f"{where}{key}", "unknown field")


def _stage_from_payload(raw: dict) -> StageConfig:
    if not isinstance(raw, dict):
        raise ConfigError("stages", "each stage must be a mapping")
    kind = raw.get("kind")
    stage_id = str(raw.get("id", ""))
    if not stage_id:
        raise ConfigError("stages.id", "stage id must be non-empty")
    where = f"stages.{stage_id}."
    if kind == KIND_INSTRUCTION:
        _reject_unknown(raw, {"id", "kind", "body"}, where)
        return InstructionStage(id=stage_id, body=str(raw.get("body", "")))
    if kind == KIND_FEEDBACK:
        _reject_unknown(raw, {"id", "kind", "form"}, where)
        questions = []
        for q in raw.get("form", []):
            _reject_unknown(q, {"id", "prompt", "input"}, f"{where}form.")
            spec_raw = dict(q["input"])
            input_kind = spec_raw.pop("kind")
            if input_kind not in _INPUT_KINDS:
                raise ConfigError(f"{where}form.{q['id']}.input", f"unknown input kind {input_kind!r}")
            if input_kind == "likert":
                spec: InputSpec = LikertInput(
                    min=int(spec_raw.pop("min")),
                    max=int(spec_raw.pop("max")),
                    labels=tuple(str(s) for s in spec_raw.pop("labels", [])),
                )
            elif input_kind == "radio":
                spec = RadioInput(options=tuple(str(o) for o in spec_raw.pop("options")))
            elif input_kind == "slider":
                spec = SliderInput(
                    min=float(spec_raw.pop("min")),
                    max=float(spec_raw.pop("max")),
                    step=float(spec_raw.pop("step", 1.0)),
                )
            else:
                spec = FreeTextInput()
            if spec_raw:
                raise ConfigError(f"{where}form.{q['id']}.input", f"unknown fields {sorted(spec_raw)}")
            questions.append(Question(id=str(q["id"]), prompt=str(q["prompt"]), input=spec))
        return FeedbackStage(id=stage_id, form=FormSchema(questions=tuple(questions)))
    if kind == KIND_ENVIRONMENT:
        _reject_unknown(raw, {"id", "kind", "env", "params", "completion", "assistant", "step_limit"}, where)
        env_kind = str(raw["env"])
        if env_kind not in registered_kinds():
            raise ConfigError(f"{where}env", f"unknown environment kind {env_kind!r}")
        params = get_env(env_kind).params_from_payload(raw.get("params", {}))
        if "step_limit" in raw and raw["step_limit"] is not None:
            # stage-level per-episode cap overrides the params' own limit
            params = replace(params, step_limit=int(raw["step_limit"]))
        comp_raw = raw.get("completion", {})
        _reject_unknown(
            comp_raw, {"max_episodes", "min_successes", "success_return_threshold"}, f"{where}completion."
        )
        completion = CompletionRule(
            max_episodes=int(comp_raw.get("max_episodes", 1)),
            min_successes=int(comp_raw.get("min_successes", 1)),
            success_return_threshold=float(comp_raw.get("success_return_threshold", 1.0)),
        )
        assistant = None
        if "assistant" in raw and raw["assistant"] is not None:
            a = raw["assistant"]
            _reject_unknown(a, {"advisor", "deadline_ms", "sees", "endpoint", "auth_token_env"}, f"{where}assistant.")
            assistant = AssistantConfig(
                advisor=str(a.get("advisor", "oracle")),
                deadline_ms=float(a.get("deadline_ms", 20000.0)),
                sees=str(a.get("sees", "state")),
                endpoint=str(a.get("endpoint", "")),
                auth_token_env=str(a.get("auth_token_env", "")),
            )
        return EnvironmentStage(
            id=stage_id, env_kind=env_kind, params=params,
            completion=completion, assistant=assistant,
        )
    raise ConfigError(f"{where}kind", f"unknown stage kind {kind!r}")


def _stage_to_payload(stage: StageConfig) -> dict:
    if stage.kind == KIND_INSTRUCTION:
        return {"id": stage.id, "kind": stage.kind, "body": stage.body}
    if stage.kind == KIND_FEEDBACK:
        questions = []
        for q in stage.form.questions:
            spec = q.input
            if isinstance(spec, LikertInput):
                payload: dict = {"kind": "likert", "min": spec.min, "max": spec.max}
                if spec.labels:
                    payload["labels"] = list(spec.labels)
            elif isinstance(spec, RadioInput):
                payload = {"kind": "radio", "options": list(spec.options)}
            elif isinstance(spec, SliderInput):
                payload = {"kind": "slider", "min": spec.min, "max": spec.max, "step": spec.step}
            else:
                payload = {"kind": "free_text"}
            questions.append({"id": q.id, "prompt": q.prompt, "input": payload})
        return {"id": stage.id, "kind": stage.kind, "form": questions}
    payload = {
        "id": stage.id,
        "kind": stage.kind,
        "env": stage.env_kind,
        "params": get_env(stage.env_kind).params_to_payload(stage.params),
        "completion": {
            "max_episodes": stage.completion.max_episodes,
            "min_successes": stage.completion.min_successes,
            "success_return_threshold": stage.completion.success_return_threshold,
        },
    }
    if stage.assistant is not None:
        payload["assistant"] = {
            "advisor": stage.assistant.advisor,
            "deadline_ms": stage.assistant.deadline_ms,
            "sees": stage.assistant.sees,
            "endpoint": stage.assistant.endpoint,
            "auth_token_env": stage.assistant.auth_token_env,
        }
    return payload


def form_to_payload(form: FormSchema) -> list[dict]:
    return _stage_to_payload(FeedbackStage(id="_", form=form))["form"]
