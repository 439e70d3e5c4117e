"""Dataset export: the record log as a re-importable text archive.

The archive is a directory holding `records.ndjson` (every record as one
JSON object per line, in log order) and `manifest.json` (schema version
and per-type counts). Binary fields travel base64-encoded. Step rows
carry a derived `response_time_ms` column so analysis never recomputes
it inconsistently; on import the derived column is ignored and the log
is rebuilt from the authoritative fields, which makes
export -> import -> export byte-identical.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

from .errors import CodecError, ConfigError
from .logstore import LogStore, scan_log
from .records import (
    ChatRecord,
    ContinueRecord,
    EpisodeEndRecord,
    FeedbackRecord,
    Record,
    RECORD_SCHEMA_VERSION,
    SessionStartRecord,
    SnapshotRecord,
    StepRecord,
    decode_record,
    encode_record,
)

_TYPE_NAMES = {
    SessionStartRecord: "session_start",
    StepRecord: "step",
    EpisodeEndRecord: "episode_end",
    ContinueRecord: "continue",
    FeedbackRecord: "feedback",
    ChatRecord: "chat",
    SnapshotRecord: "snapshot",
}


def record_to_row(record: Record) -> dict:
    row: dict = {"type": _TYPE_NAMES[type(record)]}
    if isinstance(record, SessionStartRecord):
        row.update(
            session_id=record.session_id,
            experiment_id=record.experiment_id,
            experiment_version=record.experiment_version,
            condition=record.condition,
            seed=record.seed,
            wall_ms=record.wall_ms,
        )
    elif isinstance(record, StepRecord):
        row.update(
            session_id=record.session_id,
            stage_index=record.stage_index,
            stage_id=record.stage_id,
            episode=record.episode,
            step=record.step,
            frame_id=record.frame_id,
            pre_state_b64=base64.b64encode(record.pre_state).decode("ascii"),
            action=record.action,
            reward=record.reward,
            done=record.done,
            t1=record.t1,
            t2=record.t2,
            response_time_ms=record.t2 - record.t1,
            server_wall_ms=record.server_wall_ms,
            anomalies=record.anomalies,
        )
    elif isinstance(record, EpisodeEndRecord):
        row.update(
            session_id=record.session_id,
            stage_index=record.stage_index,
            episode=record.episode,
            episode_return=record.episode_return,
            success=record.success,
            steps=record.steps,
            wall_ms=record.wall_ms,
        )
    elif isinstance(record, ContinueRecord):
        row.update(
            session_id=record.session_id,
            stage_index=record.stage_index,
            wall_ms=record.wall_ms,
        )
    elif isinstance(record, FeedbackRecord):
        row.update(
            session_id=record.session_id,
            stage_index=record.stage_index,
            stage_id=record.stage_id,
            answers=json.loads(record.answers_json),
            wall_ms=record.wall_ms,
        )
    elif isinstance(record, ChatRecord):
        row.update(
            session_id=record.session_id,
            stage_index=record.stage_index,
            episode=record.episode,
            role="user" if record.role == 0 else "assistant",
            text=record.text,
            unavailable=record.unavailable,
            wall_ms=record.wall_ms,
        )
    elif isinstance(record, SnapshotRecord):
        row.update(
            session_id=record.session_id,
            payload_b64=base64.b64encode(record.payload).decode("ascii"),
            wall_ms=record.wall_ms,
        )
    return row


def row_to_record(row: dict) -> Record:
    from .records import CHAT_ROLE_ASSISTANT, CHAT_ROLE_USER, canonical_answers_json

    rtype = row["type"]
    if rtype == "session_start":
        return SessionStartRecord(
            session_id=row["session_id"],
            experiment_id=row["experiment_id"],
            experiment_version=int(row["experiment_version"]),
            condition=row["condition"],
            seed=int(row["seed"]),
            wall_ms=float(row["wall_ms"]),
        )
    if rtype == "step":
        return StepRecord(
            session_id=row["session_id"],
            stage_index=int(row["stage_index"]),
            stage_id=row["stage_id"],
            episode=int(row["episode"]),
            step=int(row["step"]),
            frame_id=int(row["frame_id"]),
            pre_state=base64.b64decode(row["pre_state_b64"]),
            action=int(row["action"]),
            reward=float(row["reward"]),
            done=bool(row["done"]),
            t1=float(row["t1"]),
            t2=float(row["t2"]),
            server_wall_ms=float(row["server_wall_ms"]),
            anomalies=int(row["anomalies"]),
        )
    if rtype == "episode_end":
        return EpisodeEndRecord(
            session_id=row["session_id"],
            stage_index=int(row["stage_index"]),
            episode=int(row["episode"]),
            episode_return=float(row["episode_return"]),
            success=bool(row["success"]),
            steps=int(row["steps"]),
            wall_ms=float(row["wall_ms"]),
        )
    if rtype == "continue":
        return ContinueRecord(
            session_id=row["session_id"],
            stage_index=int(row["stage_index"]),
            wall_ms=float(row["wall_ms"]),
        )
    if rtype == "feedback":
        return FeedbackRecord(
            session_id=row["session_id"],
            stage_index=int(row["stage_index"]),
            stage_id=row["stage_id"],
            answers_json=canonical_answers_json(row["answers"]),
            wall_ms=float(row["wall_ms"]),
        )
    if rtype == "chat":
        return ChatRecord(
            session_id=row["session_id"],
            stage_index=int(row["stage_index"]),
            episode=int(row["episode"]),
            role=CHAT_ROLE_USER if row["role"] == "user" else CHAT_ROLE_ASSISTANT,
            text=row["text"],
            unavailable=bool(row["unavailable"]),
            wall_ms=float(row["wall_ms"]),
        )
    if rtype == "snapshot":
        return SnapshotRecord(
            session_id=row["session_id"],
            payload=base64.b64decode(row["payload_b64"]),
            wall_ms=float(row["wall_ms"]),
        )
    raise ConfigError("type", f"unknown record row type {rtype!r}")


def export_dataset(data_dir: str | Path, experiment_id: str, out_dir: str | Path) -> dict:
    """Write the archive; returns the manifest."""
    log_path = Path(data_dir) / f"{experiment_id}.log"
    if not log_path.exists():
        raise ConfigError("experiment_id", f"no record log at {log_path}")
    result = scan_log(log_path)
    if result.corrupt_at is not None:
        raise CodecError(result.corrupt_at, f"log corrupt: {result.message}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts: dict[str, int] = {}
    with open(out / "records.ndjson", "w", encoding="utf-8") as fh:
        for payload in result.payloads:
            row = record_to_row(decode_record(payload))
            counts[row["type"]] = counts.get(row["type"], 0) + 1
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    manifest = {
        "schema_version": RECORD_SCHEMA_VERSION,
        "experiment_id": experiment_id,
        "counts": dict(sorted(counts.items())),
        "total": sum(counts.values()),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def import_dataset(archive_dir: str | Path, data_dir: str | Path, experiment_id: str) -> int:
    """Rebuild a binary record log from an archive; returns record count."""
    archive = Path(archive_dir)
    manifest = json.loads((archive / "manifest.json").read_text(encoding="utf-8"))
    if manifest["schema_version"] != RECORD_SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported archive schema {manifest['schema_version']}")
    log_path = Path(data_dir) / f"{experiment_id}.log"
    if log_path.exists():
        raise ConfigError("data_dir", f"refusing to overwrite existing log {log_path}")
    store = LogStore(log_path)
    count = 0
    with open(archive / "records.ndjson", "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            store.append(encode_record(row_to_record(json.loads(line))))
            count += 1
    store.flush()
    store.close()
    if count != manifest["total"]:
        raise ConfigError("total", f"manifest says {manifest['total']} records, archive has {count}")
    return count
