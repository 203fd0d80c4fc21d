"""Storage-agnostic result sinks: file, HTTP forwarding, and in-memory.

Every sink consumes the same canonical record: one compact JSON object per
envelope, fixed key order, newline-delimited when stored. The file sink
appends a line per envelope (with optional size-based rotation); the HTTP
sink POSTs the identical bytes and parks undeliverable envelopes in a local
outbox file rather than dropping them. Duplicate appends are tolerated and
collapsed at export time by envelope id.
"""

from __future__ import annotations

import json
import os
import threading
import time as _time
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Mapping

import requests

from .clock import Clock, SystemClock, format_timestamp, parse_timestamp
from .sessions import ResultEnvelope, StepResult

__all__ = [
    "ExportFilter",
    "FileSink",
    "HttpSink",
    "MemorySink",
    "ResultSink",
    "SinkAck",
    "SinkConfigError",
    "SinkDeliveryError",
    "UnreadableSinkError",
    "decode_record",
    "encode_record",
    "export_results",
    "sink_from_config",
]


class SinkConfigError(ValueError):
    """Sink configuration is malformed."""


class SinkDeliveryError(RuntimeError):
    """Delivery failed after retries; the envelope is parked, not lost."""

    def __init__(self, message: str, outbox: Path | None = None):
        super().__init__(message)
        self.outbox = outbox


class UnreadableSinkError(RuntimeError):
    """Export requested from a sink that cannot be read back."""


@dataclass(frozen=True)
class SinkAck:
    envelope_id: str
    sink_kind: str
    persisted_at: datetime
    attempts: int


# ---------------------------------------------------------------------------
# Canonical record codec

def _result_to_obj(result: StepResult) -> dict[str, Any]:
    if isinstance(result.answer, frozenset):
        answer: Any = sorted(result.answer)
    else:
        answer = result.answer
    return {
        "stepId": result.step_id,
        "itemId": result.item_id,
        "answer": answer,
        "presentedAt": format_timestamp(result.presented_at),
        "answeredAt": format_timestamp(result.answered_at),
    }


def _result_from_obj(obj: Mapping[str, Any]) -> StepResult:
    raw = obj["answer"]
    answer = frozenset(raw) if isinstance(raw, list) else raw
    return StepResult(
        step_id=obj["stepId"],
        answer=answer,
        presented_at=parse_timestamp(obj["presentedAt"]),
        answered_at=parse_timestamp(obj["answeredAt"]),
        item_id=obj.get("itemId"),
    )


def encode_record(envelope: ResultEnvelope) -> str:
    """One-line canonical JSON record (no trailing newline)."""
    obj = {
        "envelopeId": envelope.envelope_id,
        "sessionId": envelope.session_id,
        "participantId": envelope.participant_id,
        "studyId": envelope.study_id,
        "taskKind": envelope.task_kind,
        "schemaVersion": envelope.schema_version,
        "completedAt": format_timestamp(envelope.completed_at),
        "results": [_result_to_obj(r) for r in envelope.results],
    }
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def decode_record(line: str | bytes) -> ResultEnvelope:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    obj = json.loads(line)
    return ResultEnvelope(
        envelope_id=obj["envelopeId"],
        session_id=obj["sessionId"],
        participant_id=obj["participantId"],
        study_id=obj["studyId"],
        task_kind=obj["taskKind"],
        results=tuple(_result_from_obj(r) for r in obj["results"]),
        schema_version=obj["schemaVersion"],
        completed_at=parse_timestamp(obj["completedAt"]),
    )


# ---------------------------------------------------------------------------
# Sinks

class ResultSink:
    """Append-only destination for finalized envelopes."""

    kind: str = "abstract"

    def append(self, envelope: ResultEnvelope) -> SinkAck:
        raise NotImplementedError

    def read_all(self) -> list[ResultEnvelope]:
        raise UnreadableSinkError(f"{self.kind} sink cannot be read back")

    def close(self) -> None:
        pass


class MemorySink(ResultSink):
    kind = "memory"

    def __init__(self, clock: Clock | None = None):
        self._clock = clock or SystemClock()
        self._records: list[ResultEnvelope] = []
        self._lock = threading.Lock()

    def append(self, envelope: ResultEnvelope) -> SinkAck:
        with self._lock:
            self._records.append(envelope)
        return SinkAck(envelope.envelope_id, self.kind, self._clock.now(), attempts=1)

    def read_all(self) -> list[ResultEnvelope]:
        with self._lock:
            return list(self._records)


class FileSink(ResultSink):
    """Newline-delimited records in a file, rotated by size when configured.

    Rotation renames the live file to ``<path>.1``, ``<path>.2``, ... in
    ascending age-independent sequence; export reads rotations plus the
    live file.
    """

    kind = "file"

    def __init__(self, path: str | Path, max_bytes: int | None = None,
                 clock: Clock | None = None):
        self.path = Path(path)
        self.max_bytes = max_bytes
        self._clock = clock or SystemClock()
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def _rotate_if_needed(self, incoming: int) -> None:
        if self.max_bytes is None or not self.path.exists():
            return
        size = self.path.stat().st_size
        if size > 0 and size + incoming > self.max_bytes:
            n = 1
            while self._rotated_path(n).exists():
                n += 1
            self.path.rename(self._rotated_path(n))

    def _rotated_path(self, n: int) -> Path:
        return self.path.with_name(self.path.name + f".{n}")

    def rotated_paths(self) -> list[Path]:
        paths = []
        n = 1
        while self._rotated_path(n).exists():
            paths.append(self._rotated_path(n))
            n += 1
        return paths

    def append(self, envelope: ResultEnvelope) -> SinkAck:
        line = encode_record(envelope) + "\n"
        data = line.encode("utf-8")
        with self._lock:
            self._rotate_if_needed(len(data))
            with open(self.path, "ab") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
        return SinkAck(envelope.envelope_id, self.kind, self._clock.now(), attempts=1)

    def read_all(self) -> list[ResultEnvelope]:
        envelopes: list[ResultEnvelope] = []
        with self._lock:
            for path in [*self.rotated_paths(), self.path]:
                if not path.exists():
                    continue
                for line in path.read_text(encoding="utf-8").splitlines():
                    if line.strip():
                        envelopes.append(decode_record(line))
        return envelopes


class HttpSink(ResultSink):
    """POSTs the canonical record to an endpoint, retrying with backoff.

    The request body is byte-identical to a file-sink line (sans newline).
    After ``max_attempts`` failures the envelope is appended to the outbox
    file and :class:`SinkDeliveryError` is raised; nothing is dropped.
    """

    kind = "http"

    def __init__(self, endpoint: str, outbox_path: str | Path,
                 auth_token_env: str | None = None, max_attempts: int = 3,
                 backoff_base: float = 0.5, clock: Clock | None = None,
                 session: requests.Session | None = None,
                 sleeper: Callable[[float], None] = _time.sleep):
        if max_attempts < 1:
            raise SinkConfigError("maxAttempts must be >= 1")
        self.endpoint = endpoint
        self.outbox = Path(outbox_path)
        self.auth_token_env = auth_token_env
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._clock = clock or SystemClock()
        self._session = session or requests.Session()
        self._sleep = sleeper
        self._lock = threading.Lock()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.auth_token_env:
            token = os.environ.get(self.auth_token_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _park(self, record: str) -> None:
        self.outbox.parent.mkdir(parents=True, exist_ok=True)
        with open(self.outbox, "ab") as fh:
            fh.write((record + "\n").encode("utf-8"))
            fh.flush()
            os.fsync(fh.fileno())

    def append(self, envelope: ResultEnvelope) -> SinkAck:
        record = encode_record(envelope)
        last_error: str = ""
        with self._lock:
            for attempt in range(1, self.max_attempts + 1):
                try:
                    response = self._session.post(
                        self.endpoint, data=record.encode("utf-8"),
                        headers=self._headers(), timeout=30)
                    if 200 <= response.status_code < 300:
                        return SinkAck(envelope.envelope_id, self.kind,
                                       self._clock.now(), attempts=attempt)
                    last_error = f"HTTP {response.status_code}"
                except requests.RequestException as exc:
                    last_error = str(exc)
                if attempt < self.max_attempts:
                    self._sleep(self.backoff_base * (2 ** (attempt - 1)))
            self._park(record)
        raise SinkDeliveryError(
            f"delivery to {self.endpoint} failed after {self.max_attempts} attempts "
            f"({last_error}); envelope parked in {self.outbox}",
            outbox=self.outbox)


# ---------------------------------------------------------------------------
# Export

@dataclass(frozen=True)
class ExportFilter:
    study_id: str | None = None
    participant_id: str | None = None
    since: datetime | None = None   # inclusive lower bound on completedAt
    until: datetime | None = None   # exclusive upper bound

    def admits(self, envelope: ResultEnvelope) -> bool:
        if self.study_id is not None and envelope.study_id != self.study_id:
            return False
        if self.participant_id is not None and envelope.participant_id != self.participant_id:
            return False
        if self.since is not None and envelope.completed_at < self.since:
            return False
        if self.until is not None and envelope.completed_at >= self.until:
            return False
        return True


def export_results(sink: ResultSink, flt: ExportFilter | None = None) -> list[ResultEnvelope]:
    """Matching envelopes, deduplicated by id, ordered by (completedAt, id)."""
    flt = flt or ExportFilter()
    seen: set[str] = set()
    out: list[ResultEnvelope] = []
    for envelope in sink.read_all():
        if envelope.envelope_id in seen:
            continue
        seen.add(envelope.envelope_id)
        if flt.admits(envelope):
            out.append(envelope)
    out.sort(key=lambda e: (e.completed_at, e.envelope_id))
    return out


# ---------------------------------------------------------------------------
# Configuration
#
#   {"kind": "memory"}
#   {"kind": "file", "path": "results.ndjson", "maxBytes": 1048576}
#   {"kind": "http", "endpoint": "https://...", "outboxPath": "outbox.ndjson",
#    "authTokenEnv": "RESULTS_TOKEN", "maxAttempts": 3, "backoffBase": 0.5}

def sink_from_config(config: Mapping[str, Any], *, base_dir: Path | None = None,
                     clock: Clock | None = None) -> ResultSink:
    kind = config.get("kind")
    known = {"kind", "path", "maxBytes", "endpoint", "outboxPath",
             "authTokenEnv", "maxAttempts", "backoffBase"}
    stray = set(config) - known
    if stray:
        raise SinkConfigError(f"unknown sink config fields: {', '.join(sorted(stray))}")

    def resolve(raw: str) -> Path:
        path = Path(raw)
        return base_dir / path if (base_dir and not path.is_absolute()) else path

    if kind == "memory":
        return MemorySink(clock=clock)
    if kind == "file":
        if "path" not in config:
            raise SinkConfigError("file sink needs a path")
        return FileSink(resolve(config["path"]), max_bytes=config.get("maxBytes"), clock=clock)
    if kind == "http":
        for required in ("endpoint", "outboxPath"):
            if required not in config:
                raise SinkConfigError(f"http sink needs {required}")
        return HttpSink(
            endpoint=config["endpoint"],
            outbox_path=resolve(config["outboxPath"]),
            auth_token_env=config.get("authTokenEnv"),
            max_attempts=config.get("maxAttempts", 3),
            backoff_base=config.get("backoffBase", 0.5),
            clock=clock,
        )
    raise SinkConfigError(f"unknown sink kind {kind!r}")
