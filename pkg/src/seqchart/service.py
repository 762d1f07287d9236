"""Live learner sessions over compiled charts, with durable event logs.

The store compiles courses on demand (cached per strategy pipeline),
hosts one mutable runtime per session behind a per-session lock, and
appends every applied learner event to a line-delimited log so a crashed
service rebuilds its sessions by replay.

A posted event is followed by an auto-advance cascade: due timeouts and
emitted propagation events are pumped, exit points self-resolve while an
assessment outcome is recorded, and unambiguous entry choices are pushed
through, so the returned view always rests on a content unit, on an exit
boundary awaiting learner acknowledgment, or on global completion. One
logical tick elapses per engine step, exactly as in the simulator.
"""

from __future__ import annotations

import json
import threading
import uuid
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .compiler import CompilationMap, compile_tree
from .content import ActivityTree, ContentUnit, parse_manifest
from .errors import (
    CorruptLog,
    EventNotEnabled,
    InvalidStrategy,
    SeqchartError,
    SessionCompleted,
    SessionNotFound,
    UnknownCourse,
)
from .simulate import TraceRecord, at_global_final
from .statechart import (
    SUBMIT,
    Configuration,
    EvalContext,
    Event,
    Statechart,
    advance_clock,
    apply_effects,
    enabled_transitions,
    index_for,
    initial_configuration,
    leaf_path,
    step,
    timeout_record_pairs,
)
from .strategy import compose, parse_pipeline

ACTIVE = "active"
COMPLETED = "completed"
ABANDONED = "abandoned"

EXTERNAL_TYPES = ("next", "back", "submit")


# --------------------------------------------------------------------------
# course library


class CourseLibrary:
    """Manifests in a content directory, compiled and cached per pipeline."""

    def __init__(self, content_dir: str | Path):
        self.content_dir = Path(content_dir)
        self._lock = threading.Lock()
        self._cache: dict[tuple[str, str], tuple[Statechart, CompilationMap, ActivityTree]] = {}

    def course_ids(self) -> list[str]:
        return sorted(p.stem for p in self.content_dir.glob("*.json"))

    def resolve(self, course_id: str, strategy_doc: list | None):
        key = (course_id, json.dumps(strategy_doc or [], sort_keys=True))
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        path = self.content_dir / f"{course_id}.json"
        if not path.is_file():
            raise UnknownCourse(f"no course {course_id!r} in {self.content_dir}")
        tree = parse_manifest(path.read_text(encoding="utf-8"))
        chart, cmap = compile_tree(tree)
        if strategy_doc:
            pipeline = parse_pipeline(strategy_doc)
            from .strategy import apply as apply_strategy

            chart = apply_strategy(compose(pipeline), chart, cmap)
        entry = (chart, cmap, tree)
        with self._lock:
            self._cache[key] = entry
        return entry


# --------------------------------------------------------------------------
# session runtime


@dataclass
class _LiveSession:
    session_id: str
    course_id: str
    strategy_doc: list
    chart: Statechart
    cmap: CompilationMap
    tree: ActivityTree
    config: Configuration
    ctx: EvalContext
    status: str = ACTIVE
    seq: int = 0
    pending: deque = field(default_factory=deque)
    records: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def tid_map(self) -> dict[int, str]:
        return {id(tr): f"t{i}" for i, tr in enumerate(self.chart.transitions)}


@dataclass(frozen=True)
class RecoveryReport:
    recovered: tuple[str, ...]
    quarantined: dict[str, tuple[int, str]]


class SessionStore:
    def __init__(self, library: CourseLibrary, snapshot_dir: str | Path | None = None):
        self.library = library
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir is not None else None
        if self.snapshot_dir is not None:
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, _LiveSession] = {}
        self._lock = threading.Lock()

    # -- session lifecycle

    def create(self, course_id: str, strategy_doc: list | None = None, session_id: str | None = None,
               durable: bool = True) -> dict:
        if strategy_doc is not None and not isinstance(strategy_doc, list):
            raise InvalidStrategy("strategy must be a pipeline list")
        chart, cmap, tree = self.library.resolve(course_id, strategy_doc)
        sid = session_id or uuid.uuid4().hex[:12]
        session = _LiveSession(
            session_id=sid,
            course_id=course_id,
            strategy_doc=list(strategy_doc or []),
            chart=chart,
            cmap=cmap,
            tree=tree,
            config=initial_configuration(chart),
            ctx=EvalContext(),
        )
        session.records.append(
            TraceRecord(tick=0, path=tuple(leaf_path(chart, session.config)), event=None, fired=())
        )
        with session.lock:
            self._auto_advance(session)
            if durable:
                self._log_line(
                    session,
                    {"type": "created", "session_id": sid, "course_id": course_id,
                     "strategy": session.strategy_doc},
                )
                self._snapshot(session)
            view = self._view(session)
        with self._lock:
            self._sessions[sid] = session
        return view

    def get(self, session_id: str) -> dict:
        session = self._session(session_id)
        with session.lock:
            return self._view(session)

    def post(self, session_id: str, ext_type: str, score: float | None = None) -> dict:
        session = self._session(session_id)
        with session.lock:
            if session.status == COMPLETED:
                raise SessionCompleted(f"session {session_id} already completed")
            self._apply_external(session, ext_type, score)
            self._log_line(session, {"seq": session.seq, "type": ext_type, "score": score})
            session.seq += 1
            self._snapshot(session)
            return self._view(session)

    def trace_text(self, session_id: str) -> str:
        session = self._session(session_id)
        with session.lock:
            lines = [json.dumps(r.to_doc(), separators=(",", ":")) for r in session.records]
            lines.append(json.dumps({"status": session.status, "steps": max(0, len(session.records) - 1)},
                                    separators=(",", ":")))
            return "\n".join(lines) + "\n"

    def session_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._sessions)

    def snapshot_doc(self, session_id: str) -> dict:
        session = self._session(session_id)
        with session.lock:
            return _session_state_doc(session)

    # -- recovery

    def recover(self) -> RecoveryReport:
        """Rebuild sessions from their event logs; quarantine logs that do
        not replay. Already-loaded sessions are replaced by their logs."""
        if self.snapshot_dir is None:
            return RecoveryReport(recovered=(), quarantined={})
        recovered: list[str] = []
        quarantined: dict[str, tuple[int, str]] = {}
        for log_path in sorted(self.snapshot_dir.glob("*.log")):
            sid = log_path.stem
            try:
                self._replay_log(sid, log_path)
                recovered.append(sid)
            except CorruptLog as exc:
                with self._lock:
                    self._sessions.pop(sid, None)
                quarantined[sid] = (exc.line_no, str(exc))
                log_path.rename(log_path.with_suffix(".log.quarantined"))
        return RecoveryReport(recovered=tuple(recovered), quarantined=quarantined)

    def _replay_log(self, sid: str, log_path: Path) -> None:
        lines = log_path.read_text(encoding="utf-8").splitlines()
        if not lines:
            raise CorruptLog(sid, 0, "empty log")
        try:
            head = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise CorruptLog(sid, 1, f"unreadable header: {exc.msg}") from exc
        if head.get("type") != "created" or "course_id" not in head:
            raise CorruptLog(sid, 1, "log does not start with a created record")
        try:
            self.create(head["course_id"], head.get("strategy") or [], session_id=sid, durable=False)
        except SeqchartError as exc:
            raise CorruptLog(sid, 1, f"cannot recreate session: {exc}") from exc
        session = self._session(sid)
        for line_no, raw in enumerate(lines[1:], start=2):
            if not raw.strip():
                continue
            try:
                entry = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorruptLog(sid, line_no, f"unreadable event: {exc.msg}") from exc
            ext_type = entry.get("type")
            with session.lock:
                if session.status == COMPLETED:
                    raise CorruptLog(sid, line_no, "event after completion")
                try:
                    self._apply_external(session, ext_type, entry.get("score"))
                except (EventNotEnabled, SeqchartError) as exc:
                    raise CorruptLog(sid, line_no, f"event not enabled at this step: {exc}") from exc
                session.seq += 1

    # -- internals

    def _session(self, session_id: str) -> _LiveSession:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionNotFound(f"no session {session_id!r}")
        return session

    def _engine_step(self, session: _LiveSession, event: Event):
        new_now = session.ctx.now + 1
        timeouts = advance_clock(session.chart, session.config, session.ctx, new_now)
        if timeouts:
            session.ctx = session.ctx.with_timeouts_recorded(
                timeout_record_pairs(session.config, timeouts)
            )
            session.pending.extend(timeouts)
        session.ctx = session.ctx.with_now(new_now)
        result = step(session.chart, session.config, event, session.ctx)
        session.ctx = apply_effects(session.ctx, result.fired)
        session.pending.extend(result.emitted)
        session.config = result.config
        tid_of = session.tid_map()
        recorded = None
        for tr in result.fired:
            if tr.effects.outcome is not None:
                recorded = tr.effects.outcome
        session.records.append(
            TraceRecord(
                tick=session.ctx.now,
                path=tuple(leaf_path(session.chart, session.config)),
                event=event,
                fired=tuple(tid_of[id(tr)] for tr in result.fired),
                score=event.score,
                outcome=recorded,
            )
        )
        return result

    def _apply_external(self, session: _LiveSession, ext_type: str, score: float | None) -> None:
        # due timeouts preempt the learner's event
        self._drain_timeouts(session)
        self._auto_advance(session)
        if session.status == COMPLETED:
            raise SessionCompleted("course completed while the event was in flight")
        event = self._translate(session, ext_type, score)
        if event.kind == SUBMIT:
            session.ctx = session.ctx.with_score(event.score)
        result = self._engine_step(session, event)
        if not result.fired and not session.pending:
            session.records.pop()
            raise EventNotEnabled(
                f"event {ext_type!r} not enabled", self._external_available(session)
            )
        self._auto_advance(session)

    def _drain_timeouts(self, session: _LiveSession) -> None:
        due = advance_clock(session.chart, session.config, session.ctx, session.ctx.now)
        if due:
            session.ctx = session.ctx.with_timeouts_recorded(timeout_record_pairs(session.config, due))
            session.pending.extend(due)

    def _translate(self, session: _LiveSession, ext_type: str, score: float | None) -> Event:
        if ext_type not in EXTERNAL_TYPES:
            raise EventNotEnabled(f"unknown event type {ext_type!r}", self._external_available(session))
        if ext_type == "submit":
            if score is None or not isinstance(score, (int, float)) or not 0.0 <= float(score) <= 1.0:
                raise EventNotEnabled("submit needs a score in [0, 1]", self._external_available(session))
            if "submit" not in self._external_available(session):
                raise EventNotEnabled("no assessment awaiting submission", self._external_available(session))
            return Event.submit(float(score))
        if ext_type == "back":
            if self._enabled(session, Event.back()):
                return Event.back()
            raise EventNotEnabled("back is not enabled here", self._external_available(session))
        # "next" advances through content or acknowledges a boundary
        if self._enabled(session, Event.next()):
            return Event.next()
        if self._enabled(session, Event.enter()):
            return Event.enter()
        raise EventNotEnabled("next is not enabled here", self._external_available(session))

    def _enabled(self, session: _LiveSession, event: Event) -> bool:
        return bool(enabled_transitions(session.chart, session.config, event, session.ctx))

    def _external_available(self, session: _LiveSession) -> list[str]:
        if session.status == COMPLETED or at_global_final(session.chart, session.config):
            return []
        out = []
        if self._enabled(session, Event.next()) or self._enabled(session, Event.enter()):
            out.append("next")
        if self._enabled(session, Event.back()):
            out.append("back")
        index = index_for(session.chart)
        for sid in session.config.active:
            for _, tr in index.by_source.get(sid, ()):
                if tr.event.kind == SUBMIT:
                    out.append("submit")
                    break
            if "submit" in out:
                break
        return out

    def _auto_advance(self, session: _LiveSession) -> None:
        """Pump internal events, outcome-bearing exit points, and
        unambiguous entry choices until the view rests somewhere meaningful."""
        exits = {s for s in session.cmap.exit_of.values() if session.cmap.is_exit(s)}
        entries = {s for s in session.cmap.entry_of.values() if session.cmap.is_entry(s)}
        for _ in range(10_000):
            if at_global_final(session.chart, session.config):
                session.status = COMPLETED
                return
            if session.pending:
                event = session.pending.popleft()
                self._engine_step(session, event)
                continue
            active_exit = next((s for s in session.config.active if s in exits), None)
            if active_exit is not None and session.ctx.last_outcome is not None:
                self._engine_step(session, Event.enter())
                continue
            active_entry = next((s for s in session.config.active if s in entries), None)
            if active_entry is not None:
                if self._enabled(session, Event.enter()) and not self._enabled(session, Event.next()):
                    self._engine_step(session, Event.enter())
                    continue
            return
        raise SeqchartError("auto-advance did not settle; chart likely pathological")

    def _view(self, session: _LiveSession) -> dict:
        path = leaf_path(session.chart, session.config)
        state_to_node = {v: k for k, v in session.cmap.node_state.items()}
        breadcrumbs = [state_to_node[s] for s in path if s in state_to_node]
        unit = None
        position = "completed" if session.status == COMPLETED else "entry"
        unit_to_id = {v: k for k, v in session.cmap.unit_state.items()}
        exits = {s for s in session.cmap.exit_of.values() if session.cmap.is_exit(s)}
        for sid in path:
            if sid in unit_to_id:
                unit = _unit_doc(_find_unit(session.tree, unit_to_id[sid]))
                position = "unit"
            elif sid in exits:
                position = "exit" if session.status != COMPLETED else "completed"
        attempts = 0
        for sid in session.config.active:
            attempts = max(attempts, session.ctx.attempt_count.get(sid, 0))
        return {
            "session_id": session.session_id,
            "course_id": session.course_id,
            "status": session.status,
            "tick": session.ctx.now,
            "breadcrumbs": breadcrumbs,
            "position": position,
            "current_unit": unit,
            "available_events": self._external_available(session),
            "attempts": attempts,
        }

    # -- durability

    def _log_path(self, session: _LiveSession) -> Path | None:
        if self.snapshot_dir is None:
            return None
        return self.snapshot_dir / f"{session.session_id}.log"

    def _log_line(self, session: _LiveSession, doc: dict) -> None:
        path = self._log_path(session)
        if path is None:
            return
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(doc, separators=(",", ":")) + "\n")
            fh.flush()

    def _snapshot(self, session: _LiveSession) -> None:
        if self.snapshot_dir is None:
            return
        path = self.snapshot_dir / f"{session.session_id}.snapshot.json"
        path.write_text(json.dumps(_session_state_doc(session), separators=(",", ":")), encoding="utf-8")


def _session_state_doc(session: _LiveSession) -> dict:
    return {
        "session_id": session.session_id,
        "status": session.status,
        "seq": session.seq,
        "config": {
            "active": sorted(session.config.active),
            "entered_at": {k: session.config.entered_at[k] for k in sorted(session.config.entered_at)},
        },
        "ctx": {
            "attempt_count": {k: session.ctx.attempt_count[k] for k in sorted(session.ctx.attempt_count)},
            "last_score": session.ctx.last_score,
            "last_outcome": session.ctx.last_outcome,
            "has_next": {k: session.ctx.has_next[k] for k in sorted(session.ctx.has_next)},
            "now": session.ctx.now,
        },
    }


def _find_unit(tree: ActivityTree, unit_id: str) -> ContentUnit:
    for item in tree.items():
        for unit in item.units:
            if unit.id == unit_id:
                return unit
    raise KeyError(unit_id)


def _unit_doc(unit: ContentUnit) -> dict:
    doc = {"id": unit.id, "kind": unit.kind, "payload_ref": unit.payload_ref}
    if unit.mastery_score is not None:
        doc["mastery_score"] = unit.mastery_score
    if unit.time_limit is not None:
        doc["time_limit"] = unit.time_limit
    return doc


# --------------------------------------------------------------------------
# HTTP layer


def make_handler(store: SessionStore):
    class Handler(BaseHTTPRequestHandler):
        server_version = "seqchart"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, code: int, doc: object, content_type: str = "application/json") -> None:
            body = (
                doc.encode("utf-8")
                if isinstance(doc, str)
                else json.dumps(doc, separators=(",", ":")).encode("utf-8")
            )
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b"{}"
            try:
                doc = json.loads(raw.decode("utf-8") or "{}")
            except json.JSONDecodeError:
                raise ValueError("request body is not valid JSON")
            if not isinstance(doc, dict):
                raise ValueError("request body must be a JSON object")
            return doc

        def do_OPTIONS(self):  # CORS preflight for the browser player
            self._send(204, "")

        def do_GET(self):
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            try:
                if parts == ["courses"]:
                    self._send(200, {"courses": store.library.course_ids()})
                elif len(parts) == 2 and parts[0] == "sessions":
                    self._send(200, store.get(parts[1]))
                elif len(parts) == 3 and parts[0] == "sessions" and parts[2] == "trace":
                    self._send(200, store.trace_text(parts[1]), content_type="application/x-ndjson")
                else:
                    self._send(404, {"error": f"no route {self.path!r}"})
            except SessionNotFound as exc:
                self._send(404, {"error": str(exc)})
            except SeqchartError as exc:
                self._send(400, {"error": str(exc)})

        def do_POST(self):
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            try:
                body = self._read_body()
                if parts == ["sessions"]:
                    course_id = body.get("course_id")
                    if not course_id:
                        self._send(400, {"error": "course_id is required"})
                        return
                    view = store.create(course_id, body.get("strategy"))
                    self._send(201, view)
                elif len(parts) == 3 and parts[0] == "sessions" and parts[2] == "events":
                    view = store.post(parts[1], body.get("type"), body.get("score"))
                    self._send(200, view)
                else:
                    self._send(404, {"error": f"no route {self.path!r}"})
            except ValueError as exc:
                self._send(400, {"error": str(exc)})
            except UnknownCourse as exc:
                self._send(404, {"error": str(exc)})
            except SessionNotFound as exc:
                self._send(404, {"error": str(exc)})
            except InvalidStrategy as exc:
                self._send(400, {"error": str(exc)})
            except EventNotEnabled as exc:
                self._send(409, {"error": str(exc), "available_events": exc.available})
            except SessionCompleted as exc:
                self._send(409, {"error": str(exc), "available_events": []})
            except SeqchartError as exc:
                self._send(400, {"error": str(exc)})

    return Handler


def make_server(store: SessionStore, port: int, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    return ThreadingHTTPServer((host, port), make_handler(store))
