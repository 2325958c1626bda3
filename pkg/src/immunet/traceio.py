"""Trace file formats and the line-based collector wire protocol.

File grammar (one record per line, ticks non-decreasing):

    immunet-trace antigen v1      header; then `<tick> <type>` lines
    immunet-trace signal v1       header; then `<tick> <p> <d> <s> <i>` lines
    immunet-trace mixed v1        header; then tagged wire lines (A/S)

Kind-specific files may also carry the tag (`A`/`S`) on each line; mixed
replay files must. Wire messages are space-delimited decimal fields:

    HELLO v1                      handshake, answered `OK v1`
    A <tick> <type>               one antigen event
    S <tick> <pamp> <danger> <safe> <inflammation>
    BYE                           end of feed, answered `OK bye`

Invalid lines are answered `ERR <reason>` and the connection stays open.
"""

from __future__ import annotations

import queue
import socketserver
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ProtocolError, SignalRangeError, TraceOrderError, TraceParseError
from .tissue import AntigenEvent, SignalSample

TRACE_MAGIC = "immunet-trace"
TRACE_VERSION = "v1"
TRACE_KINDS = ("antigen", "signal", "mixed")

WIRE_VERSION = "v1"
MAX_LINE_BYTES = 65536


@dataclass(frozen=True)
class WireMessage:
    """One parsed protocol line. Payload fields are tag-dependent."""

    tag: str
    event: AntigenEvent | None = None
    sample: SignalSample | None = None
    version: str | None = None


def _parse_unsigned(token: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ProtocolError("bad-number", f"{token!r} is not an integer") from None
    if value < 0:
        raise ProtocolError("bad-number", f"{token!r} is negative")
    return value


def _parse_real(token: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ProtocolError("bad-number", f"{token!r} is not a number") from None
    # Rejecting non-finite and negative values here keeps every parsed
    # sample inside the signal type's invariant.
    if value != value or value in (float("inf"), float("-inf")) or value < 0.0:
        raise ProtocolError("bad-number", f"{token!r} is not a non-negative real")
    return value


def parse_message(line: str) -> WireMessage:
    """Parse one wire line. Raises ProtocolError with a short reason token."""
    parts = line.split()
    if not parts:
        raise ProtocolError("empty-line")
    tag = parts[0]
    if tag == "A":
        if len(parts) != 3:
            raise ProtocolError("bad-field-count", "A needs <tick> <type>")
        tick = _parse_unsigned(parts[1])
        antigen_type = _parse_unsigned(parts[2])
        return WireMessage(tag="A", event=AntigenEvent(antigen_type, tick))
    if tag == "S":
        if len(parts) != 6:
            raise ProtocolError(
                "bad-field-count", "S needs <tick> <pamp> <danger> <safe> <inflammation>"
            )
        tick = _parse_unsigned(parts[1])
        pamp, danger, safe, inflammation = (_parse_real(t) for t in parts[2:6])
        return WireMessage(tag="S", sample=SignalSample(pamp, danger, safe, inflammation, tick))
    if tag == "HELLO":
        if len(parts) != 2:
            raise ProtocolError("bad-field-count", "HELLO needs a version")
        return WireMessage(tag="HELLO", version=parts[1])
    if tag == "BYE":
        if len(parts) != 1:
            raise ProtocolError("bad-field-count", "BYE takes no fields")
        return WireMessage(tag="BYE")
    raise ProtocolError("unknown-tag", tag)


def _fmt_real(value: float) -> str:
    return repr(float(value))


def render_message(message: WireMessage) -> str:
    """Inverse of parse_message: parse(render(m)) == m for valid messages."""
    if message.tag == "A":
        ev = message.event
        return f"A {ev.tick} {ev.antigen_type}"
    if message.tag == "S":
        s = message.sample
        return (
            f"S {s.tick} {_fmt_real(s.pamp)} {_fmt_real(s.danger)} "
            f"{_fmt_real(s.safe)} {_fmt_real(s.inflammation)}"
        )
    if message.tag == "HELLO":
        return f"HELLO {message.version}"
    if message.tag == "BYE":
        return "BYE"
    raise ProtocolError("unknown-tag", message.tag)


@dataclass
class TraceFile:
    kind: str
    antigen: list[AntigenEvent]
    signals: list[SignalSample]


def trace_header(kind: str) -> str:
    return f"{TRACE_MAGIC} {kind} {TRACE_VERSION}"


def write_antigen_trace(path: str | Path, events: Iterable[AntigenEvent]) -> None:
    lines = [trace_header("antigen")]
    lines.extend(f"{e.tick} {e.antigen_type}" for e in events)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_signal_trace(path: str | Path, samples: Iterable[SignalSample]) -> None:
    lines = [trace_header("signal")]
    lines.extend(
        f"{s.tick} {_fmt_real(s.pamp)} {_fmt_real(s.danger)} "
        f"{_fmt_real(s.safe)} {_fmt_real(s.inflammation)}"
        for s in samples
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_mixed_trace(path: str | Path, messages: Iterable[WireMessage]) -> None:
    """Write A/S messages as a tagged replay file, in the given order."""
    lines = [trace_header("mixed")]
    for m in messages:
        if m.tag not in ("A", "S"):
            raise ProtocolError("unknown-tag", f"mixed traces hold A/S lines, not {m.tag}")
        lines.append(render_message(m))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_trace_record(parts: list[str], kind: str, line_no: int) -> WireMessage:
    # Tagless lines take the file kind; tagged lines must agree with it.
    if kind == "antigen" and len(parts) == 2:
        parts = ["A"] + parts
    elif kind == "signal" and len(parts) == 5:
        parts = ["S"] + parts
    tag = parts[0] if parts else ""
    if kind == "antigen" and tag != "A":
        raise TraceParseError(f"expected an antigen record, got {' '.join(parts)!r}", line_no)
    if kind == "signal" and tag != "S":
        raise TraceParseError(f"expected a signal record, got {' '.join(parts)!r}", line_no)
    if kind == "mixed" and tag not in ("A", "S"):
        raise TraceParseError(f"mixed trace lines must be tagged A or S", line_no)
    try:
        return parse_message(" ".join(parts))
    except ProtocolError as exc:
        raise TraceParseError(str(exc), line_no) from None


def read_trace(
    path: str | Path,
    *,
    domain_size: int | None = None,
    signal_max: float | None = None,
) -> TraceFile:
    """Parse and validate a trace file.

    Ordering is always checked; domain and range checks run only when the
    caller supplies the bounds. Blank lines and `#` comments are skipped.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise TraceParseError("empty file: missing trace header", 1)
    header = lines[0].split()
    if len(header) != 3 or header[0] != TRACE_MAGIC or header[1] not in TRACE_KINDS:
        raise TraceParseError(f"bad trace header {lines[0]!r}", 1)
    if header[2] != TRACE_VERSION:
        raise TraceParseError(f"unsupported trace version {header[2]!r}", 1)
    kind = header[1]

    antigen: list[AntigenEvent] = []
    signals: list[SignalSample] = []
    prev_tick = None
    for line_no, raw in enumerate(lines[1:], start=2):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        message = _parse_trace_record(stripped.split(), kind, line_no)
        if message.tag == "A":
            event = message.event
            if domain_size is not None and not 0 <= event.antigen_type < domain_size:
                raise TraceParseError(
                    f"antigen_type {event.antigen_type} outside [0, {domain_size})", line_no
                )
            tick = event.tick
            antigen.append(event)
        else:
            sample = message.sample
            if signal_max is not None:
                for name, value in zip(
                    ("pamp", "danger", "safe", "inflammation"), sample.channel_values()
                ):
                    if not 0.0 <= value <= signal_max:
                        raise TraceParseError(
                            str(SignalRangeError(name, value, signal_max)), line_no
                        )
            tick = sample.tick
            signals.append(sample)
        if prev_tick is not None and tick < prev_tick:
            raise TraceOrderError(
                f"line {line_no}: tick {tick} regresses below {prev_tick}"
            )
        prev_tick = tick
    return TraceFile(kind=kind, antigen=antigen, signals=signals)


class _TraceHandler(socketserver.StreamRequestHandler):
    """One client connection. Never lets a bad line kill the server."""

    def _read_line(self) -> bytes | None:
        data = self.rfile.readline(MAX_LINE_BYTES + 1)
        if not data:
            return None
        if len(data) > MAX_LINE_BYTES and not data.endswith(b"\n"):
            # Drain the oversized line so the stream stays line-aligned.
            while True:
                chunk = self.rfile.readline(MAX_LINE_BYTES)
                if not chunk or chunk.endswith(b"\n"):
                    break
            raise ProtocolError("line-too-long")
        return data.rstrip(b"\r\n")

    def _reply(self, text: str) -> None:
        self.wfile.write(text.encode("utf-8") + b"\n")

    def handle(self) -> None:
        server: TraceServer = self.server.owner
        while True:
            try:
                raw = self._read_line()
            except ProtocolError as exc:
                try:
                    self._reply(f"ERR {exc.reason}")
                except OSError:
                    return
                continue
            except OSError:
                return
            if raw is None:
                return
            try:
                message = parse_message(raw.decode("utf-8", errors="replace"))
                if message.tag == "HELLO":
                    if message.version == WIRE_VERSION:
                        self._reply(f"OK {WIRE_VERSION}")
                    else:
                        self._reply("ERR unsupported-version")
                    continue
                if message.tag == "BYE":
                    self._reply("OK bye")
                    server.feed_done.set()
                    return
                server.ingest(message)
            except ProtocolError as exc:
                try:
                    self._reply(f"ERR {exc.reason}")
                except OSError:
                    return
            except OSError:
                return
            except Exception:
                # Defensive: arbitrary input must never crash the server.
                try:
                    self._reply("ERR internal")
                except OSError:
                    return


class _InnerServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class TraceServer:
    """Collector-facing TCP server feeding an ordered ingestion queue.

    Valid A/S messages are enqueued as (arrival_seq, message); everything
    else is answered inline. `feed_done` is set when a client sends BYE.
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        domain_size: int | None = None,
        signal_max: float | None = None,
    ):
        self.queue: "queue.Queue[tuple[int, WireMessage]]" = queue.Queue()
        self.feed_done = threading.Event()
        self._domain_size = domain_size
        self._signal_max = signal_max
        self._seq = 0
        self._seq_lock = threading.Lock()
        self._server = _InnerServer((host, port), _TraceHandler)
        self._server.owner = self
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def ingest(self, message: WireMessage) -> None:
        if message.tag == "A" and self._domain_size is not None:
            if not 0 <= message.event.antigen_type < self._domain_size:
                raise ProtocolError("domain")
        if message.tag == "S" and self._signal_max is not None:
            for value in message.sample.channel_values():
                if not 0.0 <= value <= self._signal_max:
                    raise ProtocolError("range")
        with self._seq_lock:
            seq = self._seq
            self._seq += 1
        self.queue.put((seq, message))

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def drain(self) -> list[WireMessage]:
        """Pop everything currently enqueued, in arrival order."""
        items = []
        while True:
            try:
                items.append(self.queue.get_nowait())
            except queue.Empty:
                break
        items.sort(key=lambda pair: pair[0])
        return [message for _, message in items]

    def __enter__(self) -> "TraceServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def split_messages(
    messages: Sequence[WireMessage],
) -> tuple[list[AntigenEvent], list[SignalSample]]:
    """Split an ingestion sequence into the two trace streams, preserving order."""
    antigen = [m.event for m in messages if m.tag == "A"]
    signals = [m.sample for m in messages if m.tag == "S"]
    return antigen, signals
