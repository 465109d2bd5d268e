"""Side-effect sinks: lead delivery and transcript logging.

Leads can go to a JSON-lines file, a stub email transport (RFC 5322 .eml
files), or stdout. Transcripts are JSON lines, one per user or bot turn.
Writes are serialized internally so concurrent sessions need no coordination.
"""

from __future__ import annotations

import json
import sys
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import SinkUnavailable

LEAD_SINKS = ("file", "smtp_stub", "stdout")


@dataclass
class SinkConfig:
    lead_sink: str = "stdout"
    lead_path: Path | None = None
    transcript_path: Path | None = None
    smtp: tuple[str, int, str, str] | None = None  # host, port, from, to
    eml_dir: Path | None = None  # stub transport output, default ./outbox

    def __post_init__(self) -> None:
        if self.lead_sink not in LEAD_SINKS:
            raise ValueError(f"unknown lead sink {self.lead_sink!r}")
        if self.lead_sink == "file" and self.lead_path is None:
            raise ValueError("file lead sink requires lead_path")


@dataclass
class LeadRecord:
    session_id: str
    service: str
    answers: list[tuple[str, str]]
    created_at: str  # RFC 3339

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "service": self.service,
            "answers": [{"slot": name, "value": value} for name, value in self.answers],
            "created_at": self.created_at,
        }


@dataclass
class DeliveryReceipt:
    sink_id: str
    sequence: int


def now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat()


def render_email_body(lead: LeadRecord) -> str:
    lines = [f"New enquiry for service: {lead.service}", ""]
    lines.extend(f"{name}: {value}" for name, value in lead.answers)
    lines.append("")
    lines.append(f"Received: {lead.created_at}")
    return "\n".join(lines)


class Fulfillment:
    """Delivers leads and logs transcript lines per a SinkConfig.

    Delivery is at-least-once: every accepted submit gets a receipt with a
    monotonically increasing sequence number that callers can use to dedup.
    """

    def __init__(self, config: SinkConfig, email_transport=None):
        self.config = config
        self._lock = threading.Lock()
        self._sequence = 0
        self._email_transport = email_transport or self._write_eml

    def submit_lead(self, lead: LeadRecord) -> DeliveryReceipt:
        if not lead.answers:
            raise ValueError("lead has no answers")
        with self._lock:
            self._sequence += 1
            sequence = self._sequence
            sink = self.config.lead_sink
            if sink == "file":
                self._append_line(self.config.lead_path, json.dumps(lead.to_dict(), ensure_ascii=False))
            elif sink == "smtp_stub":
                self._email_transport(lead, sequence)
            else:
                print(json.dumps(lead.to_dict(), ensure_ascii=False), file=sys.stdout)
        return DeliveryReceipt(sink_id=sink, sequence=sequence)

    def log_turn(
        self,
        session_id: str,
        role: str,
        text: str,
        timestamp: str | None = None,
        message_count: int | None = None,
    ) -> None:
        if self.config.transcript_path is None:
            return
        entry: dict = {
            "ts": timestamp or now_rfc3339(),
            "session": session_id,
            "role": role,
            "text": text,
        }
        if message_count is not None:
            entry["message_count"] = message_count
        with self._lock:
            self._append_line(self.config.transcript_path, json.dumps(entry, ensure_ascii=False))

    def _append_line(self, path: Path | None, line: str) -> None:
        if path is None:
            raise SinkUnavailable("sink path not configured")
        try:
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        except OSError as exc:
            raise SinkUnavailable(f"cannot write {path}: {exc}") from exc

    def _write_eml(self, lead: LeadRecord, sequence: int) -> None:
        out_dir = self.config.eml_dir or Path("outbox")
        smtp = self.config.smtp or ("localhost", 25, "bot@example.invalid", "leads@example.invalid")
        _, _, sender, recipient = smtp
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            eml = out_dir / f"lead-{sequence:06d}-{lead.session_id}.eml"
            headers = [
                f"From: {sender}",
                f"To: {recipient}",
                f"Subject: New enquiry: {lead.service}",
                f"Date: {lead.created_at}",
                "MIME-Version: 1.0",
                'Content-Type: text/plain; charset="utf-8"',
                "",
            ]
            eml.write_text("\n".join(headers) + render_email_body(lead) + "\n", encoding="utf-8")
        except OSError as exc:
            raise SinkUnavailable(f"cannot write eml to {out_dir}: {exc}") from exc


class InMemoryFulfillment(Fulfillment):
    """Test double: keeps leads and transcript lines in lists."""

    def __init__(self):
        super().__init__(SinkConfig(lead_sink="stdout"))
        self.leads: list[LeadRecord] = []
        self.transcript: list[dict] = []

    def submit_lead(self, lead: LeadRecord) -> DeliveryReceipt:
        if not lead.answers:
            raise ValueError("lead has no answers")
        with self._lock:
            self._sequence += 1
            self.leads.append(lead)
            return DeliveryReceipt(sink_id="memory", sequence=self._sequence)

    def log_turn(self, session_id, role, text, timestamp=None, message_count=None) -> None:
        entry = {
            "ts": timestamp or now_rfc3339(),
            "session": session_id,
            "role": role,
            "text": text,
        }
        if message_count is not None:
            entry["message_count"] = message_count
        with self._lock:
            self.transcript.append(entry)
