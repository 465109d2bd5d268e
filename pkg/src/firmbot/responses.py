"""The deterministic response table: (intent, service) -> response text.

Loaded from a CSV with header ``intent,service,text``; a ``*`` in the service
column is a wildcard row used when no per-service row matches.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, MissingResponse, ParseError
from .model import CONTROL_INTENTS, HierarchyManifest

WILDCARD = "*"


@dataclass
class ResponseTable:
    rows: dict[tuple[str, str], str] = field(default_factory=dict)

    def lookup(self, intent: str, service: str | None = None) -> str:
        """Exact (intent, service) row if present, else the wildcard row."""
        if service is not None:
            hit = self.rows.get((intent, service))
            if hit is not None:
                return hit
        hit = self.rows.get((intent, WILDCARD))
        if hit is None:
            raise MissingResponse(intent, service)
        return hit

    def has_wildcard(self, intent: str) -> bool:
        return (intent, WILDCARD) in self.rows

    def services_for(self, intent: str) -> set[str]:
        return {svc for (name, svc) in self.rows if name == intent and svc != WILDCARD}


def load_responses(path: str | Path) -> ResponseTable:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read responses {path}: {exc}") from exc
    return parse_responses(text, where=str(path))


def parse_responses(text: str, where: str = "<string>") -> ResponseTable:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{where}: empty response file") from None
    if [h.strip() for h in header] != ["intent", "service", "text"]:
        raise ParseError(f"{where}: expected header intent,service,text")
    table = ResponseTable()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"{where}: line {lineno}: expected 3 columns, got {len(row)}")
        intent, service, body = row[0].strip(), row[1].strip(), row[2]
        if not body:
            raise ParseError(f"{where}: line {lineno}: empty response text")
        key = (intent, service or WILDCARD)
        if key in table.rows:
            raise ParseError(f"{where}: line {lineno}: duplicate row for {key}")
        table.rows[key] = body
    return table


def save_responses(table: ResponseTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["intent", "service", "text"])
        for (intent, service), body in table.rows.items():
            writer.writerow([intent, service, body])


def validate_coverage(table: ResponseTable, manifest: HierarchyManifest) -> None:
    """Every intent the engine can answer with must have a row.

    FAQ intents with a service slot need either a wildcard row or one row per
    declared service value; everything else (plain FAQ, greet/goodbye,
    fallback, fact-finding completion) needs a wildcard row. Lists every
    missing pair in one error.
    """
    missing: list[tuple[str, str]] = []
    for bot in manifest.bots:
        for intent in bot.intents:
            if intent.kind == "delegation" or intent.name in CONTROL_INTENTS:
                continue
            service_slot = intent.service_slot() if intent.fulfillment == "respond_only" else None
            if service_slot is not None and intent.input_type is not None:
                slot_type = bot.slot_type(service_slot.slot_type)
                if slot_type.kind == "enumerated" and not table.has_wildcard(intent.name):
                    have = table.services_for(intent.name)
                    for value in slot_type.values:
                        if value.canonical_value not in have:
                            missing.append((intent.name, value.canonical_value))
                    continue
            if not table.has_wildcard(intent.name):
                # Without a service slot the engine may look this intent up
                # with any (or no) service, so a wildcard row is required.
                missing.append((intent.name, WILDCARD))
    if missing:
        listed = ", ".join(f"({i}, {s})" for i, s in sorted(set(missing)))
        raise ConfigError(f"response table is missing rows: {listed}")
