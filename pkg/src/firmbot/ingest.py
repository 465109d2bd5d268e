"""Data pipeline: enquiry extraction, curation bookkeeping, baseline split.

Enquiry files carry a ``Key: value`` header block (Name, Subject, Service,
Email, Phone) ended by a blank line, then the free-text message body. The
pipeline keeps only the body, grouped into one plain-text file per service.

Curated utterances live in a CSV the operator edits (verdict column); kept
rows are split against a baseline model: recognized utterances become
regression cases, the rest become training data.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .dialog import route_utterance
from .errors import FormatError, UnknownLabel, ValidationError
from .model import HierarchyManifest
from .nlu import ClassifierModel

HEADER_KEYS = ("Name", "Subject", "Service", "Email", "Phone")

VERDICTS = (
    "pending",
    "discarded_relevance",
    "discarded_appropriateness",
    "discarded_clarity",
    "kept",
)
DESTINATIONS = ("training", "regression")


@dataclass
class EnquiryRecord:
    source_file: Path
    service: str
    message_body: str
    discarded_fields: int


@dataclass
class CurationItem:
    utterance: str
    label: str | None = None
    verdict: str = "pending"
    destination: str | None = None


def parse_enquiry(path: str | Path) -> EnquiryRecord:
    """Parse one enquiry file; FormatError when the header or body is off."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    headers: dict[str, str] = {}
    body_start = len(lines)
    for i, line in enumerate(lines):
        if not line.strip():
            body_start = i + 1
            break
        key, sep, value = line.partition(":")
        if not sep or key.strip() not in HEADER_KEYS:
            raise FormatError(f"{path}: line {i + 1}: expected a 'Key: value' header line, got {line!r}")
        headers[key.strip()] = value.strip()
    if "Service" not in headers:
        raise FormatError(f"{path}: header block has no Service field")
    body = "\n".join(lines[body_start:]).strip()
    if not body:
        raise FormatError(f"{path}: missing message body")
    return EnquiryRecord(
        source_file=path,
        service=headers["Service"],
        message_body=" ".join(body.split()),
        discarded_fields=len(headers) - 1,  # everything except Service is dropped
    )


def extract_enquiries(
    input_dir: str | Path, output_dir: str | Path
) -> tuple[list[EnquiryRecord], list[FormatError]]:
    """Extract message bodies from every *.txt enquiry under input_dir and
    write one <service>.txt per service (one body per line, atomically).

    Malformed files are skipped and returned as errors; the run continues.
    """
    input_dir = Path(input_dir)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    records: list[EnquiryRecord] = []
    errors: list[FormatError] = []
    for path in sorted(input_dir.glob("*.txt")):
        try:
            records.append(parse_enquiry(path))
        except FormatError as exc:
            errors.append(exc)
    by_service: dict[str, list[str]] = {}
    for record in records:
        by_service.setdefault(record.service, []).append(record.message_body)
    for service, bodies in sorted(by_service.items()):
        _atomic_write(output_dir / f"{service}.txt", "\n".join(bodies) + "\n")
    return records, errors


def _atomic_write(path: Path, content: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Curation CSV


def load_curation(path: str | Path) -> list[CurationItem]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["utterance", "label", "verdict", "destination"]
        if reader.fieldnames != expected:
            raise ValidationError(f"{path}: expected header {','.join(expected)}")
        items = []
        for row in reader:
            verdict = row["verdict"] or "pending"
            if verdict not in VERDICTS:
                raise ValidationError(f"{path}: unknown verdict {verdict!r}")
            destination = row["destination"] or None
            if destination is not None and destination not in DESTINATIONS:
                raise ValidationError(f"{path}: unknown destination {destination!r}")
            items.append(
                CurationItem(
                    utterance=row["utterance"],
                    label=row["label"] or None,
                    verdict=verdict,
                    destination=destination,
                )
            )
        return items


def save_curation(items: list[CurationItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["utterance", "label", "verdict", "destination"])
        for item in items:
            writer.writerow([item.utterance, item.label or "", item.verdict, item.destination or ""])


# ---------------------------------------------------------------------------
# Baseline split


def split_by_baseline(
    items: list[CurationItem],
    manifest: HierarchyManifest,
    models: dict[str, ClassifierModel],
) -> tuple[list[CurationItem], list[CurationItem]]:
    """Partition kept items into (training, regression).

    An item goes to regression when the baseline hierarchy resolves its
    utterance to its label with confidence at or above the resolving bot's
    threshold; everything else goes to training. Destinations are written
    onto the items; the two sets are disjoint and exhaustive over kept items.
    """
    known_intents = {it.name for bot in manifest.bots for it in bot.intents}
    training: list[CurationItem] = []
    regression: list[CurationItem] = []
    for item in items:
        if item.verdict != "kept":
            continue
        if not item.label:
            raise UnknownLabel(f"kept item {item.utterance!r} has no label")
        if item.label not in known_intents:
            raise UnknownLabel(f"label {item.label!r} names no intent in the manifest")
        routed = route_utterance(manifest, models, item.utterance)
        recognized = (
            routed.intent.name == item.label
            and routed.intent.kind != "fallback"
            and routed.confidence >= routed.bot.confidence_threshold
        )
        item.destination = "regression" if recognized else "training"
        (regression if recognized else training).append(item)
    return training, regression


def write_split_outputs(
    training: list[CurationItem],
    regression: list[CurationItem],
    manifest: HierarchyManifest,
    output_dir: str | Path,
) -> tuple[Path, Path]:
    """training.csv (utterance,label) and regression.csv in the harness's
    input format (index,utterance,expected_bot,expected_intent)."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    intent_owner = {
        it.name: bot.name for bot in manifest.bots for it in bot.intents
    }
    training_path = output_dir / "training.csv"
    with open(training_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["utterance", "label"])
        for item in training:
            writer.writerow([item.utterance, item.label])
    regression_path = output_dir / "regression.csv"
    with open(regression_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "utterance", "expected_bot", "expected_intent"])
        for i, item in enumerate(regression, start=1):
            writer.writerow([i, item.utterance, intent_owner[item.label], item.label])
    return training_path, regression_path
