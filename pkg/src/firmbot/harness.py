"""Automated regression and conversation testing with accuracy reports.

Regression cases are single utterances classified through the full hierarchy
on a stateless pass. Conversation scripts replay multi-turn dialogues in a
fresh session each and check per-turn assertions (intent, response text,
slot values, lead emission, message count). Both produce a TestReport that
renders as a fixed-width table, CSV or JSON with a trailing accuracy line.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .dialog import Engine, route_utterance
from .errors import ScriptError, ValidationError
from .fulfillment import InMemoryFulfillment
from .model import HierarchyManifest
from .nlu import ClassifierModel

logger = logging.getLogger(__name__)

SCENARIO_TAGS = (
    "ff",
    "faq",
    "fallback_parent",
    "restart_resume",
    "ff_restart_resume",
    "faq_restart_resume",
    "ff_fallback",
    "faq_fallback",
    "faq_ff_faq",
    "ff_faq_ff",
    "faq_child_fallback",
    "ff_child_fallback",
)

ASSERTION_KEYS = ("intent", "response_contains", "slots", "lead_emitted", "message_count")


@dataclass
class RegressionCase:
    index: int
    utterance: str
    expected_bot: str
    expected_intent: str


@dataclass
class ScriptTurn:
    user: str
    expect: dict = field(default_factory=dict)


@dataclass
class ConversationScript:
    name: str
    scenario_tag: str
    turns: list[ScriptTurn]


@dataclass
class ReportRow:
    index: int
    name: str  # utterance or script name
    expected: str
    actual: str
    verdict: str  # "Pass" | "Fail"


@dataclass
class TestReport:
    rows: list[ReportRow]
    accuracy: float
    totals: tuple[int, int]  # (pass, fail)

    @property
    def all_passed(self) -> bool:
        return self.totals[1] == 0


def make_report(rows: list[ReportRow]) -> TestReport:
    npass = sum(1 for r in rows if r.verdict == "Pass")
    nfail = len(rows) - npass
    accuracy = npass / len(rows) if rows else 1.0
    if not rows:
        logger.warning("empty case list: reporting accuracy 1.0 over zero rows")
    return TestReport(rows=rows, accuracy=accuracy, totals=(npass, nfail))


# ---------------------------------------------------------------------------
# Regression


def load_regression_cases(path: str | Path) -> list[RegressionCase]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected_fields = ["index", "utterance", "expected_bot", "expected_intent"]
        if reader.fieldnames != expected_fields:
            raise ValidationError(f"{path}: expected header {','.join(expected_fields)}")
        return [
            RegressionCase(
                index=int(row["index"]),
                utterance=row["utterance"],
                expected_bot=row["expected_bot"],
                expected_intent=row["expected_intent"],
            )
            for row in reader
        ]


def run_regression(
    manifest: HierarchyManifest,
    models: dict[str, ClassifierModel],
    cases: list[RegressionCase],
) -> TestReport:
    for case in cases:
        try:
            bot = manifest.bot(case.expected_bot)
            bot.intent(case.expected_intent)
        except KeyError:
            raise ValidationError(
                f"case {case.index}: intent {case.expected_intent!r} not found in bot {case.expected_bot!r}"
            ) from None
    rows = []
    for case in cases:
        routed = route_utterance(manifest, models, case.utterance)
        actual = f"{routed.bot.name}/{routed.intent.name}"
        expected = f"{case.expected_bot}/{case.expected_intent}"
        verdict = "Pass" if actual == expected else "Fail"
        rows.append(ReportRow(case.index, case.utterance, expected, actual, verdict))
    return make_report(rows)


# ---------------------------------------------------------------------------
# Conversation scripts


def script_from_dict(doc: dict, where: str = "<script>") -> ConversationScript:
    for key in ("name", "scenario_tag", "turns"):
        if key not in doc:
            raise ScriptError(f"{where}: missing key {key!r}")
    if doc["scenario_tag"] not in SCENARIO_TAGS:
        raise ScriptError(f"{where}: unknown scenario_tag {doc['scenario_tag']!r}")
    turns = []
    if not doc["turns"]:
        raise ScriptError(f"{where}: script needs at least one turn")
    for i, turn in enumerate(doc["turns"]):
        if "user" not in turn:
            raise ScriptError(f"{where}: turn {i} missing 'user'")
        expect = turn.get("assert", {})
        for key in expect:
            if key not in ASSERTION_KEYS:
                raise ScriptError(f"{where}: turn {i} has unknown assertion {key!r}")
        turns.append(ScriptTurn(user=turn["user"], expect=expect))
    return ConversationScript(name=doc["name"], scenario_tag=doc["scenario_tag"], turns=turns)


def load_script(path: str | Path) -> ConversationScript:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScriptError(f"{path}: invalid JSON: {exc}") from exc
    return script_from_dict(doc, where=str(path))


def load_scripts(directory: str | Path) -> list[ConversationScript]:
    return [load_script(p) for p in sorted(Path(directory).glob("*.json"))]


@dataclass
class TurnOutcome:
    messages: list[str]
    buttons: list[tuple[str, str]] | None
    end_of_flow: bool
    intent: str | None
    slots: dict[str, str]
    leads_emitted: int


class BotSession(Protocol):
    def send(self, text: str) -> TurnOutcome: ...

    def close(self) -> None: ...


class InProcessSession:
    """Drives one Engine session directly."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self.state = engine.start_session()

    def send(self, text: str) -> TurnOutcome:
        self.state, response = self.engine.handle_turn(self.state, text)
        return TurnOutcome(
            messages=list(response.messages),
            buttons=list(response.buttons) if response.buttons else None,
            end_of_flow=response.end_of_flow,
            intent=self.state.last_routed_intent,
            slots=dict(self.state.filled_slots),
            leads_emitted=self.state.leads_emitted,
        )

    def close(self) -> None:
        pass


def in_process_factory(engine: Engine) -> Callable[[], InProcessSession]:
    return lambda: InProcessSession(engine)


class HttpSession:
    """Drives one session over the HTTP API; needs the admin endpoints for
    slot/intent/lead assertions."""

    def __init__(self, base_url: str, admin_token: str | None = None):
        import httpx

        self.client = httpx.Client(base_url=base_url, timeout=30.0)
        self.admin_headers = {"x-admin-token": admin_token} if admin_token else {}
        created = self.client.post("/v1/sessions")
        created.raise_for_status()
        self.session_id = created.json()["session_id"]

    def send(self, text: str) -> TurnOutcome:
        reply = self.client.post(f"/v1/sessions/{self.session_id}/messages", json={"text": text})
        reply.raise_for_status()
        body = reply.json()
        debug = self.client.get(f"/v1/admin/sessions/{self.session_id}", headers=self.admin_headers)
        debug.raise_for_status()
        info = debug.json()
        return TurnOutcome(
            messages=list(body["messages"]),
            buttons=[(b["label"], b["value"]) for b in body.get("buttons", [])] or None,
            end_of_flow=body["end_of_flow"],
            intent=info["last_routed_intent"],
            slots=dict(info["filled_slots"]),
            leads_emitted=info["leads_emitted"],
        )

    def close(self) -> None:
        try:
            self.client.delete(f"/v1/sessions/{self.session_id}")
        finally:
            self.client.close()


def http_factory(base_url: str, admin_token: str | None = None) -> Callable[[], HttpSession]:
    return lambda: HttpSession(base_url, admin_token)


def _check_turn(turn: ScriptTurn, outcome: TurnOutcome, leads_before: int) -> str | None:
    """First failed assertion description, or None when all hold."""
    expect = turn.expect
    for key in expect:
        if key not in ASSERTION_KEYS:
            raise ScriptError(f"unknown assertion {key!r}")
    if "intent" in expect and outcome.intent != expect["intent"]:
        return f"intent: expected {expect['intent']!r}, got {outcome.intent!r}"
    if "response_contains" in expect:
        needles = expect["response_contains"]
        if isinstance(needles, str):
            needles = [needles]
        joined = "\n".join(outcome.messages)
        for needle in needles:
            if needle not in joined:
                return f"response missing {needle!r}"
    if "slots" in expect:
        for name, value in expect["slots"].items():
            if outcome.slots.get(name) != value:
                return f"slot {name}: expected {value!r}, got {outcome.slots.get(name)!r}"
    if "lead_emitted" in expect:
        emitted = outcome.leads_emitted - leads_before
        if bool(expect["lead_emitted"]) != (emitted > 0):
            return f"lead_emitted: expected {expect['lead_emitted']}, delta was {emitted}"
    if "message_count" in expect and len(outcome.messages) != expect["message_count"]:
        return f"message_count: expected {expect['message_count']}, got {len(outcome.messages)}"
    return None


def run_conversation(
    session_factory: Callable[[], BotSession], scripts: list[ConversationScript]
) -> TestReport:
    rows = []
    for index, script in enumerate(scripts, start=1):
        failure = None
        session = session_factory()
        try:
            leads_before = 0
            for turn_no, turn in enumerate(script.turns):
                outcome = session.send(turn.user)
                problem = _check_turn(turn, outcome, leads_before)
                leads_before = outcome.leads_emitted
                if problem is not None:
                    failure = f"turn {turn_no} ({turn.user!r}): {problem}"
                    break
        except ScriptError as exc:
            failure = f"script error: {exc}"
        finally:
            session.close()
        rows.append(
            ReportRow(
                index=index,
                name=script.name,
                expected="all assertions hold",
                actual=failure or "all assertions hold",
                verdict="Fail" if failure else "Pass",
            )
        )
    return make_report(rows)


# ---------------------------------------------------------------------------
# Rendering


def render_report(report: TestReport, fmt: str = "text_table") -> str:
    if fmt == "text_table":
        return _render_text(report)
    if fmt == "csv":
        return _render_csv(report)
    if fmt == "json":
        return json.dumps(
            {
                "rows": [
                    {
                        "index": r.index,
                        "name": r.name,
                        "expected": r.expected,
                        "actual": r.actual,
                        "verdict": r.verdict,
                    }
                    for r in report.rows
                ],
                "accuracy": report.accuracy,
                "totals": {"pass": report.totals[0], "fail": report.totals[1]},
            },
            indent=2,
            ensure_ascii=False,
        )
    raise ValueError(f"unknown report format {fmt!r}")


def accuracy_line(report: TestReport) -> str:
    return f"accuracy: {report.accuracy * 100:.2f}%"


def _render_text(report: TestReport) -> str:
    headers = ["index", "name", "expected", "actual", "verdict"]
    table = [[str(r.index), r.name, r.expected, r.actual, r.verdict] for r in report.rows]
    widths = [max(len(h), *(len(row[i]) for row in table)) if table else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines.extend("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in table)
    if not report.rows:
        lines.append("(no cases; accuracy reported over zero rows)")
    lines.append(accuracy_line(report))
    return "\n".join(lines)


def _render_csv(report: TestReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["index", "name", "expected", "actual", "verdict"])
    for r in report.rows:
        writer.writerow([r.index, r.name, r.expected, r.actual, r.verdict])
    return buf.getvalue()


def parse_report_csv(text: str) -> TestReport:
    reader = csv.DictReader(io.StringIO(text))
    rows = [
        ReportRow(
            index=int(row["index"]),
            name=row["name"],
            expected=row["expected"],
            actual=row["actual"],
            verdict=row["verdict"],
        )
        for row in reader
    ]
    return make_report(rows)
