"""The conversation engine.

One Engine serves many sessions: it owns the compiled hierarchy, the per-bot
classifier models and the response table (all immutable), while every mutable
fact about a conversation lives in its SessionState. A turn is processed in a
fixed order: pending confirmation, follow-up pattern, pending slot fill, then
hierarchical classification.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from typing import Callable

from .errors import ConfigError, EngineError, SinkUnavailable
from .fulfillment import Fulfillment, InMemoryFulfillment, LeadRecord, now_rfc3339
from .model import (
    CONTROL_INTENTS,
    BotDefinition,
    HierarchyManifest,
    IntentDef,
    SlotRef,
)
from .nlu import (
    ClassifierModel,
    NormalizedUtterance,
    build_all_models,
    classify,
    extract_slot,
    normalize,
    parse_yes_no,
)
from .responses import ResponseTable, validate_coverage

# The dummy value a free-form slot holds while the next utterance is awaited.
SENTINEL_VALUE = "to_be_filled"

CONFIRM_RESTART = "Are you sure you want to restart?"
CONFIRM_RESUME = "Are you sure you want to resume?"
CONFIRM_REPEAT = "Please answer yes or no."
RESTART_DONE = "The session has been restarted. How can we help you?"
NOTHING_TO_RESUME = "There is nothing to resume just yet."
RESUME_ACK = "Resuming where we left off."
CONFIRM_DECLINED = "No problem, we will carry on where we were."
CONSENT_DECLINED = "No problem. If you change your mind we are happy to help at any time."

YES_NO_BUTTONS = [("Yes", "yes"), ("No", "no")]


@dataclass
class BotResponse:
    messages: list[str]
    buttons: list[tuple[str, str]] | None = None
    end_of_flow: bool = False


@dataclass
class SessionState:
    session_id: str
    filled_slots: dict[str, str] = field(default_factory=dict)
    pending_slot: tuple[str, str] | None = None  # (intent, slot name)
    active_intent: str | None = None
    last_input_type: str | None = None
    last_service: str | None = None
    pending_confirmation: str | None = None  # "restart" | "resume"
    snapshot: dict | None = None
    transcript: list[tuple[str, str, str]] = field(default_factory=list)  # (role, text, ts)
    # Diagnostics for the test harness; carried along but never read by the
    # engine's own control flow.
    last_routed_bot: str | None = None
    last_routed_intent: str | None = None
    leads_emitted: int = 0

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "filled_slots": dict(self.filled_slots),
            "pending_slot": list(self.pending_slot) if self.pending_slot else None,
            "active_intent": self.active_intent,
            "last_input_type": self.last_input_type,
            "last_service": self.last_service,
            "pending_confirmation": self.pending_confirmation,
            "snapshot": self.snapshot,
            "transcript": [list(entry) for entry in self.transcript],
            "last_routed_bot": self.last_routed_bot,
            "last_routed_intent": self.last_routed_intent,
            "leads_emitted": self.leads_emitted,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SessionState":
        return cls(
            session_id=doc["session_id"],
            filled_slots=dict(doc.get("filled_slots", {})),
            pending_slot=tuple(doc["pending_slot"]) if doc.get("pending_slot") else None,
            active_intent=doc.get("active_intent"),
            last_input_type=doc.get("last_input_type"),
            last_service=doc.get("last_service"),
            pending_confirmation=doc.get("pending_confirmation"),
            snapshot=doc.get("snapshot"),
            transcript=[tuple(entry) for entry in doc.get("transcript", [])],
            last_routed_bot=doc.get("last_routed_bot"),
            last_routed_intent=doc.get("last_routed_intent"),
            leads_emitted=int(doc.get("leads_emitted", 0)),
        )


@dataclass
class RouteResult:
    bot: BotDefinition
    intent: IntentDef
    confidence: float
    path: list[tuple[str, str, float]]  # (bot, top intent, confidence) per level

    @property
    def root_confidence(self) -> float:
        return self.path[0][2]


def route_utterance(
    manifest: HierarchyManifest, models: dict[str, ClassifierModel], text: str
) -> RouteResult:
    """Classify an utterance through the hierarchy, starting at the root and
    descending through delegation intents. Falls back at whichever bot first
    scores below its own confidence threshold."""
    utt = normalize(text)
    bot = manifest.root_bot()
    path: list[tuple[str, str, float]] = []
    while True:
        result = classify(models[bot.name], utt)
        path.append((bot.name, result.top_intent, result.top_confidence))
        if result.top_confidence < bot.confidence_threshold:
            return RouteResult(bot=bot, intent=bot.fallback_intent(), confidence=result.top_confidence, path=path)
        intent = bot.intent(result.top_intent)
        if intent.kind == "delegation":
            bot = manifest.bot(intent.child_bot)
            continue
        return RouteResult(bot=bot, intent=intent, confidence=result.top_confidence, path=path)


# ---------------------------------------------------------------------------
# Response splitting


def _single_letter_before(text: str, i: int) -> bool:
    if i == 0:
        return False
    if not text[i - 1].isalpha():
        return False
    return not (i >= 2 and text[i - 2].isalpha())


def split_sentences(text: str) -> list[str]:
    """Split on runs of '.', '!', '?' followed by whitespace or end of text.
    A lone dot right after a single letter (an initial) is not a boundary."""
    sentences: list[str] = []
    i = 0
    start = 0
    n = len(text)
    while i < n:
        if text[i] in ".!?":
            j = i
            while j < n and text[j] in ".!?":
                j += 1
            if j >= n or text[j].isspace():
                if not (j - i == 1 and text[i] == "." and _single_letter_before(text, i)):
                    piece = text[start:j].strip()
                    if piece:
                        sentences.append(piece)
                    while j < n and text[j].isspace():
                        j += 1
                    start = j
            i = j
        else:
            i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def split_response(text: str) -> list[str]:
    """Greedily group sentences into messages of at most three sentences."""
    sentences = split_sentences(text)
    return [" ".join(sentences[k : k + 3]) for k in range(0, len(sentences), 3)]


# ---------------------------------------------------------------------------
# Engine


class Engine:
    def __init__(
        self,
        manifest: HierarchyManifest,
        responses: ResponseTable,
        fulfillment: Fulfillment | None = None,
        models: dict[str, ClassifierModel] | None = None,
        clock: Callable[[], str] | None = None,
    ):
        if not manifest.compiled:
            raise ConfigError("engine requires a compiled manifest")
        validate_coverage(responses, manifest)
        self.manifest = manifest
        self.responses = responses
        self.models = models or build_all_models(manifest)
        self.fulfillment = fulfillment or InMemoryFulfillment()
        self._now = clock or now_rfc3339
        self._pending_leads: list[LeadRecord] = []
        self._known_services = self._collect_services()

    def _collect_services(self) -> set[str]:
        services = {
            it.service for bot in self.manifest.bots for it in bot.intents if it.service
        }
        services.update(svc for (_, svc) in self.responses.rows if svc != "*")
        return services

    # -- session lifecycle

    def start_session(self) -> SessionState:
        """Fresh empty state; the user speaks first, no greeting is pushed."""
        return SessionState(session_id=uuid.uuid4().hex)

    def handle_turn(self, state: SessionState, user_text: str) -> tuple[SessionState, BotResponse]:
        ts = self._now()
        state.transcript.append(("user", user_text, ts))
        self._log(state.session_id, "user", user_text, ts)
        response = self._dispatch(state, user_text)
        response.end_of_flow = state.pending_slot is None and state.pending_confirmation is None
        bot_ts = self._now()
        joined = "\n".join(response.messages)
        state.transcript.append(("bot", joined, bot_ts))
        self._log(state.session_id, "bot", joined, bot_ts, message_count=len(response.messages))
        return state, response

    def _log(self, session_id: str, role: str, text: str, ts: str, message_count: int | None = None) -> None:
        try:
            self.fulfillment.log_turn(session_id, role, text, ts, message_count=message_count)
        except SinkUnavailable:
            pass  # transcript loss is non-fatal

    # -- turn dispatch, in the normative order

    def _dispatch(self, state: SessionState, text: str) -> BotResponse:
        if state.pending_confirmation:
            return self._handle_confirmation(state, text)
        norm = normalize(text)
        if state.last_input_type and norm.tokens[:2] in (["how", "about"], ["what", "about"]):
            return self._do_followup(state, text, norm)
        if state.pending_slot:
            return self._handle_pending_slot(state, text, norm)
        return self._route_and_handle(state, norm)

    # (1) restart/resume confirmation

    def _handle_confirmation(self, state: SessionState, text: str) -> BotResponse:
        kind = state.pending_confirmation
        question = CONFIRM_RESTART if kind == "restart" else CONFIRM_RESUME
        answer = parse_yes_no(text)
        if answer is None:
            return BotResponse(messages=split_response(f"{CONFIRM_REPEAT} {question}"), buttons=list(YES_NO_BUTTONS))
        state.pending_confirmation = None
        if answer == "no":
            messages = [CONFIRM_DECLINED]
            pending = self._pending_ref(state)
            if pending is not None:
                bot, intent, ref = pending
                messages.extend(split_response(ref.prompt))
                return BotResponse(messages=messages, buttons=self._slot_buttons(bot, ref))
            return BotResponse(messages=messages)
        if kind == "restart":
            if state.pending_slot is not None:
                state.snapshot = self._take_snapshot(state)
            state.filled_slots = {}
            state.pending_slot = None
            state.active_intent = None
            state.last_input_type = None
            state.last_service = None
            return BotResponse(messages=split_response(RESTART_DONE))
        # resume
        snap = state.snapshot
        if snap is None:
            return BotResponse(messages=[NOTHING_TO_RESUME])
        state.filled_slots = dict(snap["filled_slots"])
        state.pending_slot = tuple(snap["pending_slot"])
        state.active_intent = snap["active_intent"]
        state.snapshot = None
        pending = self._pending_ref(state)
        if pending is None:
            raise EngineError("snapshot restored without a pending slot")
        bot, intent, ref = pending
        return BotResponse(
            messages=[RESUME_ACK, *split_response(ref.prompt)], buttons=self._slot_buttons(bot, ref)
        )

    def _take_snapshot(self, state: SessionState) -> dict:
        return {
            "filled_slots": dict(state.filled_slots),
            "pending_slot": list(state.pending_slot) if state.pending_slot else None,
            "active_intent": state.active_intent,
        }

    # (2) "How about…" / "What about…" follow-ups

    def _do_followup(self, state: SessionState, text: str, norm: NormalizedUtterance) -> BotResponse:
        found = self.manifest.find_input_type(state.last_input_type)
        if found is None:
            raise EngineError(f"no intent carries input type {state.last_input_type!r}")
        bot, intent = found
        state.last_routed_bot, state.last_routed_intent = bot.name, intent.name
        ref = intent.service_slot()
        service = None
        if ref is not None:
            slot_type = bot.slot_type(ref.slot_type)
            remainder = NormalizedUtterance(raw=text, tokens=norm.tokens[2:])
            match = extract_slot(bot, slot_type, remainder, ref.name)
            if match is not None:
                service = match.value
        if service is not None:
            state.last_service = service
            state.filled_slots[ref.name] = service
            return BotResponse(messages=split_response(self.responses.lookup(intent.name, service)))
        if ref is not None:
            return self._prompt_slot(state, bot, intent, ref)
        return BotResponse(messages=split_response(self.responses.lookup(intent.name, state.last_service)))

    def resolve_followup(self, state: SessionState, user_text: str) -> tuple[SessionState, BotResponse]:
        """Public form of the follow-up resolution step."""
        return state, self._do_followup(state, user_text, normalize(user_text))

    # (3) pending slot fill

    def _pending_ref(self, state: SessionState) -> tuple[BotDefinition, IntentDef, SlotRef] | None:
        if state.pending_slot is None:
            return None
        intent_name, slot_name = state.pending_slot
        found = self.manifest.find_intent(intent_name)
        if found is None:
            raise EngineError(f"pending slot references unknown intent {intent_name!r}")
        bot, intent = found
        for ref in intent.slots:
            if ref.name == slot_name:
                return bot, intent, ref
        raise EngineError(f"pending slot {slot_name!r} not declared on intent {intent_name!r}")

    def _handle_pending_slot(self, state: SessionState, text: str, norm: NormalizedUtterance) -> BotResponse:
        bot, intent, ref = self._pending_ref(state)  # type: ignore[misc]
        slot_type = bot.slot_type(ref.slot_type)
        state.last_routed_bot, state.last_routed_intent = bot.name, intent.name
        if slot_type.kind == "free_form":
            if state.filled_slots.get(ref.name) != SENTINEL_VALUE:
                raise EngineError(f"free-form slot {ref.name!r} pending without sentinel")
            value = text.strip()
            if not value or value == SENTINEL_VALUE:
                return BotResponse(messages=split_response(ref.prompt))
            state.filled_slots[ref.name] = value
            return self._advance(state, bot, intent)
        match = extract_slot(bot, slot_type, norm, ref.name)
        if match is not None:
            if (
                intent.fulfillment == "collect_lead"
                and slot_type.builtin_id == "yes_no"
                and intent.ordered_slots()[0].name == ref.name
                and match.value == "no"
            ):
                # Declined consent: end the flow politely, no lead.
                state.pending_slot = None
                state.active_intent = None
                return BotResponse(messages=split_response(CONSENT_DECLINED))
            state.filled_slots[ref.name] = match.value
            return self._advance(state, bot, intent)
        # Could not fill; see whether the utterance is a confident intent of
        # its own, otherwise re-prompt.
        routed = route_utterance(self.manifest, self.models, text)
        root = self.manifest.root_bot()
        if routed.root_confidence >= root.confidence_threshold and routed.intent.kind != "fallback":
            if routed.bot.name == root.name and routed.intent.name in CONTROL_INTENTS:
                state.last_routed_bot, state.last_routed_intent = routed.bot.name, routed.intent.name
                return self._restart_or_resume_response(state, routed.intent.name)
            if routed.intent.name != state.active_intent:
                state.snapshot = self._take_snapshot(state)
                state.pending_slot = None
                state.active_intent = None
                state.last_routed_bot, state.last_routed_intent = routed.bot.name, routed.intent.name
                return self._handle_resolved(state, routed, norm)
        return BotResponse(messages=split_response(ref.prompt), buttons=self._slot_buttons(bot, ref))

    # (4) hierarchical classification

    def _route_and_handle(self, state: SessionState, norm: NormalizedUtterance) -> BotResponse:
        routed = route_utterance(self.manifest, self.models, norm.raw)
        state.last_routed_bot, state.last_routed_intent = routed.bot.name, routed.intent.name
        return self._handle_resolved(state, routed, norm)

    def _handle_resolved(self, state: SessionState, routed: RouteResult, norm: NormalizedUtterance) -> BotResponse:
        bot, intent = routed.bot, routed.intent
        if intent.kind == "fallback":
            return BotResponse(messages=split_response(self.responses.lookup(intent.name, None)))
        if bot.name == self.manifest.root and intent.name in CONTROL_INTENTS:
            return self._restart_or_resume_response(state, intent.name)
        if intent.fulfillment == "collect_lead":
            state.active_intent = intent.name
            return self._advance(state, bot, intent)
        return self._respond_standard(state, bot, intent, norm)

    # (5) resolved standard intents

    def _respond_standard(
        self, state: SessionState, bot: BotDefinition, intent: IntentDef, norm: NormalizedUtterance
    ) -> BotResponse:
        service = None
        ref = intent.service_slot() if intent.input_type else None
        if ref is not None:
            slot_type = bot.slot_type(ref.slot_type)
            match = extract_slot(bot, slot_type, norm, ref.name)
            if match is not None:
                service = match.value
        if service is None:
            service = state.last_service
        if service is None and ref is not None and not self.responses.has_wildcard(intent.name):
            state.active_intent = intent.name
            return self._prompt_slot(state, bot, intent, ref)
        return self._finish_faq(state, bot, intent, service)

    def _finish_faq(
        self, state: SessionState, bot: BotDefinition, intent: IntentDef, service: str | None
    ) -> BotResponse:
        text = self.responses.lookup(intent.name, service)
        if intent.input_type is not None:
            state.last_input_type = intent.input_type
            if service is not None:
                state.last_service = service
        return BotResponse(messages=split_response(text))

    def _prompt_slot(
        self, state: SessionState, bot: BotDefinition, intent: IntentDef, ref: SlotRef
    ) -> BotResponse:
        if state.pending_slot is not None and state.active_intent not in (None, intent.name):
            # A follow-up redirected mid-elicitation; keep the old flow
            # recoverable via "resume".
            state.snapshot = self._take_snapshot(state)
        state.active_intent = intent.name
        state.pending_slot = (intent.name, ref.name)
        slot_type = bot.slot_type(ref.slot_type)
        if slot_type.kind == "free_form":
            state.filled_slots[ref.name] = SENTINEL_VALUE
        return BotResponse(messages=split_response(ref.prompt), buttons=self._slot_buttons(bot, ref))

    def _slot_buttons(self, bot: BotDefinition, ref: SlotRef) -> list[tuple[str, str]] | None:
        slot_type = bot.slot_type(ref.slot_type)
        if slot_type.kind == "enumerated":
            return [(v.canonical_value, v.canonical_value) for v in slot_type.values]
        if slot_type.kind == "builtin" and slot_type.builtin_id == "yes_no":
            return list(YES_NO_BUTTONS)
        return None

    def _advance(self, state: SessionState, bot: BotDefinition, intent: IntentDef) -> BotResponse:
        for ref in intent.ordered_slots():
            if ref.required and ref.name not in state.filled_slots:
                return self._prompt_slot(state, bot, intent, ref)
        if intent.fulfillment == "collect_lead":
            return self._complete_ff(state, bot, intent)
        # A question-answering intent whose service slot was just elicited.
        ref = intent.service_slot()
        service = state.filled_slots.get(ref.name) if ref else None
        state.pending_slot = None
        state.active_intent = None
        return self._finish_faq(state, bot, intent, service)

    def _complete_ff(self, state: SessionState, bot: BotDefinition, intent: IntentDef) -> BotResponse:
        service = self._refined_service(state, intent)
        answers = [
            (ref.name, state.filled_slots[ref.name])
            for ref in intent.ordered_slots()
            if state.filled_slots.get(ref.name) not in (None, SENTINEL_VALUE)
        ]
        lead = LeadRecord(
            session_id=state.session_id, service=service, answers=answers, created_at=self._now()
        )
        self._deliver(lead)
        state.leads_emitted += 1
        state.pending_slot = None
        state.active_intent = None
        # Completed fact finding fixes the service context, so an immediate
        # FAQ such as "How long will the process take?" is answered for the
        # service just identified.
        state.last_service = service
        return BotResponse(messages=split_response(self.responses.lookup(intent.name, None)))

    def _refined_service(self, state: SessionState, intent: IntentDef) -> str:
        for ref in reversed(intent.ordered_slots()):
            value = state.filled_slots.get(ref.name)
            if value and value != SENTINEL_VALUE and value in self._known_services:
                return value
        return intent.service or intent.name

    # -- restart / resume

    def _restart_or_resume_response(self, state: SessionState, kind: str) -> BotResponse:
        if kind == "resume" and state.snapshot is None:
            return BotResponse(messages=[NOTHING_TO_RESUME])
        state.pending_confirmation = kind
        question = CONFIRM_RESTART if kind == "restart" else CONFIRM_RESUME
        return BotResponse(messages=[question], buttons=list(YES_NO_BUTTONS))

    def restart_or_resume(self, state: SessionState, kind: str) -> tuple[SessionState, BotResponse]:
        """Public form of the restart/resume trigger."""
        if kind not in CONTROL_INTENTS:
            raise ValueError(f"kind must be one of {CONTROL_INTENTS}")
        return state, self._restart_or_resume_response(state, kind)

    # -- lead delivery with retry queue

    def _deliver(self, lead: LeadRecord) -> None:
        queued, self._pending_leads = self._pending_leads, []
        for item in [*queued, lead]:
            try:
                self.fulfillment.submit_lead(item)
            except SinkUnavailable:
                self._pending_leads.append(item)

    def retry_pending_leads(self) -> int:
        """Re-attempt queued leads; returns how many are still pending."""
        queued, self._pending_leads = self._pending_leads, []
        for item in queued:
            try:
                self.fulfillment.submit_lead(item)
            except SinkUnavailable:
                self._pending_leads.append(item)
        return len(self._pending_leads)

    @property
    def pending_lead_count(self) -> int:
        return len(self._pending_leads)
