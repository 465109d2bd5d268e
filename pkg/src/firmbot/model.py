"""Bot definitions: slot types, intents, bots and the multi-bot hierarchy.

A hierarchy is authored as one JSON document (see ``load_manifest``) and then
compiled: every delegation intent in a parent bot gets its utterance list
populated from the effective utterances of the child bot it points to, so a
single classifier per bot can route between local intents and delegations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError

SLOT_KINDS = ("enumerated", "builtin", "free_form")
BUILTIN_IDS = ("first_name", "last_name", "phone_number", "email_address", "number", "yes_no")
INTENT_KINDS = ("standard", "delegation", "fallback")
FULFILLMENTS = ("respond_only", "collect_lead")

# Parent-bot intents with these names drive the restart/resume machinery and
# are never looked up in the response table.
CONTROL_INTENTS = ("restart", "resume")


@dataclass
class SlotValue:
    canonical_value: str
    synonyms: list[str] = field(default_factory=list)


@dataclass
class SlotTypeDef:
    name: str
    kind: str  # one of SLOT_KINDS
    values: list[SlotValue] = field(default_factory=list)
    builtin_id: str | None = None


@dataclass
class SlotRef:
    name: str
    slot_type: str
    prompt: str
    required: bool = True
    order: int = 0


@dataclass
class IntentDef:
    name: str
    kind: str = "standard"  # one of INTENT_KINDS
    utterances: list[str] = field(default_factory=list)
    slots: list[SlotRef] = field(default_factory=list)
    input_type: str | None = None
    service: str | None = None
    child_bot: str | None = None
    fulfillment: str = "respond_only"

    def ordered_slots(self) -> list[SlotRef]:
        return sorted(self.slots, key=lambda s: s.order)

    def service_slot(self) -> SlotRef | None:
        """The slot used to resolve a service for this intent, if any."""
        ordered = self.ordered_slots()
        return ordered[0] if ordered else None


@dataclass
class BotDefinition:
    name: str
    intents: list[IntentDef] = field(default_factory=list)
    slot_types: list[SlotTypeDef] = field(default_factory=list)
    confidence_threshold: float = 0.4

    def intent(self, name: str) -> IntentDef:
        for it in self.intents:
            if it.name == name:
                return it
        raise KeyError(name)

    def slot_type(self, name: str) -> SlotTypeDef:
        for st in self.slot_types:
            if st.name == name:
                return st
        raise KeyError(name)

    def fallback_intent(self) -> IntentDef:
        for it in self.intents:
            if it.kind == "fallback":
                return it
        raise KeyError(f"bot {self.name!r} has no fallback intent")

    def training_utterances(self) -> list[tuple[str, str]]:
        """(intent name, utterance) pairs for standard and delegation intents."""
        pairs = []
        for it in self.intents:
            if it.kind in ("standard", "delegation"):
                pairs.extend((it.name, u) for u in it.utterances)
        return pairs


@dataclass
class HierarchyManifest:
    bots: list[BotDefinition]
    root: str
    # (parent bot, delegation intent, child bot); derived from the bot
    # definitions, kept explicit for traversal.
    edges: list[tuple[str, str, str]] = field(default_factory=list)
    compiled: bool = False

    def bot(self, name: str) -> BotDefinition:
        for b in self.bots:
            if b.name == name:
                return b
        raise KeyError(name)

    def root_bot(self) -> BotDefinition:
        return self.bot(self.root)

    def children_of(self, bot_name: str) -> list[tuple[str, str]]:
        """(delegation intent, child bot) pairs for one parent bot."""
        return [(i, c) for (p, i, c) in self.edges if p == bot_name]

    def find_intent(self, intent_name: str) -> tuple[BotDefinition, IntentDef] | None:
        for b in self.bots:
            for it in b.intents:
                if it.name == intent_name:
                    return b, it
        return None

    def find_input_type(self, input_type: str) -> tuple[BotDefinition, IntentDef] | None:
        for b in self.bots:
            for it in b.intents:
                if it.input_type == input_type:
                    return b, it
        return None


# ---------------------------------------------------------------------------
# Loading / saving


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing required key {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise ParseError(f"{where}: key {key!r} must be {kind.__name__}, got {type(value).__name__}")
    return value


def _parse_slot_type(obj: dict, where: str) -> SlotTypeDef:
    name = _require(obj, "name", str, where)
    kind = _require(obj, "kind", str, where)
    if kind not in SLOT_KINDS:
        raise ParseError(f"{where}: slot type {name!r} has unknown kind {kind!r}")
    values = [
        SlotValue(
            canonical_value=_require(v, "canonical_value", str, f"{where}/{name}"),
            synonyms=list(v.get("synonyms", [])),
        )
        for v in obj.get("values", [])
    ]
    builtin_id = obj.get("builtin_id")
    if builtin_id is not None and builtin_id not in BUILTIN_IDS:
        raise ParseError(f"{where}: slot type {name!r} has unknown builtin_id {builtin_id!r}")
    return SlotTypeDef(name=name, kind=kind, values=values, builtin_id=builtin_id)


def _parse_intent(obj: dict, where: str) -> IntentDef:
    name = _require(obj, "name", str, where)
    kind = obj.get("kind", "standard")
    if kind not in INTENT_KINDS:
        raise ParseError(f"{where}: intent {name!r} has unknown kind {kind!r}")
    fulfillment = obj.get("fulfillment", "respond_only")
    if fulfillment not in FULFILLMENTS:
        raise ParseError(f"{where}: intent {name!r} has unknown fulfillment {fulfillment!r}")
    slots = [
        SlotRef(
            name=_require(s, "name", str, f"{where}/{name}"),
            slot_type=_require(s, "slot_type", str, f"{where}/{name}"),
            prompt=_require(s, "prompt", str, f"{where}/{name}"),
            required=bool(s.get("required", True)),
            order=int(s.get("order", 0)),
        )
        for s in obj.get("slots", [])
    ]
    return IntentDef(
        name=name,
        kind=kind,
        utterances=[str(u) for u in obj.get("utterances", [])],
        slots=slots,
        input_type=obj.get("input_type"),
        service=obj.get("service"),
        child_bot=obj.get("child_bot"),
        fulfillment=fulfillment,
    )


def _parse_bot(obj: dict) -> BotDefinition:
    name = _require(obj, "name", str, "bot")
    where = f"bot {name!r}"
    threshold = float(obj.get("confidence_threshold", 0.4))
    slot_types = [_parse_slot_type(st, where) for st in obj.get("slot_types", [])]
    intents = [_parse_intent(it, where) for it in obj.get("intents", [])]
    return BotDefinition(name=name, intents=intents, slot_types=slot_types, confidence_threshold=threshold)


def manifest_from_dict(doc: dict) -> HierarchyManifest:
    root = _require(doc, "root", str, "manifest")
    bots_raw = _require(doc, "bots", list, "manifest")
    bots = [_parse_bot(b) for b in bots_raw]
    edges = []
    for bot in bots:
        for it in bot.intents:
            if it.kind == "delegation":
                if not it.child_bot:
                    raise ValidationError(f"bot {bot.name!r}: delegation intent {it.name!r} has no child_bot")
                edges.append((bot.name, it.name, it.child_bot))
    manifest = HierarchyManifest(bots=bots, root=root, edges=edges)
    validate_manifest(manifest)
    return manifest


def load_manifest(path: str | Path) -> HierarchyManifest:
    """Load and validate a hierarchy manifest from a JSON file.

    Raises ParseError for malformed input (with line/position where the JSON
    parser provides it) and ValidationError for invariant violations.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read manifest {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: manifest must be a JSON object")
    return manifest_from_dict(doc)


def manifest_to_dict(manifest: HierarchyManifest) -> dict:
    def slot_type_doc(st: SlotTypeDef) -> dict:
        doc: dict = {"name": st.name, "kind": st.kind}
        if st.values:
            doc["values"] = [
                {"canonical_value": v.canonical_value, "synonyms": list(v.synonyms)} for v in st.values
            ]
        if st.builtin_id is not None:
            doc["builtin_id"] = st.builtin_id
        return doc

    def intent_doc(it: IntentDef) -> dict:
        doc: dict = {"name": it.name, "kind": it.kind, "fulfillment": it.fulfillment}
        if it.utterances:
            doc["utterances"] = list(it.utterances)
        if it.slots:
            doc["slots"] = [
                {
                    "name": s.name,
                    "slot_type": s.slot_type,
                    "prompt": s.prompt,
                    "required": s.required,
                    "order": s.order,
                }
                for s in it.slots
            ]
        for key in ("input_type", "service", "child_bot"):
            value = getattr(it, key)
            if value is not None:
                doc[key] = value
        return doc

    return {
        "root": manifest.root,
        "bots": [
            {
                "name": b.name,
                "confidence_threshold": b.confidence_threshold,
                "slot_types": [slot_type_doc(st) for st in b.slot_types],
                "intents": [intent_doc(it) for it in b.intents],
            }
            for b in manifest.bots
        ],
    }


def save_manifest(manifest: HierarchyManifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Validation


def _validate_slot_types(bot: BotDefinition) -> None:
    seen = set()
    for st in bot.slot_types:
        if st.name in seen:
            raise ValidationError(f"bot {bot.name!r}: duplicate slot type {st.name!r}")
        seen.add(st.name)
        if st.kind == "enumerated":
            if not st.values:
                raise ValidationError(f"bot {bot.name!r}: enumerated slot type {st.name!r} has no values")
            lowered = [v.canonical_value.lower() for v in st.values]
            if len(set(lowered)) != len(lowered):
                raise ValidationError(
                    f"bot {bot.name!r}: slot type {st.name!r} has case-insensitively duplicate canonical values"
                )
        elif st.kind == "builtin":
            if st.builtin_id is None:
                raise ValidationError(f"bot {bot.name!r}: builtin slot type {st.name!r} needs builtin_id")
        elif st.kind == "free_form":
            if st.values:
                raise ValidationError(f"bot {bot.name!r}: free_form slot type {st.name!r} must have no values")


def _validate_intents(bot: BotDefinition, compiled: bool) -> None:
    names = set()
    fallbacks = 0
    for it in bot.intents:
        if it.name in names:
            raise ValidationError(f"bot {bot.name!r}: duplicate intent {it.name!r}")
        names.add(it.name)
        if it.kind == "fallback":
            fallbacks += 1
        if it.kind == "standard" and not it.utterances:
            raise ValidationError(f"bot {bot.name!r}: standard intent {it.name!r} has no utterances")
        if it.kind == "delegation":
            if not it.child_bot:
                raise ValidationError(f"bot {bot.name!r}: delegation intent {it.name!r} has no child_bot")
            if it.utterances and not compiled:
                raise ValidationError(
                    f"bot {bot.name!r}: delegation intent {it.name!r} must not author utterances"
                )
        if it.fulfillment == "collect_lead" and not it.service:
            raise ValidationError(f"bot {bot.name!r}: fact-finding intent {it.name!r} needs a service tag")
        orders = [s.order for s in it.slots]
        if len(set(orders)) != len(orders):
            raise ValidationError(f"bot {bot.name!r}: intent {it.name!r} has duplicate slot orders")
        slot_names = [s.name for s in it.slots]
        if len(set(slot_names)) != len(slot_names):
            raise ValidationError(f"bot {bot.name!r}: intent {it.name!r} has duplicate slot names")
        for s in it.slots:
            try:
                bot.slot_type(s.slot_type)
            except KeyError:
                raise ValidationError(
                    f"bot {bot.name!r}: intent {it.name!r} slot {s.name!r} references "
                    f"undeclared slot type {s.slot_type!r}"
                ) from None
    if fallbacks != 1:
        raise ValidationError(f"bot {bot.name!r}: expected exactly one fallback intent, found {fallbacks}")


def _validate_no_duplicate_utterances(bot: BotDefinition) -> None:
    owner: dict[str, str] = {}
    for intent_name, utterance in bot.training_utterances():
        key = utterance.lower()
        if key in owner and owner[key] != intent_name:
            raise ValidationError(
                f"bot {bot.name!r}: utterance {utterance!r} appears under both "
                f"{owner[key]!r} and {intent_name!r}"
            )
        owner[key] = intent_name


def _validate_tree(manifest: HierarchyManifest) -> None:
    names = [b.name for b in manifest.bots]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate bot names in manifest")
    if manifest.root not in names:
        raise ValidationError(f"root bot {manifest.root!r} is not defined")
    parents: dict[str, str] = {}
    for parent, intent, child in manifest.edges:
        if child not in names:
            raise ValidationError(f"bot {parent!r}: delegation intent {intent!r} points to unknown bot {child!r}")
        if child in parents:
            raise ValidationError(f"bot {child!r} has more than one parent")
        parents[child] = parent
    if manifest.root in parents:
        raise ValidationError(f"root bot {manifest.root!r} must not be a delegation target")
    # Reachability walk from the root; a back edge shows up as a revisit.
    visited = set()
    stack = [manifest.root]
    while stack:
        bot = stack.pop()
        if bot in visited:
            raise ValidationError(f"hierarchy contains a cycle through bot {bot!r}")
        visited.add(bot)
        stack.extend(child for _, child in manifest.children_of(bot))
    unreachable = set(names) - visited
    if unreachable:
        raise ValidationError(f"bots not reachable from the root: {sorted(unreachable)}")


def effective_utterances(manifest: HierarchyManifest, bot_name: str) -> list[str]:
    """All utterances the bot answers for, lowercased: its own standard
    utterances plus, recursively, those of every bot it delegates to."""
    bot = manifest.bot(bot_name)
    result = [u.lower() for it in bot.intents if it.kind == "standard" for u in it.utterances]
    for _, child in manifest.children_of(bot_name):
        result.extend(effective_utterances(manifest, child))
    return result


def _validate_sibling_exclusivity(manifest: HierarchyManifest) -> None:
    for bot in manifest.bots:
        children = [child for _, child in manifest.children_of(bot.name)]
        seen: dict[str, str] = {}
        for child in children:
            for utterance in effective_utterances(manifest, child):
                if utterance in seen and seen[utterance] != child:
                    raise ValidationError(
                        f"sibling bots {seen[utterance]!r} and {child!r} share utterance {utterance!r}"
                    )
                seen[utterance] = child


def validate_manifest(manifest: HierarchyManifest) -> None:
    """Check every manifest invariant; raises ValidationError on the first
    violation. Safe to call before or after compilation."""
    _validate_tree(manifest)
    for bot in manifest.bots:
        _validate_slot_types(bot)
        _validate_intents(bot, compiled=manifest.compiled)
        _validate_no_duplicate_utterances(bot)
    _validate_sibling_exclusivity(manifest)


# ---------------------------------------------------------------------------
# Compilation


def compile_hierarchy(manifest: HierarchyManifest) -> HierarchyManifest:
    """Populate every delegation intent with the effective utterances of its
    child bot, lowercased. Idempotent: delegation lists are rebuilt from the
    standard utterances each time, never appended to.
    """
    order = _bottom_up_order(manifest)
    for bot_name in order:
        bot = manifest.bot(bot_name)
        for it in bot.intents:
            if it.kind != "delegation":
                continue
            pooled = effective_utterances(manifest, it.child_bot)
            if not pooled:
                raise ValidationError(
                    f"bot {bot.name!r}: delegation intent {it.name!r} points to bot "
                    f"{it.child_bot!r} which has no training utterances"
                )
            it.utterances = pooled
    manifest.compiled = True
    validate_manifest(manifest)
    return manifest


def _bottom_up_order(manifest: HierarchyManifest) -> list[str]:
    order: list[str] = []

    def visit(name: str) -> None:
        for _, child in manifest.children_of(name):
            visit(child)
        order.append(name)

    visit(manifest.root)
    return order
