"""Retrieval classifier and slot extraction.

Each bot gets an immutable TF-IDF nearest-neighbour index over its training
utterances. Classifying an input scores every intent with the best cosine
similarity among that intent's exemplars, so a verbatim training utterance
always comes back at confidence 1.0 and out-of-vocabulary input at 0.0.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field

from .errors import BuildError
from .model import BotDefinition, HierarchyManifest, SlotTypeDef

_TOKEN_RE = re.compile(r"[^\W_]+|£", re.UNICODE)
_EMAIL_RE = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+")
_PHONE_RE = re.compile(r"\+?\d(?:[\s-]?\d)+")

YES_TOKENS = frozenset({"yes", "yeah", "sure", "ok", "yep"})
NO_TOKENS = frozenset({"no", "nope", "nah"})


@dataclass
class NormalizedUtterance:
    raw: str
    tokens: list[str]


def normalize(text: str) -> NormalizedUtterance:
    """Lowercase and tokenize. Tokens are maximal runs of letters/digits
    ('£' stands alone, '+' and other punctuation are dropped)."""
    return NormalizedUtterance(raw=text, tokens=_TOKEN_RE.findall(text.lower()))


def raw_tokens(text: str) -> list[str]:
    """Same segmentation as normalize() but preserving the original case."""
    return _TOKEN_RE.findall(text)


@dataclass
class Classification:
    ranking: list[tuple[str, float]]
    top_intent: str
    top_confidence: float


@dataclass
class SlotMatch:
    slot_name: str
    value: str
    span: tuple[int, int]  # token indices, end exclusive


@dataclass
class Exemplar:
    intent: str
    tokens: list[str]
    weights: dict[str, float]  # unit L2 norm over tf-idf


@dataclass
class ClassifierModel:
    bot_name: str
    vocabulary: dict[str, int]
    idf: dict[str, float]
    exemplars: list[Exemplar]
    intent_names: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "bot_name": self.bot_name,
            "vocabulary": self.vocabulary,
            "idf": self.idf,
            "exemplars": [
                {"intent": e.intent, "tokens": e.tokens, "weights": e.weights} for e in self.exemplars
            ],
            "intent_names": self.intent_names,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ClassifierModel":
        return cls(
            bot_name=doc["bot_name"],
            vocabulary={k: int(v) for k, v in doc["vocabulary"].items()},
            idf={k: float(v) for k, v in doc["idf"].items()},
            exemplars=[
                Exemplar(intent=e["intent"], tokens=list(e["tokens"]), weights=dict(e["weights"]))
                for e in doc["exemplars"]
            ],
            intent_names=list(doc["intent_names"]),
        )


def bot_content_hash(bot: BotDefinition) -> str:
    """Stable hash of everything the model depends on; cache key material."""
    payload = json.dumps(
        [
            bot.name,
            [(it.name, it.kind, it.utterances) for it in bot.intents],
        ],
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _tf(tokens: list[str]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for tok in tokens:
        counts[tok] = counts.get(tok, 0) + 1
    return counts


def _unit_vector(counts: dict[str, int], idf: dict[str, float]) -> dict[str, float]:
    weights = {tok: n * idf[tok] for tok, n in counts.items() if tok in idf}
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm == 0.0:
        return {}
    return {tok: w / norm for tok, w in weights.items()}


def build_model(bot: BotDefinition) -> ClassifierModel:
    """Build the TF-IDF index for one (compiled) bot.

    idf(t) = ln((1+N)/(1+df(t))) + 1 over the bot's N training utterances;
    exemplar vectors are L2-normalized tf*idf. Deterministic given the bot.
    """
    pairs = bot.training_utterances()
    if not pairs:
        raise BuildError(f"bot {bot.name!r} has no training utterances")
    tokenized = [(intent, normalize(text).tokens) for intent, text in pairs]
    n_docs = len(tokenized)
    df: dict[str, int] = {}
    for _, tokens in tokenized:
        for tok in set(tokens):
            df[tok] = df.get(tok, 0) + 1
    idf = {tok: math.log((1 + n_docs) / (1 + count)) + 1.0 for tok, count in df.items()}
    vocabulary = {tok: i for i, tok in enumerate(sorted(idf))}
    exemplars = [
        Exemplar(intent=intent, tokens=tokens, weights=_unit_vector(_tf(tokens), idf))
        for intent, tokens in tokenized
    ]
    return ClassifierModel(
        bot_name=bot.name,
        vocabulary=vocabulary,
        idf=idf,
        exemplars=exemplars,
        intent_names=[it.name for it in bot.intents],
    )


def query_vector(model: ClassifierModel, tokens: list[str]) -> dict[str, float]:
    """Unit TF-IDF vector of an input utterance.

    Tokens never seen in training get the idf the formula assigns at df=0,
    ln(1+N)+1, so they contribute to the norm (penalizing mostly-unknown
    input) but never to a dot product with an exemplar.
    """
    unseen_idf = math.log(1 + len(model.exemplars)) + 1.0
    counts = _tf(tokens)
    weights = {tok: n * model.idf.get(tok, unseen_idf) for tok, n in counts.items()}
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm == 0.0:
        return {}
    return {tok: w / norm for tok, w in weights.items() if tok in model.idf}


def classify(model: ClassifierModel, utterance: NormalizedUtterance) -> Classification:
    """Rank every intent of the bot by best-exemplar cosine similarity.

    Intents with no exemplars (the fallback) score 0. Ties order by intent
    name so the ranking is independent of declaration order.
    """
    query = query_vector(model, utterance.tokens)
    best: dict[str, float] = {name: 0.0 for name in model.intent_names}
    if query:
        for ex in model.exemplars:
            # iterate over the smaller dict
            a, b = (query, ex.weights) if len(query) <= len(ex.weights) else (ex.weights, query)
            score = sum(w * b[tok] for tok, w in a.items() if tok in b)
            if score > 1.0 or math.isclose(score, 1.0, rel_tol=0.0, abs_tol=1e-12):
                score = 1.0
            if score > best.get(ex.intent, 0.0):
                best[ex.intent] = score
    ranking = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    top_intent, top_confidence = ranking[0]
    return Classification(ranking=ranking, top_intent=top_intent, top_confidence=top_confidence)


def build_all_models(manifest: HierarchyManifest) -> dict[str, ClassifierModel]:
    return {bot.name: build_model(bot) for bot in manifest.bots}


# ---------------------------------------------------------------------------
# Slot extraction


def _surface_forms(slot_type: SlotTypeDef) -> list[tuple[list[str], str]]:
    """(token sequence, canonical value) pairs for an enumerated type."""
    forms = []
    for value in slot_type.values:
        for surface in [value.canonical_value, *value.synonyms]:
            tokens = normalize(surface).tokens
            if tokens:
                forms.append((tokens, value.canonical_value))
    return forms


def _match_enumerated(slot_type: SlotTypeDef, tokens: list[str]) -> tuple[str, tuple[int, int]] | None:
    best: tuple[int, int, str, tuple[int, int]] | None = None  # (-len, start, canonical, span)
    for form, canonical in _surface_forms(slot_type):
        size = len(form)
        for start in range(0, len(tokens) - size + 1):
            if tokens[start : start + size] == form:
                key = (-size, start, canonical, (start, start + size))
                if best is None or key < best:
                    best = key
                break  # earliest occurrence of this form is enough
    if best is None:
        return None
    return best[2], best[3]


def _span_for_raw_match(utterance: NormalizedUtterance, matched: str) -> tuple[int, int]:
    """Best-effort token span for a value found on the raw string."""
    pieces = normalize(matched).tokens
    tokens = utterance.tokens
    if pieces:
        for start in range(0, len(tokens) - len(pieces) + 1):
            if tokens[start : start + len(pieces)] == pieces:
                return (start, start + len(pieces))
    return (0, len(tokens))


def _extract_builtin(
    builtin_id: str, utterance: NormalizedUtterance, slot_name: str
) -> SlotMatch | None:
    tokens = utterance.tokens
    if builtin_id == "email_address":
        m = _EMAIL_RE.search(utterance.raw)
        if not m:
            return None
        return SlotMatch(slot_name, m.group(0).lower(), _span_for_raw_match(utterance, m.group(0)))
    if builtin_id == "phone_number":
        for m in _PHONE_RE.finditer(utterance.raw):
            digits = re.sub(r"[\s\-+]", "", m.group(0))
            if 7 <= len(digits) <= 15:
                return SlotMatch(slot_name, digits, _span_for_raw_match(utterance, m.group(0)))
        return None
    if builtin_id == "yes_no":
        for i, tok in enumerate(tokens):
            if tok in YES_TOKENS:
                return SlotMatch(slot_name, "yes", (i, i + 1))
            if tok in NO_TOKENS:
                return SlotMatch(slot_name, "no", (i, i + 1))
        return None
    if builtin_id in ("first_name", "last_name"):
        # Single-token capture; only meaningful while the slot is being
        # elicited — callers gate on that.
        words = raw_tokens(utterance.raw)
        if len(words) == 1:
            return SlotMatch(slot_name, words[0], (0, 1))
        return None
    if builtin_id == "number":
        words = raw_tokens(utterance.raw)
        if len(words) == 1 and words[0].isdigit():
            return SlotMatch(slot_name, words[0], (0, 1))
        return None
    return None


def extract_slot(
    bot: BotDefinition, slot_type: SlotTypeDef, utterance: NormalizedUtterance, slot_name: str = ""
) -> SlotMatch | None:
    """Find a value of the given slot type in the utterance.

    Enumerated types use the longest token-boundary match over canonical
    values and synonyms (ties: earliest span, then lexicographic canonical
    value) and always return the canonical value. Builtins use fixed rules;
    free_form types are never matched here (the dialog layer fills them).
    """
    name = slot_name or slot_type.name
    if slot_type.kind == "enumerated":
        found = _match_enumerated(slot_type, utterance.tokens)
        if found is None:
            return None
        canonical, span = found
        return SlotMatch(name, canonical, span)
    if slot_type.kind == "builtin":
        return _extract_builtin(slot_type.builtin_id or "", utterance, name)
    return None


YES_NO_TYPE = SlotTypeDef(name="yes_no", kind="builtin", builtin_id="yes_no")


def parse_yes_no(text: str) -> str | None:
    """'yes'/'no' if the text contains a recognized token, else None."""
    match = _extract_builtin("yes_no", normalize(text), "yes_no")
    return match.value if match else None
