"""Extended vocabulary and event-tag registry.

The token table partitions ids into three contiguous blocks: transcription
tokens first, then placeholder tokens reserved for event tags, then a single
blank token with the last id. Placeholders start out unbound; binding one to
a tag surface (intent, entity begin, shared entity end, speaker change) never
mutates the table, it produces a new registry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import (
    BlankInLabelSequence,
    DuplicateEndTag,
    DuplicateToken,
    FormatError,
    InvalidToken,
    NoFreePlaceholder,
    UnknownToken,
    UnsupportedVersion,
)

PLACEHOLDER_TEMPLATE = "<unused_{}>"
BLANK_SURFACE = "<blank>"

#: Full-scale defaults: 624 transcription tokens, 400 placeholders, 1 blank.
DEFAULT_TRANSCRIPTION_COUNT = 624
DEFAULT_PLACEHOLDER_COUNT = 400


class TokenRole(Enum):
    TRANSCRIPTION = "transcription"
    PLACEHOLDER = "placeholder"
    BLANK = "blank"


class TagKind(Enum):
    INTENT = "intent"
    ENTITY_BEGIN = "entity_begin"
    ENTITY_END = "entity_end"
    SPEAKER_CHANGE = "speaker_change"


@dataclass(frozen=True)
class TagBinding:
    """One placeholder token bound to a tag surface."""

    surface: str
    token_id: int
    kind: TagKind
    entity_type: str | None = None

    @property
    def name(self) -> str:
        """Tag surface with the decoration characters stripped, e.g.
        "@CALENDER_SET@" -> "CALENDER_SET"."""
        return self.surface.strip("@!<>")


class Vocabulary:
    """Immutable token table: L transcription ids, D placeholder ids, blank last."""

    def __init__(self, tokens: list[tuple[str, TokenRole]]):
        self.tokens = tuple(tokens)
        self._id_by_surface = {s: i for i, (s, _) in enumerate(self.tokens)}
        if len(self._id_by_surface) != len(self.tokens):
            raise DuplicateToken("vocabulary surfaces are not unique")
        roles = [r for _, r in self.tokens]
        self.l_count = sum(1 for r in roles if r is TokenRole.TRANSCRIPTION)
        self.d_count = sum(1 for r in roles if r is TokenRole.PLACEHOLDER)
        if roles.count(TokenRole.BLANK) != 1 or roles[-1] is not TokenRole.BLANK:
            raise InvalidToken("exactly one blank token is required, at the last id")
        expected = (
            [TokenRole.TRANSCRIPTION] * self.l_count
            + [TokenRole.PLACEHOLDER] * self.d_count
            + [TokenRole.BLANK]
        )
        if roles != expected:
            raise InvalidToken("token roles must form contiguous blocks L, D, blank")
        if self.l_count == 0:
            raise InvalidToken("a vocabulary needs at least one transcription token")

    @property
    def v_total(self) -> int:
        return len(self.tokens)

    @property
    def blank_id(self) -> int:
        return self.v_total - 1

    def surface_of(self, token_id: int) -> str:
        if not 0 <= token_id < self.v_total:
            raise UnknownToken(f"token id {token_id} out of range 0..{self.v_total - 1}")
        return self.tokens[token_id][0]

    def role_of(self, token_id: int) -> TokenRole:
        if not 0 <= token_id < self.v_total:
            raise UnknownToken(f"token id {token_id} out of range 0..{self.v_total - 1}")
        return self.tokens[token_id][1]

    def id_of(self, surface: str) -> int:
        try:
            return self._id_by_surface[surface]
        except KeyError:
            raise UnknownToken(f"surface {surface!r} is not in the vocabulary") from None

    def __contains__(self, surface: str) -> bool:
        return surface in self._id_by_surface

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"Vocabulary(L={self.l_count}, D={self.d_count}, V_total={self.v_total})"


def build_vocab(
    transcription_surfaces: list[str],
    placeholder_count: int = DEFAULT_PLACEHOLDER_COUNT,
) -> Vocabulary:
    """Build a vocabulary from word surfaces plus auto-named placeholders.

    Ids are assigned in order: the given surfaces, then placeholders
    "<unused_0>".."<unused_{D-1}>", then the blank token last.
    """
    if placeholder_count < 0:
        raise ValueError("placeholder_count must be >= 0")
    if not transcription_surfaces:
        raise InvalidToken("at least one transcription surface is required")
    seen: set[str] = set()
    tokens: list[tuple[str, TokenRole]] = []
    for surface in transcription_surfaces:
        if not surface or surface.split() != [surface]:
            raise InvalidToken(f"bad transcription surface {surface!r}")
        if surface in seen:
            raise DuplicateToken(f"duplicate transcription surface {surface!r}")
        seen.add(surface)
        tokens.append((surface, TokenRole.TRANSCRIPTION))
    for k in range(placeholder_count):
        surface = PLACEHOLDER_TEMPLATE.format(k)
        if surface in seen:
            raise DuplicateToken(f"surface {surface!r} collides with a placeholder name")
        seen.add(surface)
        tokens.append((surface, TokenRole.PLACEHOLDER))
    if BLANK_SURFACE in seen:
        raise DuplicateToken(f"surface {BLANK_SURFACE!r} is reserved for the blank token")
    tokens.append((BLANK_SURFACE, TokenRole.BLANK))
    return Vocabulary(tokens)


class TagRegistry:
    """Immutable map from tag surfaces to bound placeholder tokens.

    Carries the vocabulary it binds into, so parsing and rendering code can
    resolve both tag and word surfaces from one object.
    """

    def __init__(self, vocab: Vocabulary, bindings: tuple[TagBinding, ...] = ()):
        self.vocab = vocab
        self.bindings = tuple(bindings)
        self._by_surface: dict[str, TagBinding] = {}
        self._by_id: dict[int, TagBinding] = {}
        end_count = 0
        for b in self.bindings:
            if vocab.role_of(b.token_id) is not TokenRole.PLACEHOLDER:
                raise InvalidToken(f"token id {b.token_id} is not a placeholder")
            if b.surface in self._by_surface:
                raise DuplicateToken(f"tag surface {b.surface!r} bound twice")
            if b.token_id in self._by_id:
                raise DuplicateToken(f"token id {b.token_id} bound twice")
            if b.kind is TagKind.ENTITY_END:
                end_count += 1
            self._by_surface[b.surface] = b
            self._by_id[b.token_id] = b
        if end_count > 1:
            raise DuplicateEndTag("only one shared entity-end tag is allowed")

    def binding_for_surface(self, surface: str) -> TagBinding | None:
        return self._by_surface.get(surface)

    def binding_for_id(self, token_id: int) -> TagBinding | None:
        return self._by_id.get(token_id)

    @property
    def end_binding(self) -> TagBinding | None:
        for b in self.bindings:
            if b.kind is TagKind.ENTITY_END:
                return b
        return None

    def begin_binding_for_type(self, entity_type: str) -> TagBinding:
        for b in self.bindings:
            if b.kind is TagKind.ENTITY_BEGIN and b.entity_type == entity_type:
                return b
        raise UnknownToken(f"no entity-begin tag bound for type {entity_type!r}")

    def speaker_change_binding(self) -> TagBinding | None:
        for b in self.bindings:
            if b.kind is TagKind.SPEAKER_CHANGE:
                return b
        return None

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TagRegistry)
            and self.vocab == other.vocab
            and self.bindings == other.bindings
        )

    def __repr__(self) -> str:
        return f"TagRegistry({len(self.bindings)} bindings over {self.vocab!r})"


def assign_tag(
    registry: TagRegistry,
    tag_surface: str,
    kind: TagKind,
    entity_type: str | None = None,
) -> TagRegistry:
    """Bind a tag surface to the lowest-id unbound placeholder.

    Returns a new registry; the input is untouched. Assignment order is
    deterministic, so the same sequence of calls always yields the same ids.
    """
    vocab = registry.vocab
    if not tag_surface or tag_surface.split() != [tag_surface]:
        raise InvalidToken(f"bad tag surface {tag_surface!r}")
    if tag_surface in vocab:
        raise DuplicateToken(f"tag surface {tag_surface!r} shadows a vocabulary token")
    if registry.binding_for_surface(tag_surface) is not None:
        raise DuplicateToken(f"tag surface {tag_surface!r} already bound")
    if kind is TagKind.ENTITY_END and registry.end_binding is not None:
        raise DuplicateEndTag("the shared entity-end tag is already bound")
    if kind is TagKind.ENTITY_BEGIN:
        if not entity_type:
            raise InvalidToken("entity-begin tags need an entity_type")
    elif entity_type is not None:
        raise InvalidToken(f"{kind.value} tags do not take an entity_type")

    bound = {b.token_id for b in registry.bindings}
    token_id = next(
        (i for i in range(vocab.l_count, vocab.l_count + vocab.d_count) if i not in bound),
        None,
    )
    if token_id is None:
        raise NoFreePlaceholder("all placeholder tokens are bound")
    binding = TagBinding(tag_surface, token_id, kind, entity_type)
    return TagRegistry(vocab, registry.bindings + (binding,))


def encode_tagged_text(registry: TagRegistry, text: str) -> list[int]:
    """Encode whitespace-tokenized tagged text into token ids.

    Each whitespace token must be a bound tag surface or a transcription
    surface; tags take precedence (surface collisions are rejected at
    binding time, so the order never matters in practice).
    """
    vocab = registry.vocab
    ids: list[int] = []
    for piece in text.split():
        binding = registry.binding_for_surface(piece)
        if binding is not None:
            ids.append(binding.token_id)
            continue
        token_id = vocab._id_by_surface.get(piece)
        if token_id is None or vocab.role_of(token_id) is not TokenRole.TRANSCRIPTION:
            raise UnknownToken(f"surface {piece!r} is neither a bound tag nor a word")
        ids.append(token_id)
    return ids


def decode_tokens(registry: TagRegistry, ids: list[int]) -> str:
    """Space-join the surfaces for a blank-free id sequence.

    Bound placeholders decode to their tag surface; unbound ones fall back
    to the vocabulary's auto-name.
    """
    vocab = registry.vocab
    pieces: list[str] = []
    for token_id in ids:
        if not 0 <= token_id < vocab.v_total:
            raise UnknownToken(f"token id {token_id} out of range")
        if token_id == vocab.blank_id:
            raise BlankInLabelSequence("blank id in a label sequence")
        binding = registry.binding_for_id(token_id)
        pieces.append(binding.surface if binding is not None else vocab.surface_of(token_id))
    return " ".join(pieces)


# ---------------------------------------------------------------------------
# Vocab file format: one JSON document, keys sorted, newline-terminated.
# Bound placeholders are listed under their tag surface with kind metadata;
# the loader restores auto-names in the Vocabulary and surfaces in the
# registry, so save/load round-trips both.
# ---------------------------------------------------------------------------

VOCAB_FILE_VERSION = 1


def vocab_document(registry: TagRegistry) -> str:
    vocab = registry.vocab
    tokens = []
    for token_id, (surface, role) in enumerate(vocab.tokens):
        entry: dict[str, object] = {"surface": surface, "role": role.value}
        binding = registry.binding_for_id(token_id)
        if binding is not None:
            entry["surface"] = binding.surface
            entry["tag_kind"] = binding.kind.value
            if binding.entity_type is not None:
                entry["entity_type"] = binding.entity_type
        tokens.append(entry)
    doc = {
        "version": VOCAB_FILE_VERSION,
        "L": vocab.l_count,
        "D": vocab.d_count,
        "blank_id": vocab.blank_id,
        "tokens": tokens,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def save_vocab(registry: TagRegistry, path: str | Path) -> None:
    Path(path).write_text(vocab_document(registry), encoding="utf-8")


def load_vocab(path: str | Path) -> TagRegistry:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a valid vocab document: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise FormatError(f"{path}: missing version field")
    if doc["version"] != VOCAB_FILE_VERSION:
        raise UnsupportedVersion(f"{path}: vocab file version {doc['version']!r}")
    try:
        entries = doc["tokens"]
        l_count, d_count, blank_id = doc["L"], doc["D"], doc["blank_id"]
    except KeyError as exc:
        raise FormatError(f"{path}: missing field {exc}") from exc
    if len(entries) != l_count + d_count + 1 or blank_id != len(entries) - 1:
        raise FormatError(f"{path}: token count does not match L + D + 1")

    tokens: list[tuple[str, TokenRole]] = []
    bindings: list[TagBinding] = []
    for token_id, entry in enumerate(entries):
        try:
            role = TokenRole(entry["role"])
            surface = entry["surface"]
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"{path}: bad token entry at id {token_id}: {exc}") from exc
        if "tag_kind" in entry:
            if role is not TokenRole.PLACEHOLDER:
                raise FormatError(f"{path}: tag metadata on non-placeholder id {token_id}")
            try:
                kind = TagKind(entry["tag_kind"])
            except ValueError as exc:
                raise FormatError(f"{path}: bad tag kind at id {token_id}") from exc
            bindings.append(TagBinding(surface, token_id, kind, entry.get("entity_type")))
            surface = PLACEHOLDER_TEMPLATE.format(token_id - l_count)
        tokens.append((surface, role))
    try:
        vocab = Vocabulary(tokens)
    except (InvalidToken, DuplicateToken) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if vocab.l_count != l_count or vocab.d_count != d_count:
        raise FormatError(f"{path}: role blocks disagree with the L/D header")
    return TagRegistry(vocab, tuple(bindings))
