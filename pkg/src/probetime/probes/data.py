"""Typed probe items and their JSONL readers.

One JSON object per line.  Sentences are whitespace-tokenized strings;
``[MASK]`` is the literal mask placeholder.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..errors import ContractViolation, ParseError

MASK_PLACEHOLDER = "[MASK]"


@dataclass(frozen=True)
class MinimalPairItem:
    id: str
    good: tuple[str, ...]
    bads: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.good:
            raise ContractViolation(f"item {self.id}: empty good sentence")
        if not self.bads:
            raise ContractViolation(f"item {self.id}: at least one bad sentence required")
        for bad in self.bads:
            if not bad:
                raise ContractViolation(f"item {self.id}: empty bad sentence")
            if bad == self.good:
                raise ContractViolation(f"item {self.id}: bad duplicates the good sentence")


@dataclass(frozen=True)
class ClozeItem:
    id: str
    tokens: tuple[str, ...]
    answer: str
    candidates: tuple[str, ...] | None = None

    def __post_init__(self):
        slots = [i for i, t in enumerate(self.tokens) if t == MASK_PLACEHOLDER]
        if len(slots) != 1:
            raise ContractViolation(f"item {self.id}: exactly one mask slot required, got {len(slots)}")
        if self.candidates is not None and self.answer not in self.candidates:
            raise ContractViolation(f"item {self.id}: answer not among candidates")

    @property
    def mask_index(self) -> int:
        return self.tokens.index(MASK_PLACEHOLDER)


@dataclass(frozen=True)
class MultiChoiceItem:
    id: str
    tokens: tuple[str, ...]
    choices: tuple[str, ...]
    answer_index: int

    def __post_init__(self):
        slots = [i for i, t in enumerate(self.tokens) if t == MASK_PLACEHOLDER]
        if len(slots) != 1:
            raise ContractViolation(f"item {self.id}: exactly one mask slot required")
        if not (2 <= len(self.choices) <= 5):
            raise ContractViolation(f"item {self.id}: need 2-5 choices, got {len(self.choices)}")
        if not (0 <= self.answer_index < len(self.choices)):
            raise ContractViolation(f"item {self.id}: answer index out of range")

    @property
    def mask_index(self) -> int:
        return self.tokens.index(MASK_PLACEHOLDER)


@dataclass(frozen=True)
class TokenLabelSentence:
    tokens: tuple[str, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise ContractViolation("token and label sequences differ in length")
        if not self.tokens:
            raise ContractViolation("empty sentence")


@dataclass(frozen=True)
class ArcSentence:
    tokens: tuple[str, ...]
    arcs: tuple[tuple[int, int, str], ...]

    def __post_init__(self):
        n = len(self.tokens)
        seen = set()
        for head, dep, _ in self.arcs:
            if not (0 <= head < n and 0 <= dep < n):
                raise ContractViolation(f"arc ({head}, {dep}) out of range for length {n}")
            if head == dep:
                raise ContractViolation("self-arcs are not allowed")
            if (head, dep) in seen:
                raise ContractViolation(f"duplicate arc ({head}, {dep})")
            seen.add((head, dep))


def _iter_jsonl(path):
    text = Path(path).read_text(encoding="utf-8")
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            yield i + 1, json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", line=i + 1) from exc


def _require(obj, key, line):
    if key not in obj:
        raise ParseError(f"missing key '{key}'", line=line, field=key)
    return obj[key]


def _tokens(text, line, field_name):
    if not isinstance(text, str) or not text.split():
        raise ParseError("expected a non-empty sentence string", line=line, field=field_name)
    return tuple(text.split())


def load_minimal_pairs(path) -> list[MinimalPairItem]:
    items = []
    for line, obj in _iter_jsonl(path):
        good = _tokens(_require(obj, "good", line), line, "good")
        bads_raw = _require(obj, "bads", line)
        if not isinstance(bads_raw, list) or not bads_raw:
            raise ParseError("'bads' must be a non-empty list", line=line, field="bads")
        bads = tuple(_tokens(b, line, "bads") for b in bads_raw)
        try:
            items.append(MinimalPairItem(id=str(_require(obj, "id", line)), good=good, bads=bads))
        except ContractViolation as exc:
            raise ParseError(str(exc), line=line) from exc
    return items


def load_cloze(path) -> list[ClozeItem]:
    items = []
    for line, obj in _iter_jsonl(path):
        tokens = _tokens(_require(obj, "text", line), line, "text")
        candidates = obj.get("candidates")
        if candidates is not None:
            if not isinstance(candidates, list) or not candidates:
                raise ParseError("'candidates' must be a non-empty list", line=line, field="candidates")
            candidates = tuple(str(c) for c in candidates)
        try:
            items.append(
                ClozeItem(
                    id=str(_require(obj, "id", line)),
                    tokens=tokens,
                    answer=str(_require(obj, "answer", line)),
                    candidates=candidates,
                )
            )
        except ContractViolation as exc:
            raise ParseError(str(exc), line=line) from exc
    return items


def load_multichoice(path) -> list[MultiChoiceItem]:
    items = []
    for line, obj in _iter_jsonl(path):
        tokens = _tokens(_require(obj, "text", line), line, "text")
        choices = _require(obj, "choices", line)
        if not isinstance(choices, list):
            raise ParseError("'choices' must be a list", line=line, field="choices")
        try:
            items.append(
                MultiChoiceItem(
                    id=str(_require(obj, "id", line)),
                    tokens=tokens,
                    choices=tuple(str(c) for c in choices),
                    answer_index=int(_require(obj, "answer_idx", line)),
                )
            )
        except (ContractViolation, ValueError) as exc:
            raise ParseError(str(exc), line=line) from exc
    return items


def load_token_labels(path) -> list[TokenLabelSentence]:
    items = []
    for line, obj in _iter_jsonl(path):
        tokens = _require(obj, "tokens", line)
        labels = _require(obj, "labels", line)
        if not isinstance(tokens, list) or not isinstance(labels, list):
            raise ParseError("'tokens' and 'labels' must be lists", line=line)
        try:
            items.append(
                TokenLabelSentence(tokens=tuple(map(str, tokens)), labels=tuple(map(str, labels)))
            )
        except ContractViolation as exc:
            raise ParseError(str(exc), line=line) from exc
    return items


def load_arcs(path) -> list[ArcSentence]:
    items = []
    for line, obj in _iter_jsonl(path):
        tokens = _require(obj, "tokens", line)
        arcs_raw = _require(obj, "arcs", line)
        if not isinstance(tokens, list) or not isinstance(arcs_raw, list):
            raise ParseError("'tokens' and 'arcs' must be lists", line=line)
        arcs = []
        for arc in arcs_raw:
            if not (isinstance(arc, list) and len(arc) == 3):
                raise ParseError("each arc must be [head, dep, label]", line=line, field="arcs")
            arcs.append((int(arc[0]), int(arc[1]), str(arc[2])))
        try:
            items.append(ArcSentence(tokens=tuple(map(str, tokens)), arcs=tuple(arcs)))
        except (ContractViolation, ValueError) as exc:
            raise ParseError(str(exc), line=line) from exc
    return items


def dump_jsonl(path, objects: Sequence[dict]) -> None:
    lines = [json.dumps(obj, sort_keys=True, ensure_ascii=False) for obj in objects]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
