"""Whole-word vocabulary with mask/pad special tokens.

File format: one token per line, line number = id, UTF-8.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..errors import ContractViolation, ParseError

MASK_TOKEN = "[MASK]"
PAD_TOKEN = "[PAD]"


@dataclass(frozen=True, eq=False)
class Vocabulary:
    tokens: tuple[str, ...]
    mask_id: int
    pad_id: int

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ContractViolation("vocabulary tokens must be unique")
        v = len(self.tokens)
        if not (0 <= self.mask_id < v and 0 <= self.pad_id < v):
            raise ContractViolation("mask/pad ids must index into the token list")
        if self.mask_id == self.pad_id:
            raise ContractViolation("mask and pad must be distinct tokens")
        object.__setattr__(self, "_index", {tok: i for i, tok in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise KeyError(token) from None

    def token(self, token_id: int) -> str:
        return self.tokens[token_id]

    def encode(self, tokens) -> list[int]:
        return [self.id(t) for t in tokens]

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset((self.mask_id, self.pad_id))

    @classmethod
    def from_tokens(cls, tokens, mask_token: str = MASK_TOKEN, pad_token: str = PAD_TOKEN):
        tokens = tuple(tokens)
        try:
            mask_id = tokens.index(mask_token)
            pad_id = tokens.index(pad_token)
        except ValueError as exc:
            raise ContractViolation(f"special token missing from vocabulary: {exc}") from None
        return cls(tokens=tokens, mask_id=mask_id, pad_id=pad_id)

    @classmethod
    def from_file(cls, path, mask_token: str = MASK_TOKEN, pad_token: str = PAD_TOKEN):
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        tokens = []
        for i, line in enumerate(lines):
            token = line.strip()
            if not token:
                raise ParseError("blank vocabulary line", line=i + 1)
            if " " in token:
                raise ParseError(f"token {token!r} contains whitespace", line=i + 1)
            tokens.append(token)
        if len(set(tokens)) != len(tokens):
            raise ParseError("duplicate token in vocabulary file")
        return cls.from_tokens(tokens, mask_token=mask_token, pad_token=pad_token)

    def to_file(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")
