"""Deterministic closed-vocabulary text encoder.

Prompts are lowercased, split on whitespace and punctuation, mapped to ids,
and padded or truncated to :data:`TOKEN_LENGTH`. Embedding is a trainable
table lookup producing a ``(C, TOKEN_LENGTH)`` feature.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable

import numpy as np

from .autodiff import Tensor
from .functional import embedding

TOKEN_LENGTH = 30
PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1

_WORD = re.compile(r"[a-z0-9]+(?:\.[0-9]+)?")


def split_words(prompt: str) -> list[str]:
    return _WORD.findall(prompt.lower())


class Vocabulary:
    """Token <-> id map; id 0 is PAD, id 1 is UNK, the rest in first-seen order."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [PAD, UNK]
        self.stoi: dict[str, int] = {PAD: PAD_ID, UNK: UNK_ID}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @classmethod
    def from_corpus(cls, prompts: Iterable[str]) -> "Vocabulary":
        vocab = cls()
        for p in prompts:
            for w in split_words(p):
                vocab.add(w)
        return vocab

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if lines[:2] != [PAD, UNK]:
            raise ValueError(f"{path}: first two lines must be {PAD!r} and {UNK!r}")
        vocab = cls()
        for t in lines[2:]:
            vocab.add(t)
        return vocab

    def tokenize(self, prompt: str, length: int = TOKEN_LENGTH) -> np.ndarray:
        """Fixed-length id sequence; unknown words map to UNK."""
        if not prompt or not prompt.strip():
            raise ValueError("cannot tokenize an empty prompt")
        ids = [self.stoi.get(w, UNK_ID) for w in split_words(prompt)][:length]
        ids += [PAD_ID] * (length - len(ids))
        return np.asarray(ids, dtype=np.int64)


class TextEncoder:
    """Vocabulary plus a trainable ``(V, C)`` embedding table."""

    def __init__(self, vocab: Vocabulary, width: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.vocab = vocab
        self.width = width
        bound = 1.0 / np.sqrt(width)
        self.table = Tensor(rng.uniform(-bound, bound, size=(len(vocab), width)), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {"text.table": self.table}

    def embed(self, tokens: np.ndarray) -> Tensor:
        """``(C, L)`` for an ``(L,)`` id vector, ``(N, C, L)`` for ``(N, L)``."""
        tokens = np.asarray(tokens)
        rows = embedding(self.table, tokens)
        return rows.swapaxes(-1, -2)

    def encode(self, prompts: str | list[str]) -> Tensor:
        if isinstance(prompts, str):
            return self.embed(self.vocab.tokenize(prompts))
        return self.embed(np.stack([self.vocab.tokenize(p) for p in prompts]))
