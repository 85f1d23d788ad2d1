"""Deterministic reference encoders standing in for transformer checkpoints.

Two families resolved from the model id:

- word-piece models (ids containing "minilm" or "bert"): each word splits
  into fixed-width pieces; every piece occurrence gets one vector per layer,
  seeded from (family, revision, sentence context, position, piece, layer);
  piece vectors are averaged into whole-word vectors before any pooling.
- sentence models (ids containing "use" or "sentence"): one vector per input
  text; pooling does not apply.

Vectors are hash-seeded draws, so output depends only on the model id,
revision, and input text: a fixed revision reproduces bit-identical files,
a new revision moves every vector. A [CLS] token is always present; pooling
an input with no words falls back to it.
"""

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .errors import JobError, ModelLoadError

POOLINGS = ("cls", "mean", "sum_last4", "second_to_last")
PIECE_WIDTH = 4

# substring -> (family, dim, transformer layers); first match wins, so the
# word-piece keys come before the sentence keys ("all-minilm" ids usually
# carry a "sentence-..." prefix)
_KNOWN = (
    ("minilm", ("wordpiece", 384, 6)),
    ("bert", ("wordpiece", 768, 12)),
    ("use", ("sentence", 512, 0)),
    ("sentence", ("sentence", 512, 0)),
)


@dataclass(frozen=True)
class ModelInfo:
    model_id: str
    family: str  # wordpiece | sentence
    dim: int
    layers: int
    revision: str


def _vec(parts, dim: int) -> np.ndarray:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:16], "little"))
    return rng.standard_normal(dim)


def _words(text: str) -> list:
    return re.findall(r"[a-z0-9]+", text.lower())


class WordPieceModel:
    ignores_pooling = False

    def __init__(self, info: ModelInfo):
        self.info = info

    def pieces(self, word: str) -> list:
        return [word[i : i + PIECE_WIDTH] for i in range(0, len(word), PIECE_WIDTH)]

    def piece_stack(self, context: str, position: int, piece: str) -> np.ndarray:
        """(layers+1, dim) rows: embedding layer, then each transformer layer."""
        info = self.info
        return np.stack([
            _vec((info.family, info.revision, context, str(position), piece, f"L{layer}"),
                 info.dim)
            for layer in range(info.layers + 1)
        ])

    def token_stacks(self, text: str):
        """([CLS] stack, one averaged stack per word)."""
        words = _words(text)
        context = hashlib.sha256(" ".join(words).encode("utf-8")).hexdigest()
        cls = self.piece_stack(context, 0, "[CLS]")
        stacks = []
        for pos, word in enumerate(words, start=1):
            per_piece = [self.piece_stack(context, pos, p) for p in self.pieces(word)]
            stacks.append(np.mean(per_piece, axis=0))
        return cls, stacks

    def encode(self, text: str, pooling: str) -> np.ndarray:
        cls, stacks = self.token_stacks(text)
        if pooling == "cls":
            return cls[-1]
        arr = np.stack(stacks or [cls])  # (n, layers+1, dim)
        if pooling == "mean":
            return arr[:, -1, :].mean(axis=0)
        if pooling == "sum_last4":
            return arr[:, -4:, :].sum(axis=1).mean(axis=0)
        if pooling == "second_to_last":
            return arr[:, -2, :].mean(axis=0)
        raise JobError(f"unknown pooling {pooling!r} (expected one of {', '.join(POOLINGS)})")


class SentenceModel:
    ignores_pooling = True

    def __init__(self, info: ModelInfo):
        self.info = info

    def encode(self, text: str, pooling: str = "") -> np.ndarray:
        info = self.info
        return _vec((info.family, info.revision, "sent", " ".join(_words(text))), info.dim)


def load_model(model_id: str):
    """Resolve a free-text model id against the local checkpoint registry.

    An optional "@<revision>" suffix pins the revision (default "main").
    """
    name, _, rev = model_id.partition("@")
    name = name.strip()
    if not name:
        raise ModelLoadError("empty model id")
    low = name.lower()
    for key, (family, dim, layers) in _KNOWN:
        if key in low:
            info = ModelInfo(model_id, family, dim, layers, rev or "main")
            return SentenceModel(info) if family == "sentence" else WordPieceModel(info)
    raise ModelLoadError(
        f"no local checkpoint matches {model_id!r} "
        "(known families: minilm, bert, use, sentence)"
    )
