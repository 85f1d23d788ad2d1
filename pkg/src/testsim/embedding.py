"""Word and step vector representations.

Two native backends (TF-IDF step vectors, CBOW word vectors trained with
negative sampling) plus loaders for pretrained word2vec binaries and for
externally computed step vectors in the EMBX exchange format.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BinaryFormatError,
    ConfigError,
    ItemLookupError,
    ParseError,
    ValidationError,
    WordLookupError,
)

PROVENANCES = ("trained", "pretrained", "mixed")
MIN_LEARNING_RATE = 1e-4


@dataclass
class WordEmbeddingTable:
    """word -> float32 vector; rows of `matrix` follow `words` order."""

    dim: int
    words: tuple
    matrix: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.dim <= 0:
            raise ValidationError("embedding dim must be positive")
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        self.words = tuple(self.words)
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if self.matrix.shape != (len(self.words), self.dim):
            raise ValidationError(
                f"matrix shape {self.matrix.shape} does not match "
                f"{len(self.words)} words x dim {self.dim}"
            )
        if not np.all(np.isfinite(self.matrix)):
            raise ValidationError("embedding table contains non-finite values")
        self._index = {w: i for i, w in enumerate(self.words)}
        if len(self._index) != len(self.words):
            raise ValidationError("embedding table lists a word twice")

    def __contains__(self, word) -> bool:
        return word in self._index

    def __len__(self) -> int:
        return len(self.words)

    def vector(self, word) -> np.ndarray:
        try:
            return self.matrix[self._index[word]]
        except KeyError:
            raise WordLookupError(word) from None


@dataclass
class StepEmbeddingTable:
    """step_id (or case_id) -> float64 vector."""

    dim: int
    ids: tuple
    matrix: np.ndarray
    backend_tag: str

    def __post_init__(self):
        if self.dim <= 0:
            raise ValidationError("embedding dim must be positive")
        self.ids = tuple(self.ids)
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if self.matrix.shape != (len(self.ids), self.dim):
            raise ValidationError(
                f"matrix shape {self.matrix.shape} does not match "
                f"{len(self.ids)} ids x dim {self.dim}"
            )
        if not np.all(np.isfinite(self.matrix)):
            raise ValidationError("embedding table contains non-finite values")
        self._index = {i: r for r, i in enumerate(self.ids)}
        if len(self._index) != len(self.ids):
            raise ValidationError("embedding table lists an id twice")

    def vector(self, item_id) -> np.ndarray:
        try:
            return self.matrix[self._index[item_id]]
        except KeyError:
            raise ItemLookupError(f"no embedding for id {item_id!r}", [item_id]) from None

    def covers(self, ids) -> list:
        """Ids from `ids` that are missing from this table."""
        return [i for i in ids if i not in self._index]


@dataclass(frozen=True)
class CbowConfig:
    dim: int = 300
    window: int = 2  # context words each side, fixed (no random shrinking)
    negative_samples: int = 5
    epochs: int = 15
    initial_learning_rate: float = 0.025
    min_count: int = 1
    seed: int = 1

    def __post_init__(self):
        if self.dim <= 0 or self.window < 1 or self.epochs < 0:
            raise ConfigError("cbow config requires dim>0, window>=1, epochs>=0")
        if self.negative_samples < 1 or self.min_count < 1:
            raise ConfigError("cbow config requires negative_samples>=1, min_count>=1")


def fit_tfidf(steps) -> StepEmbeddingTable:
    """One vector per step over the step vocabulary.

    Entry for word w: raw count in the step times ln((1+N)/(1+df(w)))+1,
    then the whole vector is L2-normalized.  Empty steps stay zero.
    """
    vocab = sorted({tok for step in steps for tok in step.tokens})
    if not vocab:
        raise ConfigError("cannot fit tf-idf on an empty vocabulary")
    col = {w: j for j, w in enumerate(vocab)}
    n_steps = len(steps)
    df = Counter()
    for step in steps:
        df.update(set(step.tokens))
    idf = np.array(
        [math.log((1.0 + n_steps) / (1.0 + df[w])) + 1.0 for w in vocab], dtype=np.float64
    )
    matrix = np.zeros((n_steps, len(vocab)), dtype=np.float64)
    for r, step in enumerate(steps):
        for tok, cnt in Counter(step.tokens).items():
            matrix[r, col[tok]] = cnt
        matrix[r] *= idf
        norm = math.sqrt(float(matrix[r] @ matrix[r]))
        if norm > 0.0:
            matrix[r] /= norm
    return StepEmbeddingTable(
        dim=len(vocab), ids=tuple(s.step_id for s in steps), matrix=matrix, backend_tag="tfidf"
    )


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30.0, 30.0)))


def train_cbow(sentences, cfg: CbowConfig, init: WordEmbeddingTable | None = None) -> WordEmbeddingTable:
    """CBOW with negative sampling, single-threaded and seed-deterministic.

    The context is the mean of the surrounding word vectors within the
    window; the target plus `negative_samples` draws from the unigram^0.75
    noise distribution get a binary logistic update.  Words found in `init`
    start from its vectors.
    """
    if init is not None and init.dim != cfg.dim:
        raise ConfigError(f"init table dim {init.dim} != configured dim {cfg.dim}")
    counts = Counter(tok for sent in sentences for tok in sent)
    vocab = sorted(w for w, c in counts.items() if c >= cfg.min_count)
    if len(vocab) < cfg.negative_samples + 1:
        raise ConfigError(
            f"vocabulary of {len(vocab)} words is too small for "
            f"{cfg.negative_samples} negative samples"
        )
    word_idx = {w: i for i, w in enumerate(vocab)}

    rng = np.random.default_rng(cfg.seed)
    syn0 = ((rng.random((len(vocab), cfg.dim)) - 0.5) / cfg.dim).astype(np.float32)
    if init is not None:
        for w, i in word_idx.items():
            if w in init:
                syn0[i] = init.vector(w)
    syn1 = np.zeros((len(vocab), cfg.dim), dtype=np.float32)

    # unigram^0.75 noise distribution as a cumulative table
    noise = np.array([counts[w] for w in vocab], dtype=np.float64) ** 0.75
    cum = np.cumsum(noise)
    total_noise = cum[-1]

    encoded = [
        np.array([word_idx[t] for t in sent if t in word_idx], dtype=np.intp)
        for sent in sentences
    ]
    total_words = sum(len(s) for s in encoded) * cfg.epochs
    if total_words == 0:
        provenance = "trained" if init is None else "mixed"
        return WordEmbeddingTable(cfg.dim, tuple(vocab), syn0, provenance)

    labels = np.zeros(cfg.negative_samples + 1, dtype=np.float32)
    labels[0] = 1.0
    alpha0 = cfg.initial_learning_rate
    processed = 0
    for _epoch in range(cfg.epochs):
        for sent in encoded:
            alpha = max(
                MIN_LEARNING_RATE,
                alpha0 - (alpha0 - MIN_LEARNING_RATE) * (processed / total_words),
            )
            for pos in range(len(sent)):
                target = int(sent[pos])
                start = max(0, pos - cfg.window)
                ctx = np.concatenate((sent[start:pos], sent[pos + 1 : pos + 1 + cfg.window]))
                if len(ctx) == 0:
                    continue
                l1 = syn0[ctx].sum(axis=0) / np.float32(len(ctx))

                samples = [target]
                while len(samples) < cfg.negative_samples + 1:
                    w = int(np.searchsorted(cum, rng.random() * total_noise, side="right"))
                    if w != target:
                        samples.append(w)
                l2 = syn1[samples]
                g = (labels - _sigmoid(l2 @ l1)) * np.float32(alpha)
                neu1e = g @ l2  # uses the pre-update output rows
                np.add.at(syn1, samples, np.outer(g, l1))
                np.add.at(syn0, ctx, neu1e)
            processed += len(sent)

    provenance = "trained" if init is None else "mixed"
    return WordEmbeddingTable(cfg.dim, tuple(vocab), syn0, provenance)


def load_word2vec_binary(path: str) -> WordEmbeddingTable:
    """Classic word2vec binary: "<count> <dim>\\n", then "<word> " + float32s."""
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise BinaryFormatError(f"{path}: no header line (byte 0)")
    try:
        count_s, dim_s = data[:nl].decode("ascii").split()
        count, dim = int(count_s), int(dim_s)
    except (UnicodeDecodeError, ValueError):
        raise BinaryFormatError(f"{path}: malformed header (byte 0)") from None
    if count < 0 or dim <= 0:
        raise BinaryFormatError(f"{path}: header declares count {count}, dim {dim} (byte 0)")

    pos = nl + 1
    words = []
    matrix = np.empty((count, dim), dtype=np.float32)
    seen = set()
    for i in range(count):
        while pos < len(data) and data[pos : pos + 1] == b"\n":
            pos += 1
        sp = data.find(b" ", pos)
        if sp < 0:
            raise BinaryFormatError(f"{path}: truncated word entry {i} (byte {pos})")
        try:
            word = data[pos:sp].decode("utf-8")
        except UnicodeDecodeError:
            raise BinaryFormatError(f"{path}: word entry {i} is not UTF-8 (byte {pos})") from None
        vec_at = sp + 1
        end = vec_at + 4 * dim
        if end > len(data):
            raise BinaryFormatError(f"{path}: truncated vector for {word!r} (byte {vec_at})")
        vec = np.frombuffer(data[vec_at:end], dtype="<f4")
        if not np.all(np.isfinite(vec)):
            raise BinaryFormatError(f"{path}: non-finite value in vector of {word!r} (byte {vec_at})")
        if word in seen:
            raise BinaryFormatError(f"{path}: duplicate word {word!r} (byte {pos})")
        seen.add(word)
        words.append(word)
        matrix[i] = vec
        pos = end
    while pos < len(data) and data[pos : pos + 1] == b"\n":
        pos += 1
    if pos != len(data):
        raise BinaryFormatError(f"{path}: unexpected trailing bytes (byte {pos})")
    return WordEmbeddingTable(dim, tuple(words), matrix, "pretrained")


def save_word2vec_binary(table: WordEmbeddingTable, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(f"{len(table.words)} {table.dim}\n".encode("ascii"))
        for i, word in enumerate(table.words):
            fh.write(word.encode("utf-8"))
            fh.write(b" ")
            fh.write(table.matrix[i].astype("<f4", copy=False).tobytes())
            fh.write(b"\n")


def init_with_pretrained(vocab, pretrained: WordEmbeddingTable, seed: int) -> WordEmbeddingTable:
    """Copy known vectors; draw the rest from the per-dimension normal fit.

    mu_j / sigma_j come from the copied vectors (population std); each
    out-of-vocabulary component j is an independent Normal(mu_j, sigma_j)
    draw, in sorted word order for determinism.
    """
    words = tuple(sorted(set(vocab)))
    found = [w for w in words if w in pretrained]
    if not found:
        raise ValidationError(
            "no vocabulary word exists in the pretrained table; "
            "cannot parameterize the initialization distribution"
        )
    copied = np.stack([pretrained.vector(w) for w in found]).astype(np.float64)
    mu = copied.mean(axis=0)
    sigma = copied.std(axis=0)
    rng = np.random.default_rng(seed)
    matrix = np.empty((len(words), pretrained.dim), dtype=np.float32)
    oov = 0
    for i, w in enumerate(words):
        if w in pretrained:
            matrix[i] = pretrained.vector(w)
        else:
            matrix[i] = rng.normal(mu, sigma).astype(np.float32)
            oov += 1
    provenance = "pretrained" if oov == 0 else "mixed"
    return WordEmbeddingTable(pretrained.dim, words, matrix, provenance)


def pool_mean(step, words: WordEmbeddingTable) -> np.ndarray:
    """Mean of the step's word vectors (duplicates weigh in); empty -> zeros.

    Summation runs in sorted word order so any two steps with the same
    token multiset get the bitwise-identical vector.
    """
    if not step.tokens:
        return np.zeros(words.dim, dtype=np.float64)
    acc = np.zeros(words.dim, dtype=np.float64)
    for tok, cnt in sorted(Counter(step.tokens).items()):
        acc += words.vector(tok).astype(np.float64) * cnt
    return acc / len(step.tokens)


def load_step_embeddings(path: str, backend_tag: str = "external") -> StepEmbeddingTable:
    """Read an EMBX file: "EMBX 1 <dim>", then "<id>\\t<f1> <f2> ...".

    Lines starting with '#' after the header are comments.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 3 or parts[0] != "EMBX" or parts[1] != "1":
            raise ParseError(f"{path}: expected header 'EMBX 1 <dim>'")
        try:
            dim = int(parts[2])
        except ValueError:
            raise ParseError(f"{path}: non-integer dim in header") from None
        if dim <= 0:
            raise ParseError(f"{path}: dim must be positive")
        ids, rows = [], []
        seen = set()
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            item_id, tab, rest = line.partition("\t")
            if not tab or not item_id:
                raise ParseError(f"{path}: line {lineno}: expected '<id>\\t<floats>'")
            values = rest.split()
            if len(values) != dim:
                raise ParseError(
                    f"{path}: line {lineno}: expected {dim} values, got {len(values)}"
                )
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric value") from None
            if not np.all(np.isfinite(vec)):
                raise ParseError(f"{path}: line {lineno}: non-finite value")
            if item_id in seen:
                raise ValidationError(f"{path}: line {lineno}: duplicate id {item_id!r}")
            seen.add(item_id)
            ids.append(item_id)
            rows.append(vec)
    matrix = np.stack(rows) if rows else np.zeros((0, dim), dtype=np.float64)
    return StepEmbeddingTable(dim, tuple(ids), matrix, backend_tag)


def save_step_embeddings(table: StepEmbeddingTable, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"EMBX 1 {table.dim}\n")
        for i, item_id in enumerate(table.ids):
            floats = " ".join(repr(float(x)) for x in table.matrix[i])
            fh.write(f"{item_id}\t{floats}\n")
