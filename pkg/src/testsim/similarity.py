"""Pairwise step distances: exact Word Mover's Distance and cosine.

WMD between two steps is the optimal value of the balanced transportation
problem moving one step's normalized bag-of-words onto the other's, with
Euclidean distances between word vectors as ground costs.  The solver lives
in the kernels package (compiled when available).
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import BinaryFormatError, ConfigError, ValidationError
from .kernels import transport_solve

DEFAULT_MATRIX_CAP = 20000


@dataclass(frozen=True)
class NBow:
    """Normalized bag of words: distinct words, positive weights, sum 1."""

    words: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.words) != len(set(self.words)):
            raise ValidationError("nbow words must be distinct")
        if len(self.words) != len(self.weights):
            raise ValidationError("nbow words and weights differ in length")
        if any(w <= 0.0 for w in self.weights):
            raise ValidationError("nbow weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValidationError("nbow weights must sum to 1")


def nbow(tokens) -> NBow:
    """nBOW of a step or token list; weight of w = count(w) / total tokens."""
    toks = tuple(tokens.tokens if hasattr(tokens, "tokens") else tokens)
    if not toks:
        raise ValidationError("cannot build an nbow from an empty token list")
    counts = sorted(Counter(toks).items())
    total = len(toks)
    return NBow(
        words=tuple(w for w, _ in counts),
        weights=tuple(c / total for _, c in counts),
    )


def _ground_cost(a: NBow, b: NBow, words) -> np.ndarray:
    va = np.stack([words.vector(w) for w in a.words]).astype(np.float64)
    vb = np.stack([words.vector(w) for w in b.words]).astype(np.float64)
    diff = va[:, None, :] - vb[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def wmd(a: NBow, b: NBow, words) -> float:
    """Exact Word Mover's Distance between two nBOWs."""
    if a.words == b.words and a.weights == b.weights:
        return 0.0
    cost = _ground_cost(a, b, words)
    return transport_solve(cost, np.array(a.weights), np.array(b.weights))


def cosine(u, v) -> float:
    """u.v / (|u||v|), 0 when either norm is 0; clamped into [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValidationError(f"cosine dim mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    if np.array_equal(u, v):
        return 1.0
    return float(np.clip(float(u @ v) / (nu * nv), -1.0, 1.0))


def cosine_distance(u, v) -> float:
    return 1.0 - cosine(u, v)


@dataclass
class DistanceMatrix:
    """Symmetric pairwise distances, float32 entries, zero diagonal."""

    ids: tuple
    entries: np.ndarray

    def __post_init__(self):
        self.ids = tuple(self.ids)
        self.entries = np.ascontiguousarray(self.entries, dtype=np.float32)
        n = len(self.ids)
        if self.entries.shape != (n, n):
            raise ValidationError(f"matrix shape {self.entries.shape} for {n} ids")
        if not np.all(np.isfinite(self.entries)):
            raise ValidationError("distance matrix has non-finite entries")
        if np.any(self.entries < 0.0):
            raise ValidationError("distance matrix has negative entries")
        if np.any(np.diagonal(self.entries) != 0.0):
            raise ValidationError("distance matrix diagonal must be zero")
        if np.abs(self.entries - self.entries.T).max(initial=0.0) > 1e-9:
            raise ValidationError("distance matrix must be symmetric")
        self._index = {i: r for r, i in enumerate(self.ids)}
        if len(self._index) != n:
            raise ValidationError("distance matrix lists an id twice")

    @property
    def n(self) -> int:
        return len(self.ids)

    def distance(self, id_a, id_b) -> float:
        return float(self.entries[self._index[id_a], self._index[id_b]])


def build_distance_matrix(
    steps,
    metric: str,
    words=None,
    vectors=None,
    cap: int = DEFAULT_MATRIX_CAP,
) -> DistanceMatrix:
    """Dense pairwise matrix over the upper triangle, mirrored.

    metric "wmd" consumes a word table; metric "cosine_distance" consumes
    per-step vectors (a StepEmbeddingTable or a plain id->vector mapping).
    Empty-token steps are penalized: distance 0 to byte-identical empty
    steps, the maximal penalty to everything else (1.0 for cosine, twice
    the largest real distance + 1 for wmd) so they end up as singletons.
    """
    n = len(steps)
    if n > cap:
        raise ConfigError(
            f"{n} items exceed the dense-matrix cap of {cap}; "
            "raise the cap explicitly if you accept the memory cost"
        )
    ids = tuple(s.step_id for s in steps)
    out = np.zeros((n, n), dtype=np.float64)

    if metric == "wmd":
        if words is None:
            raise ConfigError("wmd matrix requires a word embedding table")
        bags = [None if s.empty else nbow(s) for s in steps]
        empty_pairs = []
        d_max = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                if bags[i] is None or bags[j] is None:
                    empty_pairs.append((i, j))
                    continue
                d = wmd(bags[i], bags[j], words)
                out[i, j] = out[j, i] = d
                d_max = max(d_max, d)
        penalty = 2.0 * d_max + 1.0
        for i, j in empty_pairs:
            alike = steps[i].empty and steps[j].empty and (
                steps[i].raw_text.encode("utf-8") == steps[j].raw_text.encode("utf-8")
            )
            out[i, j] = out[j, i] = 0.0 if alike else penalty
    elif metric == "cosine_distance":
        if vectors is None:
            raise ConfigError("cosine matrix requires step vectors")
        get = vectors.vector if hasattr(vectors, "vector") else vectors.__getitem__
        rows = [np.asarray(get(s.step_id), dtype=np.float64) for s in steps]
        for i in range(n):
            for j in range(i + 1, n):
                if steps[i].empty or steps[j].empty:
                    alike = steps[i].empty and steps[j].empty and (
                        steps[i].raw_text.encode("utf-8") == steps[j].raw_text.encode("utf-8")
                    )
                    d = 0.0 if alike else 1.0
                else:
                    d = cosine_distance(rows[i], rows[j])
                out[i, j] = out[j, i] = d
    else:
        raise ConfigError(f"unknown metric {metric!r} (expected wmd or cosine_distance)")

    return DistanceMatrix(ids=ids, entries=out.astype(np.float32))


def save_dmat(dm: DistanceMatrix, path: str) -> None:
    """Binary layout: "DMAT 1 <n>\\n", n length-prefixed UTF-8 ids, then
    the n(n-1)/2 upper-triangle float32 entries in row order."""
    with open(path, "wb") as fh:
        fh.write(f"DMAT 1 {dm.n}\n".encode("ascii"))
        for item_id in dm.ids:
            raw = item_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        n = dm.n
        iu = np.triu_indices(n, k=1)
        fh.write(dm.entries[iu].astype("<f4", copy=False).tobytes())


def load_dmat(path: str) -> DistanceMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise BinaryFormatError(f"{path}: no header line (byte 0)")
    parts = data[:nl].split()
    if len(parts) != 3 or parts[0] != b"DMAT" or parts[1] != b"1":
        raise BinaryFormatError(f"{path}: expected header 'DMAT 1 <n>' (byte 0)")
    try:
        n = int(parts[2])
    except ValueError:
        raise BinaryFormatError(f"{path}: malformed item count (byte 0)") from None
    pos = nl + 1
    ids = []
    for i in range(n):
        if pos + 4 > len(data):
            raise BinaryFormatError(f"{path}: truncated id length {i} (byte {pos})")
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + length > len(data):
            raise BinaryFormatError(f"{path}: truncated id {i} (byte {pos})")
        try:
            ids.append(data[pos : pos + length].decode("utf-8"))
        except UnicodeDecodeError:
            raise BinaryFormatError(f"{path}: id {i} is not UTF-8 (byte {pos})") from None
        pos += length
    want = n * (n - 1) // 2
    if pos + 4 * want != len(data):
        raise BinaryFormatError(
            f"{path}: expected {want} float32 entries after byte {pos}, "
            f"found {(len(data) - pos) // 4}"
        )
    tri = np.frombuffer(data, dtype="<f4", count=want, offset=pos)
    entries = np.zeros((n, n), dtype=np.float32)
    iu = np.triu_indices(n, k=1)
    entries[iu] = tri
    entries.T[iu] = tri
    return DistanceMatrix(ids=tuple(ids), entries=entries)
