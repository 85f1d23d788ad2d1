"""Step clustering: average-linkage HAC, seeded K-means, k sweep, ensemble
majority voting, and the two exact-match baselines.

All algorithms return a Clustering with dense cluster ids 0..k-1, relabeled
by first appearance in item order so equal partitions compare equal.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ItemLookupError, ParseError, ValidationError
from .evaluation import GroundTruth, confusion, f_score
from .kernels import hac_merges

CLUSTERING_HEADER = ["item_id", "cluster_id"]
SWEEP_HEADER = ["k", "f_score"]


@dataclass
class Clustering:
    """Total assignment of items to dense, non-empty clusters 0..k-1."""

    ids: tuple
    labels: np.ndarray
    k: int = field(init=False)

    def __post_init__(self):
        self.ids = tuple(self.ids)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        n = len(self.ids)
        if self.labels.shape != (n,):
            raise ValidationError(f"{self.labels.shape[0]} labels for {n} items")
        if len(set(self.ids)) != n:
            raise ValidationError("clustering lists an item twice")
        if n == 0:
            raise ValidationError("clustering over an empty item set")
        self.k = int(self.labels.max()) + 1
        seen = np.zeros(self.k, dtype=bool)
        if self.labels.min() < 0:
            raise ValidationError("negative cluster id")
        seen[self.labels] = True
        if not seen.all():
            raise ValidationError("cluster ids must be dense 0..k-1 with no empty cluster")
        self._index = {item: r for r, item in enumerate(self.ids)}

    @classmethod
    def from_labels(cls, ids, raw_labels) -> "Clustering":
        """Canonicalize arbitrary hashable labels to first-appearance order."""
        order: dict = {}
        labels = np.empty(len(ids), dtype=np.int64)
        for r, lab in enumerate(raw_labels):
            labels[r] = order.setdefault(lab, len(order))
        return cls(ids=tuple(ids), labels=labels)

    def __contains__(self, item_id) -> bool:
        return item_id in self._index

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Clustering)
            and self.ids == other.ids
            and np.array_equal(self.labels, other.labels)
        )

    def cluster_of(self, item_id) -> int:
        try:
            return int(self.labels[self._index[item_id]])
        except KeyError:
            raise ItemLookupError(f"item {item_id!r} is not clustered", [item_id]) from None

    def same_cluster(self, id_a, id_b) -> bool:
        return self.cluster_of(id_a) == self.cluster_of(id_b)

    def members(self) -> list:
        """Member item ids per cluster, cluster 0 first."""
        out = [[] for _ in range(self.k)]
        for item, lab in zip(self.ids, self.labels.tolist()):
            out[lab].append(item)
        return out


def save_clustering(c: Clustering, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CLUSTERING_HEADER)
        for item, lab in zip(c.ids, c.labels.tolist()):
            writer.writerow([item, lab])


def load_clustering(path) -> Clustering:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty clustering file") from None
        if header != CLUSTERING_HEADER:
            raise ParseError(
                f"{path}: expected header {','.join(CLUSTERING_HEADER)!r}, got {header!r}"
            )
        ids, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            ids.append(row[0])
            try:
                labels.append(int(row[1]))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: cluster_id {row[1]!r} is not an integer") from None
    return Clustering(ids=tuple(ids), labels=np.array(labels, dtype=np.int64))


def hac_average(dm, k: int) -> Clustering:
    """Cut the UPGMA merge sequence of the distance matrix at k clusters."""
    n = dm.n
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} out of range 1..{n}")
    ids_a, ids_b, _ = hac_merges(dm.entries)
    members = {i: [i] for i in range(n)}
    for t in range(n - k):
        merged = members.pop(int(ids_a[t])) + members.pop(int(ids_b[t]))
        members[n + t] = merged
    raw = np.empty(n, dtype=np.int64)
    for cid, rows in members.items():
        for r in rows:
            raw[r] = cid
    return Clustering.from_labels(dm.ids, raw)


def _as_items(vectors):
    """(ids, float64 matrix) from a StepEmbeddingTable or an id->vector map."""
    if hasattr(vectors, "ids") and hasattr(vectors, "matrix"):
        return tuple(vectors.ids), np.asarray(vectors.matrix, dtype=np.float64)
    ids = tuple(vectors)
    return ids, np.array([np.asarray(vectors[i], dtype=np.float64) for i in ids])


def centroids(c: Clustering, vectors) -> np.ndarray:
    """Per-cluster arithmetic means, shape (k, dim)."""
    ids, mat = _as_items(vectors)
    index = {i: r for r, i in enumerate(ids)}
    missing = [i for i in c.ids if i not in index]
    if missing:
        raise ItemLookupError(
            f"{len(missing)} clustered items have no vector: " + ", ".join(missing[:10]),
            missing,
        )
    rows = np.array([index[i] for i in c.ids], dtype=np.intp)
    out = np.zeros((c.k, mat.shape[1]), dtype=np.float64)
    np.add.at(out, c.labels, mat[rows])
    counts = np.bincount(c.labels, minlength=c.k).astype(np.float64)
    return out / counts[:, None]


def kmeans(vectors, k: int, init: np.ndarray, max_iter: int = 300, tol: float = 1e-6) -> Clustering:
    """Lloyd's iterations from explicit initial centroids.

    Assignment ties go to the lowest centroid index; an empty cluster is
    reseeded with the point currently farthest from its own centroid.
    """
    ids, x = _as_items(vectors)
    n = x.shape[0]
    cent = np.array(init, dtype=np.float64)
    if cent.ndim != 2 or cent.shape[0] != k:
        raise ValidationError(f"init must provide {k} centroids")
    if cent.shape[1] != x.shape[1]:
        raise ValidationError(f"centroid dim {cent.shape[1]} != point dim {x.shape[1]}")
    if k > n:
        raise ValidationError(f"k={k} exceeds {n} points")
    if k < 1:
        raise ValidationError("k must be at least 1")
    if len({row.tobytes() for row in cent}) != k:
        raise ValidationError("initial centroids must be distinct")

    prev = None
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - cent[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)  # argmin takes the lowest index on ties
        counts = np.bincount(labels, minlength=k)
        while (counts == 0).any():
            # stealing a point can empty its donor cluster, so rescan after
            # each single repair; lowest empty id takes the farthest point
            empty = int(np.nonzero(counts == 0)[0][0])
            own = d2[np.arange(n), labels]
            far = int(np.argmax(own))
            cent[empty] = x[far]
            labels[far] = empty
            d2[:, empty] = ((x - cent[empty]) ** 2).sum(axis=1)
            counts = np.bincount(labels, minlength=k)
        new_cent = np.zeros_like(cent)
        np.add.at(new_cent, labels, x)
        new_cent /= counts[:, None]
        shift = float(np.sqrt(((new_cent - cent) ** 2).sum(axis=1)).max())
        cent = new_cent
        if prev is not None and np.array_equal(labels, prev):
            break
        prev = labels
        if shift < tol:
            break
    return Clustering.from_labels(ids, labels)


@dataclass(frozen=True)
class SweepResult:
    evaluated: tuple  # (k, f_score) pairs, k strictly increasing
    best_k: int
    best_f: float

    def __post_init__(self):
        ks = [k for k, _ in self.evaluated]
        if ks != sorted(set(ks)):
            raise ValidationError("sweep ks must be strictly increasing")
        if self.evaluated and self.best_f != max(f for _, f in self.evaluated):
            raise ValidationError("best_f must be the maximum of the curve")


def sweep_k(
    builder,
    gt: GroundTruth,
    n_items: int,
    k_min: int = 50,
    k_max: int = 15000,
    step: int = 50,
) -> SweepResult:
    """Evaluate builder(k) against the ground truth over the k grid.

    ks above the item count are skipped; F-score ties go to the smallest k.
    """
    if len(gt) == 0:
        raise ValidationError("cannot sweep against an empty ground truth")
    if k_min < 1 or step < 1 or k_max < k_min:
        raise ValidationError(f"bad sweep grid {k_min}..{k_max} step {step}")
    ks = [k for k in range(k_min, k_max + 1, step) if k <= n_items]
    if not ks:
        raise ValidationError(
            f"no sweep point in {k_min}..{k_max} step {step} fits {n_items} items"
        )
    evaluated = []
    best_k, best_f = None, -1.0
    for k in ks:
        f = f_score(confusion(builder(k), gt))
        evaluated.append((k, f))
        if f > best_f:
            best_k, best_f = k, f
    return SweepResult(evaluated=tuple(evaluated), best_k=best_k, best_f=best_f)


def save_sweep(sr: SweepResult, csv_path, json_path) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for k, f in sr.evaluated:
            writer.writerow([k, repr(float(f))])
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump({"best_k": sr.best_k, "best_f": sr.best_f}, fh, indent=2)
        fh.write("\n")


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def ensemble_majority(clusterings, quorum: int = 3) -> Clustering:
    """Co-cluster items placed together by at least `quorum` inputs.

    The quorum graph's connected components become the output clusters, so
    agreement is transitively closed.
    """
    if len(clusterings) < 3:
        raise ValidationError(f"ensemble needs at least 3 clusterings, got {len(clusterings)}")
    if not 1 <= quorum <= len(clusterings):
        raise ValidationError(f"quorum {quorum} out of range 1..{len(clusterings)}")
    ids = clusterings[0].ids
    id_set = set(ids)
    for c in clusterings[1:]:
        if set(c.ids) != id_set:
            raise ValidationError("ensemble inputs must cover the same item set")
    n = len(ids)
    labs = [np.array([c.cluster_of(i) for i in ids], dtype=np.int64) for c in clusterings]
    uf = _UnionFind(n)
    block = 2048  # row blocks keep the vote matrix O(block * n)
    for s in range(0, n, block):
        e = min(s + block, n)
        votes = np.zeros((e - s, n), dtype=np.int16)
        for lab in labs:
            votes += lab[s:e, None] == lab[None, :]
        for r, c in zip(*np.nonzero(votes >= quorum)):
            if s + int(r) < int(c):
                uf.union(s + int(r), int(c))
    return Clustering.from_labels(ids, [uf.find(r) for r in range(n)])


def baseline_exact(steps) -> Clustering:
    """Co-cluster steps whose preprocessed token lists are identical.

    Empty-token steps are keyed by raw text instead, so only byte-identical
    empties merge (mirrors the distance-matrix policy for empty steps).
    """
    keys = [
        ("tokens", s.tokens) if not s.empty else ("raw", s.raw_text) for s in steps
    ]
    return Clustering.from_labels([s.step_id for s in steps], keys)


def baseline_wmd_zero(dm) -> Clustering:
    """Connected components of the zero-distance graph (wmd <= 1e-9)."""
    n = dm.n
    uf = _UnionFind(n)
    close = np.triu(dm.entries <= 1e-9, k=1)
    for a, b in zip(*np.nonzero(close)):
        uf.union(int(a), int(b))
    return Clustering.from_labels(dm.ids, [uf.find(r) for r in range(n)])
