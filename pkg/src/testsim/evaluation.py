"""Ground truth and the pairwise precision/recall/F-score protocol.

Predictions and labels are compared over every unordered pair of labeled
items: a pair counts as tp when both sides put it together, fp/fn when only
one side does, tn when neither does.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .errors import ItemLookupError, ParseError, ValidationError

GT_HEADER = ["item_id", "label"]


@dataclass(frozen=True)
class GroundTruth:
    """item_id -> opaque label over the manually labeled subset."""

    assignment: dict

    def __post_init__(self):
        if not all(isinstance(k, str) and isinstance(v, str) for k, v in self.assignment.items()):
            raise ValidationError("ground truth must map string ids to string labels")

    @property
    def items(self) -> tuple:
        return tuple(sorted(self.assignment))

    def __len__(self) -> int:
        return len(self.assignment)


def load_ground_truth(path) -> GroundTruth:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty ground-truth file") from None
        if header != GT_HEADER:
            raise ParseError(f"{path}: expected header {','.join(GT_HEADER)!r}, got {header!r}")
        assignment = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            item_id, label = row
            if item_id in assignment:
                raise ParseError(f"{path}:{lineno}: duplicate item_id {item_id!r}")
            assignment[item_id] = label
    return GroundTruth(assignment=assignment)


@dataclass(frozen=True)
class PairwiseConfusion:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValidationError("confusion counts must be non-negative")


def confusion(predicted, gt: GroundTruth) -> PairwiseConfusion:
    """Count unordered labeled pairs; `predicted` is a Clustering-like
    object (with same_cluster and an id set) or a pair predicate f(a, b)."""
    items = gt.items
    if hasattr(predicted, "same_cluster"):
        missing = [i for i in items if i not in predicted]
        if missing:
            raise ItemLookupError(
                f"{len(missing)} ground-truth items missing from prediction: "
                + ", ".join(missing[:10]) + ("..." if len(missing) > 10 else ""),
                missing,
            )
        same = predicted.same_cluster
    else:
        same = predicted
    tp = fp = tn = fn = 0
    labels = gt.assignment
    m = len(items)
    for i in range(m):
        a = items[i]
        la = labels[a]
        for j in range(i + 1, m):
            b = items[j]
            if same(a, b):
                if la == labels[b]:
                    tp += 1
                else:
                    fp += 1
            else:
                if la == labels[b]:
                    fn += 1
                else:
                    tn += 1
    return PairwiseConfusion(tp=tp, fp=fp, tn=tn, fn=fn)


def precision(c: PairwiseConfusion) -> float:
    return c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0


def recall(c: PairwiseConfusion) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0


def f_score(c: PairwiseConfusion) -> float:
    p, r = precision(c), recall(c)
    return 2.0 * p * r / (p + r) if p + r else 0.0


def summary(c: PairwiseConfusion) -> dict:
    """JSON-ready evaluation record."""
    return {
        "tp": c.tp,
        "fp": c.fp,
        "tn": c.tn,
        "fn": c.fn,
        "precision": precision(c),
        "recall": recall(c),
        "f_score": f_score(c),
    }
