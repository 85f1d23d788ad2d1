"""Test-case similarity over step clusters.

Each case is reduced to a signature over the k step clusters (id set,
boolean vector, count vector) plus its preprocessed name tokens.  Four
scoring techniques compare signatures; a threshold sweep calibrates each
against a ground truth; a report groups the flagged cases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ItemLookupError, ValidationError
from .evaluation import GroundTruth, confusion, f_score
from .similarity import cosine, nbow, wmd

TECHNIQUES = ("overlap", "jaccard", "cosine_counts", "combined")


@dataclass(frozen=True, eq=False)
class CaseSignature:
    """Per-case view over step clusters; vectors have length k."""

    case_id: str
    cluster_ids: tuple  # sorted unique step-cluster ids with >= 1 step
    bool_vec: np.ndarray
    count_vec: np.ndarray
    name_tokens: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "count_vec", np.asarray(self.count_vec, dtype=np.int64))
        object.__setattr__(self, "bool_vec", np.asarray(self.bool_vec, dtype=np.int64))
        if self.count_vec.min(initial=0) < 0:
            raise ValidationError("count_vec entries must be non-negative")
        if not np.array_equal(self.bool_vec, (self.count_vec >= 1).astype(np.int64)):
            raise ValidationError("bool_vec must be the support of count_vec")
        support = tuple(np.nonzero(self.count_vec)[0].tolist())
        if tuple(self.cluster_ids) != support:
            raise ValidationError("cluster_ids must equal the support of count_vec")


def signatures(steps, clustering, name_tokens=None) -> list:
    """One CaseSignature per case, in first-appearance order of the steps."""
    missing = [s.step_id for s in steps if s.step_id not in clustering]
    if missing:
        raise ItemLookupError(
            f"{len(missing)} steps are not clustered: " + ", ".join(missing[:10]),
            missing,
        )
    name_tokens = name_tokens or {}
    k = clustering.k
    order, counts = [], {}
    for s in steps:
        if s.case_id not in counts:
            order.append(s.case_id)
            counts[s.case_id] = np.zeros(k, dtype=np.int64)
        counts[s.case_id][clustering.cluster_of(s.step_id)] += 1
    return [
        CaseSignature(
            case_id=cid,
            cluster_ids=tuple(np.nonzero(counts[cid])[0].tolist()),
            bool_vec=(counts[cid] >= 1).astype(np.int64),
            count_vec=counts[cid],
            name_tokens=tuple(name_tokens.get(cid, ())),
        )
        for cid in order
    ]


def overlap(a: CaseSignature, b: CaseSignature) -> float:
    """|shared clusters| / clusters of the larger case."""
    sa, sb = set(a.cluster_ids), set(b.cluster_ids)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / max(len(sa), len(sb))


def jaccard(a: CaseSignature, b: CaseSignature) -> float:
    sa, sb = set(a.cluster_ids), set(b.cluster_ids)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def cosine_counts(a: CaseSignature, b: CaseSignature) -> float:
    return cosine(a.count_vec, b.count_vec)


def name_similarity(a: CaseSignature, b: CaseSignature, words) -> float:
    """1 / (1 + wmd between name nBOWs); empty names match only each other."""
    ea, eb = not a.name_tokens, not b.name_tokens
    if ea or eb:
        return 1.0 if ea and eb else 0.0
    return 1.0 / (1.0 + wmd(nbow(a.name_tokens), nbow(b.name_tokens), words))


def combined(a: CaseSignature, b: CaseSignature, words, w_name: float = 0.5) -> float:
    if not 0.0 <= w_name <= 1.0:
        raise ConfigError(f"w_name must lie in [0, 1], got {w_name}")
    return (1.0 - w_name) * cosine_counts(a, b) + w_name * name_similarity(a, b, words)


def score(a: CaseSignature, b: CaseSignature, technique: str, words=None, w_name: float = 0.5) -> float:
    if technique == "overlap":
        return overlap(a, b)
    if technique == "jaccard":
        return jaccard(a, b)
    if technique == "cosine_counts":
        return cosine_counts(a, b)
    if technique == "combined":
        if words is None:
            raise ConfigError("technique 'combined' needs a word embedding table for names")
        return combined(a, b, words, w_name)
    raise ConfigError(f"unknown technique {technique!r} (expected one of {', '.join(TECHNIQUES)})")


def score_all(sigs, technique: str, words=None, w_name: float = 0.5) -> dict:
    """(case_a, case_b) -> score for every unordered pair, in input order."""
    out = {}
    for i, a in enumerate(sigs):
        for b in sigs[i + 1 :]:
            out[(a.case_id, b.case_id)] = score(a, b, technique, words, w_name)
    return out


@dataclass(frozen=True)
class ThresholdSweep:
    evaluated: tuple  # (threshold, f_score), thresholds strictly increasing
    best_threshold: float
    best_f: float

    def __post_init__(self):
        ts = [t for t, _ in self.evaluated]
        if ts != sorted(set(ts)):
            raise ValidationError("sweep thresholds must be strictly increasing")
        if self.evaluated and self.best_f != max(f for _, f in self.evaluated):
            raise ValidationError("best_f must be the maximum of the curve")


def sweep_threshold(
    sigs,
    technique: str,
    gt: GroundTruth,
    words=None,
    w_name: float = 0.5,
    t_min: float = 0.1,
    t_max: float = 1.0,
    step: float = 0.05,
) -> ThresholdSweep:
    """F-score of "score >= t" against the ground truth over the t grid.

    Ties go to the largest threshold (favoring precision).
    """
    if len(gt) == 0:
        raise ValidationError("cannot sweep against an empty ground truth")
    if not 0.0 < t_min <= t_max <= 1.0 or step <= 0.0:
        raise ValidationError(f"bad threshold grid {t_min}..{t_max} step {step}")
    known = {s.case_id for s in sigs}
    missing = [i for i in gt.items if i not in known]
    if missing:
        raise ItemLookupError(
            f"{len(missing)} ground-truth cases have no signature: " + ", ".join(missing[:10]),
            missing,
        )
    scores = score_all(sigs, technique, words, w_name)

    def same_at(t):
        return lambda a, b: scores[(a, b) if (a, b) in scores else (b, a)] >= t

    evaluated = []
    best_t, best_f = None, -1.0
    steps_count = int(round((t_max - t_min) / step))
    for i in range(steps_count + 1):
        t = round(t_min + i * step, 10)
        if t > t_max:
            break
        f = f_score(confusion(same_at(t), gt))
        evaluated.append((t, f))
        if f >= best_f:
            best_t, best_f = t, f
    return ThresholdSweep(evaluated=tuple(evaluated), best_threshold=best_t, best_f=best_f)


@dataclass(frozen=True)
class SimilarityReport:
    technique: str
    threshold: float
    pairs: tuple  # (case_a, case_b, score >= threshold)
    groups: tuple  # tuples of case ids, connected components of the pair graph
    stats: dict = field(compare=False)

    def __post_init__(self):
        if any(s < self.threshold for _, _, s in self.pairs):
            raise ValidationError("reported pairs must score at least the threshold")
        flagged = {c for a, b, _ in self.pairs for c in (a, b)}
        grouped = [c for g in self.groups for c in g]
        if sorted(grouped) != sorted(flagged):
            raise ValidationError("groups must partition exactly the flagged cases")


def report(sigs, technique: str, threshold: float, words=None, w_name: float = 0.5) -> SimilarityReport:
    if not 0.0 < threshold <= 1.0:
        raise ValidationError(f"threshold must lie in (0, 1], got {threshold}")
    scores = score_all(sigs, technique, words, w_name)
    pairs = tuple((a, b, s) for (a, b), s in scores.items() if s >= threshold)

    order = [s.case_id for s in sigs]
    parent = {c: c for c in order}

    def find(c):
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    for a, b, _ in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb, key=order.index)] = min(ra, rb, key=order.index)
    flagged = {c for a, b, _ in pairs for c in (a, b)}
    comps = {}
    for c in order:
        if c in flagged:
            comps.setdefault(find(c), []).append(c)
    groups = tuple(tuple(g) for g in comps.values())

    sizes = np.array([len(g) for g in groups], dtype=np.float64)
    stats = {
        "cases_with_match_fraction": len(flagged) / len(sigs) if sigs else 0.0,
        "group_count": len(groups),
        "group_size_mean": float(sizes.mean()) if len(sizes) else 0.0,
        "group_size_std": float(sizes.std()) if len(sizes) else 0.0,
    }
    return SimilarityReport(
        technique=technique, threshold=threshold, pairs=pairs, groups=groups, stats=stats
    )


def report_to_json(rep: SimilarityReport) -> dict:
    return {
        "technique": rep.technique,
        "threshold": rep.threshold,
        "pairs": [{"a": a, "b": b, "score": s} for a, b, s in rep.pairs],
        "groups": [list(g) for g in rep.groups],
        "stats": rep.stats,
    }


def save_report(rep: SimilarityReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_json(rep), fh, indent=2, sort_keys=True)
        fh.write("\n")


def report_to_text(rep: SimilarityReport, names=None, steps_by_case=None) -> str:
    """Reviewer-facing listing of the groups with names and step texts."""
    names = names or {}
    steps_by_case = steps_by_case or {}
    lines = [
        f"technique: {rep.technique}   threshold: {rep.threshold:g}",
        f"flagged pairs: {len(rep.pairs)}   groups: {rep.stats['group_count']}   "
        f"cases with a match: {rep.stats['cases_with_match_fraction']:.1%}",
        "",
    ]
    for g, members in enumerate(rep.groups, start=1):
        lines.append(f"group {g} ({len(members)} cases)")
        for cid in members:
            title = names.get(cid, "")
            lines.append(f"  {cid}" + (f"  {title}" if title else ""))
            for s in steps_by_case.get(cid, []):
                lines.append(f"    {s.ordinal}. {s.raw_text}")
        lines.append("")
    if not rep.groups:
        lines.append("no groups at this threshold")
        lines.append("")
    return "\n".join(lines)


def case_baseline_same_steps(steps) -> list:
    """Pairs of cases whose ordered preprocessed step token lists match."""
    by_case = {}
    order = []
    for s in steps:
        if s.case_id not in by_case:
            order.append(s.case_id)
            by_case[s.case_id] = []
        by_case[s.case_id].append(s.tokens)
    keys = {cid: tuple(by_case[cid]) for cid in order}
    return _pairs_with_equal_keys(order, keys)


def case_baseline_same_name(names) -> list:
    """Pairs of cases whose names match after lowercasing and whitespace
    normalization; `names` maps case_id -> raw name."""
    order = list(names)
    keys = {cid: " ".join(str(names[cid]).lower().split()) for cid in order}
    return _pairs_with_equal_keys(order, keys)


def _pairs_with_equal_keys(order, keys) -> list:
    buckets = {}
    for cid in order:
        buckets.setdefault(keys[cid], []).append(cid)
    out = []
    for members in buckets.values():
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                out.append((members[i], members[j]))
    return out
