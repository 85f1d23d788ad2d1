"""Corpus loading and step preprocessing.

Raw test cases come in as (id, name, optional type, ordered step texts);
preprocessing turns every step into a list of lowercase lemmatized tokens
with misspellings fixed, stopwords dropped, and corpus-wide singleton words
pruned.
"""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

from .errors import ConfigError, ParseError, ValidationError

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_VOWELS = "aeiou"
_DOUBLING = "bdgmnprt"  # consonants undoubled after stripping -ed / -ing

CSV_HEADER = ["case_id", "name", "type", "step_ordinal", "step_text"]


def load_default_stopwords() -> frozenset:
    text = resources.files("testsim.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w for w in text.split() if w)


def load_default_lemma_exceptions() -> dict:
    text = resources.files("testsim.data").joinpath("lemma_exceptions.csv").read_text("utf-8")
    rows = list(csv.reader(text.splitlines()))
    return {w: l for w, l in rows[1:] if w}


@dataclass(frozen=True)
class RawTestCase:
    case_id: str
    name: str
    case_type: str | None
    steps: tuple

    def __post_init__(self):
        if not self.case_id:
            raise ValidationError("case_id must be non-empty")
        if not self.steps:
            raise ValidationError(f"case {self.case_id!r} has no steps")
        object.__setattr__(self, "steps", tuple(self.steps))


@dataclass(frozen=True)
class TestStep:
    __test__ = False  # not a pytest class, despite the domain name

    step_id: str
    case_id: str
    ordinal: int  # 1-based position within the case
    raw_text: str
    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    @property
    def empty(self) -> bool:
        return not self.tokens


@dataclass(frozen=True)
class PreprocessConfig:
    misspelling_map: tuple = ()
    stopwords: frozenset = field(default_factory=load_default_stopwords)
    lemma_exceptions: dict = field(default_factory=load_default_lemma_exceptions)
    prune_singletons: bool = True

    def __post_init__(self):
        pairs = tuple((str(a).lower(), str(b).lower()) for a, b in self.misspelling_map)
        object.__setattr__(self, "misspelling_map", pairs)
        seen = set()
        for bad, good in pairs:
            if bad in seen:
                raise ValidationError(f"misspelling map lists {bad!r} twice")
            seen.add(bad)
            if bad == good:
                raise ValidationError(f"misspelling map maps {bad!r} to itself")
        # Resolve chains (a->b, b->c) so corrected tokens never land back in
        # the map's left column; a cycle cannot be resolved.
        raw = dict(pairs)
        resolved = {}
        for bad in raw:
            cur = raw[bad]
            for _ in range(len(raw)):
                if cur not in raw:
                    break
                cur = raw[cur]
            else:
                raise ValidationError(f"misspelling map has a cycle through {bad!r}")
            resolved[bad] = cur
        object.__setattr__(self, "_resolved", resolved)


def tokenize(text: str) -> list:
    """Lowercase, then split on any run of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def _strip_plural(word: str) -> str:
    if len(word) > 4 and word.endswith("ies"):
        return word[:-3] + "y"
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith(("shes", "ches", "xes")):
        return word[:-2]
    if word.endswith(("ss", "us", "is")):
        return word
    if len(word) > 3 and word.endswith("s"):
        return word[:-1]
    return word


def _finish_stem(word: str, stem: str) -> str:
    # Shared tail for -ed / -ing removal: reject too-short or vowel-less
    # stems, undouble stop/plan-style consonants, restore a dropped final e.
    if len(stem) < 3 or not any(c in _VOWELS for c in stem):
        return word
    if stem.endswith(("at", "bl", "iz")):
        return stem + "e"
    if stem[-1] == stem[-2] and stem[-1] in _DOUBLING:
        return stem[:-1]
    if (
        len(stem) == 3
        and stem[-1] not in _VOWELS
        and stem[-1] not in "wxy"
        and stem[-2] in _VOWELS
        and stem[-3] not in _VOWELS
    ):
        return stem + "e"
    return stem


def _strip_participle(word: str) -> str:
    if word.endswith("ing"):
        return _finish_stem(word, word[:-3])
    if len(word) > 4 and word.endswith("ied"):
        return word[:-3] + "y"
    if word.endswith("eed"):
        return word
    if word.endswith("ed"):
        return _finish_stem(word, word[:-2])
    return word


def lemmatize(word: str, exceptions: dict) -> str:
    """Rule-based lemma: plural endings, then -ing / -ed participles.

    The exception table wins at every stage, so irregulars and words whose
    surface form is meaningful (e.g. gerunds used as nouns) pass through.
    """
    if word in exceptions:
        return exceptions[word]
    w = _strip_plural(word)
    if w in exceptions:
        return exceptions[w]
    return _strip_participle(w)


def preprocess_text(text: str, cfg: PreprocessConfig) -> list:
    """Apply the full token pipeline to one string (no singleton pruning)."""
    fixes = cfg._resolved
    out = []
    for tok in tokenize(text):
        mapped = fixes.get(tok, tok)
        for piece in mapped.split():
            if piece in cfg.stopwords:
                continue
            lemma = lemmatize(piece, cfg.lemma_exceptions)
            # lemmas can collapse onto a stopword ("downs" -> "down")
            if lemma in cfg.stopwords:
                continue
            out.append(lemma)
    return out


def preprocess(corpus, cfg: PreprocessConfig) -> list:
    """Stage-1 pipeline over all steps of the corpus.

    Steps whose token list ends up empty are kept (flagged via .empty) so
    step ids stay stable for ground-truth joins.
    """
    staged = []
    for case in corpus:
        for ordinal, raw in enumerate(case.steps, start=1):
            staged.append((case.case_id, ordinal, raw, preprocess_text(raw, cfg)))

    if cfg.prune_singletons:
        freq = Counter(tok for _, _, _, toks in staged for tok in toks)
        staged = [
            (cid, o, raw, [t for t in toks if freq[t] >= 2])
            for cid, o, raw, toks in staged
        ]

    return [
        TestStep(step_id=f"{cid}.{o}", case_id=cid, ordinal=o, raw_text=raw, tokens=tuple(toks))
        for cid, o, raw, toks in staged
    ]


def training_sentences(steps, cases, cfg: PreprocessConfig) -> list:
    """Embedding-training input: type tokens + name tokens + step tokens.

    Name and type run through the same pipeline as steps but are never
    singleton-pruned; the steps themselves are used as preprocessed.
    """
    prefix = {}
    for case in cases:
        toks = []
        if case.case_type:
            toks.extend(preprocess_text(case.case_type, cfg))
        toks.extend(preprocess_text(case.name, cfg))
        prefix[case.case_id] = toks
    sentences = []
    for step in steps:
        if step.case_id not in prefix:
            raise ValidationError(f"step {step.step_id} references unknown case {step.case_id}")
        sentences.append(prefix[step.case_id] + list(step.tokens))
    return sentences


def _check_record(rec, where: str) -> RawTestCase:
    if not isinstance(rec, dict):
        raise ParseError(f"{where}: expected an object, got {type(rec).__name__}")
    for key in ("case_id", "name", "steps"):
        if key not in rec:
            raise ParseError(f"{where}: missing key {key!r}")
    case_id, name, steps = rec["case_id"], rec["name"], rec["steps"]
    case_type = rec.get("type")
    if not isinstance(case_id, str) or not case_id:
        raise ParseError(f"{where}: case_id must be a non-empty string")
    if not isinstance(name, str):
        raise ParseError(f"{where}: name must be a string")
    if case_type is not None and not isinstance(case_type, str):
        raise ParseError(f"{where}: type must be a string or null")
    if (
        not isinstance(steps, list)
        or not steps
        or any(not isinstance(s, str) for s in steps)
    ):
        raise ParseError(f"{where}: steps must be a non-empty array of strings")
    return RawTestCase(case_id=case_id, name=name, case_type=case_type or None, steps=tuple(steps))


def _load_jsonl(path: str) -> list:
    cases = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            cases.append(_check_record(rec, f"{path}: line {lineno}"))
    return cases


def _load_csv(path: str) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return []
    if rows[0] != CSV_HEADER:
        raise ParseError(f"{path}: expected header {','.join(CSV_HEADER)}")
    cases = []
    cur = None  # (case_id, name, type, [steps])
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ParseError(f"{path}: line {lineno}: expected 5 fields, got {len(row)}")
        case_id, name, ctype, ord_s, text = row
        try:
            ordinal = int(ord_s)
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: step_ordinal {ord_s!r} is not an integer")
        if cur is not None and case_id == cur[0]:
            if (name, ctype) != (cur[1], cur[2]):
                raise ParseError(f"{path}: line {lineno}: name/type changed within case {case_id!r}")
            if ordinal != len(cur[3]) + 1:
                raise ParseError(
                    f"{path}: line {lineno}: step_ordinal {ordinal} breaks the "
                    f"1..n order of case {case_id!r}"
                )
            cur[3].append(text)
        else:
            if cur is not None:
                cases.append(RawTestCase(cur[0], cur[1], cur[2] or None, tuple(cur[3])))
            if ordinal != 1:
                raise ParseError(f"{path}: line {lineno}: case {case_id!r} must start at step_ordinal 1")
            cur = (case_id, name, ctype, [text])
    if cur is not None:
        cases.append(RawTestCase(cur[0], cur[1], cur[2] or None, tuple(cur[3])))
    return cases


def load_misspellings(path: str) -> tuple:
    """(wrong, right) rows from a CSV with header `wrong,right`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["wrong", "right"]:
        raise ParseError(f"{path}: expected header wrong,right")
    pairs = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2 or not row[0] or not row[1]:
            raise ParseError(f"{path}: line {lineno}: expected wrong,right with both fields")
        pairs.append((row[0], row[1]))
    return tuple(pairs)


def load_corpus(path: str, fmt: str) -> list:
    """Read raw test cases from a JSONL or CSV file (see module formats)."""
    if fmt == "jsonl":
        cases = _load_jsonl(path)
    elif fmt == "csv":
        cases = _load_csv(path)
    else:
        raise ConfigError(f"unknown corpus format {fmt!r} (expected jsonl or csv)")
    seen = set()
    for case in cases:
        if case.case_id in seen:
            raise ValidationError(f"duplicate case_id {case.case_id!r}")
        seen.add(case.case_id)
    return cases
