"""Minimal reader for the test-suite corpus JSONL.

Only the fields the exporter consumes are validated (case_id, name, steps);
extra keys such as `type` pass through untouched. Step ids follow the
`<case_id>.<ordinal>` convention of the consuming pipeline, 1-based.
"""

import json
from dataclasses import dataclass

from .errors import CorpusError


@dataclass(frozen=True)
class RawCase:
    case_id: str
    name: str
    steps: tuple


def load_corpus(path: str) -> list:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    cases, seen = [], set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(rec, dict):
            raise CorpusError(f"line {lineno}: expected an object")
        cases.append(_check(rec, lineno, seen))
    if not cases:
        raise CorpusError(f"corpus {path} holds no test cases")
    return cases


def _check(rec: dict, lineno: int, seen: set) -> RawCase:
    cid = rec.get("case_id")
    if not isinstance(cid, str) or not cid:
        raise CorpusError(f"line {lineno}: case_id must be a non-empty string")
    if any(ch.isspace() for ch in cid):
        # ids become the first column of tab-separated exchange rows
        raise CorpusError(f"line {lineno}: case_id {cid!r} contains whitespace")
    if cid in seen:
        raise CorpusError(f"line {lineno}: duplicate case_id {cid!r}")
    seen.add(cid)
    name = rec.get("name")
    if not isinstance(name, str):
        raise CorpusError(f"line {lineno}: case {cid}: name must be a string")
    steps = rec.get("steps")
    if not isinstance(steps, list) or not steps:
        raise CorpusError(f"line {lineno}: case {cid}: steps must be a non-empty list")
    if not all(isinstance(s, str) for s in steps):
        raise CorpusError(f"line {lineno}: case {cid}: every step must be a string")
    return RawCase(case_id=cid, name=name, steps=tuple(steps))


def step_items(cases) -> list:
    """(step_id, raw text) per step, corpus order."""
    return [
        (f"{c.case_id}.{i}", text)
        for c in cases
        for i, text in enumerate(c.steps, start=1)
    ]


def name_items(cases) -> list:
    """(case_id, case name) per case, corpus order."""
    return [(c.case_id, c.name) for c in cases]
