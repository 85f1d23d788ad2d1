"""One export job: corpus in, embedding exchange file out.

The output follows the exchange format of the consuming pipeline: a
"EMBX 1 <dim>" header, optional "#" comment lines, then one
"<id>\t<floats>" row per step or case name. Failures leave no partial
file behind.
"""

import os
from dataclasses import dataclass

import numpy as np

from .corpus import load_corpus, name_items, step_items
from .errors import DimDriftError, JobError
from .models import POOLINGS, load_model

TARGETS = ("steps", "case_names")


@dataclass(frozen=True)
class ExportJob:
    corpus: str
    model_id: str
    pooling: str
    out: str
    target: str

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise JobError(
                f"unknown pooling {self.pooling!r} (expected one of {', '.join(POOLINGS)})"
            )
        if self.target not in TARGETS:
            raise JobError(
                f"unknown target {self.target!r} (expected one of {', '.join(TARGETS)})"
            )


@dataclass(frozen=True)
class ExportResult:
    out: str
    rows: int
    dim: int


def export(job: ExportJob, model=None) -> ExportResult:
    """Encode every step (or case name) and write the exchange file.

    `model` overrides the registry lookup, for callers that already hold a
    loaded model. The output is written to a sibling temp file and moved
    into place only after every row encoded at the header dim.
    """
    cases = load_corpus(job.corpus)
    if model is None:
        model = load_model(job.model_id)
    items = step_items(cases) if job.target == "steps" else name_items(cases)
    dim = model.info.dim

    tmp = job.out + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(f"EMBX 1 {dim}\n")
            fh.write(f"# model: {job.model_id}\n")
            fh.write(f"# revision: {model.info.revision}\n")
            if model.ignores_pooling:
                fh.write("# pooling: ignored (sentence-level model)\n")
            else:
                fh.write(f"# pooling: {job.pooling}\n")
            fh.write(f"# target: {job.target}\n")
            for item_id, text in items:
                vec = np.asarray(model.encode(text, job.pooling), dtype=np.float64)
                if vec.shape != (dim,):
                    raise DimDriftError(
                        f"{item_id}: model returned shape {vec.shape}, header says ({dim},)"
                    )
                fh.write(item_id + "\t" + " ".join(repr(float(x)) for x in vec) + "\n")
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    os.replace(tmp, job.out)
    return ExportResult(out=job.out, rows=len(items), dim=dim)
