import json
import os

import numpy as np
import pytest

from embexport.corpus import load_corpus, name_items, step_items
from embexport.errors import CorpusError, DimDriftError, JobError, ModelLoadError
from embexport.export import ExportJob, ExportResult, export
from embexport.models import load_model


def write_corpus(tmp_path, recs, name="c.jsonl"):
    p = tmp_path / name
    p.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
    return str(p)


def two_step_corpus(tmp_path):
    return write_corpus(tmp_path, [
        {"case_id": "TC1", "name": "open door", "type": "smoke",
         "steps": ["Open the front door", "Close the front door"]},
    ])


def read_rows(path):
    header, comments, rows = None, [], {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        for line in fh:
            if line.startswith("#"):
                comments.append(line.rstrip("\n"))
                continue
            item_id, _, rest = line.rstrip("\n").partition("\t")
            rows[item_id] = [float(x) for x in rest.split()]
    return header, comments, rows


def test_two_step_corpus_mean_pooling(tmp_path):
    out = str(tmp_path / "steps.embx")
    job = ExportJob(corpus=two_step_corpus(tmp_path), model_id="sbert-base",
                    pooling="mean", out=out, target="steps")
    res = export(job)
    assert res == ExportResult(out=out, rows=2, dim=768)
    header, comments, rows = read_rows(out)
    assert header == "EMBX 1 768"
    assert set(rows) == {"TC1.1", "TC1.2"}
    assert all(len(v) == 768 for v in rows.values())
    assert "# model: sbert-base" in comments
    assert "# revision: main" in comments
    assert "# pooling: mean" in comments
    assert "# target: steps" in comments


def test_every_step_exactly_once_in_corpus_order(tmp_path):
    recs = [
        {"case_id": f"TC{i}", "name": f"case {i}",
         "steps": [f"step {i} {j}" for j in range(1, 4)]}
        for i in range(1, 6)
    ]
    corpus = write_corpus(tmp_path, recs)
    out = str(tmp_path / "steps.embx")
    export(ExportJob(corpus=corpus, model_id="all-MiniLM-L6-v2",
                     pooling="cls", out=out, target="steps"))
    with open(out, encoding="utf-8") as fh:
        ids = [ln.split("\t")[0] for ln in fh if "\t" in ln]
    want = [sid for sid, _ in step_items(load_corpus(corpus))]
    assert ids == want
    assert len(ids) == len(set(ids)) == 15


def test_case_names_target(tmp_path):
    corpus = write_corpus(tmp_path, [
        {"case_id": "A", "name": "equip the hat", "steps": ["s"]},
        {"case_id": "B", "name": "buy a sticker", "steps": ["s"]},
    ])
    out = str(tmp_path / "names.embx")
    res = export(ExportJob(corpus=corpus, model_id="sbert-base",
                           pooling="second_to_last", out=out, target="case_names"))
    assert res.rows == 2
    header, comments, rows = read_rows(out)
    assert set(rows) == {"A", "B"}
    assert "# target: case_names" in comments
    want = name_items(load_corpus(corpus))
    assert [cid for cid, _ in want] == ["A", "B"]


def test_identical_raw_steps_identical_vectors(tmp_path):
    corpus = write_corpus(tmp_path, [
        {"case_id": "A", "name": "a", "steps": ["Scroll to the sticker section"]},
        {"case_id": "B", "name": "b", "steps": ["Scroll to the sticker section"]},
    ])
    out = str(tmp_path / "steps.embx")
    for pooling in ("mean", "sum_last4"):
        export(ExportJob(corpus=corpus, model_id="sbert-base",
                         pooling=pooling, out=out, target="steps"))
        _, _, rows = read_rows(out)
        assert rows["A.1"] == rows["B.1"]


def test_use_style_header_notes_ignored_pooling(tmp_path):
    out = str(tmp_path / "use.embx")
    export(ExportJob(corpus=two_step_corpus(tmp_path), model_id="use-v4",
                     pooling="cls", out=out, target="steps"))
    header, comments, rows = read_rows(out)
    assert header == "EMBX 1 512"
    assert "# pooling: ignored (sentence-level model)" in comments
    # and the pooling flag really has no effect on the payload
    out2 = str(tmp_path / "use2.embx")
    export(ExportJob(corpus=two_step_corpus(tmp_path), model_id="use-v4",
                     pooling="mean", out=out2, target="steps"))
    assert read_rows(out2)[2] == rows


def test_bad_pooling_and_target_rejected():
    with pytest.raises(JobError):
        ExportJob(corpus="c", model_id="m", pooling="max", out="o", target="steps")
    with pytest.raises(JobError):
        ExportJob(corpus="c", model_id="m", pooling="mean", out="o", target="cases")


def test_model_load_failure_leaves_no_file(tmp_path):
    out = str(tmp_path / "never.embx")
    job = ExportJob(corpus=two_step_corpus(tmp_path), model_id="unknown-model",
                    pooling="mean", out=out, target="steps")
    with pytest.raises(ModelLoadError):
        export(job)
    assert not os.path.exists(out)
    assert not os.path.exists(out + ".tmp")


class DriftingModel:
    """Returns a wrong-width vector on the second item."""

    ignores_pooling = False

    def __init__(self, dim=16):
        from embexport.models import ModelInfo

        self.info = ModelInfo("drifter", "wordpiece", dim, 4, "main")
        self.calls = 0

    def encode(self, text, pooling):
        self.calls += 1
        d = self.info.dim if self.calls == 1 else self.info.dim + 1
        return np.zeros(d)


def test_dim_drift_aborts_without_partial_file(tmp_path):
    out = str(tmp_path / "steps.embx")
    job = ExportJob(corpus=two_step_corpus(tmp_path), model_id="sbert-base",
                    pooling="mean", out=out, target="steps")
    with pytest.raises(DimDriftError):
        export(job, model=DriftingModel())
    assert not os.path.exists(out)
    assert not os.path.exists(out + ".tmp")


def test_failure_preserves_previous_output(tmp_path):
    out = str(tmp_path / "steps.embx")
    job = ExportJob(corpus=two_step_corpus(tmp_path), model_id="sbert-base",
                    pooling="mean", out=out, target="steps")
    export(job)
    with open(out, "rb") as fh:
        before = fh.read()
    with pytest.raises(DimDriftError):
        export(job, model=DriftingModel())
    with open(out, "rb") as fh:
        assert fh.read() == before


def test_rows_parse_back_to_written_floats(tmp_path):
    out = str(tmp_path / "steps.embx")
    export(ExportJob(corpus=two_step_corpus(tmp_path), model_id="all-MiniLM-L6-v2",
                     pooling="mean", out=out, target="steps"))
    _, _, rows = read_rows(out)
    m = load_model("all-MiniLM-L6-v2")
    want = m.encode("Open the front door", "mean")
    assert rows["TC1.1"] == [float(x) for x in want]


def test_corpus_validation():
    with pytest.raises(CorpusError):
        load_corpus("/nonexistent/corpus.jsonl")


def test_corpus_validation_bad_records(tmp_path):
    bad = [
        ("not json\n", "invalid JSON"),
        ('["list"]\n', "expected an object"),
        ('{"case_id": "", "name": "n", "steps": ["s"]}\n', "non-empty string"),
        ('{"case_id": "A B", "name": "n", "steps": ["s"]}\n', "whitespace"),
        ('{"case_id": "A", "name": 3, "steps": ["s"]}\n', "name must be a string"),
        ('{"case_id": "A", "name": "n", "steps": []}\n', "non-empty list"),
        ('{"case_id": "A", "name": "n", "steps": ["s", 4]}\n', "must be a string"),
        ('{"case_id": "A", "name": "n", "steps": ["s"]}\n'
         '{"case_id": "A", "name": "n", "steps": ["s"]}\n', "duplicate case_id"),
        ("", "no test cases"),
    ]
    for i, (content, needle) in enumerate(bad):
        p = tmp_path / f"bad{i}.jsonl"
        p.write_text(content)
        with pytest.raises(CorpusError, match=needle):
            load_corpus(str(p))
