"""Command-line pipeline: artifacts, caching, error codes, exit status."""

import csv
import json
import os
import shutil

import numpy as np
import pytest

from testsim import clustering
from testsim.cli import main
from testsim.embedding import WordEmbeddingTable, save_word2vec_binary

FIXTURE = "tests/data/fixture"
CORPUS = f"{FIXTURE}/corpus.jsonl"
MISSPELLINGS = f"{FIXTURE}/misspellings.csv"
GT_STEPS = f"{FIXTURE}/gt_steps.csv"
GT_CASES = f"{FIXTURE}/gt_cases.csv"
EXTERNAL = f"{FIXTURE}/external.embx"


def run(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    out = json.loads(captured.out) if rc == 0 and captured.out.strip() else None
    return rc, out, captured.err


@pytest.fixture(scope="module")
def base_ws(tmp_path_factory):
    """Fixture corpus ingested and embedded with tfidf (fast, no training)."""
    ws = str(tmp_path_factory.mktemp("base") / "ws")
    assert main(["--workspace", ws, "ingest", CORPUS, "--misspellings", MISSPELLINGS]) == 0
    assert main(["--workspace", ws, "embed", "--backend", "tfidf"]) == 0
    return ws


@pytest.fixture
def ws_copy(base_ws, tmp_path):
    dst = str(tmp_path / "ws")
    shutil.copytree(base_ws, dst)
    return dst


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


# -- ingest ---------------------------------------------------------------------


def test_ingest_stats_match_manifest(capsys, tmp_path):
    ws = str(tmp_path / "ws")
    rc, out, _ = run(capsys, "--workspace", ws, "ingest", CORPUS, "--misspellings", MISSPELLINGS)
    manifest = json.load(open(f"{FIXTURE}/manifest.json"))
    assert rc == 0
    assert out["cases"] == manifest["cases"] == 40
    assert out["steps"] == manifest["steps"] == 170
    assert out["cached"] is False
    assert out["vocab"] == manifest["vocab_with_names_and_types"]
    for name in ("steps.csv", "cases.csv", "sentences.txt"):
        assert os.path.exists(os.path.join(ws, name))


def test_reingest_unchanged_is_cache_hit(capsys, tmp_path):
    ws = str(tmp_path / "ws")
    run(capsys, "--workspace", ws, "ingest", CORPUS, "--misspellings", MISSPELLINGS)
    before = read_bytes(os.path.join(ws, "steps.csv"))
    rc, out, _ = run(capsys, "--workspace", ws, "ingest", CORPUS, "--misspellings", MISSPELLINGS)
    assert rc == 0 and out["cached"] is True
    assert read_bytes(os.path.join(ws, "steps.csv")) == before


def test_seed_override_invalidates_cache(capsys, tmp_path):
    ws = str(tmp_path / "ws")
    run(capsys, "--workspace", ws, "ingest", CORPUS)
    rc, out, _ = run(capsys, "--workspace", ws, "--seed", "7", "ingest", CORPUS)
    assert rc == 0 and out["cached"] is False


def test_ingest_empty_corpus_fails(capsys, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    rc, _, err = run(capsys, "--workspace", str(tmp_path / "ws"), "ingest", str(empty))
    assert rc == 1 and err.startswith("error[validation]")


def test_ingest_missing_file_is_io_error(capsys, tmp_path):
    rc, _, err = run(capsys, "--workspace", str(tmp_path / "ws"), "ingest", "no-such.jsonl")
    assert rc == 1 and err.startswith("error[")


def test_ingest_csv_format(capsys, tmp_path):
    rows = [["case_id", "name", "type", "step_ordinal", "step_text"]]
    for cid in ("A", "B"):
        rows.append([cid, f"{cid} name", "smoke", "1", "Open the door"])
        rows.append([cid, f"{cid} name", "smoke", "2", "Close the door"])
    path = tmp_path / "c.csv"
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    rc, out, _ = run(
        capsys, "--workspace", str(tmp_path / "ws"), "ingest", str(path), "--format", "csv"
    )
    assert rc == 0 and out["cases"] == 2 and out["steps"] == 4


# -- embed ----------------------------------------------------------------------


def test_embed_tfidf_dim_is_step_vocab(capsys, ws_copy):
    rc, out, _ = run(capsys, "--workspace", ws_copy, "embed", "--backend", "tfidf")
    with open(os.path.join(ws_copy, "steps.csv")) as fh:
        rows = list(csv.DictReader(fh))
    vocab = {t for r in rows for t in r["tokens"].split() if r["tokens"]}
    assert rc == 0 and out["dim"] == len(vocab)


def test_embed_external_round_trip(capsys, ws_copy):
    rc, out, _ = run(
        capsys, "--workspace", ws_copy, "embed", "--backend", "external",
        "--embeddings", EXTERNAL,
    )
    assert rc == 0 and out["dim"] == 4 and out["steps"] == 170
    assert os.path.exists(os.path.join(ws_copy, "steps.embx"))


def test_embed_external_requires_embeddings_flag(capsys, ws_copy):
    rc, _, err = run(capsys, "--workspace", ws_copy, "embed", "--backend", "external")
    assert rc == 1 and err.startswith("error[config]")


def test_embed_external_missing_ids_listed(capsys, ws_copy, tmp_path):
    partial = tmp_path / "partial.embx"
    with open(EXTERNAL) as fh:
        lines = fh.readlines()
    partial.write_text("".join(lines[:30]))  # header + comment + 28 vectors
    rc, _, err = run(
        capsys, "--workspace", ws_copy, "embed", "--backend", "external",
        "--embeddings", str(partial),
    )
    assert rc == 1 and err.startswith("error[lookup]")
    assert "TC07" in err  # the first uncovered steps appear in the message


def micro_corpus(tmp_path):
    recs = [
        {"case_id": "M1", "name": "open door", "type": "smoke",
         "steps": ["Open the front door", "Close the front door", "Open the door again"]},
        {"case_id": "M2", "name": "open gate", "type": "smoke",
         "steps": ["Open the front gate", "Close the front gate", "Open the gate again"]},
        {"case_id": "M3", "name": "ring bell", "type": "smoke",
         "steps": ["Ring the bell twice", "Wait for the bell echo", "Ring the bell again"]},
    ]
    path = tmp_path / "micro.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
    cfg = tmp_path / "micro.cfg"
    cfg.write_text("dim=8\nwindow=1\nepochs=4\n")
    return str(path), str(cfg)


def test_embed_word2vec_trains_and_saves(capsys, tmp_path):
    corpus, cfg = micro_corpus(tmp_path)
    ws = str(tmp_path / "ws")
    run(capsys, "--workspace", ws, "--config", cfg, "ingest", corpus)
    rc, out, _ = run(capsys, "--workspace", ws, "--config", cfg, "embed", "--backend", "word2vec")
    assert rc == 0 and out["dim"] == 8 and out["provenance"] == "trained"
    assert os.path.exists(os.path.join(ws, "words.w2v"))
    assert os.path.exists(os.path.join(ws, "steps.embx"))


def test_embed_word2vec_pretrained_init(capsys, tmp_path):
    corpus, cfg = micro_corpus(tmp_path)
    ws = str(tmp_path / "ws")
    run(capsys, "--workspace", ws, "--config", cfg, "ingest", corpus)

    rng = np.random.default_rng(3)
    table = WordEmbeddingTable(
        dim=8,
        words=("open", "door", "gate"),
        matrix=rng.normal(size=(3, 8)).astype(np.float32),
        provenance="pretrained",
    )
    pre = tmp_path / "pre.w2v"
    save_word2vec_binary(table, str(pre))

    rc, out, _ = run(
        capsys, "--workspace", ws, "--config", cfg, "embed", "--backend", "word2vec",
        "--pretrained", str(pre),
    )
    assert rc == 0 and out["provenance"] == "mixed"


def test_embed_cache_hit(capsys, ws_copy):
    rc, out, _ = run(capsys, "--workspace", ws_copy, "embed", "--backend", "tfidf")
    assert rc == 0 and out["cached"] is True


def test_embed_before_ingest_fails(capsys, tmp_path):
    ws = str(tmp_path / "ws")
    rc, _, err = run(capsys, "--workspace", ws, "embed", "--backend", "tfidf")
    assert rc == 1 and err.startswith("error[lookup]")
    assert "earlier pipeline stages" in err


# -- cluster-steps ----------------------------------------------------------------


def test_hac_with_fixed_k(capsys, ws_copy):
    rc, out, _ = run(
        capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "hac", "--k", "100"
    )
    assert rc == 0 and out["clusters"] == 100 and out["items"] == 170
    assert os.path.exists(os.path.join(ws_copy, "clusters.csv"))
    assert os.path.exists(os.path.join(ws_copy, "steps.dmat"))


def test_kmeans_with_fixed_k(capsys, ws_copy):
    rc, out, _ = run(
        capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "kmeans", "--k", "100"
    )
    assert rc == 0 and out["clusters"] == 100


def test_k_zero_rejected(capsys, ws_copy):
    rc, _, err = run(
        capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "hac", "--k", "0"
    )
    assert rc == 1 and err.startswith("error[validation]")


def test_k_and_sweep_mutually_exclusive(capsys, ws_copy):
    rc, _, err = run(
        capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "hac",
        "--k", "10", "--sweep", "--gt", GT_STEPS,
    )
    assert rc == 1 and err.startswith("error[config]")
    rc, _, err = run(capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "hac")
    assert rc == 1 and err.startswith("error[config]")


def test_sweep_requires_gt(capsys, ws_copy):
    rc, _, err = run(
        capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "hac", "--sweep"
    )
    assert rc == 1 and err.startswith("error[config]") and "--gt" in err


def test_hac_sweep_writes_curve(capsys, ws_copy):
    rc, out, _ = run(
        capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "hac",
        "--sweep", "--gt", GT_STEPS,
    )
    assert rc == 0
    with open(os.path.join(ws_copy, "ksweep.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["k"]) for r in rows] == [50, 100, 150]
    doc = json.load(open(os.path.join(ws_copy, "ksweep.json")))
    assert doc["best_k"] == out["best_k"]
    assert max(float(r["f_score"]) for r in rows) == doc["best_f"]


def test_baseline_exact_merges_duplicate_steps(capsys, ws_copy):
    rc, _, _ = run(
        capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "baseline-exact"
    )
    assert rc == 0
    c = clustering.load_clustering(os.path.join(ws_copy, "clusters.csv"))
    manifest = json.load(open(f"{FIXTURE}/manifest.json"))
    for group in manifest["exact_duplicate_step_groups"]:
        assert c.same_cluster(group[0], group[1])
    # the intended-empty step is a singleton
    empty_id = manifest["empty_token_steps"][0]
    assert sum(1 for i in c.ids if c.same_cluster(i, empty_id)) == 1


def test_baseline_wmd0_needs_wmd_metric(capsys, ws_copy):
    rc, _, err = run(
        capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "baseline-wmd0"
    )
    assert rc == 1 and err.startswith("error[config]")


def test_ensemble_needs_three_inputs(capsys, ws_copy):
    run(capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "hac", "--k", "100")
    one = os.path.join(ws_copy, "clusters.csv")
    rc, _, err = run(
        capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "ensemble",
        "--inputs", f"{one},{one}",
    )
    assert rc == 1 and err.startswith("error[config]")


def test_ensemble_majority_vote(capsys, ws_copy, tmp_path):
    paths = []
    for i, k in enumerate((90, 100, 110)):
        run(capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "hac", "--k", str(k))
        p = str(tmp_path / f"c{i}.csv")
        shutil.copy(os.path.join(ws_copy, "clusters.csv"), p)
        paths.append(p)
    rc, out, _ = run(
        capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "ensemble",
        "--inputs", ",".join(paths),
    )
    assert rc == 0 and out["quorum"] == 3 and out["items"] == 170
    # quorum 3 of 3 = pairs present in every input: HAC cuts of one merge
    # sequence are nested, so that intersection is the finest cut, k=110
    finest = clustering.load_clustering(paths[2])
    merged = clustering.load_clustering(os.path.join(ws_copy, "clusters.csv"))
    assert merged == finest


# -- similar-cases ----------------------------------------------------------------


@pytest.fixture
def clustered_ws(ws_copy, capsys):
    run(capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "hac", "--k", "100")
    return ws_copy


def test_default_threshold_comes_from_config(capsys, clustered_ws):
    rc, out, _ = run(
        capsys, "--workspace", clustered_ws, "similar-cases", "--technique", "overlap"
    )
    assert rc == 0 and out["threshold"] == 0.70
    rc, out, _ = run(
        capsys, "--workspace", clustered_ws, "similar-cases", "--technique", "jaccard"
    )
    assert rc == 0 and out["threshold"] == 0.60
    rc, out, _ = run(
        capsys, "--workspace", clustered_ws, "similar-cases", "--technique", "cosine"
    )
    assert rc == 0 and out["threshold"] == 0.85


def test_threshold_above_one_rejected(capsys, clustered_ws):
    rc, _, err = run(
        capsys, "--workspace", clustered_ws, "similar-cases", "--technique", "overlap",
        "--threshold", "1.1",
    )
    assert rc == 1 and err.startswith("error[validation]")


def test_combined_needs_word_vectors(capsys, clustered_ws):
    rc, _, err = run(
        capsys, "--workspace", clustered_ws, "similar-cases", "--technique", "combined"
    )
    assert rc == 1 and err.startswith("error[lookup]")


def test_threshold_sweep_writes_curve(capsys, clustered_ws):
    rc, out, _ = run(
        capsys, "--workspace", clustered_ws, "similar-cases", "--technique", "overlap",
        "--sweep", "--gt", GT_CASES,
    )
    assert rc == 0
    with open(os.path.join(clustered_ws, "tsweep.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 19  # 0.1 .. 1.0 by 0.05
    doc = json.load(open(os.path.join(clustered_ws, "tsweep.json")))
    assert doc["best_threshold"] == out["threshold"]


def test_report_regenerates_byte_identically(capsys, clustered_ws):
    argv = (
        "--workspace", clustered_ws, "similar-cases", "--technique", "jaccard",
        "--threshold", "0.5",
    )
    assert run(capsys, *argv)[0] == 0
    first = read_bytes(os.path.join(clustered_ws, "report.json"))
    assert run(capsys, *argv)[0] == 0
    assert read_bytes(os.path.join(clustered_ws, "report.json")) == first


def test_report_text_mentions_groups(capsys, clustered_ws):
    rc, out, _ = run(
        capsys, "--workspace", clustered_ws, "similar-cases", "--technique", "overlap",
        "--threshold", "0.9",
    )
    assert rc == 0
    with open(os.path.join(clustered_ws, "report.txt")) as fh:
        text = fh.read()
    assert "technique: overlap" in text and "threshold: 0.9" in text


# -- evaluate / plot ---------------------------------------------------------------


def test_evaluate_clustering_artifact(capsys, clustered_ws):
    rc, out, _ = run(
        capsys, "--workspace", clustered_ws, "evaluate",
        "--artifact", os.path.join(clustered_ws, "clusters.csv"), "--gt", GT_STEPS,
    )
    assert rc == 0
    assert set(out) == {"tp", "fp", "tn", "fn", "precision", "recall", "f_score"}
    n = 65  # labeled fixture steps
    assert out["tp"] + out["fp"] + out["tn"] + out["fn"] == n * (n - 1) // 2
    assert os.path.exists(os.path.join(clustered_ws, "eval.json"))


def test_evaluate_report_artifact(capsys, clustered_ws):
    run(
        capsys, "--workspace", clustered_ws, "similar-cases", "--technique", "overlap",
        "--threshold", "0.7",
    )
    rc, out, _ = run(
        capsys, "--workspace", clustered_ws, "evaluate",
        "--artifact", os.path.join(clustered_ws, "report.json"), "--gt", GT_CASES,
    )
    assert rc == 0 and out["tp"] + out["fp"] + out["tn"] + out["fn"] == 40 * 39 // 2


def test_plot_threshold_curve(capsys, clustered_ws):
    run(
        capsys, "--workspace", clustered_ws, "similar-cases", "--technique", "overlap",
        "--sweep", "--gt", GT_CASES,
    )
    rc, out, _ = run(capsys, "--workspace", clustered_ws, "plot", "--source", "threshold")
    assert rc == 0 and out["points"] == 19
    with open(os.path.join(clustered_ws, "plot.csv")) as fh:
        assert len(list(csv.DictReader(fh))) == 19
    doc = json.load(open(os.path.join(clustered_ws, "tsweep.json")))
    with open(os.path.join(clustered_ws, "plot.svg")) as fh:
        svg = fh.read()
    assert f"best threshold={doc['best_threshold']:g}" in svg
    assert "polyline" in svg and "NaN" not in svg


def test_plot_k_curve(capsys, ws_copy):
    run(
        capsys, "--workspace", ws_copy, "cluster-steps", "--algorithm", "hac",
        "--sweep", "--gt", GT_STEPS,
    )
    rc, out, _ = run(capsys, "--workspace", ws_copy, "plot", "--source", "k")
    assert rc == 0 and out["points"] == 3
    doc = json.load(open(os.path.join(ws_copy, "ksweep.json")))
    with open(os.path.join(ws_copy, "plot.svg")) as fh:
        assert f"best k={doc['best_k']:g}" in fh.read()


def test_plot_single_point_curve(capsys, tmp_path):
    ws = tmp_path / "ws"
    ws.mkdir()
    (ws / "tsweep.csv").write_text("threshold,f_score\n0.5,0.75\n")
    rc, out, _ = run(capsys, "--workspace", str(ws), "plot", "--source", "threshold")
    assert rc == 0 and out["points"] == 1
    with open(ws / "plot.svg") as fh:
        svg = fh.read()
    assert "best threshold=0.5" in svg and "NaN" not in svg


def test_plot_without_sweep_fails(capsys, ws_copy):
    rc, _, err = run(capsys, "--workspace", ws_copy, "plot", "--source", "k")
    assert rc == 1 and err.startswith("error[lookup]")


# -- global behavior ---------------------------------------------------------------


def test_locked_workspace_refuses(capsys, tmp_path):
    ws = tmp_path / "ws"
    ws.mkdir()
    (ws / ".lock").write_text("held")
    rc, _, err = run(capsys, "--workspace", str(ws), "ingest", CORPUS)
    assert rc == 1 and err.startswith("error[locked]")
    (ws / ".lock").unlink()
    rc, _, _ = run(capsys, "--workspace", str(ws), "ingest", CORPUS)
    assert rc == 0


def test_bad_config_file_reports_config_error(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus_key=1\n")
    rc, _, err = run(
        capsys, "--workspace", str(tmp_path / "ws"), "--config", str(cfg), "ingest", CORPUS
    )
    assert rc == 1 and err.startswith("error[config]")


def test_unknown_subcommand_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    capsys.readouterr()
