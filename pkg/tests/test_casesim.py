import numpy as np
import pytest

from testsim.casesim import (
    CaseSignature,
    case_baseline_same_name,
    case_baseline_same_steps,
    combined,
    cosine_counts,
    jaccard,
    name_similarity,
    overlap,
    report,
    report_to_json,
    report_to_text,
    score_all,
    signatures,
    sweep_threshold,
)
from testsim.clustering import Clustering
from testsim.corpus import TestStep
from testsim.embedding import WordEmbeddingTable
from testsim.errors import ConfigError, ItemLookupError, ValidationError
from testsim.evaluation import GroundTruth


def step(sid, tokens, raw=None):
    case, _, ordinal = sid.rpartition(".")
    return TestStep(
        step_id=sid,
        case_id=case,
        ordinal=int(ordinal),
        raw_text=" ".join(tokens) if raw is None else raw,
        tokens=tuple(tokens),
    )


def sig(case_id, counts, name_tokens=()):
    counts = np.asarray(counts, dtype=np.int64)
    return CaseSignature(
        case_id=case_id,
        cluster_ids=tuple(np.nonzero(counts)[0].tolist()),
        bool_vec=(counts >= 1).astype(np.int64),
        count_vec=counts,
        name_tokens=tuple(name_tokens),
    )


def two_case_corpus():
    """TC1's four steps land in clusters 0,1,2,0; TC2's five in 0,3,4,1,4."""
    steps = [
        step("TC1.1", ["launch", "game"]),
        step("TC1.2", ["open", "store"]),
        step("TC1.3", ["buy", "hat"]),
        step("TC1.4", ["launch", "game"]),
        step("TC2.1", ["launch", "game"]),
        step("TC2.2", ["equip", "hat"]),
        step("TC2.3", ["verify", "hat"]),
        step("TC2.4", ["open", "store"]),
        step("TC2.5", ["verify", "hat"]),
    ]
    clustering = Clustering(
        ids=tuple(s.step_id for s in steps),
        labels=np.array([0, 1, 2, 0, 0, 3, 4, 1, 4]),
    )
    return steps, clustering


def test_signature_running_example():
    steps, clustering = two_case_corpus()
    tc1, tc2 = signatures(steps, clustering)
    assert tc1.case_id == "TC1" and tc2.case_id == "TC2"
    assert tc1.cluster_ids == (0, 1, 2)
    assert tc1.bool_vec.tolist() == [1, 1, 1, 0, 0]
    assert tc1.count_vec.tolist() == [2, 1, 1, 0, 0]
    assert tc2.cluster_ids == (0, 1, 3, 4)
    assert tc2.bool_vec.tolist() == [1, 1, 0, 1, 1]
    assert tc2.count_vec.tolist() == [1, 1, 0, 1, 2]
    assert int(tc1.count_vec.sum()) == 4 and int(tc2.count_vec.sum()) == 5


def test_signature_single_step_case():
    steps = [step("only.1", ["hi"])]
    clustering = Clustering(ids=("only.1",), labels=np.array([0]))
    (s,) = signatures(steps, clustering)
    assert s.count_vec.tolist() == [1]
    assert s.cluster_ids == (0,)


def test_signature_requires_assignment():
    steps, clustering = two_case_corpus()
    steps.append(step("TC3.1", ["stray"]))
    with pytest.raises(ItemLookupError) as exc:
        signatures(steps, clustering)
    assert exc.value.missing == ["TC3.1"]


def test_signature_validation():
    with pytest.raises(ValidationError):
        CaseSignature(
            case_id="x",
            cluster_ids=(0,),
            bool_vec=np.array([1, 1]),
            count_vec=np.array([1, 0]),
        )
    with pytest.raises(ValidationError):
        CaseSignature(
            case_id="x",
            cluster_ids=(0, 1),
            bool_vec=np.array([1, 0]),
            count_vec=np.array([1, 0]),
        )


def test_overlap_running_example():
    steps, clustering = two_case_corpus()
    tc1, tc2 = signatures(steps, clustering)
    assert overlap(tc1, tc2) == 2 / max(3, 4) == 0.5
    assert overlap(tc1, tc1) == 1.0
    assert overlap(sig("a", [1, 0]), sig("b", [0, 1])) == 0.0


def test_jaccard_running_example():
    steps, clustering = two_case_corpus()
    tc1, tc2 = signatures(steps, clustering)
    assert abs(jaccard(tc1, tc2) - 0.4) <= 1e-12  # 2 shared of 5 total clusters
    assert jaccard(tc1, tc1) == 1.0
    assert jaccard(sig("a", [1, 0]), sig("b", [0, 1])) == 0.0


def test_cosine_counts_running_example():
    steps, clustering = two_case_corpus()
    tc1, tc2 = signatures(steps, clustering)
    want = 3 / np.sqrt(42)  # dot [2,1,1,0,0].[1,1,0,1,2]=3, norms sqrt(6)*sqrt(7)
    assert abs(cosine_counts(tc1, tc2) - want) <= 1e-9
    assert abs(cosine_counts(tc1, tc1) - 1.0) <= 1e-12
    assert cosine_counts(sig("a", [2, 0]), sig("b", [0, 3])) == 0.0


def test_jaccard_never_exceeds_overlap():
    rng = np.random.default_rng(51)
    for _ in range(200):
        a = sig("a", rng.integers(0, 3, size=6))
        b = sig("b", rng.integers(0, 3, size=6))
        if not a.cluster_ids or not b.cluster_ids:
            continue
        assert jaccard(a, b) <= overlap(a, b) + 1e-12


def test_scores_ignore_step_order():
    steps, clustering = two_case_corpus()
    tc1, tc2 = signatures(steps, clustering)
    shuffled = [steps[3], steps[1], steps[0], steps[2], steps[8], steps[5], steps[4], steps[7], steps[6]]
    ts1, ts2 = signatures(shuffled, clustering)
    for fn in (overlap, jaccard, cosine_counts):
        assert fn(tc1, tc2) == fn(ts1, ts2)


def name_table():
    words = ("equip", "hat", "wand", "catch", "firefly")
    rng = np.random.default_rng(52)
    mat = rng.normal(size=(5, 3)).astype(np.float32)
    return WordEmbeddingTable(dim=3, words=words, matrix=mat, provenance="trained")


def test_name_similarity_closed_forms():
    table = name_table()
    a = sig("a", [1], name_tokens=("equip", "hat"))
    b = sig("b", [1], name_tokens=("equip", "hat"))
    assert name_similarity(a, b, table) == 1.0

    c = sig("c", [1], name_tokens=("hat",))
    d = sig("d", [1], name_tokens=("wand",))
    dist = float(
        np.linalg.norm(
            table.vector("hat").astype(np.float64) - table.vector("wand").astype(np.float64)
        )
    )
    assert abs(name_similarity(c, d, table) - 1 / (1 + dist)) <= 1e-12


def test_name_similarity_empty_rules():
    table = name_table()
    e1 = sig("e1", [1], name_tokens=())
    e2 = sig("e2", [1], name_tokens=())
    named = sig("n", [1], name_tokens=("hat",))
    assert name_similarity(e1, e2, table) == 1.0
    assert name_similarity(e1, named, table) == 0.0


def test_combined_weights():
    table = name_table()
    a = sig("a", [2, 1, 0], name_tokens=("equip", "hat"))
    b = sig("b", [1, 1, 1], name_tokens=("equip", "wand"))
    cc = cosine_counts(a, b)
    ns = name_similarity(a, b, table)
    assert combined(a, b, table, w_name=0.0) == cc
    assert combined(a, b, table, w_name=1.0) == ns
    got = combined(a, b, table, w_name=0.5)
    assert abs(got - (0.5 * cc + 0.5 * ns)) <= 1e-12
    assert combined(a, a, table, w_name=0.5) == 1.0
    with pytest.raises(ConfigError):
        combined(a, b, table, w_name=1.5)


def test_combined_monotone_in_components():
    # raising either component score never lowers the combination
    table = name_table()
    base = sig("a", [1, 1, 0], name_tokens=("hat",))
    closer_counts = sig("b", [1, 1, 0], name_tokens=("wand",))
    farther_counts = sig("c", [0, 0, 1], name_tokens=("wand",))
    assert combined(base, closer_counts, table) >= combined(base, farther_counts, table)


def test_score_all_requires_words_for_combined():
    steps, clustering = two_case_corpus()
    sigs = signatures(steps, clustering)
    with pytest.raises(ConfigError):
        score_all(sigs, "combined")
    with pytest.raises(ConfigError):
        score_all(sigs, "euclid")


def test_sweep_threshold_grid_and_tie_break():
    sigs = [
        sig("a", [1, 1, 0, 0]),
        sig("b", [1, 1, 0, 0]),  # identical to a
        sig("c", [1, 0, 1, 0]),  # overlaps a by half
        sig("d", [0, 0, 0, 1]),
    ]
    gt = GroundTruth(assignment={"a": "g1", "b": "g1", "c": "g2", "d": "g3"})
    sweep = sweep_threshold(sigs, "overlap", gt)
    ts = [t for t, _ in sweep.evaluated]
    assert ts[0] == 0.1 and ts[-1] == 1.0 and len(ts) == 19
    # only the identical pair is similar in gt, so precision demands t > 0.5;
    # every such t scores f=1 and the tie resolves to the largest, 1.0
    assert sweep.best_f == 1.0
    assert sweep.best_threshold == 1.0


def test_sweep_threshold_matches_exhaustive_grid():
    rng = np.random.default_rng(53)
    sigs = [sig(f"c{i}", rng.integers(0, 3, size=5)) for i in range(8)]
    for s in sigs:
        if not s.cluster_ids:
            return  # regenerate-free guard; seed 53 gives non-empty signatures
    gt = GroundTruth(assignment={f"c{i}": str(rng.integers(0, 3)) for i in range(8)})
    sweep = sweep_threshold(sigs, "jaccard", gt)

    from testsim.evaluation import confusion, f_score

    scores = score_all(sigs, "jaccard")
    best_t, best_f = None, -1.0
    curve = []
    for i in range(19):
        t = round(0.1 + 0.05 * i, 10)
        same = lambda a, b, t=t: scores[(a, b) if (a, b) in scores else (b, a)] >= t
        f = f_score(confusion(same, gt))
        curve.append((t, f))
        if f >= best_f:
            best_t, best_f = t, f
    assert list(sweep.evaluated) == curve
    assert (sweep.best_threshold, sweep.best_f) == (best_t, best_f)


def test_sweep_threshold_input_validation():
    sigs = [sig("a", [1]), sig("b", [1])]
    with pytest.raises(ValidationError):
        sweep_threshold(sigs, "overlap", GroundTruth(assignment={}))
    with pytest.raises(ItemLookupError):
        sweep_threshold(sigs, "overlap", GroundTruth(assignment={"zz": "g"}))
    with pytest.raises(ValidationError):
        sweep_threshold(sigs, "overlap", GroundTruth(assignment={"a": "g"}), t_min=0.0)


def test_report_trivial_cases():
    distinct = [sig("a", [1, 0]), sig("b", [0, 1])]
    rep = report(distinct, "overlap", 1.0)
    assert rep.pairs == () and rep.groups == ()
    assert rep.stats == {
        "cases_with_match_fraction": 0.0,
        "group_count": 0,
        "group_size_mean": 0.0,
        "group_size_std": 0.0,
    }

    twins = [sig("a", [1, 1]), sig("b", [1, 1])]
    rep = report(twins, "overlap", 1.0)
    assert rep.pairs == (("a", "b", 1.0),)
    assert rep.groups == (("a", "b"),)
    assert rep.stats["cases_with_match_fraction"] == 1.0
    assert rep.stats["group_count"] == 1
    assert rep.stats["group_size_mean"] == 2.0
    assert rep.stats["group_size_std"] == 0.0


def test_report_groups_are_components():
    sigs = [
        sig("a", [1, 1, 0, 0]),
        sig("b", [1, 1, 1, 0]),  # chains a-b and b-c above 0.6
        sig("c", [0, 1, 1, 0]),
        sig("d", [0, 0, 0, 1]),
    ]
    rep = report(sigs, "jaccard", 0.6)
    flagged = {c for a, b, _ in rep.pairs for c in (a, b)}
    assert set(sum((list(g) for g in rep.groups), [])) == flagged
    assert ("a", "b") in {(p[0], p[1]) for p in rep.pairs}
    assert any({"a", "b", "c"} <= set(g) for g in rep.groups)
    assert all("d" not in g for g in rep.groups)


def test_report_threshold_validation():
    with pytest.raises(ValidationError):
        report([sig("a", [1])], "overlap", 0.0)
    with pytest.raises(ValidationError):
        report([sig("a", [1])], "overlap", 1.2)


def test_report_json_shape():
    twins = [sig("a", [1, 1]), sig("b", [1, 1])]
    rep = report(twins, "overlap", 0.75)
    doc = report_to_json(rep)
    assert doc["technique"] == "overlap"
    assert doc["threshold"] == 0.75
    assert doc["pairs"] == [{"a": "a", "b": "b", "score": 1.0}]
    assert doc["groups"] == [["a", "b"]]
    assert set(doc["stats"]) == {
        "cases_with_match_fraction",
        "group_count",
        "group_size_mean",
        "group_size_std",
    }


def test_report_text_lists_groups():
    twins = [sig("a", [1, 1]), sig("b", [1, 1])]
    rep = report(twins, "overlap", 0.75)
    text = report_to_text(
        rep,
        names={"a": "Equip Hat", "b": "Equip Hat Again"},
        steps_by_case={"a": [step("a.1", ["equip", "hat"])]},
    )
    assert "group 1 (2 cases)" in text
    assert "Equip Hat" in text
    assert "1. equip hat" in text
    empty = report_to_text(report([sig("x", [1])], "overlap", 1.0))
    assert "no groups" in empty


def test_case_baseline_same_steps():
    steps = [
        step("a.1", ["equip", "hat"]),
        step("a.2", ["verify", "hat"]),
        step("b.1", ["equip", "hat"]),
        step("b.2", ["verify", "hat"]),
        step("c.1", ["verify", "hat"]),  # permuted order of a's steps
        step("c.2", ["equip", "hat"]),
        step("d.1", ["equip", "hat"]),
        step("d.2", ["verify", "wand"]),  # one token differs
    ]
    assert case_baseline_same_steps(steps) == [("a", "b")]


def test_case_baseline_same_name():
    names = {
        "a": "Equip  Hat",
        "b": "equip hat",
        "c": " EQUIP\tHAT ",
        "d": "Equip Wand",
    }
    pairs = case_baseline_same_name(names)
    assert pairs == [("a", "b"), ("a", "c"), ("b", "c")]
