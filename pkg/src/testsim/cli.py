"""Command-line pipeline: ingest -> embed -> cluster-steps -> similar-cases,
plus evaluate and plot.  Artifacts live in a workspace directory and carry
the config hash they were built under; stale artifacts are rebuilt.

Exit code 0 means success; every failure prints `error[<code>]: <message>`
on stderr and exits non-zero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace

import numpy as np

from . import casesim, clustering, corpus, embedding, evaluation, similarity
from .config import Config, config_hash, load_config
from .errors import ConfigError, ItemLookupError, TestsimError, ValidationError
from .workspace import Workspace, file_hash

STEPS_CSV = "steps.csv"
CASES_CSV = "cases.csv"
SENTENCES_TXT = "sentences.txt"
WORDS_W2V = "words.w2v"
STEPS_EMBX = "steps.embx"
EMBED_JSON = "embed.json"
STEPS_DMAT = "steps.dmat"
CLUSTERS_CSV = "clusters.csv"
KSWEEP_CSV = "ksweep.csv"
KSWEEP_JSON = "ksweep.json"
TSWEEP_CSV = "tsweep.csv"
TSWEEP_JSON = "tsweep.json"
REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"
EVAL_JSON = "eval.json"
PLOT_CSV = "plot.csv"
PLOT_SVG = "plot.svg"

TECHNIQUE_BY_FLAG = {
    "overlap": "overlap",
    "jaccard": "jaccard",
    "cosine": "cosine_counts",
    "combined": "combined",
}


# -- persisted corpus views --------------------------------------------------


def _steps_to_csv(steps) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step_id", "case_id", "ordinal", "raw_text", "tokens"])
    for s in steps:
        writer.writerow([s.step_id, s.case_id, s.ordinal, s.raw_text, " ".join(s.tokens)])
    return buf.getvalue()


def load_steps(ws: Workspace) -> list:
    with open(ws.path(STEPS_CSV), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return [
        corpus.TestStep(
            step_id=sid,
            case_id=cid,
            ordinal=int(ordinal),
            raw_text=raw,
            tokens=tuple(tokens.split(" ")) if tokens else (),
        )
        for sid, cid, ordinal, raw, tokens in rows[1:]
    ]


def _cases_to_csv(cases, name_tokens) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["case_id", "name", "type", "name_tokens"])
    for c in cases:
        writer.writerow([c.case_id, c.name, c.case_type or "", " ".join(name_tokens[c.case_id])])
    return buf.getvalue()


def load_cases(ws: Workspace) -> tuple:
    """(names, name_tokens) keyed by case_id, in corpus order."""
    with open(ws.path(CASES_CSV), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names, name_tokens = {}, {}
    for cid, name, _ctype, toks in rows[1:]:
        names[cid] = name
        name_tokens[cid] = tuple(toks.split(" ")) if toks else ()
    return names, name_tokens


# -- commands ----------------------------------------------------------------


def cmd_ingest(ws: Workspace, cfg: Config, args) -> dict:
    pre = corpus.PreprocessConfig(
        misspelling_map=corpus.load_misspellings(args.misspellings) if args.misspellings else (),
        prune_singletons=cfg.prune_singletons,
    )
    key = {
        "config": config_hash(cfg),
        "corpus": file_hash(args.corpus),
        "format": args.format,
        "misspellings": file_hash(args.misspellings) if args.misspellings else "",
    }
    cached = all(ws.is_fresh(n, key) for n in (STEPS_CSV, CASES_CSV, SENTENCES_TXT))
    if not cached:
        cases = corpus.load_corpus(args.corpus, args.format)
        if not cases:
            raise ValidationError(f"{args.corpus}: corpus has no test cases")
        steps = corpus.preprocess(cases, pre)
        sentences = corpus.training_sentences(steps, cases, pre)
        name_tokens = {c.case_id: corpus.preprocess_text(c.name, pre) for c in cases}
        ws.write_text(STEPS_CSV, _steps_to_csv(steps))
        ws.write_text(CASES_CSV, _cases_to_csv(cases, name_tokens))
        ws.write_text(SENTENCES_TXT, "\n".join(" ".join(s) for s in sentences) + "\n")
        for name in (STEPS_CSV, CASES_CSV, SENTENCES_TXT):
            ws.record(name, key)
    steps = load_steps(ws)
    names, _ = load_cases(ws)
    sentences = _load_sentences(ws)
    vocab = {w for s in sentences for w in s}
    return {
        "cached": cached,
        "cases": len(names),
        "steps": len(steps),
        "vocab": len(vocab),
    }


def _load_sentences(ws: Workspace) -> list:
    text = ws.path(SENTENCES_TXT).read_text(encoding="utf-8")
    return [line.split(" ") for line in text.splitlines() if line]


def cmd_embed(ws: Workspace, cfg: Config, args) -> dict:
    ws.require(STEPS_CSV, SENTENCES_TXT)
    steps = load_steps(ws)
    key = {
        "config": config_hash(cfg),
        "backend": args.backend,
        "steps": file_hash(ws.path(STEPS_CSV)),
        "sentences": file_hash(ws.path(SENTENCES_TXT)),
        "pretrained": file_hash(args.pretrained) if args.pretrained else "",
        "embeddings": file_hash(args.embeddings) if args.embeddings else "",
    }
    artifacts = [STEPS_EMBX, EMBED_JSON] + ([WORDS_W2V] if args.backend == "word2vec" else [])
    cached = all(ws.is_fresh(n, key) for n in artifacts)
    if not cached:
        if args.backend == "tfidf":
            table = embedding.fit_tfidf(steps)
            info = {"backend": "tfidf", "dim": table.dim, "steps": len(table.ids)}
        elif args.backend == "word2vec":
            sentences = _load_sentences(ws)
            ccfg = embedding.CbowConfig(
                dim=cfg.dim,
                window=cfg.window,
                negative_samples=cfg.negative_samples,
                epochs=cfg.epochs,
                initial_learning_rate=cfg.learning_rate,
                min_count=cfg.min_count,
                seed=cfg.seed,
            )
            init = None
            if args.pretrained:
                pretrained = embedding.load_word2vec_binary(args.pretrained)
                vocab = sorted({w for s in sentences for w in s})
                init = embedding.init_with_pretrained(vocab, pretrained, seed=cfg.seed)
            words = embedding.train_cbow(sentences, ccfg, init=init)
            embedding.save_word2vec_binary(words, str(ws.path(WORDS_W2V)))
            pooled = np.stack([embedding.pool_mean(s, words) for s in steps]) if steps else np.zeros((0, words.dim))
            table = embedding.StepEmbeddingTable(
                dim=words.dim,
                ids=tuple(s.step_id for s in steps),
                matrix=pooled,
                backend_tag="word2vec",
            )
            info = {
                "backend": "word2vec",
                "dim": words.dim,
                "words": len(words),
                "steps": len(table.ids),
                "provenance": words.provenance,
            }
        elif args.backend == "external":
            if not args.embeddings:
                raise ConfigError("backend external requires --embeddings <file.embx>")
            table = embedding.load_step_embeddings(args.embeddings, backend_tag="external")
            missing = table.covers([s.step_id for s in steps])
            if missing:
                raise ItemLookupError(
                    f"external embeddings miss {len(missing)} step ids: "
                    + ", ".join(missing[:10]) + ("..." if len(missing) > 10 else ""),
                    missing,
                )
            info = {"backend": "external", "dim": table.dim, "steps": len(table.ids)}
        else:
            raise ConfigError(f"unknown embedding backend {args.backend!r}")
        embedding.save_step_embeddings(table, str(ws.path(STEPS_EMBX)))
        ws.write_text(EMBED_JSON, json.dumps(info, indent=2, sort_keys=True) + "\n")
        for name in artifacts:
            ws.record(name, key)
    info = json.loads(ws.path(EMBED_JSON).read_text(encoding="utf-8"))
    info["cached"] = cached
    return info


def _embed_info(ws: Workspace) -> dict:
    ws.require(EMBED_JSON, STEPS_EMBX)
    return json.loads(ws.path(EMBED_JSON).read_text(encoding="utf-8"))


def _resolve_metric(cfg: Config, backend: str) -> str:
    if cfg.metric == "auto":
        return "wmd" if backend == "word2vec" else "cosine"
    return cfg.metric


def _distance_matrix(ws: Workspace, cfg: Config, steps, metric: str):
    """Build (or reuse) the pairwise step distance matrix artifact."""
    if metric == "wmd":
        ws.require(WORDS_W2V)
        emb_hash = file_hash(ws.path(WORDS_W2V))
    else:
        ws.require(STEPS_EMBX)
        emb_hash = file_hash(ws.path(STEPS_EMBX))
    key = {
        "config": config_hash(cfg),
        "metric": metric,
        "steps": file_hash(ws.path(STEPS_CSV)),
        "embedding": emb_hash,
    }
    if not ws.is_fresh(STEPS_DMAT, key):
        if metric == "wmd":
            words = embedding.load_word2vec_binary(str(ws.path(WORDS_W2V)))
            dm = similarity.build_distance_matrix(steps, "wmd", words=words, cap=cfg.matrix_cap)
        else:
            table = embedding.load_step_embeddings(str(ws.path(STEPS_EMBX)))
            dm = similarity.build_distance_matrix(
                steps, "cosine_distance", vectors=table, cap=cfg.matrix_cap
            )
        similarity.save_dmat(dm, str(ws.path(STEPS_DMAT)))
        ws.record(STEPS_DMAT, key)
    return similarity.load_dmat(str(ws.path(STEPS_DMAT)))


def _sweep_to_csv(evaluated, x_name: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([x_name, "f_score"])
    for x, f in evaluated:
        writer.writerow([x, repr(float(f))])
    return buf.getvalue()


def cmd_cluster_steps(ws: Workspace, cfg: Config, args) -> dict:
    ws.require(STEPS_CSV)
    steps = load_steps(ws)
    algorithm = args.algorithm

    if algorithm == "ensemble":
        paths = [p for p in (args.inputs or "").split(",") if p]
        if len(paths) < 3:
            raise ConfigError("--algorithm ensemble needs --inputs with at least 3 clustering CSVs")
        inputs = [clustering.load_clustering(p) for p in paths]
        result = clustering.ensemble_majority(inputs, quorum=cfg.quorum)
        out = {"algorithm": algorithm, "quorum": cfg.quorum}
    elif algorithm == "baseline-exact":
        result = clustering.baseline_exact(steps)
        out = {"algorithm": algorithm}
    elif algorithm == "baseline-wmd0":
        metric = _resolve_metric(cfg, _embed_info(ws)["backend"])
        if metric != "wmd":
            raise ConfigError(
                "baseline-wmd0 needs a wmd distance matrix; embed with the word2vec backend "
                "or set metric=wmd"
            )
        dm = _distance_matrix(ws, cfg, steps, "wmd")
        result = clustering.baseline_wmd_zero(dm)
        out = {"algorithm": algorithm}
    elif algorithm in ("hac", "kmeans"):
        if args.sweep == (args.k is not None):
            raise ConfigError(f"--algorithm {algorithm} needs exactly one of --k or --sweep")
        metric = _resolve_metric(cfg, _embed_info(ws)["backend"])
        dm = _distance_matrix(ws, cfg, steps, metric)

        if algorithm == "hac":
            builder = lambda k: clustering.hac_average(dm, k)  # noqa: E731
        else:
            table = embedding.load_step_embeddings(str(ws.path(STEPS_EMBX)))

            def builder(k):
                seeds = clustering.centroids(clustering.hac_average(dm, k), table)
                return clustering.kmeans(table, k, seeds)

        if args.sweep:
            if not args.gt:
                raise ConfigError("--sweep needs --gt <ground truth csv>")
            gt = evaluation.load_ground_truth(args.gt)
            sweep = clustering.sweep_k(
                builder, gt, n_items=len(steps), k_min=cfg.k_min, k_max=cfg.k_max, step=cfg.k_step
            )
            ws.write_text(KSWEEP_CSV, _sweep_to_csv(sweep.evaluated, "k"))
            ws.write_text(
                KSWEEP_JSON,
                json.dumps({"best_f": sweep.best_f, "best_k": sweep.best_k}, indent=2, sort_keys=True) + "\n",
            )
            result = builder(sweep.best_k)
            out = {"algorithm": algorithm, "best_k": sweep.best_k, "best_f": sweep.best_f}
        else:
            result = builder(args.k)
            out = {"algorithm": algorithm}
    else:
        raise ConfigError(f"unknown clustering algorithm {algorithm!r}")

    clustering.save_clustering(result, str(ws.path(CLUSTERS_CSV)))
    out.update({"items": len(result.ids), "clusters": result.k})
    return out


def cmd_similar_cases(ws: Workspace, cfg: Config, args) -> dict:
    ws.require(STEPS_CSV, CASES_CSV, CLUSTERS_CSV)
    steps = load_steps(ws)
    names, name_tokens = load_cases(ws)
    clusters = clustering.load_clustering(str(ws.path(CLUSTERS_CSV)))
    technique = TECHNIQUE_BY_FLAG[args.technique]

    words = None
    if technique == "combined":
        ws.require(WORDS_W2V)
        words = embedding.load_word2vec_binary(str(ws.path(WORDS_W2V)))
    sigs = casesim.signatures(steps, clusters, name_tokens=name_tokens)

    if args.sweep:
        if not args.gt:
            raise ConfigError("--sweep needs --gt <ground truth csv>")
        gt = evaluation.load_ground_truth(args.gt)
        sweep = casesim.sweep_threshold(
            sigs, technique, gt, words=words, w_name=cfg.w_name,
            t_min=cfg.t_min, t_max=cfg.t_max, step=cfg.t_step,
        )
        ws.write_text(TSWEEP_CSV, _sweep_to_csv(sweep.evaluated, "threshold"))
        ws.write_text(
            TSWEEP_JSON,
            json.dumps(
                {"best_f": sweep.best_f, "best_threshold": sweep.best_threshold},
                indent=2, sort_keys=True,
            ) + "\n",
        )
        threshold = sweep.best_threshold
    elif args.threshold is not None:
        threshold = args.threshold
    else:
        threshold = cfg.threshold_for(args.technique)

    rep = casesim.report(sigs, technique, threshold, words=words, w_name=cfg.w_name)
    ws.write_text(REPORT_JSON, json.dumps(casesim.report_to_json(rep), indent=2, sort_keys=True) + "\n")
    steps_by_case = {}
    for s in steps:
        steps_by_case.setdefault(s.case_id, []).append(s)
    ws.write_text(REPORT_TXT, casesim.report_to_text(rep, names=names, steps_by_case=steps_by_case))
    out = {"technique": args.technique, "threshold": threshold, "pairs": len(rep.pairs)}
    out.update(rep.stats)
    return out


def cmd_evaluate(ws: Workspace, cfg: Config, args) -> dict:
    gt = evaluation.load_ground_truth(args.gt)
    if args.artifact.endswith(".json"):
        with open(args.artifact, encoding="utf-8") as fh:
            doc = json.load(fh)
        flagged = {frozenset((p["a"], p["b"])) for p in doc.get("pairs", [])}
        predicted = lambda a, b: frozenset((a, b)) in flagged  # noqa: E731
    else:
        predicted = clustering.load_clustering(args.artifact)
    conf = evaluation.confusion(predicted, gt)
    out = evaluation.summary(conf)
    ws.write_text(EVAL_JSON, json.dumps(out, indent=2, sort_keys=True) + "\n")
    return out


def _read_curve(path) -> tuple:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    xs = [float(x) for x, _ in rows[1:]]
    fs = [float(f) for _, f in rows[1:]]
    return rows[0][0], xs, fs


def _svg_chart(x_name: str, xs, fs, prefer_large_x: bool) -> str:
    width, height = 640, 400
    left, right, top, bottom = 70, 20, 20, 50
    span = max(xs) - min(xs)

    def sx(x):
        if span == 0:
            return (left + width - right) / 2
        return left + (x - min(xs)) / span * (width - left - right)

    def sy(f):
        return top + (1.0 - f) * (height - top - bottom)

    # mark the same point the sweep reported: ties fall to the largest
    # threshold but to the smallest k
    best = max(range(len(xs)), key=lambda i: (fs[i], xs[i] if prefer_large_x else -xs[i]))
    pts = " ".join(f"{sx(x):.2f},{sy(f):.2f}" for x, f in zip(xs, fs))
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{sy(0.0):.2f}" x2="{width - right}" y2="{sy(0.0):.2f}" stroke="black"/>',
        f'<line x1="{left}" y1="{sy(0.0):.2f}" x2="{left}" y2="{sy(1.0):.2f}" stroke="black"/>',
        f'<text x="{left - 10}" y="{sy(0.0):.2f}" text-anchor="end" font-size="12">0.0</text>',
        f'<text x="{left - 10}" y="{sy(1.0) + 12:.2f}" text-anchor="end" font-size="12">1.0</text>',
        f'<text x="{left - 10}" y="{(sy(0.0) + sy(1.0)) / 2:.2f}" text-anchor="end" font-size="12">F</text>',
        f'<text x="{sx(min(xs)):.2f}" y="{height - bottom + 20}" text-anchor="middle" font-size="12">{min(xs):g}</text>',
        f'<text x="{sx(max(xs)):.2f}" y="{height - bottom + 20}" text-anchor="middle" font-size="12">{max(xs):g}</text>',
        f'<text x="{(left + width - right) / 2:.2f}" y="{height - 10}" text-anchor="middle" font-size="13">{x_name}</text>',
        f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>',
    ]
    for x, f in zip(xs, fs):
        lines.append(f'<circle cx="{sx(x):.2f}" cy="{sy(f):.2f}" r="3" fill="steelblue"/>')
    bx, bf = xs[best], fs[best]
    lines.append(f'<circle cx="{sx(bx):.2f}" cy="{sy(bf):.2f}" r="6" fill="none" stroke="crimson" stroke-width="2"/>')
    lines.append(
        f'<text x="{sx(bx):.2f}" y="{sy(bf) - 12:.2f}" text-anchor="middle" font-size="12" '
        f'fill="crimson">best {x_name}={bx:g} F={bf:.4f}</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def cmd_plot(ws: Workspace, cfg: Config, args) -> dict:
    source = KSWEEP_CSV if args.source == "k" else TSWEEP_CSV
    ws.require(source)
    x_name, xs, fs = _read_curve(ws.path(source))
    if not xs:
        raise ValidationError(f"{source}: sweep curve has no points")
    ws.write_text(PLOT_CSV, _sweep_to_csv(tuple(zip(xs, fs)), x_name))
    ws.write_text(PLOT_SVG, _svg_chart(x_name, xs, fs, prefer_large_x=args.source == "threshold"))
    return {"points": len(xs), "csv": PLOT_CSV, "svg": PLOT_SVG}


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="testsim",
        description="Find semantically similar test steps and test cases.",
    )
    p.add_argument("--workspace", default="testsim-workspace", help="artifact directory")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None, help="override the config thread count")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="validate and preprocess a corpus")
    sp.add_argument("corpus", help="corpus file")
    sp.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    sp.add_argument("--misspellings", default=None, help="wrong,right CSV applied before stopwords")

    sp = sub.add_parser("embed", help="build or load the embedding table")
    sp.add_argument("--backend", choices=("tfidf", "word2vec", "external"), required=True)
    sp.add_argument("--pretrained", default=None, help="word2vec binary to initialize from")
    sp.add_argument("--embeddings", default=None, help="step embedding exchange file (external)")

    sp = sub.add_parser("cluster-steps", help="cluster the preprocessed steps")
    sp.add_argument(
        "--algorithm",
        choices=("hac", "kmeans", "ensemble", "baseline-exact", "baseline-wmd0"),
        required=True,
    )
    sp.add_argument("--k", type=int, default=None, help="target cluster count")
    sp.add_argument("--sweep", action="store_true", help="sweep k against --gt")
    sp.add_argument("--gt", default=None, help="step ground truth CSV")
    sp.add_argument("--inputs", default=None, help="comma-separated clustering CSVs (ensemble)")

    sp = sub.add_parser("similar-cases", help="score and group similar test cases")
    sp.add_argument("--technique", choices=tuple(TECHNIQUE_BY_FLAG), required=True)
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--sweep", action="store_true", help="sweep thresholds against --gt")
    sp.add_argument("--gt", default=None, help="case ground truth CSV")

    sp = sub.add_parser("evaluate", help="pairwise F-score of an artifact against a ground truth")
    sp.add_argument("--artifact", required=True, help="clustering CSV or report JSON")
    sp.add_argument("--gt", required=True)

    sp = sub.add_parser("plot", help="curve CSV + SVG chart from the last sweep")
    sp.add_argument("--source", choices=("k", "threshold"), required=True)
    return p


COMMANDS = {
    "ingest": cmd_ingest,
    "embed": cmd_embed,
    "cluster-steps": cmd_cluster_steps,
    "similar-cases": cmd_similar_cases,
    "evaluate": cmd_evaluate,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else Config()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if overrides:
            cfg = replace(cfg, **overrides)
        ws = Workspace(args.workspace)
        with ws.lock():
            out = COMMANDS[args.command](ws, cfg, args)
        print(json.dumps(out, sort_keys=True))
        return 0
    except TestsimError as err:
        print(f"error[{err.code}]: {err.message}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error[io]: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
