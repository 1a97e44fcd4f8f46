"""Operator command line: every pipeline stage as a subcommand.

Stages communicate only via artifacts under --data-dir (see artifacts.py),
so any stage can be re-run independently. stdout carries JSON (or CSV where
noted), stderr carries logs. Exit codes: 0 success, 1 operational error,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, artifacts
from .annindex import build_index
from .cbfembed import HashEmbedderConfig, embed_corpus, load_vectors
from .citegraph import assign_bins, build_graph
from .corpus import coverage_stats, parse_records
from .embedding import save_embedding
from .evalharness import (
    EvalConfig,
    curve_csv,
    horizon_sweep,
    scaling_curve,
    year_bins,
)
from .gbembed import SpectralParams, embed_graph
from .recommend import (
    MissingVectorError,
    RecommendationList,
    Recommender,
    fuse,
    items_payload,
    priors_csv,
    priors_profile,
)
from .robustness import (
    detect_duplicates,
    discrepancy_flags,
    impute_missing,
    top1_cosine_histogram,
    write_flag_report,
)

logger = logging.getLogger(__name__)


class CliError(RuntimeError):
    """Operational failure: message to stderr, exit 1."""


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=False))


def _data_dir(ns) -> Path:
    return Path(ns.data_dir)


def _resolve_paper(store, external_id: str) -> int:
    idx = store.resolve(external_id)
    if idx is None:
        raise CliError(f"unknown paper id {external_id!r}")
    return idx


def _rec_payload(store, rec_list: RecommendationList) -> dict:
    return {
        "query": store.external_id(rec_list.query),
        "method": rec_list.method,
        "generatedAt": rec_list.generated_at,
        "recommendedPapers": items_payload(store, rec_list),
    }


# -- subcommand handlers -------------------------------------------------------


def _cmd_ingest(ns) -> int:
    store, report = parse_records(Path(ns.input))
    data_dir = _data_dir(ns)
    data_dir.mkdir(parents=True, exist_ok=True)
    artifacts.write_artifact(data_dir / artifacts.CORPUS, artifacts.corpus_bytes(store), ns.force)
    artifacts.write_artifact(data_dir / artifacts.ID_MAP, artifacts.id_map_bytes(store), ns.force)
    if report.n_errors:
        report_path = data_dir / "ingest_report.json"
        report_path.write_text(json.dumps(report.to_json_dict(), indent=2), encoding="utf-8")
    _print_json(
        {
            "nParsed": report.n_parsed,
            "nLines": report.n_lines,
            "nMalformed": len(report.malformed),
            "nDuplicates": len(report.duplicates),
        }
    )
    return 0


def _cmd_graph(ns) -> int:
    store = artifacts.load_store(_data_dir(ns))
    graph = build_graph(store)
    artifacts.write_artifact(_data_dir(ns) / artifacts.GRAPH, artifacts.graph_bytes(graph), ns.force)
    _print_json({"nodes": graph.n, "edges": graph.edge_count})
    return 0


def _spectral_params(ns) -> SpectralParams:
    return SpectralParams(
        d=ns.d,
        K=ns.k_order,
        mu=ns.mu,
        theta=ns.theta,
        oversample=ns.oversample,
        power_iters=ns.power_iters,
        seed=ns.seed,
    )


def _cmd_embed_gb(ns) -> int:
    data_dir = _data_dir(ns)
    graph = artifacts.load_graph_artifact(data_dir)
    emb = embed_graph(graph, _spectral_params(ns))
    artifacts.write_artifact(data_dir / artifacts.GB_EMB, artifacts.embedding_bytes(emb), ns.force)
    stages = {
        name: {"wallSeconds": m.wall_seconds, "peakBytes": m.peak_bytes}
        for name, m in (emb.stats or {}).items()
        if hasattr(m, "wall_seconds")
    }
    _print_json({"n": emb.n, "d": emb.d, "missing": len(emb.missing), "stages": stages})
    return 0


def _cmd_embed_cbf(ns) -> int:
    data_dir = _data_dir(ns)
    store = artifacts.load_store(data_dir)
    if ns.vectors:
        emb, unresolved = load_vectors(Path(ns.vectors), store)
        if unresolved:
            logger.warning("%d vector rows had unknown ids", len(unresolved))
    else:
        emb = embed_corpus(store, HashEmbedderConfig(d=ns.d, seed=ns.seed))
    artifacts.write_artifact(data_dir / artifacts.CBF_EMB, artifacts.embedding_bytes(emb), ns.force)
    _print_json({"n": emb.n, "d": emb.d, "missing": len(emb.missing)})
    return 0


def _cmd_index(ns) -> int:
    data_dir = _data_dir(ns)
    emb = artifacts.load_embedding_artifact(data_dir, ns.method)
    index = build_index(emb, ns.max_degree, ns.ef_construction, ns.seed)
    name = artifacts.CBF_INDEX if ns.method == "cbf" else artifacts.GB_INDEX
    artifacts.write_artifact(data_dir / name, artifacts.index_bytes(index), ns.force)
    _print_json({"count": index.count, "d": index.d, "levels": index.max_level + 1})
    return 0


def _load_recommender(ns) -> tuple:
    bundle = artifacts.load_bundle(_data_dir(ns))
    return bundle.store, bundle.recommender()


def _cmd_recommend(ns) -> int:
    store, rec = _load_recommender(ns)
    query = _resolve_paper(store, ns.paper)
    try:
        rec_list = rec.papers_like_this(query, ns.method, ns.k, ns.ef_search)
    except MissingVectorError as exc:
        raise CliError(str(exc)) from exc
    _print_json(_rec_payload(store, rec_list))
    return 0


def _cmd_authors(ns) -> int:
    store, rec = _load_recommender(ns)
    query = _resolve_paper(store, ns.paper)
    try:
        authors = rec.authors_like_this(query, ns.k, ns.method, ns.ef_search)
    except (MissingVectorError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    _print_json(
        {
            "query": store.external_id(authors.query),
            "method": authors.method,
            "generatedAt": authors.generated_at,
            "recommendedAuthors": [
                {"author": name, "score": score} for name, score in authors.items
            ],
        }
    )
    return 0


def _list_from_payload(store, payload: dict) -> RecommendationList:
    items = []
    for item in payload["recommendedPapers"]:
        idx = store.resolve(item["paperId"])
        if idx is None:
            raise CliError(f"paper id {item['paperId']!r} not in corpus")
        items.append((idx, float(item["score"])))
    from .recommend import _now

    return RecommendationList(
        query=_resolve_paper(store, payload["query"]),
        method=payload["method"],
        items=tuple(items),
        generated_at=payload.get("generatedAt", _now()),
    )


def _cmd_fuse(ns) -> int:
    store = artifacts.load_store(_data_dir(ns))
    try:
        payload_a = json.loads(Path(ns.a).read_text(encoding="utf-8"))
        payload_b = json.loads(Path(ns.b).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read input lists: {exc}") from exc
    list_a = _list_from_payload(store, payload_a)
    list_b = _list_from_payload(store, payload_b)
    try:
        fused = fuse(list_a, list_b, ns.strategy, ns.k, weight=ns.weight)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    _print_json(_rec_payload(store, fused))
    return 0


def _cmd_priors(ns) -> int:
    store, rec = _load_recommender(ns)
    methods = [m.strip() for m in ns.methods.split(",") if m.strip()]
    if not methods:
        raise CliError("no methods given")
    answerable = None
    for m in methods:
        ans = set(rec.answerable(m).tolist())
        answerable = ans if answerable is None else (answerable & ans)
    if not answerable:
        raise CliError("no paper is answerable by all requested methods")
    rng = np.random.default_rng(ns.seed)
    pool = np.asarray(sorted(answerable), dtype=np.int64)
    n_queries = min(ns.queries, len(pool))
    queries = pool[rng.choice(len(pool), size=n_queries, replace=False)]

    def lists_for(method: str) -> list[RecommendationList]:
        def one(q: int) -> RecommendationList:
            return rec.papers_like_this(int(q), method, ns.k, ns.ef_search)

        if ns.threads > 1:
            with ThreadPoolExecutor(max_workers=ns.threads) as pool_exec:
                return list(pool_exec.map(one, queries.tolist()))
        return [one(q) for q in queries.tolist()]

    lists = {m: lists_for(m) for m in methods}
    report = priors_profile(lists, store, ns.k)
    out_path = _data_dir(ns) / ns.out
    artifacts.write_artifact(out_path, priors_csv(lists, store, ns.k).encode("utf-8"), ns.force)
    _print_json({"queries": n_queries, "perMethod": report.to_json_dict(), "csv": str(out_path)})
    return 0


def _cmd_corners(ns) -> int:
    data_dir = _data_dir(ns)
    store = artifacts.load_store(data_dir)
    cbf_emb = artifacts.load_embedding_artifact(data_dir, "cbf")
    gb_emb = artifacts.load_embedding_artifact(data_dir, "gb")
    cbf_index = artifacts.load_index_artifact(data_dir, "cbf", cbf_emb)
    indexed = cbf_index.corpus_indices()
    rng = np.random.default_rng(ns.seed)
    if ns.sample and ns.sample < len(indexed):
        sample = indexed[rng.choice(len(indexed), size=ns.sample, replace=False)]
    else:
        sample = indexed
    hist = top1_cosine_histogram(cbf_index, sample.tolist(), ns.bins, threads=ns.threads)
    duplicates = detect_duplicates(cbf_index, ns.threshold, gb_emb)
    candidate_pairs = [(d.i, d.j) for d in duplicates]
    report = discrepancy_flags(cbf_emb, gb_emb, ns.tau_hi, ns.tau_lo, candidate_pairs)
    out_path = data_dir / ns.out
    import io

    buf = io.StringIO()
    write_flag_report(buf, store, duplicates, report.flagged, report.unevaluable)
    artifacts.write_artifact(out_path, buf.getvalue().encode("utf-8"), ns.force)
    _print_json(
        {
            "sampleSize": hist.sample_size,
            "fractionGe099": hist.fraction_ge_099,
            "nDuplicatePairs": len(duplicates),
            "nDiscrepancies": len(report.flagged),
            "nUnevaluable": report.n_unevaluable,
            "report": str(out_path),
        }
    )
    return 0


def _cmd_impute(ns) -> int:
    data_dir = _data_dir(ns)
    target_emb = artifacts.load_embedding_artifact(data_dir, ns.target)
    if ns.strategy == "centroid":
        graph = artifacts.load_graph_artifact(data_dir)
        new_emb, report = impute_missing(target_emb, "centroid", graph=graph)
    else:
        donor_method = "gb" if ns.target == "cbf" else "cbf"
        donor_emb = artifacts.load_embedding_artifact(data_dir, donor_method)
        donor_index = artifacts.load_index_artifact(data_dir, donor_method, donor_emb)
        new_emb, report = impute_missing(
            target_emb, "better-together", donor_emb=donor_emb, donor_index=donor_index, m=ns.m
        )
    out_path = data_dir / f"{ns.target}.imputed.emb"
    artifacts.write_artifact(out_path, artifacts.embedding_bytes(new_emb), ns.force)
    _print_json(
        {
            "imputed": len(report.imputed),
            "unimputable": len(report.unimputable),
            "missingBefore": len(target_emb.missing),
            "missingAfter": len(new_emb.missing),
            "out": str(out_path),
        }
    )
    return 0


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError(f"bad {what} list {text!r}: {exc}") from exc


def _cmd_eval(ns) -> int:
    if ns.scaling == ns.horizon:
        raise CliError("pass exactly one of --scaling or --horizon")
    data_dir = _data_dir(ns)
    store = artifacts.load_store(data_dir)
    graph = artifacts.load_graph_artifact(data_dir)
    bins = (
        year_bins(store, ns.bins)
        if ns.bin_mode == "year"
        else assign_bins(store, ns.bins, ns.seed)
    )
    params = _spectral_params(ns)
    if ns.scaling:
        percents = _parse_int_list(ns.t, "--t")
        t_values = sorted({max(1, round(p * ns.bins / 100)) for p in percents})
        config = EvalConfig(t=t_values[0], h=ns.h, k_pairs=ns.k_pairs)
        points = scaling_curve(store, graph, bins, t_values, config, params, ns.seed)
        default_out = "eval_scaling.csv"
    else:
        t = max(1, round(_parse_int_list(ns.t, "--t")[0] * ns.bins / 100))
        h_values = _parse_int_list(ns.h_list, "--h")
        config = EvalConfig(t=t, h=0, k_pairs=ns.k_pairs)
        points = horizon_sweep(store, graph, bins, t, h_values, config, params, ns.seed)
        default_out = "eval_horizon.csv"
    out_path = data_dir / (ns.out or default_out)
    artifacts.write_artifact(out_path, curve_csv(points).encode("utf-8"), ns.force)
    _print_json(
        {
            "points": [
                {"t": p.t, "h": p.h, "auc": p.auc, "nPairs": p.n_pairs, "excluded": p.excluded}
                for p in points
            ],
            "csv": str(out_path),
        }
    )
    return 0


def _cmd_stats(ns) -> int:
    data_dir = _data_dir(ns)
    store = artifacts.load_store(data_dir)
    graph = artifacts.load_graph_artifact(data_dir)
    stats = coverage_stats(store, graph)
    _print_json(stats.to_json_dict())
    return 0


def _cmd_serve(ns) -> int:
    from .service import serve

    serve(_data_dir(ns), host=ns.host, port=ns.port)
    return 0


# -- parser --------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data-dir", default="data", help="artifact directory (default: data)")
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    common.add_argument("--threads", type=int, default=1, help="parallel workers where supported")
    common.add_argument("--config", default=None, help="key=value defaults file")
    common.add_argument("--force", action="store_true", help="allow replacing changed artifacts")
    common.add_argument("--verbose", action="store_true", help="info-level logs on stderr")

    parser = argparse.ArgumentParser(
        prog="paperrec",
        description="Hybrid paper recommendation pipeline over content and citation graphs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("ingest", parents=[common], help="parse JSONL records into the corpus artifact")
    p.add_argument("--input", required=True, help="JSONL records file")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("graph", parents=[common], help="build the citation graph artifact")
    p.set_defaults(func=_cmd_graph)

    def add_spectral(p_):
        p_.add_argument("--d", type=int, default=128, help="embedding dimension")
        p_.add_argument("--k-order", type=int, default=10, help="Chebyshev expansion order")
        p_.add_argument("--mu", type=float, default=0.2, help="band-pass center in [0, 2]")
        p_.add_argument("--theta", type=float, default=0.5, help="band-pass sharpness")
        p_.add_argument("--oversample", type=int, default=10)
        p_.add_argument("--power-iters", type=int, default=2)

    p = sub.add_parser("embed-gb", parents=[common], help="graph embeddings (factorize + propagate)")
    add_spectral(p)
    p.set_defaults(func=_cmd_embed_gb)

    p = sub.add_parser("embed-cbf", parents=[common], help="content embeddings (hashing or imported vectors)")
    p.add_argument("--d", type=int, default=256, help="hash dimension")
    p.add_argument("--vectors", default=None, help="import external vectors instead of hashing")
    p.set_defaults(func=_cmd_embed_cbf)

    p = sub.add_parser("index", parents=[common], help="build the ANN index for one embedding")
    p.add_argument("--method", choices=["cbf", "gb"], required=True)
    p.add_argument("--max-degree", type=int, default=32)
    p.add_argument("--ef-construction", type=int, default=200)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("recommend", parents=[common], help="papers like a given paper")
    p.add_argument("--paper", required=True, help="external paper id")
    p.add_argument("--method", choices=["cbf", "gb", "hybrid"], default="hybrid")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--ef-search", type=int, default=100)
    p.set_defaults(func=_cmd_recommend)

    p = sub.add_parser("authors", parents=[common], help="authors like a given paper")
    p.add_argument("--paper", required=True)
    p.add_argument("--method", choices=["cbf", "gb", "hybrid"], default="cbf")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--ef-search", type=int, default=100)
    p.set_defaults(func=_cmd_authors)

    p = sub.add_parser("fuse", parents=[common], help="fuse two recommendation JSON files")
    p.add_argument("--a", required=True, help="first recommend output (JSON file)")
    p.add_argument("--b", required=True, help="second recommend output (JSON file)")
    p.add_argument("--strategy", choices=["rrf", "weighted"], default="rrf")
    p.add_argument("--weight", type=float, default=0.5, help="weight on list a (weighted strategy)")
    p.add_argument("-k", type=int, default=10)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("priors", parents=[common], help="citation/recency profile of each method's results")
    p.add_argument("--methods", default="cbf,gb", help="comma-separated methods")
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--ef-search", type=int, default=100)
    p.add_argument("--out", default="priors.csv")
    p.set_defaults(func=_cmd_priors)

    p = sub.add_parser("corners", parents=[common], help="duplicate spike and discrepancy report")
    p.add_argument("--sample", type=int, default=0, help="queries for the histogram (0 = all)")
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--threshold", type=float, default=0.99, help="duplicate cosine threshold")
    p.add_argument("--tau-hi", type=float, default=0.95)
    p.add_argument("--tau-lo", type=float, default=0.2)
    p.add_argument("--out", default="flags.jsonl")
    p.set_defaults(func=_cmd_corners)

    p = sub.add_parser("impute", parents=[common], help="fill missing vectors")
    p.add_argument("--target", choices=["cbf", "gb"], required=True)
    p.add_argument("--strategy", choices=["centroid", "better-together"], default="centroid")
    p.add_argument("--m", type=int, default=10, help="donor neighbours (better-together)")
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("eval", parents=[common], help="scaling curves and horizon sweeps")
    p.add_argument("--scaling", action="store_true", help="sweep training size")
    p.add_argument("--horizon", action="store_true", help="sweep forecasting horizon")
    p.add_argument("--t", default="25,50,75,100", help="training size(s), percent of bins")
    p.add_argument("--h", dest="h", type=int, default=0, help="horizon for --scaling")
    p.add_argument("--h-list", default="0,1,2", help="horizons for --horizon")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--bin-mode", choices=["hash", "year"], default="hash")
    p.add_argument("--k-pairs", type=int, default=200)
    p.add_argument("--out", default=None, help="CSV filename under --data-dir")
    add_spectral(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("stats", parents=[common], help="corpus statistics")
    p.add_argument("--coverage", action="store_true", help="coverage stats (default output)")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("serve", parents=[common], help="read-only HTTP recommendation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8571)
    p.set_defaults(func=_cmd_serve)

    return parser


def _read_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"config {path} line {line_no}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip().strip("\"'")
    return out


def _scan_config(argv: list[str]) -> str | None:
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if arg.startswith("--config="):
            return arg.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, cfg: dict[str, str]) -> None:
    """Install config values as parser defaults, honoring each option's type.

    Defaults must be set on the subparser owning each option: subparsers parse
    into a fresh namespace, so top-level set_defaults would be overridden.
    """
    parsers: list[argparse.ArgumentParser] = [parser]

    def collect(p: argparse.ArgumentParser) -> None:
        for action in p._actions:
            if isinstance(action, argparse._SubParsersAction):
                for child in action.choices.values():
                    if child not in parsers:
                        parsers.append(child)
                        collect(child)

    collect(parser)
    owners: dict[str, list[tuple[argparse.ArgumentParser, argparse.Action]]] = {}
    for p in parsers:
        for action in p._actions:
            if action.dest and action.dest is not argparse.SUPPRESS:
                owners.setdefault(action.dest, []).append((p, action))
    for key, raw in cfg.items():
        if key not in owners:
            raise CliError(f"unknown config key {key!r}")
        for p, action in owners[key]:
            if isinstance(action, argparse._StoreTrueAction):
                value: object = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    value = action.type(raw)
                except (TypeError, ValueError) as exc:
                    raise CliError(f"config key {key!r}: bad value {raw!r}: {exc}") from exc
            else:
                value = raw
            p.set_defaults(**{key: value})


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        config_path = _scan_config(argv)
        if config_path:
            _apply_config(parser, _read_config(config_path))
        try:
            ns = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        logging.basicConfig(
            stream=sys.stderr,
            level=logging.INFO if ns.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return ns.func(ns)
    except (CliError, artifacts.ArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # operational guardrail: no tracebacks to users
        logger.debug("unexpected failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
