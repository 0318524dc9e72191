"""Command-line entry point: ``citeclust <command> [flags]``.

Every artifact-producing command appends one record to ``<out>/manifest.jsonl``
(command, flags, seeds, input digests, outputs, wall time). Artifacts are
deterministic for fixed inputs and seeds whatever ``--threads`` is; only the
manifest records timing.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import cluster_graphs, read_clusters, write_clusters
from .corpus import CorpusError, KeyMode, build_blocks, crossref_profiles, load_corpus, load_profiles, write_jsonl
from .hmodel import ModelError, crossover, fit_m, log_bin, pareto_ccdf, sample_h, support_ccdf, write_distribution_report
from .metrics import (
    MetricsError,
    aggregate_errors,
    h_index,
    merged_name_test,
    random_disjoint_pairs,
    second_initial_precision,
    write_metrics_report,
)
from .optimizer import (
    EvalSet,
    ParamSpace,
    RadiusSchedule,
    best_result,
    local_search,
    random_search,
    run_ablation,
)
from .similarity import DEFAULT_YEAR_GAP, DisambiguationParams, compute_all_terms, read_link_cache, write_link_cache
from .synth import SynthConfig, SynthError, generate

log = logging.getLogger("citeclust")

DEFAULT_SWEEP = (0.5, 0.3, 0.15, 0.1, 0.05, 0.02, 0.0, 0.7, 0.9)


class UsageError(Exception):
    pass


# -- helpers ---------------------------------------------------------------------


def sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _existing(path: str | None, flag: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: no such file: {path}")
    return p


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_tsv(rows: list[dict], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if not rows:
            return
        cols = list(rows[0])
        fh.write("\t".join(cols) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(row[c]) for c in cols) + "\n")


def write_json(obj: dict, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


class Run:
    """Collects what a command read and wrote, then appends the manifest record."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.seeds: dict[str, int] = {}
        self.start = time.perf_counter()

    def read(self, path: Path | None) -> Path | None:
        if path is not None:
            self.inputs[str(path)] = sha256(path)
        return path

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(str(p))
        return p

    def finish(self) -> None:
        config = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        record = {
            "command": self.args.command,
            "version": __version__,
            "config": config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_time": round(time.perf_counter() - self.start, 3),
        }
        with open(self.out / "manifest.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True, default=str) + "\n")


def _params(args: argparse.Namespace, run: Run) -> DisambiguationParams:
    path = _existing(args.params, "--params")
    if path is None:
        return DisambiguationParams()
    run.read(path)
    return DisambiguationParams.load(path)


def _graphs(args: argparse.Namespace, run: Run, corpus):
    cache = _existing(getattr(args, "links", None), "--links")
    if cache is not None:
        graphs = read_link_cache(run.read(cache))
        gaps = {g.year_gap for g in graphs}
        if gaps and gaps != {args.year_gap}:
            raise UsageError(f"--links was built with year gap {sorted(gaps)}, not {args.year_gap}")
        log.info("read %d cached term graphs", len(graphs))
        return graphs
    blocks = build_blocks(corpus, KeyMode(args.key_mode))
    log.info("computing terms for %d blocks", len(blocks))
    return compute_all_terms(corpus, blocks, args.year_gap, args.threads)


# -- commands --------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> None:
    config = SynthConfig()
    run = Run(args)
    if args.config:
        config = SynthConfig.from_json(json.loads(run.read(_existing(args.config, "--config")).read_text()))
    overrides = {"seed": args.seed, "n_authors": args.authors}
    config = SynthConfig(**{**config.__dict__, **{k: v for k, v in overrides.items() if v is not None}})
    run.seeds["synth"] = config.seed
    result = generate(config)
    paths = result.write(run.out)
    run.outputs.extend(str(p) for p in paths.values())
    log.info("wrote %d papers by %d authors", len(result.papers), len(result.authors))
    run.finish()


def cmd_links(args: argparse.Namespace) -> None:
    run = Run(args)
    corpus = load_corpus(run.read(_existing(args.papers, "--papers")))
    graphs = _graphs(args, run, corpus)
    write_link_cache(graphs, run.path("links.jsonl"))
    log.info("wrote %d links over %d blocks", sum(len(g) for g in graphs), len(graphs))
    run.finish()


def cmd_disambiguate(args: argparse.Namespace) -> None:
    run = Run(args)
    papers = _existing(args.papers, "--papers")
    params = _params(args, run)
    corpus = load_corpus(run.read(papers))
    graphs = _graphs(args, run, corpus)
    clusterings = cluster_graphs(graphs, params)
    write_clusters(clusterings, run.path("clusters.jsonl"))
    write_json({"params": params.to_json()}, run.path("params.json"))
    log.info("%d clusters in %d blocks", sum(len(c) for c in clusterings), len(clusterings))
    run.finish()


def cmd_validate(args: argparse.Namespace) -> None:
    run = Run(args)
    papers = _existing(args.papers, "--papers")
    profiles_path = _existing(args.profiles, "--profiles")
    clusters_path = _existing(args.clusters, "--clusters")
    params = _params(args, run)
    corpus = load_corpus(run.read(papers))
    profiles, _ = load_profiles(run.read(profiles_path), corpus)
    if clusters_path is not None:
        clusterings = read_clusters(run.read(clusters_path))
    else:
        clusterings = cluster_graphs(_graphs(args, run, corpus), params)
    result = aggregate_errors(clusterings, profiles, corpus)
    second, n_second = second_initial_precision(clusterings, corpus)
    extra = {"second_initial_precision": second, "second_initial_clusters": n_second}
    if args.pairs > 0:
        run.seeds["pairs"] = args.seed
        blocks = build_blocks(corpus, KeyMode(args.key_mode))
        mixing = merged_name_test(corpus, random_disjoint_pairs(blocks, args.pairs, args.seed), params, args.year_gap)
        write_json(mixing.to_json(), run.path("mixing.json"))
        extra["mixed_fraction"] = mixing.mixed_fraction
    write_metrics_report(result, run.path("metrics.jsonl"), extra)
    log.info("p_error %.4f  rh_error %.4f", result.p_error, result.rh_error)
    run.finish()


def _eval_set(args: argparse.Namespace, run: Run) -> EvalSet:
    papers = _existing(args.papers, "--papers")
    profiles_path = _existing(args.profiles, "--profiles")
    corpus = load_corpus(run.read(papers))
    profiles, _ = load_profiles(run.read(profiles_path), corpus)
    return EvalSet(corpus, _graphs(args, run, corpus), profiles)


def cmd_optimize(args: argparse.Namespace) -> None:
    run = Run(args)
    eval_set = _eval_set(args, run)
    run.seeds["random_search"] = args.seed
    space = ParamSpace()
    results = random_search(space, args.samples, args.seed, eval_set, args.weight, args.threads)
    best = best_result(results)
    log.info("random search best: p %.4f rh %.4f", best.p_error, best.rh_error)
    if args.local_iter > 0:
        trace = []
        schedule = RadiusSchedule(max_iter=args.local_iter)
        best = local_search(best, eval_set, space, schedule, args.seed, args.weight, args.threads, trace)
        for k, r in enumerate(trace):
            r.index = args.samples + k
        results.extend(trace)
        log.info("local search best: p %.4f rh %.4f", best.p_error, best.rh_error)
    write_tsv([r.row() for r in results], run.path("results.tsv"))
    write_json(
        {"params": best.params.to_json(), "p_error": best.p_error, "rh_error": best.rh_error,
         "objective": best.objective, "weight": args.weight, "seed": args.seed, "evaluations": len(results)},
        run.path("best_params.json"),
    )
    run.finish()


def cmd_ablate(args: argparse.Namespace) -> None:
    run = Run(args)
    eval_set = _eval_set(args, run)
    run.seeds["ablation"] = args.seed
    schedule = RadiusSchedule(initial=0.25, probes=10, max_iter=args.local_iter)
    weights = tuple(args.weights) if args.local_iter > 0 else ()
    ablation = run_ablation(eval_set, args.samples, args.seed, tuple(args.subsets), weights=weights,
                            schedule=schedule, threads=args.threads, starts=args.starts)
    rows = [{"subset": s, **r.row()} for s, rs in ablation.results.items() for r in rs]
    write_tsv(rows, run.path("ablation.tsv"))
    hull_rows = [{"subset": s, "p_error": x, "rh_error": y} for s, h in ablation.hulls.items() for x, y in h]
    write_tsv(hull_rows, run.path("hulls.tsv"))
    if "ASRC" in ablation.hulls:
        dominance = ablation.dominance()
        write_json({"reference": "ASRC", "dominance": dominance}, run.path("dominance.json"))
        log.info("dominance of the all-features hull: %s", dominance)
    run.finish()


def _h_values(args: argparse.Namespace, run: Run) -> np.ndarray:
    if args.simulate is not None:
        run.seeds["sample"] = args.seed
        return sample_h(args.simulate, args.samples, np.random.Generator(np.random.PCG64(args.seed)))
    if args.values is not None:
        path = run.read(_existing(args.values, "--values"))
        return np.array([int(line) for line in path.read_text().split()], dtype=np.int64)
    papers = _existing(args.papers, "--papers")
    clusters = _existing(args.clusters, "--clusters")
    if papers is None or clusters is None:
        raise UsageError("hdist needs --simulate, --values, or both --papers and --clusters")
    corpus = load_corpus(run.read(papers))
    values = [h_index(corpus.citation_count(p) for p in c.paper_ids)
              for cl in read_clusters(run.read(clusters)) for c in cl.clusters]
    return np.asarray(values, dtype=np.int64)


def cmd_hdist(args: argparse.Namespace) -> None:
    run = Run(args)
    values = _h_values(args, run)
    if args.keep_values:
        write_jsonl(({"h": int(v)} for v in values), run.path("h_values.jsonl"))
    binned = log_bin(values, args.linear_upto, args.bins_per_decade)
    fit = fit_m(binned, args.support_min, weighting=args.weighting)
    write_distribution_report(binned, fit, run.path("bins.tsv"))
    summary = fit.to_json()
    summary["samples"] = int(values.size)
    summary["crossover_pareto"] = None
    hmin = max(1.0, float(args.support_min))
    try:
        summary["crossover_pareto"] = crossover(support_ccdf(fit.model, hmin), lambda h: pareto_ccdf(h, hmin),
                                                (hmin * (1 + 1e-9), args.crossover_max))
    except ModelError as exc:
        log.info("no crossover with the Pareto tail: %s", exc)
    write_json(summary, run.path("fit.json"))
    log.info("fitted m = %.4f over %d bins", fit.model.m, fit.bins_used)
    run.finish()


def cmd_crossref(args: argparse.Namespace) -> None:
    run = Run(args)
    papers = _existing(args.papers, "--papers")
    raw_path = _existing(args.profiles, "--profiles")
    corpus = load_corpus(run.read(papers))
    _, raw = load_profiles(run.read(raw_path))
    profiles, report = crossref_profiles(corpus, raw, args.threshold)
    write_jsonl((p.to_json() for p in profiles), run.path("profiles.jsonl"))
    write_json(report.to_json(), run.path("crossref_report.json"))
    log.info("matched %d of %d entries", report.matched, report.entries)
    run.finish()


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="citeclust", description="Citation-based author disambiguation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, key_mode: str | None = None) -> None:
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--threads", type=_non_negative_int, default=1, help="worker count, 0 = all cores")
        if key_mode is not None:
            p.add_argument("--papers", required=True, help="papers file (line-delimited JSON)")
            p.add_argument("--year-gap", type=_non_negative_int, default=DEFAULT_YEAR_GAP)
            p.add_argument("--key-mode", choices=[m.value for m in KeyMode], default=key_mode)
            p.add_argument("--links", help="term cache written by the links command")

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    common(p)
    p.add_argument("--authors", type=_positive_int, help="override the author count")
    p.add_argument("--config", help="JSON file with generator settings")
    p.set_defaults(func=cmd_synth, seed=None)

    p = sub.add_parser("links", help="precompute similarity terms per name block")
    common(p, KeyMode.SURNAME_FIRST_INITIAL.value)
    p.set_defaults(func=cmd_links)

    p = sub.add_parser("disambiguate", help="cluster every name block")
    common(p, KeyMode.SURNAME_FIRST_INITIAL.value)
    p.add_argument("--params", help="parameter file (e.g. best_params.json from optimize)")
    p.set_defaults(func=cmd_disambiguate)

    p = sub.add_parser("validate", help="errors, second-initial precision and merged-name mixing")
    common(p, KeyMode.SURNAME_ONLY.value)
    p.add_argument("--profiles", required=True, help="gold profiles with paper ids")
    p.add_argument("--clusters", help="clusters file; clustered from scratch when omitted")
    p.add_argument("--params", help="parameter file")
    p.add_argument("--pairs", type=_non_negative_int, default=100, help="random name pairs for the merged-name test")
    p.set_defaults(func=cmd_validate)

    for name, func, helptext in (("optimize", cmd_optimize, "random then local parameter search"),
                                 ("ablate", cmd_ablate, "feature-subset lower hulls")):
        p = sub.add_parser(name, help=helptext)
        common(p, KeyMode.SURNAME_ONLY.value)
        p.add_argument("--profiles", required=True, help="gold profiles with paper ids")
        p.add_argument("--samples", type=_positive_int, default=200, help="random samples (per subset for ablate)")
        p.add_argument("--local-iter", type=_non_negative_int, default=60, help="local-search iteration cap, 0 = skip")
        p.set_defaults(func=func)
        if name == "optimize":
            p.add_argument("--weight", type=_unit_interval, default=0.5, help="weight of rh_error in the objective")
        else:
            p.add_argument("--weights", type=_unit_interval, nargs="+", default=list(DEFAULT_SWEEP),
                           help="trade-off weights refined by local search, in order")
            p.add_argument("--subsets", nargs="+", default=["ASRC", "A", "S", "R", "C"])
            p.add_argument("--starts", type=_positive_int, default=3, help="distinct local-search starts per weight")
            p.set_defaults(local_iter=20)

    p = sub.add_parser("hdist", help="h-index histogram and model fit")
    common(p)
    p.add_argument("--papers", help="papers file (with --clusters)")
    p.add_argument("--clusters", help="clusters file")
    p.add_argument("--values", help="whitespace-separated integer h values")
    p.add_argument("--simulate", type=float, help="draw from the model with this m instead of reading data")
    p.add_argument("--samples", type=_positive_int, default=10**6, help="draws for --simulate")
    p.add_argument("--support-min", type=_non_negative_int, default=2)
    p.add_argument("--linear-upto", type=_non_negative_int, default=10)
    p.add_argument("--bins-per-decade", type=_positive_int, default=5)
    p.add_argument("--weighting", choices=["counts", "uniform"], default="counts")
    p.add_argument("--crossover-max", type=float, default=1e4)
    p.add_argument("--keep-values", action="store_true", help="also write the h values")
    p.set_defaults(func=cmd_hdist)

    p = sub.add_parser("crossref", help="resolve raw publication lists to paper ids")
    common(p)
    p.add_argument("--papers", required=True)
    p.add_argument("--profiles", required=True, help="raw profiles (title/year entries)")
    p.add_argument("--threshold", type=_unit_interval, default=0.9)
    p.set_defaults(func=cmd_crossref)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"citeclust {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, MetricsError, ModelError, SynthError, ValueError, OSError) as exc:
        log.error("%s failed: %s", args.command, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
