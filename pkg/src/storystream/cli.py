"""Command line for the full pipeline: synth, embed, train, cluster, evaluate, inspect.

Exit codes: 0 success, 2 input validation error, 3 runtime error. Commands
that produce outputs also write a run manifest (flags, seeds, input file
hashes) next to them for reproducibility.
"""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click

from . import evaluation
from .corpus import (
    CorpusFormatError,
    EmbeddingCache,
    EmbeddingCacheMissError,
    EmbeddingServiceError,
    ServiceClient,
    embed_corpus,
    load_corpus,
)
from .engine import ClusteringEngine, EngineConfig, write_assignments
from .evaluation import GoldStandard, evaluate, format_report_table
from .features import SizeLimits, TemporalParams
from .models import ModelFormatError, TrainConfig, load_model
from .pool import PoolConfig
from .synth import synth_corpus
from .trainer import MODEL_FILENAMES, train_all

VALIDATION_EXIT = 2
RUNTIME_EXIT = 3

_VALIDATION_ERRORS = (
    CorpusFormatError,
    ModelFormatError,
    EmbeddingCacheMissError,
    ValueError,
    KeyError,
    FileNotFoundError,
)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn, *args, **kwargs):
    """Map input errors to exit 2 and runtime errors to exit 3."""
    try:
        return fn(*args, **kwargs)
    except _VALIDATION_ERRORS as exc:
        _fail(VALIDATION_EXIT, str(exc))
    except EmbeddingServiceError as exc:
        _fail(RUNTIME_EXIT, str(exc))
    except OSError as exc:
        _fail(RUNTIME_EXIT, str(exc))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fp:
        for chunk in iter(lambda: fp.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path: Path, command: str, flags: dict, inputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "flags": {k: v for k, v in sorted(flags.items())},
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None and p.exists()},
    }
    manifest_path = out_path.with_name(out_path.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _parse_size_limits(raw: str) -> SizeLimits:
    try:
        return SizeLimits(tuple(int(x) for x in raw.split(",") if x.strip()))
    except ValueError as exc:
        raise ValueError(f"bad --size-limits {raw!r}: {exc}") from exc


def _load_reprs(corpus_path: Path, cache_path: Path):
    docs = load_corpus(corpus_path)
    if not docs:
        raise ValueError(f"corpus {corpus_path} is empty")
    cache = EmbeddingCache(cache_path)
    if not cache_path.exists():
        raise FileNotFoundError(f"embedding cache {cache_path} does not exist")
    return embed_corpus(docs, cache)


@click.group()
def main() -> None:
    """Online news-stream story clustering."""


@main.command()
@click.option("--stories", type=int, default=20, show_default=True)
@click.option("--docs-per-story", type=int, default=30, show_default=True)
@click.option("--dim", type=int, default=512, show_default=True)
@click.option("--sep", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--time-spread-days", type=float, default=30.0, show_default=True)
@click.option("--languages", default="xx", show_default=True,
              help="Comma-separated synthetic language tags.")
@click.option("--per-language-labels", is_flag=True,
              help="One gold label per (story, language) plus positive connections.")
@click.option("--time-split", type=int, default=0, show_default=True,
              help="Number of stories split into two temporal phases.")
@click.option("--split-gap-days", type=float, default=45.0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def synth(stories, docs_per_story, dim, sep, seed, time_spread_days, languages,
          per_language_labels, time_split, split_gap_days, out_dir) -> None:
    """Generate a synthetic corpus, gold files, and an embedding cache."""
    def run():
        corpus = synth_corpus(
            n_stories=stories,
            docs_per_story=docs_per_story,
            dim=dim,
            sep=sep,
            seed=seed,
            time_spread_days=time_spread_days,
            languages=[s.strip() for s in languages.split(",") if s.strip()],
            per_language_labels=per_language_labels,
            time_split_stories=time_split,
            split_gap_days=split_gap_days,
        )
        paths = corpus.write(out_dir)
        _write_manifest(
            paths["corpus"], "synth",
            {
                "stories": stories, "docs_per_story": docs_per_story, "dim": dim,
                "sep": sep, "seed": seed, "time_spread_days": time_spread_days,
                "languages": languages, "per_language_labels": per_language_labels,
                "time_split": time_split, "split_gap_days": split_gap_days,
            },
            [],
        )
        click.echo(f"wrote {len(corpus.docs)} documents to {out_dir}")

    _guard(run)


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(path_type=Path), required=True)
@click.option("--cache", "cache_path", type=click.Path(path_type=Path), required=True)
@click.option("--service", "service_url", default=None,
              help="Embedding sidecar URL; omit for cache-only runs.")
@click.option("--batch-size", type=int, default=32, show_default=True)
def embed(corpus_path, cache_path, service_url, batch_size) -> None:
    """Populate the embedding cache for a corpus."""
    def run():
        docs = load_corpus(corpus_path)
        cache = EmbeddingCache(cache_path)
        provider = ServiceClient(service_url, batch_size=batch_size) if service_url else None
        reprs = embed_corpus(docs, cache, provider)
        _write_manifest(
            cache_path, "embed",
            {"corpus": str(corpus_path), "service": service_url, "batch_size": batch_size},
            [corpus_path],
        )
        click.echo(f"embedded {len(reprs)} documents ({len(cache)} cached units)")

    _guard(run)


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(path_type=Path), required=True)
@click.option("--cache", "cache_path", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--mu", type=float, default=0.0, show_default=True)
@click.option("--sigma", type=float, default=3.0, show_default=True)
@click.option("--size-limits", default="1,2,3,5,10,20,50", show_default=True)
@click.option("--features", "n_features", type=click.Choice(["4", "8"]), default="8",
              show_default=True)
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--learning-rate", type=float, default=0.01, show_default=True)
@click.option("--l2-lambda", type=float, default=1e-4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--k-neg", type=int, default=20, show_default=True)
@click.option("--merge-top-m", type=int, default=5, show_default=True)
@click.option("--mining-passes", type=int, default=1, show_default=True,
              help="Extra passes re-mine ranking negatives with the trained model.")
@click.option("--dump-examples", "dump_dir", type=click.Path(path_type=Path),
              default=None, help="Also write the training example sets as JSONL.")
def train(corpus_path, cache_path, out_dir, mu, sigma, size_limits, n_features,
          epochs, learning_rate, l2_lambda, seed, k_neg, merge_top_m,
          mining_passes, dump_dir) -> None:
    """Train ranking, acceptance, and merge models from a gold-labeled corpus."""
    def run():
        reprs = _load_reprs(corpus_path, cache_path)
        trained = train_all(
            reprs,
            cfg=TrainConfig(epochs=epochs, learning_rate=learning_rate,
                            l2_lambda=l2_lambda, seed=seed),
            p=TemporalParams(mu=mu, sigma=sigma),
            v=_parse_size_limits(size_limits),
            n_features=int(n_features),
            k_neg=k_neg,
            merge_top_m=merge_top_m,
            mining_passes=mining_passes,
            out_dir=out_dir,
            dump_dir=dump_dir,
        )
        _write_manifest(
            Path(out_dir) / "training_report.json", "train",
            {
                "corpus": str(corpus_path), "cache": str(cache_path), "mu": mu,
                "sigma": sigma, "size_limits": size_limits, "features": n_features,
                "epochs": epochs, "learning_rate": learning_rate,
                "l2_lambda": l2_lambda, "seed": seed, "k_neg": k_neg,
                "merge_top_m": merge_top_m, "mining_passes": mining_passes,
            },
            [corpus_path, cache_path],
        )
        report = trained.report
        click.echo(
            f"trained on {report.n_documents} docs: {report.n_rank_pairs} rank pairs, "
            f"{report.n_accept_pos}+{report.n_accept_neg} accept examples, "
            f"{report.n_merge_pos}+{report.n_merge_neg} merge examples"
        )
        if report.merge_degenerate:
            click.echo(f"note: {report.merge_degenerate}")

    _guard(run)


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(path_type=Path), required=True)
@click.option("--cache", "cache_path", type=click.Path(path_type=Path), required=True)
@click.option("--models", "models_dir", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--pool-out", type=click.Path(path_type=Path), default=None,
              help="Pool export path; defaults to <out>.pool.jsonl")
@click.option("--features", "n_features", type=click.Choice(["4", "8"]), default="8",
              show_default=True)
@click.option("--mu", type=float, default=0.0, show_default=True)
@click.option("--sigma", type=float, default=3.0, show_default=True)
@click.option("--size-limits", default="1,2,3,5,10,20,50", show_default=True)
@click.option("--no-merge", is_flag=True, help="Disable the cluster merge step.")
@click.option("--merge-eval-all", is_flag=True,
              help="Evaluate the merge model on every cluster, not just the top-m.")
@click.option("--merge-top-m", type=int, default=5, show_default=True)
@click.option("--archive-days", type=int, default=None,
              help="Archive clusters whose newest document is older than this horizon.")
def cluster(corpus_path, cache_path, models_dir, out_path, pool_out, n_features,
            mu, sigma, size_limits, no_merge, merge_eval_all, merge_top_m,
            archive_days) -> None:
    """Cluster a document stream with trained models."""
    def run():
        reprs = _load_reprs(corpus_path, cache_path)
        models_path = Path(models_dir)
        rank_model = load_model(models_path / MODEL_FILENAMES["rank"])
        accept_model = load_model(models_path / MODEL_FILENAMES["accept"])
        merge_model = None
        if not no_merge:
            merge_model = load_model(models_path / MODEL_FILENAMES["merge"])
        config = EngineConfig(
            temporal=TemporalParams(mu=mu, sigma=sigma),
            size_limits=_parse_size_limits(size_limits),
            n_features=int(n_features),
            merge_enabled=not no_merge,
            merge_top_m=merge_top_m,
            merge_eval_all=merge_eval_all,
            pool=PoolConfig(archive_horizon_days=archive_days, keep_docs=False),
        )
        engine = ClusteringEngine(rank_model, accept_model, merge_model, config)
        records = engine.run_stream(reprs)
        with open(out_path, "w", encoding="utf-8") as fp:
            write_assignments(records, fp)
        pool_path = Path(pool_out) if pool_out else out_path.with_name(out_path.name + ".pool.jsonl")
        with open(pool_path, "w", encoding="utf-8") as fp:
            engine.pool.export_jsonl(fp)
        _write_manifest(
            out_path, "cluster",
            {
                "corpus": str(corpus_path), "cache": str(cache_path),
                "models": str(models_dir), "features": n_features, "mu": mu,
                "sigma": sigma, "size_limits": size_limits, "no_merge": no_merge,
                "merge_eval_all": merge_eval_all, "merge_top_m": merge_top_m,
                "archive_days": archive_days,
            },
            [corpus_path, cache_path] + [models_path / f for f in MODEL_FILENAMES.values()],
        )
        n_merges = len(engine.pool.merge_log)
        click.echo(
            f"clustered {len(records)} documents into "
            f"{len(engine.pool.all_clusters())} clusters ({n_merges} merges)"
        )

    _guard(run)


@main.command(name="evaluate")
@click.option("--assignments", "assignments_path", type=click.Path(path_type=Path),
              default=None, help="Engine assignment JSONL.")
@click.option("--pool", "pool_path", type=click.Path(path_type=Path), default=None,
              help="Pool export JSONL (alternative to --assignments).")
@click.option("--gold", "gold_path", type=click.Path(path_type=Path), required=True)
@click.option("--connections", "connections_path", type=click.Path(path_type=Path),
              default=None)
@click.option("--closure", is_flag=True,
              help="Apply transitive closure over positive connections in standard F1.")
@click.option("--lang", default=None, help="Restrict evaluation to one language tag.")
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
def evaluate_cmd(assignments_path, pool_path, gold_path, connections_path,
                 closure, lang, as_json) -> None:
    """Score assignments against gold labels (standard F1 and BCubed)."""
    def run():
        if (assignments_path is None) == (pool_path is None):
            raise ValueError("provide exactly one of --assignments or --pool")
        if assignments_path is not None:
            with open(assignments_path, encoding="utf-8") as fp:
                pred = evaluation.load_assignments(fp)
        else:
            with open(pool_path, encoding="utf-8") as fp:
                pred = evaluation.load_pool_assignments(fp)
        with open(gold_path, encoding="utf-8") as fp:
            labels, langs = evaluation.load_gold_labels(fp)
        connections = frozenset()
        if connections_path is not None:
            with open(connections_path, encoding="utf-8") as fp:
                connections = evaluation.load_connections(fp)
        if lang is not None:
            labels = {d: l for d, l in labels.items() if langs.get(d) == lang}
            if not labels:
                raise ValueError(f"no gold-labeled documents with lang {lang!r}")
            kept = set(labels.values())
            connections = frozenset(p for p in connections if p <= kept)
        gold = GoldStandard(labels=labels, connections=connections)
        report = evaluate(pred, gold, closure=closure)
        if as_json:
            click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        else:
            click.echo(format_report_table(report, title=lang or "all"))

    _guard(run)


@main.command()
@click.option("--pool", "pool_path", type=click.Path(path_type=Path), required=True)
@click.option("--cluster", "cluster_id", type=int, required=True)
@click.option("--json", "as_json", is_flag=True)
def inspect(pool_path, cluster_id, as_json) -> None:
    """Summarize one cluster from a pool export."""
    def run():
        with open(pool_path, encoding="utf-8") as fp:
            for line in fp:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if rec.get("id") == cluster_id:
                    if as_json:
                        click.echo(json.dumps(rec, indent=2, sort_keys=True))
                    else:
                        click.echo(f"cluster {rec['id']}  size={rec['size']}")
                        click.echo(
                            f"days: newest={rec['ts_newest']} oldest={rec['ts_oldest']} "
                            f"mean={rec['ts_mean']:.2f}  archived={rec.get('archived', False)}"
                        )
                        click.echo("members: " + " ".join(rec["members"]))
                    return
        raise ValueError(f"cluster {cluster_id} not found in {pool_path}")

    _guard(run)


if __name__ == "__main__":
    main()
