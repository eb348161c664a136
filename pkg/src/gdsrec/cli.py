"""Command-line entry points: ``stats``, ``train``, ``evaluate``, ``predict`` and ``synth``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import functools
import hashlib
import json
import logging
import sys
from collections import Counter
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from . import diffcore as dc
from .config import ConfigError, RunConfig
from .dataset import (
    DataError,
    Dataset,
    build_interaction_tables,
    compute_statistics,
    load_dataset,
    load_ratings,
    load_trust,
)
from .diffcore import CheckpointError, TapeError, checkpoint
from .evaluation import predict_ratings, report_from_predictions
from .model import ModelParams, forward_batch, init_params
from .sampling import build_sample
from .social_graph import build_graph
from .synth import generate
from .trainer import PreparedData, fit, prepare_data

log = logging.getLogger("gdsrec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3
CHECKPOINT, MANIFEST, METRICS, CONFIG = "model.ckpt", "manifest.json", "metrics.tsv", "config.txt"
TRAIN_REPORT, EVAL_REPORT, PREDICTIONS = "train_report.txt", "eval_report.txt", "predictions.tsv"
MANIFEST_FORMAT = 1


class ManifestError(ValueError):
    """A checkpoint does not fit the data or dimensions it is used with."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which is the data-error code here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' config file; --key options override it")
    group = p.add_argument_group("config keys (override the config file)")
    defaults = RunConfig()
    for key in RunConfig.keys():
        flags = [f"--{key}"] + ([f"--{key.replace('_', '-')}"] if "_" in key else [])
        group.add_argument(*flags, dest=key, default=None, metavar="V",
                           help=f"default {getattr(defaults, key)!r}")


def _run_config(args: argparse.Namespace) -> RunConfig:
    base = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in RunConfig.keys() if getattr(args, k, None) is not None}
    return base.updated(overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gdsrec", description="Decentralized social recommendation: train, evaluate, predict.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser = functools.partial(sub.add_parser, parents=[common])

    p = sub.add_parser("stats", help="dataset counts, distributions and relationship-graph histograms")
    _add_config_options(p)
    p.add_argument("--export-graph", metavar="PATH", help="write '<user> <neighbor> <T>' lines")

    p = sub.add_parser("train", help="split, fit with early stopping, write checkpoint and logs to out_dir")
    _add_config_options(p)

    p = sub.add_parser("evaluate", help="score a trained model on its held-out split")
    p.add_argument("--model-dir", required=True, help="directory written by 'train'")
    p.add_argument("--ratings", help="ratings file (default: the one recorded at training time)")
    p.add_argument("--trust", help="trust file (default: the one recorded at training time)")

    p = sub.add_parser("predict", help="predicted rating for one raw (user, item) pair")
    p.add_argument("--model-dir", required=True, help="directory written by 'train'")
    p.add_argument("--user", required=True, help="raw user id")
    p.add_argument("--item", required=True, help="raw item id")

    p = sub.add_parser("synth", help="write planted-community synthetic ratings.txt and trust.txt")
    p.add_argument("--n-users", type=int, required=True)
    p.add_argument("--n-items", type=int, required=True)
    p.add_argument("--n-ratings", type=int, required=True)
    p.add_argument("--n-trust", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--communities", type=int, default=4)
    p.add_argument("--out-dir", required=True)
    return parser


# -- helpers ----------------------------------------------------------------

def _file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load(cfg: RunConfig) -> Dataset:
    return load_dataset(cfg.ratings, cfg.trust or None, (cfg.r_min, cfg.r_max))


def _histogram(values, lo: float, hi: float, width: float) -> list[tuple[float, int]]:
    edges = np.arange(lo, hi + width, width)
    counts, _ = np.histogram(values, bins=edges)
    return list(zip(edges[:-1].tolist(), counts.tolist()))


def _manifest(cfg: RunConfig, data: Dataset, params: ModelParams, best_epoch: int) -> dict:
    return {
        "format": MANIFEST_FORMAT,
        "dims": asdict(params.dims),
        "num_users": data.num_users,
        "num_items": data.num_items,
        "num_ratings": len(data.ratings),
        "scale": [data.r_min, data.r_max],
        "seed": cfg.seed,
        "ratings_sha256": _file_digest(cfg.ratings),
        "best_epoch": best_epoch,
        "config": asdict(cfg),
    }


def _open_model(model_dir: Path, ratings: str | None = None, trust: str | None = None):
    """Reload the run behind ``model_dir``: config, data, derived tables and parameters."""
    try:
        manifest = json.loads((model_dir / MANIFEST).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read {model_dir / MANIFEST}: {exc}") from exc
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"unsupported manifest format {manifest.get('format')!r}")
    overrides = {k: v for k, v in (("ratings", ratings), ("trust", trust)) if v is not None}
    cfg = RunConfig().updated(manifest["config"]).updated(overrides).validate()
    data = _load(cfg)
    expected = {"num_users": data.num_users, "num_items": data.num_items, "num_ratings": len(data.ratings),
                "scale": [data.r_min, data.r_max], "ratings_sha256": _file_digest(cfg.ratings)}
    for key, value in expected.items():
        if manifest.get(key) != value:
            raise ManifestError(f"manifest {key}={manifest.get(key)!r} but the data gives {value!r}")
    dims = cfg.model_dims()
    if manifest.get("dims") != asdict(dims):
        raise ManifestError(f"manifest dims {manifest.get('dims')} disagree with config dims {asdict(dims)}")
    params = ModelParams(dims, data.num_users, data.num_items)
    try:
        params.load(checkpoint.load(model_dir / CHECKPOINT))
    except ValueError as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise ManifestError(f"checkpoint does not match manifest: {exc}") from exc
    prepared = prepare_data(data, cfg.test_fraction, cfg.val_fraction, cfg.seed, cfg.delta)
    return cfg, data, prepared, params


# -- commands ---------------------------------------------------------------

def cmd_stats(cfg: RunConfig, export_graph: str | None = None, out=None) -> dict:
    cfg.validate()
    ratings, users, items = load_ratings(cfg.ratings, (cfg.r_min, cfg.r_max))
    trust, trust_report = load_trust(cfg.trust, users) if cfg.trust else ([], None)
    stats = compute_statistics(ratings)
    data = Dataset(ratings, trust, users, items, cfg.r_min, cfg.r_max)
    tables = build_interaction_tables(ratings, stats, data.levels)
    graph = build_graph(tables, trust, cfg.delta)
    degree = Counter(graph.degree(u) for u in range(data.num_users))
    report = {
        "users": data.num_users,
        "items": data.num_items,
        "ratings": len(ratings),
        "trust_edges": len(trust),
        "global_mean": stats.global_mean,
        "rating_counts": dict(sorted(Counter(r.rating for r in ratings).items())),
        "user_mean_histogram": _histogram(list(stats.user_mean.values()), cfg.r_min, cfg.r_max, 0.5),
        "item_mean_histogram": _histogram(list(stats.item_mean.values()), cfg.r_min, cfg.r_max, 0.5),
        "strength_histogram": dict(sorted(graph.strength_histogram().items())),
        "degree_histogram": dict(sorted(degree.items())),
    }
    if trust_report is not None:
        report["trust_dropped"] = {"self_loops": trust_report.self_loops,
                                   "unknown_users": trust_report.unknown_users,
                                   "duplicates": trust_report.duplicates}
    for key, value in report.items():
        print(f"{key}={value}", file=out)
    if export_graph:
        with open(export_graph, "w", encoding="utf-8") as fh:
            for u, k, t in graph.edges():
                fh.write(f"{users.decode(u)} {users.decode(k)} {t}\n")
    return report


def cmd_train(cfg: RunConfig, out=None) -> Path:
    cfg.validate()
    data = _load(cfg)
    prepared = prepare_data(data, cfg.test_fraction, cfg.val_fraction, cfg.seed, cfg.delta)
    params = init_params(cfg.model_dims(), data.num_users, data.num_items, cfg.seed)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(out_dir / CONFIG)
    with open(out_dir / METRICS, "w", encoding="utf-8") as metrics:
        metrics.write("epoch\ttrain_loss\tval_metric\tseconds\n")

        def on_epoch(epoch, loss, metric, seconds):
            metrics.write(f"{epoch}\t{loss!r}\t{metric!r}\t{seconds:.3f}\n")
            metrics.flush()
            log.info("epoch %d  loss %.5f  val %.5f  (%.1fs)", epoch, loss, metric, seconds)

        params, history = fit(params, prepared, cfg.train_config(), log=on_epoch)
    checkpoint.save(out_dir / CHECKPOINT, params.arrays())
    (out_dir / MANIFEST).write_text(json.dumps(_manifest(cfg, data, params, history.best_epoch), indent=2) + "\n",
                                    encoding="utf-8")
    lines = [f"best_epoch={history.best_epoch}", f"epochs_run={len(history)}"]
    if history.val_metric:
        lines.append(f"best_val_metric={history.val_metric[history.best_epoch - 1]!r}")
    if prepared.test:
        lines += _test_report(cfg, prepared, params).as_lines()
    (out_dir / TRAIN_REPORT).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines), file=out)
    return out_dir


def _test_report(cfg: RunConfig, prepared: PreparedData, params: ModelParams, predictions=None):
    preds = predict_ratings(params, prepared.stats, prepared.tables, prepared.graph, prepared.test)
    if predictions is not None:
        predictions.extend(preds.tolist())
    threshold = cfg.threshold if cfg.task == "ranking" else None
    return report_from_predictions(preds, prepared.test, prepared.stats, cfg.task, threshold)


def cmd_evaluate(model_dir: str | Path, ratings: str | None = None, trust: str | None = None, out=None):
    model_dir = Path(model_dir)
    cfg, data, prepared, params = _open_model(model_dir, ratings, trust)
    if not prepared.test:
        raise ConfigError("the run has no held-out split (test_fraction = 0)")
    preds: list[float] = []
    report = _test_report(cfg, prepared, params, preds)
    with open(model_dir / PREDICTIONS, "w", encoding="utf-8") as fh:
        fh.write("user\titem\trating\tprediction\n")
        for r, p in zip(prepared.test, preds):
            fh.write(f"{data.users.decode(r.user)}\t{data.items.decode(r.item)}\t{r.rating!r}\t{p!r}\n")
    (model_dir / EVAL_REPORT).write_text("\n".join(report.as_lines()) + "\n", encoding="utf-8")
    print("\n".join(report.as_lines()), file=out)
    print(report.summary(), file=out)
    return report


def cmd_predict(model_dir: str | Path, user_raw: str, item_raw: str, out=None) -> float:
    cfg, data, prepared, params = _open_model(Path(model_dir))
    user, item = data.users.encode(user_raw), data.items.encode(item_raw)
    if user is None:
        log.warning("unknown user %r: predicting as a cold user", user_raw)
    if item is None:
        log.warning("unknown item %r: predicting as a cold item", item_raw)
    u = -1 if user is None else user
    v = -1 if item is None else item
    sample = build_sample(prepared.tables, prepared.graph, u, v)
    with dc.no_record():
        r_hat = float(forward_batch(params, prepared.stats, [u], [v], [sample]).value[0])
    print(f"rating={r_hat!r}", file=out)
    if cfg.task == "ranking":
        print(f"probability={float(expit(r_hat))!r}", file=out)
    return r_hat


def cmd_synth(n_users: int, n_items: int, n_ratings: int, n_trust: int, seed: int, out_dir: str | Path,
              communities: int = 4, out=None) -> tuple[Path, Path]:
    paths = generate(n_users, n_items, n_ratings, n_trust, seed=seed, communities=communities).write(out_dir)
    print(f"ratings={paths[0]}\ntrust={paths[1]}", file=out)
    return paths


# -- entry point --------------------------------------------------------------

def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "stats":
            cmd_stats(_run_config(args), args.export_graph)
        elif args.command == "train":
            cmd_train(_run_config(args))
        elif args.command == "evaluate":
            cmd_evaluate(args.model_dir, args.ratings, args.trust)
        elif args.command == "predict":
            cmd_predict(args.model_dir, args.user, args.item)
        elif args.command == "synth":
            cmd_synth(args.n_users, args.n_items, args.n_ratings, args.n_trust, args.seed, args.out_dir,
                      args.communities)
    except (ConfigError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TapeError, FloatingPointError, AssertionError) as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:  # e.g. generator arguments or a too-small data set to split
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
