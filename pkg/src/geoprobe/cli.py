"""Command line entry point: ``geoprobe <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 when every
requested cell (or the single requested sample) is infeasible.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .evaluation import UndefinedMetricError, mean_average_precision
from .featurize import FeaturizerSpec, featurize_corpus, load_features, save_features
from .geodata import (
    DataError,
    SpatialSplit,
    format_tile_id,
    label_tiles,
    load_grid,
    load_homes,
    load_labeled_tiles,
    load_tiles,
    parse_tile_id,
    save_labeled_tiles,
    spatial_split,
)
from .model import RidgeConfig, SingularSystemError, load_model, predict_scores, save_model, train_ridge_ova
from .report import emit_report, load_result
from .runner import CellError, ConfigError, ExperimentConfig, run_learning_curve
from .sampler import InfeasibleSample, SamplePlan, draw
from .synthgen import SynthConfig, gen_corpus, write_corpus

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE = 0, 2, 3, 4

logger = logging.getLogger("geoprobe")


class _Infeasible(Exception):
    pass


def _read_json(path: str | None, what: str) -> dict:
    if not path:
        raise ConfigError(f"{what} needs --config FILE")
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1))
    logger.info("wrote %s", path)


def _population(args) -> list | SpatialSplit:
    """Labeled tiles, or the split over them when ``--split`` is given."""
    tiles = load_labeled_tiles(args.labels)
    if getattr(args, "split", None):
        return SpatialSplit.from_json(json.loads(Path(args.split).read_text()), tiles)
    return tiles


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------


def cmd_synth(args) -> int:
    d = _read_json(args.config, "synth")
    d = d.get("corpus", {}).get("synth", d)
    cfg = SynthConfig.from_dict(d)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    corpus = gen_corpus(cfg, n_workers=args.workers or 1)
    write_corpus(corpus, _out(args))
    logger.info("synthesized %d homes on %d tiles", len(corpus.homes), len(corpus.tiles))
    return EXIT_OK


def cmd_ingest(args) -> int:
    homes = load_homes(args.homes)
    grid = load_grid(args.tiles)
    tiles, th = label_tiles(homes, grid)
    path = _out(args) / "labels.json"
    save_labeled_tiles(path, tiles, th)
    counts = np.bincount([t.label for t in tiles], minlength=3).tolist()
    logger.info("labeled %d tiles, class counts %s", len(tiles), counts)
    return EXIT_OK


def cmd_split(args) -> int:
    tiles = load_labeled_tiles(args.labels)
    split = spatial_split(tiles, args.test_fraction, args.buffer_m, args.seed or 0)
    _write_json(_out(args) / "split.json", split.to_json())
    return EXIT_OK


def cmd_sample(args) -> int:
    src = _population(args)
    pop = src.train if isinstance(src, SpatialSplit) else src
    plan = SamplePlan(args.scheme, args.n, args.seed or 0, args.k, args.boundary, args.side)
    try:
        result = draw(pop, plan)
    except InfeasibleSample as exc:
        raise _Infeasible(f"{exc.reason}: {exc}") from exc
    _write_json(_out(args) / "sample.json", result.to_json())
    return EXIT_OK


def _featurizer_spec(args) -> FeaturizerSpec:
    d = _read_json(args.config, "featurize") if args.config else {}
    d = {**d, "kind": args.featurizer}
    if args.external_path:
        d["external_path"] = args.external_path
    try:
        return FeaturizerSpec.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad featurizer config: {exc}") from exc


def cmd_featurize(args) -> int:
    spec = _featurizer_spec(args)
    images = []
    if spec.kind != "external":
        if not args.tiles:
            raise ConfigError("featurize needs --tiles DIR for native featurizers")
        ids = None
        if args.labels:
            ids = [t.tile_id for t in load_labeled_tiles(args.labels)]
        _, images = load_tiles(args.tiles, ids)
    fm = featurize_corpus(images, spec, n_workers=args.workers or 1, cache_dir=args.cache)
    path = _out(args) / f"features_{spec.label}.fmat"
    save_features(path, fm)
    logger.info("wrote %s (%d x %d)", path, fm.n, fm.d)
    return EXIT_OK


def cmd_train(args) -> int:
    fm = load_features(args.features)
    src = _population(args)
    pool = src.train if isinstance(src, SpatialSplit) else src
    labels = {t.tile_id: t.label for t in pool}
    if args.sample:
        ids = [parse_tile_id(i) for i in json.loads(Path(args.sample).read_text())["tile_ids"]]
    else:
        ids = sorted(labels)
    missing = [i for i in ids if i not in labels]
    if missing:
        raise DataError(f"{len(missing)} training ids have no label, e.g. {format_tile_id(missing[0])}")
    cfg = RidgeConfig(lam=args.lam, select=args.select, seed=args.seed or 0)
    model = train_ridge_ova(fm.rows_for(ids), [labels[i] for i in ids], cfg)
    save_model(_out(args) / "model.json", model)
    logger.info("trained on %d tiles, lambda=%g", len(ids), model.trained_lambda)
    return EXIT_OK


def cmd_eval(args) -> int:
    fm = load_features(args.features)
    model = load_model(args.model)
    src = _population(args)
    test = src.test if isinstance(src, SpatialSplit) else src
    ids = [t.tile_id for t in test]
    scores = predict_scores(fm.rows_for(ids), model)
    rep = mean_average_precision(scores, [t.label for t in test], row_ids=ids, featurizer=fm.featurizer_tag)
    _write_json(_out(args) / "eval.json", rep.to_dict())
    print(f"map={rep.map!r} ap={rep.per_class_ap}")
    return EXIT_OK


def _experiment(args) -> ExperimentConfig:
    d = _read_json(args.config, "curve")
    if args.seed is not None:
        d["seeds"] = [args.seed]
    if args.workers:
        d["workers"] = args.workers
    return ExperimentConfig.from_dict(d)


def cmd_curve(args) -> int:
    cfg = _experiment(args)
    result = run_learning_curve(cfg)
    out = Path(args.out or cfg.output_dir or ".")
    emit_report(result, out)
    if not result.ok_rows():
        raise _Infeasible("every cell of the grid is infeasible")
    return EXIT_OK


def cmd_report(args) -> int:
    result = load_result(args.results)
    emit_report(result, _out(args))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "split": cmd_split,
    "sample": cmd_sample,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "eval": cmd_eval,
    "curve": cmd_curve,
    "report": cmd_report,
}


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    # accepted before or after the subcommand; the subparser copy must not
    # clobber a value given up front, hence SUPPRESS there
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("--config", help="JSON configuration file", **({"default": None} | kw))
    p.add_argument("--seed", type=int, **({"default": None} | kw))
    p.add_argument("--workers", type=int, **({"default": None} | kw))
    p.add_argument("--out", help="output directory", **({"default": None} | kw))
    p.add_argument("--verbose", "-v", action="store_true", **({"default": False} | kw))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoprobe", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    p = {name: sub.add_parser(name) for name in COMMANDS}
    for sp in p.values():
        _add_globals(sp, suppress=True)

    p["ingest"].add_argument("--homes", required=True)
    p["ingest"].add_argument("--tiles", required=True)

    p["split"].add_argument("--labels", required=True)
    p["split"].add_argument("--test-fraction", type=float, default=0.2)
    p["split"].add_argument("--buffer-m", type=float, default=100.0)

    for name in ("sample", "train", "eval"):
        p[name].add_argument("--labels", required=True)
        p[name].add_argument("--split", help="split.json; restricts to its train (or test) side")
    p["sample"].add_argument("--scheme", choices=["uar", "cluster", "lat", "lon"], required=True)
    p["sample"].add_argument("--n", type=int, required=True)
    p["sample"].add_argument("--k", type=int)
    p["sample"].add_argument("--boundary", type=float)
    p["sample"].add_argument("--side", choices=["low", "high"], default="low")

    p["featurize"].add_argument("--featurizer", choices=["gist", "randconv", "external"], required=True)
    p["featurize"].add_argument("--tiles")
    p["featurize"].add_argument("--labels", help="only featurize these labeled tiles")
    p["featurize"].add_argument("--cache")
    p["featurize"].add_argument("--external-path")

    for name in ("train", "eval"):
        p[name].add_argument("--features", required=True)
    p["train"].add_argument("--sample", help="sample.json with the training ids")
    p["train"].add_argument("--lambda", dest="lam", type=float, default=1.0)
    p["train"].add_argument("--select", action="store_true", help="pick lambda by validation MAP")
    p["eval"].add_argument("--model", required=True)

    p["report"].add_argument("--results", required=True, help="results.json from a curve run")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _Infeasible as exc:
        print(f"geoprobe: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"geoprobe: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, UndefinedMetricError, SingularSystemError, OSError) as exc:
        print(f"geoprobe: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CellError as exc:
        print(f"geoprobe: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"geoprobe: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
