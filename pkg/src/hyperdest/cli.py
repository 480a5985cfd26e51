"""Command-line entry point: ``hyperdest <command> [options]``.

Every option can also come from a ``key = value`` file given with
``--config`` or from an environment variable ``HYPERDEST_<KEY>``
(upper case, dashes as underscores).  Precedence, lowest first:
built-in default, config file, environment, command-line flag.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from . import corpus as corpus_io
from .checkpoint import Checkpoint, CheckpointError, save_checkpoint
from .encode import TIMESCALES, ReferenceSamplingError, ReferenceSet, sample_references
from .evaluation import compare, evaluate
from .export import export_embedding_colors
from .geo import PORTO_BBOX, BoundingBox
from .ingest import MalformedRow, read_trajectories, write_reject_log
from .model import ModelSpec, canonical_variant
from .preprocess import PreprocessConfig, run_pipeline
from .synth import SynthConfig, generate
from .train import NumericalError, TrainConfig, split_validation, train

log = logging.getLogger("hyperdest")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
ENV_PREFIX = "HYPERDEST_"


class UsageError(Exception):
    pass


def _timescales(text: str) -> tuple:
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [n for n in names if n not in TIMESCALES]
    if bad:
        raise ValueError(f"unknown timescale(s) {bad}; choose from {','.join(TIMESCALES)}")
    return names


def _variant(text: str) -> str:
    return canonical_variant(text)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError(f"must be >= 1, got {v}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise ValueError(f"must be > 0, got {v}")
    return v


# (key, converter, default, help); key doubles as the --flag name with dashes
Option = tuple[str, Callable[[str], Any], Any, str]

PREPROCESS_OPTIONS: list[Option] = [
    ("output", str, "corpus.jsonl", "processed corpus (JSON lines)"),
    ("report", str, "", "write the filter report as JSON here (default: stdout)"),
    ("reject_log", str, "", "write malformed rows as 'row<TAB>reason' here"),
    ("min_duration_s", float, 120.0, "drop trips lasting this long or less"),
    ("max_duration_s", float, 7200.0, "drop trips lasting this long or more"),
    ("max_speed_kmh", float, 240.0, "speed above which points are median-filtered"),
    ("tau_max", float, 3.5, "keep trips with roundtrip factor strictly below this"),
    ("bbox", BoundingBox.parse, PORTO_BBOX, "min_lat,max_lat,min_lon,max_lon"),
    ("interval_s", float, 15.0, "GPS sampling interval, seconds"),
]
SAMPLE_OPTIONS: list[Option] = [
    ("output", str, "refs.csv", "reference points CSV (index,lat,lon)"),
    ("n", _positive_int, 4096, "number of reference points"),
    ("min_sep_km", float, 0.1, "minimum pairwise separation, km"),
    ("seed", int, 0, "random seed"),
]
TRAIN_OPTIONS: list[Option] = [
    ("refs", str, "refs.csv", "reference points CSV"),
    ("output", str, "model.ckpt", "checkpoint file"),
    ("loss_log", str, "", "per-step loss CSV (epoch,step,loss_km)"),
    ("val_output", str, "", "write the held-out validation trajectories here"),
    ("holdout", int, -1, "validation size; -1 = 10,000 or 10%, 0 = train on everything"),
    ("variant", _variant, "post_lstm", "pre-lstm, hyper-lstm, post-lstm, concat or naive"),
    ("timescales", _timescales, TIMESCALES, "comma-separated subset of day,week,year"),
    ("epochs", _positive_int, 10, "passes over the training set"),
    ("batch_size", _positive_int, 128, "trajectories per step"),
    ("lr", _positive_float, 1e-3, "Adam learning rate"),
    ("clip_norm", _positive_float, 1.0, "global gradient-norm clip"),
    ("seed", int, 0, "random seed"),
    ("customer_min_count", int, 50, "rarer customer ids share the unknown embedding"),
    ("embed_dim", _positive_int, 16, "reference embedding size"),
    ("hidden", _positive_int, 64, "LSTM state size"),
    ("penultimate", _positive_int, 128, "width of the layer before the output softmax"),
]
EVAL_OPTIONS: list[Option] = [
    ("refs", str, "refs.csv", "reference points CSV used for training"),
    ("output", str, "", "write the report CSV here (default: stdout)"),
    ("label", str, "", "model name in the report"),
    ("table", bool, False, "also print the comparison table"),
]
EXPORT_OPTIONS: list[Option] = [
    ("refs", str, "refs.csv", "reference points CSV used for training"),
    ("output", str, "embeddings.csv", "colour CSV (lat,lon,r,g,b)"),
]
SYNTH_OPTIONS: list[Option] = [
    ("output", str, "synth.jsonl", "generated corpus"),
    ("n", int, 1000, "number of trajectories"),
    ("n_hotspots", _positive_int, 8, "number of destinations"),
    ("period_h", _positive_float, 24.0, "period of the destination preference, hours"),
    ("concentration", float, 1.0, "sharpness of the time preference"),
    ("sigma_km", float, 0.02, "GPS jitter, km"),
    ("n_drivers", _positive_int, 20, "number of synthetic driver ids"),
    ("seed", int, 0, "random seed"),
]


def read_config_file(path: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def resolve(options: Sequence[Option], flags: dict, config_path: Optional[str],
            environ=os.environ) -> dict:
    """Merge defaults, config file, environment and flags (later wins)."""
    table = {key: (conv, default) for key, conv, default, _ in options}
    file_values = read_config_file(config_path) if config_path else {}
    unknown = set(file_values) - set(table)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    out = {}
    for key, (conv, default) in table.items():
        raw = None
        if key in file_values:
            raw = file_values[key]
        env = environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            raw = env
        if key in flags:
            value = flags[key]
        elif raw is not None:
            value = _convert(key, conv, raw)
        else:
            value = default
        out[key] = value
    return out


def _convert(key: str, conv, raw: str):
    if conv is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off", ""):
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return conv(raw)
    except ValueError as exc:
        raise UsageError(f"{key}: {exc}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_options(p: argparse.ArgumentParser, options: Sequence[Option]) -> None:
    for key, conv, default, help_text in options:
        flag = "--" + key.replace("_", "-")
        shown = ",".join(default) if isinstance(default, tuple) else default
        if conv is bool:
            p.add_argument(flag, dest=key, action="store_true", default=argparse.SUPPRESS,
                           help=help_text.replace("%", "%%"))
            continue

        def typed(text, conv=conv, flag=flag):
            try:
                return conv(text)
            except ValueError as exc:
                raise argparse.ArgumentTypeError(f"{exc}") from None

        typed.__name__ = getattr(conv, "__name__", "value")
        p.add_argument(flag, dest=key, type=typed, default=argparse.SUPPRESS,
                       help=f"{help_text} (default: {shown})".replace("%", "%%"))
    p.add_argument("--config", help="key = value file with option defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hyperdest", description="Taxi destination prediction with "
                     "metadata-conditioned hypernetworks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", help="clean a Porto-format CSV into a corpus")
    p.add_argument("input", help="Porto-format CSV")
    _add_options(p, PREPROCESS_OPTIONS)

    p = sub.add_parser("sample-refs", help="sample reference points from a corpus")
    p.add_argument("corpus", help="corpus (JSON lines)")
    _add_options(p, SAMPLE_OPTIONS)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("corpus", help="training corpus (JSON lines)")
    _add_options(p, TRAIN_OPTIONS)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("corpus", help="validation corpus (JSON lines)")
    _add_options(p, EVAL_OPTIONS)

    p = sub.add_parser("export-embeddings", help="colour-coded reference embeddings")
    p.add_argument("checkpoint")
    _add_options(p, EXPORT_OPTIONS)

    p = sub.add_parser("synth", help="generate a synthetic time-dependent corpus")
    _add_options(p, SYNTH_OPTIONS)
    return parser


OPTIONS = {
    "preprocess": PREPROCESS_OPTIONS, "sample-refs": SAMPLE_OPTIONS, "train": TRAIN_OPTIONS,
    "eval": EVAL_OPTIONS, "export-embeddings": EXPORT_OPTIONS, "synth": SYNTH_OPTIONS,
}


def _jsonable(cfg: dict) -> dict:
    return {k: (str(v) if isinstance(v, BoundingBox) else list(v) if isinstance(v, tuple) else v)
            for k, v in cfg.items()}


def cmd_preprocess(args, cfg) -> int:
    pcfg = PreprocessConfig(
        min_duration_s=cfg["min_duration_s"], max_duration_s=cfg["max_duration_s"],
        max_speed_kmh=cfg["max_speed_kmh"], tau_max=cfg["tau_max"], bbox=cfg["bbox"],
        interval_s=cfg["interval_s"],
    )
    rejects: list = []
    with open(args.input, newline="") as fh:
        kept, report = run_pipeline(read_trajectories(fh, rejects), pcfg)
    corpus_io.save_corpus(kept, cfg["output"], header={"producer": "preprocess",
                                                       "config": _jsonable(cfg)})
    text = json.dumps({**report.as_dict(), "n_rejected_rows": len(rejects)}, indent=2)
    if cfg["report"]:
        Path(cfg["report"]).write_text(text + "\n")
    else:
        print(text)
    if cfg["reject_log"]:
        with open(cfg["reject_log"], "w") as fh:
            write_reject_log(rejects, fh)
    return EXIT_OK


def cmd_sample_refs(args, cfg) -> int:
    trajs = corpus_io.load_corpus(args.corpus)
    try:
        refs = sample_references(trajs, cfg["n"], cfg["min_sep_km"], cfg["seed"])
    except ReferenceSamplingError as exc:
        print(f"hyperdest: {exc}", file=sys.stderr)
        return EXIT_DATA
    refs.save_csv(cfg["output"])
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    trajs = corpus_io.load_corpus(args.corpus)
    refs = ReferenceSet.load_csv(cfg["refs"])
    tcfg = TrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"],
                       clip_norm=cfg["clip_norm"], seed=cfg["seed"], variant=cfg["variant"],
                       timescales=cfg["timescales"], customer_min_count=cfg["customer_min_count"])
    spec = ModelSpec(variant=cfg["variant"], n_ref=len(refs), embed_dim=cfg["embed_dim"],
                     hidden=cfg["hidden"], penultimate=cfg["penultimate"],
                     timescales=cfg["timescales"])
    holdout = cfg["holdout"]
    if holdout != 0:
        trajs, val = split_validation(trajs, cfg["seed"], None if holdout < 0 else holdout)
        if cfg["val_output"]:
            corpus_io.save_corpus(val, cfg["val_output"], header={"producer": "train-holdout"})
    result = train(trajs, refs, tcfg, spec)
    save_checkpoint(cfg["output"], result.model, result.optimizer, _jsonable(cfg))
    if cfg["loss_log"]:
        result.write_loss_log(cfg["loss_log"])
    for epoch, loss in enumerate(result.epoch_losses, start=1):
        log.info("epoch %d mean loss %.4f km", epoch, loss)
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    refs = ReferenceSet.load_csv(cfg["refs"])
    model = Checkpoint.load(args.checkpoint).to_model(refs)
    report = evaluate(model, corpus_io.load_corpus(args.corpus),
                      label=cfg["label"] or Path(args.checkpoint).stem)
    if cfg["output"]:
        Path(cfg["output"]).write_text(report.to_csv())
    else:
        sys.stdout.write(report.to_csv())
    if cfg["table"]:
        print(compare([report]))
    return EXIT_OK


def cmd_export(args, cfg) -> int:
    refs = ReferenceSet.load_csv(cfg["refs"])
    model = Checkpoint.load(args.checkpoint).to_model(refs)
    export_embedding_colors(model.E_ref.data, refs, cfg["output"])
    return EXIT_OK


def cmd_synth(args, cfg) -> int:
    scfg = SynthConfig(n_trajectories=cfg["n"], n_hotspots=cfg["n_hotspots"],
                       period_h=cfg["period_h"], concentration=cfg["concentration"],
                       sigma_km=cfg["sigma_km"], n_drivers=cfg["n_drivers"], seed=cfg["seed"])
    corpus_io.save_corpus(generate(scfg), cfg["output"],
                          header={"producer": "synth", "config": scfg.to_dict()})
    return EXIT_OK


COMMANDS = {
    "preprocess": cmd_preprocess, "sample-refs": cmd_sample_refs, "train": cmd_train,
    "eval": cmd_eval, "export-embeddings": cmd_export, "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    options = OPTIONS[args.command]
    flags = {key: getattr(args, key) for key, *_ in options if hasattr(args, key)}
    try:
        cfg = resolve(options, flags, args.config)
    except (UsageError, OSError) as exc:
        print(f"hyperdest: {exc}", file=sys.stderr)
        return EXIT_USAGE
    log.info("resolved config for %s: %s", args.command, json.dumps(_jsonable(cfg), sort_keys=True))
    try:
        return COMMANDS[args.command](args, cfg)
    except NumericalError as exc:
        print(f"hyperdest: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, MalformedRow, CheckpointError) as exc:
        print(f"hyperdest: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
