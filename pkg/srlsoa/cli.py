#!/usr/bin/env python3
#
#   Copyright 2021 MultisampledNight
#
#   Licensed under the Apache License, Version 2.0 (the "License");
#   you may not use this file except in compliance with the License.
#   You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS,
#   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   See the License for the specific language governing permissions and
#   limitations under the License.
"""
The srlsoa command line.

    srlsoa convert  --data cube.csv --dims 145x145x220 --out cube.hsic
    srlsoa train    --data cube.hsic --labels gt.hsil --dataset indian_pines
    srlsoa rank     --data cube.hsic --params out/params.soap --chunk 16
    srlsoa evaluate --data cube.hsic --labels gt.hsil --method srl_soa,random
                    --k 5-50:5 --seeds 0-9
    srlsoa gradcheck --q 5 --fs 7

Every option can also come from a key=value file given with --config, the
command line wins on conflicts. Exit codes: 0 success, 1 failed check, 2 usage
error, 3 data error.
"""
import argparse
import dataclasses
import datetime
import os
import sys
from typing import List, Optional, Tuple

import numpy as np

from . import dogelog, evaluation, operational
from ._models import (BandList, BandRanking, ExperimentSettings,
    OperationalLayerParams, PcaModel, TrainConfig)
from .baselines import encode_pca
from .data import find_preset
from .errors import (BadConfig, CheckFailure, DimMismatch, IoFailure,
    MissingFile, SrlSoaError)
from .helpers import (STREAM_GRADCHECK, atomic_write, make_rng, parse_bool,
    parse_dims, parse_number_list, read_config_file)
from .hsi_data import (cube_from_csv, cube_from_raw, flatten_pixels,
    labels_from_csv, load_cube, load_labels, normalize, remove_bands,
    sample_split, save_cube, save_labels, unlabeled_pixels)
from .platform_info import resolve_threads
from .trainer import history_csv, rank_bands, ranking_csv, train


GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_STEP = 1e-5
GRADCHECK_BANDS = 16

# the grid random gradcheck trials are drawn from
GRADCHECK_ORDERS = (1, 3, 5)
GRADCHECK_FILTER_SIZES = (3, 5, 7)
GRADCHECK_BATCH_SIZES = (1, 2, 5)

PARAMS_FILE = "params.soap"
LOSS_FILE = "loss.csv"
RANKING_FILE = "ranking.csv"
SWEEP_FILE = "sweep.csv"
RUNS_FILE = "runs.jsonl"


@dataclasses.dataclass(frozen=True)
class CliConfig:
    """
    Everything a command needs, merged from the defaults, the dataset preset,
    the --config file and the command line, in increasing priority.
    """
    command: str
    data: Optional[str] = None
    labels: Optional[str] = None
    dataset: Optional[str] = None
    out: Optional[str] = None
    params: Optional[str] = None
    dims: Optional[Tuple[int, ...]] = None
    format: Optional[str] = None
    seed: int = 0
    lambda_: float = 0.01
    q: int = 3
    fs: int = 11
    lr: float = 1e-3
    epochs: int = 50
    batch: int = 5
    methods: Tuple[str, ...] = ("srl_soa",)
    k_list: Tuple[int, ...] = (25,)
    seeds: Tuple[int, ...] = (0,)
    threads: int = 1
    chunk: int = 64
    include_unlabeled: bool = False
    train_fraction: float = 0.05
    drop_bands: Tuple[int, ...] = ()
    trials: int = 1
    keep_models: bool = False
    explicit: frozenset = frozenset()

    def train_config(self) -> TrainConfig:
        return TrainConfig(
                lambda_=self.lambda_,
                order_q=self.q,
                filter_size=self.fs,
                learning_rate=self.lr,
                epochs=self.epochs,
                batch_size=self.batch,
                seed=self.seed,
            ).validate()

    def settings(self) -> ExperimentSettings:
        return ExperimentSettings(
                drop_bands=self.drop_bands,
                train_fraction=self.train_fraction,
                include_unlabeled_in_fit=self.include_unlabeled,
                chunk=self.chunk,
                threads=self.threads,
            ).validate()

    def output_dir(self) -> str:
        if self.out is not None:
            return self.out
        stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
        return os.path.join("out", stamp)

    def validate(self) -> "CliConfig":
        needs_data = {"convert", "train", "rank", "evaluate"}
        if self.command in needs_data and self.data is None:
            raise BadConfig(f"{self.command} needs --data")
        if self.command == "evaluate" and self.labels is None:
            raise BadConfig("evaluate needs --labels")
        if self.command == "rank" and self.params is None:
            raise BadConfig("rank needs --params")
        if self.command == "convert":
            if self.out is None:
                raise BadConfig("convert needs --out")
            if self.dims is None or len(self.dims) != 3:
                raise BadConfig("convert needs --dims HxWxB")
        if self.format not in (None, "csv", "raw"):
            raise BadConfig(f"unknown format '{self.format}', use csv or raw")
        if self.trials < 1:
            raise BadConfig(f"trials must be positive, got {self.trials}")
        for method in self.methods:
            evaluation.parse_method(method)
        if self.command in ("train", "rank", "evaluate"):
            self.train_config()
            self.settings()
        return self


# how every option is read from a config file or the command line
_CONVERTERS = {
    "data": str,
    "labels": str,
    "dataset": str,
    "out": str,
    "params": str,
    "dims": parse_dims,
    "format": lambda text: str(text).strip().casefold(),
    "seed": int,
    "lambda": float,
    "q": int,
    "fs": int,
    "lr": float,
    "epochs": int,
    "batch": int,
    "method": lambda text: tuple(part.strip() for part in str(text).split(",")
            if part.strip()),
    "k": lambda text: tuple(parse_number_list(text)),
    "seeds": lambda text: tuple(parse_number_list(text)),
    "threads": int,
    "chunk": int,
    "include_unlabeled": parse_bool,
    "trials": int,
    "keep_models": parse_bool,
}

# option name -> CliConfig field, where they differ
_FIELDS = {
    "lambda": "lambda_",
    "method": "methods",
    "k": "k_list",
}


def _convert(key: str, value):
    try:
        return _CONVERTERS[key](value)
    except (ValueError, TypeError):
        raise BadConfig(f"can't read '{value}' as value of --{key}") from None


def build_config(args: argparse.Namespace) -> CliConfig:
    """
    Merges defaults, dataset preset, config file and command line into one
    CliConfig and validates it.
    """
    values = {}

    if args.config is not None:
        for key, raw in read_config_file(args.config).items():
            if key not in _CONVERTERS:
                raise BadConfig(f"{args.config}: unknown option '{key}'")
            values[key] = _convert(key, raw)

    for key in _CONVERTERS:
        given = getattr(args, key, None)
        if given is not None:
            values[key] = _convert(key, given)

    # file values count as given, only the defaults don't
    explicit = set(values)

    fields = {"command": args.command}
    dataset = values.get("dataset")
    if dataset is not None:
        preset = find_preset(dataset)
        fields.update(
                drop_bands=tuple(preset.drop_bands),
                train_fraction=preset.train_fraction,
                include_unlabeled=preset.include_unlabeled_in_fit,
                k_list=(preset.table_k_bands,),
            )

    for key, value in values.items():
        fields[_FIELDS.get(key, key)] = value

    if "seeds" not in values:
        fields["seeds"] = (fields.get("seed", 0),)
    fields["threads"] = resolve_threads(values.get("threads"))
    fields["explicit"] = frozenset(explicit)

    return CliConfig(**fields).validate()


def _make_dirs(path: str):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"can't create {path}: {exc}") from exc


def _fit_matrix(config: CliConfig) -> np.ndarray:
    """
    The normalized pixels the encoder is fitted on: the training split (plus
    unannotated pixels if configured) if there are labels, all pixels if not.
    """
    cube = load_cube(config.data)
    cube = normalize(cube)
    if config.drop_bands:
        cube = remove_bands(cube, BandList(config.drop_bands, cube.bands))
    X = flatten_pixels(cube)
    if config.labels is None:
        return X

    labels = load_labels(config.labels)
    if not labels.matches(cube):
        raise DimMismatch(
            f"{config.labels} is {labels.height} x {labels.width}, "
            f"{config.data} is {cube.height} x {cube.width}")
    rows = sample_split(labels, config.train_fraction, config.seed).train
    if config.include_unlabeled:
        rows = np.concatenate([rows, unlabeled_pixels(labels)])
    return X[rows]


def cmd_convert(config: CliConfig) -> int:
    """
    Converts a CSV (one spectrum per row) or headerless float32 file into
    HSIC. Labels given with --labels (CSV) are written next to it as HSIL.
    """
    height, width, bands = config.dims
    form = config.format
    if form is None:
        form = "csv" if config.data.casefold().endswith(".csv") else "raw"

    if form == "csv":
        cube = cube_from_csv(config.data, height, width, bands)
    else:
        cube = cube_from_raw(config.data, height, width, bands)
    save_cube(cube, config.out)
    dogelog.info(f"Wrote {cube} to {config.out}")

    if config.labels is not None:
        labels = labels_from_csv(config.labels, height, width)
        target = os.path.splitext(config.out)[0] + ".hsil"
        save_labels(labels, target)
        dogelog.info(f"Wrote {labels.class_count} classes to {target}")
    return 0


def cmd_train(config: CliConfig) -> int:
    """Trains, ranks, and writes params, loss history and ranking."""
    X_fit = _fit_matrix(config)
    train_config = config.train_config()

    params, history = train(X_fit, train_config, config.threads)
    ranking = rank_bands(params, X_fit, config.chunk, config.threads)

    out = config.output_dir()
    _make_dirs(out)
    atomic_write(os.path.join(out, PARAMS_FILE),
            operational.encode_params(params))
    atomic_write(os.path.join(out, LOSS_FILE), history_csv(history))
    atomic_write(os.path.join(out, RANKING_FILE), ranking_csv(ranking))

    dogelog.info(f"Top bands: {ranking.order[:10].tolist()}\n"
            f"Wrote {PARAMS_FILE}, {LOSS_FILE} and {RANKING_FILE} to {out}")
    return 0


def cmd_rank(config: CliConfig) -> int:
    """Ranks bands with saved parameters, without training again."""
    try:
        with open(config.params, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError:
        raise MissingFile(f"file not found: {config.params}") from None
    params = operational.decode_params(raw, config.params)

    X_fit = _fit_matrix(config)
    ranking = rank_bands(params, X_fit, config.chunk, config.threads)

    out = config.output_dir()
    _make_dirs(out)
    atomic_write(os.path.join(out, RANKING_FILE), ranking_csv(ranking))
    dogelog.info(f"Wrote {RANKING_FILE} to {out}")
    return 0


def cmd_evaluate(config: CliConfig) -> int:
    """Runs the sweep and writes the sweep CSV and the per-run log."""
    cube = load_cube(config.data)
    labels = load_labels(config.labels)

    cache = {}
    frame, reports = evaluation.sweep(cube, labels, config.methods,
            config.k_list, config.seeds, config.train_config(),
            config.settings(), cache)

    out = config.output_dir()
    _make_dirs(out)
    evaluation.write_results(frame, reports, os.path.join(out, SWEEP_FILE),
            os.path.join(out, RUNS_FILE))
    dogelog.info(f"Wrote {SWEEP_FILE} and {RUNS_FILE} to {out}")

    if config.keep_models:
        names = _write_models(cache, out)
        dogelog.info(f"Wrote {len(names)} model files to {out}")
    return 0


def _write_models(cache: dict, out: str) -> List[str]:
    """
    Writes what evaluate cached per (method, seed): encoder parameters as
    SOAP, PCA models as PCAM and rankings as CSV. Returns the file names.
    """
    names = []
    for key, model in cache.items():
        stem = f"{key[0]}-seed{key[1]}"
        if isinstance(model, OperationalLayerParams):
            name, data = stem + ".soap", operational.encode_params(model)
        elif isinstance(model, PcaModel):
            name, data = stem + ".pcam", encode_pca(model)
        elif isinstance(model, BandRanking):
            name, data = stem + "-ranking.csv", ranking_csv(model)
        else:
            continue
        atomic_write(os.path.join(out, name), data)
        names.append(name)
    return sorted(names)


def _gradcheck_trials(config: CliConfig) -> List[Tuple[int, int, int, int]]:
    """
    (bands, Q, f_s, m) per trial. A single trial uses the configured values,
    more trials draw the ones not given explicitly from the check grid.
    """
    q = config.q if "q" in config.explicit else 3
    fs = config.fs if "fs" in config.explicit else 5
    batch = config.batch if "batch" in config.explicit else 2
    if config.trials == 1:
        return [(GRADCHECK_BANDS, q, fs, batch)]

    rng = make_rng(config.seed, STREAM_GRADCHECK)
    trials = []
    for _ in range(config.trials):
        trial_q = q if "q" in config.explicit \
            else int(rng.choice(GRADCHECK_ORDERS))
        trial_fs = fs if "fs" in config.explicit \
            else int(rng.choice(GRADCHECK_FILTER_SIZES))
        trial_batch = batch if "batch" in config.explicit \
            else int(rng.choice(GRADCHECK_BATCH_SIZES))
        bands = int(rng.integers(max(trial_fs, 2), GRADCHECK_BANDS + 1))
        trials.append((bands, trial_q, trial_fs, trial_batch))
    return trials


def cmd_gradcheck(config: CliConfig) -> int:
    """
    Compares analytic gradients with finite differences on random instances
    and prints one machine-readable line.
    """
    worst = 0.0
    for trial, (bands, q, fs, batch) in enumerate(_gradcheck_trials(config)):
        params, X = operational.gradcheck_instance(bands, q, fs, batch,
                config.seed + trial)
        error = operational.grad_check(params, X, config.lambda_,
                GRADCHECK_STEP)
        dogelog.debug(f"trial {trial}: N = {bands}, Q = {q}, f_s = {fs}, "
                f"m = {batch}: {error:.3e}")
        worst = max(worst, error)

    passed = worst <= GRADCHECK_TOLERANCE
    print(f"gradcheck max_rel_err={worst:.3e} {'PASS' if passed else 'FAIL'}")
    if not passed:
        raise CheckFailure(f"relative gradient error {worst:.3e} exceeds "
                f"{GRADCHECK_TOLERANCE:g}")
    return 0


COMMANDS = {
    "convert": cmd_convert,
    "train": cmd_train,
    "rank": cmd_rank,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    # every option exists on every subcommand, so config files can be shared
    common = argparse.ArgumentParser(add_help=False)
    logging_group = common.add_argument_group("logging")
    logging_group.add_argument("--verbose", action="store_true",
            help="also log debug messages, like per-epoch losses")
    logging_group.add_argument("--log-file", metavar="PATH",
            help="log extensively into this file instead of the terminal")
    logging_group.add_argument("--no-color", action="store_true",
            help="don't use terminal colors")

    inputs = common.add_argument_group("input and output")
    inputs.add_argument("--config", metavar="PATH",
            help="key=value file with defaults for every option")
    inputs.add_argument("--data", metavar="PATH", help="cube (HSIC, or "
            "CSV/raw for convert)")
    inputs.add_argument("--labels", metavar="PATH", help="label map (HSIL, "
            "or CSV for convert)")
    inputs.add_argument("--dataset", help="preset, e.g. indian_pines or "
            "salinas_a: water bands, training fraction and so on")
    inputs.add_argument("--out", metavar="PATH", help="output directory "
            "(output file for convert), default ./out/<timestamp>")
    inputs.add_argument("--params", metavar="PATH",
            help="saved encoder parameters for rank")
    inputs.add_argument("--dims", help="HxWxB for convert")
    inputs.add_argument("--format", help="csv or raw for convert, guessed "
            "from the file extension by default")

    training = common.add_argument_group("training")
    training.add_argument("--seed", help="seed of split, init and shuffling")
    training.add_argument("--lambda", dest="lambda", help="sparsity weight")
    training.add_argument("--q", help="polynomial order Q")
    training.add_argument("--fs", help="filter size, odd")
    training.add_argument("--lr", help="ADAM learning rate")
    training.add_argument("--epochs")
    training.add_argument("--batch", help="batch size")
    training.add_argument("--threads",
            help="worker threads, 0 for one per physical core")
    training.add_argument("--chunk", help="samples per ranking chunk")
    training.add_argument("--include-unlabeled", dest="include_unlabeled",
            nargs="?", const="true",
            help="also fit on pixels without annotation")

    evaluating = common.add_argument_group("evaluation")
    evaluating.add_argument("--method",
            help="comma-separated: srl_soa, srl_soa<Q>, issc, pca, random, "
            "all_bands")
    evaluating.add_argument("--k", help="band counts, like 5,10 or 5-50:5")
    evaluating.add_argument("--seeds", help="seeds, like 0-9")
    evaluating.add_argument("--trials", help="gradcheck instances")
    evaluating.add_argument("--keep-models", dest="keep_models", nargs="?",
            const="true", help="also write what each method learned per "
            "seed: encoder parameters, rankings and PCA models")

    parser = argparse.ArgumentParser(prog="srlsoa",
            description="Hyperspectral band selection with a sparse "
            "operational autoencoder.")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for name, command in COMMANDS.items():
        subparsers.add_parser(name, parents=[common],
                help=command.__doc__.strip().split("\n")[0])
    return parser


def _init_logging(args: argparse.Namespace):
    if args.log_file is not None:
        dogelog.init_file(args.log_file)
    elif args.verbose:
        dogelog.init_debug()
    elif args.no_color:
        dogelog.init_colorless()
    else:
        dogelog.init()


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point, returns the exit code."""
    args = build_parser().parse_args(argv)
    _init_logging(args)

    try:
        config = build_config(args)
        return COMMANDS[config.command](config)
    except SrlSoaError as exc:
        dogelog.error(f"{type(exc).__name__}: {exc}")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())


# vim:textwidth=80:
