"""Command line entry point: ``hoeffding <command> [options]``.

Every command validates its inputs before computing anything and writes
its output atomically, so a failed run leaves no partial file behind.
Exit status is 0 on success, 1 on bad input or a numerical failure, and 2
on a usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Sequence

import numpy as np

from . import formats
from .detector import (REPORT_COLUMNS, LawSchedule, WindowConfig, build_robust_caches,
                       detect_ordinary, detect_robust)
from .errors import HoeffdingError, InputError
from .evaluation import (DEFAULT_ROC_BETAS, ESTIMATORS, ROC_METHODS, ExperimentGrid,
                         accuracy_metric, random_transition, roc_experiment, sample_size_grid,
                         seed_sequence, threshold_curves)
from .markov import DEFAULT_EPS, SymbolSequence, TransitionModel, simulate_states
from .quantizer import Codebook, encode_many, fit_codebook, perturb_duplicate_timestamps
from .threshold import (DEFAULT_T, MIN_REFERENCE_FACTOR, estimate_threshold_ordinary,
                        estimate_threshold_robust, fit_reference, ordinary_cache,
                        reference_model, sanov_threshold)

logger = logging.getLogger("hoeffding")

METHODS = ("sv", "wc", "wc-chi2", "wc-robust")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return value


def _existing(*paths: str | None) -> None:
    for p in paths:
        if p is not None and not os.path.isfile(p):
            raise FileNotFoundError(f"no such file: {p}")


def _load_reference(path: str, n_states: int | None, eps: float,
                    min_length_factor: float = MIN_REFERENCE_FACTOR) -> TransitionModel:
    """A reference given as model JSON, or as a state CSV to estimate the model from."""
    if path.endswith(".json"):
        return formats.read_model(path)
    states, _ = formats.read_states(path)
    if states.size == 0:
        raise InputError(f"{path}: empty reference stream")
    size = n_states or int(states.max())
    return reference_model(formats.states_to_pairs(states, size), eps=eps,
                           min_length_factor=min_length_factor)


def _references(args) -> list[TransitionModel]:
    if not args.reference:
        raise InputError("at least one --reference is required")
    _existing(*args.reference)
    models = [_load_reference(p, args.states, args.eps) for p in args.reference]
    if len({m.n_states for m in models}) != 1:
        raise InputError("references disagree on the number of states")
    return models


def cmd_simulate(args) -> None:
    _existing(args.model)
    model = formats.read_model(args.model)
    states = simulate_states(model, args.n, args.seed)
    formats.write_states(args.out, states, np.arange(args.n, dtype=float) * args.dt)


def cmd_threshold(args) -> None:
    if args.method == "sv":
        record = sanov_threshold(args.n, args.beta).to_record()
    else:
        models = _references(args)
        if args.method == "wc-robust":
            est = estimate_threshold_robust(models, args.n, args.beta, args.T, args.seed, args.eps)
        else:
            if len(models) != 1:
                raise InputError(f"method {args.method} takes exactly one --reference")
            branch = "chi2" if args.method == "wc-chi2" else args.branch
            est = estimate_threshold_ordinary(models[0], args.n, args.beta, args.T, args.seed, branch, args.eps)
        record = est.to_record()
    formats.write_json(args.out, record)


def _stream(path: str, n_states: int) -> SymbolSequence:
    states, stamps = formats.read_states(path)
    return formats.states_to_pairs(states, n_states, stamps, default_timestamps=True)


def cmd_detect(args) -> None:
    _existing(args.stream, args.schedule)
    models = _references(args)
    config = WindowConfig(args.ws, args.wd, args.beta, args.min_samples)
    stream = _stream(args.stream, models[0].n_states)
    if args.method == "wc-robust":
        schedule = (formats.read_schedule(args.schedule, models) if args.schedule
                    else LawSchedule(tuple(models)))
        caches = build_robust_caches(schedule, args.T, args.seed, args.eps)
        reports = detect_robust(stream, schedule, config, caches, args.eps)
    else:
        if len(models) != 1:
            raise InputError(f"method {args.method} takes exactly one --reference")
        cache = None
        if args.method != "sv":
            branch = "chi2" if args.method == "wc-chi2" else args.branch
            cache = ordinary_cache(fit_reference(models[0], eps=args.eps), args.T, args.seed, branch)
        reports = detect_ordinary(stream, models[0], config, cache, args.eps)
    formats.write_table(args.out, REPORT_COLUMNS, (r.to_row() for r in reports))


def cmd_quantize(args) -> None:
    _existing(args.stream, args.schema, args.codebook_in)
    schema = formats.read_schema(args.schema)
    header, rows = formats.read_records(args.stream)
    missing = [c for c in schema.columns if c not in header]
    if missing:
        raise formats.SchemaError(f"{args.stream}: unknown column(s) {missing}; header is {header}")
    if args.codebook_in:
        codebook = Codebook.from_dict(formats._read_json(args.codebook_in))
        codebook.check(schema)
    else:
        codebook = fit_codebook(rows, schema, seed=args.seed)
    states = encode_many(rows, codebook, schema)
    stamps = None
    if "timestamp" in header:
        stamps = np.array([float(r["timestamp"]) for r in rows])
        if args.perturb_duplicates:
            stamps = perturb_duplicate_timestamps(stamps)
    codebook_out = args.codebook or f"{args.out}.codebook.json"
    formats.write_states(args.out, states, stamps)
    if not args.codebook_in:
        formats.write_json(codebook_out, codebook.to_dict())


def _roc_models(args) -> tuple[TransitionModel, TransitionModel, np.random.SeedSequence]:
    null_seed, alt_seed, run_seed = seed_sequence(args.seed).spawn(3)
    if args.model:
        _existing(args.model, args.alt)
        null = formats.read_model(args.model)
        alt = formats.read_model(args.alt) if args.alt else random_transition(null.n_states, np.random.default_rng(alt_seed))
    else:
        if args.alt:
            raise InputError("--alt needs --model")
        null = random_transition(args.N, np.random.default_rng(null_seed))
        alt = random_transition(args.N, np.random.default_rng(alt_seed))
    return null, alt, run_seed


def cmd_roc(args) -> None:
    null, alt, run_seed = _roc_models(args)
    betas = tuple(args.beta) if args.beta else DEFAULT_ROC_BETAS
    for b in betas:
        if not 0 < b < 1:
            raise InputError(f"beta must lie in (0, 1), got {b}")
    points = roc_experiment(null, alt, args.n, args.T, betas, ROC_METHODS, run_seed, eps=args.eps)
    formats.write_table(args.out, ("beta", "method", "fpr", "tpr"),
                        ({"beta": p.beta, "method": p.method, "fpr": p.fpr, "tpr": p.tpr} for p in points))


def _grid(args) -> ExperimentGrid:
    if args.grid:
        _existing(args.grid)
        data = formats._read_json(args.grid)
        if not isinstance(data, dict):
            raise InputError(f"{args.grid}: grid JSON must be an object")
        try:
            n_values = data.get("n_values")
            return ExperimentGrid(
                N_values=tuple(int(v) for v in data.get("N_values", (4,))),
                beta=float(data.get("beta", 0.001)), K=int(data.get("K", 50)),
                T=int(data.get("T", DEFAULT_T)), seed=int(data.get("seed", 0)),
                n_values={int(k): tuple(int(x) for x in v) for k, v in n_values.items()} if n_values else None,
                eps=float(data.get("eps", DEFAULT_EPS)))
        except (AttributeError, TypeError, ValueError) as exc:
            raise InputError(f"{args.grid}: malformed grid ({exc})") from exc
    return ExperimentGrid(N_values=tuple(args.N_list or (4,)), beta=args.beta, K=args.K, T=args.T,
                          seed=args.seed if args.seed is not None else 0, eps=args.eps)


def cmd_accuracy(args) -> None:
    grid = _grid(args)
    rows = accuracy_metric(("wc", "wc-chi2", "sv"), grid)
    formats.write_table(args.out, ("N", "n", "method", "d"), rows)


def cmd_curves(args) -> None:
    model_seed, curve_seed = seed_sequence(args.seed).spawn(2)
    if args.model:
        _existing(args.model)
        model = formats.read_model(args.model)
    else:
        model = random_transition(args.N, np.random.default_rng(model_seed))
    sizes = sample_size_grid(model.n_states)
    curves = threshold_curves(model, sizes, args.beta, args.T, curve_seed, args.eps)
    rows = [{"N": model.n_states, "n": n, "method": m, "eta": float(curves[m][i])}
            for i, n in enumerate(sizes) for m in ESTIMATORS]
    formats.write_table(args.out, ("N", "n", "method", "eta"), rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoeffding", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out", required=True, help="output file")
        p.add_argument("--eps", type=_positive_float, default=DEFAULT_EPS, help="empirical-law floor")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="master random seed")

    p = sub.add_parser("simulate", help="simulate a state stream from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=_positive_int, required=True, help="number of states to emit")
    p.add_argument("--dt", type=_positive_float, default=1.0, help="seconds between states")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("threshold", help="estimate a detection threshold")
    p.add_argument("--reference", action="append", help="model JSON or state CSV (repeat for wc-robust)")
    p.add_argument("--states", type=_positive_int, default=None, help="alphabet size for CSV references")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--beta", type=_probability, required=True)
    p.add_argument("--method", choices=METHODS, default="wc")
    p.add_argument("--branch", choices=("gaussian", "chi2"), default="gaussian")
    p.add_argument("--T", type=_positive_int, default=DEFAULT_T)
    common(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("detect", help="sliding-window detection over a state stream")
    p.add_argument("--stream", required=True)
    p.add_argument("--reference", action="append")
    p.add_argument("--states", type=_positive_int, default=None)
    p.add_argument("--schedule", default=None, help="time-of-day schedule JSON for wc-robust")
    p.add_argument("--ws", type=_positive_float, required=True, help="window length, seconds")
    p.add_argument("--wd", type=_positive_float, required=True, help="stride between windows, seconds")
    p.add_argument("--beta", type=_probability, default=0.001)
    p.add_argument("--min-samples", type=int, default=None)
    p.add_argument("--method", choices=METHODS, default="wc")
    p.add_argument("--branch", choices=("gaussian", "chi2"), default="gaussian")
    p.add_argument("--T", type=_positive_int, default=DEFAULT_T)
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("quantize", help="turn feature records into states")
    p.add_argument("--stream", required=True, help="records CSV")
    p.add_argument("--schema", required=True)
    p.add_argument("--codebook", default=None, help="where to write the fitted codebook")
    p.add_argument("--codebook-in", default=None, help="encode with this frozen codebook instead of fitting")
    p.add_argument("--perturb-duplicates", action="store_true")
    common(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("roc", help="ROC points of the three discrete tests")
    p.add_argument("--model", default=None, help="null model JSON (random if omitted)")
    p.add_argument("--alt", default=None, help="alternative model JSON (random if omitted)")
    p.add_argument("--N", type=_positive_int, default=4)
    p.add_argument("--n", type=_positive_int, default=50)
    p.add_argument("--beta", type=float, action="append", help="target FPR (repeatable)")
    p.add_argument("--T", type=_positive_int, default=DEFAULT_T)
    common(p)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("accuracy", help="squared-error table of the threshold estimators")
    p.add_argument("--grid", default=None, help="grid JSON; overrides the flags below")
    p.add_argument("--N", dest="N_list", type=_positive_int, action="append")
    p.add_argument("--K", type=_positive_int, default=50)
    p.add_argument("--beta", type=_probability, default=0.001)
    p.add_argument("--T", type=_positive_int, default=DEFAULT_T)
    common(p)
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("curves", help="all thresholds against n for one model")
    p.add_argument("--model", default=None)
    p.add_argument("--N", type=_positive_int, default=4)
    p.add_argument("--beta", type=_probability, default=0.001)
    p.add_argument("--T", type=_positive_int, default=DEFAULT_T)
    common(p)
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("HOEFFDING_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (HoeffdingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
