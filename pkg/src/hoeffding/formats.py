"""Readers and writers for the on-disk formats used by the command line tool.

* model JSON: ``{"n_states": N, "q": [[...], ...]}``
* state CSV: header ``timestamp,state`` (timestamp optional), states ``1..N``
* records CSV: header with ``timestamp`` plus named numeric feature columns
* threshold JSON, schema JSON, codebook JSON, schedule JSON
* report and table CSVs with fixed column orders
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .detector import LawSchedule, Period
from .errors import InputError, SchemaError
from .markov import Alphabet, SymbolSequence, TransitionModel, pair_encode


@contextmanager
def atomic_path(path: str | os.PathLike) -> Iterator[Path]:
    """Yield a temporary sibling path that replaces ``path`` only on success."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, target)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _read_json(path: str | os.PathLike) -> object:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from exc


def write_json(path: str | os.PathLike, data: object) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def model_to_dict(model: TransitionModel) -> dict:
    return {"n_states": model.n_states, "q": model.q.tolist()}


def model_from_dict(data: Mapping) -> TransitionModel:
    try:
        q = np.asarray(data["q"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"model JSON needs a numeric 'q' matrix ({exc})") from exc
    declared = data.get("n_states")
    if declared is not None and q.shape != (declared, declared):
        raise InputError(f"'q' has shape {q.shape} but n_states is {declared}")
    return TransitionModel.from_q(q)


def read_model(path: str | os.PathLike) -> TransitionModel:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise InputError(f"{path}: model JSON must be an object")
    return model_from_dict(data)


def write_model(path: str | os.PathLike, model: TransitionModel) -> None:
    write_json(path, model_to_dict(model))


def _rows(path: str | os.PathLike) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


def read_states(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray | None]:
    """States ``Y`` and, if present, their timestamps from a state CSV."""
    header, rows = _rows(path)
    if "state" not in header:
        raise SchemaError(f"{path}: expected a 'state' column, found {header}")
    try:
        states = np.array([int(r["state"]) for r in rows], dtype=np.int64)
        stamps = np.array([float(r["timestamp"]) for r in rows]) if "timestamp" in header else None
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed row ({exc})") from exc
    return states, stamps


def write_states(path: str | os.PathLike, states: Sequence[int], timestamps: Sequence[float] | None = None) -> None:
    with atomic_path(path) as tmp, open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if timestamps is None:
            w.writerow(["state"])
            w.writerows([int(s)] for s in states)
        else:
            w.writerow(["timestamp", "state"])
            w.writerows([repr(float(t)), int(s)] for t, s in zip(timestamps, states))


def states_to_pairs(states: np.ndarray, n_states: int, timestamps: np.ndarray | None = None,
                    default_timestamps: bool = False) -> SymbolSequence:
    """Pair-encode a state sequence.

    Streams without timestamps get the row index as their clock when
    ``default_timestamps`` is set.
    """
    if states.size and states.max() > n_states:
        raise InputError(f"state {int(states.max())} exceeds the model's {n_states} states")
    if timestamps is None and default_timestamps:
        timestamps = np.arange(states.size, dtype=float)
    if states.size < 2:
        empty_t = np.empty(0) if timestamps is not None else None
        return SymbolSequence(np.empty(0, dtype=np.int64), Alphabet(n_states), empty_t)
    return pair_encode(states, Alphabet(n_states), timestamps)


def read_records(path: str | os.PathLike) -> tuple[list[str], list[dict]]:
    """Header and rows of a records CSV, values as strings."""
    return _rows(path)


def read_schema(path: str | os.PathLike):
    from .quantizer import FeatureSchema

    data = _read_json(path)
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: schema JSON must be an object")
    return FeatureSchema.from_dict(data)


def read_schedule(path: str | os.PathLike, laws: Sequence[TransitionModel]) -> LawSchedule:
    """Schedule JSON: ``{"day_seconds": 86400, "periods": [{"start", "end", "laws": [1, ...]}]}``."""
    data = _read_json(path)
    try:
        periods = tuple(Period(float(p["start"]), float(p["end"]), tuple(int(l) for l in p["laws"]))
                        for p in data["periods"])
        day = float(data.get("day_seconds", 86400.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed schedule ({exc})") from exc
    return LawSchedule(tuple(laws), periods, day)


def write_table(path: str | os.PathLike, columns: Sequence[str], rows: Iterable[Mapping]) -> None:
    with atomic_path(path) as tmp, open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow(row)
