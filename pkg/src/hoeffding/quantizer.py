"""Map multi-feature event records onto a finite state alphabet.

One group of features is clustered with k-means; every remaining scalar
feature is cut into quantile bins. A record's state is the mixed-radix
index of its (cluster id, bin ids...) tuple, 1-based.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DegenerateFeatureWarning, InputError, SchemaError

logger = logging.getLogger(__name__)

Record = Mapping[str, float]
Metric = Callable[[np.ndarray, np.ndarray], np.ndarray]


def euclidean(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Distance from each row of ``points`` to ``center``."""
    return np.sqrt(np.sum((points - center) ** 2, axis=1))


@dataclass(frozen=True)
class FeatureSchema:
    """Which columns are clustered, which are binned, and into how many levels.

    ``cluster_features`` may be empty, in which case ``k`` must be 1 and the
    cluster digit is constant.
    """

    cluster_features: tuple[str, ...] = ()
    k: int = 1
    scalar_features: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "cluster_features", tuple(self.cluster_features))
        object.__setattr__(self, "scalar_features",
                           tuple((str(name), int(levels)) for name, levels in self.scalar_features))
        if self.k < 1:
            raise SchemaError(f"cluster count must be >= 1, got {self.k}")
        if not self.cluster_features and self.k != 1:
            raise SchemaError("k > 1 needs at least one cluster feature")
        for name, levels in self.scalar_features:
            if levels < 1:
                raise SchemaError(f"feature {name!r} has level count {levels}; must be >= 1")
        names = list(self.cluster_features) + [name for name, _ in self.scalar_features]
        if len(set(names)) != len(names):
            raise SchemaError(f"feature names repeat: {names}")

    @property
    def radices(self) -> tuple[int, ...]:
        return (self.k,) + tuple(levels for _, levels in self.scalar_features)

    @property
    def N(self) -> int:
        return math.prod(self.radices)

    @property
    def columns(self) -> tuple[str, ...]:
        return self.cluster_features + tuple(name for name, _ in self.scalar_features)

    def to_dict(self) -> dict:
        return {
            "cluster": {"features": list(self.cluster_features), "k": self.k},
            "scalars": [{"name": name, "levels": levels} for name, levels in self.scalar_features],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> FeatureSchema:
        try:
            cluster = data.get("cluster") or {}
            scalars = data.get("scalars") or []
            return cls(cluster_features=tuple(cluster.get("features", ())),
                       k=int(cluster.get("k", 1)),
                       scalar_features=tuple((s["name"], s["levels"]) for s in scalars))
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from exc


@dataclass(frozen=True, eq=False)
class Codebook:
    """Frozen quantization parameters learned from reference records."""

    centers: np.ndarray
    bin_edges: tuple[np.ndarray, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        centers = np.array(self.centers, dtype=float, ndmin=2)
        centers.setflags(write=False)
        edges = []
        for e in self.bin_edges:
            e = np.array(e, dtype=float).reshape(-1)
            if e.size > 1 and np.any(np.diff(e) <= 0):
                raise InputError("bin edges must be strictly increasing")
            e.setflags(write=False)
            edges.append(e)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "bin_edges", tuple(edges))

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "bin_edges": [e.tolist() for e in self.bin_edges]}

    @classmethod
    def from_dict(cls, data: Mapping) -> Codebook:
        try:
            return cls(centers=np.asarray(data["centers"], dtype=float),
                       bin_edges=tuple(np.asarray(e, dtype=float) for e in data["bin_edges"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed codebook: {exc}") from exc

    def check(self, schema: FeatureSchema) -> None:
        """Raise ``SchemaError`` if this codebook was not fitted for ``schema``."""
        width = max(len(schema.cluster_features), 1)
        if self.centers.shape != (schema.k, width):
            raise SchemaError(f"codebook has centers of shape {self.centers.shape}, "
                              f"schema expects ({schema.k}, {width})")
        if len(self.bin_edges) != len(schema.scalar_features):
            raise SchemaError("codebook and schema disagree on the number of scalar features")
        for e, (name, levels) in zip(self.bin_edges, schema.scalar_features):
            if e.size > levels - 1:
                raise SchemaError(f"feature {name!r} has {e.size} edges for {levels} levels")


def _column(records: Sequence[Record], name: str) -> np.ndarray:
    try:
        return np.array([float(r[name]) for r in records])
    except KeyError:
        raise SchemaError(f"unknown feature column {name!r}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"feature {name!r} is not numeric: {exc}") from exc


def _matrix(records: Sequence[Record], names: Sequence[str]) -> np.ndarray:
    if not names:
        return np.zeros((len(records), 1))
    return np.column_stack([_column(records, name) for name in names])


def _seed_centers(x: np.ndarray, k: int, metric: Metric, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: later centers are drawn proportionally to squared distance."""
    centers = [x[rng.integers(len(x))]]
    d2 = metric(x, centers[0]) ** 2
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(len(x), p=d2 / total) if total > 0 else rng.integers(len(x))
        centers.append(x[idx])
        d2 = np.minimum(d2, metric(x, centers[-1]) ** 2)
    return np.array(centers)


def _distances(x: np.ndarray, centers: np.ndarray, metric: Metric) -> np.ndarray:
    return np.column_stack([metric(x, c) for c in centers])


def _lloyd(x: np.ndarray, centers: np.ndarray, metric: Metric, max_iter: int) -> tuple[np.ndarray, float]:
    for _ in range(max_iter):
        dist = _distances(x, centers, metric)
        labels = np.argmin(dist, axis=1)
        updated = centers.copy()
        for c in range(len(centers)):
            members = x[labels == c]
            if len(members):
                updated[c] = members.mean(axis=0)
            else:
                # An emptied cluster takes over the point worst served by the others.
                updated[c] = x[np.argmax(dist[np.arange(len(x)), labels])]
        if np.array_equal(updated, centers):
            break
        centers = updated
    inertia = float(np.sum(np.min(_distances(x, centers, metric), axis=1) ** 2))
    return centers, inertia


def kmeans(x: np.ndarray, k: int, metric: Metric = euclidean, seed=None, n_init: int = 4,
           max_iter: int = 300) -> np.ndarray:
    """Best of ``n_init`` seeded Lloyd runs; centers returned in lexicographic order."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < k:
        raise InputError(f"need at least k={k} records, got {len(x)}")
    if len(np.unique(x, axis=0)) < k:
        raise InputError(f"fewer than k={k} distinct records; clusters would coincide")
    rng = np.random.default_rng(seed)
    best, best_inertia = None, np.inf
    for _ in range(max(1, n_init)):
        centers, inertia = _lloyd(x, _seed_centers(x, k, metric, rng), metric, max_iter)
        if inertia < best_inertia:
            best, best_inertia = centers, inertia
    order = np.lexsort(best.T[::-1])
    return best[order]


def quantile_edges(values: np.ndarray, levels: int, name: str = "feature") -> np.ndarray:
    """Cut points at the empirical ``i/levels`` quantiles, duplicates dropped."""
    values = np.asarray(values, dtype=float)
    if levels == 1:
        return np.empty(0)
    if np.all(values == values[0]):
        edges = np.empty(0)
    else:
        edges = np.unique(np.quantile(values, np.arange(1, levels) / levels))
    if edges.size < levels - 1:
        warnings.warn(f"feature {name!r} has too few distinct values for {levels} bins; "
                      f"keeping {edges.size + 1}", DegenerateFeatureWarning, stacklevel=3)
    return edges


def fit_codebook(records: Sequence[Record], schema: FeatureSchema, distance: Metric | None = None,
                 seed=None, n_init: int = 4) -> Codebook:
    """Learn cluster centers and quantile bin edges from reference records."""
    records = list(records)
    if len(records) < schema.k:
        raise InputError(f"need at least k={schema.k} records, got {len(records)}")
    if not records:
        raise InputError("no records to fit")
    if schema.cluster_features:
        centers = kmeans(_matrix(records, schema.cluster_features), schema.k,
                         distance or euclidean, seed, n_init)
    else:
        centers = np.zeros((1, 1))
    edges = tuple(quantile_edges(_column(records, name), levels, name)
                  for name, levels in schema.scalar_features)
    logger.debug("fitted codebook: %d centers, %s edges", len(centers), [e.size for e in edges])
    return Codebook(centers=centers, bin_edges=edges)


def _digits(records: Sequence[Record], codebook: Codebook, schema: FeatureSchema,
            distance: Metric | None) -> np.ndarray:
    codebook.check(schema)
    digits = np.zeros((len(records), 1 + len(schema.scalar_features)), dtype=np.int64)
    if schema.cluster_features:
        x = _matrix(records, schema.cluster_features)
        # argmin picks the first (lowest-id) center on exact ties.
        digits[:, 0] = np.argmin(_distances(x, codebook.centers, distance or euclidean), axis=1)
    for j, ((name, _), e) in enumerate(zip(schema.scalar_features, codebook.bin_edges), start=1):
        digits[:, j] = np.searchsorted(e, _column(records, name), side="left")
    return digits


def encode_many(records: Sequence[Record], codebook: Codebook, schema: FeatureSchema,
                distance: Metric | None = None) -> np.ndarray:
    """States in ``1..N`` for a batch of records."""
    records = list(records)
    if not records:
        return np.empty(0, dtype=np.int64)
    digits = _digits(records, codebook, schema, distance)
    state = np.zeros(len(records), dtype=np.int64)
    for j, radix in enumerate(schema.radices):
        state = state * radix + digits[:, j]
    return state + 1


def encode(record: Record, codebook: Codebook, schema: FeatureSchema, distance: Metric | None = None) -> int:
    """State in ``1..N`` for a single record.

    A value equal to a bin edge goes to the lower bin; values beyond the
    outermost edges fall into the first or last bin.
    """
    return int(encode_many([record], codebook, schema, distance)[0])


def decode(state: int, schema: FeatureSchema) -> tuple[int, ...]:
    """Inverse of the mixed-radix code: 1-based (cluster id, bin ids...)."""
    if not 1 <= state <= schema.N:
        raise InputError(f"state {state} outside 1..{schema.N}")
    rest, digits = state - 1, []
    for radix in reversed(schema.radices):
        rest, d = divmod(rest, radix)
        digits.append(d + 1)
    return tuple(reversed(digits))


def perturb_duplicate_timestamps(timestamps: Sequence[float], spread: float = 1e-3) -> np.ndarray:
    """Spread runs of equal timestamps apart so that their order is kept.

    The ``r`` members of a run starting at ``t`` are moved to
    ``t + j * delta`` for ``j = 0..r-1``, where ``delta`` is ``spread / r``
    times the gap to the next distinct timestamp (``spread`` seconds for the
    final run). Input must be nondecreasing.
    """
    t = np.asarray(timestamps, dtype=float)
    if t.size and np.any(np.diff(t) < 0):
        raise InputError("timestamps must be nondecreasing")
    if not 0 < spread < 1:
        raise InputError("spread must lie in (0, 1)")
    out = t.copy()
    starts = np.flatnonzero(np.r_[True, np.diff(t) > 0])
    ends = np.r_[starts[1:], t.size]
    for s, e in zip(starts, ends):
        r = e - s
        if r == 1:
            continue
        gap = t[e] - t[s] if e < t.size else 1.0
        out[s:e] = t[s] + np.arange(r) * (spread * gap / r)
    return out
