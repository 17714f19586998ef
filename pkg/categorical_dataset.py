from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from privacy_errors import PdpInputError

logger = logging.getLogger(__name__)

MISSING_LABEL = "<missing>"
MAJORITY_CATEGORY = 0
SUBSET_CELL_LIMIT = 1 << 26

RowLike = Union[Sequence[int], np.ndarray]


@dataclass(frozen=True)
class BinningConfig:
    """How CSV columns become categorical indices."""

    max_bins: int = 5
    allow_missing: bool = False

    def __post_init__(self) -> None:
        if self.max_bins < 1:
            raise PdpInputError("max_bins must be a positive integer.")


def as_row(row: RowLike, num_features: int | None = None) -> np.ndarray:
    values = np.asarray(row, dtype=np.int64)
    if values.ndim != 1:
        raise PdpInputError("A row must be a one-dimensional vector of category indices.")
    if num_features is not None and values.shape[0] != num_features:
        raise PdpInputError(f"Row has {values.shape[0]} entries but the dataset has {num_features} features.")
    return values


def hamming(first: RowLike, second: RowLike) -> int:
    left = as_row(first)
    right = as_row(second)
    if left.shape != right.shape:
        raise PdpInputError(f"Cannot compare rows of length {left.shape[0]} and {right.shape[0]}.")
    return int(np.count_nonzero(left != right))


@dataclass(frozen=True, eq=False)
class CategoricalDataset:
    """Multiset of categorical rows sharing one category count k."""

    rows: np.ndarray
    num_categories: int
    column_names: Tuple[str, ...] | None = None
    category_maps: Tuple[Tuple[str, ...], ...] | None = None

    def __post_init__(self) -> None:
        rows = np.array(self.rows, dtype=np.int64, copy=True)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise PdpInputError("A dataset needs at least one row and one feature.")
        if self.num_categories < 2:
            raise PdpInputError("A dataset needs at least two categories per column.")
        if rows.min() < 0 or rows.max() >= self.num_categories:
            raise PdpInputError(f"Every entry must lie in [0, {self.num_categories}).")
        if self.column_names is not None and len(self.column_names) != rows.shape[1]:
            raise PdpInputError("column_names must name every feature.")
        if self.category_maps is not None and len(self.category_maps) != rows.shape[1]:
            raise PdpInputError("category_maps must cover every feature.")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_rows(cls, rows: Sequence[RowLike] | np.ndarray, num_categories: int | None = None) -> "CategoricalDataset":
        values = np.asarray(rows, dtype=np.int64)
        if num_categories is None:
            num_categories = max(int(values.max()) + 1, 2) if values.size else 2
        return cls(rows=values, num_categories=num_categories)

    @property
    def num_features(self) -> int:
        return int(self.rows.shape[1])

    @property
    def size(self) -> int:
        return int(self.rows.shape[0])

    def __len__(self) -> int:
        return self.size

    @cached_property
    def _distinct(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        distinct, inverse, counts = np.unique(self.rows, axis=0, return_inverse=True, return_counts=True)
        distinct.setflags(write=False)
        counts.setflags(write=False)
        return distinct, np.asarray(inverse).reshape(-1), counts

    @property
    def unique_rows(self) -> np.ndarray:
        return self._distinct[0]

    @property
    def unique_counts(self) -> np.ndarray:
        return self._distinct[2]

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(f"{self.size}:{self.num_features}:{self.num_categories}:".encode("utf-8"))
        digest.update(np.ascontiguousarray(self.rows).tobytes())
        return digest.hexdigest()

    def distinct_index(self, row: RowLike) -> int:
        """Position of ``row`` among ``unique_rows`` or -1 when absent."""
        target = as_row(row, self.num_features)
        hits = np.flatnonzero((self.unique_rows == target).all(axis=1))
        return int(hits[0]) if hits.size else -1

    def count(self, row: RowLike) -> int:
        index = self.distinct_index(row)
        return int(self.unique_counts[index]) if index >= 0 else 0

    def __contains__(self, row: object) -> bool:
        try:
            return self.count(row) > 0  # type: ignore[arg-type]
        except PdpInputError:
            return False

    def _replace_rows(self, rows: np.ndarray, num_categories: int | None = None) -> "CategoricalDataset":
        return CategoricalDataset(
            rows=rows,
            num_categories=num_categories or self.num_categories,
            column_names=self.column_names,
            category_maps=self.category_maps,
        )

    def without_one(self, row: RowLike) -> "CategoricalDataset":
        return self.remove_rows([row])

    def remove_rows(self, rows: Sequence[RowLike]) -> "CategoricalDataset":
        """Drop one instance per listed row, earliest occurrences first."""
        _, inverse, counts = self._distinct
        pending = np.zeros(counts.shape[0], dtype=np.int64)
        for row in rows:
            index = self.distinct_index(row)
            if index < 0:
                raise PdpInputError(f"Row {list(as_row(row))} is not in the dataset.")
            pending[index] += 1
        if np.any(pending > counts):
            raise PdpInputError("Cannot remove more copies of a row than the dataset holds.")
        keep = np.ones(self.size, dtype=bool)
        for index in np.flatnonzero(pending):
            positions = np.flatnonzero(inverse == index)[: pending[index]]
            keep[positions] = False
        if not keep.any():
            raise PdpInputError("Removing these rows would leave an empty dataset.")
        return self._replace_rows(self.rows[keep])

    def with_rows(self, extra: Sequence[RowLike] | np.ndarray) -> "CategoricalDataset":
        addition = np.asarray(extra, dtype=np.int64).reshape(-1, self.num_features)
        combined = np.vstack([self.rows, addition])
        return self._replace_rows(combined, max(self.num_categories, int(combined.max()) + 1))

    def decode(self, rows: np.ndarray | None = None) -> pd.DataFrame:
        """Map category indices back to their labels; unmapped indices stay numeric strings."""
        values = self.rows if rows is None else np.asarray(rows, dtype=np.int64)
        names = list(self.column_names or [f"x{i}" for i in range(self.num_features)])
        columns = {}
        for i, name in enumerate(names):
            labels = self.category_maps[i] if self.category_maps else ()
            columns[name] = [labels[v] if v < len(labels) else str(v) for v in values[:, i]]
        return pd.DataFrame(columns, columns=names)


@dataclass(frozen=True, eq=False)
class NeighborTable:
    """Hamming geometry of V₁ = V₀ minus one instance of ``target``.

    ``histogram[d]`` counts rows at distance d; row i of ``restricted_histograms`` counts
    only the rows sharing column i with the target.
    """

    target: np.ndarray
    histogram: np.ndarray
    restricted_histograms: np.ndarray

    @property
    def num_features(self) -> int:
        return int(self.target.shape[0])

    @cached_property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(np.rint(self.histogram).astype(np.int64))

    @property
    def size(self) -> int:
        return int(self.cumulative[-1])

    def n_within(self, radius: int) -> int:
        if radius < 0:
            return 0
        return int(self.cumulative[min(radius, self.num_features)])

    def log_similarity(self, ratio: float) -> float:
        return float(_log_power_sums(self.histogram, ratio)[0])

    def log_restricted_similarities(self, ratio: float) -> np.ndarray:
        return _log_power_sums(self.restricted_histograms, ratio)

    def similarity(self, ratio: float) -> float:
        return float(np.exp(self.log_similarity(ratio)))

    def restricted_similarity(self, column: int, ratio: float) -> float:
        if not 0 <= column < self.num_features:
            raise PdpInputError(f"Column {column} is outside [0, {self.num_features}).")
        return float(np.exp(self.log_restricted_similarities(ratio)[column]))


def _check_ratio(ratio: float) -> None:
    if np.isnan(ratio) or ratio < 1.0 - 1e-12:
        raise PdpInputError(f"Similarity ratios must be at least 1, got {ratio}.")


def _log_power_sums(histograms: np.ndarray, ratio: float) -> np.ndarray:
    _check_ratio(ratio)
    hist = np.atleast_2d(np.asarray(histograms, dtype=float))
    distance = np.arange(hist.shape[-1])
    if np.isinf(ratio):
        exponents = np.where(distance == 0, 0.0, -np.inf)
    else:
        exponents = -distance * np.log(max(ratio, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.asarray(logsumexp(np.log(hist) + exponents, axis=-1), dtype=float)


def _distance_one_hot(distances: np.ndarray, num_features: int) -> np.ndarray:
    one_hot = np.zeros((distances.shape[0], num_features + 1))
    one_hot[np.arange(distances.shape[0]), distances] = 1.0
    return one_hot


def neighbor_table_from_distinct(distinct_rows: np.ndarray, counts: np.ndarray, target: RowLike) -> NeighborTable:
    """Build the table of ``target`` from distinct rows and multiplicities that already exclude it once."""
    point = as_row(target, distinct_rows.shape[1])
    n = point.shape[0]
    keep = counts > 0
    rows = distinct_rows[keep]
    weights = np.asarray(counts[keep], dtype=float)
    distances = np.count_nonzero(rows != point, axis=1).astype(np.int64)
    histogram = np.bincount(distances, weights=weights, minlength=n + 1).astype(float)
    shared = (rows == point).astype(float) * weights[:, None]
    return NeighborTable(
        target=point,
        histogram=histogram,
        restricted_histograms=shared.T @ _distance_one_hot(distances, n),
    )


def subset_counting_feasible(num_distinct: int, num_features: int, num_categories: int) -> bool:
    """Whether :func:`neighbor_tables` fits in SUBSET_CELL_LIMIT cells with int64 subset keys."""
    if num_features > 24 or float(num_categories + 1) ** num_features >= 2.0**62:
        return False
    return num_distinct * (1 << num_features) <= SUBSET_CELL_LIMIT


def neighbor_tables(distinct_rows: np.ndarray, counts: np.ndarray, num_categories: int) -> List[NeighborTable]:
    """Tables of every distinct row at once, each excluding one copy of its own row.

    Rows agreeing with each distinct row on every column subset are counted through
    projection keys, then inverted over supersets into exact agreement patterns, so the
    cost grows with d·2^n rather than d².
    """
    rows = np.asarray(distinct_rows, dtype=np.int64)
    d, n = rows.shape
    subsets = 1 << n
    weights = np.asarray(counts, dtype=float)
    member = ((np.arange(subsets)[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
    powers = (num_categories + 1) ** np.arange(n, dtype=np.int64)

    agree = np.empty((d, subsets), dtype=np.int32)
    for mask in range(subsets):
        keys = np.where(member[mask], rows, num_categories) @ powers
        _, inverse = np.unique(keys, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        agree[:, mask] = np.rint(np.bincount(inverse, weights=weights)[inverse])

    exact = agree.reshape((d,) + (2,) * n)
    for axis in range(1, n + 1):
        without = [slice(None)] * (n + 1)
        with_bit = list(without)
        without[axis], with_bit[axis] = 0, 1
        exact[tuple(without)] -= exact[tuple(with_bit)]
    exact = exact.reshape(d, subsets)
    exact[:, subsets - 1] -= 1

    one_hot = _distance_one_hot(n - member.sum(axis=1), n)
    restricted_weights = (member[:, :, None] * one_hot[:, None, :]).reshape(subsets, n * (n + 1))
    block = max(1, (1 << 22) // subsets)
    tables: List[NeighborTable] = []
    for start in range(0, d, block):
        chunk = exact[start : start + block].astype(float)
        histograms = chunk @ one_hot
        restricted = (chunk @ restricted_weights).reshape(-1, n, n + 1)
        for offset in range(chunk.shape[0]):
            tables.append(
                NeighborTable(
                    target=rows[start + offset],
                    histogram=histograms[offset],
                    restricted_histograms=restricted[offset],
                )
            )
    logger.debug("Built %d neighbor tables from %d column subsets", d, subsets)
    return tables


def neighbor_counts(dataset: CategoricalDataset, target: RowLike) -> NeighborTable:
    point = as_row(target, dataset.num_features)
    index = dataset.distinct_index(point)
    if index < 0:
        raise PdpInputError(f"Target row {point.tolist()} is not in the dataset.")
    counts = dataset.unique_counts.astype(np.int64)
    counts[index] -= 1
    return neighbor_table_from_distinct(dataset.unique_rows, counts, point)


def _rows_of(rows: CategoricalDataset | Sequence[RowLike] | np.ndarray) -> np.ndarray:
    if isinstance(rows, CategoricalDataset):
        return rows.rows
    values = np.asarray(rows, dtype=np.int64)
    return values.reshape(0, 0) if values.size == 0 else np.atleast_2d(values)


def similarity(rows: CategoricalDataset | Sequence[RowLike] | np.ndarray, target: RowLike, ratio: float) -> float:
    """Σ ratio^(−ω̄(v, target)) over the multiset ``rows``."""
    _check_ratio(ratio)
    values = _rows_of(rows)
    if values.size == 0:
        return 0.0
    point = as_row(target, values.shape[1])
    distances = np.count_nonzero(values != point, axis=1)
    histogram = np.bincount(distances, minlength=point.shape[0] + 1)
    return float(np.exp(_log_power_sums(histogram, ratio)[0]))


def restricted_similarity(
    rows: CategoricalDataset | Sequence[RowLike] | np.ndarray,
    target: RowLike,
    column: int,
    ratio: float,
) -> float:
    values = _rows_of(rows)
    point = as_row(target)
    if not 0 <= column < point.shape[0]:
        raise PdpInputError(f"Column {column} is outside [0, {point.shape[0]}).")
    if values.size == 0:
        _check_ratio(ratio)
        return 0.0
    return similarity(values[values[:, column] == point[column]], point, ratio)


def _encode_column(values: pd.Series, max_bins: int) -> Tuple[np.ndarray, Tuple[str, ...]]:
    numeric = pd.to_numeric(values, errors="coerce")
    is_numeric = len(values) > 0 and bool(numeric.notna().all())
    if is_numeric and numeric.nunique() > max_bins:
        codes, edges = pd.qcut(numeric, q=max_bins, labels=False, retbins=True, duplicates="drop")
        labels = tuple(f"[{low:g}, {high:g}]" for low, high in zip(edges[:-1], edges[1:]))
        return np.asarray(codes, dtype=np.int64), labels
    if is_numeric:
        uniques = sorted(set(values), key=lambda value: (float(value), value))
    else:
        uniques = sorted(set(values))
    lookup = {value: index for index, value in enumerate(uniques)}
    return values.map(lookup).to_numpy(dtype=np.int64), tuple(uniques)


def ingest_csv(path: str | Path, config: BinningConfig | None = None) -> CategoricalDataset:
    config = config or BinningConfig()
    source = Path(path)
    if not source.is_file():
        raise PdpInputError(f"CSV file {source} does not exist.")
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise PdpInputError(f"Could not parse {source}: {exc}") from exc
    if frame.shape[0] == 0 or frame.shape[1] == 0:
        raise PdpInputError(f"{source} holds no data rows.")
    if frame.isna().to_numpy().any():
        raise PdpInputError(f"{source} has ragged rows (fewer fields than the header).")

    encoded: List[np.ndarray] = []
    maps: List[Tuple[str, ...]] = []
    for name in frame.columns:
        values = frame[name].str.strip()
        missing = values.eq("").to_numpy()
        if missing.any() and not config.allow_missing:
            raise PdpInputError(
                f"Column {name!r} has {int(missing.sum())} missing value(s); pass --allow-missing to map them to a sentinel."
            )
        codes, labels = _encode_column(values[~missing], config.max_bins)
        column = np.full(len(values), len(labels), dtype=np.int64)
        column[~missing] = codes
        if missing.any():
            labels = labels + (MISSING_LABEL,)
            logger.info("Column %s: %d missing value(s) mapped to sentinel category %d", name, int(missing.sum()), len(labels) - 1)
        encoded.append(column)
        maps.append(labels)

    num_categories = max(2, max(len(labels) for labels in maps))
    logger.info("Ingested %s: s=%d n=%d k=%d", source, frame.shape[0], frame.shape[1], num_categories)
    return CategoricalDataset(
        rows=np.column_stack(encoded),
        num_categories=num_categories,
        column_names=tuple(str(name) for name in frame.columns),
        category_maps=tuple(maps),
    )


def sample_skewed(
    num_features: int,
    num_categories: int,
    majority: float,
    size: int,
    seed: int | np.random.SeedSequence | None = None,
) -> CategoricalDataset:
    """Product distribution: category 0 with probability ``majority``, else uniform over the rest."""
    if num_features < 1 or size < 1:
        raise PdpInputError("num_features and size must be positive.")
    if num_categories < 2:
        raise PdpInputError("num_categories must be at least 2.")
    if majority < 1.0 / num_categories - 1e-12 or majority >= 1.0:
        raise PdpInputError(f"majority must lie in [1/k, 1), got {majority}.")
    rng = np.random.default_rng(seed)
    is_majority = rng.random((size, num_features)) < majority
    others = rng.integers(1, num_categories, size=(size, num_features))
    rows = np.where(is_majority, MAJORITY_CATEGORY, others)
    return CategoricalDataset(rows=rows, num_categories=num_categories)


def non_majority_point(num_features: int, num_categories: int) -> np.ndarray:
    if num_categories < 2:
        raise PdpInputError("num_categories must be at least 2.")
    return np.full(num_features, MAJORITY_CATEGORY + 1, dtype=np.int64)


def mean_feature_overlap(dataset: CategoricalDataset) -> np.ndarray:
    """Per row, the mean over columns of the share of rows holding the same value."""
    shares = np.zeros(dataset.rows.shape, dtype=float)
    for column in range(dataset.num_features):
        frequency = np.bincount(dataset.rows[:, column], minlength=dataset.num_categories) / dataset.size
        shares[:, column] = frequency[dataset.rows[:, column]]
    return shares.mean(axis=1)


__all__ = [
    "BinningConfig",
    "CategoricalDataset",
    "MISSING_LABEL",
    "NeighborTable",
    "SUBSET_CELL_LIMIT",
    "as_row",
    "hamming",
    "ingest_csv",
    "mean_feature_overlap",
    "neighbor_counts",
    "neighbor_table_from_distinct",
    "neighbor_tables",
    "non_majority_point",
    "restricted_similarity",
    "sample_skewed",
    "similarity",
    "subset_counting_feasible",
]
