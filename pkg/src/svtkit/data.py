"""Dataset construction: synthetic generators, transaction ingestion, scores files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .svt import QueryEntry, QueryStream

BINARY_THRESHOLD = 500.0
ZIPF_THRESHOLD = 200.0


@dataclass(frozen=True)
class ScoredDataset:
    """Items with true scores and the predefined selection threshold."""

    name: str
    items: tuple[tuple[int, float], ...]
    threshold: float

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("a dataset needs at least one item")
        ids = [i for i, _ in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("item ids must be unique")
        if not np.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite, got {self.threshold}")

    @property
    def n_items(self) -> int:
        return len(self.items)


def gen_binary(n_items: int = 10000, n_positive: int = 100) -> ScoredDataset:
    """Two-level synthetic dataset: n_positive items score 1000, the rest 0."""
    if n_positive > n_items:
        raise ValueError(f"n_positive={n_positive} exceeds n_items={n_items}")
    if n_items < 1 or n_positive < 0:
        raise ValueError("need n_items >= 1 and n_positive >= 0")
    items = tuple((i, 1000.0 if i <= n_positive else 0.0)
                  for i in range(1, n_items + 1))
    return ScoredDataset(name="binary", items=items,
                         threshold=BINARY_THRESHOLD)


def gen_zipf(n_items: int = 10000) -> ScoredDataset:
    """Power-law synthetic dataset: item i scores 10000/i."""
    if n_items < 1:
        raise ValueError(f"need n_items >= 1, got {n_items}")
    items = tuple((i, 10000.0 / i) for i in range(1, n_items + 1))
    return ScoredDataset(name="zipf", items=items, threshold=ZIPF_THRESHOLD)


def ingest_transactions(path: str | Path, threshold: float) -> ScoredDataset:
    """Score items by how many transactions contain them.

    The file holds one transaction per line as whitespace-separated
    nonnegative integer item ids; a duplicated id inside a line still
    counts once. Items come out sorted by id.
    """
    path = Path(path)
    counts: dict[int, int] = {}
    n_transactions = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                ids = {int(t) for t in tokens}
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: malformed transaction "
                    f"{line.strip()!r}") from None
            if any(i < 0 for i in ids):
                raise ValueError(f"{path}: line {lineno}: negative item id")
            n_transactions += 1
            for item in ids:
                counts[item] = counts.get(item, 0) + 1
    if n_transactions == 0:
        raise ValueError(f"{path}: no transactions found")
    items = tuple((i, float(counts[i])) for i in sorted(counts))
    return ScoredDataset(name=path.stem, items=items,
                         threshold=float(threshold))


def write_scores(ds: ScoredDataset, path: str | Path) -> None:
    """Persist a dataset as CSV rows id,score under a metadata header line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# name={ds.name} threshold={ds.threshold!r}\n")
        for item, score in ds.items:
            fh.write(f"{item},{score!r}\n")


def read_scores(path: str | Path) -> ScoredDataset:
    """Read a dataset written by :func:`write_scores` (exact round-trip)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# name="):
            raise ValueError(f"{path}: missing scores header, got {header!r}")
        meta, _, thr = header[2:].rpartition(" threshold=")
        name = meta[len("name="):]
        items = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                item, score = line.split(",")
                items.append((int(item), float(score)))
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: expected id,score") from None
    return ScoredDataset(name=name, items=tuple(items),
                         threshold=float(thr))


def shuffle_and_stream(ds: ScoredDataset, rng: np.random.Generator) -> QueryStream:
    """Uniformly permute the items and pair each with the dataset threshold."""
    order = rng.permutation(ds.n_items)
    entries = tuple(QueryEntry(ds.items[i][0], ds.items[i][1], ds.threshold)
                    for i in order)
    return QueryStream(entries)
