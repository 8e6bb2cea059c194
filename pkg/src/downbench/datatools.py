"""Dataset manifests, label-cell accounting and balanced subsets.

A manifest is a CSV with header ``id,path,age,ethnicity,gender`` (the
three label columns may be omitted together).  Labels come from fixed
vocabularies spanning 4 x 3 x 2 = 24 cells; balancing selects evenly
across those cells and reports how even the result is via the joint
entropy of the cell distribution (log2(24) ~ 4.585 bits when perfectly
uniform).
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from . import rng
from .errors import InvalidArgumentError

AGE_GROUPS = ("child", "young", "middle", "senior")
ETHNICITIES = ("asian", "white", "black")
GENDERS = ("male", "female")

Cell = tuple[str, str, str]


def all_cells() -> list[Cell]:
    return list(itertools.product(AGE_GROUPS, ETHNICITIES, GENDERS))


@dataclass(frozen=True)
class ManifestRow:
    id: str
    path: str
    age: Optional[str] = None
    ethnicity: Optional[str] = None
    gender: Optional[str] = None

    def __post_init__(self) -> None:
        labels = (self.age, self.ethnicity, self.gender)
        if any(v is None for v in labels) != all(v is None for v in labels):
            raise InvalidArgumentError(f"row {self.id!r}: partial labels {labels}")
        if self.age is not None:
            for value, vocab, name in (
                (self.age, AGE_GROUPS, "age"),
                (self.ethnicity, ETHNICITIES, "ethnicity"),
                (self.gender, GENDERS, "gender"),
            ):
                if value not in vocab:
                    raise InvalidArgumentError(
                        f"row {self.id!r}: {name} {value!r} not in {vocab}"
                    )

    @property
    def labeled(self) -> bool:
        return self.age is not None

    @property
    def cell(self) -> Cell:
        if not self.labeled:
            raise InvalidArgumentError(f"row {self.id!r} has no labels")
        return (self.age, self.ethnicity, self.gender)


@dataclass(frozen=True)
class Manifest:
    rows: tuple[ManifestRow, ...]

    def __post_init__(self) -> None:
        seen = set()
        for row in self.rows:
            if row.id in seen:
                raise InvalidArgumentError(f"duplicate manifest id {row.id!r}")
            seen.add(row.id)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


HEADER = ["id", "path", "age", "ethnicity", "gender"]


def read_manifest(path: str | Path) -> Manifest:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidArgumentError(f"{path}: empty manifest file") from None
        if header not in (HEADER, HEADER[:2]):
            raise InvalidArgumentError(
                f"{path}: bad header {header!r}; expected {HEADER} or {HEADER[:2]}"
            )
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise InvalidArgumentError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}"
                )
            rec = [v.strip() for v in rec]
            labels = [v or None for v in rec[2:5]] if len(rec) == 5 else [None] * 3
            rows.append(ManifestRow(rec[0], rec[1], *labels))
    return Manifest(tuple(rows))


def write_manifest(
    manifest: Manifest, path: str | Path, metadata: Optional[dict] = None
) -> None:
    """Write the CSV; a metadata dict lands in a JSON sidecar next to it."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for row in manifest:
            writer.writerow(
                [row.id, row.path, row.age or "", row.ethnicity or "", row.gender or ""]
            )
    if metadata is not None:
        sidecar = Path(str(path) + ".meta.json")
        sidecar.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")


def cell_counts(manifest: Manifest) -> dict[Cell, int]:
    """Counts over all 24 label cells (unlabeled rows are rejected)."""
    unlabeled = [row.id for row in manifest if not row.labeled]
    if unlabeled:
        raise InvalidArgumentError(f"unlabeled rows: {unlabeled}")
    counts = {cell: 0 for cell in all_cells()}
    for row in manifest:
        counts[row.cell] += 1
    return counts


def joint_entropy(cells: Mapping[Cell, int]) -> float:
    """Shannon entropy in bits of the cell count distribution."""
    total = sum(cells.values())
    if total <= 0:
        raise InvalidArgumentError("joint_entropy of an empty cell table")
    h = 0.0
    for count in cells.values():
        if count > 0:
            p = count / total
            h -= p * math.log2(p)
    return h


def balance_subset(
    manifest: Manifest, n: int, seed: int
) -> tuple[Manifest, dict]:
    """Select n rows as evenly as possible across the 24 label cells.

    Each cell is owed floor(n/24); the remainder goes to the largest
    cells first (ties broken by cell key).  Within a cell the pick order
    is a seeded shuffle.  When a cell runs out, its deficit spills to
    whichever cell has the most unselected rows left.  Returns the
    subset and a metadata dict describing quotas and spills.
    """
    if n < 0:
        raise InvalidArgumentError(f"subset size must be >= 0, got {n}")
    if n > len(manifest):
        raise InvalidArgumentError(
            f"subset size {n} exceeds manifest size {len(manifest)}"
        )
    counts = cell_counts(manifest)  # also rejects unlabeled rows

    pools: dict[Cell, list[ManifestRow]] = {cell: [] for cell in all_cells()}
    for row in manifest:
        pools[row.cell].append(row)
    for cell, pool in pools.items():
        pool.sort(key=lambda r: r.id)
        gen = rng.stream(seed, "balance", *cell)
        gen.shuffle(pool)

    base = n // 24
    remainder = n - base * 24
    by_size = sorted(counts, key=lambda c: (-counts[c], c))
    quotas = {cell: base for cell in all_cells()}
    for cell in by_size[:remainder]:
        quotas[cell] += 1

    taken: dict[Cell, int] = {}
    deficit = 0
    exhausted: dict[Cell, int] = {}
    for cell in all_cells():
        got = min(quotas[cell], len(pools[cell]))
        taken[cell] = got
        if got < quotas[cell]:
            exhausted[cell] = quotas[cell] - got
            deficit += quotas[cell] - got

    spilled: dict[Cell, int] = {}
    while deficit > 0:
        open_cells = [c for c in all_cells() if taken[c] < len(pools[c])]
        if not open_cells:
            break
        target = min(open_cells, key=lambda c: (-(len(pools[c]) - taken[c]), c))
        taken[target] += 1
        spilled[target] = spilled.get(target, 0) + 1
        deficit -= 1

    chosen = [row for cell in all_cells() for row in pools[cell][: taken[cell]]]
    chosen.sort(key=lambda r: r.id)
    subset = Manifest(tuple(chosen))
    meta = {
        "requested": n,
        "selected": len(chosen),
        "seed": seed,
        "base_quota": base,
        "remainder_cells": ["/".join(c) for c in by_size[:remainder]],
        "exhausted": {"/".join(c): k for c, k in sorted(exhausted.items())},
        "spilled": {"/".join(c): k for c, k in sorted(spilled.items())},
        "joint_entropy": joint_entropy(cell_counts(subset)) if chosen else 0.0,
    }
    return subset, meta
