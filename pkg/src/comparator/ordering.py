"""Ordering systems and the label channels derived from them.

An ordering system turns one kind of label (a diagnosis, an integer clinical
subscale, or the recording date) into integer ordinal values where a larger
value always means *more severe*.  Missing values take part in no pair.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

KINDS = ("diagnosis", "integer_scale", "chronology")
DIRECTIONS = ("higher_is_more_severe", "lower_is_more_severe")


@dataclass(frozen=True)
class OrderingSystem:
    name: str
    kind: str = "integer_scale"
    direction: str = "higher_is_more_severe"
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("ordering system needs a name")
        if self.kind not in KINDS:
            raise ValueError(f"ordering {self.name!r}: unknown kind {self.kind!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"ordering {self.name!r}: unknown direction {self.direction!r}")
        if not self.weight > 0:
            raise ValueError(f"ordering {self.name!r}: weight must be positive")

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "direction": self.direction,
                "weight": self.weight}

    @classmethod
    def from_dict(cls, d: dict) -> "OrderingSystem":
        return cls(d["name"], d.get("kind", "integer_scale"),
                   d.get("direction", "higher_is_more_severe"), float(d.get("weight", 1.0)))


@dataclass
class LabelChannel:
    """Normalised ordinal values for one ordering system.

    ``groups`` restricts comparisons: when set, only samples with equal group
    codes form pairs (used for within-subject chronology).
    """

    ordering: OrderingSystem
    values: np.ndarray
    present: np.ndarray
    groups: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.int64)
        self.present = np.asarray(self.present, dtype=bool)
        if self.values.shape != self.present.shape or self.values.ndim != 1:
            raise ValueError("values and present mask must be 1-D and equal length")
        if self.groups is not None:
            self.groups = np.asarray(self.groups, dtype=np.int64)
            if self.groups.shape != self.values.shape:
                raise ValueError("groups must match values in length")
        # missing entries carry no value
        self.values = np.where(self.present, self.values, 0)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def name(self) -> str:
        return self.ordering.name

    def take(self, indices) -> "LabelChannel":
        idx = np.asarray(indices, dtype=np.int64)
        groups = None if self.groups is None else self.groups[idx]
        return LabelChannel(self.ordering, self.values[idx], self.present[idx], groups)

    def comparable(self) -> np.ndarray:
        """``(n, n)`` mask of pairs that may be compared (diagonal excluded)."""
        mask = self.present[:, None] & self.present[None, :]
        if self.groups is not None:
            mask &= self.groups[:, None] == self.groups[None, :]
        np.fill_diagonal(mask, False)
        return mask

    def as_optional(self) -> list[int | None]:
        return [int(v) if p else None for v, p in zip(self.values, self.present)]


def _coerce_raw(raw_values: Sequence, name: str) -> tuple[np.ndarray, np.ndarray]:
    values = np.zeros(len(raw_values), dtype=np.int64)
    present = np.zeros(len(raw_values), dtype=bool)
    for i, v in enumerate(raw_values):
        if v is None or (isinstance(v, float) and np.isnan(v)):
            continue
        if isinstance(v, (bool, np.bool_)):
            raise ValueError(f"ordering {name!r}: boolean label at position {i}")
        fv = float(v)
        if not np.isfinite(fv) or fv != np.floor(fv):
            raise ValueError(f"ordering {name!r}: non-integral label {v!r} at position {i}")
        values[i] = int(fv)
        present[i] = True
    return values, present


def normalize_channel(
    raw_values: Sequence, ordering: OrderingSystem, groups=None
) -> LabelChannel:
    """Convert raw optional integer labels so that larger means more severe.

    >>> speech = OrderingSystem("speech", direction="lower_is_more_severe")
    >>> normalize_channel([4, 0, None], speech).as_optional()
    [-4, 0, None]
    """
    values, present = _coerce_raw(raw_values, ordering.name)
    if ordering.direction == "lower_is_more_severe":
        values = -values
    return LabelChannel(ordering, values, present, groups)


def chronology_channel(
    dataset, restrict_to: Sequence[str] | None = ("MND",), name: str = "chronology"
) -> LabelChannel:
    """Within-subject chronological ordering.

    The ordinal value of a sample is its assessment day.  Each subject forms
    its own comparison group, so a later recording of one subject is never
    compared with a recording of another.  Only subjects whose diagnosis is in
    ``restrict_to`` are labelled (``None`` labels everyone).
    """
    ordering = OrderingSystem(name, kind="chronology")
    subject_codes: dict[str, int] = {}
    n = len(dataset.samples)
    values = np.zeros(n, dtype=np.int64)
    present = np.zeros(n, dtype=bool)
    groups = np.zeros(n, dtype=np.int64)
    allowed = None if restrict_to is None else set(restrict_to)
    for i, s in enumerate(dataset.samples):
        groups[i] = subject_codes.setdefault(s.subject_id, len(subject_codes))
        diagnosis = dataset.subjects[s.subject_id].diagnosis
        if allowed is None or diagnosis in allowed:
            values[i] = int(round(s.time_days))
            present[i] = True
    return LabelChannel(ordering, values, present, groups)


def active_pairs(
    channel: LabelChannel, batch_indices=None
) -> tuple[int, Iterator[tuple[int, int]]]:
    """Comparable pairs ``(i, j)`` with ``i < j`` in batch-local positions.

    A pair is comparable when both labels are present and, for grouped
    channels, both samples belong to the same group.  Pairs with equal
    ordinals are included; they are exactly the pairs the comparator loss
    evaluates (and it assigns them zero).
    """
    ch = channel if batch_indices is None else channel.take(batch_indices)
    ii, jj = np.nonzero(np.triu(ch.comparable(), k=1))
    pairs = list(zip(ii.tolist(), jj.tolist()))
    return len(pairs), iter(pairs)
