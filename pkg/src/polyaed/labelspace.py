"""Partition event categories into task groups and translate between the
multi-label frame view and per-group multi-class indices.

Within a group, every subset of active categories is one class. The class
index is the bitmask of active members, with the group's first member as the
least significant bit, so encode/decode are exact inverses by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_CATEGORIES = (
    "alarms & sirens",
    "baby crying",
    "bird singing",
    "bus",
    "cat meowing",
    "crowd applause",
    "crowd cheering",
    "dog barking",
    "footsteps",
    "glass smash",
    "gun shot",
    "horsewalk",
    "mixer",
    "motorcycle",
    "rain",
    "thunder",
)


@dataclass(frozen=True)
class CategorySet:
    """Ordered, unique category names; the order is fixed for a run."""

    names: tuple[str, ...] = DEFAULT_CATEGORIES

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("category names must be unique")
        if not self.names:
            raise ValueError("category set must not be empty")

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"unknown category {name!r}") from None


@dataclass(frozen=True)
class TaskDecomposition:
    """Ordered partition of category indices into disjoint groups covering all."""

    groups: tuple[tuple[int, ...], ...]
    num_categories: int = field(default=0)

    def __post_init__(self):
        total = self.num_categories or sum(len(g) for g in self.groups)
        object.__setattr__(self, "num_categories", total)
        seen = set()
        for g in self.groups:
            if not g:
                raise ValueError("task groups must be non-empty")
            for idx in g:
                if not 0 <= idx < total:
                    raise ValueError(f"category index {idx} out of range [0, {total})")
                if idx in seen:
                    raise ValueError(f"category index {idx} appears in more than one group")
                seen.add(idx)
        if len(seen) != total:
            missing = sorted(set(range(total)) - seen)
            raise ValueError(f"groups must cover every category; missing {missing}")

    @property
    def num_tasks(self) -> int:
        return len(self.groups)


def equal_split(num_categories: int, num_tasks: int) -> TaskDecomposition:
    """Contiguous equal-size groups in listed category order."""
    if num_tasks < 1:
        raise ValueError(f"task count must be positive, got {num_tasks}")
    if num_categories % num_tasks != 0:
        raise ValueError(
            f"{num_tasks} tasks cannot split {num_categories} categories equally; "
            "pass an explicit decomposition instead"
        )
    size = num_categories // num_tasks
    groups = tuple(
        tuple(range(n * size, (n + 1) * size)) for n in range(num_tasks)
    )
    return TaskDecomposition(groups=groups, num_categories=num_categories)


def encode_group(active, group) -> int:
    """Class index of the active-category subset; non-members are ignored."""
    idx = 0
    for pos, cat in enumerate(group):
        if cat in active:
            idx |= 1 << pos
    return idx


def decode_group(idx: int, group):
    """Inverse of encode_group: the set of active category indices."""
    if not 0 <= idx < (1 << len(group)):
        raise ValueError(f"class index {idx} out of range [0, {1 << len(group)})")
    return {cat for pos, cat in enumerate(group) if idx & (1 << pos)}


def class_count(decomp: TaskDecomposition):
    """Number of classes per task: 2**group_size."""
    return [1 << len(g) for g in decomp.groups]


def encode_targets(labels: np.ndarray, decomp: TaskDecomposition) -> np.ndarray:
    """Binary (T,Y) activity to (T,N) per-task class indices."""
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[1] != decomp.num_categories:
        raise ValueError(
            f"labels must be (T,{decomp.num_categories}), got {labels.shape}"
        )
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary")
    out = np.zeros((labels.shape[0], decomp.num_tasks), dtype=np.int64)
    for n, group in enumerate(decomp.groups):
        weights = np.array([1 << p for p in range(len(group))], dtype=np.int64)
        out[:, n] = labels[:, list(group)].astype(np.int64) @ weights
    return out


def decode_predictions(indices: np.ndarray, decomp: TaskDecomposition) -> np.ndarray:
    """Per-task class indices (T,N) back to binary (T,Y) activity."""
    indices = np.asarray(indices)
    if indices.ndim != 2 or indices.shape[1] != decomp.num_tasks:
        raise ValueError(
            f"indices must be (T,{decomp.num_tasks}), got {indices.shape}"
        )
    out = np.zeros((indices.shape[0], decomp.num_categories), dtype=np.int64)
    for n, group in enumerate(decomp.groups):
        col = indices[:, n]
        limit = 1 << len(group)
        if col.min(initial=0) < 0 or col.max(initial=0) >= limit:
            bad = col[(col < 0) | (col >= limit)][0]
            raise ValueError(f"class index {bad} out of range [0, {limit}) for task {n}")
        for pos, cat in enumerate(group):
            out[:, cat] = (col >> pos) & 1
    return out
