"""Cohort manifests, stratified splits, and class-balancing augmentation plans."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

# Two age groups: spectral clustering of real cohorts separates infants from
# older children at 4 years.
AGE_GROUPS = ((0.0, 4.0), (4.0, 20.0))

SPLITS = ("train", "val", "test")
PROVENANCES = ("real", "augmented", "synthetic")


class CohortError(Exception):
    pass


def age_group(age: float) -> int:
    """0 for ages in [0, 4), 1 for [4, 20]."""
    if not 0.0 <= age <= 20.0:
        raise CohortError(f"age {age} outside [0, 20]")
    return 0 if age < AGE_GROUPS[0][1] else 1


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    class_label: str
    age: float
    sex: str
    mesh_path: str
    provenance: str = "real"
    parents: tuple[str, str] | None = None
    split: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.age <= 20.0:
            raise CohortError(f"{self.id}: age {self.age} outside [0, 20]")
        if self.sex not in ("M", "F"):
            raise CohortError(f"{self.id}: sex must be M or F")
        if self.provenance not in PROVENANCES:
            raise CohortError(f"{self.id}: unknown provenance {self.provenance!r}")
        if self.provenance == "augmented" and (self.parents is None or len(self.parents) != 2):
            raise CohortError(f"{self.id}: augmented records need two parent ids")
        if self.split is not None and self.split not in SPLITS:
            raise CohortError(f"{self.id}: unknown split {self.split!r}")


def save_manifest(records: list[SubjectRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "class", "age", "sex", "provenance",
                         "parents", "mesh_path", "split"])
        for r in records:
            parents = "|".join(r.parents) if r.parents else ""
            writer.writerow([r.id, r.class_label, f"{r.age:.17g}", r.sex,
                             r.provenance, parents, r.mesh_path, r.split or ""])


def load_manifest(path: str | Path) -> list[SubjectRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parents = tuple(row["parents"].split("|")) if row["parents"] else None
            records.append(SubjectRecord(
                id=row["id"], class_label=row["class"], age=float(row["age"]),
                sex=row["sex"], provenance=row["provenance"], parents=parents,
                mesh_path=row["mesh_path"], split=row["split"] or None))
    return records


def stratified_split(records: list[SubjectRecord],
                     ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
                     seed: int = 0) -> dict[str, str]:
    """Assign train/val/test per subject, stratified by class.

    Within each class the counts honour the ratios to rounding (val and test
    get round(ratio * n) each, train the remainder). Deterministic for a
    given seed. Only real/synthetic subjects should be split; augmented ones
    belong to train by construction.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CohortError("split ratios must sum to 1")
    by_class: dict[str, list[SubjectRecord]] = {}
    for r in records:
        by_class.setdefault(r.class_label, []).append(r)
    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    for label in sorted(by_class):
        group = sorted(by_class[label], key=lambda r: r.id)
        n = len(group)
        if n < 3:
            raise CohortError(f"class {label!r} has {n} subjects; need at least 3")
        order = rng.permutation(n)
        n_val = max(1, round(ratios[1] * n))
        n_test = max(1, round(ratios[2] * n))
        if n_val + n_test >= n:
            raise CohortError(f"class {label!r} too small for ratios {ratios}")
        for pos, idx in enumerate(order):
            if pos < n_val:
                split = "val"
            elif pos < n_val + n_test:
                split = "test"
            else:
                split = "train"
            assignment[group[idx].id] = split
    return assignment


def apply_split(records: list[SubjectRecord], assignment: dict[str, str]) -> list[SubjectRecord]:
    return [replace(r, split=assignment.get(r.id, r.split)) for r in records]


def plan_augmentation(train_records: list[SubjectRecord], target_per_class: int,
                      seed: int = 0) -> list[tuple[str, str, int]]:
    """Plan (parent1, parent2, seed) triples that top each class up to target.

    Pairs are drawn uniformly with replacement from the unordered same-class,
    same-age-group pairs; classes already at or above target get none.
    """
    by_class: dict[str, list[SubjectRecord]] = {}
    for r in train_records:
        by_class.setdefault(r.class_label, []).append(r)
    rng = np.random.default_rng(seed)
    plan: list[tuple[str, str, int]] = []
    for label in sorted(by_class):
        group = sorted(by_class[label], key=lambda r: r.id)
        if len(group) < 2:
            raise CohortError(f"class {label!r} needs at least 2 training subjects")
        needed = target_per_class - len(group)
        if needed <= 0:
            continue
        pairs: list[tuple[str, str]] = []
        for g in range(len(AGE_GROUPS)):
            members = [r.id for r in group if age_group(r.age) == g]
            pairs.extend((members[i], members[j])
                         for i in range(len(members))
                         for j in range(i + 1, len(members)))
        if not pairs:
            raise CohortError(
                f"class {label!r} has no age group with 2 or more training subjects")
        choices = rng.integers(len(pairs), size=needed)
        for c in choices:
            plan.append((*pairs[c], int(rng.integers(2**31 - 1))))
    return plan


def class_counts(records: list[SubjectRecord], split: str | None = None) -> dict[str, int]:
    counts: dict[str, int] = {}
    for r in records:
        if split is None or r.split == split:
            counts[r.class_label] = counts.get(r.class_label, 0) + 1
    return counts
