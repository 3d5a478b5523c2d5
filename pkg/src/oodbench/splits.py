"""Cluster-holdout splits, leakage filtering, and fold assignment.

The split workflow runs in four stages, each producing a new manifest:

1. :func:`build_ood_split` sends every complex in a target's pocket
   cluster to that target's test set and pools the rest as train/val.
2. :func:`apply_clean_filter` removes train/val complexes that are too
   similar to a protected reference set, recording them as excluded.
3. :func:`stratified_kfold` deals the remaining train/val ids into k
   folds stratified by equal-width pK bins.
4. :func:`holdout_limited` samples a small fixed holdout from each
   target's test set for limited-data experiments; the reporting test
   set is then the original test set minus that holdout.

Manifests serialize to JSON deterministically, so identical inputs and
seeds reproduce byte-identical files.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset, SimilarityRecord
from .errors import SplitError, ValidationError

__all__ = [
    "FilterRule",
    "SplitManifest",
    "build_ood_split",
    "apply_clean_filter",
    "stratified_kfold",
    "holdout_limited",
    "validate_manifest",
    "DEFAULT_K",
    "DEFAULT_N_BINS",
    "DEFAULT_N_HOLDOUT",
    "DEFAULT_SIMILARITY_THRESHOLDS",
]

logger = logging.getLogger(__name__)

DEFAULT_K = 5
DEFAULT_N_BINS = 10
DEFAULT_N_HOLDOUT = 25
# Placeholder cutoffs, not calibrated against any published filter.
DEFAULT_SIMILARITY_THRESHOLDS = (0.9, 0.9, 0.9)


class FilterRule(str, Enum):
    """How the three similarity channels combine into a removal decision."""

    #: remove when ligand, pose, and pocket similarity all reach their cutoffs
    JOINT_ALL = "joint_all"
    #: remove when any single channel reaches its cutoff
    ANY = "any"


@dataclass(frozen=True)
class SplitManifest:
    """Complete, serializable description of one train/test split.

    The target test lists, ``train_val_ids``, and ``clean_excluded_ids``
    partition the dataset's ids. ``fold_assignment`` and
    ``limited_holdouts`` stay empty until the corresponding stage runs.
    """

    seed: int
    k: int = DEFAULT_K
    n_holdout: int = DEFAULT_N_HOLDOUT
    target_clusters: Mapping[str, str] = field(default_factory=dict)
    target_tests: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    train_val_ids: tuple[str, ...] = ()
    fold_assignment: Mapping[str, int] = field(default_factory=dict)
    clean_excluded_ids: tuple[str, ...] = ()
    limited_holdouts: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "target_clusters", dict(self.target_clusters))
        object.__setattr__(
            self, "target_tests", {t: tuple(ids) for t, ids in self.target_tests.items()}
        )
        object.__setattr__(self, "train_val_ids", tuple(self.train_val_ids))
        object.__setattr__(self, "fold_assignment", dict(self.fold_assignment))
        object.__setattr__(self, "clean_excluded_ids", tuple(self.clean_excluded_ids))
        object.__setattr__(
            self, "limited_holdouts", {t: tuple(ids) for t, ids in self.limited_holdouts.items()}
        )

    @property
    def target_names(self) -> tuple[str, ...]:
        return tuple(sorted(self.target_tests))

    def test_ids(self, target: str) -> tuple[str, ...]:
        try:
            return self.target_tests[target]
        except KeyError:
            raise SplitError(f"manifest has no target named {target!r}") from None

    def holdout_ids(self, target: str) -> tuple[str, ...]:
        ids = self.limited_holdouts.get(target)
        if ids is None:
            raise SplitError(f"no limited holdout recorded for target {target!r}")
        return ids

    def reporting_test_ids(self, target: str) -> tuple[str, ...]:
        """Test ids used for reporting: the full test set minus any holdout."""
        test = self.test_ids(target)
        held = set(self.limited_holdouts.get(target, ()))
        if not held:
            return test
        return tuple(i for i in test if i not in held)

    def fold_ids(self, fold: int) -> tuple[str, ...]:
        if not self.fold_assignment:
            raise SplitError("manifest has no fold assignment yet; run stratified_kfold")
        if not (0 <= fold < self.k):
            raise SplitError(f"fold index {fold} out of range for k={self.k}")
        return tuple(sorted(i for i, f in self.fold_assignment.items() if f == fold))

    # -- serialization ----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "k": self.k,
            "n_holdout": self.n_holdout,
            "targets": {
                name: {
                    "cluster_id": self.target_clusters[name],
                    "test_ids": list(self.target_tests[name]),
                    "holdout_ids": list(self.limited_holdouts.get(name, ())),
                }
                for name in sorted(self.target_tests)
            },
            "train_val": {
                "ids": list(self.train_val_ids),
                "folds": {i: self.fold_assignment[i] for i in sorted(self.fold_assignment)},
            },
            "clean_excluded": list(self.clean_excluded_ids),
        }

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "SplitManifest":
        targets = payload.get("targets", {})
        return cls(
            seed=payload["seed"],
            k=payload["k"],
            n_holdout=payload["n_holdout"],
            target_clusters={name: t["cluster_id"] for name, t in targets.items()},
            target_tests={name: tuple(t["test_ids"]) for name, t in targets.items()},
            train_val_ids=tuple(payload["train_val"]["ids"]),
            fold_assignment=dict(payload["train_val"]["folds"]),
            clean_excluded_ids=tuple(payload.get("clean_excluded", ())),
            limited_holdouts={
                name: tuple(t["holdout_ids"]) for name, t in targets.items() if t.get("holdout_ids")
            },
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "SplitManifest":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        """Stable content hash used to reference this split from run records."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def build_ood_split(
    dataset: Dataset,
    target_clusters: Mapping[str, str],
    seed: int,
    *,
    k: int = DEFAULT_K,
    n_holdout: int = DEFAULT_N_HOLDOUT,
) -> SplitManifest:
    """Hold out entire pocket clusters as per-target test sets.

    Every record whose ``cluster_id`` matches a requested target cluster
    goes to that target's test set; all remaining records form the
    train/val pool. Membership is decided purely by cluster id, so no
    train/val record can share a cluster with any test record.

    Parameters
    ----------
    dataset : Dataset
    target_clusters : mapping
        ``{target_name: cluster_id}``; cluster ids must be distinct and
        present in the dataset.
    seed : int
        Recorded on the manifest and reused by later seeded stages.

    Returns
    -------
    SplitManifest
        With test sets and the train/val pool filled in; folds and
        limited holdouts are left for later stages.
    """
    if not target_clusters:
        raise SplitError("at least one target cluster is required")
    duplicates = [c for c, n in Counter(target_clusters.values()).items() if n > 1]
    if duplicates:
        raise SplitError(f"target clusters must be distinct; repeated: {sorted(duplicates)}")
    known = set(dataset.cluster_ids)
    tests: dict[str, tuple[str, ...]] = {}
    for name in sorted(target_clusters):
        cluster = target_clusters[name]
        if cluster not in known:
            raise SplitError(f"target {name!r}: cluster {cluster!r} not present in the dataset")
        tests[name] = dataset.cluster_members(cluster)
    test_ids = {i for ids in tests.values() for i in ids}
    train_val = tuple(sorted(i for i in dataset.ids if i not in test_ids))
    if not train_val:
        raise SplitError("no records left for training after holding out the target clusters")
    return SplitManifest(
        seed=seed,
        k=k,
        n_holdout=n_holdout,
        target_clusters=dict(target_clusters),
        target_tests=tests,
        train_val_ids=train_val,
    )


def _meets_rule(
    record: SimilarityRecord, thresholds: tuple[float, float, float], rule: FilterRule
) -> bool:
    hits = (
        record.ligand_sim >= thresholds[0],
        record.pose_sim >= thresholds[1],
        record.pocket_sim >= thresholds[2],
    )
    return all(hits) if rule is FilterRule.JOINT_ALL else any(hits)


def apply_clean_filter(
    manifest: SplitManifest,
    similarities: Sequence[SimilarityRecord],
    reference_ids: Iterable[str],
    thresholds: tuple[float, float, float] = DEFAULT_SIMILARITY_THRESHOLDS,
    rule: FilterRule | str = FilterRule.JOINT_ALL,
    *,
    known_ids: Iterable[str] | None = None,
) -> SplitManifest:
    """Drop train/val ids too similar to a protected reference set.

    A train/val id is removed when any similarity record pairing it with
    a reference id satisfies ``rule`` at the given thresholds. Test sets
    are never touched; removed ids move to ``clean_excluded_ids`` and are
    also dropped from any existing fold assignment.

    Parameters
    ----------
    manifest : SplitManifest
    similarities : sequence of SimilarityRecord
        May cover ids outside the dataset; irrelevant pairs are skipped.
    reference_ids : iterable of str
        The protected set, e.g. an external benchmark. Need not be part
        of the dataset.
    thresholds : (ligand, pose, pocket) cutoffs in [0, 1]
    rule : FilterRule
        ``joint_all`` requires all three channels at or above their
        cutoffs; ``any`` requires one.
    known_ids : iterable of str, optional
        The full id universe for diagnostics; pairs naming ids outside it
        (and outside the reference set) are counted and logged.

    Returns
    -------
    SplitManifest
        New manifest with a reduced train/val pool.
    """
    rule = FilterRule(rule)
    thresholds = tuple(float(t) for t in thresholds)
    if len(thresholds) != 3 or not all(0.0 <= t <= 1.0 for t in thresholds):
        raise ValidationError(f"thresholds must be three values in [0, 1], got {thresholds!r}")
    reference = set(reference_ids)
    if not reference:
        raise ValidationError("reference_ids must be non-empty")
    train_val = set(manifest.train_val_ids)
    universe = set(known_ids) | reference if known_ids is not None else None

    removed: set[str] = set()
    n_unknown = 0
    for record in similarities:
        if universe is not None and (record.id_a not in universe or record.id_b not in universe):
            n_unknown += 1
            continue
        if not _meets_rule(record, thresholds, rule):
            continue
        for tv_id, ref_id in ((record.id_a, record.id_b), (record.id_b, record.id_a)):
            if tv_id in train_val and ref_id in reference:
                removed.add(tv_id)
    if n_unknown:
        logger.warning("skipped %d similarity records naming unknown ids", n_unknown)

    kept = tuple(i for i in manifest.train_val_ids if i not in removed)
    folds = {i: f for i, f in manifest.fold_assignment.items() if i not in removed}
    excluded = tuple(sorted(set(manifest.clean_excluded_ids) | removed))
    return dataclasses.replace(
        manifest, train_val_ids=kept, fold_assignment=folds, clean_excluded_ids=excluded
    )


def stratified_kfold(
    manifest: SplitManifest,
    dataset: Dataset,
    k: int | None = None,
    n_bins: int = DEFAULT_N_BINS,
) -> SplitManifest:
    """Assign train/val ids to k folds stratified by pK bins.

    Labels are cut into ``n_bins`` equal-width bins spanning the observed
    range of the train/val pool. Within each bin the ids are shuffled
    with the manifest seed and dealt round-robin, continuing the deal
    position across bins, so per-bin fold counts differ by at most one
    and overall fold sizes stay balanced.

    Raises
    ------
    SplitError
        If fewer train/val records than folds exist.
    """
    k = manifest.k if k is None else int(k)
    if k < 2:
        raise SplitError(f"k must be at least 2, got {k}")
    if n_bins < 1:
        raise SplitError(f"n_bins must be at least 1, got {n_bins}")
    ids = sorted(manifest.train_val_ids)
    if len(ids) < k:
        raise SplitError(f"cannot deal {len(ids)} train/val records into {k} folds")
    labels = np.array([dataset.get(i).pk_value for i in ids])

    low, high = float(labels.min()), float(labels.max())
    if high > low:
        # right-open bins except the last, which is closed at the top
        width = (high - low) / n_bins
        bins = np.minimum(((labels - low) / width).astype(int), n_bins - 1)
    else:
        bins = np.zeros(len(ids), dtype=int)

    rng = np.random.default_rng(manifest.seed)
    assignment: dict[str, int] = {}
    position = 0
    for bin_index in range(n_bins):
        members = [ids[j] for j in range(len(ids)) if bins[j] == bin_index]
        if not members:
            continue
        order = rng.permutation(len(members))
        for j in order:
            assignment[members[j]] = position % k
            position += 1
    return dataclasses.replace(manifest, k=k, fold_assignment=assignment)


def holdout_limited(
    manifest: SplitManifest,
    n_holdout: int | None = None,
    seed: int | None = None,
) -> SplitManifest:
    """Sample a fixed-size holdout from every target test set.

    Sampling is uniform without replacement and deterministic: targets
    are visited in sorted name order with a single generator seeded by
    ``seed`` (defaulting to the manifest seed). The holdout supports
    limited-data training strategies while the remaining test ids stay
    untouched for reporting.

    Raises
    ------
    SplitError
        If any target test set does not exceed ``n_holdout``, naming the
        target.
    """
    n_holdout = manifest.n_holdout if n_holdout is None else int(n_holdout)
    if n_holdout < 1:
        raise SplitError(f"n_holdout must be at least 1, got {n_holdout}")
    rng = np.random.default_rng(manifest.seed if seed is None else seed)
    holdouts: dict[str, tuple[str, ...]] = {}
    for name in sorted(manifest.target_tests):
        test = manifest.target_tests[name]
        if len(test) <= n_holdout:
            raise SplitError(
                f"target {name!r}: test set of {len(test)} cannot spare a holdout of {n_holdout}"
            )
        picked = rng.choice(np.array(sorted(test)), size=n_holdout, replace=False)
        holdouts[name] = tuple(sorted(str(i) for i in picked))
    return dataclasses.replace(manifest, n_holdout=n_holdout, limited_holdouts=holdouts)


def validate_manifest(manifest: SplitManifest, dataset: Dataset) -> None:
    """Check all structural invariants of a manifest against its dataset.

    Raises ``SplitError`` describing the first violation found: overlap
    between partitions, an incomplete partition, fold indices out of
    range, cluster leakage between train/val and test, or holdouts that
    are not subsets of their test sets.
    """
    tests = [set(ids) for ids in manifest.target_tests.values()]
    train_val = set(manifest.train_val_ids)
    excluded = set(manifest.clean_excluded_ids)
    parts = tests + [train_val, excluded]
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            overlap = parts[i] & parts[j]
            if overlap:
                raise SplitError(f"manifest partitions overlap: {sorted(overlap)[:10]}")
    union = set().union(*parts) if parts else set()
    all_ids = set(dataset.ids)
    if union != all_ids:
        missing = sorted(all_ids - union)[:10]
        extra = sorted(union - all_ids)[:10]
        raise SplitError(f"manifest does not partition the dataset: missing {missing}, extra {extra}")

    test_clusters = {dataset.get(i).cluster_id for ids in manifest.target_tests.values() for i in ids}
    for i in manifest.train_val_ids:
        if dataset.get(i).cluster_id in test_clusters:
            raise SplitError(f"train/val id {i!r} shares a cluster with a test set")

    for i, f in manifest.fold_assignment.items():
        if i not in train_val:
            raise SplitError(f"fold assignment covers non-train id {i!r}")
        if not (0 <= f < manifest.k):
            raise SplitError(f"fold index {f} for id {i!r} out of range for k={manifest.k}")

    for name, held in manifest.limited_holdouts.items():
        test = set(manifest.target_tests.get(name, ()))
        stray = set(held) - test
        if stray:
            raise SplitError(f"target {name!r}: holdout ids outside the test set: {sorted(stray)}")
        if len(held) != len(set(held)):
            raise SplitError(f"target {name!r}: holdout contains duplicates")
