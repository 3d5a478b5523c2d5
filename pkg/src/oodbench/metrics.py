"""Scoring, docking, and screening metrics plus report assembly.

Scoring quality is summarized per target by the sample Pearson
correlation and RMSE between predicted and measured pK. Docking and
screening quality are computed from ranked decoy sets: the fraction of
targets whose top-ranked pose is near-native, and the enrichment factor
of actives in the top fraction of a score-sorted screen.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import IngestError, UndefinedMetricError, ValidationError

__all__ = [
    "pearson",
    "rmse",
    "EntryKind",
    "DecoyEntry",
    "DecoySet",
    "docking_success_rate",
    "enrichment_factor",
    "TargetMetrics",
    "MetricReport",
    "build_report",
    "read_decoy_table",
    "write_decoy_table",
    "DEFAULT_RMSD_CUTOFF",
    "DEFAULT_TOP_N",
    "DEFAULT_EF_FRACTIONS",
    "DECOY_COLUMNS",
]

DEFAULT_RMSD_CUTOFF = 2.0
DEFAULT_TOP_N = 1
# Conventional early-recognition fractions for screening benchmarks.
DEFAULT_EF_FRACTIONS = (0.005, 0.01, 0.05, 0.1)

DECOY_COLUMNS = ("target_id", "entry_id", "kind", "score", "rmsd")


def _paired(predicted: Sequence[float], actual: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(predicted, dtype=np.float64)
    y = np.asarray(actual, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValidationError("metric inputs must be 1-d sequences")
    if x.size != y.size:
        raise ValidationError(f"length mismatch: {x.size} predictions vs {y.size} labels")
    if x.size == 0:
        raise ValidationError("metric inputs must be non-empty")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValidationError("metric inputs contain non-finite values")
    return x, y


def pearson(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Sample Pearson correlation between two equal-length sequences.

    Raises
    ------
    ValidationError
        If the sequences differ in length or have fewer than 2 elements.
    UndefinedMetricError
        If either sequence has zero variance.
    """
    x, y = _paired(predicted, actual)
    if x.size < 2:
        raise ValidationError("pearson requires at least 2 paired values")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.dot(dx, dx)))
    sy = float(np.sqrt(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedMetricError("pearson is undefined for a zero-variance input")
    r = float(np.dot(dx, dy) / (sx * sy))
    # Guard round-off so callers can rely on the mathematical range.
    return min(1.0, max(-1.0, r))


def rmse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Root mean squared error between predictions and labels."""
    x, y = _paired(predicted, actual)
    return float(np.sqrt(np.mean((x - y) ** 2)))


class EntryKind(str, Enum):
    """Role of one entry inside a decoy set."""

    NATIVE_POSE = "native_pose"
    DECOY_POSE = "decoy_pose"
    ACTIVE = "active"
    INACTIVE = "inactive"


POSE_KINDS = frozenset({EntryKind.NATIVE_POSE, EntryKind.DECOY_POSE})
SCREEN_KINDS = frozenset({EntryKind.ACTIVE, EntryKind.INACTIVE})


@dataclass(frozen=True)
class DecoyEntry:
    """One scored candidate inside a decoy set."""

    entry_id: str
    kind: EntryKind
    score: float | None = None
    rmsd_to_native: float | None = None

    def __post_init__(self) -> None:
        if not self.entry_id:
            raise ValidationError("entry_id must be non-empty")
        if not isinstance(self.kind, EntryKind):
            object.__setattr__(self, "kind", EntryKind(self.kind))
        if self.score is not None and not math.isfinite(float(self.score)):
            raise ValidationError(f"entry {self.entry_id!r}: score must be finite")
        if self.rmsd_to_native is not None:
            value = float(self.rmsd_to_native)
            if not math.isfinite(value) or value < 0.0:
                raise ValidationError(f"entry {self.entry_id!r}: rmsd must be non-negative")


@dataclass(frozen=True)
class DecoySet:
    """Named collection of scored candidates for one target.

    A set is either a docking set (native/decoy poses, each with an RMSD
    to the native pose) or a screening set (actives/inactives); the two
    entry families cannot be mixed.
    """

    target_id: str
    entries: tuple[DecoyEntry, ...]

    def __post_init__(self) -> None:
        if not self.target_id:
            raise ValidationError("target_id must be non-empty")
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise ValidationError(f"decoy set {self.target_id!r} is empty")
        ids = [e.entry_id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"decoy set {self.target_id!r} has duplicate entry ids")
        kinds = {e.kind for e in entries}
        if kinds <= POSE_KINDS:
            missing = [e.entry_id for e in entries if e.rmsd_to_native is None]
            if missing:
                raise ValidationError(
                    f"docking set {self.target_id!r}: entries missing rmsd: {missing}"
                )
        elif not kinds <= SCREEN_KINDS:
            raise ValidationError(
                f"decoy set {self.target_id!r} mixes pose and screening entry kinds"
            )

    @property
    def is_docking(self) -> bool:
        return {e.kind for e in self.entries} <= POSE_KINDS


def _ranked(entries: Sequence[DecoyEntry]) -> list[DecoyEntry]:
    # Higher score ranks first; ties broken by entry_id so rankings are
    # reproducible regardless of input order.
    for entry in entries:
        if entry.score is None:
            raise ValidationError(f"entry {entry.entry_id!r} has no score")
    return sorted(entries, key=lambda e: (-float(e.score), e.entry_id))


def docking_success_rate(
    decoy_sets: Sequence[DecoySet],
    rmsd_cutoff: float = DEFAULT_RMSD_CUTOFF,
    top_n: int = DEFAULT_TOP_N,
) -> float:
    """Fraction of docking sets whose top-ranked poses contain a near-native one.

    A set counts as a success when any of its ``top_n`` highest-scored
    poses has RMSD to the native pose at most ``rmsd_cutoff`` angstrom.

    Raises
    ------
    ValidationError
        If no sets are given, a set is not a docking set, or parameters
        are out of range.
    """
    if not decoy_sets:
        raise ValidationError("docking_success_rate requires at least one decoy set")
    if rmsd_cutoff <= 0.0:
        raise ValidationError(f"rmsd_cutoff must be positive, got {rmsd_cutoff!r}")
    if top_n < 1:
        raise ValidationError(f"top_n must be at least 1, got {top_n!r}")
    successes = 0
    for dset in decoy_sets:
        if not dset.is_docking:
            raise ValidationError(f"decoy set {dset.target_id!r} is not a docking set")
        top = _ranked(dset.entries)[:top_n]
        if any(e.rmsd_to_native <= rmsd_cutoff for e in top):
            successes += 1
    return successes / len(decoy_sets)


def enrichment_factor(decoy_set: DecoySet, top_fraction: float) -> float:
    """Enrichment of actives in the top fraction of a score-ranked screen.

    The top ``ceil(top_fraction * N)`` entries are selected after sorting
    by descending score (ties broken by entry id); the result is the
    active rate inside that selection divided by the overall active rate.
    ``top_fraction = 1`` therefore gives exactly 1.

    Raises
    ------
    ValidationError
        If the set is not a screening set or ``top_fraction`` is outside
        (0, 1].
    UndefinedMetricError
        If the set contains no actives.
    """
    if not (0.0 < top_fraction <= 1.0):
        raise ValidationError(f"top_fraction must lie in (0, 1], got {top_fraction!r}")
    if decoy_set.is_docking:
        raise ValidationError(f"decoy set {decoy_set.target_id!r} is not a screening set")
    entries = decoy_set.entries
    n_total = len(entries)
    n_actives = sum(1 for e in entries if e.kind is EntryKind.ACTIVE)
    if n_actives == 0:
        raise UndefinedMetricError(
            f"enrichment factor undefined: no actives in set {decoy_set.target_id!r}"
        )
    n_top = math.ceil(top_fraction * n_total)
    top = _ranked(entries)[:n_top]
    actives_top = sum(1 for e in top if e.kind is EntryKind.ACTIVE)
    return (actives_top / n_top) / (n_actives / n_total)


@dataclass(frozen=True)
class TargetMetrics:
    """Per-target scoring summary."""

    pearson_r: float
    rmse: float
    n: int

    def to_json_dict(self) -> dict:
        return {"pearson_r": self.pearson_r, "rmse": self.rmse, "n": self.n}


@dataclass(frozen=True)
class MetricReport:
    """Per-target scoring metrics with aggregate rows.

    The aggregate carries the plain average and the minimum of the
    per-target Pearson correlations; the minimum surfaces the worst-case
    target that an average alone would hide.
    """

    per_target: Mapping[str, TargetMetrics]
    avg_pearson: float
    min_pearson: float
    docking: Mapping[str, float] = field(default_factory=dict)
    screening: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    @classmethod
    def from_per_target(
        cls,
        per_target: Mapping[str, TargetMetrics],
        docking: Mapping[str, float] | None = None,
        screening: Mapping[str, Mapping[str, float]] | None = None,
    ) -> "MetricReport":
        if not per_target:
            raise ValidationError("a metric report needs at least one target")
        values = [m.pearson_r for m in per_target.values()]
        return cls(
            per_target=dict(per_target),
            avg_pearson=float(np.mean(values)),
            min_pearson=float(min(values)),
            docking=dict(docking or {}),
            screening=dict(screening or {}),
        )

    def to_json_dict(self) -> dict:
        payload: dict = {
            "per_target": {name: m.to_json_dict() for name, m in sorted(self.per_target.items())},
            "aggregate": {"avg_pearson": self.avg_pearson, "min_pearson": self.min_pearson},
        }
        if self.docking:
            payload["docking"] = dict(sorted(self.docking.items()))
        if self.screening:
            payload["screening"] = {
                name: dict(sorted(values.items())) for name, values in sorted(self.screening.items())
            }
        return payload

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), sort_keys=True, indent=1))

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "MetricReport":
        per_target = {
            name: TargetMetrics(m["pearson_r"], m["rmse"], m["n"])
            for name, m in payload["per_target"].items()
        }
        return cls(
            per_target=per_target,
            avg_pearson=payload["aggregate"]["avg_pearson"],
            min_pearson=payload["aggregate"]["min_pearson"],
            docking=dict(payload.get("docking", {})),
            screening={k: dict(v) for k, v in payload.get("screening", {}).items()},
        )

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def to_csv_rows(self) -> list[list[str]]:
        """Flatten to rows of (target, pearson_r, rmse, n) plus aggregates."""
        rows = [["target", "pearson_r", "rmse", "n"]]
        for name, m in sorted(self.per_target.items()):
            rows.append([name, repr(m.pearson_r), repr(m.rmse), str(m.n)])
        rows.append(["Avg", repr(self.avg_pearson), "", ""])
        rows.append(["Min", repr(self.min_pearson), "", ""])
        return rows


def build_report(
    predictions_per_target: Mapping[str, Mapping[str, float]],
    dataset,
    manifest,
    *,
    docking_sets: Sequence[DecoySet] | None = None,
    screening_sets: Sequence[DecoySet] | None = None,
    rmsd_cutoff: float = DEFAULT_RMSD_CUTOFF,
    top_n: int = DEFAULT_TOP_N,
    ef_fractions: Sequence[float] = DEFAULT_EF_FRACTIONS,
) -> MetricReport:
    """Assemble a metric report from per-target predictions.

    Parameters
    ----------
    predictions_per_target : mapping
        ``{target_name: {complex_id: predicted_pk}}``. Each inner mapping
        must cover exactly the manifest's reporting test ids for that
        target (the held-out test set minus any limited-data holdout).
    dataset : Dataset
        Supplies the measured labels.
    manifest : SplitManifest
        Defines the reporting test ids per target.
    docking_sets, screening_sets : sequences of DecoySet, optional
        When given, docking success rate and per-fraction mean enrichment
        factors are added to the report.

    Raises
    ------
    ValidationError
        If predictions are missing or extraneous for any target, listing
        the offending ids.
    UndefinedMetricError
        If a target's labels or predictions have zero variance; reports
        never substitute placeholder values.
    """
    if not predictions_per_target:
        raise ValidationError("no predictions given")
    per_target: dict[str, TargetMetrics] = {}
    for name in sorted(predictions_per_target):
        preds = predictions_per_target[name]
        expected = manifest.reporting_test_ids(name)
        missing = sorted(set(expected) - set(preds))
        extra = sorted(set(preds) - set(expected))
        if missing or extra:
            raise ValidationError(
                f"target {name!r}: predictions must cover exactly the reporting test set; "
                f"missing {missing[:10]}{'...' if len(missing) > 10 else ''}, "
                f"unexpected {extra[:10]}{'...' if len(extra) > 10 else ''}"
            )
        ordered = sorted(expected)
        predicted = [preds[i] for i in ordered]
        actual = [dataset.get(i).pk_value for i in ordered]
        try:
            r = pearson(predicted, actual)
        except UndefinedMetricError as exc:
            raise UndefinedMetricError(f"target {name!r}: {exc}") from exc
        per_target[name] = TargetMetrics(pearson_r=r, rmse=rmse(predicted, actual), n=len(ordered))

    docking: dict[str, float] = {}
    if docking_sets:
        docking["success_rate"] = docking_success_rate(docking_sets, rmsd_cutoff, top_n)
        docking["rmsd_cutoff"] = float(rmsd_cutoff)
        docking["top_n"] = float(top_n)
    screening: dict[str, dict[str, float]] = {}
    if screening_sets:
        for fraction in ef_fractions:
            key = f"ef_{fraction:g}"
            values = [enrichment_factor(s, fraction) for s in screening_sets]
            screening[key] = {
                "mean": float(np.mean(values)),
                "top_fraction": float(fraction),
            }
    return MetricReport.from_per_target(per_target, docking=docking, screening=screening)


def read_decoy_table(path: str | Path) -> list[DecoySet]:
    """Read decoy sets from a CSV with columns ``target_id,entry_id,kind,
    score,rmsd``; score and rmsd may be empty."""
    path = Path(path)
    grouped: dict[str, list[DecoyEntry]] = {}
    order: list[str] = []
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        missing = [c for c in DECOY_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise IngestError(f"{path}: missing required columns {missing}")
        for row_num, row in enumerate(reader, start=2):
            try:
                target = (row["target_id"] or "").strip()
                score_text = (row.get("score") or "").strip()
                rmsd_text = (row.get("rmsd") or "").strip()
                entry = DecoyEntry(
                    entry_id=(row["entry_id"] or "").strip(),
                    kind=EntryKind((row["kind"] or "").strip()),
                    score=float(score_text) if score_text else None,
                    rmsd_to_native=float(rmsd_text) if rmsd_text else None,
                )
            except (TypeError, ValueError, ValidationError) as exc:
                raise IngestError(f"{path} row {row_num}: {exc}") from exc
            if target not in grouped:
                grouped[target] = []
                order.append(target)
            grouped[target].append(entry)
    return [DecoySet(target_id=t, entries=tuple(grouped[t])) for t in order]


def write_decoy_table(decoy_sets: Sequence[DecoySet], path: str | Path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(DECOY_COLUMNS)
        for dset in decoy_sets:
            for e in dset.entries:
                writer.writerow(
                    [
                        dset.target_id,
                        e.entry_id,
                        e.kind.value,
                        "" if e.score is None else repr(float(e.score)),
                        "" if e.rmsd_to_native is None else repr(float(e.rmsd_to_native)),
                    ]
                )
