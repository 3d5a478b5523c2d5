"""Training regimes over a split manifest: k-fold ensembles, target-site
validation, and few-shot fine-tuning.

Three regimes produce ensembles from the same fold structure:

- ``skf``: one scorer per fold, early-stopped on its own held-out fold;
  the ensemble predicts the arithmetic mean of its members.
- ``val``: the same fold training sets, but every member early-stops on
  a small fixed holdout drawn from the evaluation target's test set.
  The training data itself is unchanged.
- ``ft``: takes a trained ``skf`` ensemble, picks the member with the
  best own-fold validation correlation, and resumes its optimization on
  exactly the target holdout complexes at a reduced learning rate with
  no early stopping.

Test complexes never contribute gradients in any regime; every trained
member records the ids it used for gradients and validation so this can
be audited after the fact.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import ComplexRecord, Dataset
from .errors import SplitError, ValidationError
from .scorers import (
    ScorerConfig,
    TrainedScorer,
    continue_training,
    fit,
    has_required_embeddings,
    load_scorer,
    predict,
    save_scorer,
)
from .splits import SplitManifest

__all__ = [
    "Regime",
    "SourceSelection",
    "FinetuneConfig",
    "TrainedEnsemble",
    "CurvePoint",
    "cross_validate",
    "train_with_target_validation",
    "finetune",
    "ensemble_predict",
    "track_curves",
    "write_curve_table",
    "read_curve_table",
    "save_ensemble",
    "load_ensemble",
    "member_seed",
    "CURVE_COLUMNS",
]

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ("eval_set", "epoch_pct", "n_members", "mean_pearson", "std_pearson")


class Regime(str, Enum):
    SKF = "skf"
    VAL = "val"
    FT = "ft"


class SourceSelection(str, Enum):
    """Which ensemble members fine-tuning starts from."""

    BEST_VAL_MEMBER = "best_val_member"
    ALL_MEMBERS = "all_members"


@dataclass(frozen=True)
class FinetuneConfig:
    """Settings for few-shot fine-tuning on a target holdout.

    ``finetune_learning_rate=None`` means one tenth of the source
    member's base learning rate. Zero is allowed and leaves the source
    parameters untouched, which is useful as a control.
    """

    finetune_epochs: int = 25
    finetune_learning_rate: float | None = None
    source_selection: SourceSelection = SourceSelection.BEST_VAL_MEMBER
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "source_selection", SourceSelection(self.source_selection))
        if self.finetune_epochs < 1:
            raise ValidationError(
                f"finetune_epochs must be at least 1, got {self.finetune_epochs!r}"
            )
        if self.finetune_learning_rate is not None:
            lr = float(self.finetune_learning_rate)
            if lr < 0.0 or not math.isfinite(lr):
                raise ValidationError(
                    f"finetune_learning_rate must be non-negative, got {lr!r}"
                )

    def to_json_dict(self) -> dict:
        return {
            "finetune_epochs": self.finetune_epochs,
            "finetune_learning_rate": self.finetune_learning_rate,
            "source_selection": self.source_selection.value,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "FinetuneConfig":
        return cls(
            finetune_epochs=payload.get("finetune_epochs", 25),
            finetune_learning_rate=payload.get("finetune_learning_rate"),
            source_selection=SourceSelection(payload.get("source_selection", "best_val_member")),
            seed=payload.get("seed"),
        )


@dataclass(eq=False)
class TrainedEnsemble:
    """Trained members plus the provenance needed to reuse them."""

    members: list[TrainedScorer]
    regime: Regime
    manifest_ref: str
    source_member_index: int | None = None
    member_folds: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.members:
            raise ValidationError("an ensemble needs at least one member")
        kinds = {m.config.scorer_kind for m in self.members}
        dims = {m.input_dimension for m in self.members}
        if len(kinds) != 1 or len(dims) != 1:
            raise ValidationError(
                f"ensemble members disagree on scorer kind ({sorted(k.value for k in kinds)}) "
                f"or input dimension ({sorted(dims)})"
            )
        if not self.member_folds:
            self.member_folds = tuple(range(len(self.members)))

    @property
    def max_epochs(self) -> int:
        return max(m.config.max_epochs for m in self.members)

    def audit(self) -> dict[int, dict[str, tuple[str, ...]]]:
        """Per member, the ids that contributed gradients and validation."""
        return {
            i: {"gradient_ids": m.gradient_ids, "validation_ids": m.validation_ids}
            for i, m in enumerate(self.members)
        }


def member_seed(base_seed: int, member_index: int) -> int:
    """Stable per-member seed derived from the shared base seed."""
    return int(np.random.SeedSequence([base_seed, member_index]).generate_state(1)[0])


def _embedded(records: Sequence[ComplexRecord], config: ScorerConfig) -> list[ComplexRecord]:
    return [r for r in records if has_required_embeddings(r, config.scorer_kind)]


def _filter_eval_sets(
    eval_sets: Mapping[str, Sequence[ComplexRecord]] | None, config: ScorerConfig
) -> dict[str, list[ComplexRecord]] | None:
    if not eval_sets:
        return None
    filtered: dict[str, list[ComplexRecord]] = {}
    for name, records in eval_sets.items():
        usable = _embedded(records, config)
        if len(usable) < 2:
            logger.warning(
                "eval set %r has %d usable records; skipping curve tracking for it",
                name,
                len(usable),
            )
            continue
        filtered[name] = usable
    return filtered or None


def _fold_members(
    dataset: Dataset, manifest: SplitManifest, config: ScorerConfig
) -> list[tuple[int, list[ComplexRecord], list[ComplexRecord]]]:
    """(fold, train records, own-fold records) per member, embedding-filtered."""
    if not manifest.fold_assignment:
        raise SplitError("manifest has no fold assignment; run stratified_kfold first")
    pool = [dataset.get(i) for i in manifest.train_val_ids]
    usable = _embedded(pool, config)
    dropped = len(pool) - len(usable)
    if dropped:
        logger.info("excluded %d train/val records lacking required embeddings", dropped)
    members = []
    for fold in range(manifest.k):
        own = [r for r in usable if manifest.fold_assignment[r.complex_id] == fold]
        rest = [r for r in usable if manifest.fold_assignment[r.complex_id] != fold]
        if not own or not rest:
            raise SplitError(
                f"fold {fold} is unusable after embedding filtering "
                f"({len(own)} validation, {len(rest)} training records)"
            )
        members.append((fold, rest, own))
    return members


def cross_validate(
    dataset: Dataset,
    manifest: SplitManifest,
    config: ScorerConfig,
    *,
    eval_sets: Mapping[str, Sequence[ComplexRecord]] | None = None,
) -> TrainedEnsemble:
    """Train the k-fold ensemble, one member per fold.

    Member ``j`` trains on every fold except ``j`` and early-stops on
    fold ``j``. Records lacking the required embeddings are excluded
    from both roles. Member seeds are derived deterministically from
    ``config.seed``, so reruns reproduce identical members.

    Parameters
    ----------
    eval_sets : mapping, optional
        Named record collections evaluated at every epoch of every
        member, enabling :func:`track_curves` on the result.
    """
    members = []
    folds = []
    filtered_eval = _filter_eval_sets(eval_sets, config)
    for fold, train, own in _fold_members(dataset, manifest, config):
        cfg = replace(config, seed=member_seed(config.seed, fold))
        members.append(fit(train, own, cfg, eval_sets=filtered_eval))
        folds.append(fold)
    return TrainedEnsemble(
        members=members,
        regime=Regime.SKF,
        manifest_ref=manifest.digest(),
        member_folds=tuple(folds),
    )


def train_with_target_validation(
    dataset: Dataset,
    manifest: SplitManifest,
    target: str,
    config: ScorerConfig,
    *,
    eval_sets: Mapping[str, Sequence[ComplexRecord]] | None = None,
    min_holdout_usable: int = 2,
) -> TrainedEnsemble:
    """Train fold members that early-stop on the target's fixed holdout.

    Training sets are identical to :func:`cross_validate`; only the
    early-stopping signal changes, from the member's own fold to the
    small target holdout recorded in the manifest. With ``k=1`` or no
    fold assignment a single member trains on the whole train/val pool.

    Raises
    ------
    SplitError
        If the manifest has no holdout for ``target``.
    ValidationError
        If fewer than ``min_holdout_usable`` holdout records carry the
        required embeddings.
    """
    holdout_ids = manifest.holdout_ids(target)
    holdout = _embedded([dataset.get(i) for i in holdout_ids], config)
    if len(holdout) < max(min_holdout_usable, 2):
        raise ValidationError(
            f"target {target!r}: only {len(holdout)} of {len(holdout_ids)} holdout records "
            f"are usable, need at least {max(min_holdout_usable, 2)}"
        )
    filtered_eval = _filter_eval_sets(eval_sets, config)

    members = []
    folds = []
    if manifest.fold_assignment and manifest.k >= 2:
        plan = [(fold, train) for fold, train, _ in _fold_members(dataset, manifest, config)]
    else:
        pool = _embedded([dataset.get(i) for i in manifest.train_val_ids], config)
        if not pool:
            raise SplitError("no usable train/val records after embedding filtering")
        plan = [(0, pool)]
    for fold, train in plan:
        cfg = replace(config, seed=member_seed(config.seed, fold))
        members.append(fit(train, holdout, cfg, eval_sets=filtered_eval))
        folds.append(fold)
    return TrainedEnsemble(
        members=members,
        regime=Regime.VAL,
        manifest_ref=manifest.digest(),
        member_folds=tuple(folds),
    )


def _best_member_index(ensemble: TrainedEnsemble) -> int:
    best_index = None
    best_metric = -np.inf
    for i, member in enumerate(ensemble.members):
        metric = member.best_val_metric
        if metric is not None and metric > best_metric:
            best_metric = metric
            best_index = i
    if best_index is None:
        raise ValidationError("no ensemble member has a defined validation metric")
    return best_index


def finetune(
    ensemble: TrainedEnsemble,
    dataset: Dataset,
    manifest: SplitManifest,
    target: str,
    config: FinetuneConfig | None = None,
) -> TrainedEnsemble:
    """Fine-tune a cross-validated ensemble on a target's holdout.

    By default the member with the highest own-fold validation Pearson
    is selected and optimized on exactly the holdout complexes for
    ``finetune_epochs`` epochs at the reduced learning rate, with no
    early stopping; ``all_members`` fine-tunes every member instead.
    The source ensemble is left unmodified.

    Raises
    ------
    ValidationError
        If the source ensemble is not an ``skf`` ensemble, or any
        holdout record lacks a required embedding.
    SplitError
        If the manifest has no holdout for ``target``.
    """
    config = config or FinetuneConfig()
    if ensemble.regime is not Regime.SKF:
        raise ValidationError(
            f"fine-tuning starts from an skf ensemble, got regime {ensemble.regime.value!r}"
        )
    holdout_ids = manifest.holdout_ids(target)
    records = [dataset.get(i) for i in holdout_ids]
    kind = ensemble.members[0].config.scorer_kind
    missing = [r.complex_id for r in records if not has_required_embeddings(r, kind)]
    if missing:
        raise ValidationError(
            f"target {target!r}: holdout records lack required embeddings: {sorted(missing)}"
        )

    if config.source_selection is SourceSelection.BEST_VAL_MEMBER:
        sources = [_best_member_index(ensemble)]
    else:
        sources = list(range(len(ensemble.members)))

    tuned = []
    folds = []
    for index in sources:
        source = ensemble.members[index]
        lr = (
            config.finetune_learning_rate
            if config.finetune_learning_rate is not None
            else source.config.learning_rate * 0.1
        )
        seed = config.seed if config.seed is not None else member_seed(source.config.seed, 9999)
        tuned.append(
            continue_training(
                source,
                records,
                epochs=config.finetune_epochs,
                learning_rate=lr,
                seed=seed,
            )
        )
        folds.append(ensemble.member_folds[index])
    return TrainedEnsemble(
        members=tuned,
        regime=Regime.FT,
        manifest_ref=ensemble.manifest_ref,
        source_member_index=sources[0] if len(sources) == 1 else None,
        member_folds=tuple(folds),
    )


def ensemble_predict(
    ensemble: TrainedEnsemble, records: Sequence[ComplexRecord]
) -> dict[str, float]:
    """Arithmetic mean of the member predictions, per complex id."""
    if not records:
        raise ValidationError("no records to predict")
    per_member = [predict(m, records) for m in ensemble.members]
    ids = list(per_member[0])
    stacked = np.array([[p[i] for i in ids] for p in per_member])
    averaged = stacked.mean(axis=0)
    return {i: float(v) for i, v in zip(ids, averaged)}


@dataclass(frozen=True)
class CurvePoint:
    """One aggregated learning-curve sample."""

    eval_set: str
    epoch_pct: float
    n_members: int
    mean_pearson: float
    std_pearson: float


def track_curves(
    ensemble: TrainedEnsemble, eval_sets: Sequence[str] | None = None
) -> list[CurvePoint]:
    """Aggregate per-member evaluation curves recorded during training.

    For every eval set and epoch, the mean and sample standard deviation
    of the member Pearson correlations are computed over the members
    still training at that epoch; members that stopped early drop out of
    later points, and a single member yields a standard deviation of 0.
    The epoch axis is expressed as a percentage of ``max_epochs``.

    Raises
    ------
    ValidationError
        If curve tracking was not enabled when the ensemble trained.
    """
    curves = [m.eval_curves for m in ensemble.members]
    if any(c is None for c in curves):
        raise ValidationError(
            "curve tracking was not enabled during training; pass eval_sets when training"
        )
    names = sorted({name for c in curves for name in c})
    if eval_sets is not None:
        unknown = sorted(set(eval_sets) - set(names))
        if unknown:
            raise ValidationError(f"no curves recorded for eval sets: {unknown}")
        names = sorted(eval_sets)
    max_epochs = ensemble.max_epochs

    points: list[CurvePoint] = []
    for name in names:
        by_epoch: dict[int, list[float]] = {}
        for member_curves in curves:
            for epoch, value in member_curves.get(name, ()):
                if value is not None:
                    by_epoch.setdefault(epoch, []).append(value)
        for epoch in sorted(by_epoch):
            values = by_epoch[epoch]
            std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
            points.append(
                CurvePoint(
                    eval_set=name,
                    epoch_pct=100.0 * epoch / max_epochs,
                    n_members=len(values),
                    mean_pearson=float(np.mean(values)),
                    std_pearson=std,
                )
            )
    return points


def write_curve_table(points: Sequence[CurvePoint], path: str | Path) -> None:
    """Write aggregated curves as CSV with a fixed column order."""
    import csv

    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CURVE_COLUMNS)
        for p in points:
            writer.writerow(
                [
                    p.eval_set,
                    repr(p.epoch_pct),
                    str(p.n_members),
                    repr(p.mean_pearson),
                    repr(p.std_pearson),
                ]
            )


def read_curve_table(path: str | Path) -> list[CurvePoint]:
    import csv

    points = []
    with Path(path).open(newline="") as handle:
        for row in csv.DictReader(handle):
            points.append(
                CurvePoint(
                    eval_set=row["eval_set"],
                    epoch_pct=float(row["epoch_pct"]),
                    n_members=int(row["n_members"]),
                    mean_pearson=float(row["mean_pearson"]),
                    std_pearson=float(row["std_pearson"]),
                )
            )
    return points


# -- ensemble persistence --------------------------------------------------


def save_ensemble(ensemble: TrainedEnsemble, directory: str | Path) -> None:
    """Write member checkpoints plus an ``ensemble.json`` descriptor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    member_files = []
    for i, member in enumerate(ensemble.members):
        name = f"member_{i:02d}.scorer"
        save_scorer(member, directory / name)
        member_files.append(name)
    descriptor = {
        "regime": ensemble.regime.value,
        "manifest_ref": ensemble.manifest_ref,
        "members": member_files,
        "member_folds": list(ensemble.member_folds),
        "source_member_index": ensemble.source_member_index,
        "eval_curves": [
            None
            if m.eval_curves is None
            else {name: [[e, v] for e, v in points] for name, points in m.eval_curves.items()}
            for m in ensemble.members
        ],
    }
    (directory / "ensemble.json").write_text(json.dumps(descriptor, sort_keys=True, indent=1))


def load_ensemble(directory: str | Path) -> TrainedEnsemble:
    directory = Path(directory)
    descriptor_path = directory / "ensemble.json"
    if not descriptor_path.exists():
        raise ValidationError(f"{directory} does not contain an ensemble.json descriptor")
    descriptor = json.loads(descriptor_path.read_text())
    members = [load_scorer(directory / name) for name in descriptor["members"]]
    for member, curves in zip(members, descriptor.get("eval_curves", [])):
        if curves is not None:
            member.eval_curves = {
                name: tuple((e, v) for e, v in points) for name, points in curves.items()
            }
    return TrainedEnsemble(
        members=members,
        regime=Regime(descriptor["regime"]),
        manifest_ref=descriptor["manifest_ref"],
        source_member_index=descriptor.get("source_member_index"),
        member_folds=tuple(descriptor.get("member_folds", ())),
    )
