"""Synthetic datasets with known ground truth for end-to-end validation.

The generator samples clustered embeddings and labels them with a known
closed-form law, so every pipeline stage can be checked against an
optimal predictor. Three label models cover the behaviors the
evaluation framework is supposed to expose:

- ``global_linear``: one linear law everywhere; holding out a cluster
  should barely hurt a well-trained scorer.
- ``per_cluster_shift``: one designated cluster (the last one) labels
  with a rotated weight vector, so a scorer trained on the rest
  degrades on it by a predictable amount.
- ``mid_training_peak_surrogate``: the designated cluster's correlation
  peaks partway through training and then declines. Labels combine a
  linear term, which a network fits within a few epochs, with a
  quadratic term that takes tens of epochs; the quadratic term enters
  the held-out cluster's labels with the opposite sign, so fitting it
  helps everywhere except there.

Generated data round-trips through the same CSV formats as real data,
so the full pipeline can run on it unchanged.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import AffinityLabel, ComplexRecord, Dataset, MeasurementKind, TABLE_COLUMNS
from .errors import ValidationError
from .metrics import pearson
from .splits import SplitManifest

__all__ = [
    "LabelModel",
    "GeneratorSpec",
    "GroundTruth",
    "CheckResult",
    "generate",
    "expected_behavior_check",
    "write_dataset_csv",
]

logger = logging.getLogger(__name__)

# Embedding geometry shared by all label models.
_CENTER_SCALE = 1.5
_WITHIN_SCALE = 0.5
_BASE_PK = 5.0

# Peak surrogate: amplitude of the standardized quadratic term. A
# network fits the linear law within a few epochs and the quadratic one
# only tens of epochs later, so the held-out cluster (where its sign is
# flipped) peaks mid-training and declines afterward.
_QUAD_SIGNAL = 1.2

_MEASUREMENT_CYCLE = (MeasurementKind.KD, MeasurementKind.KI, MeasurementKind.IC50)


class LabelModel(str, Enum):
    GLOBAL_LINEAR = "global_linear"
    PER_CLUSTER_SHIFT = "per_cluster_shift"
    MID_TRAINING_PEAK_SURROGATE = "mid_training_peak_surrogate"


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of one synthetic dataset."""

    n_clusters: int
    cluster_sizes: tuple[int, ...]
    embedding_dim: int = 32
    ligand_dim: int = 8
    label_model: LabelModel = LabelModel.GLOBAL_LINEAR
    noise_std: float = 0.0
    ood_shift_magnitude: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "label_model", LabelModel(self.label_model))
        object.__setattr__(self, "cluster_sizes", tuple(int(s) for s in self.cluster_sizes))
        if self.n_clusters < 1:
            raise ValidationError(f"n_clusters must be at least 1, got {self.n_clusters}")
        if len(self.cluster_sizes) != self.n_clusters:
            raise ValidationError(
                f"cluster_sizes has {len(self.cluster_sizes)} entries for "
                f"{self.n_clusters} clusters"
            )
        if any(s < 1 for s in self.cluster_sizes):
            raise ValidationError("every cluster size must be at least 1")
        if self.embedding_dim < 2:
            raise ValidationError(f"embedding_dim must be at least 2, got {self.embedding_dim}")
        if (
            self.label_model is LabelModel.MID_TRAINING_PEAK_SURROGATE
            and self.embedding_dim < 4
        ):
            raise ValidationError(
                "mid_training_peak_surrogate needs embedding_dim >= 4 for its "
                "paired quadratic term"
            )
        if self.ligand_dim < 0:
            raise ValidationError(f"ligand_dim must be non-negative, got {self.ligand_dim}")
        if self.noise_std < 0.0 or not math.isfinite(self.noise_std):
            raise ValidationError(f"noise_std must be non-negative, got {self.noise_std!r}")
        if self.ood_shift_magnitude < 0.0 or not math.isfinite(self.ood_shift_magnitude):
            raise ValidationError(
                f"ood_shift_magnitude must be non-negative, got {self.ood_shift_magnitude!r}"
            )


def _standard_quad(block: np.ndarray) -> float:
    """Sum of products over consecutive dimension pairs of a
    standard-normal block, scaled to zero mean and unit variance. Pure
    cross terms, so nothing of it is linearly explainable."""
    n = block.size // 2
    pairs = block[: 2 * n].reshape(n, 2)
    return float(pairs.prod(axis=1).sum() / math.sqrt(n))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Sampled generator parameters, enough to compute optimal predictions."""

    spec: GeneratorSpec
    bias: float
    cluster_weights: Mapping[str, np.ndarray]
    ood_cluster_ids: tuple[str, ...]
    centers: Mapping[str, np.ndarray]
    quad_coeffs: Mapping[str, float] | None = None
    quad_split: int | None = None

    def weight_for(self, cluster_id: str) -> np.ndarray:
        try:
            return self.cluster_weights[cluster_id]
        except KeyError:
            raise ValidationError(f"unknown cluster {cluster_id!r}") from None

    def optimal_predictions(self, dataset: Dataset) -> dict[str, float]:
        """Noise-free labels under the true law; the best any scorer can do."""
        out = {}
        for record in dataset:
            w = self.weight_for(record.cluster_id)
            value = float(w @ record.interaction_embedding + self.bias)
            if self.quad_split is not None:
                value += self.quad_coeffs[record.cluster_id] * _standard_quad(
                    record.interaction_embedding[self.quad_split :]
                )
            out[record.complex_id] = value
        return out


def _cluster_id(index: int) -> str:
    return f"syn-c{index:03d}"


def generate(spec: GeneratorSpec) -> tuple[Dataset, GroundTruth]:
    """Sample a dataset and its ground-truth descriptor.

    Embeddings are isotropic Gaussian scatter around per-cluster centers.
    Labels follow the spec's label model; for ``per_cluster_shift`` and
    the peak surrogate, the last cluster is the designated held-out
    cluster whose law deviates. Ligand embeddings are pure distractors
    carrying no label signal. Generation is deterministic per seed.
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.embedding_dim
    cluster_ids = [_cluster_id(i) for i in range(spec.n_clusters)]
    ood_ids: tuple[str, ...] = ()

    quad_coeffs: dict[str, float] | None = None
    if spec.label_model is LabelModel.MID_TRAINING_PEAK_SURROGATE:
        # Cluster geometry lives in the first block but carries no label
        # signal; both label terms read the second block, whose
        # distribution is identical in every cluster. The held-out
        # cluster then differs only in the label law, so the linear term
        # transfers from the first epochs while the late-learned
        # quadratic term actively hurts there.
        split = d // 2
        centers = np.zeros((spec.n_clusters, d))
        centers[:, :split] = rng.normal(0.0, _CENTER_SCALE, size=(spec.n_clusters, split))
        w = np.zeros(d)
        w[split:] = rng.normal(size=d - split)
        w[split:] /= np.linalg.norm(w[split:])
        weights = {cid: w for cid in cluster_ids}
        quad_coeffs = {cid: _QUAD_SIGNAL for cid in cluster_ids}
        if spec.n_clusters > 1:
            quad_coeffs[cluster_ids[-1]] = -_QUAD_SIGNAL
            ood_ids = (cluster_ids[-1],)
    else:
        split = None
        centers = rng.normal(0.0, _CENTER_SCALE, size=(spec.n_clusters, d))
        w = rng.normal(size=d)
        w /= np.linalg.norm(w)
        weights = {cid: w for cid in cluster_ids}
        if spec.label_model is LabelModel.PER_CLUSTER_SHIFT and spec.n_clusters > 1:
            direction = rng.normal(size=d)
            direction -= (direction @ w) * w  # orthogonal, so the rotation angle is predictable
            direction /= np.linalg.norm(direction)
            weights[cluster_ids[-1]] = w + spec.ood_shift_magnitude * direction
            ood_ids = (cluster_ids[-1],)

    records = []
    index = 0
    for c, cid in enumerate(cluster_ids):
        w_c = weights[cid]
        for _ in range(spec.cluster_sizes[c]):
            noise = rng.normal(0.0, _WITHIN_SCALE, size=d)
            if split is not None:
                noise[split:] = rng.normal(0.0, 1.0, size=d - split)
            embedding = centers[c] + noise
            pk = float(w_c @ embedding + _BASE_PK)
            if quad_coeffs is not None:
                pk += quad_coeffs[cid] * _standard_quad(embedding[split:])
            if spec.noise_std > 0.0:
                pk += float(rng.normal(0.0, spec.noise_std))
            ligand = rng.normal(size=spec.ligand_dim) if spec.ligand_dim else None
            weight = max(80.0, 350.0 + 60.0 * embedding[0] + float(rng.normal(0.0, 20.0)))
            records.append(
                ComplexRecord(
                    complex_id=f"syn-{index:05d}",
                    label=AffinityLabel(pk, _MEASUREMENT_CYCLE[index % 3]),
                    cluster_id=cid,
                    interaction_embedding=embedding,
                    ligand_embedding=ligand,
                    molecular_weight=weight,
                )
            )
            index += 1

    dataset = Dataset(
        records, provenance=f"synthetic:{spec.label_model.value}:seed={spec.seed}"
    )
    truth = GroundTruth(
        spec=spec,
        bias=_BASE_PK,
        cluster_weights=weights,
        ood_cluster_ids=ood_ids,
        centers={cid: centers[c] for c, cid in enumerate(cluster_ids)},
        quad_coeffs=quad_coeffs,
        quad_split=split,
    )
    return dataset, truth


@dataclass(frozen=True)
class CheckResult:
    """Outcome of the generalization-gap check."""

    passed: bool
    applicable: bool
    in_dist_pearson: float | None
    ood_pearson: float | None
    shift: float
    threshold: float

    @property
    def gap(self) -> float | None:
        if self.in_dist_pearson is None or self.ood_pearson is None:
            return None
        return self.in_dist_pearson - self.ood_pearson


def expected_behavior_check(
    ensemble,
    truth: GroundTruth,
    dataset: Dataset,
    manifest: SplitManifest,
    *,
    shift_threshold: float = 0.75,
) -> CheckResult:
    """Verify that a trained ensemble degrades on the shifted cluster.

    With ``ood_shift_magnitude`` at or below ``shift_threshold`` the
    check passes vacuously (no degradation is expected). Otherwise the
    ensemble's Pearson correlation on the shifted cluster's reporting
    test ids must fall strictly below its in-distribution correlation,
    taken from unshifted targets in the manifest when present and from
    the members' own-fold validation metrics otherwise. Both values are
    returned for diagnostics.
    """
    from .training import ensemble_predict

    shift = truth.spec.ood_shift_magnitude
    if truth.spec.label_model is not LabelModel.PER_CLUSTER_SHIFT or shift <= shift_threshold:
        return CheckResult(
            passed=True,
            applicable=False,
            in_dist_pearson=None,
            ood_pearson=None,
            shift=shift,
            threshold=shift_threshold,
        )

    ood_targets = [
        t for t in manifest.target_names if manifest.target_clusters[t] in truth.ood_cluster_ids
    ]
    if not ood_targets:
        raise ValidationError(
            "the manifest holds out no target matching the shifted cluster; "
            "the check needs the shifted cluster in a test set"
        )
    in_dist_targets = [t for t in manifest.target_names if t not in ood_targets]

    def _target_pearson(targets: Sequence[str]) -> float:
        values = []
        for t in targets:
            ids = sorted(manifest.reporting_test_ids(t))
            preds = ensemble_predict(ensemble, [dataset.get(i) for i in ids])
            values.append(pearson([preds[i] for i in ids], [dataset.get(i).pk_value for i in ids]))
        return float(np.mean(values))

    ood_r = _target_pearson(ood_targets)
    if in_dist_targets:
        in_dist_r = _target_pearson(in_dist_targets)
    else:
        metrics = [
            m.best_val_metric
            for m in ensemble.members
            if m.val_metric_name == "pearson" and m.best_val_metric is not None
        ]
        if not metrics:
            raise ValidationError("no in-distribution reference metric is available")
        in_dist_r = float(np.mean(metrics))
    return CheckResult(
        passed=ood_r < in_dist_r,
        applicable=True,
        in_dist_pearson=in_dist_r,
        ood_pearson=ood_r,
        shift=shift,
        threshold=shift_threshold,
    )


def write_dataset_csv(dataset: Dataset, directory: str | Path) -> dict[str, Path]:
    """Write a dataset in the ingestion CSV formats.

    Produces ``complexes.csv`` plus one embedding table per embedding
    kind present, and returns the written paths keyed by role.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    table = directory / "complexes.csv"
    with table.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(TABLE_COLUMNS) + ["molecular_weight"])
        for r in dataset:
            writer.writerow(
                [
                    r.complex_id,
                    repr(r.pk_value),
                    r.label.measurement_kind.value,
                    r.cluster_id,
                    "" if r.molecular_weight is None else repr(r.molecular_weight),
                ]
            )
    paths["complex_table"] = table

    for kind in ("interaction", "ligand"):
        rows = [(r.complex_id, r.embedding(kind)) for r in dataset if r.embedding(kind) is not None]
        if not rows:
            continue
        dim = rows[0][1].size
        path = directory / f"{kind}_embeddings.csv"
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["complex_id"] + [f"v{i}" for i in range(dim)])
            for complex_id, vector in rows:
                writer.writerow([complex_id] + [repr(float(v)) for v in vector])
        paths[kind] = path
    return paths
