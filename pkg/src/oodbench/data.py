"""Complex records, affinity labels, and dataset ingestion.

A dataset is an ordered, immutable collection of protein-ligand complex
records. Each record carries a pK affinity label, a pocket cluster id,
and optional precomputed embeddings (an interaction embedding describing
the complex and a ligand-only embedding). Records missing an embedding
are kept and counted rather than dropped, so downstream stages decide
what they require.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import IngestError, ValidationError

__all__ = [
    "MeasurementKind",
    "AffinityLabel",
    "ComplexRecord",
    "Dataset",
    "SimilarityRecord",
    "IngestReport",
    "pk_from_concentration",
    "as_embedding",
    "ingest_dataset",
    "read_similarity_table",
    "write_similarity_table",
    "TABLE_COLUMNS",
    "SIMILARITY_COLUMNS",
]

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ("complex_id", "pk_value", "measurement_kind", "cluster_id")
OPTIONAL_TABLE_COLUMNS = ("molecular_weight",)
SIMILARITY_COLUMNS = ("id_a", "id_b", "ligand_sim", "pose_sim", "pocket_sim")

EMBEDDING_KINDS = ("interaction", "ligand")


class MeasurementKind(str, Enum):
    """Experimental quantity an affinity label was derived from."""

    KI = "Ki"
    KD = "Kd"
    IC50 = "IC50"

    @classmethod
    def parse(cls, text: str) -> "MeasurementKind":
        """Parse a measurement kind, accepting any capitalization."""
        lowered = text.strip().lower()
        for kind in cls:
            if kind.value.lower() == lowered:
                return kind
        raise ValidationError(
            f"unknown measurement kind {text!r}; expected one of "
            + ", ".join(k.value for k in cls)
        )


@dataclass(frozen=True)
class AffinityLabel:
    """Binding affinity expressed as pK, the negative log10 of a molar value.

    Parameters
    ----------
    pk_value : float
        Affinity on the pK scale. Must be finite.
    measurement_kind : MeasurementKind
        Which experimental measurement (Ki, Kd, or IC50) produced it.
    """

    pk_value: float
    measurement_kind: MeasurementKind

    def __post_init__(self) -> None:
        if not isinstance(self.measurement_kind, MeasurementKind):
            object.__setattr__(
                self, "measurement_kind", MeasurementKind.parse(str(self.measurement_kind))
            )
        if not math.isfinite(self.pk_value):
            raise ValidationError(f"pk_value must be finite, got {self.pk_value!r}")

    @property
    def concentration(self) -> float:
        """Molar concentration recovering the original measurement."""
        return 10.0 ** (-self.pk_value)


def pk_from_concentration(value: float, kind: MeasurementKind | str) -> AffinityLabel:
    """Convert a molar concentration into a pK affinity label.

    Parameters
    ----------
    value : float
        Concentration in mol/l. Must be strictly positive and finite.
    kind : MeasurementKind or str
        Measurement kind of the raw value.

    Returns
    -------
    AffinityLabel

    Raises
    ------
    ValidationError
        If ``value`` is zero, negative, or non-finite.
    """
    if isinstance(kind, str):
        kind = MeasurementKind.parse(kind)
    if not math.isfinite(value) or value <= 0.0:
        raise ValidationError(
            f"concentration must be a positive finite value in mol/l, got {value!r}"
        )
    return AffinityLabel(pk_value=-math.log10(value), measurement_kind=kind)


def as_embedding(values: Sequence[float] | np.ndarray, expected_dim: int | None = None) -> np.ndarray:
    """Validate and freeze an embedding vector.

    Returns a read-only float64 1-d array. Raises ``ValidationError`` on
    non-finite entries, empty input, or a dimension mismatch.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"embedding must be a non-empty 1-d vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError("embedding contains non-finite entries")
    if expected_dim is not None and arr.size != expected_dim:
        raise ValidationError(
            f"embedding has dimension {arr.size}, expected {expected_dim}"
        )
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ComplexRecord:
    """One protein-ligand complex.

    Parameters
    ----------
    complex_id : str
        Unique identifier, e.g. a PDB code.
    label : AffinityLabel
        Affinity on the pK scale.
    cluster_id : str
        Pocket cluster the complex belongs to.
    interaction_embedding : ndarray or None
        Precomputed complex-level embedding, absent when the upstream
        featurizer failed on this entry.
    ligand_embedding : ndarray or None
        Precomputed ligand-only embedding.
    molecular_weight : float or None
        Ligand molecular weight in g/mol, used only for coloring plots.
    """

    complex_id: str
    label: AffinityLabel
    cluster_id: str
    interaction_embedding: np.ndarray | None = None
    ligand_embedding: np.ndarray | None = None
    molecular_weight: float | None = None

    def __post_init__(self) -> None:
        if not self.complex_id:
            raise ValidationError("complex_id must be a non-empty string")
        if not self.cluster_id:
            raise ValidationError(f"record {self.complex_id!r}: cluster_id must be non-empty")
        for name in ("interaction_embedding", "ligand_embedding"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, as_embedding(value))
        if self.molecular_weight is not None:
            mw = float(self.molecular_weight)
            if not math.isfinite(mw) or mw <= 0.0:
                raise ValidationError(
                    f"record {self.complex_id!r}: molecular_weight must be positive, got {mw!r}"
                )
            object.__setattr__(self, "molecular_weight", mw)

    @property
    def pk_value(self) -> float:
        return self.label.pk_value

    def embedding(self, kind: str) -> np.ndarray | None:
        if kind not in EMBEDDING_KINDS:
            raise ValidationError(f"unknown embedding kind {kind!r}")
        return getattr(self, f"{kind}_embedding")


@dataclass(frozen=True)
class SimilarityRecord:
    """Pairwise similarity between two complexes on three channels.

    All similarities live in [0, 1]. The pair is unordered; readers must
    not assume a fixed orientation of ``id_a`` and ``id_b``.
    """

    id_a: str
    id_b: str
    ligand_sim: float
    pose_sim: float
    pocket_sim: float

    def __post_init__(self) -> None:
        if not self.id_a or not self.id_b:
            raise ValidationError("similarity record ids must be non-empty")
        if self.id_a == self.id_b:
            raise ValidationError(f"similarity record pairs an id with itself: {self.id_a!r}")
        for name in ("ligand_sim", "pose_sim", "pocket_sim"):
            value = float(getattr(self, name))
            if not (0.0 <= value <= 1.0):
                raise ValidationError(
                    f"{name} must lie in [0, 1], got {value!r} for pair "
                    f"({self.id_a!r}, {self.id_b!r})"
                )
            object.__setattr__(self, name, value)

    def involves(self, complex_id: str) -> bool:
        return complex_id in (self.id_a, self.id_b)

    def other(self, complex_id: str) -> str:
        if complex_id == self.id_a:
            return self.id_b
        if complex_id == self.id_b:
            return self.id_a
        raise ValidationError(f"{complex_id!r} is not part of this pair")


class Dataset:
    """Ordered immutable collection of complex records.

    Record order is the ingestion order and is preserved by
    serialization, so identical inputs produce byte-identical stores.

    Parameters
    ----------
    records : iterable of ComplexRecord
    provenance : str
        Free-form description of where the records came from.
    """

    def __init__(self, records: Iterable[ComplexRecord], provenance: str = "") -> None:
        self._records: tuple[ComplexRecord, ...] = tuple(records)
        self.provenance = provenance
        index: dict[str, ComplexRecord] = {}
        for record in self._records:
            if record.complex_id in index:
                raise ValidationError(f"duplicate complex_id {record.complex_id!r}")
            index[record.complex_id] = record
        self._index = index

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[ComplexRecord]:
        return iter(self._records)

    def __contains__(self, complex_id: str) -> bool:
        return complex_id in self._index

    @property
    def records(self) -> tuple[ComplexRecord, ...]:
        return self._records

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.complex_id for r in self._records)

    def get(self, complex_id: str) -> ComplexRecord:
        try:
            return self._index[complex_id]
        except KeyError:
            raise ValidationError(f"unknown complex_id {complex_id!r}") from None

    def subset(self, ids: Iterable[str]) -> "Dataset":
        """New dataset restricted to ``ids``, keeping this dataset's order."""
        wanted = set(ids)
        unknown = wanted - set(self._index)
        if unknown:
            raise ValidationError(f"unknown complex ids: {sorted(unknown)}")
        picked = [r for r in self._records if r.complex_id in wanted]
        return Dataset(picked, provenance=self.provenance)

    @property
    def cluster_ids(self) -> tuple[str, ...]:
        return tuple(sorted({r.cluster_id for r in self._records}))

    def cluster_members(self, cluster_id: str) -> tuple[str, ...]:
        """Ids of all records in one pocket cluster, sorted."""
        return tuple(sorted(r.complex_id for r in self._records if r.cluster_id == cluster_id))

    # -- serialization ----------------------------------------------------

    def to_json_dict(self) -> dict:
        def encode(record: ComplexRecord) -> dict:
            return {
                "complex_id": record.complex_id,
                "pk_value": record.pk_value,
                "measurement_kind": record.label.measurement_kind.value,
                "cluster_id": record.cluster_id,
                "molecular_weight": record.molecular_weight,
                "interaction_embedding": (
                    None
                    if record.interaction_embedding is None
                    else record.interaction_embedding.tolist()
                ),
                "ligand_embedding": (
                    None if record.ligand_embedding is None else record.ligand_embedding.tolist()
                ),
            }

        return {
            "provenance": self.provenance,
            "records": [encode(r) for r in self._records],
        }

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "Dataset":
        records = []
        for item in payload["records"]:
            records.append(
                ComplexRecord(
                    complex_id=item["complex_id"],
                    label=AffinityLabel(item["pk_value"], MeasurementKind.parse(item["measurement_kind"])),
                    cluster_id=item["cluster_id"],
                    interaction_embedding=item.get("interaction_embedding"),
                    ligand_embedding=item.get("ligand_embedding"),
                    molecular_weight=item.get("molecular_weight"),
                )
            )
        return cls(records, provenance=payload.get("provenance", ""))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), sort_keys=True, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class IngestReport:
    """Counts produced while ingesting a complex table.

    ``n_embedded + len(absent_ids) == n_records`` holds per embedding kind.
    """

    n_records: int
    n_embedded: Mapping[str, int]
    absent_ids: Mapping[str, tuple[str, ...]]
    n_unused_embeddings: Mapping[str, int]

    def to_json_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "kinds": {
                kind: {
                    "n_embedded": self.n_embedded[kind],
                    "n_absent": len(self.absent_ids[kind]),
                    "absent_ids": list(self.absent_ids[kind]),
                    "n_unused_embeddings": self.n_unused_embeddings[kind],
                }
                for kind in sorted(self.n_embedded)
            },
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), sort_keys=True, indent=1))


def _read_embedding_csv(path: Path, declared_dim: int | None) -> dict[str, np.ndarray]:
    vectors: dict[str, np.ndarray] = {}
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty embedding file") from None
        if not header or header[0] != "complex_id":
            raise IngestError(f"{path}: first column must be complex_id, got {header[:1]}")
        dim = len(header) - 1
        if dim <= 0:
            raise IngestError(f"{path}: no value columns in header")
        expected = [f"v{i}" for i in range(dim)]
        if header[1:] != expected:
            raise IngestError(f"{path}: value columns must be v0..v{dim - 1}")
        if declared_dim is not None and dim != declared_dim:
            raise IngestError(f"{path}: dimension {dim} does not match declared {declared_dim}")
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 1:
                raise IngestError(f"{path} row {row_num}: expected {dim + 1} fields, got {len(row)}")
            complex_id = row[0].strip()
            if complex_id in vectors:
                raise IngestError(f"{path} row {row_num}: duplicate complex_id {complex_id!r}")
            try:
                vectors[complex_id] = as_embedding([float(v) for v in row[1:]], dim)
            except (ValueError, ValidationError) as exc:
                raise IngestError(f"{path} row {row_num}: {exc}") from exc
    return vectors


def _read_embedding_dir(path: Path, declared_dim: int | None) -> dict[str, np.ndarray]:
    vectors: dict[str, np.ndarray] = {}
    dim = declared_dim
    for entry in sorted(path.iterdir()):
        if not entry.is_file():
            continue
        text = entry.read_text().replace(",", " ").split()
        try:
            values = [float(v) for v in text]
        except ValueError as exc:
            raise IngestError(f"{entry}: {exc}") from exc
        if not values:
            raise IngestError(f"{entry}: empty vector file")
        if dim is None:
            dim = len(values)
        try:
            vectors[entry.stem] = as_embedding(values, dim)
        except ValidationError as exc:
            raise IngestError(f"{entry}: {exc}") from exc
    return vectors


def _read_embeddings(path: str | Path, declared_dim: int | None) -> dict[str, np.ndarray]:
    path = Path(path)
    if path.is_dir():
        return _read_embedding_dir(path, declared_dim)
    if not path.exists():
        raise IngestError(f"embedding source {path} does not exist")
    return _read_embedding_csv(path, declared_dim)


def ingest_dataset(
    complex_table: str | Path,
    embedding_files: Mapping[str, str | Path] | None = None,
    *,
    embedding_dims: Mapping[str, int] | None = None,
    provenance: str | None = None,
) -> tuple[Dataset, IngestReport]:
    """Read a complex table and attach embeddings looked up by id.

    Parameters
    ----------
    complex_table : path
        CSV with columns ``complex_id,pk_value,measurement_kind,cluster_id``
        and optionally ``molecular_weight``.
    embedding_files : mapping, optional
        Maps an embedding kind (``"interaction"`` or ``"ligand"``) to a CSV
        file with header ``complex_id,v0,...,v{d-1}`` or to a directory of
        per-complex vector files named ``<complex_id>.<ext>``.
    embedding_dims : mapping, optional
        Declared dimension per kind; enforced against the parsed files.
    provenance : str, optional
        Stored on the dataset; defaults to the table path.

    Returns
    -------
    (Dataset, IngestReport)
        Records keep the table's row order. Records whose embedding lookup
        fails are kept with that embedding absent and listed in the report.

    Raises
    ------
    IngestError
        On a malformed row (named by row number), a duplicate complex id,
        or an embedding dimension mismatch.
    """
    table_path = Path(complex_table)
    if not table_path.exists():
        raise IngestError(f"complex table {table_path} does not exist")
    embedding_files = dict(embedding_files or {})
    embedding_dims = dict(embedding_dims or {})
    for kind in embedding_files:
        if kind not in EMBEDDING_KINDS:
            raise ValidationError(
                f"unknown embedding kind {kind!r}; expected one of {EMBEDDING_KINDS}"
            )
    lookups = {
        kind: _read_embeddings(path, embedding_dims.get(kind))
        for kind, path in embedding_files.items()
    }

    records: list[ComplexRecord] = []
    seen: set[str] = set()
    with table_path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        missing = [c for c in TABLE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise IngestError(f"{table_path}: missing required columns {missing}")
        for row_num, row in enumerate(reader, start=2):
            try:
                complex_id = (row["complex_id"] or "").strip()
                if complex_id in seen:
                    raise IngestError(f"duplicate complex_id {complex_id!r}")
                label = AffinityLabel(
                    pk_value=float(row["pk_value"]),
                    measurement_kind=MeasurementKind.parse(row["measurement_kind"]),
                )
                weight_text = (row.get("molecular_weight") or "").strip()
                record = ComplexRecord(
                    complex_id=complex_id,
                    label=label,
                    cluster_id=(row["cluster_id"] or "").strip(),
                    interaction_embedding=lookups.get("interaction", {}).get(complex_id),
                    ligand_embedding=lookups.get("ligand", {}).get(complex_id),
                    molecular_weight=float(weight_text) if weight_text else None,
                )
            except IngestError:
                raise
            except (KeyError, TypeError, ValueError, ValidationError) as exc:
                raise IngestError(f"{table_path} row {row_num}: {exc}") from exc
            seen.add(complex_id)
            records.append(record)

    dataset = Dataset(records, provenance=provenance if provenance is not None else str(table_path))
    n_embedded = {}
    absent_ids = {}
    n_unused = {}
    for kind in sorted(embedding_files):
        have = [r.complex_id for r in records if r.embedding(kind) is not None]
        n_embedded[kind] = len(have)
        absent_ids[kind] = tuple(r.complex_id for r in records if r.embedding(kind) is None)
        n_unused[kind] = len(set(lookups[kind]) - seen)
        if absent_ids[kind]:
            logger.info(
                "%s: %d of %d records lack a %s embedding",
                table_path,
                len(absent_ids[kind]),
                len(records),
                kind,
            )
    report = IngestReport(
        n_records=len(records),
        n_embedded=n_embedded,
        absent_ids=absent_ids,
        n_unused_embeddings=n_unused,
    )
    return dataset, report


def read_similarity_table(path: str | Path) -> list[SimilarityRecord]:
    """Read pairwise similarities from a CSV with columns ``id_a,id_b,
    ligand_sim,pose_sim,pocket_sim``."""
    path = Path(path)
    records: list[SimilarityRecord] = []
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        missing = [c for c in SIMILARITY_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise IngestError(f"{path}: missing required columns {missing}")
        for row_num, row in enumerate(reader, start=2):
            try:
                records.append(
                    SimilarityRecord(
                        id_a=(row["id_a"] or "").strip(),
                        id_b=(row["id_b"] or "").strip(),
                        ligand_sim=float(row["ligand_sim"]),
                        pose_sim=float(row["pose_sim"]),
                        pocket_sim=float(row["pocket_sim"]),
                    )
                )
            except (TypeError, ValueError, ValidationError) as exc:
                raise IngestError(f"{path} row {row_num}: {exc}") from exc
    return records


def write_similarity_table(records: Sequence[SimilarityRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SIMILARITY_COLUMNS)
        for rec in records:
            writer.writerow(
                [rec.id_a, rec.id_b, repr(rec.ligand_sim), repr(rec.pose_sim), repr(rec.pocket_sim)]
            )
