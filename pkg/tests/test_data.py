import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oodbench.data import (
    AffinityLabel,
    ComplexRecord,
    Dataset,
    MeasurementKind,
    SimilarityRecord,
    as_embedding,
    ingest_dataset,
    pk_from_concentration,
    read_similarity_table,
    write_similarity_table,
)
from oodbench.errors import IngestError, ValidationError

from conftest import rec


# -- affinity labels -------------------------------------------------------


def test_pk_from_known_concentration():
    label = pk_from_concentration(3.7e-6, "Kd")
    assert label.pk_value == pytest.approx(5.431798275933005, abs=1e-12)
    assert label.measurement_kind is MeasurementKind.KD


@given(st.floats(min_value=1e-14, max_value=10.0, allow_nan=False, allow_infinity=False))
def test_pk_concentration_round_trip(value):
    label = pk_from_concentration(value, MeasurementKind.KI)
    assert abs(label.concentration - value) <= 1e-12 * value


@pytest.mark.parametrize("bad", [0.0, -1e-6, float("nan"), float("inf")])
def test_pk_rejects_nonpositive_concentration(bad):
    with pytest.raises(ValidationError):
        pk_from_concentration(bad, "Ki")


def test_measurement_kind_parse_ignores_case():
    assert MeasurementKind.parse("ic50") is MeasurementKind.IC50
    assert MeasurementKind.parse(" KD ") is MeasurementKind.KD
    with pytest.raises(ValidationError):
        MeasurementKind.parse("EC50")


def test_affinity_label_requires_finite_pk():
    with pytest.raises(ValidationError):
        AffinityLabel(float("nan"), MeasurementKind.KD)


# -- embeddings and records -------------------------------------------------


def test_as_embedding_freezes_and_validates():
    vec = as_embedding([1.0, 2.0, 3.0])
    assert vec.dtype == np.float64
    assert not vec.flags.writeable
    with pytest.raises(ValidationError):
        as_embedding([1.0, float("nan")])
    with pytest.raises(ValidationError):
        as_embedding([])
    with pytest.raises(ValidationError):
        as_embedding([1.0, 2.0], expected_dim=3)


def test_record_validation():
    with pytest.raises(ValidationError):
        rec("")
    with pytest.raises(ValidationError):
        ComplexRecord("x", AffinityLabel(5.0, MeasurementKind.KD), cluster_id="")
    with pytest.raises(ValidationError):
        rec("x", weight=-10.0)
    record = rec("x", interaction=[0.5, 1.5])
    assert record.embedding("interaction").tolist() == [0.5, 1.5]
    assert record.embedding("ligand") is None
    with pytest.raises(ValidationError):
        record.embedding("protein")


def test_dataset_rejects_duplicate_ids():
    with pytest.raises(ValidationError):
        Dataset([rec("a"), rec("a")])


def test_dataset_subset_preserves_order():
    ds = Dataset([rec("b"), rec("a"), rec("c")])
    sub = ds.subset(["c", "a"])
    assert sub.ids == ("a", "c")
    with pytest.raises(ValidationError):
        ds.subset(["nope"])


def test_dataset_cluster_queries():
    ds = Dataset([rec("a", cluster="x"), rec("b", cluster="y"), rec("c", cluster="x")])
    assert ds.cluster_ids == ("x", "y")
    assert ds.cluster_members("x") == ("a", "c")


def test_dataset_json_round_trip(tmp_path):
    ds = Dataset(
        [
            rec("a", pk=4.25, interaction=[1.0, -2.0], ligand=[0.5], weight=310.2),
            rec("b", pk=7.5, cluster="c9", kind="IC50"),
        ],
        provenance="unit",
    )
    path = tmp_path / "ds.json"
    ds.save(path)
    loaded = Dataset.load(path)
    assert loaded.ids == ds.ids
    assert loaded.provenance == "unit"
    for original, back in zip(ds, loaded):
        assert back.pk_value == original.pk_value
        assert back.label.measurement_kind is original.label.measurement_kind
        assert back.cluster_id == original.cluster_id
        assert back.molecular_weight == original.molecular_weight
        if original.interaction_embedding is None:
            assert back.interaction_embedding is None
        else:
            np.testing.assert_array_equal(back.interaction_embedding, original.interaction_embedding)


# -- ingestion ---------------------------------------------------------------


def _write_table(path, rows, header=("complex_id", "pk_value", "measurement_kind", "cluster_id")):
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _write_embeddings(path, vectors):
    dim = len(next(iter(vectors.values())))
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["complex_id"] + [f"v{i}" for i in range(dim)])
        for cid, vec in vectors.items():
            writer.writerow([cid] + [repr(v) for v in vec])


def test_ingest_counts_and_order(tmp_path):
    table = tmp_path / "complexes.csv"
    _write_table(
        table,
        [
            ["p2", "6.1", "Kd", "c1"],
            ["p1", "4.9", "Ki", "c0"],
            ["p3", "8.0", "IC50", "c1"],
        ],
    )
    emb = tmp_path / "interaction.csv"
    _write_embeddings(emb, {"p1": [1.0, 2.0], "p3": [3.0, 4.0], "stray": [0.0, 0.0]})

    dataset, report = ingest_dataset(table, {"interaction": emb})
    assert dataset.ids == ("p2", "p1", "p3")
    assert report.n_records == 3
    assert report.n_embedded == {"interaction": 2}
    assert report.absent_ids == {"interaction": ("p2",)}
    assert report.n_unused_embeddings == {"interaction": 1}
    assert report.n_embedded["interaction"] + len(report.absent_ids["interaction"]) == report.n_records
    assert dataset.get("p2").interaction_embedding is None
    np.testing.assert_array_equal(dataset.get("p3").interaction_embedding, [3.0, 4.0])


def test_ingest_is_deterministic(tmp_path):
    table = tmp_path / "complexes.csv"
    _write_table(table, [[f"p{i}", str(4.0 + 0.1 * i), "Kd", f"c{i % 3}"] for i in range(20)])
    first, _ = ingest_dataset(table)
    second, _ = ingest_dataset(table)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    first.save(a)
    second.save(b)
    assert a.read_bytes() == b.read_bytes()


def test_ingest_names_malformed_row(tmp_path):
    table = tmp_path / "complexes.csv"
    _write_table(table, [["p1", "5.0", "Kd", "c0"], ["p2", "not-a-number", "Kd", "c0"]])
    with pytest.raises(IngestError, match="row 3"):
        ingest_dataset(table)


def test_ingest_rejects_duplicate_ids(tmp_path):
    table = tmp_path / "complexes.csv"
    _write_table(table, [["p1", "5.0", "Kd", "c0"], ["p1", "6.0", "Kd", "c0"]])
    with pytest.raises(IngestError, match="duplicate"):
        ingest_dataset(table)


def test_ingest_rejects_missing_columns(tmp_path):
    table = tmp_path / "complexes.csv"
    _write_table(table, [["p1", "5.0"]], header=("complex_id", "pk_value"))
    with pytest.raises(IngestError, match="missing required columns"):
        ingest_dataset(table)


def test_ingest_enforces_declared_dimension(tmp_path):
    table = tmp_path / "complexes.csv"
    _write_table(table, [["p1", "5.0", "Kd", "c0"]])
    emb = tmp_path / "interaction.csv"
    _write_embeddings(emb, {"p1": [1.0, 2.0]})
    with pytest.raises(IngestError, match="dimension"):
        ingest_dataset(table, {"interaction": emb}, embedding_dims={"interaction": 3})


def test_ingest_reads_embedding_directory(tmp_path):
    table = tmp_path / "complexes.csv"
    _write_table(table, [["p1", "5.0", "Kd", "c0"], ["p2", "6.0", "Kd", "c0"]])
    emb_dir = tmp_path / "vectors"
    emb_dir.mkdir()
    (emb_dir / "p1.txt").write_text("0.5 1.5 -2.0")
    (emb_dir / "p2.txt").write_text("1.0, 2.0, 3.0")
    dataset, report = ingest_dataset(table, {"ligand": emb_dir})
    assert report.n_embedded == {"ligand": 2}
    np.testing.assert_array_equal(dataset.get("p2").ligand_embedding, [1.0, 2.0, 3.0])


# -- similarity records ------------------------------------------------------


def test_similarity_record_validation():
    good = SimilarityRecord("a", "b", 0.5, 0.0, 1.0)
    assert good.other("a") == "b"
    assert good.involves("b")
    with pytest.raises(ValidationError):
        SimilarityRecord("a", "a", 0.5, 0.5, 0.5)
    with pytest.raises(ValidationError):
        SimilarityRecord("a", "b", 1.5, 0.5, 0.5)
    with pytest.raises(ValidationError):
        good.other("c")


def test_similarity_table_round_trip(tmp_path):
    records = [
        SimilarityRecord("a", "b", 0.25, 0.5, 0.75),
        SimilarityRecord("b", "c", 1.0, 0.0, 0.125),
    ]
    path = tmp_path / "sims.csv"
    write_similarity_table(records, path)
    back = read_similarity_table(path)
    assert back == records
