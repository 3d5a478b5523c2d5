"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from oodbench.data import AffinityLabel, ComplexRecord, Dataset, MeasurementKind


def rec(
    complex_id,
    pk=5.0,
    cluster="c0",
    interaction=None,
    ligand=None,
    weight=None,
    kind="Kd",
):
    return ComplexRecord(
        complex_id=complex_id,
        label=AffinityLabel(pk, MeasurementKind.parse(kind)),
        cluster_id=cluster,
        interaction_embedding=interaction,
        ligand_embedding=ligand,
        molecular_weight=weight,
    )


def embedded_dataset(n_per_cluster, clusters=("c0", "c1"), dim=4, seed=0, ligand_dim=0):
    """Clustered random records whose labels follow the first two embedding
    coordinates, so a scorer has something real to learn."""
    rng = np.random.default_rng(seed)
    records = []
    for cluster in clusters:
        for i in range(n_per_cluster):
            emb = rng.normal(size=dim)
            lig = rng.normal(size=ligand_dim) if ligand_dim else None
            pk = float(5.0 + emb[0] + 0.5 * emb[1] + 0.05 * rng.normal())
            records.append(
                rec(f"{cluster}-{i:03d}", pk=pk, cluster=cluster, interaction=emb, ligand=lig)
            )
    return Dataset(records, provenance="test fixture")
