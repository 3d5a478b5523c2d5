import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oodbench.errors import UndefinedMetricError, ValidationError
from oodbench.metrics import (
    DecoyEntry,
    DecoySet,
    EntryKind,
    MetricReport,
    TargetMetrics,
    build_report,
    docking_success_rate,
    enrichment_factor,
    pearson,
    read_decoy_table,
    rmse,
    write_decoy_table,
)
from oodbench.splits import SplitManifest

from conftest import rec
from oracles import (
    docking_oracle,
    enrichment_oracle,
    mean_oracle,
    pearson_oracle,
    rmse_oracle,
)
from oodbench.data import Dataset


# -- scoring metrics ---------------------------------------------------------


def test_pearson_known_value():
    assert pearson([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6, abs=1e-12)


def test_pearson_and_rmse_match_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(2, 40))
        x = rng.normal(size=n) * rng.uniform(0.5, 20.0)
        y = rng.normal(size=n) * rng.uniform(0.5, 20.0)
        if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
            continue
        assert pearson(x, y) == pytest.approx(pearson_oracle(x.tolist(), y.tolist()), abs=1e-10)
        assert rmse(x, y) == pytest.approx(rmse_oracle(x.tolist(), y.tolist()), abs=1e-10)


numeric_lists = st.lists(st.integers(-50, 50), min_size=3, max_size=20)


@given(
    xs=numeric_lists,
    ys=numeric_lists,
    a=st.floats(min_value=0.01, max_value=100.0),
    b=st.floats(min_value=-100.0, max_value=100.0),
)
def test_pearson_affine_invariance(xs, ys, a, b):
    n = min(len(xs), len(ys))
    xs, ys = xs[:n], ys[:n]
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        return
    base = pearson(xs, ys)
    scaled = [a * x + b for x in xs]
    assert pearson(scaled, ys) == pytest.approx(base, abs=1e-10)
    flipped = [-a * x + b for x in xs]
    assert pearson(flipped, ys) == pytest.approx(-base, abs=1e-10)


@given(xs=numeric_lists, ys=numeric_lists)
def test_pearson_symmetry(xs, ys):
    n = min(len(xs), len(ys))
    xs, ys = xs[:n], ys[:n]
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        return
    assert pearson(xs, ys) == pytest.approx(pearson(ys, xs), abs=1e-10)


@given(
    xs=numeric_lists,
    ys=numeric_lists,
    zs=numeric_lists,
)
def test_rmse_triangle_inequality(xs, ys, zs):
    n = min(len(xs), len(ys), len(zs))
    xs, ys, zs = xs[:n], ys[:n], zs[:n]
    assert rmse(xs, zs) <= rmse(xs, ys) + rmse(ys, zs) + 1e-10


def test_rmse_known_value():
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.5355339059327378, abs=1e-12)


def test_pearson_rejects_degenerate_inputs():
    with pytest.raises(UndefinedMetricError):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(UndefinedMetricError):
        pearson([1.0, 2.0, 3.0], [4.0, 4.0, 4.0])
    with pytest.raises(ValidationError):
        pearson([1.0], [2.0])
    with pytest.raises(ValidationError):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValidationError):
        pearson([1.0, float("nan")], [1.0, 2.0])


# -- decoy sets --------------------------------------------------------------


def _pose_set(target, scored_rmsds):
    entries = [
        DecoyEntry(f"{target}-e{i}", EntryKind.DECOY_POSE, score=s, rmsd_to_native=r)
        for i, (s, r) in enumerate(scored_rmsds)
    ]
    return DecoySet(target, tuple(entries))


def _screen_set(target, labels_scores):
    entries = [
        DecoyEntry(f"{target}-e{i}", kind, score=s)
        for i, (kind, s) in enumerate(labels_scores)
    ]
    return DecoySet(target, tuple(entries))


def test_decoy_set_validation():
    with pytest.raises(ValidationError):
        DecoySet("t", ())
    with pytest.raises(ValidationError):
        DecoySet("t", (DecoyEntry("e", EntryKind.ACTIVE), DecoyEntry("e", EntryKind.INACTIVE)))
    # docking entries need an rmsd
    with pytest.raises(ValidationError, match="rmsd"):
        DecoySet("t", (DecoyEntry("e", EntryKind.NATIVE_POSE, score=1.0),))
    # pose and screening entries cannot share a set
    with pytest.raises(ValidationError, match="mixes"):
        DecoySet(
            "t",
            (
                DecoyEntry("e1", EntryKind.ACTIVE, score=1.0),
                DecoyEntry("e2", EntryKind.DECOY_POSE, score=1.0, rmsd_to_native=1.0),
            ),
        )


def test_docking_success_counts_top_ranked_near_native():
    good = _pose_set("t1", [(9.0, 0.5), (5.0, 8.0)])
    bad = _pose_set("t2", [(9.0, 6.0), (5.0, 0.5)])
    assert docking_success_rate([good, bad]) == 0.5
    # widening the window to the top 2 rescues the second set
    assert docking_success_rate([good, bad], top_n=2) == 1.0


def test_docking_breaks_score_ties_by_entry_id():
    tied = DecoySet(
        "t",
        (
            DecoyEntry("b", EntryKind.DECOY_POSE, score=1.0, rmsd_to_native=0.1),
            DecoyEntry("a", EntryKind.DECOY_POSE, score=1.0, rmsd_to_native=9.0),
        ),
    )
    # "a" sorts first on equal scores, so the top-1 pose is the far one
    assert docking_success_rate([tied]) == 0.0


def test_docking_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(30):
        sets = []
        tuples = []
        for t in range(int(rng.integers(1, 6))):
            entries = [
                (f"t{t}-e{i}", "decoy_pose", float(rng.normal()), float(rng.uniform(0, 10)))
                for i in range(int(rng.integers(1, 12)))
            ]
            tuples.append(entries)
            sets.append(
                DecoySet(
                    f"t{t}",
                    tuple(
                        DecoyEntry(e[0], EntryKind.DECOY_POSE, score=e[2], rmsd_to_native=e[3])
                        for e in entries
                    ),
                )
            )
        cutoff = float(rng.uniform(0.5, 5.0))
        top_n = int(rng.integers(1, 4))
        assert docking_success_rate(sets, cutoff, top_n) == docking_oracle(tuples, cutoff, top_n)


def test_enrichment_factor_basics():
    # 2 actives in 10 entries; the top-1 pick is an active
    entries = [(EntryKind.ACTIVE, 10.0), (EntryKind.ACTIVE, 1.0)] + [
        (EntryKind.INACTIVE, float(s)) for s in range(2, 10)
    ]
    screen = _screen_set("t", entries)
    assert enrichment_factor(screen, 0.1) == pytest.approx(5.0)
    assert enrichment_factor(screen, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        enrichment_factor(screen, 0.0)
    with pytest.raises(UndefinedMetricError):
        enrichment_factor(_screen_set("t2", [(EntryKind.INACTIVE, 1.0)] * 4), 0.5)


def test_enrichment_uses_ceiling_for_tiny_fractions():
    # ceil(0.005 * 201) = 2, not 1
    rng = np.random.default_rng(0)
    entries = [(EntryKind.ACTIVE if i < 20 else EntryKind.INACTIVE, float(rng.normal())) for i in range(201)]
    screen = _screen_set("t", entries)
    ranked = sorted(screen.entries, key=lambda e: (-e.score, e.entry_id))
    actives_top = sum(1 for e in ranked[:2] if e.kind is EntryKind.ACTIVE)
    expected = (actives_top / 2) / (20 / 201)
    assert enrichment_factor(screen, 0.005) == pytest.approx(expected, abs=1e-12)


def test_enrichment_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = int(rng.integers(5, 60))
        n_act = int(rng.integers(1, n))
        tuples = [
            (f"e{i}", "active" if i < n_act else "inactive", float(rng.normal()), None)
            for i in range(n)
        ]
        screen = _screen_set("t", [(EntryKind(k), s) for _, k, s, _ in tuples])
        # the helper renames entries, rebuild with matching ids for the oracle
        entries = tuple(
            DecoyEntry(eid, EntryKind(kind), score=score) for eid, kind, score, _ in tuples
        )
        screen = DecoySet("t", entries)
        fraction = float(rng.uniform(0.02, 1.0))
        assert enrichment_factor(screen, fraction) == pytest.approx(
            enrichment_oracle(tuples, fraction), abs=1e-12
        )


def test_enrichment_null_distribution_centers_on_one():
    # Permuting scores relative to labels must give EF with mean 1 in
    # expectation; check the permutation mean lands within 3 standard errors.
    rng = np.random.default_rng(42)
    n, n_act = 200, 40
    kinds = [EntryKind.ACTIVE] * n_act + [EntryKind.INACTIVE] * (n - n_act)
    scores = rng.normal(size=n)
    values = []
    for _ in range(1000):
        perm = rng.permutation(n)
        entries = tuple(
            DecoyEntry(f"e{i}", kinds[i], score=float(scores[perm[i]])) for i in range(n)
        )
        values.append(enrichment_factor(DecoySet("t", entries), 0.1))
    mean = mean_oracle(values)
    se = float(np.std(values, ddof=1)) / math.sqrt(len(values))
    assert abs(mean - 1.0) <= 3.0 * se


def test_decoy_table_round_trip(tmp_path):
    sets = [
        _pose_set("t1", [(1.5, 0.25), (0.5, 3.5)]),
        _screen_set("t2", [(EntryKind.ACTIVE, 2.0), (EntryKind.INACTIVE, -1.0)]),
    ]
    path = tmp_path / "decoys.csv"
    write_decoy_table(sets, path)
    back = read_decoy_table(path)
    assert back == sets


# -- reports -----------------------------------------------------------------


def _two_target_setup():
    records = [
        rec("a1", pk=4.0, cluster="x"),
        rec("a2", pk=5.0, cluster="x"),
        rec("a3", pk=6.0, cluster="x"),
        rec("b1", pk=7.0, cluster="y"),
        rec("b2", pk=8.0, cluster="y"),
        rec("b3", pk=9.5, cluster="y"),
    ]
    dataset = Dataset(records)
    manifest = SplitManifest(
        seed=0,
        k=2,
        target_clusters={"tx": "x", "ty": "y"},
        target_tests={"tx": ("a1", "a2", "a3"), "ty": ("b1", "b2", "b3")},
        train_val_ids=(),
    )
    return dataset, manifest


def test_report_aggregates_average_and_minimum():
    dataset, manifest = _two_target_setup()
    predictions = {
        "tx": {"a1": 4.1, "a2": 5.2, "a3": 5.9},
        "ty": {"b1": 9.0, "b2": 7.5, "b3": 8.4},
    }
    report = build_report(predictions, dataset, manifest)
    rs = [report.per_target["tx"].pearson_r, report.per_target["ty"].pearson_r]
    assert report.avg_pearson == pytest.approx(mean_oracle(rs), abs=1e-12)
    assert report.min_pearson == pytest.approx(min(rs), abs=1e-12)
    assert report.per_target["tx"].n == 3


def test_report_requires_exact_coverage():
    dataset, manifest = _two_target_setup()
    with pytest.raises(ValidationError, match="missing"):
        build_report({"tx": {"a1": 4.0, "a2": 5.0}}, dataset, manifest)
    with pytest.raises(ValidationError, match="unexpected"):
        build_report(
            {"tx": {"a1": 4.0, "a2": 5.0, "a3": 6.0, "zz": 1.0}}, dataset, manifest
        )


def test_report_refuses_constant_predictions():
    dataset, manifest = _two_target_setup()
    with pytest.raises(UndefinedMetricError, match="tx"):
        build_report(
            {"tx": {"a1": 5.0, "a2": 5.0, "a3": 5.0}}, dataset, manifest
        )


def test_report_skips_holdout_ids():
    dataset, manifest = _two_target_setup()
    manifest = SplitManifest(
        seed=0,
        k=2,
        target_clusters=manifest.target_clusters,
        target_tests=manifest.target_tests,
        train_val_ids=(),
        limited_holdouts={"tx": ("a2",)},
    )
    report = build_report(
        {
            "tx": {"a1": 4.1, "a3": 6.2},
            "ty": {"b1": 7.2, "b2": 8.1, "b3": 9.0},
        },
        dataset,
        manifest,
    )
    assert report.per_target["tx"].n == 2


def test_report_csv_rows_use_full_precision():
    per_target = {
        "t2": TargetMetrics(pearson_r=0.123456789012345, rmse=1.25, n=7),
        "t1": TargetMetrics(pearson_r=0.5, rmse=2.0, n=3),
    }
    report = MetricReport.from_per_target(per_target)
    rows = report.to_csv_rows()
    assert rows[0] == ["target", "pearson_r", "rmse", "n"]
    assert [r[0] for r in rows[1:]] == ["t1", "t2", "Avg", "Min"]
    assert rows[2][1] == repr(0.123456789012345)
    assert rows[3] == ["Avg", repr(report.avg_pearson), "", ""]
    assert rows[4] == ["Min", repr(report.min_pearson), "", ""]


def test_report_json_round_trip(tmp_path):
    dataset, manifest = _two_target_setup()
    report = build_report(
        {
            "tx": {"a1": 4.1, "a2": 5.2, "a3": 5.9},
            "ty": {"b1": 9.0, "b2": 7.5, "b3": 8.4},
        },
        dataset,
        manifest,
        docking_sets=[_pose_set("t1", [(2.0, 0.5)])],
        screening_sets=[_screen_set("t2", [(EntryKind.ACTIVE, 3.0), (EntryKind.INACTIVE, 0.0)])],
        ef_fractions=(0.5, 1.0),
    )
    path = tmp_path / "report.json"
    report.save(path)
    loaded = MetricReport.load(path)
    assert loaded.avg_pearson == report.avg_pearson
    assert loaded.per_target["tx"] == report.per_target["tx"]
    assert loaded.docking["success_rate"] == 1.0
    assert loaded.screening["ef_0.5"]["mean"] == report.screening["ef_0.5"]["mean"]
