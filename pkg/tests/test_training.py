import numpy as np
import pytest

from oodbench.errors import ValidationError
from oodbench.scorers import ScorerConfig, predict
from oodbench.splits import build_ood_split, holdout_limited, stratified_kfold
from oodbench.synthetic import GeneratorSpec, generate
from oodbench.training import (
    CURVE_COLUMNS,
    FinetuneConfig,
    Regime,
    cross_validate,
    ensemble_predict,
    finetune,
    load_ensemble,
    member_seed,
    read_curve_table,
    save_ensemble,
    track_curves,
    train_with_target_validation,
    write_curve_table,
)

from oracles import mean_oracle, std_oracle


def _setup(seed=0, k=3, n_holdout=5):
    spec = GeneratorSpec(
        n_clusters=4,
        cluster_sizes=(30,) * 4,
        embedding_dim=6,
        ligand_dim=0,
        label_model="per_cluster_shift",
        noise_std=0.05,
        ood_shift_magnitude=1.0,
        seed=seed,
    )
    dataset, _ = generate(spec)
    target_cluster = dataset.cluster_ids[-1]
    manifest = build_ood_split(dataset, {"tgt": target_cluster}, seed=seed, k=k)
    manifest = stratified_kfold(manifest, dataset, k=k)
    manifest = holdout_limited(manifest, n_holdout=n_holdout)
    return dataset, manifest


CFG = ScorerConfig(
    hidden_sizes=(16, 8),
    dropout_rate=0.0,
    learning_rate=5e-3,
    max_epochs=8,
    patience=8,
    batch_size=16,
    seed=0,
)


def _eval_records(dataset, manifest, target="tgt"):
    return {"ood": [dataset.get(i) for i in sorted(manifest.reporting_test_ids(target))]}


def test_member_seed_is_stable_and_distinct():
    seeds = [member_seed(7, i) for i in range(5)]
    assert seeds == [member_seed(7, i) for i in range(5)]
    assert len(set(seeds)) == 5
    assert member_seed(8, 0) != member_seed(7, 0)


# -- cross validation --------------------------------------------------------


def test_cross_validate_trains_one_member_per_fold():
    dataset, manifest = _setup()
    ensemble = cross_validate(dataset, manifest, CFG)
    assert ensemble.regime is Regime.SKF
    assert len(ensemble.members) == manifest.k
    assert ensemble.member_folds == (0, 1, 2)
    assert ensemble.manifest_ref == manifest.digest()
    for fold, member in zip(ensemble.member_folds, ensemble.members):
        assert member.validation_ids == manifest.fold_ids(fold)
        expected_train = tuple(
            sorted(set(manifest.train_val_ids) - set(manifest.fold_ids(fold)))
        )
        assert member.gradient_ids == expected_train
        assert member.config.seed == member_seed(CFG.seed, fold)


def test_no_test_record_ever_contributes_gradients():
    dataset, manifest = _setup()
    ensemble = cross_validate(dataset, manifest, CFG)
    test_ids = set(manifest.test_ids("tgt"))
    for entry in ensemble.audit().values():
        assert not test_ids & set(entry["gradient_ids"])
        assert not test_ids & set(entry["validation_ids"])


def test_ensemble_prediction_is_exact_member_mean():
    dataset, manifest = _setup()
    ensemble = cross_validate(dataset, manifest, CFG)
    records = [dataset.get(i) for i in manifest.reporting_test_ids("tgt")]
    combined = ensemble_predict(ensemble, records)
    per_member = [predict(m, records) for m in ensemble.members]
    for record in records:
        expected = mean_oracle([p[record.complex_id] for p in per_member])
        assert abs(combined[record.complex_id] - expected) <= 1e-12


# -- target-validated training -----------------------------------------------


def test_target_validation_swaps_only_the_stopping_signal():
    dataset, manifest = _setup()
    skf = cross_validate(dataset, manifest, CFG)
    val = train_with_target_validation(dataset, manifest, "tgt", CFG)
    assert val.regime is Regime.VAL
    held = manifest.holdout_ids("tgt")
    for skf_member, val_member in zip(skf.members, val.members):
        assert val_member.validation_ids == held
        assert val_member.gradient_ids == skf_member.gradient_ids
    # holdout ids must never appear in any gradient set
    for entry in val.audit().values():
        assert not set(held) & set(entry["gradient_ids"])


def test_target_validation_requires_usable_holdout():
    dataset, manifest = _setup()
    with pytest.raises(ValidationError, match="need at least 50"):
        train_with_target_validation(
            dataset, manifest, "tgt", CFG, min_holdout_usable=50
        )


# -- fine-tuning -------------------------------------------------------------


def test_finetune_touches_exactly_the_holdout():
    dataset, manifest = _setup()
    skf = cross_validate(dataset, manifest, CFG)
    before = [[w.copy() for w in m.weights] for m in skf.members]
    tuned = finetune(skf, dataset, manifest, "tgt", FinetuneConfig(finetune_epochs=4))
    assert tuned.regime is Regime.FT
    assert len(tuned.members) == 1
    assert tuned.members[0].gradient_ids == manifest.holdout_ids("tgt")
    assert tuned.members[0].validation_ids == ()
    # the source ensemble is left as it was
    for member, saved in zip(skf.members, before):
        for w, prev in zip(member.weights, saved):
            np.testing.assert_array_equal(w, prev)


def test_finetune_starts_from_best_validated_member():
    dataset, manifest = _setup()
    skf = cross_validate(dataset, manifest, CFG)
    tuned = finetune(skf, dataset, manifest, "tgt", FinetuneConfig(finetune_epochs=2))
    metrics = [m.best_val_metric for m in skf.members]
    assert tuned.source_member_index == metrics.index(max(metrics))
    assert tuned.member_folds == (skf.member_folds[tuned.source_member_index],)


def test_finetune_all_members_variant():
    dataset, manifest = _setup()
    skf = cross_validate(dataset, manifest, CFG)
    tuned = finetune(
        skf,
        dataset,
        manifest,
        "tgt",
        FinetuneConfig(finetune_epochs=2, source_selection="all_members"),
    )
    assert len(tuned.members) == len(skf.members)
    assert tuned.source_member_index is None


def test_finetune_zero_rate_reproduces_source_member():
    dataset, manifest = _setup()
    skf = cross_validate(dataset, manifest, CFG)
    tuned = finetune(
        skf,
        dataset,
        manifest,
        "tgt",
        FinetuneConfig(finetune_epochs=3, finetune_learning_rate=0.0),
    )
    records = [dataset.get(i) for i in manifest.reporting_test_ids("tgt")]
    source = predict(skf.members[tuned.source_member_index], records)
    assert predict(tuned.members[0], records) == source


def test_finetune_rejects_non_skf_sources():
    dataset, manifest = _setup()
    val = train_with_target_validation(dataset, manifest, "tgt", CFG)
    with pytest.raises(ValidationError, match="skf"):
        finetune(val, dataset, manifest, "tgt")


# -- learning curves ---------------------------------------------------------


def test_track_curves_matches_brute_force_aggregation():
    dataset, manifest = _setup()
    cfg = ScorerConfig(
        hidden_sizes=(16, 8),
        dropout_rate=0.0,
        learning_rate=5e-3,
        max_epochs=10,
        patience=3,
        batch_size=16,
        seed=0,
    )
    ensemble = cross_validate(
        dataset, manifest, cfg, eval_sets=_eval_records(dataset, manifest)
    )
    points = track_curves(ensemble)
    assert points, "expected at least one curve point"

    by_epoch = {}
    for member in ensemble.members:
        for epoch, value in member.eval_curves["ood"]:
            if value is not None:
                by_epoch.setdefault(epoch, []).append(value)
    expected = {}
    for epoch, values in by_epoch.items():
        expected[epoch] = (len(values), mean_oracle(values), std_oracle(values))

    assert len(points) == len(expected)
    for point in points:
        assert point.eval_set == "ood"
        epoch = point.epoch_pct * ensemble.max_epochs / 100.0
        n, mean, std = expected[round(epoch)]
        assert point.n_members == n
        assert abs(point.mean_pearson - mean) <= 1e-12
        assert abs(point.std_pearson - std) <= 1e-12

    counts = [p.n_members for p in points]
    assert counts == sorted(counts, reverse=True)


def test_track_curves_requires_tracking():
    dataset, manifest = _setup()
    ensemble = cross_validate(dataset, manifest, CFG)
    with pytest.raises(ValidationError, match="eval_sets"):
        track_curves(ensemble)


def test_track_curves_rejects_unknown_sets():
    dataset, manifest = _setup()
    ensemble = cross_validate(
        dataset, manifest, CFG, eval_sets=_eval_records(dataset, manifest)
    )
    with pytest.raises(ValidationError, match="nope"):
        track_curves(ensemble, eval_sets=["nope"])


def test_single_member_curves_have_zero_std():
    dataset, manifest = _setup()
    val = train_with_target_validation(
        dataset, manifest, "tgt", CFG, eval_sets=_eval_records(dataset, manifest)
    )
    solo = type(val)(
        members=[val.members[0]],
        regime=val.regime,
        manifest_ref=val.manifest_ref,
        member_folds=(0,),
    )
    points = track_curves(solo)
    assert all(p.std_pearson == 0.0 and p.n_members == 1 for p in points)


def test_curve_table_round_trip(tmp_path):
    dataset, manifest = _setup()
    ensemble = cross_validate(
        dataset, manifest, CFG, eval_sets=_eval_records(dataset, manifest)
    )
    points = track_curves(ensemble)
    path = tmp_path / "curves.csv"
    write_curve_table(points, path)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(CURVE_COLUMNS)
    assert read_curve_table(path) == points
    again = tmp_path / "curves2.csv"
    write_curve_table(points, again)
    assert again.read_bytes() == path.read_bytes()


def test_tiny_eval_sets_are_skipped():
    dataset, manifest = _setup()
    eval_sets = {
        "ood": _eval_records(dataset, manifest)["ood"],
        "tiny": [dataset.get(manifest.test_ids("tgt")[0])],
    }
    ensemble = cross_validate(dataset, manifest, CFG, eval_sets=eval_sets)
    names = {p.eval_set for p in track_curves(ensemble)}
    assert names == {"ood"}


# -- persistence -------------------------------------------------------------


def test_ensemble_save_load_round_trip(tmp_path):
    dataset, manifest = _setup()
    ensemble = cross_validate(
        dataset, manifest, CFG, eval_sets=_eval_records(dataset, manifest)
    )
    save_ensemble(ensemble, tmp_path / "ens")
    loaded = load_ensemble(tmp_path / "ens")
    assert loaded.regime is ensemble.regime
    assert loaded.manifest_ref == ensemble.manifest_ref
    assert loaded.member_folds == ensemble.member_folds
    records = [dataset.get(i) for i in manifest.reporting_test_ids("tgt")]
    assert ensemble_predict(loaded, records) == ensemble_predict(ensemble, records)
    assert track_curves(loaded) == track_curves(ensemble)


def test_load_ensemble_requires_descriptor(tmp_path):
    with pytest.raises(ValidationError, match="ensemble.json"):
        load_ensemble(tmp_path)
