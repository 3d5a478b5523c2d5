"""Command-line pipeline: ingest, split, train, finetune, evaluate, project, report.

Every command reads one JSON config document, optionally overridden by
repeatable ``--set key.path=value`` flags (flags win over the config,
which wins over built-in defaults), and writes its outputs under a fresh
run directory ``<workspace>/runs/<seq>-<command>``. Existing runs are
never overwritten; later commands locate their prerequisites through the
run records, or through explicit ``--run``/``--source`` flags.

Exit codes: 0 success, 1 invalid configuration or input, 2 missing
prerequisite artifact, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import re
import sys
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .data import Dataset, ingest_dataset, read_similarity_table
from .errors import (
    ConfigError,
    OodbenchError,
    PrerequisiteError,
    ValidationError,
)
from .metrics import (
    DEFAULT_EF_FRACTIONS,
    DEFAULT_RMSD_CUTOFF,
    DEFAULT_TOP_N,
    MetricReport,
    build_report,
    read_decoy_table,
)
from .projection import Coloring, project_tsne, render_projection
from .scorers import ScorerConfig, write_predictions
from .splits import (
    DEFAULT_K,
    DEFAULT_N_BINS,
    DEFAULT_N_HOLDOUT,
    DEFAULT_SIMILARITY_THRESHOLDS,
    FilterRule,
    SplitManifest,
    apply_clean_filter,
    build_ood_split,
    holdout_limited,
    stratified_kfold,
    validate_manifest,
)
from .training import (
    FinetuneConfig,
    Regime,
    cross_validate,
    ensemble_predict,
    finetune,
    load_ensemble,
    save_ensemble,
    track_curves,
    train_with_target_validation,
    write_curve_table,
)

__all__ = ["main", "RunConfig", "load_config", "WORKSPACE_ENV"]

logger = logging.getLogger(__name__)

WORKSPACE_ENV = "OODBENCH_WORKSPACE"
SCHEMA_VERSION = 1
_RUN_DIR_RE = re.compile(r"^(\d{4})-([a-z]+)$")


# -- configuration ---------------------------------------------------------


class RunConfig(dict):
    """Validated run configuration with defaults applied.

    Behaves as a plain nested dict; ``base_dir`` is the directory the
    config file lived in, used to resolve relative paths.
    """

    base_dir: Path

    def path(self, *keys: str) -> Path | None:
        node: Any = self
        for key in keys:
            if not isinstance(node, Mapping) or key not in node:
                return None
            node = node[key]
        if node is None:
            return None
        return (self.base_dir / str(node)).resolve()


def _fail(path: str, message: str) -> ConfigError:
    return ConfigError(f"config error at {path}: {message}")


def _check_keys(section: Mapping, allowed: Sequence[str], path: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise _fail(path, f"unknown keys {unknown}; allowed keys are {sorted(allowed)}")


def _expect(value: Any, kind: type | tuple, path: str, what: str) -> Any:
    if kind is float:
        kind = (int, float)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise _fail(path, f"expected {what}, got {value!r}")
    return value


def _expect_path(section: Mapping, key: str, base_dir: Path, path: str, *, required: bool) -> None:
    if key not in section or section[key] is None:
        if required:
            raise _fail(path, f"missing required key {key!r}")
        return
    _expect(section[key], str, f"{path}.{key}", "a path string")
    resolved = base_dir / section[key]
    if not resolved.exists():
        raise _fail(f"{path}.{key}", f"path {resolved} does not exist")


_DEFAULTS: dict[str, dict[str, Any]] = {
    "split": {"k": DEFAULT_K, "n_bins": DEFAULT_N_BINS, "n_holdout": DEFAULT_N_HOLDOUT},
    "training": {"track_curves": False, "min_holdout_usable": 2},
    "evaluation": {
        "rmsd_cutoff": DEFAULT_RMSD_CUTOFF,
        "top_n": DEFAULT_TOP_N,
        "ef_fractions": list(DEFAULT_EF_FRACTIONS),
    },
    "projection": {
        "embedding_kind": "interaction",
        "perplexity": 30.0,
        "max_iter": 1000,
        "coloring": "affinity",
        "highlight_clusters": [],
        "max_points": None,
    },
}


def _validate_config(raw: Mapping, base_dir: Path) -> RunConfig:
    _expect(raw, dict, "<root>", "a JSON object")
    _check_keys(
        raw,
        [
            "schema_version",
            "seed",
            "data",
            "split",
            "scorer",
            "finetune",
            "training",
            "evaluation",
            "projection",
        ],
        "<root>",
    )
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise _fail("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    config = RunConfig({k: v for k, v in raw.items()})
    config.base_dir = base_dir
    config["seed"] = _expect(raw.get("seed", 0), int, "seed", "an integer")

    if "data" in raw:
        data = _expect(raw["data"], dict, "data", "an object")
        _check_keys(
            data,
            ["complex_table", "interaction_embeddings", "ligand_embeddings", "interaction_dim", "ligand_dim"],
            "data",
        )
        _expect_path(data, "complex_table", base_dir, "data", required=True)
        _expect_path(data, "interaction_embeddings", base_dir, "data", required=False)
        _expect_path(data, "ligand_embeddings", base_dir, "data", required=False)
        for key in ("interaction_dim", "ligand_dim"):
            if key in data and data[key] is not None:
                if _expect(data[key], int, f"data.{key}", "a positive integer") < 1:
                    raise _fail(f"data.{key}", "must be at least 1")

    if "split" in raw:
        split = _expect(raw["split"], dict, "split", "an object")
        _check_keys(split, ["targets", "k", "n_bins", "n_holdout", "clean_filter"], "split")
        targets = _expect(split.get("targets"), dict, "split.targets", "an object")
        if not targets:
            raise _fail("split.targets", "at least one target is required")
        for name, cluster in targets.items():
            _expect(cluster, str, f"split.targets.{name}", "a cluster id string")
        merged = {**_DEFAULTS["split"], **split}
        for key in ("k", "n_bins", "n_holdout"):
            if _expect(merged[key], int, f"split.{key}", "an integer") < 1:
                raise _fail(f"split.{key}", "must be at least 1")
        if "clean_filter" in split and split["clean_filter"] is not None:
            cf = _expect(split["clean_filter"], dict, "split.clean_filter", "an object")
            _check_keys(
                cf, ["similarity_table", "reference_ids", "thresholds", "rule"], "split.clean_filter"
            )
            _expect_path(cf, "similarity_table", base_dir, "split.clean_filter", required=True)
            refs = cf.get("reference_ids")
            if isinstance(refs, str):
                _expect_path(cf, "reference_ids", base_dir, "split.clean_filter", required=True)
            elif not (isinstance(refs, list) and refs and all(isinstance(r, str) for r in refs)):
                raise _fail(
                    "split.clean_filter.reference_ids",
                    "expected a non-empty list of ids or a path to an id file",
                )
            thresholds = cf.get("thresholds", list(DEFAULT_SIMILARITY_THRESHOLDS))
            if not (
                isinstance(thresholds, list)
                and len(thresholds) == 3
                and all(isinstance(t, (int, float)) and 0.0 <= t <= 1.0 for t in thresholds)
            ):
                raise _fail("split.clean_filter.thresholds", "expected three numbers in [0, 1]")
            rule = cf.get("rule", FilterRule.JOINT_ALL.value)
            if rule not in [r.value for r in FilterRule]:
                raise _fail(
                    "split.clean_filter.rule",
                    f"expected one of {[r.value for r in FilterRule]}, got {rule!r}",
                )
        config["split"] = merged

    if "scorer" in raw:
        scorer = _expect(raw["scorer"], dict, "scorer", "an object")
        _check_keys(
            scorer,
            [
                "scorer_kind",
                "hidden_sizes",
                "activation",
                "dropout_rate",
                "learning_rate",
                "max_epochs",
                "patience",
                "batch_size",
                "seed",
            ],
            "scorer",
        )
        try:
            _scorer_config(config, raw_section=scorer)
        except ValidationError as exc:
            raise _fail("scorer", str(exc)) from exc

    if "finetune" in raw:
        section = _expect(raw["finetune"], dict, "finetune", "an object")
        _check_keys(
            section,
            ["finetune_epochs", "finetune_learning_rate", "source_selection", "seed"],
            "finetune",
        )
        try:
            FinetuneConfig.from_json_dict(section)
        except ValidationError as exc:
            raise _fail("finetune", str(exc)) from exc

    if "training" in raw:
        training = _expect(raw["training"], dict, "training", "an object")
        _check_keys(
            training,
            ["target", "track_curves", "curve_eval_targets", "min_holdout_usable"],
            "training",
        )
        if "target" in training and training["target"] is not None:
            _expect(training["target"], str, "training.target", "a target name")
        if "track_curves" in training:
            _expect(training["track_curves"], bool, "training.track_curves", "a boolean")
        if "curve_eval_targets" in training and training["curve_eval_targets"] is not None:
            value = training["curve_eval_targets"]
            if not (isinstance(value, list) and all(isinstance(t, str) for t in value)):
                raise _fail("training.curve_eval_targets", "expected a list of target names")
        config["training"] = {**_DEFAULTS["training"], **training}
    else:
        config["training"] = dict(_DEFAULTS["training"])

    if "evaluation" in raw:
        evaluation = _expect(raw["evaluation"], dict, "evaluation", "an object")
        _check_keys(evaluation, ["decoy_table", "rmsd_cutoff", "top_n", "ef_fractions"], "evaluation")
        _expect_path(evaluation, "decoy_table", base_dir, "evaluation", required=False)
        merged = {**_DEFAULTS["evaluation"], **evaluation}
        if merged["rmsd_cutoff"] <= 0:
            raise _fail("evaluation.rmsd_cutoff", "must be positive")
        if merged["top_n"] < 1:
            raise _fail("evaluation.top_n", "must be at least 1")
        fractions = merged["ef_fractions"]
        if not (
            isinstance(fractions, list)
            and fractions
            and all(isinstance(f, (int, float)) and 0.0 < f <= 1.0 for f in fractions)
        ):
            raise _fail("evaluation.ef_fractions", "expected a non-empty list of fractions in (0, 1]")
        config["evaluation"] = merged
    else:
        config["evaluation"] = dict(_DEFAULTS["evaluation"])

    projection = _expect(raw.get("projection", {}), dict, "projection", "an object")
    _check_keys(
        projection,
        ["embedding_kind", "perplexity", "seed", "max_iter", "coloring", "highlight_clusters", "max_points"],
        "projection",
    )
    merged = {**_DEFAULTS["projection"], **projection}
    if merged["embedding_kind"] not in ("interaction", "ligand"):
        raise _fail("projection.embedding_kind", "expected 'interaction' or 'ligand'")
    if not isinstance(merged["perplexity"], (int, float)) or merged["perplexity"] <= 0:
        raise _fail("projection.perplexity", "must be a positive number")
    if merged["coloring"] not in [c.value for c in Coloring]:
        raise _fail(
            "projection.coloring", f"expected one of {[c.value for c in Coloring]}"
        )
    if merged["max_points"] is not None and (
        not isinstance(merged["max_points"], int) or merged["max_points"] < 1
    ):
        raise _fail("projection.max_points", "must be a positive integer or null")
    config["projection"] = merged
    return config


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> RunConfig:
    """Load, override, and validate a run configuration document.

    ``overrides`` are ``key.path=value`` strings; values parse as JSON
    when possible and as plain strings otherwise.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        key_path, _, text = item.partition("=")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        keys = key_path.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {key!r} is not an object")
        node[keys[-1]] = value
    return _validate_config(raw, path.parent.resolve())


def _scorer_config(config: RunConfig, raw_section: Mapping | None = None) -> ScorerConfig:
    section = dict(raw_section if raw_section is not None else config.get("scorer", {}))
    section.setdefault("seed", config.get("seed", 0))
    defaults = ScorerConfig(seed=section["seed"])
    return ScorerConfig.from_json_dict({**defaults.to_json_dict(), **section})


def _finetune_config(config: RunConfig) -> FinetuneConfig:
    return FinetuneConfig.from_json_dict(config.get("finetune", {}))


# -- run directories -------------------------------------------------------


def _workspace(args: argparse.Namespace) -> Path:
    if args.workspace:
        return Path(args.workspace).resolve()
    env = os.environ.get(WORKSPACE_ENV)
    if env:
        return Path(env).resolve()
    return Path.cwd()


def _runs_root(workspace: Path) -> Path:
    return workspace / "runs"


def _new_run_dir(workspace: Path, command: str) -> Path:
    root = _runs_root(workspace)
    root.mkdir(parents=True, exist_ok=True)
    seqs = [0]
    for entry in root.iterdir():
        match = _RUN_DIR_RE.match(entry.name)
        if match:
            seqs.append(int(match.group(1)))
    run_dir = root / f"{max(seqs) + 1:04d}-{command}"
    run_dir.mkdir()
    return run_dir


def _find_run(workspace: Path, run_id: str | None, command: str) -> Path:
    root = _runs_root(workspace)
    if run_id is not None:
        run_dir = root / run_id
        if not (run_dir / "run.json").exists():
            raise PrerequisiteError(
                f"run {run_id!r} not found under {root}; expected a completed {command} run"
            )
        return run_dir
    candidates = []
    if root.exists():
        for entry in root.iterdir():
            match = _RUN_DIR_RE.match(entry.name)
            if match and match.group(2) == command and (entry / "run.json").exists():
                candidates.append((int(match.group(1)), entry))
    if not candidates:
        raise PrerequisiteError(
            f"no completed {command} run found under {root}; run `oodbench {command}` first"
        )
    return max(candidates)[1]


def _read_run_record(run_dir: Path) -> dict:
    record_path = run_dir / "run.json"
    if not record_path.exists():
        raise PrerequisiteError(f"{run_dir} has no run record; the run did not complete")
    return json.loads(record_path.read_text())


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_digest(config: Mapping) -> str:
    def scrub(node: Any) -> Any:
        if isinstance(node, Mapping):
            return {k: scrub(v) for k, v in sorted(node.items())}
        if isinstance(node, list):
            return [scrub(v) for v in node]
        return node

    return hashlib.sha256(json.dumps(scrub(dict(config)), sort_keys=True).encode()).hexdigest()[:16]


def _write_run_record(
    run_dir: Path,
    command: str,
    config: RunConfig,
    inputs: Mapping[str, Path] | None = None,
    extra: Mapping[str, Any] | None = None,
) -> None:
    record = {
        "run_id": run_dir.name,
        "command": command,
        "tool_version": __version__,
        "seed": config.get("seed", 0),
        "config_digest": _config_digest(config),
        "inputs": {
            name: {"path": str(path), "sha256": _sha256(path)}
            for name, path in (inputs or {}).items()
        },
        "outputs": sorted(p.name for p in run_dir.iterdir() if p.name != "run.json"),
    }
    record.update(extra or {})
    (run_dir / "run.json").write_text(json.dumps(record, sort_keys=True, indent=1))


# -- shared loading --------------------------------------------------------


def _load_dataset_from_run(run_dir: Path) -> Dataset:
    store = run_dir / "dataset.json"
    if not store.exists():
        raise PrerequisiteError(f"{run_dir} has no dataset store; rerun `oodbench ingest`")
    return Dataset.load(store)


def _load_manifest_from_run(run_dir: Path) -> SplitManifest:
    manifest_path = run_dir / "split_manifest.json"
    if not manifest_path.exists():
        raise PrerequisiteError(f"{run_dir} has no split manifest; rerun `oodbench split`")
    return SplitManifest.load(manifest_path)


def _training_inputs(
    workspace: Path, args: argparse.Namespace
) -> tuple[Path, Path, Dataset, SplitManifest]:
    dataset_run = _find_run(workspace, getattr(args, "dataset_run", None), "ingest")
    split_run = _find_run(workspace, getattr(args, "split_run", None), "split")
    return (
        dataset_run,
        split_run,
        _load_dataset_from_run(dataset_run),
        _load_manifest_from_run(split_run),
    )


def _eval_sets(config: RunConfig, dataset: Dataset, manifest: SplitManifest):
    if not config["training"]["track_curves"]:
        return None
    names = config["training"].get("curve_eval_targets") or list(manifest.target_names)
    unknown = sorted(set(names) - set(manifest.target_names))
    if unknown:
        raise ConfigError(f"config error at training.curve_eval_targets: unknown targets {unknown}")
    return {
        name: [dataset.get(i) for i in manifest.reporting_test_ids(name)] for name in names
    }


def _require_target(config: RunConfig, manifest: SplitManifest) -> str:
    target = config.get("training", {}).get("target")
    if not target:
        raise ConfigError(
            "config error at training.target: this command needs a target name"
        )
    if target not in manifest.target_names:
        raise ConfigError(
            f"config error at training.target: {target!r} is not a manifest target "
            f"(known: {list(manifest.target_names)})"
        )
    return target


# -- commands ---------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.set or [])
    if "data" not in config:
        raise ConfigError("config error at data: section required for ingest")
    workspace = _workspace(args)
    table = config.path("data", "complex_table")
    embeddings = {}
    dims = {}
    for kind in ("interaction", "ligand"):
        path = config.path("data", f"{kind}_embeddings")
        if path is not None:
            embeddings[kind] = path
        dim = config["data"].get(f"{kind}_dim")
        if dim is not None:
            dims[kind] = dim
    dataset, report = ingest_dataset(table, embeddings, embedding_dims=dims)
    run_dir = _new_run_dir(workspace, "ingest")
    dataset.save(run_dir / "dataset.json")
    report.save(run_dir / "ingest_report.json")
    inputs = {"complex_table": table, **{f"{k}_embeddings": p for k, p in embeddings.items()}}
    _write_run_record(run_dir, "ingest", config, inputs=inputs)
    print(f"[{run_dir.name}] ingested {report.n_records} records")
    for kind in sorted(report.n_embedded):
        print(
            f"  {kind}: {report.n_embedded[kind]} embedded, "
            f"{len(report.absent_ids[kind])} absent"
        )
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.set or [])
    if "split" not in config:
        raise ConfigError("config error at split: section required for split")
    workspace = _workspace(args)
    dataset_run = _find_run(workspace, args.dataset_run, "ingest")
    dataset = _load_dataset_from_run(dataset_run)
    section = config["split"]

    manifest = build_ood_split(
        dataset,
        section["targets"],
        seed=config["seed"],
        k=section["k"],
        n_holdout=section["n_holdout"],
    )
    n_excluded = 0
    if section.get("clean_filter"):
        cf = section["clean_filter"]
        similarities = read_similarity_table(config.path("split", "clean_filter", "similarity_table"))
        refs = cf["reference_ids"]
        if isinstance(refs, str):
            refs = [
                line.strip()
                for line in (config.base_dir / refs).read_text().splitlines()
                if line.strip()
            ]
        manifest = apply_clean_filter(
            manifest,
            similarities,
            refs,
            thresholds=tuple(cf.get("thresholds", DEFAULT_SIMILARITY_THRESHOLDS)),
            rule=cf.get("rule", FilterRule.JOINT_ALL),
            known_ids=dataset.ids,
        )
        n_excluded = len(manifest.clean_excluded_ids)
    manifest = stratified_kfold(manifest, dataset, k=section["k"], n_bins=section["n_bins"])
    manifest = holdout_limited(manifest, n_holdout=section["n_holdout"])
    validate_manifest(manifest, dataset)

    run_dir = _new_run_dir(workspace, "split")
    manifest.save(run_dir / "split_manifest.json")
    _write_run_record(
        run_dir,
        "split",
        config,
        inputs={"dataset": dataset_run / "dataset.json"},
        extra={"dataset_run": dataset_run.name, "manifest_ref": manifest.digest()},
    )
    print(f"[{run_dir.name}] split {len(dataset)} records: {len(manifest.train_val_ids)} train/val")
    for name in manifest.target_names:
        print(
            f"  {name}: {len(manifest.test_ids(name))} test, "
            f"{len(manifest.holdout_ids(name))} holdout"
        )
    if n_excluded:
        print(f"  excluded by clean filter: {n_excluded}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.set or [])
    workspace = _workspace(args)
    regime = Regime(args.regime)
    dataset_run, split_run, dataset, manifest = _training_inputs(workspace, args)
    scorer_config = _scorer_config(config)
    eval_sets = _eval_sets(config, dataset, manifest)

    if regime is Regime.SKF:
        ensemble = cross_validate(dataset, manifest, scorer_config, eval_sets=eval_sets)
        target = None
    elif regime is Regime.VAL:
        target = _require_target(config, manifest)
        ensemble = train_with_target_validation(
            dataset,
            manifest,
            target,
            scorer_config,
            eval_sets=eval_sets,
            min_holdout_usable=config["training"]["min_holdout_usable"],
        )
    else:
        raise ConfigError(f"config error at train.regime: cannot train regime {regime.value!r} directly")

    run_dir = _new_run_dir(workspace, "train")
    save_ensemble(ensemble, run_dir / "ensemble")
    if eval_sets is not None:
        write_curve_table(track_curves(ensemble), run_dir / "curves.csv")
    _write_run_record(
        run_dir,
        "train",
        config,
        inputs={
            "dataset": dataset_run / "dataset.json",
            "split_manifest": split_run / "split_manifest.json",
        },
        extra={
            "regime": regime.value,
            "target": target,
            "dataset_run": dataset_run.name,
            "split_run": split_run.name,
            "manifest_ref": ensemble.manifest_ref,
            "members": [
                {
                    "fold": fold,
                    "best_epoch": m.best_epoch,
                    "stopped_epoch": m.stopped_epoch,
                    "best_val_metric": m.best_val_metric,
                    "val_metric_name": m.val_metric_name,
                }
                for fold, m in zip(ensemble.member_folds, ensemble.members)
            ],
        },
    )
    best = [f"{m.best_val_metric:.3f}" if m.best_val_metric is not None else "n/a" for m in ensemble.members]
    print(f"[{run_dir.name}] trained {regime.value} ensemble of {len(ensemble.members)}")
    print(f"  best validation metric per member: {', '.join(best)}")
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.set or [])
    workspace = _workspace(args)
    source_run = _find_run(workspace, args.source, "train")
    source_record = _read_run_record(source_run)
    if source_record.get("regime") != Regime.SKF.value:
        raise ValidationError(
            f"fine-tuning needs an skf training run, but {source_run.name} "
            f"was {source_record.get('regime')!r}"
        )
    dataset_run = _find_run(workspace, source_record.get("dataset_run"), "ingest")
    split_run = _find_run(workspace, source_record.get("split_run"), "split")
    dataset = _load_dataset_from_run(dataset_run)
    manifest = _load_manifest_from_run(split_run)
    ensemble = load_ensemble(source_run / "ensemble")
    target = _require_target(config, manifest)
    ft_config = _finetune_config(config)

    tuned = finetune(ensemble, dataset, manifest, target, ft_config)
    run_dir = _new_run_dir(workspace, "finetune")
    save_ensemble(tuned, run_dir / "ensemble")
    _write_run_record(
        run_dir,
        "finetune",
        config,
        inputs={
            "dataset": dataset_run / "dataset.json",
            "split_manifest": split_run / "split_manifest.json",
        },
        extra={
            "regime": Regime.FT.value,
            "target": target,
            "source_run": source_run.name,
            "dataset_run": dataset_run.name,
            "split_run": split_run.name,
            "manifest_ref": tuned.manifest_ref,
            "source_member_index": tuned.source_member_index,
            "source_selection": ft_config.source_selection.value,
            "source_members": [
                {"fold": fold, "best_val_metric": m.best_val_metric}
                for fold, m in zip(ensemble.member_folds, ensemble.members)
            ],
            "finetune_epochs": ft_config.finetune_epochs,
            "finetune_learning_rate": ft_config.finetune_learning_rate,
        },
    )
    chosen = (
        f"member {tuned.source_member_index}"
        if tuned.source_member_index is not None
        else f"all {len(tuned.members)} members"
    )
    print(f"[{run_dir.name}] fine-tuned {chosen} on target {target!r}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.set or [])
    workspace = _workspace(args)
    model_run = None
    for command in ("train", "finetune"):
        try:
            model_run = _find_run(workspace, args.run, command)
            break
        except PrerequisiteError:
            continue
    if model_run is None:
        raise PrerequisiteError(
            "no completed train or finetune run found; run `oodbench train` first"
        )
    record = _read_run_record(model_run)
    if record["command"] not in ("train", "finetune"):
        raise ValidationError(f"run {model_run.name} is a {record['command']} run, not a model run")
    dataset_run = _find_run(workspace, record.get("dataset_run"), "ingest")
    split_run = _find_run(workspace, record.get("split_run"), "split")
    dataset = _load_dataset_from_run(dataset_run)
    manifest = _load_manifest_from_run(split_run)
    ensemble = load_ensemble(model_run / "ensemble")

    run_dir = _new_run_dir(workspace, "evaluate")
    predictions = {}
    for name in manifest.target_names:
        records = [dataset.get(i) for i in manifest.reporting_test_ids(name)]
        predictions[name] = ensemble_predict(ensemble, records)
        write_predictions(predictions[name], run_dir / f"predictions_{name}.csv")

    docking_sets = None
    screening_sets = None
    decoy_path = config.path("evaluation", "decoy_table")
    if decoy_path is not None:
        sets = read_decoy_table(decoy_path)
        docking_sets = [s for s in sets if s.is_docking] or None
        screening_sets = [s for s in sets if not s.is_docking] or None
    report = build_report(
        predictions,
        dataset,
        manifest,
        docking_sets=docking_sets,
        screening_sets=screening_sets,
        rmsd_cutoff=config["evaluation"]["rmsd_cutoff"],
        top_n=config["evaluation"]["top_n"],
        ef_fractions=config["evaluation"]["ef_fractions"],
    )
    report.save(run_dir / "metric_report.json")
    inputs = {
        "dataset": dataset_run / "dataset.json",
        "split_manifest": split_run / "split_manifest.json",
        "ensemble": model_run / "ensemble" / "ensemble.json",
    }
    if decoy_path is not None:
        inputs["decoy_table"] = decoy_path
    _write_run_record(
        run_dir,
        "evaluate",
        config,
        inputs=inputs,
        extra={
            "model_run": model_run.name,
            "regime": record.get("regime"),
            "dataset_run": dataset_run.name,
            "split_run": split_run.name,
        },
    )
    print(f"[{run_dir.name}] evaluated {record.get('regime')} model from {model_run.name}")
    for name in sorted(report.per_target):
        m = report.per_target[name]
        print(f"  {name}: r={m.pearson_r:.3f} rmse={m.rmse:.3f} n={m.n}")
    print(f"  Avg r={report.avg_pearson:.3f}  Min r={report.min_pearson:.3f}")
    return 0


def cmd_project(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.set or [])
    workspace = _workspace(args)
    dataset_run = _find_run(workspace, args.dataset_run, "ingest")
    dataset = _load_dataset_from_run(dataset_run)
    section = config["projection"]
    kind = section["embedding_kind"]
    embeddings = {
        r.complex_id: r.embedding(kind) for r in dataset if r.embedding(kind) is not None
    }
    max_points = section["max_points"]
    if max_points is not None and len(embeddings) > max_points:
        import numpy as np

        rng = np.random.default_rng(section.get("seed", config["seed"]))
        keep = rng.choice(sorted(embeddings), size=max_points, replace=False)
        embeddings = {i: embeddings[i] for i in keep}
    result = project_tsne(
        embeddings,
        perplexity=section["perplexity"],
        seed=section.get("seed", config["seed"]),
        max_iter=section["max_iter"],
    )
    run_dir = _new_run_dir(workspace, "project")
    render_projection(
        result,
        dataset,
        coloring=section["coloring"],
        highlight_clusters=section["highlight_clusters"],
        plot_path=run_dir / "projection.png",
        csv_path=run_dir / "projection.csv",
    )
    _write_run_record(
        run_dir,
        "project",
        config,
        inputs={"dataset": dataset_run / "dataset.json"},
        extra={"dataset_run": dataset_run.name, "parameters": dict(result.parameters)},
    )
    print(f"[{run_dir.name}] projected {len(result.coordinates)} points ({section['coloring']})")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.set or [])
    workspace = _workspace(args)
    eval_run = _find_run(workspace, args.run, "evaluate")
    report = MetricReport.load(eval_run / "metric_report.json")
    run_dir = _new_run_dir(workspace, "report")
    rows = report.to_csv_rows()
    import csv as _csv

    with (run_dir / "metric_report.csv").open("w", newline="") as handle:
        _csv.writer(handle).writerows(rows)
    _write_run_record(
        run_dir,
        "report",
        config,
        inputs={"metric_report": eval_run / "metric_report.json"},
        extra={"evaluate_run": eval_run.name},
    )
    widths = [max(len(str(row[i])) for row in rows) for i in range(len(rows[0]))]
    print(f"[{run_dir.name}] report for {eval_run.name}")
    for row in rows:
        print("  " + "  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)))
    return 0


# -- entry point -------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodbench",
        description="Cluster-holdout evaluation pipeline for embedding-based affinity scorers.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY.PATH=VALUE",
            help="override a config entry; repeatable",
        )
        p.add_argument("--workspace", help=f"run root (default: ${WORKSPACE_ENV} or the cwd)")
        p.add_argument("--verbose", action="store_true", help="log at INFO level")

    p = sub.add_parser("ingest", help="read the complex table and embeddings into a dataset store")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="build the cluster-holdout split manifest")
    common(p)
    p.add_argument("--dataset-run", help="ingest run id (default: latest)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a fold ensemble")
    common(p)
    p.add_argument("--regime", required=True, choices=[Regime.SKF.value, Regime.VAL.value])
    p.add_argument("--dataset-run", help="ingest run id (default: latest)")
    p.add_argument("--split-run", help="split run id (default: latest)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="fine-tune an skf ensemble on a target holdout")
    common(p)
    p.add_argument("--source", help="source train run id (default: latest train run)")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="score a trained model on the reporting test sets")
    common(p)
    p.add_argument("--run", help="train or finetune run id (default: latest)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("project", help="project embeddings to 2-d and render the map")
    common(p)
    p.add_argument("--dataset-run", help="ingest run id (default: latest)")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("report", help="flatten an evaluation report to CSV and print it")
    common(p)
    p.add_argument("--run", help="evaluate run id (default: latest)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that code is reserved for
        # missing prerequisites here, so fold usage problems into 1.
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PrerequisiteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OodbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("unhandled failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
