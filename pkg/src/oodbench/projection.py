"""Two-dimensional embedding maps for visual inspection of the data.

Embeddings are projected with t-SNE (2 components, perplexity 30 by
default) after sorting records by id, so a fixed seed reproduces the
exact same coordinates. Rendering writes both an image and a
coordinate CSV; the CSV is the authoritative artifact, the image is a
convenience view.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset
from .errors import ValidationError

__all__ = [
    "Coloring",
    "ProjectionResult",
    "project_tsne",
    "render_projection",
    "DEFAULT_PERPLEXITY",
    "N_COMPONENTS",
]

logger = logging.getLogger(__name__)

DEFAULT_PERPLEXITY = 30.0
N_COMPONENTS = 2
# t-SNE needs a healthy multiple of the perplexity to be meaningful.
MIN_POINTS_PER_PERPLEXITY = 3


class Coloring(str, Enum):
    AFFINITY = "affinity"
    MOLECULAR_WEIGHT = "molecular_weight"
    CLUSTER_HIGHLIGHT = "cluster_highlight"


@dataclass(frozen=True)
class ProjectionResult:
    """2-d coordinates per complex id plus the parameters that made them."""

    coordinates: Mapping[str, tuple[float, float]]
    parameters: Mapping[str, float | int | str]

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "coordinates",
            {i: (float(x), float(y)) for i, (x, y) in self.coordinates.items()},
        )
        object.__setattr__(self, "parameters", dict(self.parameters))

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.coordinates))


def project_tsne(
    embeddings: Mapping[str, np.ndarray | Sequence[float]],
    perplexity: float = DEFAULT_PERPLEXITY,
    seed: int = 0,
    *,
    max_iter: int = 1000,
) -> ProjectionResult:
    """Project embeddings to two dimensions with t-SNE.

    Parameters
    ----------
    embeddings : mapping of id to vector
        All vectors must share one dimension and be finite. At least
        ``3 * perplexity`` points are required.
    perplexity : float
        Effective neighborhood size; the conventional default of 30 is
        kept and recorded on the result.
    seed : int
        Fixes the embedding initialization; identical inputs and seed
        give identical coordinates.

    Returns
    -------
    ProjectionResult
        One (x, y) pair per input id and the parameters used.
    """
    from sklearn.manifold import TSNE

    if perplexity <= 0.0:
        raise ValidationError(f"perplexity must be positive, got {perplexity!r}")
    ids = sorted(embeddings)
    n = len(ids)
    minimum = int(np.ceil(MIN_POINTS_PER_PERPLEXITY * perplexity))
    if n < minimum:
        raise ValidationError(
            f"{n} points is too few for perplexity {perplexity:g}; need at least {minimum}"
        )
    rows = []
    dim = None
    for i in ids:
        vector = np.asarray(embeddings[i], dtype=np.float64)
        if vector.ndim != 1:
            raise ValidationError(f"embedding for {i!r} is not a vector")
        if not np.isfinite(vector).all():
            raise ValidationError(f"embedding for {i!r} contains non-finite values")
        if dim is None:
            dim = vector.size
        elif vector.size != dim:
            raise ValidationError(
                f"embedding for {i!r} has dimension {vector.size}, expected {dim}"
            )
        rows.append(vector)
    X = np.stack(rows)

    tsne = TSNE(
        n_components=N_COMPONENTS,
        perplexity=perplexity,
        random_state=seed,
        init="pca",
        max_iter=max_iter,
    )
    coords = tsne.fit_transform(X)
    return ProjectionResult(
        coordinates={i: (float(x), float(y)) for i, (x, y) in zip(ids, coords)},
        parameters={
            "method": "tsne",
            "n_components": N_COMPONENTS,
            "perplexity": float(perplexity),
            "seed": int(seed),
            "max_iter": int(max_iter),
        },
    )


def _color_values(
    result: ProjectionResult,
    dataset: Dataset,
    coloring: Coloring,
    highlight_clusters: Sequence[str],
) -> list[str]:
    values = []
    for i in result.ids:
        record = dataset.get(i)
        if coloring is Coloring.AFFINITY:
            values.append(repr(record.pk_value))
        elif coloring is Coloring.MOLECULAR_WEIGHT:
            values.append("" if record.molecular_weight is None else repr(record.molecular_weight))
        else:
            values.append(record.cluster_id if record.cluster_id in highlight_clusters else "")
    return values


def render_projection(
    result: ProjectionResult,
    dataset: Dataset,
    coloring: Coloring | str = Coloring.AFFINITY,
    highlight_clusters: Sequence[str] | None = None,
    *,
    plot_path: str | Path,
    csv_path: str | Path,
    title: str | None = None,
) -> None:
    """Write an image and a coordinate CSV for a projection.

    The CSV has one row per projected point with columns
    ``complex_id,x,y,color_value``; ``color_value`` is the pK, the
    molecular weight (empty when unknown, drawn in gray), or the
    highlighted cluster id (empty for background points).

    Raises
    ------
    ValidationError
        If a projected id is missing from the dataset, or a highlighted
        cluster does not exist in it.
    """
    import matplotlib.pyplot as plt

    coloring = Coloring(coloring)
    highlight_clusters = list(highlight_clusters or [])
    for i in result.ids:
        if i not in dataset:
            raise ValidationError(f"projected id {i!r} is not in the dataset")
    if coloring is Coloring.CLUSTER_HIGHLIGHT:
        known = set(dataset.cluster_ids)
        unknown = [c for c in highlight_clusters if c not in known]
        if unknown:
            raise ValidationError(f"highlight clusters not present in the dataset: {unknown}")

    ids = result.ids
    xy = np.array([result.coordinates[i] for i in ids])
    colors = _color_values(result, dataset, coloring, highlight_clusters)

    fig, ax = plt.subplots(figsize=(7.0, 6.0))
    if coloring in (Coloring.AFFINITY, Coloring.MOLECULAR_WEIGHT):
        have = np.array([c != "" for c in colors])
        if (~have).any():
            ax.scatter(xy[~have, 0], xy[~have, 1], s=8, c="0.8", label="unknown")
        if have.any():
            values = np.array([float(c) for c, h in zip(colors, have) if h])
            scatter = ax.scatter(
                xy[have, 0], xy[have, 1], s=8, c=values, cmap="viridis", alpha=0.85
            )
            fig.colorbar(
                scatter,
                ax=ax,
                label="pK" if coloring is Coloring.AFFINITY else "molecular weight [g/mol]",
            )
    else:
        background = np.array([c == "" for c in colors])
        ax.scatter(xy[background, 0], xy[background, 1], s=8, c="0.85")
        cmap = plt.get_cmap("tab10")
        for j, cluster in enumerate(highlight_clusters):
            mask = np.array([c == cluster for c in colors])
            if mask.any():
                ax.scatter(xy[mask, 0], xy[mask, 1], s=14, color=cmap(j % 10), label=cluster)
        if highlight_clusters:
            ax.legend(loc="best", fontsize=8)
    ax.set_xlabel("t-SNE 1")
    ax.set_ylabel("t-SNE 2")
    ax.set_title(title or f"embedding map ({coloring.value})")
    fig.tight_layout()
    fig.savefig(plot_path, dpi=150)
    plt.close(fig)

    with Path(csv_path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["complex_id", "x", "y", "color_value"])
        for i, (x, y), c in zip(ids, xy, colors):
            writer.writerow([i, repr(float(x)), repr(float(y)), c])
    logger.info("wrote projection of %d points to %s and %s", len(ids), plot_path, csv_path)
