"""Datasets, CSV ingestion, standardization and synthetic generators.

Generator defaults (ring radii 1 and 2, noise 0.05, unit-radius moons) are
reconstructions of the nested-rings, two-moons and Gaussian-mixture
pictures commonly used for support vector clustering demos.
"""

import csv
import io
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .exceptions import InvalidInputError, ParseError

__all__ = [
    "Dataset",
    "load_csv",
    "save_csv",
    "dumps_csv",
    "standardize",
    "apply_standardization",
    "gen_rings",
    "gen_moons",
    "gen_gaussian_mixture",
    "MIXTURE_PRESETS",
    "load_iris",
    "make_rng",
]


@dataclass(frozen=True)
class Dataset:
    """An immutable ``N x d`` point matrix with optional integer class labels."""

    points: np.ndarray
    labels: np.ndarray = None
    name: str = field(default="dataset")

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidInputError(f"points must be a nonempty 2-D array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.array(self.labels, dtype=np.int64).ravel()
            if lab.shape[0] != pts.shape[0]:
                raise InvalidInputError("labels length differs from number of points")
            if lab.size and lab.min() < 0:
                raise InvalidInputError("labels must be nonnegative")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.n


def make_rng(seed, stream=0):
    """PCG64 generator for ``(seed, stream)``; distinct streams never overlap."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(stream,))))


# -- CSV ---------------------------------------------------------------------

def _parse_rows(lines, has_header, label_column):
    rows = list(csv.reader(lines))
    start = 1 if has_header else 0
    points, raw_labels, width = [], [], None
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if width is None:
            width = len(row)
            if label_column is not None and not -width <= label_column < width:
                raise ParseError(f"label column {label_column} out of range", lineno)
        elif len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", lineno)
        feats = list(row)
        if label_column is not None:
            raw_labels.append(feats.pop(label_column).strip())
        try:
            points.append([float(c) for c in feats])
        except ValueError as exc:
            raise ParseError(f"non-numeric feature: {exc}", lineno) from None
    if not points:
        raise ParseError("no data rows", 1)
    labels = None
    if label_column is not None:
        ids = {}
        labels = [ids.setdefault(v, len(ids)) for v in raw_labels]
    return np.array(points, dtype=float), labels


def load_csv(path, has_header=False, label_column=None, name=None):
    """Read a numeric CSV; the optional label column is mapped to dense ids
    in order of first appearance."""
    with open(path, newline="") as fh:
        points, labels = _parse_rows(fh, has_header, label_column)
    if points.shape[1] == 0:
        raise ParseError("no feature columns", 1)
    return Dataset(points, labels, name=name or str(path))


def dumps_csv(data, header=False):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        cols = [f"x{j}" for j in range(data.dim)]
        writer.writerow(cols + (["label"] if data.labels is not None else []))
    for i, row in enumerate(data.points):
        cells = [format(v, ".17g") for v in row]
        if data.labels is not None:
            cells.append(str(int(data.labels[i])))
        writer.writerow(cells)
    return buf.getvalue()


def save_csv(data, path, header=False):
    """Write features with 17 significant digits, label (if any) last."""
    with open(path, "w", newline="") as fh:
        fh.write(dumps_csv(data, header=header))


# -- standardization ---------------------------------------------------------

def apply_standardization(data, mean, scale):
    pts = (data.points - np.asarray(mean)) / np.asarray(scale)
    return Dataset(pts, data.labels, name=data.name)


def standardize(data):
    """Zero-mean, unit-variance features.

    Returns ``(dataset, mean, scale)``.  Constant features are centred and
    their scale recorded as 1.
    """
    if data.n < 2:
        raise InvalidInputError("standardization needs at least two points")
    mean = data.points.mean(axis=0)
    scale = data.points.std(axis=0)
    scale[scale == 0] = 1.0
    return apply_standardization(data, mean, scale), mean, scale


# -- generators --------------------------------------------------------------

def gen_rings(n_per_ring=200, radii=(1.0, 2.0), noise_sigma=0.05,
              center_cluster_n=100, seed=0, center_sigma=0.15):
    """Two concentric noisy circles around a central Gaussian blob.

    Labels: 0 and 1 for the rings (in the order of ``radii``), 2 for the blob.
    """
    r1, r2 = map(float, radii)
    if r1 <= 0 or r2 <= 0 or r1 == r2:
        raise InvalidInputError("radii must be distinct and positive")
    if n_per_ring < 1 or center_cluster_n < 1:
        raise InvalidInputError("counts must be at least 1")
    rng = make_rng(seed)
    parts, labels = [], []
    for lab, r in enumerate((r1, r2)):
        theta = rng.uniform(0.0, 2 * np.pi, n_per_ring)
        ring = r * np.column_stack([np.cos(theta), np.sin(theta)])
        parts.append(ring + noise_sigma * rng.standard_normal((n_per_ring, 2)))
        labels.append(np.full(n_per_ring, lab))
    parts.append(center_sigma * rng.standard_normal((center_cluster_n, 2)))
    labels.append(np.full(center_cluster_n, 2))
    return Dataset(np.vstack(parts), np.concatenate(labels), name="rings")


def gen_moons(n_per_moon=200, noise_sigma=0.05, seed=0):
    """Two interleaved unit-radius half circles.

    Moon 0 lies on ``(cos t, sin t)`` and moon 1 on ``(1 - cos t, 0.5 - sin t)``
    for ``t`` in ``[0, pi]``.
    """
    if n_per_moon < 1:
        raise InvalidInputError("n_per_moon must be at least 1")
    rng = make_rng(seed)
    t0 = rng.uniform(0.0, np.pi, n_per_moon)
    t1 = rng.uniform(0.0, np.pi, n_per_moon)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    pts = np.vstack([upper, lower])
    pts = pts + noise_sigma * rng.standard_normal(pts.shape)
    labels = np.repeat([0, 1], n_per_moon)
    return Dataset(pts, labels, name="moons")


def gen_gaussian_mixture(counts, means, sigmas, seed=0):
    """Isotropic Gaussian components; component ``j`` is labelled ``j``."""
    means = [np.asarray(m, dtype=float).ravel() for m in means]
    if not (len(counts) == len(means) == len(sigmas)) or not counts:
        raise InvalidInputError("counts, means and sigmas must be parallel nonempty lists")
    dim = means[0].shape[0]
    if any(m.shape[0] != dim for m in means):
        raise InvalidInputError("all means must share one dimension")
    if any(c < 1 for c in counts) or any(s < 0 for s in sigmas):
        raise InvalidInputError("counts must be >= 1 and sigmas >= 0")
    rng = make_rng(seed)
    parts = [m + s * rng.standard_normal((c, dim)) for c, m, s in zip(counts, means, sigmas)]
    labels = np.concatenate([np.full(c, j) for j, c in enumerate(counts)])
    return Dataset(np.vstack(parts), labels, name=f"gauss{len(counts)}")


# Three and four well-separated planar components, 0.4 standard deviation each.
MIXTURE_PRESETS = {
    "gauss3": ([(0.0, 0.0), (3.0, 0.0), (1.5, 2.5)], [0.4] * 3),
    "gauss4": ([(0.0, 0.0), (3.0, 0.0), (0.0, 3.0), (3.0, 3.0)], [0.4] * 4),
}


def load_iris():
    """The 150 x 4 Iris measurements shipped with the package (3 classes)."""
    ref = resources.files("budgeted_svc").joinpath("datasets").joinpath("iris.csv")
    with resources.as_file(ref) as path:
        return load_csv(path, has_header=True, label_column=4, name="iris")
