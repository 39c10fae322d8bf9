"""Clustering validity indices: compactness, purity, Rand index,
Davies-Bouldin index and normalized mutual information.

Entropies use the natural logarithm; the base cancels in NMI.
"""

import json
import math
from dataclasses import asdict, dataclass
from functools import cache
from importlib import resources

import jsonschema
import numpy as np
from scipy.spatial.distance import pdist

from .exceptions import DegenerateClusteringError, InvalidInputError

__all__ = [
    "CviReport",
    "contingency",
    "compactness",
    "purity",
    "rand_index",
    "pair_counts",
    "davies_bouldin",
    "nmi",
    "report",
    "report_schema",
    "validate_report",
]


def _labels(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional")
    if arr.size and (not np.issubdtype(arr.dtype, np.integer) or arr.min() < 0):
        raise InvalidInputError(f"{name} must hold nonnegative integer ids")
    return arr.astype(np.int64)


def _pair(predicted, truth):
    if truth is None:
        raise InvalidInputError("ground-truth labels are required for this index")
    predicted = _labels(predicted, "predicted")
    truth = _labels(truth, "truth")
    if predicted.shape != truth.shape:
        raise InvalidInputError("predicted and truth differ in length")
    if predicted.size == 0:
        raise InvalidInputError("empty labelling")
    return predicted, truth


def contingency(predicted, truth):
    """Integer table ``N[i, j]`` = points in cluster ``i`` with class ``j``."""
    predicted, truth = _pair(predicted, truth)
    _, p = np.unique(predicted, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def compactness(data, predicted):
    """Cluster-size weighted mean of intra-cluster average pairwise distance.

    Singleton clusters contribute 0.  Lower is better.
    """
    points = data.points if hasattr(data, "points") else np.asarray(data, dtype=float)
    predicted = _labels(predicted, "predicted")
    if predicted.shape[0] != points.shape[0]:
        raise InvalidInputError("labels and data differ in length")
    total = 0.0
    for c in np.unique(predicted):
        members = points[predicted == c]
        nk = members.shape[0]
        if nk < 2:
            continue
        total += nk * pdist(members).sum() / (nk * (nk - 1) / 2)
    return float(total / points.shape[0])


def purity(predicted, truth):
    """Weighted majority-class fraction over clusters, in ``[0, 1]``."""
    table = contingency(predicted, truth)
    return int(table.max(axis=1).sum()) / int(table.sum())


def _comb2(x):
    return x * (x - 1) // 2


def pair_counts(predicted, truth):
    """``(TP, FP, TN, FN)`` over all unordered point pairs."""
    table = contingency(predicted, truth)
    n = int(table.sum())
    same_both = sum(_comb2(int(v)) for v in table.ravel())
    same_cluster = sum(_comb2(int(v)) for v in table.sum(axis=1))
    same_class = sum(_comb2(int(v)) for v in table.sum(axis=0))
    tp = same_both
    fp = same_cluster - same_both
    fn = same_class - same_both
    tn = _comb2(n) - tp - fp - fn
    return tp, fp, tn, fn


def rand_index(predicted, truth):
    predicted, truth = _pair(predicted, truth)
    if predicted.size < 2:
        raise InvalidInputError("the Rand index needs at least two points")
    tp, fp, tn, fn = pair_counts(predicted, truth)
    return (tp + tn) / (tp + fp + tn + fn)


def davies_bouldin(data, predicted):
    """Davies-Bouldin index with centroid-based scatter and separation.

    Scatter is the mean member-to-centroid distance and separation is the
    centroid-to-centroid distance.  Lower is better.
    """
    points = data.points if hasattr(data, "points") else np.asarray(data, dtype=float)
    predicted = _labels(predicted, "predicted")
    if predicted.shape[0] != points.shape[0]:
        raise InvalidInputError("labels and data differ in length")
    ids = np.unique(predicted)
    if ids.size < 2:
        raise DegenerateClusteringError("the Davies-Bouldin index needs at least two clusters")
    centroids = np.array([points[predicted == c].mean(axis=0) for c in ids])
    scatter = np.array([
        np.linalg.norm(points[predicted == c] - centroids[k], axis=1).mean()
        for k, c in enumerate(ids)
    ])
    sep = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    np.fill_diagonal(sep, np.inf)
    if np.any(sep == 0):
        raise DegenerateClusteringError("two clusters share a centroid")
    ratios = (scatter[:, None] + scatter[None, :]) / sep
    return float(ratios.max(axis=1).mean())


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(predicted, truth):
    """``I(clusters; classes) / mean(H(clusters), H(classes))``.

    Returns 1 when both labellings are constant.
    """
    table = contingency(predicted, truth)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1), n)
    h_true = _entropy(table.sum(axis=0), n)
    if h_pred == 0.0 and h_true == 0.0:
        return 1.0
    pi = table.sum(axis=1) / n
    pj = table.sum(axis=0) / n
    nz = table > 0
    pij = table / n
    outer = np.outer(pi, pj)
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    return max(0.0, mi / ((h_pred + h_true) / 2))


@dataclass
class CviReport:
    """The five indices; truth-dependent ones are ``None`` without labels.

    ``dbi`` is ``None`` when the index is undefined (a single cluster or
    coincident centroids).
    """

    compactness: float
    purity: float = None
    rand: float = None
    dbi: float = None
    nmi: float = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj):
        return cls(**{k: obj.get(k) for k in ("compactness", "purity", "rand", "dbi", "nmi")})


def report(data, predicted, truth=None):
    """All five indices for one labelling."""
    try:
        dbi = davies_bouldin(data, predicted)
    except DegenerateClusteringError:
        dbi = None
    out = CviReport(compactness=compactness(data, predicted), dbi=dbi)
    if truth is not None:
        out.purity = purity(predicted, truth)
        out.nmi = nmi(predicted, truth)
        out.rand = rand_index(predicted, truth) if len(predicted) >= 2 else None
    if out.dbi is not None and not math.isfinite(out.dbi):
        out.dbi = None
    return out


@cache
def report_schema():
    """The published JSON schema of a serialized ``CviReport``."""
    text = resources.files("budgeted_svc").joinpath("cvi_report.schema.json").read_text()
    return json.loads(text)


def validate_report(obj):
    """Raise ``InvalidInputError`` unless ``obj`` matches the report schema."""
    try:
        jsonschema.validate(obj, report_schema())
    except jsonschema.ValidationError as exc:
        raise InvalidInputError(f"invalid CVI report: {exc.message}") from None
