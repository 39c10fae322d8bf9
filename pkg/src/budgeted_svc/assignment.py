"""Cluster assignment through equilibrium points of the decision function.

For the Gaussian kernel, stationary points of ``f(x) = sum_i a_i K(x_i, x) - 1``
are fixed points of

    P(x) = sum_i a_i K(x_i, x) x_i / sum_i a_i K(x_i, x).

Only points of the extended boundary ``{x_i : |f(x_i)| <= epsilon}`` are
iterated to their equilibria.  The (deduplicated) equilibria are linked by
a sample-point segment test, and connected components give the clusters.
Every other point inherits the label of its nearest boundary point.
"""

import json
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .exceptions import DegeneratePointError, InvalidInputError, InvalidStateError
from .kernel_model import sq_distances

__all__ = [
    "AssignConfig",
    "ClusterSolution",
    "Equilibrium",
    "fixed_point_map",
    "find_equilibrium",
    "find_equilibria",
    "extended_boundary",
    "default_epsilon",
    "dedup_equilibria",
    "segment_connected",
    "equilibrium_adjacency",
    "component_labels",
    "assign_clusters",
]

_TINY = 1e-300
_PAIR_CHUNK = 4096


@dataclass(frozen=True)
class AssignConfig:
    """Assignment tolerances.

    ``epsilon=None`` selects the 10th percentile of ``|f(x_i)|`` over the
    data, a starting-point heuristic rather than a principled choice.
    """

    epsilon: float = None
    fp_tol: float = 1e-6
    fp_max_iter: int = 500
    merge_tol: float = 1e-3
    m_samples: int = 20

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon >= 0:
            raise InvalidInputError("epsilon must be nonnegative")
        if not self.fp_tol > 0 or not self.merge_tol > 0:
            raise InvalidInputError("fp_tol and merge_tol must be positive")
        if int(self.fp_max_iter) < 1 or int(self.m_samples) < 1:
            raise InvalidInputError("fp_max_iter and m_samples must be positive")


Equilibrium = namedtuple("Equilibrium", "point converged n_iter residual")


def _require_support(model):
    if len(model) == 0:
        raise InvalidStateError("the model has no support vectors")


def _map_batch(model, X):
    """``(P(X), denominators)`` row-wise."""
    W = model.kernel.pairwise(X, model.points) * model.alphas
    den = W.sum(axis=1)
    num = np.einsum("ij,jk->ik", W, model.points)
    with np.errstate(divide="ignore", invalid="ignore"):
        return num / den[:, None], den


def fixed_point_map(model, x):
    """Kernel-weighted average ``P(x)`` of the support points."""
    _require_support(model)
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise InvalidInputError(f"expected a vector of dimension {model.dim}")
    px, den = _map_batch(model, x[None, :])
    if not abs(den[0]) >= _TINY:
        raise DegeneratePointError(
            f"fixed-point denominator {den[0]:.3g} vanishes at this point")
    return px[0]


def find_equilibria(model, starts, cfg=AssignConfig()):
    """Iterate ``x <- P(x)`` from every row of ``starts``.

    Stops a trajectory at the first iterate whose map residual
    ``||P(x) - x||`` is at most ``cfg.fp_tol`` and returns that iterate, so
    converged outputs satisfy the residual bound exactly.  When the map is
    undefined (vanishing denominator, possible with negative coefficients)
    the trajectory restarts once from the nearest support vector with a
    positive coefficient; otherwise it ends unconverged.

    Returns ``(points, converged, n_iter, residuals)``.
    """
    _require_support(model)
    X = np.array(starts, dtype=float, ndmin=2)
    if X.shape[1] != model.dim:
        raise InvalidInputError(f"expected start points of dimension {model.dim}")
    n = X.shape[0]
    converged = np.zeros(n, dtype=bool)
    n_iter = np.zeros(n, dtype=np.int64)
    residual = np.full(n, np.inf)
    restarted = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    positive = model.points[model.alphas > 0]

    for _ in range(int(cfg.fp_max_iter)):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        px, den = _map_batch(model, X[idx])
        ok = np.abs(den) >= _TINY
        res = np.full(idx.size, np.inf)
        res[ok] = np.linalg.norm(px[ok] - X[idx[ok]], axis=1)
        residual[idx[ok]] = res[ok]
        done = ok & (res <= cfg.fp_tol)
        converged[idx[done]] = True
        active[idx[done]] = False
        move = ok & ~done
        X[idx[move]] = px[move]
        n_iter[idx[move]] += 1
        bad = idx[~ok]
        if bad.size:
            can = bad[~restarted[bad]] if positive.shape[0] else bad[:0]
            if can.size:
                nearest = np.argmin(sq_distances(X[can], positive), axis=1)
                X[can] = positive[nearest]
                restarted[can] = True
            active[np.setdiff1d(bad, can)] = False
    return X, converged, n_iter, residual


def find_equilibrium(model, x0, cfg=AssignConfig()):
    """Equilibrium reached from ``x0``; see :func:`find_equilibria`."""
    points, conv, n_iter, res = find_equilibria(model, np.asarray(x0, dtype=float)[None, :], cfg)
    return Equilibrium(points[0], bool(conv[0]), int(n_iter[0]), float(res[0]))


def extended_boundary(model, data, epsilon):
    """Indices ``i`` with ``|f(x_i)| <= epsilon``."""
    points = data.points if hasattr(data, "points") else np.asarray(data, dtype=float)
    f = model.decision_function(points)
    return np.flatnonzero(np.abs(f) <= epsilon)


def default_epsilon(model, data, percentile=10.0):
    points = data.points if hasattr(data, "points") else np.asarray(data, dtype=float)
    return float(np.percentile(np.abs(model.decision_function(points)), percentile))


def dedup_equilibria(points, merge_tol):
    """Greedy first-come merging of nearby equilibria.

    A point joins the first representative within ``merge_tol`` (Euclidean,
    inclusive), otherwise it becomes a new representative.  Returns
    ``(representatives, owner)`` where ``owner[i]`` indexes the
    representative of ``points[i]``.
    """
    points = np.array(points, dtype=float, ndmin=2)
    reps = []
    owner = np.empty(points.shape[0], dtype=np.int64)
    tol_sq = merge_tol * merge_tol
    rep_arr = np.empty((0, points.shape[1]))
    for i, x in enumerate(points):
        if reps:
            diff = rep_arr - x
            hit = np.flatnonzero(np.einsum("ij,ij->i", diff, diff) <= tol_sq)
            if hit.size:
                owner[i] = hit[0]
                continue
        owner[i] = len(reps)
        reps.append(x)
        rep_arr = np.asarray(reps)
    return rep_arr, owner


def _segment_samples(a, b, m):
    # canonical endpoint order makes the test exactly symmetric in (a, b)
    if tuple(b) < tuple(a):
        a, b = b, a
    s = np.arange(1, m + 1) / (m + 1)
    return a[None, :] + s[:, None] * (b - a)[None, :]


def segment_connected(model, a, b, m_samples=20):
    """True iff ``f >= 0`` at ``m_samples`` equispaced interior points of ``[a, b]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidInputError("segment endpoints differ in dimension")
    samples = _segment_samples(a, b, int(m_samples))
    return bool(np.all(model.decision_function(samples) >= 0))


def equilibrium_adjacency(model, E, m_samples=20):
    """Symmetric boolean matrix of sample-point tests over all pairs of ``E``."""
    E = np.array(E, dtype=float, ndmin=2)
    M = E.shape[0]
    adj = np.eye(M, dtype=bool)
    pairs = [(i, j) for i in range(M) for j in range(i + 1, M)]
    m = int(m_samples)
    for start in range(0, len(pairs), _PAIR_CHUNK):
        chunk = pairs[start:start + _PAIR_CHUNK]
        samples = np.vstack([_segment_samples(E[i], E[j], m) for i, j in chunk])
        inside = (model.decision_function(samples) >= 0).reshape(len(chunk), m).all(axis=1)
        for (i, j), ok in zip(chunk, inside):
            adj[i, j] = adj[j, i] = ok
    return adj


def component_labels(adjacency):
    """Connected-component ids, numbered by first appearance."""
    adjacency = np.asarray(adjacency, dtype=bool)
    if adjacency.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    _, raw = connected_components(adjacency, directed=False)
    return _first_appearance(raw)


def _first_appearance(raw):
    mapping = {}
    return np.array([mapping.setdefault(int(v), len(mapping)) for v in raw], dtype=np.int64)


@dataclass
class ClusterSolution:
    """Result of :func:`assign_clusters`."""

    labels: np.ndarray
    equilibria: np.ndarray
    equilibrium_labels: np.ndarray
    boundary_members: np.ndarray
    adjacency: np.ndarray
    epsilon: float
    converged: np.ndarray
    residuals: np.ndarray
    trajectory_owner: np.ndarray

    @property
    def n_clusters(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def M(self):
        return int(self.equilibria.shape[0])

    def to_csv(self):
        in_b = np.zeros(self.labels.shape[0], dtype=bool)
        in_b[self.boundary_members] = True
        lines = ["point_index,cluster_id,in_boundary"]
        lines += [f"{i},{int(c)},{int(b)}" for i, (c, b) in enumerate(zip(self.labels, in_b))]
        return "\n".join(lines) + "\n"

    def sidecar(self):
        return {
            "M": self.M,
            "epsilon": self.epsilon,
            "num_clusters": self.n_clusters,
            "boundary_size": int(self.boundary_members.size),
            "equilibria": self.equilibria.tolist(),
            "equilibrium_labels": self.equilibrium_labels.tolist(),
            "equilibrium_converged": self.converged.tolist(),
            "adjacency": self.adjacency.astype(int).tolist(),
        }

    def sidecar_json(self):
        return json.dumps(self.sidecar(), sort_keys=True)


def assign_clusters(model, data, cfg=AssignConfig()):
    """Label every point of ``data`` from the equilibria of ``model``.

    With an empty extended boundary the whole dataset becomes cluster 0.
    """
    _require_support(model)
    points = data.points if hasattr(data, "points") else np.asarray(data, dtype=float)
    if points.shape[1] != model.dim:
        raise InvalidInputError(f"data dimension {points.shape[1]} != model dimension {model.dim}")
    n = points.shape[0]
    eps = default_epsilon(model, points) if cfg.epsilon is None else float(cfg.epsilon)
    boundary = extended_boundary(model, points, eps)
    if boundary.size == 0:
        empty = np.zeros((0, model.dim))
        return ClusterSolution(
            labels=np.zeros(n, dtype=np.int64), equilibria=empty,
            equilibrium_labels=np.zeros(0, dtype=np.int64), boundary_members=boundary,
            adjacency=np.zeros((0, 0), dtype=bool), epsilon=eps,
            converged=np.zeros(0, dtype=bool), residuals=np.zeros(0),
            trajectory_owner=np.zeros(0, dtype=np.int64))

    ends, conv, _, res = find_equilibria(model, points[boundary], cfg)
    E, owner = dedup_equilibria(ends, cfg.merge_tol)
    # representative i is the first trajectory mapped to it
    first = np.array([np.flatnonzero(owner == r)[0] for r in range(E.shape[0])])
    adjacency = equilibrium_adjacency(model, E, cfg.m_samples)
    eq_labels = component_labels(adjacency)

    labels = np.empty(n, dtype=np.int64)
    labels[boundary] = eq_labels[owner]
    outside = np.setdiff1d(np.arange(n), boundary)
    if outside.size:
        nearest = np.argmin(sq_distances(points[outside], points[boundary]), axis=1)
        labels[outside] = labels[boundary[nearest]]

    relabel = {}
    for v in labels:
        relabel.setdefault(int(v), len(relabel))
    labels = np.array([relabel[int(v)] for v in labels], dtype=np.int64)
    eq_labels = np.array([relabel[int(v)] for v in eq_labels], dtype=np.int64)
    return ClusterSolution(
        labels=labels, equilibria=E, equilibrium_labels=eq_labels,
        boundary_members=boundary, adjacency=adjacency, epsilon=eps,
        converged=conv[first], residuals=res[first], trajectory_owner=owner)
