"""RBF kernel and the sparse kernel-expansion model ``w = sum_i alpha_i phi(x_i)``.

The expansion keeps a cached ``||w||^2`` that is updated incrementally by
every mutation and periodically recomputed from the Gram form to bound
floating-point drift.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError

__all__ = [
    "KernelSpec",
    "KernelExpansion",
    "kernel_eval",
    "sq_distances",
]

_CHUNK = 2048


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and width.

    Only the Gaussian (RBF) kernel ``K(x, y) = exp(-gamma ||x - y||^2)`` is
    supported.
    """

    gamma: float
    kind: str = "rbf"

    def __post_init__(self):
        if self.kind != "rbf":
            raise InvalidInputError(f"unsupported kernel kind {self.kind!r}")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise InvalidInputError(f"gamma must be positive and finite, got {self.gamma!r}")

    @property
    def feature_bound(self):
        """Upper bound ``R`` on ``||phi(x)||``; exactly 1 for RBF."""
        return 1.0

    def diag(self, n):
        """``K(x, x)`` for ``n`` points."""
        return np.ones(n)

    def from_sq_dist(self, d2):
        return np.exp(-self.gamma * d2)

    def pairwise(self, A, B):
        """Kernel matrix between the rows of ``A`` and ``B``."""
        return self.from_sq_dist(sq_distances(A, B))

    def to_dict(self):
        return {"kind": self.kind, "gamma": self.gamma}


def sq_distances(A, B):
    """Squared Euclidean distances between rows, by explicit differences.

    Explicit differencing (rather than the ``|a|^2 + |b|^2 - 2ab`` expansion)
    keeps the result exactly symmetric and nonnegative.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    out = np.empty((A.shape[0], B.shape[0]))
    for start in range(0, A.shape[0], _CHUNK):
        diff = A[start:start + _CHUNK, None, :] - B[None, :, :]
        out[start:start + _CHUNK] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def kernel_eval(spec, x, y):
    """Evaluate ``K(x, y)`` for two vectors of equal dimension."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise InvalidInputError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    diff = x - y
    return math.exp(-spec.gamma * float(diff @ diff))


def _key(x):
    # +0.0 folds -0.0 onto 0.0 so the byte key matches coordinate equality
    return (x + 0.0).tobytes()


class KernelExpansion:
    """Sparse kernel expansion with fixed bias ``rho = 1``.

    Parameters
    ----------
    kernel : KernelSpec
    dim : int
        Input-space dimension of every support point.
    norm_refresh_every : int, default=1000
        Recompute ``norm_sq`` from scratch after this many mutations.

    Notes
    -----
    Terms with a zero coefficient are never appended, and a point already
    present (exact coordinate equality) has its coefficient incremented
    instead of being duplicated.  Each term also carries an integer ``id``
    (the source row when built by the trainer, ``-1`` otherwise).

    ``n_kernel_evals`` counts kernel evaluations made by scoring and
    mutation; from-scratch refreshes are counted in ``n_refresh_evals``.
    """

    rho = 1.0

    def __init__(self, kernel, dim, norm_refresh_every=1000):
        if int(dim) < 1:
            raise InvalidInputError("dim must be a positive integer")
        if int(norm_refresh_every) < 1:
            raise InvalidInputError("norm_refresh_every must be positive")
        self.kernel = kernel
        self.dim = int(dim)
        self.norm_refresh_every = int(norm_refresh_every)
        self._points = np.empty((8, self.dim))
        self._alphas = np.empty(8)
        self._ids = np.empty(8, dtype=np.int64)
        self._size = 0
        self._index = {}
        self.norm_sq = 0.0
        self._mutations = 0
        self.n_kernel_evals = 0
        self.n_refresh_evals = 0

    # -- views -------------------------------------------------------------

    def __len__(self):
        return self._size

    @property
    def points(self):
        return self._points[:self._size]

    @property
    def alphas(self):
        return self._alphas[:self._size]

    @property
    def ids(self):
        return self._ids[:self._size]

    @property
    def norm(self):
        return math.sqrt(self.norm_sq)

    def find(self, x):
        """Position of the support point equal to ``x``, or ``None``."""
        return self._index.get(_key(self._check_point(x)))

    # -- scoring -----------------------------------------------------------

    def _check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.dim:
            raise InvalidInputError(
                f"expected a vector of dimension {self.dim}, got shape {x.shape}")
        return x

    def _check_batch(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise InvalidInputError(
                f"expected an (n, {self.dim}) array, got shape {X.shape}")
        return X

    def kernel_row(self, x):
        """``K(x_i, x)`` for every support point ``x_i``."""
        x = self._check_point(x)
        b = self._size
        self.n_kernel_evals += b
        diff = self._points[:b] - x
        return np.exp(-self.kernel.gamma * np.einsum("ij,ij->i", diff, diff))

    def margin_score(self, x):
        """``w^T phi(x) = sum_i alpha_i K(x_i, x)``; zero for an empty model."""
        if self._size == 0:
            self._check_point(x)
            return 0.0
        return float(self.kernel_row(x) @ self._alphas[:self._size])

    def decision_value(self, x):
        """``f(x) = w^T phi(x) - 1``; ``f >= 0`` inside the domain of novelty."""
        return self.margin_score(x) - self.rho

    def margin_scores(self, X):
        """Vectorised :meth:`margin_score` over the rows of ``X``."""
        X = self._check_batch(X)
        if self._size == 0:
            return np.zeros(X.shape[0])
        self.n_kernel_evals += X.shape[0] * self._size
        return self.kernel.pairwise(X, self.points) @ self.alphas

    def decision_function(self, X):
        return self.margin_scores(X) - self.rho

    # -- mutation ----------------------------------------------------------

    def _touch(self):
        self._mutations += 1
        if self._mutations % self.norm_refresh_every == 0:
            self.refresh_norm()

    def gram_norm_sq(self):
        """``sum_ij alpha_i alpha_j K(x_i, x_j)`` recomputed from scratch."""
        if self._size == 0:
            return 0.0
        a = self.alphas
        self.n_refresh_evals += self._size * self._size
        return max(0.0, float(a @ self.kernel.pairwise(self.points, self.points) @ a))

    def refresh_norm(self):
        self.norm_sq = self.gram_norm_sq()

    def scale_coefficients(self, factor):
        """Multiply every coefficient by ``factor`` (the support is unchanged)."""
        factor = float(factor)
        if not math.isfinite(factor):
            raise InvalidInputError("scale factor must be finite")
        self._alphas[:self._size] *= factor
        self.norm_sq *= factor * factor
        self._touch()
        return self

    def add_term(self, x, coeff, score=None, id=-1):
        """Add ``coeff * phi(x)`` to the expansion.

        ``score`` may carry a precomputed ``margin_score(x)`` of the current
        model so the update costs a single kernel evaluation.  Returns the
        position of the affected term and whether it was newly appended
        (``(None, False)`` for a zero coefficient, which is a no-op).
        """
        x = self._check_point(x)
        coeff = float(coeff)
        if not math.isfinite(coeff):
            raise InvalidInputError("coefficient must be finite")
        if coeff == 0.0:
            return None, False
        if score is None:
            score = self.margin_score(x)
        self.n_kernel_evals += 1
        kxx = 1.0  # K(x, x) for RBF
        self.norm_sq = max(0.0, self.norm_sq + 2.0 * coeff * score + coeff * coeff * kxx)
        key = _key(x)
        pos = self._index.get(key)
        appended = pos is None
        if appended:
            pos = self._size
            if pos == self._points.shape[0]:
                self._grow()
            self._points[pos] = x
            self._alphas[pos] = coeff
            self._ids[pos] = id
            self._index[key] = pos
            self._size += 1
        else:
            self._alphas[pos] += coeff
        self._touch()
        return pos, appended

    def _grow(self):
        cap = 2 * self._points.shape[0]
        self._points = np.resize(self._points, (cap, self.dim))
        self._alphas = np.resize(self._alphas, cap)
        self._ids = np.resize(self._ids, cap)

    def remove_term(self, index):
        """Delete the term at support position ``index``; returns its (point, alpha)."""
        index = int(index)
        if not 0 <= index < self._size:
            raise InvalidInputError(f"support index {index} out of range [0, {self._size})")
        x = self._points[index].copy()
        alpha = float(self._alphas[index])
        score = self.margin_score(x)
        self.norm_sq = max(0.0, self.norm_sq - 2.0 * alpha * score + alpha * alpha)
        b = self._size
        self._points[index:b - 1] = self._points[index + 1:b]
        self._alphas[index:b - 1] = self._alphas[index + 1:b]
        self._ids[index:b - 1] = self._ids[index + 1:b]
        self._size -= 1
        del self._index[_key(x)]
        for key, pos in self._index.items():
            if pos > index:
                self._index[key] = pos - 1
        if self._size == 0:
            self.norm_sq = 0.0
        self._touch()
        return x, alpha

    # -- construction / serialization --------------------------------------

    @classmethod
    def from_terms(cls, kernel, points, alphas, ids=None, norm_refresh_every=1000):
        """Build an expansion from explicit terms (zero coefficients skipped)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        alphas = np.asarray(alphas, dtype=float).ravel()
        if points.shape[0] != alphas.shape[0]:
            raise InvalidInputError("points and alphas differ in length")
        model = cls(kernel, points.shape[1], norm_refresh_every)
        ids = np.full(len(alphas), -1) if ids is None else np.asarray(ids)
        for x, a, i in zip(points, alphas, ids):
            model.add_term(x, a, id=int(i))
        model.refresh_norm()
        model.n_kernel_evals = 0
        model.n_refresh_evals = 0
        return model

    def copy(self):
        other = KernelExpansion(self.kernel, self.dim, self.norm_refresh_every)
        b = self._size
        other._points = self._points[:max(b, 1)].copy()
        other._alphas = self._alphas[:max(b, 1)].copy()
        other._ids = self._ids[:max(b, 1)].copy()
        other._size = b
        other._index = dict(self._index)
        other.norm_sq = self.norm_sq
        return other

    def to_dict(self):
        return {
            "kernel": self.kernel.to_dict(),
            "rho": self.rho,
            "dim": self.dim,
            "support": [
                {"x": [float(v) for v in x], "alpha": float(a)}
                for x, a in zip(self.points, self.alphas)
            ],
        }

    @classmethod
    def from_dict(cls, obj):
        try:
            kernel = KernelSpec(gamma=float(obj["kernel"]["gamma"]),
                                kind=str(obj["kernel"]["kind"]))
            dim = int(obj["dim"])
            support = obj["support"]
            if float(obj.get("rho", 1.0)) != 1.0:
                raise InvalidInputError("rho must be 1")
            model = cls(kernel, dim)
            for term in support:
                x = np.asarray(term["x"], dtype=float)
                a = float(term["alpha"])
                if a == 0.0:
                    continue
                if x.shape != (dim,):
                    raise InvalidInputError("support point has wrong dimension")
                pos = model._size
                if pos == model._points.shape[0]:
                    model._grow()
                model._points[pos] = x
                model._alphas[pos] = a
                model._ids[pos] = -1
                model._index[_key(x)] = pos
                model._size += 1
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed model object: {exc}") from exc
        model.refresh_norm()
        model.n_refresh_evals = 0
        return model

    def to_json(self, **kwargs):
        # repr-based float output is the shortest exact round-trip form
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return (f"KernelExpansion(gamma={self.kernel.gamma!r}, dim={self.dim}, "
                f"support={self._size}, norm={self.norm:.6g})")
