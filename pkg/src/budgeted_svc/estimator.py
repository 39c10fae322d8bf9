"""scikit-learn compatible wrappers around training and cluster assignment."""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, OutlierMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .assignment import AssignConfig, assign_clusters
from .data import Dataset
from .kernel_model import sq_distances
from .trainer import TrainConfig, train

__all__ = ["BudgetedOneClassSVM", "SupportVectorClustering"]


def _seed(random_state):
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    raise ValueError("random_state must be an int or None")


class BudgetedOneClassSVM(OutlierMixin, BaseEstimator):
    """One-class SVM with unit offset trained by budgeted SGD.

    Parameters
    ----------
    gamma : float
        RBF kernel width, ``K(x, y) = exp(-gamma ||x - y||^2)``.
    C : float
        Hinge-loss weight.
    budget : int or None
        Maximum number of support vectors; ``None`` means unlimited.
    strategy : {"removal", "projection_knn", "projection_random"}
    k : int
        Neighbours used by the projection strategies.
    stop_theta : float
        Stop once an update moves ``w`` by at most this much.
    max_steps : int
    random_state : int or None

    Attributes
    ----------
    model_ : KernelExpansion
    trace_ : TrainTrace
    """

    def __init__(self, gamma=1.0, C=1.0, budget=None, strategy="removal", k=5,
                 stop_theta=0.01, max_steps=100_000, random_state=0):
        self.gamma = gamma
        self.C = C
        self.budget = budget
        self.strategy = strategy
        self.k = k
        self.stop_theta = stop_theta
        self.max_steps = max_steps
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(C=float(self.C), gamma=float(self.gamma), budget=self.budget,
                           strategy=self.strategy, k=self.k, stop_theta=self.stop_theta,
                           max_steps=self.max_steps, seed=_seed(self.random_state))

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64)
        self.model_, self.trace_ = train(Dataset(X), self._train_config())
        self.support_vectors_ = self.model_.points.copy()
        self.dual_coef_ = self.model_.alphas.copy()
        return self

    def decision_function(self, X):
        """``f(x) = sum_i alpha_i K(x_i, x) - 1``; nonnegative inside the support."""
        check_is_fitted(self, "model_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return self.model_.decision_function(X)

    def score_samples(self, X):
        return self.decision_function(X) + 1.0

    def predict(self, X):
        """``+1`` for inliers (``f >= 0``) and ``-1`` for outliers."""
        return np.where(self.decision_function(X) >= 0, 1, -1)


class SupportVectorClustering(ClusterMixin, BudgetedOneClassSVM):
    """Support vector clustering with a budgeted one-class SVM.

    Training points near the learned contour (``|f| <= epsilon``) are
    iterated to equilibria of ``f``; equilibria joined by a segment that
    stays inside ``f >= 0`` share a cluster.

    Parameters
    ----------
    epsilon : float or None
        Extended-boundary tolerance.  ``None`` uses the 10th percentile of
        ``|f|`` over the training points.
    fp_tol, fp_max_iter, merge_tol, m_samples
        Equilibrium search and connectivity settings, see ``AssignConfig``.
    Other parameters are those of ``BudgetedOneClassSVM``.

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
    n_clusters_ : int
    solution_ : ClusterSolution
    """

    def __init__(self, gamma=1.0, C=1.0, budget=None, strategy="removal", k=5,
                 stop_theta=0.01, max_steps=100_000, random_state=0, epsilon=None,
                 fp_tol=1e-6, fp_max_iter=500, merge_tol=1e-3, m_samples=20):
        super().__init__(gamma=gamma, C=C, budget=budget, strategy=strategy, k=k,
                         stop_theta=stop_theta, max_steps=max_steps, random_state=random_state)
        self.epsilon = epsilon
        self.fp_tol = fp_tol
        self.fp_max_iter = fp_max_iter
        self.merge_tol = merge_tol
        self.m_samples = m_samples

    def fit(self, X, y=None):
        super().fit(X)
        X = check_array(X, dtype=np.float64)
        cfg = AssignConfig(epsilon=self.epsilon, fp_tol=self.fp_tol, fp_max_iter=self.fp_max_iter,
                           merge_tol=self.merge_tol, m_samples=self.m_samples)
        self.solution_ = assign_clusters(self.model_, Dataset(X), cfg)
        self.labels_ = self.solution_.labels
        self.n_clusters_ = self.solution_.n_clusters
        members = self.solution_.boundary_members
        # with an empty boundary every training point stands in for cluster 0
        self._anchors = X[members] if members.size else X
        self._anchor_labels = self.labels_[members] if members.size else self.labels_
        return self

    def predict(self, X):
        """Label of the nearest extended-boundary training point."""
        check_is_fitted(self, "labels_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        nearest = np.argmin(sq_distances(X, self._anchors), axis=1)
        return self._anchor_labels[nearest]
