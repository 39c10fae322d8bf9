"""Budgeted SGD for the large-margin one-class SVM primal.

The objective is

    J(w) = 1/2 ||w||^2 + C/N sum_i max(0, 1 - w^T phi(x_i))

and step ``t`` (learning rate ``1/t``) performs

    w_{t+1} = (t-1)/t w_t + C/t [w_t^T phi(x_n) < 1] phi(x_n)

for a uniformly sampled index ``n``.  When a new support point pushes the
expansion past its budget, the least significant term is removed, or first
projected onto ``k`` neighbouring terms and then removed.
"""

import json
import math
from array import array
from collections import namedtuple
from dataclasses import asdict, dataclass

import numpy as np

from .data import make_rng
from .exceptions import (ConfigError, InvalidInputError, InvalidStateError,
                         NumericalFailureError)
from .kernel_model import KernelExpansion, KernelSpec, sq_distances

__all__ = [
    "STRATEGIES",
    "TrainConfig",
    "TrainTrace",
    "StepRecord",
    "Removal",
    "objective",
    "sgd_step",
    "select_redundant",
    "maintain_removal",
    "solve_projection_coeffs",
    "maintain_projection",
    "train",
]

STRATEGIES = ("removal", "projection_knn", "projection_random")

# RNG stream ids; stream 0 is left to dataset generators
_SAMPLING_STREAM = 1
_MAINTENANCE_STREAM = 2
_INDEX_BLOCK = 4096


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``budget=None`` disables budget maintenance.  ``stop_theta`` is the
    threshold on ``||w_{t+1} - w_t||`` that ends training early.
    """

    C: float = 1.0
    gamma: float = 1.0
    budget: int = None
    strategy: str = "removal"
    k: int = 5
    stop_theta: float = 0.01
    max_steps: int = 100_000
    seed: int = 0
    ridge: float = 1e-10
    norm_refresh_every: int = 1000
    track_average: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.C) and self.C > 0):
            raise ConfigError(f"C must be positive, got {self.C!r}")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ConfigError(f"gamma must be positive, got {self.gamma!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.budget is not None and int(self.budget) < 1:
            raise ConfigError("budget must be a positive integer or None")
        if int(self.k) < 1:
            raise ConfigError("k must be a positive integer")
        if self.strategy != "removal" and self.budget is not None and self.k >= self.budget:
            raise ConfigError(f"k={self.k} must be smaller than budget={self.budget} "
                              "for projection strategies")
        if not self.stop_theta >= 0:
            raise ConfigError("stop_theta must be nonnegative")
        if int(self.max_steps) < 1:
            raise ConfigError("max_steps must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not self.ridge >= 0:
            raise ConfigError("ridge must be nonnegative")
        if int(self.norm_refresh_every) < 1:
            raise ConfigError("norm_refresh_every must be positive")

    def to_dict(self):
        return asdict(self)


StepRecord = namedtuple(
    "StepRecord", "t sampled_index alpha_t score step_delta position appended")
StepRecord.__doc__ = """Outcome of one SGD step.

``score`` is ``w_t^T phi(x_n)`` before the update; ``position`` is the
support position touched (``None`` when the hinge was inactive).
"""

Removal = namedtuple("Removal", "position point alpha id")


_COLUMNS = (
    ("t", "q"), ("sampled_index", "q"), ("alpha_t", "d"), ("support_size", "q"),
    ("s_t", "d"), ("w_norm", "d"), ("step_delta", "d"), ("max_updates", "q"),
)


class TrainTrace:
    """Per-step training record stored column-wise.

    Every step has ``t, sampled_index, alpha_t, support_size, s_t, w_norm,
    step_delta, max_updates``; the norm-type quantities describe ``w_{t+1}``
    after maintenance.  Maintenance events are kept in ``events`` keyed by
    step.  ``update_counts`` maps a source row to the number of times its
    coefficient was incremented.
    """

    def __init__(self):
        self._cols = {name: array(code) for name, code in _COLUMNS}
        self.events = {}
        self.update_counts = {}
        self.averaged = None
        self.stop_reason = None

    def __len__(self):
        return len(self._cols["t"])

    def append(self, **values):
        for name, _ in _COLUMNS:
            self._cols[name].append(values[name])

    def column(self, name):
        return np.asarray(self._cols[name])

    def records(self):
        cols = [(name, self._cols[name]) for name, _ in _COLUMNS]
        for i in range(len(self)):
            rec = {name: col[i] for name, col in cols}
            rec["maintenance"] = self.events.get(rec["t"])
            yield rec

    @property
    def maintenance_count(self):
        return len(self.events)

    # -- JSON lines --------------------------------------------------------

    def write_jsonl(self, fh):
        for rec in self.records():
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            self.write_jsonl(fh)

    @classmethod
    def from_records(cls, records):
        trace = cls()
        prev_t = 0
        for lineno, rec in enumerate(records, start=1):
            try:
                values = {name: (int(rec[name]) if code == "q" else float(rec[name]))
                          for name, code in _COLUMNS}
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"record {lineno}: malformed trace record ({exc})") from None
            if values["t"] <= prev_t:
                raise InvalidInputError(f"record {lineno}: step index not strictly increasing")
            prev_t = values["t"]
            trace.append(**values)
            event = rec.get("maintenance")
            if event is not None:
                if not isinstance(event, dict) or "alpha" not in event:
                    raise InvalidInputError(f"record {lineno}: malformed maintenance event")
                trace.events[values["t"]] = event
        return trace

    @classmethod
    def read_jsonl(cls, lines):
        def parse():
            for lineno, line in enumerate(lines, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise InvalidInputError(f"line {lineno}: invalid JSON ({exc.msg})") from None
                if not isinstance(rec, dict):
                    raise InvalidInputError(f"line {lineno}: expected a JSON object")
                yield rec
        return cls.from_records(parse())

    @classmethod
    def from_jsonl(cls, path):
        with open(path) as fh:
            return cls.read_jsonl(fh)


def objective(model, data, C):
    """Primal objective ``J(w)`` evaluated exactly over the dataset."""
    if data.n < 1:
        raise InvalidInputError("objective needs a nonempty dataset")
    if model.dim != data.dim:
        raise InvalidInputError(f"model dimension {model.dim} != data dimension {data.dim}")
    scores = model.margin_scores(data.points)
    hinge = np.maximum(0.0, 1.0 - scores)
    return 0.5 * model.gram_norm_sq() + C * float(hinge.mean())


def sgd_step(model, data, t, C, rng=None, index=None):
    """One stochastic subgradient step, mutating ``model`` in place.

    Samples the row itself from ``rng`` unless ``index`` is given.  The step
    size ``||w_{t+1} - w_t||`` is obtained in closed form from the cached norm
    and the margin, so the step costs ``len(model) + 1`` kernel evaluations.
    """
    if t < 1:
        raise InvalidInputError("step index must be >= 1")
    if index is None:
        index = int(rng.integers(data.n))
    x = data.points[index]
    score = model.margin_score(x)
    norm_sq = model.norm_sq
    model.scale_coefficients((t - 1) / t)
    alpha_t = C / t if score < 1.0 else 0.0
    position, appended = model.add_term(x, alpha_t, score=score * (t - 1) / t, id=index)
    delta_sq = norm_sq / (t * t)
    if alpha_t:
        delta_sq += alpha_t * alpha_t - 2.0 * alpha_t * score / t
    return StepRecord(t, index, alpha_t, score, math.sqrt(max(delta_sq, 0.0)),
                      position, appended)


def select_redundant(model):
    """Position minimising ``|alpha_i| K(x_i, x_i)`` (lowest position on ties)."""
    if len(model) == 0:
        raise InvalidStateError("cannot select a redundant term from an empty model")
    weights = np.abs(model.alphas) * model.kernel.diag(len(model))
    return int(np.argmin(weights))


def maintain_removal(model):
    """Drop the most redundant term."""
    p = select_redundant(model)
    term_id = int(model.ids[p])
    point, alpha = model.remove_term(p)
    return Removal(p, point, alpha, term_id)


def solve_projection_coeffs(gram, cross, ridge=0.0):
    """Coefficients of the feature-space projection onto ``k`` neighbours.

    Solves ``(gram + ridge I) d = cross``.  With ``ridge=0`` a singular or
    numerically singular Gram matrix raises :class:`NumericalFailureError`.
    """
    gram = np.atleast_2d(np.asarray(gram, dtype=float))
    cross = np.asarray(cross, dtype=float).ravel()
    k = cross.shape[0]
    if gram.shape != (k, k) or k < 1:
        raise InvalidInputError(f"gram must be {k}x{k}, got {gram.shape}")
    if ridge < 0:
        raise InvalidInputError("ridge must be nonnegative")
    system = gram + ridge * np.eye(k)
    if np.linalg.cond(system) > 1e14:
        raise NumericalFailureError(
            "projection system is singular; retry with a positive ridge")
    try:
        return np.linalg.solve(system, cross)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(
            f"projection solve failed ({exc}); retry with a positive ridge") from None


def _neighbours(model, p, selector, k, rng):
    others = np.delete(np.arange(len(model)), p)
    if selector == "knn":
        d2 = sq_distances(model.points[p], model.points[others])[0]
        return others[np.argsort(d2, kind="stable")[:k]]
    if selector == "random":
        return np.sort(rng.choice(others, size=k, replace=False))
    raise InvalidInputError(f"unknown neighbour selector {selector!r}")


def maintain_projection(model, selector, k, rng=None, ridge=1e-10, neighbours=None):
    """Project the most redundant term onto ``k`` neighbours, then drop it.

    ``selector`` is ``"knn"`` (input-space nearest neighbours, ties by
    position) or ``"random"`` (uniform without replacement from ``rng``).
    ``neighbours`` overrides the selection with explicit positions.
    """
    if len(model) < k + 1:
        raise InvalidStateError(
            f"projection needs at least k+1={k + 1} support terms, have {len(model)}")
    p = select_redundant(model)
    if neighbours is None:
        neighbours = _neighbours(model, p, selector, k, rng)
    neighbours = np.asarray(neighbours, dtype=int)
    if p in neighbours:
        raise InvalidInputError("the removed term cannot be its own neighbour")
    x_p = model.points[p].copy()
    alpha_p = float(model.alphas[p])
    nb_points = model.points[neighbours].copy()
    gram = model.kernel.pairwise(nb_points, nb_points)
    cross = model.kernel.pairwise(nb_points, x_p)[:, 0]
    model.n_kernel_evals += k * k + k
    d = solve_projection_coeffs(gram, cross, ridge)
    for x_i, d_i in zip(nb_points, d):
        model.add_term(x_i, alpha_p * d_i)
    p = model.find(x_p)
    term_id = int(model.ids[p])
    model.remove_term(p)
    return Removal(p, x_p, alpha_p, term_id)


class _IndexStream:
    """Block-drawn uniform indices from a dedicated generator."""

    def __init__(self, rng, n):
        self._rng = rng
        self._n = n
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0

    def next(self):
        if self._pos == self._buf.shape[0]:
            self._buf = self._rng.integers(0, self._n, size=_INDEX_BLOCK)
            self._pos = 0
        value = int(self._buf[self._pos])
        self._pos += 1
        return value


def train(data, config):
    """Run budgeted SGD; returns ``(model, trace)``.

    Stops after the first step with ``||w_{t+1} - w_t|| <= stop_theta`` or
    after ``max_steps`` steps.  Identical ``(data, config)`` give identical
    results.  With ``config.track_average`` the averaged iterate
    ``(1/T) sum_{t<=T} w_t`` is stored on ``trace.averaged``.
    """
    if data.n < 1:
        raise InvalidInputError("cannot train on an empty dataset")
    model = KernelExpansion(KernelSpec(config.gamma), data.dim, config.norm_refresh_every)
    indices = _IndexStream(make_rng(config.seed, _SAMPLING_STREAM), data.n)
    maint_rng = make_rng(config.seed, _MAINTENANCE_STREAM)
    selector = {"projection_knn": "knn", "projection_random": "random"}.get(config.strategy)
    budget = config.budget
    counts = np.zeros(data.n, dtype=np.int64)
    max_updates = 0
    avg_sum = np.zeros(data.n) if config.track_average else None
    trace = TrainTrace()
    C = float(config.C)
    trace.stop_reason = "max_steps"

    for t in range(1, int(config.max_steps) + 1):
        if avg_sum is not None:
            avg_sum[model.ids] += model.alphas
        rec = sgd_step(model, data, t, C, index=indices.next())
        if rec.position is not None:
            row = model.ids[rec.position]
            counts[row] += 1
            if counts[row] > max_updates:
                max_updates = int(counts[row])
        if rec.appended and budget is not None and len(model) > budget:
            if selector is None:
                removed = maintain_removal(model)
            else:
                removed = maintain_projection(model, selector, config.k, maint_rng, config.ridge)
            trace.events[t] = {
                "removed_index": removed.position,
                "removed_row": removed.id,
                "alpha": removed.alpha,
                "updates": int(counts[removed.id]),
                "strategy": config.strategy,
            }
        trace.append(t=t, sampled_index=rec.sampled_index, alpha_t=rec.alpha_t,
                     support_size=len(model), s_t=float(np.abs(model.alphas).sum()),
                     w_norm=model.norm, step_delta=rec.step_delta, max_updates=max_updates)
        if rec.step_delta <= config.stop_theta:
            trace.stop_reason = "stop_theta"
            break

    steps = len(trace)
    trace.update_counts = {int(i): int(c) for i, c in enumerate(counts) if c}
    if avg_sum is not None:
        nz = np.flatnonzero(avg_sum)
        trace.averaged = KernelExpansion.from_terms(
            model.kernel, data.points[nz], avg_sum[nz] / steps, ids=nz)
    model.refresh_norm()
    return model, trace
