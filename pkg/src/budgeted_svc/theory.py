"""Computable convergence bounds and a trace auditor.

For an RBF kernel every feature vector has unit norm (``R = 1``).  With
learning rate ``1/t`` a coefficient incremented ``m`` times up to step ``t``
equals exactly ``m C / t``, so the checked bounds

* ``sum_i |alpha_i| <= C R``,
* ``||w|| <= C R^2``,
* ``|alpha_removed| <= m C R / t``

can be attained with equality.  Comparisons therefore allow a relative
slack of ``REL_SLACK`` for floating-point rounding.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import InvalidInputError
from .trainer import STRATEGIES, TrainConfig, objective, train

__all__ = [
    "REL_SLACK",
    "BoundSet",
    "AuditReport",
    "compute_bounds",
    "regret_bound",
    "audit_trace",
    "regret_curve",
]

REL_SLACK = 1e-9


@dataclass(frozen=True)
class BoundSet:
    """Gradient bound ``G``, maintenance-perturbation bound ``H`` and
    distance bound ``W`` for given ``C``, ``R`` and update cap ``m``."""

    R: float
    G: float
    H: float
    W: float
    m: int


def compute_bounds(C, R=1.0, m=1):
    if not (C > 0 and R > 0 and m > 0):
        raise InvalidInputError("C, R and m must be positive")
    G = C * R + C * R * R
    H = m * C * R * R
    W = H + math.sqrt(H * H + (G + H) ** 2)
    return BoundSet(R=float(R), G=G, H=H, W=W, m=int(m))


def regret_bound(T, bounds, R=None, maintenance_terms=()):
    """Upper bound on the averaged objective gap after ``T`` steps.

    ``(G + H)^2 (log T + 1) / (2T) + (W R / T) * sum(maintenance_terms)``;
    each term is a per-step maintenance probability times the root mean
    squared removed-coefficient magnitude.
    """
    if T < 1:
        raise InvalidInputError("T must be at least 1")
    terms = np.asarray(maintenance_terms, dtype=float)
    if terms.size and terms.min() < 0:
        raise InvalidInputError("maintenance terms must be nonnegative")
    R = bounds.R if R is None else R
    gh = bounds.G + bounds.H
    return gh * gh * (math.log(T) + 1.0) / (2.0 * T) + bounds.W * R / T * float(terms.sum())


@dataclass
class AuditReport:
    """Bound violations found in a trace, each as ``(step, observed, bound)``.

    ``realized_bound`` plugs the observed removal magnitudes ``t |alpha|``
    into the regret bound in place of their unobservable expectation; it is
    a proxy, not the theorem's quantity.  Lemma checks are skipped (and
    ``checked`` is False) for projection strategies.
    """

    strategy: str
    C: float
    R: float
    steps: int
    checked: bool
    m: int
    maintenance_rate: float
    lemma1_violations: list = field(default_factory=list)
    lemma2_violations: list = field(default_factory=list)
    lemma4_violations: list = field(default_factory=list)
    realized_bound: float = None
    regret_curve: list = field(default_factory=list)

    @property
    def ok(self):
        return not (self.lemma1_violations or self.lemma2_violations or self.lemma4_violations)

    def to_dict(self):
        out = asdict(self)
        out["ok"] = self.ok
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _exceeds(observed, bound):
    return observed > bound * (1.0 + REL_SLACK)


def audit_trace(trace, C, R=1.0, strategy="removal"):
    """Check a training trace against the per-step bounds.

    ``m`` at a maintenance event is the largest update count observed up to
    that step, as recorded in the trace.
    """
    if strategy not in STRATEGIES:
        raise InvalidInputError(f"unknown strategy {strategy!r}")
    if not C > 0 or not R > 0:
        raise InvalidInputError("C and R must be positive")
    if len(trace) == 0:
        raise InvalidInputError("empty trace")
    t = trace.column("t")
    s = trace.column("s_t")
    norm = trace.column("w_norm")
    max_updates = trace.column("max_updates")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(norm))):
        raise InvalidInputError("trace contains non-finite values")
    row_of = {int(step): i for i, step in enumerate(t)}
    for step in trace.events:
        if int(step) not in row_of:
            raise InvalidInputError(f"maintenance event at unknown step {step}")

    checked = strategy == "removal"
    report = AuditReport(strategy=strategy, C=float(C), R=float(R), steps=len(trace),
                         checked=checked, m=int(max(1, max_updates.max())),
                         maintenance_rate=trace.maintenance_count / len(trace))
    if checked:
        for i in np.flatnonzero(_exceeds(s, C * R)):
            report.lemma1_violations.append((int(t[i]), float(s[i]), C * R))
        for i in np.flatnonzero(_exceeds(norm, C * R * R)):
            report.lemma2_violations.append((int(t[i]), float(norm[i]), C * R * R))
        for step in sorted(trace.events):
            i = row_of[int(step)]
            observed = abs(float(trace.events[step]["alpha"]))
            bound = max(1, int(max_updates[i])) * C * R / int(step)
            if _exceeds(observed, bound):
                report.lemma4_violations.append((int(step), observed, bound))

    rho = [int(step) * abs(float(ev["alpha"])) for step, ev in trace.events.items()]
    bounds = compute_bounds(C, R, report.m)
    report.realized_bound = regret_bound(len(trace), bounds, R, rho)
    return report


def regret_curve(data, config, checkpoints, optimum):
    """Averaged-iterate objective gap ``J(w_bar_T) - optimum`` at each ``T``.

    Each checkpoint is a separate run with ``max_steps = T`` and no early
    stopping; runs sharing a seed are prefixes of one another.
    """
    curve = []
    for T in checkpoints:
        cfg = TrainConfig(**{**config.to_dict(), "max_steps": int(T), "stop_theta": 0.0,
                             "track_average": True})
        _, trace = train(data, cfg)
        curve.append((int(T), objective(trace.averaged, data, cfg.C) - optimum))
    return curve
