"""Moment specifications and the feasibility set of sigma points.

A MomentSpec fixes the number of sigma points, a weight floor epsilon, and
per-order moment information: either an exact value E{X^k} or an interval
[l_k, u_k].  The induced feasibility set lives in R^{2*n_sigma} with variable
layout (z_1..z_n, w_1..w_n) and consists of all node/weight vectors whose
discrete moments match the exact values and fall inside the intervals, with
every weight at least epsilon and weights summing to one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import SamplingError, ValidationError
from .poly import Polynomial

MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class MomentSpec:
    """Problem instance: which moments are known exactly or by intervals."""

    n_sigma: int
    epsilon: float
    known: Dict[int, float] = field(default_factory=dict)
    intervals: Dict[int, Tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "known", {int(k): float(v) for k, v in self.known.items()}
        )
        object.__setattr__(
            self,
            "intervals",
            {int(k): (float(a), float(b)) for k, (a, b) in self.intervals.items()},
        )
        problems = self.validation_errors()
        if problems:
            raise ValidationError(
                "invalid moment specification:\n  - " + "\n  - ".join(problems)
            )

    def validation_errors(self) -> list:
        problems = []
        if self.n_sigma < 1:
            problems.append(f"n_sigma must be >= 1, got {self.n_sigma}")
        for k in (*self.known, *self.intervals):
            if k < 1:
                problems.append(f"moment orders must be >= 1, got {k}")
        overlap = set(self.known) & set(self.intervals)
        if overlap:
            problems.append(
                f"orders {sorted(overlap)} appear both as exact and interval moments"
            )
        for k, (lo, hi) in self.intervals.items():
            if lo > hi:
                problems.append(f"interval for order {k} has lower {lo} > upper {hi}")
        if self.n_sigma >= 1 and not (0.0 < self.epsilon < 1.0 / self.n_sigma):
            problems.append(
                f"epsilon must satisfy 0 < epsilon < 1/n_sigma "
                f"(= {1.0 / max(self.n_sigma, 1)}), got {self.epsilon}"
            )
        if not self._has_even_upper_bound():
            problems.append(
                "no even moment order carries an upper bound (exact value or "
                "interval upper); the feasibility set would be unbounded"
            )
        return problems

    def _has_even_upper_bound(self) -> bool:
        for k in self.known:
            if k % 2 == 0:
                return True
        for k, (_, hi) in self.intervals.items():
            if k % 2 == 0 and np.isfinite(hi):
                return True
        return False

    def orders(self) -> list:
        return sorted({*self.known, *self.intervals})

    def order_info(self, k: int) -> Tuple[float, float]:
        """(lower, upper) information for order k; exact values collapse."""
        if k in self.known:
            v = self.known[k]
            return v, v
        if k in self.intervals:
            return self.intervals[k]
        raise KeyError(f"no moment information for order {k}")

    def midpoint_moment(self, k: int) -> float:
        lo, hi = self.order_info(k)
        return 0.5 * (lo + hi)

    def max_interval_gap(self) -> float:
        if not self.intervals:
            return 0.0
        return max(hi - lo for lo, hi in self.intervals.values())

    # -- JSON schema: orders as decimal-string keys --------------------------

    def to_json_dict(self) -> dict:
        return {
            "n_sigma": self.n_sigma,
            "epsilon": self.epsilon,
            "known": {str(k): v for k, v in sorted(self.known.items())},
            "intervals": {
                str(k): [lo, hi] for k, (lo, hi) in sorted(self.intervals.items())
            },
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "MomentSpec":
        try:
            return cls(
                n_sigma=int(data["n_sigma"]),
                epsilon=float(data["epsilon"]),
                known={int(k): float(v) for k, v in data.get("known", {}).items()},
                intervals={
                    int(k): (float(v[0]), float(v[1]))
                    for k, v in data.get("intervals", {}).items()
                },
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise ValidationError(f"malformed moment spec JSON: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "MomentSpec":
        return cls.from_json_dict(json.loads(text))


@dataclass
class SigmaPointSet:
    """Nodes and weights of a discrete approximating distribution."""

    z: np.ndarray
    w: np.ndarray
    weight_tol: float = 1e-9

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float).ravel()
        self.w = np.asarray(self.w, dtype=float).ravel()
        if self.z.shape != self.w.shape:
            raise ValidationError("nodes and weights must have equal length")
        if abs(self.w.sum() - 1.0) > self.weight_tol:
            raise ValidationError(
                f"weights sum to {self.w.sum()!r}, not 1 within {self.weight_tol}"
            )
        if np.any(self.w < -self.weight_tol):
            raise ValidationError("weights must be non-negative")

    @property
    def n_sigma(self) -> int:
        return self.z.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.z, self.w])

    @classmethod
    def from_vector(cls, x: Sequence[float], weight_tol: float = 1e-6) -> "SigmaPointSet":
        x = np.asarray(x, dtype=float).ravel()
        if x.size % 2:
            raise ValidationError("vector length must be even (nodes then weights)")
        n = x.size // 2
        return cls(z=x[:n], w=x[n:], weight_tol=weight_tol)

    def moment(self, k: int) -> float:
        return float(np.sum(self.w * self.z**k))


class SemialgebraicSet:
    """Polynomial description of the feasible sigma-point/weight vectors."""

    def __init__(
        self,
        n_sigma: int,
        equalities: Sequence[Polynomial],
        inequalities: Sequence[Polynomial],
        spec: Optional[MomentSpec] = None,
        labels: Optional[dict] = None,
    ):
        self.n_sigma = int(n_sigma)
        self.n_vars = 2 * self.n_sigma
        for p in (*equalities, *inequalities):
            if p.n_vars != self.n_vars:
                raise ValidationError(
                    f"constraint has {p.n_vars} variables, set has {self.n_vars}"
                )
        self.equalities = tuple(equalities)
        self.inequalities = tuple(inequalities)
        self.spec = spec
        self.labels = labels or {}

    def coordinate_names(self) -> list:
        n = self.n_sigma
        return [f"z{i + 1}" for i in range(n)] + [f"w{i + 1}" for i in range(n)]

    def violation(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_vars,):
            raise ValidationError(
                f"point has shape {x.shape}, expected ({self.n_vars},)"
            )
        worst = 0.0
        for h in self.equalities:
            worst = max(worst, abs(h.evaluate(x)))
        for g in self.inequalities:
            worst = max(worst, -min(0.0, g.evaluate(x)))
        return worst

    def membership(self, x: Sequence[float], tol: float = MEMBERSHIP_TOL) -> bool:
        return self.violation(x) <= tol

    def membership_mask(self, points: np.ndarray, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        mask = np.ones(points.shape[0], dtype=bool)
        for h in self.equalities:
            mask &= np.abs(h.evaluate_batch(points)) <= tol
        for g in self.inequalities:
            mask &= g.evaluate_batch(points) >= -tol
        return mask


def _moment_polynomial(n_sigma: int, k: int) -> Polynomial:
    """sum_i z_i^k w_i over the (z, w) layout."""
    n_vars = 2 * n_sigma
    terms = {}
    for i in range(n_sigma):
        mono = [0] * n_vars
        mono[i] = k
        mono[n_sigma + i] = 1
        terms[tuple(mono)] = 1.0
    return Polynomial(n_vars, terms)


def build_set(spec: MomentSpec) -> SemialgebraicSet:
    """Feasibility set: weight floors, normalization, and moment constraints.

    Constraint counts: n_sigma weight-floor inequalities, one normalization
    equality, one equality per exact moment, two inequalities per interval
    moment.  A moment constraint of order k has polynomial degree k + 1.
    """
    n = spec.n_sigma
    n_vars = 2 * n

    inequalities = []
    for j in range(n):
        w_j = Polynomial.variable(n_vars, n + j)
        inequalities.append(w_j - spec.epsilon)

    equalities = [
        sum(
            (Polynomial.variable(n_vars, n + j) for j in range(n)),
            Polynomial.zero(n_vars),
        )
        - 1.0
    ]
    for k in sorted(spec.known):
        equalities.append(_moment_polynomial(n, k) - spec.known[k])
    for k in sorted(spec.intervals):
        lo, hi = spec.intervals[k]
        m_k = _moment_polynomial(n, k)
        inequalities.append(hi - m_k)
        inequalities.append(m_k - lo)

    return SemialgebraicSet(
        n_sigma=n,
        equalities=equalities,
        inequalities=inequalities,
        spec=spec,
    )


@dataclass
class SampleBatch:
    points: np.ndarray
    acceptance_rate: float
    proposals: int


def sample_set(
    sa_set: SemialgebraicSet,
    box,
    count: int,
    seed,
    tol: float = MEMBERSHIP_TOL,
    max_proposals: int = 50_000_000,
) -> SampleBatch:
    """Uniform rejection samples of the set from an enclosing box.

    The normalization equality confines the set to an affine slice of the box,
    so proposals draw the nodes and the first n-1 weights uniformly from the
    box and set the last weight to 1 - sum(others); every other constraint is
    then rejection-tested.  Specs with exact moment equalities make the target
    measure-zero in the slice and end in the acceptance-rate error below.
    """
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    lower = np.asarray(box.lower, dtype=float)
    upper = np.asarray(box.upper, dtype=float)
    n = sa_set.n_sigma
    if lower.shape != (2 * n,) or upper.shape != (2 * n,):
        raise ValidationError("box must bound all 2*n_sigma coordinates")

    rng = np.random.default_rng(seed)
    free = list(range(n)) + list(range(n, 2 * n - 1))  # z's and w_1..w_{n-1}
    accepted = []
    n_accepted = 0
    proposals = 0
    chunk = max(4 * count, 10_000)

    while n_accepted < count:
        draw = rng.uniform(
            lower[free], upper[free], size=(chunk, len(free))
        )
        points = np.empty((chunk, 2 * n))
        points[:, free] = draw
        points[:, 2 * n - 1] = 1.0 - points[:, n : 2 * n - 1].sum(axis=1)
        mask = sa_set.membership_mask(points, tol)
        proposals += chunk
        hits = points[mask]
        if hits.shape[0]:
            accepted.append(hits)
            n_accepted += hits.shape[0]
        rate = n_accepted / proposals
        if proposals >= 10_000_000 and rate < 1e-5:
            raise SamplingError(
                f"acceptance rate {rate:.2e} after {proposals} proposals; the "
                "box is too loose or the set is (near) measure-zero (exact "
                "moment equalities); tighten the box or relax the spec"
            )
        if proposals >= max_proposals:
            raise SamplingError(
                f"exceeded {max_proposals} proposals with only {n_accepted} "
                f"accepted (rate {rate:.2e})"
            )

    points = np.vstack(accepted)[:count]
    return SampleBatch(
        points=points,
        acceptance_rate=n_accepted / proposals,
        proposals=proposals,
    )
