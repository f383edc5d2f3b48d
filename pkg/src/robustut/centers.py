"""Robust sigma-point selection.

Methods, from cheapest to most expensive:

* ``naive_center``: two-point canonical nodes at the interval midpoints.
* ``normal_sigma_points`` / ``normal_interval_center``: three-point rules for
  a normal distribution with known mean and exact / interval variance.
* ``outer_box`` + ``box_center``: coordinate-wise relaxation bounds give an
  axis-aligned box enclosing the feasibility set; its midpoint approximates
  the Chebyshev center within half the box diameter.
* ``min_ball_center``: the minimum-enclosing-ball program posed directly as a
  polynomial optimization problem (joint in the set point, the center, and
  the squared radius).  As written the program admits the degenerate optimum
  r = 0 at coincident points, so its center is validated for feasibility only
  and the reported radius is not a certified enclosing radius.
* ``mc_oracle_center``: exact minimum enclosing ball of finite samples
  (Welzl), used as an independent reference for the two methods above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import SolverFailure, ValidationError
from .lasserre import (
    MIN,
    MAX,
    Pop,
    RelaxationOptions,
    pop_bound,
)
from .momentset import MomentSpec, SemialgebraicSet, SigmaPointSet, build_set
from .poly import Polynomial
from .sdp import SdpStatus, SolverOptions

NAIVE = "naive"
OUTER_BOX = "outer-box"
MIN_BALL = "min-ball"
MC_ORACLE = "mc-oracle"
METHODS = (NAIVE, OUTER_BOX, MIN_BALL, MC_ORACLE)

# Below this largest interval gap the relaxations are numerically fragile and
# the midpoint formula is essentially exact, so robust methods fall back to it.
SMALL_GAP = 1e-3


@dataclass
class Box:
    """Axis-aligned box over the (z, w) coordinates."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        if self.lower.shape != self.upper.shape:
            raise ValidationError("box bounds must have equal length")
        if np.any(self.lower > self.upper):
            raise ValidationError("box lower bounds exceed upper bounds")

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def radius(self) -> float:
        """Half-diagonal: the Chebyshev radius of the box."""
        return 0.5 * float(np.linalg.norm(self.upper - self.lower))

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x: Sequence[float], tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol)
        )

    def contains_mask(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.all(
            (points >= self.lower - tol) & (points <= self.upper + tol), axis=1
        )

    def to_json_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass
class ChebyshevResult:
    """Candidate center with method tag and certification metadata."""

    center: np.ndarray
    radius: Optional[float]
    method: str
    certified: bool
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).ravel()
        if self.method not in METHODS:
            raise ValidationError(f"unknown method tag {self.method!r}")

    def sigma_points(self, weight_tol: float = 1e-6) -> SigmaPointSet:
        return SigmaPointSet.from_vector(self.center, weight_tol=weight_tol)

    def to_json_dict(self) -> dict:
        n = self.center.size // 2
        return {
            "method": self.method,
            "z": self.center[:n].tolist(),
            "w": self.center[n:].tolist(),
            "radius": self.radius,
            "certified": self.certified,
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# closed-form constructions
# ---------------------------------------------------------------------------


def naive_center(spec: MomentSpec) -> SigmaPointSet:
    """Two-point canonical nodes at the midpoint moments.

    mu and V are the order-1 and order-2 information midpoints (exact values
    when known); nodes mu +/- sqrt(V - mu^2) with equal weights reproduce
    those two moments exactly.
    """
    if spec.n_sigma != 2:
        raise ValidationError(
            f"the midpoint formula builds 2 sigma points, spec has {spec.n_sigma}"
        )
    try:
        mu = spec.midpoint_moment(1)
        v = spec.midpoint_moment(2)
    except KeyError as exc:
        raise ValidationError(
            "the midpoint formula needs order-1 and order-2 moment information"
        ) from exc
    if v - mu * mu < 0:
        raise ValidationError(
            "midpoint moments are not a valid (mean, second-moment) pair: "
            f"V - mu^2 = {v - mu * mu}"
        )
    s = math.sqrt(v - mu * mu)
    return SigmaPointSet(z=np.array([mu + s, mu - s]), w=np.array([0.5, 0.5]))


def normal_sigma_points(mu: float, variance: float) -> SigmaPointSet:
    """Three-point rule matching moments 1-4 of a normal distribution."""
    if variance < 0:
        raise ValidationError(f"variance must be >= 0, got {variance}")
    s = math.sqrt(3.0 * variance)
    return SigmaPointSet(
        z=np.array([mu - s, mu, mu + s]),
        w=np.array([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]),
    )


def normal_interval_center(mu: float, v_lo: float, v_hi: float) -> SigmaPointSet:
    """Center of the three-point rules over a variance interval.

    The outer nodes sweep mu +/- sqrt(3*V) as V ranges over [v_lo, v_hi]; the
    midpoint of that sweep is mu +/- (sqrt(3)/2)(sqrt(v_lo) + sqrt(v_hi)).
    """
    if not 0 <= v_lo <= v_hi:
        raise ValidationError(
            f"need 0 <= v_lo <= v_hi, got v_lo={v_lo}, v_hi={v_hi}"
        )
    s = 0.5 * math.sqrt(3.0) * (math.sqrt(v_lo) + math.sqrt(v_hi))
    return SigmaPointSet(
        z=np.array([mu - s, mu, mu + s]),
        w=np.array([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]),
    )


# ---------------------------------------------------------------------------
# a priori bounds used for scaling the relaxations
# ---------------------------------------------------------------------------


def a_priori_box(spec: MomentSpec) -> Box:
    """Coarse enclosing box derived directly from the spec.

    Weights lie in [epsilon, 1 - (n-1)*epsilon].  Any even order k with an
    upper bound u_k forces z_i^k * epsilon <= u_k, so |z_i| <= (u_k/eps)^(1/k);
    the tightest such bound is used.  Existence is the spec's boundedness
    guard.
    """
    n = spec.n_sigma
    z_bound = math.inf
    for k in spec.orders():
        if k % 2:
            continue
        _, hi = spec.order_info(k)
        if np.isfinite(hi):
            z_bound = min(z_bound, (max(hi, 0.0) / spec.epsilon) ** (1.0 / k))
    if not np.isfinite(z_bound):
        raise ValidationError("spec has no even-order upper bound")
    w_lo, w_hi = spec.epsilon, 1.0 - (n - 1) * spec.epsilon
    lower = np.concatenate([np.full(n, -z_bound), np.full(n, w_lo)])
    upper = np.concatenate([np.full(n, z_bound), np.full(n, w_hi)])
    return Box(lower, upper)


# ---------------------------------------------------------------------------
# Method 1: outer bounding box
# ---------------------------------------------------------------------------


def _set_pop(sa_set: SemialgebraicSet, objective: Polynomial, sense: str) -> Pop:
    return Pop(
        objective=objective,
        sense=sense,
        inequalities=sa_set.inequalities,
        equalities=sa_set.equalities,
    )


def outer_box(
    sa_set: SemialgebraicSet,
    order: int = 2,
    opts: RelaxationOptions | None = None,
) -> Tuple[Box, dict]:
    """Coordinate-wise relaxation bounds around the set.

    Solves min and max of each coordinate at the given relaxation order and
    keeps the BOUNDS, not the extracted points: relaxation lower bounds of
    minima and upper bounds of maxima can only enlarge the box, so it encloses
    the set even when the relaxations have a gap.
    """
    opts = opts or RelaxationOptions()
    if opts.scale_box is None and sa_set.spec is not None:
        prior = a_priori_box(sa_set.spec)
        opts = RelaxationOptions(
            solver=opts.solver,
            scale_box=(prior.lower, prior.upper),
            add_box_constraints=opts.add_box_constraints,
            rank_tol=opts.rank_tol,
            feas_tol=opts.feas_tol,
            cert_tol=opts.cert_tol,
        )

    names = sa_set.coordinate_names()
    lower = np.empty(sa_set.n_vars)
    upper = np.empty(sa_set.n_vars)
    per_problem = []
    for i in range(sa_set.n_vars):
        coord = Polynomial.variable(sa_set.n_vars, i)
        for sense in (MIN, MAX):
            result = pop_bound(_set_pop(sa_set, coord, sense), order, opts)
            if result.solver_status is not SdpStatus.OPTIMAL:
                raise SolverFailure(
                    f"outer-box problem {sense} {names[i]} returned "
                    f"{result.solver_status.value}"
                )
            if sense == MIN:
                lower[i] = result.bound
            else:
                upper[i] = result.bound
            per_problem.append(
                {
                    "coordinate": names[i],
                    "sense": sense,
                    "bound": result.bound,
                    "certified": result.certified,
                    "flatness_ranks": list(result.flatness_ranks),
                    "status": result.solver_status.value,
                }
            )
        if lower[i] > upper[i]:
            # Solver noise can cross the bounds on degenerate coordinates.
            if lower[i] - upper[i] > 1e-6 * (1.0 + abs(lower[i])):
                raise SolverFailure(
                    f"outer-box bounds crossed for {names[i]}: "
                    f"[{lower[i]}, {upper[i]}]"
                )
            lower[i] = upper[i] = 0.5 * (lower[i] + upper[i])

    diagnostics = {
        "relaxation_order": order,
        "problems": per_problem,
        "all_certified": all(p["certified"] for p in per_problem),
    }
    return Box(lower, upper), diagnostics


def box_center(box: Box, diagnostics: dict | None = None) -> ChebyshevResult:
    """Midpoint of the box: the Chebyshev center of the box itself."""
    diag = dict(diagnostics) if diagnostics else {}
    diag.setdefault("box", box.to_json_dict())
    return ChebyshevResult(
        center=box.center(),
        radius=box.radius(),
        method=OUTER_BOX,
        certified=bool(diag.get("all_certified", False)),
        diagnostics=diag,
    )


# ---------------------------------------------------------------------------
# Method 2: minimum enclosing ball posed as a POP
# ---------------------------------------------------------------------------


def _embed(p: Polynomial, n_total: int) -> Polynomial:
    """Reinterpret p over the first p.n_vars of n_total variables."""
    return Polynomial(
        n_total, {m + (0,) * (n_total - p.n_vars): c for m, c in p.terms.items()}
    )


def min_ball_center(
    sa_set: SemialgebraicSet,
    box: Box,
    order: int = 2,
    opts: RelaxationOptions | None = None,
) -> ChebyshevResult:
    """Joint minimization of r subject to r >= |x - c|^2, x in set, c in box.

    Variables are (x, c, r) with x the set point, c the candidate center and r
    the squared radius; the box enters as 2*(2*n_sigma) linear inequalities on
    c.  The program as posed admits r = 0 at x = c, so the extracted center is
    validated for set membership and box containment rather than for radius
    soundness; valid redundant bounds (x inside the box, r in [0, diam^2])
    are added for relaxation conditioning.

    Default solver tolerances are looser (gap 1e-6) than elsewhere: the
    coincident-point optimal face blocks interior-point steps well before
    tighter gaps are reachable, and the result is validated by membership,
    not by its bound.
    """
    if opts is None:
        opts = RelaxationOptions(solver=SolverOptions(gap_tol=1e-6))
    n = sa_set.n_vars
    n_pop = 2 * n + 1
    r_var = Polynomial.variable(n_pop, 2 * n)

    ball = r_var
    for i in range(n):
        diff = Polynomial.variable(n_pop, i) - Polynomial.variable(n_pop, n + i)
        ball = ball - diff * diff

    inequalities = [ball]
    inequalities += [_embed(g, n_pop) for g in sa_set.inequalities]
    for i in range(n):
        c_i = Polynomial.variable(n_pop, n + i)
        inequalities.append(c_i - box.lower[i])
        inequalities.append(box.upper[i] - c_i)
    equalities = [_embed(h, n_pop) for h in sa_set.equalities]

    pop = Pop(
        objective=r_var,
        sense=MIN,
        inequalities=tuple(inequalities),
        equalities=tuple(equalities),
    )

    r_hi = max(box.diameter() ** 2, 1.0)
    scale_lower = np.concatenate([box.lower, box.lower, [0.0]])
    scale_upper = np.concatenate([box.upper, box.upper, [r_hi]])
    solve_opts = RelaxationOptions(
        solver=opts.solver,
        scale_box=(scale_lower, scale_upper),
        add_box_constraints=True,
        rank_tol=opts.rank_tol,
        feas_tol=opts.feas_tol,
        cert_tol=opts.cert_tol,
    )
    result = pop_bound(pop, order, solve_opts)
    if result.solver_status is not SdpStatus.OPTIMAL:
        raise SolverFailure(
            f"minimum-enclosing-ball relaxation returned "
            f"{result.solver_status.value}"
        )

    x_part = result.point[:n]
    center = result.point[n : 2 * n]
    radius = float(result.point[2 * n])
    diagnostics = {
        "relaxation_order": order,
        "bound": result.bound,
        "flatness_ranks": list(result.flatness_ranks),
        "x_part": x_part.tolist(),
        "x_membership_violation": sa_set.violation(x_part),
        "center_in_box": box.contains(center, tol=1e-6),
        "radius_is_certified_enclosing": False,
    }
    return ChebyshevResult(
        center=center,
        radius=radius,
        method=MIN_BALL,
        certified=result.certified,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Monte-Carlo oracle: exact minimum enclosing ball of samples
# ---------------------------------------------------------------------------


def _ball_from_support(points: list) -> Tuple[np.ndarray, float]:
    """Smallest ball with all given points on its boundary.

    Solves the circumcenter equations in the affine hull of the support; a
    least-squares solve keeps degenerate (affinely dependent) supports stable.
    """
    q0 = points[0]
    if len(points) == 1:
        return q0.copy(), 0.0
    diffs = np.array([q - q0 for q in points[1:]])
    rhs = 0.5 * np.array([d @ d for d in diffs])
    shift, *_ = np.linalg.lstsq(diffs, rhs, rcond=None)
    center = q0 + shift
    radius = max(float(np.linalg.norm(p - center)) for p in points)
    return center, radius


def _in_ball(p: np.ndarray, center: np.ndarray, radius: float) -> bool:
    return float(np.linalg.norm(p - center)) <= radius * (1 + 1e-12) + 1e-12


def _welzl_boundary(points: list, boundary: list, dim: int):
    center, radius = (
        _ball_from_support(boundary) if boundary else (None, -1.0)
    )
    if len(boundary) == dim + 1:
        return center, radius
    for i, p in enumerate(points):
        if center is None or not _in_ball(p, center, radius):
            center, radius = _welzl_boundary(points[:i], boundary + [p], dim)
    return center, radius


def minimum_enclosing_ball(points: np.ndarray, seed: int = 0):
    """Exact smallest enclosing ball of finitely many points (Welzl)."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValidationError("need a non-empty (N, d) array of points")
    rng = np.random.default_rng(seed)
    order = rng.permutation(points.shape[0])
    pts = [points[i] for i in order]
    dim = points.shape[1]

    center, radius = None, -1.0
    for i, p in enumerate(pts):
        if center is None or not _in_ball(p, center, radius):
            center, radius = _welzl_boundary(pts[:i], [p], dim)
    return center, radius


def mc_oracle_center(samples: np.ndarray) -> ChebyshevResult:
    """Exact minimum enclosing ball of sampled set members.

    Finite-sample stand-in for the worst-case distance minimization; serves
    as the reference the relaxation-based methods are compared against.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValidationError("mc_oracle_center needs a non-empty sample array")
    center, radius = minimum_enclosing_ball(samples)
    return ChebyshevResult(
        center=center,
        radius=float(radius),
        method=MC_ORACLE,
        certified=False,
        diagnostics={"n_samples": int(samples.shape[0])},
    )


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def small_gap_fallback(spec: MomentSpec) -> Optional[SigmaPointSet]:
    """Midpoint sigma points when every interval is (near) degenerate.

    Tight gaps make the relaxations numerically fragile while the midpoint
    formula is essentially exact, so the robust methods defer to it whenever
    it is applicable.
    """
    if spec.max_interval_gap() >= SMALL_GAP:
        return None
    try:
        return naive_center(spec)
    except ValidationError:
        return None


def robust_center(
    spec: MomentSpec,
    method: str = OUTER_BOX,
    order: int = 2,
    opts: RelaxationOptions | None = None,
    oracle_samples: int = 500,
    seed=0,
) -> ChebyshevResult:
    """Compute a robust sigma-point set by the requested method."""
    from .momentset import sample_set  # local import to keep module load light

    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; choose from {METHODS}")

    if method == NAIVE:
        points = naive_center(spec)
        return ChebyshevResult(
            center=points.as_vector(),
            radius=None,
            method=NAIVE,
            certified=False,
            diagnostics={"note": "closed-form midpoint construction"},
        )

    fallback = small_gap_fallback(spec)
    if fallback is not None:
        return ChebyshevResult(
            center=fallback.as_vector(),
            radius=None,
            method=NAIVE,
            certified=False,
            diagnostics={"note": "naive-fallback", "requested_method": method},
        )

    sa_set = build_set(spec)
    box, diag = outer_box(sa_set, order=order, opts=opts)
    if method == OUTER_BOX:
        return box_center(box, diag)
    if method == MIN_BALL:
        result = min_ball_center(sa_set, box, order=order, opts=opts)
        result.diagnostics["outer_box"] = box.to_json_dict()
        return result
    batch = sample_set(sa_set, box, oracle_samples, seed)
    result = mc_oracle_center(batch.points)
    result.diagnostics["acceptance_rate"] = batch.acceptance_rate
    return result
