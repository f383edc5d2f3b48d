"""Moment relaxations of polynomial optimization problems.

A POP ``min/max f(x) s.t. g_i(x) >= 0, h_j(x) = 0`` of order ``t`` is relaxed
to an SDP over the truncated moment sequence ``y`` indexed by ``basis(n, 2t)``:
the moment matrix ``M_t(y)`` and one localizing matrix per inequality must be
PSD, equalities contribute linear constraints ``h·y = 0`` up to degree ``2t``,
and ``y_0 = 1``.

Two exact reformulations keep the resulting SDP strictly feasible and small:

* the affine constraints on ``y`` are eliminated (``y = y_p + N u`` with ``N``
  a null-space basis), so the solver sees only the free coordinates ``u``;
* every moment/localizing block is compressed by the kernel that the equality
  ideal forces on it (the coefficient vectors of ``h·q``); on the affine space
  the block is PSD iff its compression is, and without the compression the
  feasible set has empty interior.

Bounds from an Optimal solve are valid one-sided bounds on the POP optimum up
to solver tolerances; a candidate minimizer is read off the degree-1 moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ValidationError
from .poly import Monomial, Polynomial, basis
from .sdp import SdpProblem, SdpSolution, SdpStatus, SolverOptions, sdp_solve

MIN = "min"
MAX = "max"


@dataclass(frozen=True)
class Pop:
    """Polynomial optimization problem over a basic semialgebraic set."""

    objective: Polynomial
    sense: str
    inequalities: Tuple[Polynomial, ...] = ()
    equalities: Tuple[Polynomial, ...] = ()

    def __post_init__(self):
        if self.sense not in (MIN, MAX):
            raise ValidationError(f"sense must be '{MIN}' or '{MAX}', got {self.sense!r}")
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        n = self.objective.n_vars
        for p in (*self.inequalities, *self.equalities):
            if p.n_vars != n:
                raise ValidationError(
                    f"constraint has {p.n_vars} variables, objective has {n}"
                )

    @property
    def n_vars(self) -> int:
        return self.objective.n_vars


def minimal_order(pop: Pop) -> int:
    degrees = [pop.objective.degree()]
    degrees += [p.degree() for p in pop.inequalities]
    degrees += [p.degree() for p in pop.equalities]
    return max(1, max(math.ceil(d / 2) for d in degrees))


@dataclass
class RelaxationOptions:
    solver: SolverOptions = field(default_factory=SolverOptions)
    # (lower, upper) per-variable bounds; when given, variables are affinely
    # mapped into [-1, 1] before relaxing and redundant box inequalities
    # 1 - t_i^2 >= 0 are appended (they cannot cut the feasible set).
    scale_box: Optional[Tuple[Sequence[float], Sequence[float]]] = None
    add_box_constraints: bool = True
    rank_tol: float = 1e-6
    feas_tol: float = 1e-6
    cert_tol: float = 1e-6
    # Locally restore feasibility of the extracted candidate before judging
    # certification; the solver's moment noise (~1e-6 in scaled units) sits
    # right at the certification tolerance.
    polish: bool = True


@dataclass
class _BlockMeta:
    g: Optional[Polynomial]  # None for the moment block
    level: int
    dim: int
    reduced_dim: int
    value_map: sp.csr_matrix  # (dim*dim, n_y): flattened block entries from y
    reducer: Optional[np.ndarray]  # (dim, reduced_dim) orthonormal, or None


@dataclass
class MomentRelaxation:
    order: int
    pop: Pop
    sdp: Optional[SdpProblem]
    moment_basis: Tuple[Monomial, ...]
    index_map: Dict[Monomial, int]
    y_particular: np.ndarray
    null_basis: np.ndarray  # (n_y, n_free)
    objective_vector: np.ndarray  # coefficients of pop.objective over moment_basis
    blocks: List[_BlockMeta]

    @property
    def n_moments(self) -> int:
        return len(self.moment_basis)

    def moments_from_solution(self, sol: SdpSolution) -> np.ndarray:
        return self.y_particular + self.null_basis @ sol.y

    def block_values(self, y: np.ndarray) -> List[np.ndarray]:
        """Reduced block matrices evaluated at a moment vector."""
        out = []
        for meta in self.blocks:
            full = (meta.value_map @ y).reshape(meta.dim, meta.dim)
            if meta.reducer is not None:
                full = meta.reducer.T @ full @ meta.reducer
            out.append(full)
        return out

    def moment_matrix(self, y: np.ndarray, level: int) -> np.ndarray:
        base = basis(self.pop.n_vars, level)
        m = np.empty((len(base), len(base)))
        for i, a in enumerate(base):
            for j, b in enumerate(base):
                m[i, j] = y[self.index_map[tuple(x + z for x, z in zip(a, b))]]
        return m


@dataclass
class PopResult:
    bound: Optional[float]
    point: Optional[np.ndarray]
    certified: bool
    order_used: int
    flatness_ranks: Tuple[int, int]
    solver_status: SdpStatus
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# relaxation assembly
# ---------------------------------------------------------------------------


def _mono_add(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


def _poly_vector(p: Polynomial, index_map: Dict[Monomial, int], n_y: int) -> np.ndarray:
    vec = np.zeros(n_y)
    for mono, coeff in p.terms.items():
        vec[index_map[mono]] = coeff
    return vec


def _equality_rows(
    pop: Pop, order: int, index_map: Dict[Monomial, int], n_y: int
) -> np.ndarray:
    rows = [np.zeros(n_y)]
    rows[0][index_map[(0,) * pop.n_vars]] = 1.0  # normalization y_0 = 1
    for h in pop.equalities:
        dh = h.degree()
        for delta in basis(pop.n_vars, 2 * order - dh):
            row = np.zeros(n_y)
            for gamma, coeff in h.terms.items():
                row[index_map[_mono_add(delta, gamma)]] += coeff
            rows.append(row)
    return np.vstack(rows)


def _block_value_map(
    g: Optional[Polynomial],
    base: Sequence[Monomial],
    index_map: Dict[Monomial, int],
    n_y: int,
) -> sp.csr_matrix:
    dim = len(base)
    entries_r, entries_c, entries_v = [], [], []
    terms = {(0,) * len(base[0]): 1.0} if g is None else g.terms
    for i, a in enumerate(base):
        for j, b in enumerate(base):
            ab = _mono_add(a, b)
            for gamma, coeff in terms.items():
                entries_r.append(i * dim + j)
                entries_c.append(index_map[_mono_add(ab, gamma)])
                entries_v.append(coeff)
    return sp.coo_matrix(
        (entries_v, (entries_r, entries_c)), shape=(dim * dim, n_y)
    ).tocsr()


def _block_kernel(
    pop: Pop, base: Sequence[Monomial], level: int
) -> Optional[np.ndarray]:
    """Orthonormal complement of the kernel the equality ideal forces."""
    if not pop.equalities:
        return None
    base_index = {m: i for i, m in enumerate(base)}
    columns = []
    for h in pop.equalities:
        dh = h.degree()
        if dh > level:
            continue
        for q in basis(pop.n_vars, level - dh):
            hq = h.mul(Polynomial(pop.n_vars, {q: 1.0}))
            col = np.zeros(len(base))
            for mono, coeff in hq.terms.items():
                col[base_index[mono]] = coeff
            columns.append(col)
    if not columns:
        return None
    kernel = np.column_stack(columns)
    reducer = sla.null_space(kernel.T)
    return reducer


def build_relaxation(pop: Pop, order: int) -> MomentRelaxation:
    """Order-``order`` moment relaxation of ``pop`` as a standard-form SDP.

    The moment LMI is posed as the dual of the returned SdpProblem, so the
    solver's dual vector parameterizes the free moment coordinates.
    """
    t_min = minimal_order(pop)
    if order < t_min:
        raise ValidationError(
            f"relaxation order {order} is too small; minimal admissible order "
            f"for this problem is {t_min}"
        )
    n = pop.n_vars
    mono_basis = basis(n, 2 * order)
    n_y = len(mono_basis)
    index_map = {m: i for i, m in enumerate(mono_basis)}

    rows = _equality_rows(pop, order, index_map, n_y)
    rhs = np.zeros(rows.shape[0])
    rhs[0] = 1.0
    y_p, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    if np.linalg.norm(rows @ y_p - rhs) > 1e-9 * (1.0 + np.linalg.norm(rhs)):
        raise ValidationError(
            "equality constraints are inconsistent at the linear moment level"
        )
    null_basis = sla.null_space(rows)
    n_free = null_basis.shape[1]

    obj_vec = _poly_vector(pop.objective, index_map, n_y)

    blocks: List[_BlockMeta] = []
    for g in (None, *pop.inequalities):
        level = order if g is None else order - math.ceil(g.degree() / 2)
        base = basis(n, level)
        value_map = _block_value_map(g, base, index_map, n_y)
        reducer = _block_kernel(pop, base, level)
        reduced = len(base) if reducer is None else reducer.shape[1]
        if reduced == 0:
            continue
        blocks.append(
            _BlockMeta(
                g=g,
                level=level,
                dim=len(base),
                reduced_dim=reduced,
                value_map=value_map,
                reducer=reducer,
            )
        )

    sdp_problem = None
    if n_free > 0:
        c_min = obj_vec if pop.sense == MIN else -obj_vec
        c_blocks, a_blocks_per_k = [], [[] for _ in range(n_free)]
        for meta in blocks:
            g0 = (meta.value_map @ y_p).reshape(meta.dim, meta.dim)
            gk = (meta.value_map @ null_basis).reshape(
                meta.dim, meta.dim, n_free
            ).transpose(2, 0, 1)
            if meta.reducer is not None:
                q = meta.reducer
                g0 = q.T @ g0 @ q
                gk = np.einsum("ab,kbc,cd->kad", q.T, gk, q)
            c_blocks.append(g0)
            for k in range(n_free):
                a_blocks_per_k[k].append(-gk[k])
        b = -(null_basis.T @ c_min)
        sdp_problem = SdpProblem(
            [meta.reduced_dim for meta in blocks],
            c_blocks,
            [(a_blocks_per_k[k], b[k]) for k in range(n_free)],
        )

    return MomentRelaxation(
        order=order,
        pop=pop,
        sdp=sdp_problem,
        moment_basis=mono_basis,
        index_map=index_map,
        y_particular=y_p,
        null_basis=null_basis,
        objective_vector=obj_vec,
        blocks=blocks,
    )


# ---------------------------------------------------------------------------
# solving, extraction, certification
# ---------------------------------------------------------------------------


def moments_of_point(x: Sequence[float], mono_basis: Sequence[Monomial]) -> np.ndarray:
    """Moment vector of the Dirac measure at ``x`` (used by push-forward tests)."""
    x = np.asarray(x, dtype=float)
    return np.array([np.prod(x**np.array(m)) for m in mono_basis])


def constraint_violation(pop: Pop, x: Sequence[float]) -> float:
    """Max violation of pop's constraints at x (0 when feasible)."""
    worst = 0.0
    for h in pop.equalities:
        worst = max(worst, abs(h.evaluate(x)))
    for g in pop.inequalities:
        worst = max(worst, -min(0.0, g.evaluate(x)))
    return worst


def _ranks(rel: MomentRelaxation, y: np.ndarray, rank_tol: float) -> Tuple[int, int]:
    def rank_of(level: int) -> int:
        m = rel.moment_matrix(y, level)
        svals = np.linalg.svd(m, compute_uv=False)
        if svals.size == 0 or svals[0] <= 0:
            return 0
        return int(np.sum(svals > rank_tol * svals[0]))

    return rank_of(rel.order), rank_of(rel.order - 1)


def extract_point(
    sol: SdpSolution, rel: MomentRelaxation, rank_tol: float = 1e-6
) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Degree-1 moments of the solved relaxation, plus flatness ranks."""
    y = rel.moments_from_solution(sol)
    return _extract_from_moments(rel, y, rank_tol)


def _extract_from_moments(
    rel: MomentRelaxation, y: np.ndarray, rank_tol: float
) -> Tuple[np.ndarray, Tuple[int, int]]:
    n = rel.pop.n_vars
    point = np.array(
        [
            y[rel.index_map[tuple(1 if j == i else 0 for j in range(n))]]
            for i in range(n)
        ]
    )
    return point, _ranks(rel, y, rank_tol)


def _scaled_pop(pop: Pop, lower: np.ndarray, upper: np.ndarray, add_box: bool) -> Pop:
    centers = 0.5 * (lower + upper)
    scales = 0.5 * (upper - lower)
    ineqs = [g.affine_substitute(centers, scales) for g in pop.inequalities]
    if add_box:
        for i in range(pop.n_vars):
            t2 = Polynomial.variable(pop.n_vars, i).power(2)
            ineqs.append(Polynomial.constant(pop.n_vars, 1.0) - t2)
    eqs = [h.affine_substitute(centers, scales) for h in pop.equalities]
    return Pop(
        objective=pop.objective.affine_substitute(centers, scales),
        sense=pop.sense,
        inequalities=tuple(ineqs),
        equalities=tuple(eqs),
    )


def pop_bound(pop: Pop, order: int, opts: RelaxationOptions | None = None) -> PopResult:
    """Solve the order-``order`` relaxation of ``pop``.

    When the solver status is Optimal the returned bound is a valid lower
    bound for Min (upper for Max) up to solver tolerances, whether or not the
    result is certified.  A non-Optimal status propagates with ``bound=None``.
    """
    opts = opts or RelaxationOptions()
    work = pop
    transform = None
    if opts.scale_box is not None:
        lower = np.asarray(opts.scale_box[0], dtype=float)
        upper = np.asarray(opts.scale_box[1], dtype=float)
        if lower.shape != (pop.n_vars,) or upper.shape != (pop.n_vars,):
            raise ValidationError("scale_box must provide bounds for every variable")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValidationError("scale_box bounds must be finite")
        if np.any(lower > upper):
            raise ValidationError("scale_box lower bounds exceed upper bounds")
        work = _scaled_pop(pop, lower, upper, opts.add_box_constraints)
        transform = (0.5 * (lower + upper), 0.5 * (upper - lower))

    rel = build_relaxation(work, order)

    if rel.sdp is None:
        # Equalities pin the whole moment vector; no SDP left to solve.
        y = rel.y_particular
        min_eig = min(
            (np.linalg.eigvalsh(b).min() for b in rel.block_values(y)),
            default=0.0,
        )
        if min_eig < -1e-8:
            return PopResult(
                None, None, False, order, (0, 0), SdpStatus.INFEASIBLE,
                {"note": "pinned moment vector violates PSD blocks"},
            )
        status = SdpStatus.OPTIMAL
        diagnostics = {"note": "moment vector fully determined by equalities"}
    else:
        sol = sdp_solve(rel.sdp, opts.solver)
        status = sol.status
        diagnostics = {"sdp_residuals": sol.residuals, "sdp_iterations": sol.iterations}
        if status is not SdpStatus.OPTIMAL:
            return PopResult(None, None, False, order, (0, 0), status, diagnostics)
        y = rel.moments_from_solution(sol)

    point_work, ranks = _extract_from_moments(rel, y, opts.rank_tol)
    point = point_work if transform is None else transform[0] + transform[1] * point_work
    value = float(rel.objective_vector @ y)

    result = PopResult(
        bound=value,
        point=point,
        certified=False,
        order_used=order,
        flatness_ranks=ranks,
        solver_status=status,
        diagnostics=diagnostics,
    )
    result.certified = certify(result, pop, opts.feas_tol, opts.cert_tol)

    if not result.certified and opts.polish and point is not None:
        polished = _polish_point(pop, point)
        if polished is not None:
            trial = PopResult(
                bound=value,
                point=polished,
                certified=False,
                order_used=order,
                flatness_ranks=ranks,
                solver_status=status,
                diagnostics=diagnostics,
            )
            if certify(trial, pop, opts.feas_tol, opts.cert_tol):
                trial.certified = True
                trial.diagnostics = dict(diagnostics, polished=True)
                return trial
    return result


def _polish_point(pop: Pop, point: np.ndarray) -> Optional[np.ndarray]:
    """Nearest feasible point to the extracted candidate, by local solve.

    The bound is untouched; a genuinely feasible nearby point attaining it is
    a valid optimality certificate no matter how it was found.  Returns None
    when the local solve fails or wanders away from the candidate.
    """
    from scipy.optimize import minimize

    constraints = [
        {"type": "eq", "fun": h.evaluate} for h in pop.equalities
    ] + [
        {"type": "ineq", "fun": g.evaluate} for g in pop.inequalities
    ]
    try:
        res = minimize(
            lambda v: float(np.sum((v - point) ** 2)),
            point,
            jac=lambda v: 2.0 * (v - point),
            constraints=constraints,
            method="SLSQP",
            options={"maxiter": 100, "ftol": 1e-16},
        )
    except (ValueError, FloatingPointError):
        return None
    if not res.success:
        return None
    if np.linalg.norm(res.x - point) > 1e-3 * (1.0 + np.linalg.norm(point)):
        return None
    return np.asarray(res.x, dtype=float)


def certify(
    result: PopResult,
    pop: Pop,
    feas_tol: float = 1e-6,
    cert_tol: float = 1e-6,
) -> bool:
    """Whether the extracted point proves the bound globally optimal.

    True iff the solve was Optimal, the candidate point is feasible within
    ``feas_tol``, and its objective value matches the bound to ``cert_tol``
    relative.  A feasible point attaining a valid one-sided bound is optimal;
    flatness ranks are reported in PopResult for diagnostics only.
    """
    if result.solver_status is not SdpStatus.OPTIMAL:
        return False
    if result.point is None or result.bound is None:
        return False
    if constraint_violation(pop, result.point) > feas_tol:
        return False
    value = pop.objective.evaluate(result.point)
    return abs(value - result.bound) <= cert_tol * (1.0 + abs(result.bound))
