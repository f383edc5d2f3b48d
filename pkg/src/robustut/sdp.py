"""Dense semidefinite programming in standard primal form.

Solves

    minimize    <C, X>
    subject to  <A_i, X> = b_i,  i = 1..m
                X >= 0  (block diagonal, PSD blocks)

with the dual

    maximize    b'y
    subject to  sum_i y_i A_i + S = C,  S >= 0.

The solver is an infeasible-start primal-dual interior-point method with the
HKM search direction and a Mehrotra predictor-corrector step.  Scalar
inequality constraints are modeled as 1x1 blocks.  Intended for the small
dense problems produced by moment relaxations, not for large or sparse SDPs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import IO, List, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from .errors import ValidationError

BlockMatrix = List[np.ndarray]


class SdpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_TROUBLE = "NumericalTrouble"
    ITER_LIMIT = "IterLimit"


@dataclass
class SolverOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iters: int = 200
    step_fraction: float = 0.98
    diverge_threshold: float = 1e8
    # Re-project search directions onto A(dX) = r_p.  Keeps primal residuals
    # at machine precision, but the correction can block steps on problems
    # with a fat optimal face; those prefer the post-step cleanup alone.
    project_directions: bool = True
    verbose: bool = False

    def __post_init__(self):
        if self.feas_tol <= 0 or self.gap_tol <= 0:
            raise ValidationError("solver tolerances must be positive")


def sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def symmetrize_block(entries: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Return the symmetric part, rejecting grossly asymmetric input."""
    entries = np.asarray(entries, dtype=float)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ValidationError(f"block must be square, got shape {entries.shape}")
    skew = np.abs(entries - entries.T).max(initial=0.0)
    scale = 1.0 + np.abs(entries).max(initial=0.0)
    if skew > tol * scale:
        raise ValidationError(f"block is not symmetric (max asymmetry {skew:.3e})")
    return sym(entries)


class SdpProblem:
    """Standard-form SDP data: block dims, objective blocks, constraints."""

    def __init__(
        self,
        block_dims: Sequence[int],
        objective: Sequence[np.ndarray],
        constraints: Sequence[Tuple[Sequence[np.ndarray], float]],
    ):
        if not block_dims or any(d < 1 for d in block_dims):
            raise ValidationError("block_dims must be positive integers")
        if len(constraints) < 1:
            raise ValidationError("an SdpProblem needs at least one constraint")
        self.block_dims = [int(d) for d in block_dims]
        self.objective = self._conform(objective)
        self.constraint_matrices: List[BlockMatrix] = []
        self.rhs = np.zeros(len(constraints))
        for i, (blocks, b) in enumerate(constraints):
            self.constraint_matrices.append(self._conform(blocks))
            self.rhs[i] = float(b)

    def _conform(self, blocks: Sequence[np.ndarray]) -> BlockMatrix:
        if len(blocks) != len(self.block_dims):
            raise ValidationError(
                f"expected {len(self.block_dims)} blocks, got {len(blocks)}"
            )
        out = []
        for dim, blk in zip(self.block_dims, blocks):
            blk = symmetrize_block(blk)
            if blk.shape != (dim, dim):
                raise ValidationError(
                    f"block shape {blk.shape} does not match declared dim {dim}"
                )
            out.append(blk)
        return out

    @property
    def n_constraints(self) -> int:
        return len(self.constraint_matrices)

    @property
    def total_dim(self) -> int:
        return sum(self.block_dims)

    def dump_sdpa(self, stream: IO[str]) -> None:
        """Write the problem in a sparse SDPA-style text format.

        Layout: number of constraints, number of blocks, block sizes, the
        right-hand side, then one line per nonzero upper-triangle entry as
        "constraint block row col value" (constraint 0 is the objective;
        indices are 1-based).
        """
        stream.write(f"{self.n_constraints}\n")
        stream.write(f"{len(self.block_dims)}\n")
        stream.write(" ".join(str(d) for d in self.block_dims) + "\n")
        stream.write(" ".join(repr(v) for v in self.rhs) + "\n")

        def emit(con_idx: int, blocks: BlockMatrix) -> None:
            for b_idx, blk in enumerate(blocks, start=1):
                rows, cols = np.nonzero(np.triu(blk))
                for r, c in zip(rows, cols):
                    stream.write(
                        f"{con_idx} {b_idx} {r + 1} {c + 1} {blk[r, c]!r}\n"
                    )

        emit(0, self.objective)
        for i, blocks in enumerate(self.constraint_matrices, start=1):
            emit(i, blocks)


@dataclass
class SdpSolution:
    X: BlockMatrix
    y: np.ndarray
    S: BlockMatrix
    primal_obj: float
    dual_obj: float
    status: SdpStatus
    iterations: int
    residuals: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# internal flat-vector helpers
# ---------------------------------------------------------------------------


class _Layout:
    def __init__(self, dims: Sequence[int]):
        self.dims = list(dims)
        self.offsets = np.cumsum([0] + [d * d for d in dims])
        self.total_len = int(self.offsets[-1])

    def split(self, flat: np.ndarray) -> BlockMatrix:
        return [
            flat[self.offsets[i] : self.offsets[i + 1]].reshape(d, d)
            for i, d in enumerate(self.dims)
        ]

    def flatten(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(b, dtype=float).ravel() for b in blocks])

    def identity(self, scale: float = 1.0) -> np.ndarray:
        return self.flatten([scale * np.eye(d) for d in self.dims])


def _chol_blocks(layout: _Layout, flat: np.ndarray):
    factors = []
    for blk in layout.split(flat):
        factors.append(np.linalg.cholesky(blk))
    return factors


def _max_step(layout: _Layout, flat: np.ndarray, dflat: np.ndarray) -> float:
    """Largest alpha with P + alpha*dP >= 0, via eigenvalues of L^-1 dP L^-T."""
    alpha = np.inf
    for blk, dblk in zip(layout.split(flat), layout.split(dflat)):
        L = np.linalg.cholesky(blk)
        w = sla.solve_triangular(L, dblk, lower=True)
        w = sla.solve_triangular(L, w.T, lower=True)
        lam_min = np.linalg.eigvalsh(sym(w)).min()
        if lam_min < -1e-14:
            alpha = min(alpha, -1.0 / lam_min)
    return alpha


def _min_eig(layout: _Layout, flat: np.ndarray) -> float:
    return min(np.linalg.eigvalsh(sym(b)).min() for b in layout.split(flat))


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def sdp_solve(problem: SdpProblem, opts: SolverOptions | None = None) -> SdpSolution:
    """Solve the SDP; returns a non-Optimal status instead of raising."""
    opts = opts or SolverOptions()
    layout = _Layout(problem.block_dims)
    m = problem.n_constraints
    n = problem.total_dim

    c_flat = layout.flatten(problem.objective)
    a_flat = np.stack(
        [layout.flatten(blocks) for blocks in problem.constraint_matrices]
    )  # (m, total_len)
    b = problem.rhs.copy()

    norm_b = np.linalg.norm(b)
    norm_c = np.linalg.norm(c_flat)
    a_row_norms = np.linalg.norm(a_flat, axis=1)

    # Infeasible start on the central ray, scaled to the data.
    xi_p = max(10.0, np.sqrt(n), n * np.max((1.0 + np.abs(b)) / (1.0 + a_row_norms)))
    xi_d = max(10.0, np.sqrt(n), norm_c, a_row_norms.max())
    x = layout.identity(xi_p)
    s = layout.identity(xi_d)
    y = np.zeros(m)

    # Per-block index slices of the flattened tensor, for batched products.
    blocks_of = [
        (layout.offsets[i], layout.offsets[i + 1], d)
        for i, d in enumerate(layout.dims)
    ]
    a_blocked = [
        a_flat[:, lo:hi].reshape(m, d, d) for (lo, hi, d) in blocks_of
    ]

    # Gram factor of the constraint operator, for feasibility cleanup steps.
    try:
        gram_factor = sla.cho_factor(a_flat @ a_flat.T, lower=True)
    except np.linalg.LinAlgError:
        gram_factor = None

    def cleaned_psd(flat: np.ndarray) -> bool:
        try:
            _chol_blocks(layout, flat)
            return True
        except np.linalg.LinAlgError:
            return False

    def a_apply(flat: np.ndarray) -> np.ndarray:
        return a_flat @ flat

    def a_adjoint(vec: np.ndarray) -> np.ndarray:
        return a_flat.T @ vec

    def residuals() -> tuple:
        r_p = b - a_apply(x)
        r_d = c_flat - s - a_adjoint(y)
        pobj = float(c_flat @ x)
        dobj = float(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = np.linalg.norm(r_p) / (1.0 + norm_b)
        dinf = np.linalg.norm(r_d) / (1.0 + norm_c)
        return r_p, r_d, pobj, dobj, gap, pinf, dinf

    status = SdpStatus.ITER_LIMIT
    last_step = ""
    best_iterate = None
    best_merit = np.inf
    it = 0
    for it in range(1, opts.max_iters + 1):
        r_p, r_d, pobj, dobj, gap, pinf, dinf = residuals()
        mu = float(x @ s) / n

        if opts.verbose:
            print(
                f"iter {it:3d}  pobj {pobj: .6e} dobj {dobj: .6e} "
                f"gap {gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e} mu {mu:.2e} "
                f"{last_step}"
            )

        if pinf <= opts.feas_tol and dinf <= opts.feas_tol and gap <= opts.gap_tol:
            status = SdpStatus.OPTIMAL
            break

        # Divergence heuristics: an exploding dual objective with a vanishing
        # scaled dual residual behaves like a primal-infeasibility ray, and
        # symmetrically for the primal objective.
        scale_b = max(1.0, norm_b)
        scale_c = max(1.0, norm_c)
        if dobj > opts.diverge_threshold * scale_c and dinf < 1e-6:
            status = SdpStatus.INFEASIBLE
            break
        if -pobj > opts.diverge_threshold * scale_b and pinf < 1e-6:
            status = SdpStatus.UNBOUNDED
            break

        try:
            s_blocks = layout.split(s)
            x_blocks = layout.split(x)
            s_inv_blocks = []
            for blk in s_blocks:
                L = np.linalg.cholesky(blk)
                s_inv_blocks.append(sla.cho_solve((L, True), np.eye(blk.shape[0])))
        except np.linalg.LinAlgError:
            status = SdpStatus.NUMERICAL_TROUBLE
            break

        s_inv = layout.flatten(s_inv_blocks)

        # Schur complement M_kl = sum_blocks tr(A_k X A_l S^-1).
        t_parts = []
        for (lo, hi, d), a_blk, xb, sib in zip(
            blocks_of, a_blocked, x_blocks, s_inv_blocks
        ):
            t_blk = xb[None, :, :] @ a_blk @ sib[None, :, :]
            t_parts.append(t_blk.transpose(0, 2, 1).reshape(len(b), d * d))
        t_flat = np.concatenate(t_parts, axis=1)
        schur = a_flat @ t_flat.T
        schur = sym(schur)

        chol = None
        for reg in (0.0, 1e-12 * (1.0 + np.abs(np.diag(schur)).max())):
            try:
                chol = sla.cho_factor(schur + reg * np.eye(m), lower=True)
                break
            except np.linalg.LinAlgError:
                continue
        if chol is None or not np.all(np.isfinite(schur)):
            status = SdpStatus.NUMERICAL_TROUBLE
            break

        # The Schur system is severely ill-conditioned at small mu; iterative
        # refinement with extended-precision residuals recovers the digits the
        # float64 residual computation itself would lose.
        schur_ld = schur.astype(np.longdouble)

        def schur_solve(rhs: np.ndarray) -> np.ndarray:
            sol = sla.cho_solve(chol, rhs)
            rhs_ld = rhs.astype(np.longdouble)
            for _ in range(2):
                resid = np.asarray(
                    rhs_ld - schur_ld @ sol.astype(np.longdouble), dtype=float
                )
                sol = sol + sla.cho_solve(chol, resid)
            return sol

        def blockwise_xms(flat_mid: np.ndarray) -> np.ndarray:
            """X @ mid @ S^-1, blockwise, symmetrized after assembly by caller."""
            mids = layout.split(flat_mid)
            return layout.flatten(
                [xb @ mb @ sib for xb, mb, sib in zip(x_blocks, mids, s_inv_blocks)]
            )

        def solve_direction(sigma_mu: float, corr_flat: np.ndarray | None):
            # M dy = b - sigma*mu*A(S^-1) + A(X R_d S^-1) [+ A(corr S^-1)]
            rhs = b - sigma_mu * a_apply(s_inv) + a_apply(blockwise_xms(r_d))
            extra = None
            if corr_flat is not None:
                mids = layout.split(corr_flat)
                extra = layout.flatten(
                    [mb @ sib for mb, sib in zip(mids, s_inv_blocks)]
                )
                rhs = rhs + a_apply(extra)
            dy = schur_solve(rhs)
            ds = r_d - a_adjoint(dy)
            dx = sigma_mu * s_inv - x - blockwise_xms(ds)
            if extra is not None:
                dx = dx - extra
            dx = layout.flatten([sym(blk) for blk in layout.split(dx)])
            # The assembled dx satisfies A(dx) = r_p only up to rounding that
            # grows with the Schur conditioning (~1/mu^2); enforce it exactly
            # so primal feasibility survives the endgame.
            if opts.project_directions and gram_factor is not None:
                err = r_p - a_apply(dx)
                dx = dx + a_flat.T @ sla.cho_solve(gram_factor, err)
            return dx, dy, ds

        # A slightly sharper fraction-to-boundary once feasibility is settled
        # keeps mu moving on degenerate endgames where 0.98 stalls.
        tau = opts.step_fraction
        if pinf <= opts.feas_tol and dinf <= opts.feas_tol and gap <= 1e2 * opts.gap_tol:
            tau = max(tau, 0.995)

        try:
            # Predictor.
            dx_a, dy_a, ds_a = solve_direction(0.0, None)
            alpha_p = min(1.0, tau * _max_step(layout, x, dx_a))
            alpha_d = min(1.0, tau * _max_step(layout, s, ds_a))
            mu_aff = float((x + alpha_p * dx_a) @ (s + alpha_d * ds_a)) / n
            # Cap sigma strictly below 1: a full centering step is a fixed
            # point of the iteration and deadlocks blocked endgames.
            sigma = min(0.99, max(0.0, (mu_aff / mu) ** 3))

            # Corrector: second-order term dXa dSa enters the complementarity rhs.
            corr = layout.flatten(
                [
                    da @ db
                    for da, db in zip(layout.split(dx_a), layout.split(ds_a))
                ]
            )
            dx, dy, ds = solve_direction(sigma * mu, corr)
            alpha_p = min(1.0, tau * _max_step(layout, x, dx))
            alpha_d = min(1.0, tau * _max_step(layout, s, ds))
        except np.linalg.LinAlgError:
            status = SdpStatus.NUMERICAL_TROUBLE
            break

        if not np.all(np.isfinite(dx)) or not np.all(np.isfinite(ds)):
            status = SdpStatus.NUMERICAL_TROUBLE
            break
        if alpha_p < 1e-10 and alpha_d < 1e-10:
            status = SdpStatus.NUMERICAL_TROUBLE
            break

        x = x + alpha_p * dx
        y = y + alpha_d * dy
        s = s + alpha_d * ds
        last_step = f"ap {alpha_p:.2e} ad {alpha_d:.2e} sig {sigma:.2e}"

        # Roundoff re-injects linear-constraint error at small mu; project the
        # iterates back toward the affine constraints as far as PSD allows.
        r_p_new = b - a_apply(x)
        if gram_factor is not None and 0 < np.linalg.norm(r_p_new) < 1e-2 * (
            1.0 + norm_b
        ):
            corr = a_flat.T @ sla.cho_solve(gram_factor, r_p_new)
            for beta in (1.0, 0.5, 0.25):
                if cleaned_psd(x + beta * corr):
                    x = x + beta * corr
                    break
        r_d_new = c_flat - s - a_adjoint(y)
        if 0 < np.linalg.norm(r_d_new) < 1e-2 * (1.0 + norm_c):
            s_fix = c_flat - a_adjoint(y)
            if cleaned_psd(s_fix):
                s = s_fix

        # Remember the most balanced iterate; the endgame can destabilize.
        _, _, _, _, gap_new, pinf_new, dinf_new = residuals()
        merit = max(
            pinf_new / opts.feas_tol, dinf_new / opts.feas_tol, gap_new / opts.gap_tol
        )
        if merit < best_merit:
            best_merit = merit
            best_iterate = (x.copy(), y.copy(), s.copy())
        if merit > 1e3 * best_merit and best_merit <= 10.0:
            # Hopeless drift away from a near-feasible point: stop and keep it.
            status = SdpStatus.NUMERICAL_TROUBLE
            break

    if best_iterate is not None and best_merit <= 1.0:
        x, y, s = best_iterate
        status = SdpStatus.OPTIMAL

    r_p, r_d, pobj, dobj, gap, pinf, dinf = residuals()
    if status is SdpStatus.ITER_LIMIT and (
        pinf <= opts.feas_tol and dinf <= opts.feas_tol and gap <= opts.gap_tol
    ):
        status = SdpStatus.OPTIMAL

    residual_info = {
        "primal_infeas": float(pinf),
        "dual_infeas": float(dinf),
        "rel_gap": float(gap),
        "mu": float(x @ s) / n,
        "min_eig_X": float(_min_eig(layout, x)),
        "min_eig_S": float(_min_eig(layout, s)),
    }
    return SdpSolution(
        X=layout.split(x),
        y=y,
        S=layout.split(s),
        primal_obj=pobj,
        dual_obj=dobj,
        status=status,
        iterations=it,
        residuals=residual_info,
    )


def kkt_residuals(problem: SdpProblem, sol: SdpSolution) -> dict:
    """Scaled KKT residuals of a solution, for verification.

    Returns max |<A_i,X> - b_i|, <X,S>/total_dim, the max elementwise scaled
    dual residual |C - sum y_i A_i - S|, and the minimum eigenvalues of X and S.
    """
    layout = _Layout(problem.block_dims)
    x = layout.flatten(sol.X)
    s = layout.flatten(sol.S)
    c_flat = layout.flatten(problem.objective)
    a_flat = np.stack(
        [layout.flatten(blocks) for blocks in problem.constraint_matrices]
    )
    primal = np.abs(a_flat @ x - problem.rhs).max() / (
        1.0 + np.abs(problem.rhs).max(initial=0.0)
    )
    comp = float(x @ s) / problem.total_dim
    dual_res = c_flat - a_flat.T @ sol.y - s
    dual = np.abs(dual_res).max() / (1.0 + np.abs(c_flat).max(initial=0.0))
    return {
        "primal": float(primal),
        "complementarity": comp,
        "dual": float(dual),
        "min_eig_X": float(_min_eig(layout, x)),
        "min_eig_S": float(_min_eig(layout, s)),
    }
