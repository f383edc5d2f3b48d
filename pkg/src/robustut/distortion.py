"""Discrete-transform evaluation and distortion of the induced embedding.

The transform maps a node/weight vector x = (z, w) to sum_i w_i f(z_i).  For
pairs of feasible vectors, the per-pair distortion D_i = |s/r - 1| (with
r = |x - y| and s = |UT(x) - UT(y)|) is the smallest D satisfying
(1-D) r <= s <= (1+D) r; its maximum over sampled pairs estimates how far the
transform is from preserving distances, and hence how well the Chebyshev
center commutes with it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .momentset import SemialgebraicSet, SigmaPointSet, sample_set

COINCIDENT_TOL = 1e-12


@dataclass(frozen=True)
class TestFunction:
    """Named scalar function with vectorized evaluation."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, z):
        return self.fn(np.asarray(z, dtype=float))


def _poly_fn(coeffs: Sequence[float]) -> TestFunction:
    coeffs = [float(c) for c in coeffs]
    if not coeffs or not all(np.isfinite(coeffs)):
        raise ValidationError("polynomial test function needs finite coefficients")
    name = "poly:" + ",".join(repr(c) for c in coeffs)
    return TestFunction(name, lambda z: np.polynomial.polynomial.polyval(z, coeffs))


_BUILTINS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "identity": lambda z: z,
}


def make_test_function(spec: str | Sequence[float] | TestFunction) -> TestFunction:
    """Resolve 'sin' | 'cos' | 'exp' | 'identity' | 'poly:c0,c1,...' | coeffs."""
    if isinstance(spec, TestFunction):
        return spec
    if isinstance(spec, str):
        key = spec.strip().lower()
        if key in _BUILTINS:
            return TestFunction(key, _BUILTINS[key])
        if key.startswith("poly:"):
            try:
                coeffs = [float(c) for c in key[len("poly:"):].split(",")]
            except ValueError as exc:
                raise ValidationError(f"cannot parse coefficients in {spec!r}") from exc
            return _poly_fn(coeffs)
        raise ValidationError(
            f"unknown test function {spec!r}; expected one of "
            f"{sorted(_BUILTINS)} or 'poly:c0,c1,...'"
        )
    return _poly_fn(list(spec))


def ut_eval(points: SigmaPointSet, f: TestFunction) -> float:
    """Weighted sum of f over the nodes."""
    return float(np.dot(points.w, f(points.z)))


def ut_eval_vectors(vectors: np.ndarray, f: TestFunction) -> np.ndarray:
    """ut_eval over rows of (z_1..z_n, w_1..w_n) vectors."""
    vectors = np.asarray(vectors, dtype=float)
    n = vectors.shape[1] // 2
    return np.sum(vectors[:, n:] * f(vectors[:, :n]), axis=1)


def pair_distortion(
    x: Sequence[float], y: Sequence[float], f: TestFunction, n_sigma: int
) -> Optional[float]:
    """D_i = |s/r - 1| for one pair; None when the pair is coincident."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (2 * n_sigma,) or y.shape != (2 * n_sigma,):
        raise ValidationError(
            f"pair vectors must have length {2 * n_sigma}, got {x.shape}, {y.shape}"
        )
    r = float(np.linalg.norm(x - y))
    if r < COINCIDENT_TOL:
        return None
    stacked = np.vstack([x, y])
    ut = ut_eval_vectors(stacked, f)
    s = abs(float(ut[0] - ut[1]))
    return abs(s / r - 1.0)


@dataclass
class DistortionEstimate:
    d_max: float
    per_pair: List[float]
    n_pairs: int
    skipped: int
    acceptance_rate: float = float("nan")


def estimate_distortion(
    sa_set: SemialgebraicSet,
    box,
    f: TestFunction,
    n_pairs: int,
    seed,
) -> DistortionEstimate:
    """Max pair distortion over uniformly sampled member pairs.

    Draws 2*n_pairs members, pairs consecutive samples, and maximizes the
    per-pair distortion over non-coincident pairs.  Deterministic for a
    fixed seed.
    """
    if n_pairs < 1:
        raise ValidationError(f"n_pairs must be >= 1, got {n_pairs}")
    batch = sample_set(sa_set, box, 2 * n_pairs, seed)
    xs = batch.points[0::2]
    ys = batch.points[1::2]
    r = np.linalg.norm(xs - ys, axis=1)
    s = np.abs(ut_eval_vectors(xs, f) - ut_eval_vectors(ys, f))
    keep = r >= COINCIDENT_TOL
    per_pair = np.abs(s[keep] / r[keep] - 1.0)
    return DistortionEstimate(
        d_max=float(per_pair.max()) if per_pair.size else 0.0,
        per_pair=per_pair.tolist(),
        n_pairs=n_pairs,
        skipped=int(np.sum(~keep)),
        acceptance_rate=batch.acceptance_rate,
    )
