"""Convex-geometry and linear-algebra primitives.

Point clouds are plain (n, d) float arrays with rows as points.  All
functions here are pure and deterministic: ties in any argmax/argmin are
broken by the smallest index, and subset searches return the
lexicographically smallest maximizing index tuple.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .exceptions import (
    AllDegenerate,
    BudgetExceeded,
    DegenerateCloud,
    HullDimensionExceeded,
    RankDeficientWarning,
)

HULL_DIM_MAX = 8
EXHAUSTIVE_BUDGET = 2_000_000
SWAP_GAIN_TOL = 1e-12

# Gram determinants at or below this are treated as degenerate simplices.
_DET_FLOOR = 1e-300
_LOG_DET_FLOOR = math.log(_DET_FLOOR)

_BATCH = 1 << 16


@dataclass(frozen=True)
class ProjectionBasis:
    """Affine map from row-stochastic J-space into intrinsic coordinates.

    ``transform`` sends rows y (with the last coordinate dropped and the
    stored mean subtracted) to y_c @ basis; the basis columns are
    orthonormal.
    """

    mean_offset: np.ndarray  # (J-1,)
    basis: np.ndarray  # (J-1, rank)
    rank: int

    def __post_init__(self):
        gram = self.basis.T @ self.basis
        if not np.allclose(gram, np.eye(self.rank), atol=1e-10):
            raise ValueError("basis columns are not orthonormal")
        if not 1 <= self.rank <= self.basis.shape[0]:
            raise ValueError("rank outside [1, J-1]")

    def transform(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        return (rows[:, :-1] - self.mean_offset) @ self.basis


@dataclass(frozen=True)
class VertexSubset:
    """K distinct candidate indices plus the simplex log-volume they span."""

    indices: tuple[int, ...]
    log_volume: float

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("subset indices must be distinct")
        if math.isnan(self.log_volume):
            raise ValueError("log_volume must be finite or -inf")


def intrinsic_projection(
    ystar: np.ndarray, rank_cap: int
) -> tuple[ProjectionBasis, np.ndarray]:
    """Project row-stochastic points into the affine span of their cloud.

    Drops the last coordinate, centers the rest, and keeps the leading
    right-singular directions.  The retained rank is the number of singular
    values above n * eps * sigma_1, further capped at ``rank_cap``.

    Returns the basis and the projected cloud Z (n, rank).

    Raises DegenerateCloud when the centered cloud has rank zero (all rows
    identical).
    """
    ystar = np.asarray(ystar, dtype=float)
    n = ystar.shape[0]
    if n < 2:
        raise DegenerateCloud("need at least two points to project")
    if rank_cap < 1:
        raise ValueError("rank_cap must be >= 1")
    row_sums = ystar.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > 1e-8:
        raise ValueError("rows must sum to 1 within 1e-8")

    reduced = ystar[:, :-1]
    mean_offset = reduced.mean(axis=0)
    centered = reduced - mean_offset
    _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    tol = n * np.finfo(float).eps * (sing[0] if sing.size else 0.0)
    detected = int(np.count_nonzero(sing > tol))
    if detected == 0:
        raise DegenerateCloud("all rows identical: centered cloud has rank 0")
    rank = min(rank_cap, detected)
    basis = vt[:rank].T
    return ProjectionBasis(mean_offset, basis, rank), centered @ basis


def _affine_rank(z: np.ndarray) -> int:
    centered = z - z.mean(axis=0)
    sing = np.linalg.svd(centered, compute_uv=False)
    if sing.size == 0 or sing[0] == 0.0:
        return 0
    return int(np.count_nonzero(sing > len(z) * np.finfo(float).eps * sing[0]))


def _monotone_chain(z: np.ndarray) -> np.ndarray:
    """Indices of the strict 2-D hull vertices (collinear points dropped)."""
    order = np.lexsort((z[:, 1], z[:, 0]))

    def cross(o, a, b):
        return (z[a, 0] - z[o, 0]) * (z[b, 1] - z[o, 1]) - (z[a, 1] - z[o, 1]) * (
            z[b, 0] - z[o, 0]
        )

    def half(indices):
        chain: list[int] = []
        for i in indices:
            while len(chain) >= 2 and cross(chain[-2], chain[-1], i) <= 0.0:
                chain.pop()
            chain.append(int(i))
        return chain

    lower = half(order)
    upper = half(order[::-1])
    return np.unique(lower[:-1] + upper[:-1])


def hull_vertices(z: np.ndarray, hull_dim_max: int = HULL_DIM_MAX) -> np.ndarray:
    """Sorted indices of the extreme points of the cloud's convex hull.

    1-D clouds reduce to argmin/argmax; 2-D uses a monotone chain; 3-D up
    to ``hull_dim_max`` uses qhull with one jittered retry on degenerate
    facet errors.  Points lying inside facets or edges are not vertices.

    Raises DegenerateCloud when the points span fewer than d dimensions
    (reduce the projection rank instead), HullDimensionExceeded above
    ``hull_dim_max`` (callers fall back to using every point).
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ValueError("expected an (n, d) array")
    n, d = z.shape
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if d > hull_dim_max:
        raise HullDimensionExceeded(f"hull in {d} dims exceeds cap {hull_dim_max}")
    if n < d + 1:
        raise DegenerateCloud(f"{n} points cannot span a {d}-dimensional hull")
    if _affine_rank(z) < d:
        raise DegenerateCloud(f"points are affinely dependent below dimension {d}")

    if d == 1:
        return np.unique([int(np.argmin(z[:, 0])), int(np.argmax(z[:, 0]))])
    if d == 2:
        return _monotone_chain(z)
    try:
        return np.unique(ConvexHull(z).vertices)
    except QhullError:
        scale = float(np.abs(z).max())
        jitter = np.random.default_rng(0).standard_normal(z.shape)
        try:
            return np.unique(ConvexHull(z + 1e-12 * scale * jitter).vertices)
        except QhullError as exc:
            raise DegenerateCloud(f"hull construction failed: {exc}") from exc


def _batch_log_volumes(points: np.ndarray, combos: np.ndarray) -> np.ndarray:
    """Log simplex volumes for each row of index combinations."""
    k = combos.shape[1]
    edges = points[combos[:, 1:]] - points[combos[:, :1]]
    gram = edges @ np.swapaxes(edges, 1, 2)
    sign, logdet = np.linalg.slogdet(gram)
    out = np.where(
        (sign > 0) & (logdet > _LOG_DET_FLOOR),
        0.5 * logdet - math.lgamma(k),
        -np.inf,
    )
    return out


def simplex_log_volume(vertices: np.ndarray) -> float:
    """Log of the (K-1)-volume of the simplex spanned by K points.

    vol = sqrt(det(M M^T)) / (K-1)! with M the edge matrix v_k - v_1.
    Returns -inf for degenerate simplices instead of raising.
    """
    v = np.asarray(vertices, dtype=float)
    k, d = v.shape
    if k < 2:
        raise ValueError("need at least two vertices")
    if d < k - 1:
        raise ValueError(f"{k} points need ambient dimension >= {k - 1}")
    edges = v[1:] - v[0]
    sign, logdet = np.linalg.slogdet(edges @ edges.T)
    if sign <= 0 or logdet <= _LOG_DET_FLOOR:
        return -math.inf
    return float(0.5 * logdet - math.lgamma(k))


def _combo_chunks(m: int, k: int, chunk: int | None = None):
    if chunk is None:
        chunk = _BATCH
    it = itertools.combinations(range(m), k)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.asarray(block, dtype=np.intp)


def max_volume_exhaustive(
    candidates: np.ndarray, k: int, budget: int = EXHAUSTIVE_BUDGET
) -> VertexSubset:
    """Globally best K-subset by simplex volume, enumerated exhaustively.

    Enumeration is lexicographic and a new subset is accepted only when
    strictly better, so ties resolve to the smallest index tuple; the
    result is independent of internal chunking.
    """
    pts = np.asarray(candidates, dtype=float)
    m = pts.shape[0]
    if m < k:
        raise ValueError(f"need at least {k} candidates, got {m}")
    total = math.comb(m, k)
    if total > budget:
        raise BudgetExceeded(f"{total} subsets exceed budget {budget}")

    best_lv = -math.inf
    best: tuple[int, ...] | None = None
    for combos in _combo_chunks(m, k):
        lv = _batch_log_volumes(pts, combos)
        i = int(np.argmax(lv))
        if lv[i] > best_lv:
            best_lv = float(lv[i])
            best = tuple(int(c) for c in combos[i])
    if best is None or best_lv == -math.inf:
        raise AllDegenerate("every candidate subset spans a degenerate simplex")
    return VertexSubset(best, best_lv)


def _atgp_indices(pts: np.ndarray, k: int) -> list[int]:
    """Successive maximum-residual picks under orthogonal-complement projection."""
    chosen = [int(np.argmax((pts**2).sum(axis=1)))]
    for _ in range(k - 1):
        q = np.linalg.qr(pts[chosen].T)[0]
        resid = pts - (pts @ q) @ q.T
        norms = (resid**2).sum(axis=1)
        norms[chosen] = -1.0
        chosen.append(int(np.argmax(norms)))
    return chosen


def max_volume_greedy(
    candidates: np.ndarray, k: int, max_sweeps: int = 10
) -> VertexSubset:
    """Approximate max-volume K-subset: ATGP start, then swap sweeps.

    Each sweep tries replacing one vertex at a time by every candidate and
    accepts a swap only when the log-volume strictly improves by more than
    SWAP_GAIN_TOL; terminates after a sweep with no accepted swap.
    """
    pts = np.asarray(candidates, dtype=float)
    m = pts.shape[0]
    if m < k:
        raise ValueError(f"need at least {k} candidates, got {m}")

    current = _atgp_indices(pts, k)
    if k == 1:
        return VertexSubset((current[0],), 0.0)
    current_lv = float(_batch_log_volumes(pts, np.asarray([current]))[0])
    all_idx = np.arange(m, dtype=np.intp)
    for _ in range(max_sweeps):
        accepted = False
        for slot in range(k):
            combos = np.tile(np.asarray(current, dtype=np.intp), (m, 1))
            combos[:, slot] = all_idx
            lv = _batch_log_volumes(pts, combos)
            j = int(np.argmax(lv))
            if lv[j] > current_lv + SWAP_GAIN_TOL:
                current[slot] = j
                current_lv = float(lv[j])
                accepted = True
        if not accepted:
            break
    if current_lv == -math.inf:
        raise AllDegenerate("no K candidates are affinely independent")
    return VertexSubset(tuple(current), current_lv)


def affine_right_inverse(hstar_hat: np.ndarray) -> np.ndarray:
    """Right inverse of the row-stochastic profile matrix augmented with ones.

    R = H_aug^T (H_aug H_aug^T)^+ with H_aug = [H* | 1_K]; when H_aug has
    full row rank, H_aug @ R = I_K.  Emits RankDeficientWarning (and still
    returns the pseudoinverse form) when the smallest singular value of
    H_aug falls below 1e-10 times the largest.
    """
    h = np.asarray(hstar_hat, dtype=float)
    if h.ndim != 2:
        raise ValueError("expected a (K, J) matrix")
    if h.min() < 0:
        raise ValueError("profile matrix must be non-negative")
    if np.max(np.abs(h.sum(axis=1) - 1.0)) > 1e-8:
        raise ValueError("profile rows must sum to 1 within 1e-8")
    haug = np.hstack([h, np.ones((h.shape[0], 1))])
    sing = np.linalg.svd(haug, compute_uv=False)
    if sing[-1] < 1e-10 * sing[0]:
        warnings.warn(
            "augmented profile matrix is numerically rank deficient",
            RankDeficientWarning,
            stacklevel=2,
        )
    return haug.T @ np.linalg.pinv(haug @ haug.T)
