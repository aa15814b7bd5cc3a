"""End-to-end estimation of the source attribution percentage matrix.

The pipeline: row-normalize the concentration matrix, project the
normalized rows into their intrinsic span, take the convex-hull vertices
as candidates, pick the max-volume K-subset as the profile estimate,
recover the scaled emission means through the affine right inverse, and
form the column-stochastic attribution matrix.

``apportion`` is a pure, deterministic function of (Y, config): it uses no
randomness and breaks all ties by smallest index.
"""

from __future__ import annotations

import math
import warnings
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import geometry
from .exceptions import (
    ApportionError,
    DroppedRowsWarning,
    EmptyData,
    HullDimensionExceeded,
    HullFallbackWarning,
    NegativeMeanWarning,
    TooFewCandidates,
    ZeroDenominator,
    ZeroRow,
)
from .geometry import ProjectionBasis, VertexSubset

SEARCH_MODES = ("auto", "greedy", "exhaustive")
MEAN_METHODS = ("direct", "projected")
ZERO_ROW_POLICIES = ("drop", "error")


def _default_names(prefix: str, count: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i + 1}" for i in range(count))


@dataclass(frozen=True)
class ConcentrationMatrix:
    """Observed n x J non-negative concentration data."""

    values: np.ndarray
    pollutant_names: tuple[str, ...] = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2:
            raise ValueError("expected an (n, J) matrix")
        if not np.isfinite(vals).all():
            raise ValueError("concentrations must be finite")
        if vals.min() < 0:
            raise ValueError("concentrations must be non-negative")
        if (vals.sum(axis=0) == 0).any():
            raise ValueError("every pollutant column needs a nonzero entry")
        if not self.pollutant_names:
            object.__setattr__(
                self, "pollutant_names", _default_names("P", vals.shape[1])
            )
        elif len(self.pollutant_names) != vals.shape[1]:
            raise ValueError("one name per pollutant column required")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def n_pollutants(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RowNormalizedData:
    """Row-stochastic view of the kept (positive-sum) rows."""

    ystar: np.ndarray  # (n', J)
    row_sums: np.ndarray  # (n',)
    kept_rows: np.ndarray  # (n',) indices into the original rows


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs for the apportionment pipeline."""

    K: int
    search: str = "auto"
    prune: bool = False
    prune_clusters: int = 50
    epsilon_clip: float = 1e-10
    rank_cap: int | None = None
    exhaustive_budget: int = geometry.EXHAUSTIVE_BUDGET
    max_sweeps: int = 10
    mean_method: str = "direct"
    zero_row_policy: str = "drop"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.search not in SEARCH_MODES:
            raise ValueError(f"search must be one of {SEARCH_MODES}")
        if not 0.0 < self.epsilon_clip <= 1e-3:
            raise ValueError("epsilon_clip must lie in (0, 1e-3]")
        if self.rank_cap is not None and self.rank_cap < 1:
            raise ValueError("rank_cap must be >= 1")
        if self.prune_clusters < 1:
            raise ValueError("prune_clusters must be >= 1")
        if self.mean_method not in MEAN_METHODS:
            raise ValueError(f"mean_method must be one of {MEAN_METHODS}")
        if self.zero_row_policy not in ZERO_ROW_POLICIES:
            raise ValueError(f"zero_row_policy must be one of {ZERO_ROW_POLICIES}")

    def effective_rank_cap(self) -> int:
        # Noiseless K-source data has centered rank exactly K - 1.
        return self.rank_cap if self.rank_cap is not None else max(self.K - 1, 1)


@dataclass(frozen=True)
class AttributionMatrix:
    """Column-stochastic K x J attribution fractions."""

    values: np.ndarray
    source_labels: tuple[str, ...] = ()
    pollutant_names: tuple[str, ...] = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2:
            raise ValueError("expected a (K, J) matrix")
        if vals.min() < -1e-12 or vals.max() > 1.0 + 1e-12:
            raise ValueError("attribution entries must lie in [0, 1]")
        if np.max(np.abs(vals.sum(axis=0) - 1.0)) > 1e-10:
            raise ValueError("attribution columns must sum to 1 within 1e-10")
        if not self.source_labels:
            object.__setattr__(
                self, "source_labels", _default_names("S", vals.shape[0])
            )
        elif len(self.source_labels) != vals.shape[0]:
            raise ValueError("one label per source row required")
        if not self.pollutant_names:
            object.__setattr__(
                self, "pollutant_names", _default_names("P", vals.shape[1])
            )
        elif len(self.pollutant_names) != vals.shape[1]:
            raise ValueError("one name per pollutant column required")


@dataclass(frozen=True)
class CandidateSet:
    """Hull-vertex candidates in both ambient and projected coordinates."""

    ystar: np.ndarray  # (m, J) candidate rows of Y*
    indices: np.ndarray  # (m,) row indices into the normalized data
    z: np.ndarray  # (m, r_B) projected coordinates
    basis: ProjectionBasis
    n_hull_vertices: int
    pruned: bool


@dataclass(frozen=True)
class Diagnostics:
    r_b: int
    n_hull_vertices: int
    n_candidates_after_prune: int
    log_volume: float
    search_used: str
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class ApportionmentEstimate:
    """Profile estimate, scaled means, attribution matrix, diagnostics."""

    h_star_hat: np.ndarray  # (K, J), row-stochastic
    m_tilde: np.ndarray  # (K,), concentration-sum units
    phi_hat: AttributionMatrix
    diagnostics: Diagnostics
    candidates: CandidateSet | None = None


@contextmanager
def _stage(name: str):
    try:
        yield
    except ApportionError as exc:
        if exc.stage is None:
            exc.stage = name
        raise


def row_normalize(
    y: ConcentrationMatrix, zero_row_policy: str = "drop"
) -> RowNormalizedData:
    """Split Y into row sums r and the row-stochastic matrix Y*.

    Rows with zero sum are dropped (with a warning) or raise ZeroRow
    depending on the policy; an all-zero matrix raises EmptyData.
    """
    if zero_row_policy not in ZERO_ROW_POLICIES:
        raise ValueError(f"zero_row_policy must be one of {ZERO_ROW_POLICIES}")
    vals = y.values
    sums = vals.sum(axis=1)
    zero = sums <= 0.0
    if zero.any():
        if zero_row_policy == "error":
            raise ZeroRow(f"row {int(np.flatnonzero(zero)[0])} sums to zero")
        warnings.warn(
            f"dropped {int(zero.sum())} zero-concentration rows",
            DroppedRowsWarning,
            stacklevel=2,
        )
    kept = np.flatnonzero(~zero)
    if kept.size == 0:
        raise EmptyData("all rows sum to zero")
    return RowNormalizedData(
        ystar=vals[kept] / sums[kept, None],
        row_sums=sums[kept],
        kept_rows=kept,
    )


def _prune_indices(z: np.ndarray, n_clusters: int) -> np.ndarray:
    """Cluster projected candidates and keep one representative each.

    Deterministic: farthest-point seeding, Lloyd iterations capped at 20,
    and the member farthest from the global candidate centroid kept per
    cluster.  Returns sorted positions into the candidate arrays.
    """
    centroid = z.mean(axis=0)
    spread = ((z - centroid) ** 2).sum(axis=1)

    seeds = [int(np.argmax(spread))]
    min_d = ((z - z[seeds[0]]) ** 2).sum(axis=1)
    while len(seeds) < n_clusters:
        nxt = int(np.argmax(min_d))
        seeds.append(nxt)
        min_d = np.minimum(min_d, ((z - z[nxt]) ** 2).sum(axis=1))

    centers = z[seeds].copy()
    assign = np.zeros(len(z), dtype=np.intp)
    for _ in range(20):
        d2 = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for c in range(n_clusters):
            members = assign == c
            if members.any():
                new_centers[c] = z[members].mean(axis=0)
        if np.array_equal(new_centers, centers):
            break
        centers = new_centers

    keep = []
    for c in range(n_clusters):
        members = np.flatnonzero(assign == c)
        if members.size:
            keep.append(int(members[np.argmax(spread[members])]))
    return np.unique(keep)


def extract_candidates(data: RowNormalizedData, cfg: EstimatorConfig) -> CandidateSet:
    """Hull-vertex candidate rows of Y*, optionally pruned by clustering."""
    n = data.ystar.shape[0]
    if n < cfg.K + 1:
        raise TooFewCandidates(f"need at least K+1={cfg.K + 1} rows, got {n}")
    basis, z = geometry.intrinsic_projection(data.ystar, cfg.effective_rank_cap())
    try:
        idx = geometry.hull_vertices(z)
    except HullDimensionExceeded:
        warnings.warn(
            f"hull dimension {basis.rank} above cap; keeping all rows as candidates",
            HullFallbackWarning,
            stacklevel=2,
        )
        idx = np.arange(n, dtype=np.intp)
    n_hull = int(idx.size)

    pruned = False
    if cfg.prune and idx.size > cfg.prune_clusters:
        idx = idx[_prune_indices(z[idx], cfg.prune_clusters)]
        pruned = True
    if idx.size < cfg.K:
        raise TooFewCandidates(
            f"{idx.size} candidates for K={cfg.K}; hull has too few vertices"
        )
    return CandidateSet(
        ystar=data.ystar[idx],
        indices=idx,
        z=z[idx],
        basis=basis,
        n_hull_vertices=n_hull,
        pruned=pruned,
    )


def _select_max_volume(
    z: np.ndarray, cfg: EstimatorConfig
) -> tuple[VertexSubset, str]:
    if cfg.search == "exhaustive":
        return (
            geometry.max_volume_exhaustive(z, cfg.K, cfg.exhaustive_budget),
            "exhaustive",
        )
    if cfg.search == "greedy":
        return geometry.max_volume_greedy(z, cfg.K, cfg.max_sweeps), "greedy"
    if math.comb(len(z), cfg.K) <= cfg.exhaustive_budget:
        return (
            geometry.max_volume_exhaustive(z, cfg.K, cfg.exhaustive_budget),
            "exhaustive",
        )
    return geometry.max_volume_greedy(z, cfg.K, cfg.max_sweeps), "greedy"


def estimate_H_star(
    data: RowNormalizedData,
    cfg: EstimatorConfig,
    candidates: CandidateSet | None = None,
) -> tuple[np.ndarray, VertexSubset, str]:
    """Max-volume K-subset of the hull candidates, as rows of Y*.

    Returns (H*_hat, chosen subset, search label); rows sum to one by
    construction because they are rows of Y*.
    """
    if candidates is None:
        candidates = extract_candidates(data, cfg)
    subset, used = _select_max_volume(candidates.z, cfg)
    return candidates.ystar[list(subset.indices)], subset, used


def estimate_mu_tilde(
    y: ConcentrationMatrix,
    data: RowNormalizedData,
    hstar_hat: np.ndarray,
    cfg: EstimatorConfig,
) -> np.ndarray:
    """Scaled emission means, by the right-inverse identity or the
    projected-weights route.

    "direct": m^T = [col-mean(Y), total] @ R, negatives clipped to 0.
    "projected": W*_raw = [Y* | 1] @ R, clipped below at epsilon_clip,
    rows renormalized, then column means of diag(r) W*.  Both agree (to
    1e-8) on noiseless data whose raw weights need no clipping.
    """
    hstar_hat = np.asarray(hstar_hat, dtype=float)
    rinv = geometry.affine_right_inverse(hstar_hat)
    if cfg.mean_method == "direct":
        ybar = y.values.mean(axis=0)
        m = np.concatenate([ybar, [ybar.sum()]]) @ rinv
        if (m < 0).any():
            warnings.warn(
                "negative mean estimates clipped to zero",
                NegativeMeanWarning,
                stacklevel=2,
            )
            m = np.clip(m, 0.0, None)
        return m
    ystar_aug = np.hstack([data.ystar, np.ones((data.ystar.shape[0], 1))])
    w_raw = ystar_aug @ rinv
    w = np.maximum(w_raw, cfg.epsilon_clip)
    w /= w.sum(axis=1, keepdims=True)
    return (data.row_sums[:, None] * w).mean(axis=0)


def compute_phi(
    m_tilde: np.ndarray,
    hstar_hat: np.ndarray,
    source_labels: tuple[str, ...] = (),
    pollutant_names: tuple[str, ...] = (),
) -> AttributionMatrix:
    """Column-stochastic attribution fractions m_k H*_kj / sum_l m_l H*_lj."""
    m = np.asarray(m_tilde, dtype=float)
    h = np.asarray(hstar_hat, dtype=float)
    if m.ndim != 1 or h.ndim != 2 or m.shape[0] != h.shape[0]:
        raise ValueError("m_tilde must have one entry per profile row")
    if m.min() < 0:
        raise ValueError("m_tilde must be non-negative")
    num = m[:, None] * h
    den = num.sum(axis=0)
    bad = np.flatnonzero(den <= 0.0)
    if bad.size:
        raise ZeroDenominator(int(bad[0]))
    return AttributionMatrix(num / den, source_labels, pollutant_names)


def apportion(y: ConcentrationMatrix, cfg: EstimatorConfig) -> ApportionmentEstimate:
    """Full pipeline from concentrations to the attribution estimate.

    Deterministic given (y, cfg).  Pipeline warnings are collected into
    the diagnostics rather than re-emitted; errors carry the stage name.
    """
    if cfg.K >= y.n_pollutants:
        raise ValueError("K must be smaller than the number of pollutants")
    if y.n < cfg.K + 1:
        raise TooFewCandidates(
            f"need at least K+1={cfg.K + 1} rows, got {y.n}", stage="apportion"
        )

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        with _stage("row_normalize"):
            data = row_normalize(y, cfg.zero_row_policy)
        if cfg.K == 1:
            hstar, subset, used, cands = _single_source_profile(data)
        else:
            with _stage("extract_candidates"):
                cands = extract_candidates(data, cfg)
            with _stage("estimate_H_star"):
                hstar, subset, used = estimate_H_star(data, cfg, cands)
        with _stage("estimate_mu_tilde"):
            m_tilde = estimate_mu_tilde(y, data, hstar, cfg)
        with _stage("compute_phi"):
            phi = compute_phi(m_tilde, hstar, pollutant_names=y.pollutant_names)

    diag = Diagnostics(
        r_b=cands.basis.rank if cands is not None else 0,
        n_hull_vertices=cands.n_hull_vertices if cands is not None else 1,
        n_candidates_after_prune=len(cands.indices) if cands is not None else 1,
        log_volume=subset.log_volume,
        search_used=used,
        warnings=tuple(str(w.message) for w in caught),
    )
    return ApportionmentEstimate(hstar, m_tilde, phi, diag, cands)


def _single_source_profile(data: RowNormalizedData):
    # With one source every normalized row estimates the same profile; the
    # hull machinery needs K >= 2, so use the mean row directly.
    hstar = data.ystar.mean(axis=0)
    hstar = hstar / hstar.sum()
    return hstar[None, :], VertexSubset((0,), 0.0), "direct", None
