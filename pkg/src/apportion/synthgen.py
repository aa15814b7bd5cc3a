"""Ground-truth generators: profile matrices, emission processes, true
attribution matrices.

Reproducibility contract: every generator takes an RngSpec and identical
(master_seed, stream_id) pairs produce bitwise-identical output.  Streams
are Philox counter-based; a study replicate r owns the stream block
starting at r * 2**16, with per-source simulation substreams at offsets
1..K and the profile/parameter draws at offsets 2**15 and 2**15 + 1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import geometry
from .estimator import AttributionMatrix, ConcentrationMatrix
from .exceptions import (
    BudgetExceeded,
    DegenerateCloud,
    GenerationFailed,
    HullDimensionExceeded,
    ZeroDenominator,
)

REPLICATE_STRIDE = 1 << 16
PROFILE_STREAM = 1 << 15
PARAMS_STREAM = (1 << 15) + 1

MAXIMIN_BUDGET = 20_000_000

AR_COEF = 0.8


@dataclass(frozen=True)
class RngSpec:
    """Addressable random stream: (master_seed, stream_id) -> generator."""

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.stream_id,)
        )
        return np.random.Generator(np.random.Philox(seq))

    def substream(self, offset: int) -> "RngSpec":
        return RngSpec(self.master_seed, self.stream_id + offset)


@dataclass(frozen=True)
class LogAR1Params:
    """Per-source log-AR(1) parameters; sigma_eps = 0 gives a constant series."""

    phi: np.ndarray
    mu_g: np.ndarray
    sigma_eps: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        mu = np.asarray(self.mu_g, dtype=float)
        sig = np.asarray(self.sigma_eps, dtype=float)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "mu_g", mu)
        object.__setattr__(self, "sigma_eps", sig)
        if not (phi.shape == mu.shape == sig.shape) or phi.ndim != 1:
            raise ValueError("phi, mu_g, sigma_eps must be equal-length vectors")
        if np.max(np.abs(phi)) >= 1.0:
            raise ValueError("|phi| < 1 required for stationarity")
        if sig.min() < 0.0:
            raise ValueError("sigma_eps must be non-negative")

    @property
    def n_sources(self) -> int:
        return self.phi.shape[0]


@dataclass(frozen=True)
class LognormalMixtureParams:
    """Per-source lognormal mixture: ragged (weights, means, sds) tuples."""

    weights: tuple[np.ndarray, ...]
    means: tuple[np.ndarray, ...]
    sds: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not (len(self.weights) == len(self.means) == len(self.sds)):
            raise ValueError("one (weights, means, sds) triple per source")
        for w, m, s in zip(self.weights, self.means, self.sds):
            if not (w.shape == m.shape == s.shape) or w.ndim != 1 or w.size < 1:
                raise ValueError("component vectors must match in length")
            if abs(w.sum() - 1.0) > 1e-12 or w.min() < 0:
                raise ValueError("weights must lie on the simplex")
            if s.min() < 0.0:
                raise ValueError("component sds must be non-negative")

    @property
    def n_sources(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class GroundTruth:
    """Everything the estimator is trying to recover."""

    W: np.ndarray  # (n, K) emissions
    H: np.ndarray  # (K, J) profiles, full row rank
    mu: np.ndarray  # (K,) population emission means
    phi_true: AttributionMatrix

    def __post_init__(self):
        if self.W.min() < 0 or self.H.min() < 0:
            raise ValueError("W and H must be non-negative")
        sing = np.linalg.svd(self.H, compute_uv=False)
        if sing[-1] <= 1e-10 * sing[0]:
            raise ValueError("H must have full row rank")


def _maximin_subset(points: np.ndarray, k: int) -> tuple[int, ...]:
    """K-subset maximizing the pairwise minimum distance, lexicographic ties."""
    m = len(points)
    if k == 1:
        return (0,)
    if math.comb(m, k) > MAXIMIN_BUDGET:
        raise BudgetExceeded(
            f"{math.comb(m, k)} vertex subsets exceed the maximin budget; "
            "reduce n_candidates"
        )
    diff = points[:, None, :] - points[None, :, :]
    dist2 = (diff**2).sum(axis=2)
    pair_slots = list(itertools.combinations(range(k), 2))
    best_val = -1.0
    best: tuple[int, ...] | None = None
    it = itertools.combinations(range(m), k)
    while True:
        block = list(itertools.islice(it, 1 << 16))
        if not block:
            break
        combos = np.asarray(block, dtype=np.intp)
        score = np.min(
            np.stack([dist2[combos[:, a], combos[:, b]] for a, b in pair_slots]),
            axis=0,
        )
        i = int(np.argmax(score))
        if score[i] > best_val:
            best_val = float(score[i])
            best = tuple(int(c) for c in combos[i])
    assert best is not None
    return best


def generate_profile_matrix(
    J: int, K: int, n_candidates: int, rng: RngSpec
) -> np.ndarray:
    """Row-stochastic K x J profile matrix with well-separated rows.

    Draws iid Exp(1) candidate vectors, normalizes them onto the simplex,
    finds the hull vertices in projected coordinates, and keeps the K
    vertices maximizing the pairwise minimum distance.  Redraws (at most
    100 times) whenever the hull yields fewer than K vertices or the
    selected rows are not full rank.  K = J is allowed (distinct simplex
    points are linearly independent); estimation itself needs K < J.
    """
    if not 1 <= K <= J:
        raise ValueError("need 1 <= K <= J")
    if n_candidates < 10 * K:
        raise ValueError("n_candidates must be at least 10*K")
    gen = rng.generator()
    for _ in range(100):
        cand = gen.standard_exponential((n_candidates, J))
        cand /= cand.sum(axis=1, keepdims=True)
        try:
            _, z = geometry.intrinsic_projection(cand, rank_cap=J - 1)
        except DegenerateCloud:
            continue
        try:
            verts = geometry.hull_vertices(z)
        except HullDimensionExceeded:
            verts = np.arange(n_candidates, dtype=np.intp)
        except DegenerateCloud:
            continue
        if verts.size < K:
            continue
        pick = _maximin_subset(z[verts], K)
        h = cand[verts[list(pick)]]
        sing = np.linalg.svd(h, compute_uv=False)
        if sing[-1] > 1e-10 * sing[0]:
            return h
    raise GenerationFailed("no full-row-rank profile matrix in 100 attempts")


def simulate_log_ar1(n: int, params: LogAR1Params, rng: RngSpec) -> np.ndarray:
    """Stationary log-AR(1) emissions, one Philox substream per source.

    g_1k is drawn from the stationary marginal and the recursion
    g_ik = mu_k + phi_k (g_{i-1,k} - mu_k) + eps_ik is run by linear
    filtering; emissions are exp(g).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k_sources = params.n_sources
    out = np.empty((n, k_sources))
    for k in range(k_sources):
        gen = rng.substream(k + 1).generator()
        phi = float(params.phi[k])
        sigma = float(params.sigma_eps[k])
        mu = float(params.mu_g[k])
        start = gen.normal(0.0, sigma / math.sqrt(1.0 - phi * phi))
        innov = gen.normal(0.0, sigma, size=n - 1)
        driven = np.concatenate(([start], innov))
        centered = lfilter([1.0], [1.0, -phi], driven)
        out[:, k] = np.exp(mu + centered)
    return out


def population_mean_log_ar1(params: LogAR1Params) -> np.ndarray:
    """Closed-form lognormal mean exp(mu + 0.5 sigma^2 / (1 - phi^2))."""
    var_stat = params.sigma_eps**2 / (1.0 - params.phi**2)
    return np.exp(params.mu_g + 0.5 * var_stat)


def draw_ar1_params(K: int, rng: RngSpec) -> LogAR1Params:
    """AR coefficient fixed at 0.8; mu ~ U(-0.5, 0.5); sigma ~ U(0.15, 0.5)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    gen = rng.generator()
    mu_g = gen.uniform(-0.5, 0.5, K)
    sigma = gen.uniform(0.15, 0.5, K)
    return LogAR1Params(np.full(K, AR_COEF), mu_g, sigma)


def simulate_lognormal_mixture(
    n: int, params: LognormalMixtureParams, rng: RngSpec
) -> np.ndarray:
    """Iid rows; per source, log W is a finite normal mixture."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k_sources = params.n_sources
    out = np.empty((n, k_sources))
    for k in range(k_sources):
        gen = rng.substream(k + 1).generator()
        comps = gen.choice(params.weights[k].size, size=n, p=params.weights[k])
        logw = gen.normal(params.means[k][comps], params.sds[k][comps])
        out[:, k] = np.exp(logw)
    return out


def population_mean_mixture(params: LognormalMixtureParams) -> np.ndarray:
    """Mixture of lognormal means: sum_c pi_c exp(mu_c + sigma_c^2 / 2)."""
    return np.array(
        [
            float(np.sum(w * np.exp(m + 0.5 * s**2)))
            for w, m, s in zip(params.weights, params.means, params.sds)
        ]
    )


def draw_mixture_params(K: int, rng: RngSpec) -> LognormalMixtureParams:
    """C_k ~ Pois(3)+1; weights ~ Dirichlet(1); mu ~ U(-1,1); sd ~ U(0.1,1)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    gen = rng.generator()
    weights, means, sds = [], [], []
    for _ in range(K):
        n_comp = int(gen.poisson(3.0)) + 1
        weights.append(gen.dirichlet(np.ones(n_comp)))
        means.append(gen.uniform(-1.0, 1.0, n_comp))
        sds.append(gen.uniform(0.1, 1.0, n_comp))
    return LognormalMixtureParams(tuple(weights), tuple(means), tuple(sds))


def true_phi(mu: np.ndarray, H: np.ndarray) -> AttributionMatrix:
    """Attribution fractions mu_k H_kj / sum_l mu_l H_lj from ground truth."""
    mu = np.asarray(mu, dtype=float)
    H = np.asarray(H, dtype=float)
    if mu.ndim != 1 or H.ndim != 2 or mu.shape[0] != H.shape[0]:
        raise ValueError("mu must have one entry per row of H")
    if mu.min() < 0 or mu.max() <= 0:
        raise ValueError("mu must be non-negative with a positive entry")
    scaled = mu[:, None] * H
    den = scaled.sum(axis=0)
    bad = np.flatnonzero(den <= 0.0)
    if bad.size:
        raise ZeroDenominator(int(bad[0]))
    return AttributionMatrix(scaled / den)


def make_ground_truth(
    n: int,
    J: int,
    K: int,
    process: str,
    rng: RngSpec,
    n_candidates: int | None = None,
    plant_corners: bool = False,
) -> tuple[ConcentrationMatrix, GroundTruth]:
    """Draw (H, params, W), return Y = W H plus the exact ground truth.

    ``plant_corners`` appends K emission rows mu_k e_k so the data contains
    one exactly pure record per source (used by exact-recovery tests).
    """
    if not 1 <= K < J:
        raise ValueError("need 1 <= K < J")
    if n_candidates is None:
        n_candidates = 10 * K
    H = generate_profile_matrix(J, K, n_candidates, rng.substream(PROFILE_STREAM))
    if process == "ar1":
        params = draw_ar1_params(K, rng.substream(PARAMS_STREAM))
        W = simulate_log_ar1(n, params, rng)
        mu = population_mean_log_ar1(params)
    elif process == "mixture":
        params = draw_mixture_params(K, rng.substream(PARAMS_STREAM))
        W = simulate_lognormal_mixture(n, params, rng)
        mu = population_mean_mixture(params)
    else:
        raise ValueError("process must be 'ar1' or 'mixture'")
    if plant_corners:
        W = np.vstack([W, np.diag(mu)])
    truth = GroundTruth(W=W, H=H, mu=mu, phi_true=true_phi(mu, H))
    return ConcentrationMatrix(W @ H), truth
