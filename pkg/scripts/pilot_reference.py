#!/usr/bin/env python3
"""Straight-line reference pipeline for pinning regression thresholds.

Deliberately self-contained (numpy + scipy only, no package imports): this
is the independent implementation whose pilot medians were used to freeze
the convergence-trend threshold in the acceptance suite.  Keep it frozen.

Usage:
    python scripts/pilot_reference.py SEED [SEED ...]
"""

import math
import sys
from itertools import combinations, permutations

import numpy as np
from scipy.spatial import ConvexHull

N_GRID = (100, 300, 1500, 10000)
REPLICATES = 50
J, K = 8, 3
AR_COEF = 0.8


def profile_matrix(rng, n_cand=10 * K):
    """Row-stochastic K x J profile: maximin K vertices of a random cloud."""
    for _ in range(100):
        cand = rng.exponential(1.0, size=(n_cand, J))
        cand /= cand.sum(axis=1, keepdims=True)
        x = cand[:, :-1]
        xc = x - x.mean(axis=0)
        s = np.linalg.svd(xc, compute_uv=False)
        rank = int((s > s[0] * n_cand * np.finfo(float).eps).sum())
        if rank >= 2:
            vt = np.linalg.svd(xc, full_matrices=False)[2]
            z = xc @ vt[:rank].T
            verts = np.sort(ConvexHull(z).vertices)
        else:
            z = xc[:, :1]
            verts = np.array(sorted({z[:, 0].argmin(), z[:, 0].argmax()}))
        if len(verts) < K:
            continue
        pts = cand[verts]
        best, best_val = None, -1.0
        for combo in combinations(range(len(verts)), K):
            dmin = min(
                np.linalg.norm(pts[a] - pts[b]) for a, b in combinations(combo, 2)
            )
            if dmin > best_val:
                best_val, best = dmin, combo
        h = pts[list(best)]
        sv = np.linalg.svd(h, compute_uv=False)
        if sv[-1] > 1e-10 * sv[0]:
            return h
    raise RuntimeError("no full-rank profile found")


def simulate_ar1(n, rng):
    """Log-AR(1) emissions plus their closed-form population means."""
    mu_g = rng.uniform(-0.5, 0.5, K)
    sig = rng.uniform(0.15, 0.5, K)
    var_stat = sig**2 / (1 - AR_COEF**2)
    g = np.empty((n, K))
    g[0] = rng.normal(mu_g, np.sqrt(var_stat))
    eps = rng.normal(0.0, sig, size=(n - 1, K))
    for i in range(1, n):
        g[i] = mu_g + AR_COEF * (g[i - 1] - mu_g) + eps[i - 1]
    return np.exp(g), np.exp(mu_g + 0.5 * var_stat)


def log_volume(pts, idx):
    edges = pts[idx[1:]] - pts[idx[0]]
    det = np.linalg.det(edges @ edges.T)
    if det <= 0.0:
        return -np.inf
    return 0.5 * math.log(det) - math.lgamma(K)


def greedy_vertices(z):
    """ATGP init + swap sweeps on the projected candidate points."""
    chosen = [int(np.argmax((z**2).sum(axis=1)))]
    for _ in range(K - 1):
        q = np.linalg.qr(z[chosen].T)[0]
        resid = z - (z @ q) @ q.T
        norms = (resid**2).sum(axis=1)
        norms[chosen] = -1.0
        chosen.append(int(np.argmax(norms)))
    current = log_volume(z, chosen)
    for _ in range(20):
        swapped = False
        for slot in range(K):
            for j in range(len(z)):
                trial = list(chosen)
                trial[slot] = j
                lv = log_volume(z, trial)
                if lv > current + 1e-12:
                    chosen, current = trial, lv
                    swapped = True
        if not swapped:
            break
    return chosen


def estimate_phi(y):
    r = y.sum(axis=1)
    ystar = y / r[:, None]
    x = ystar[:, :-1]
    xc = x - x.mean(axis=0)
    u, s, vt = np.linalg.svd(xc, full_matrices=False)
    rank = min(K - 1, int((s > s[0] * len(y) * np.finfo(float).eps).sum()))
    z = xc @ vt[:rank].T
    if rank == 1:
        hull = np.array(sorted({int(z[:, 0].argmin()), int(z[:, 0].argmax())}))
    else:
        hull = np.sort(ConvexHull(z).vertices)
    picked = greedy_vertices(z[hull])
    hs = ystar[hull[picked]]
    haug = np.hstack([hs, np.ones((K, 1))])
    rinv = haug.T @ np.linalg.pinv(haug @ haug.T)
    ybar = y.mean(axis=0)
    m = np.concatenate([ybar, [ybar.sum()]]) @ rinv
    m = np.clip(m, 0.0, None)
    num = m[:, None] * hs
    return num / num.sum(axis=0, keepdims=True)


def nrmse_aligned(phi_true, phi_hat):
    best = np.inf
    for perm in permutations(range(K)):
        cost = float(((phi_true - phi_hat[list(perm)]) ** 2).sum())
        if cost < best:
            best, best_perm = cost, perm
    aligned = phi_hat[list(best_perm)]
    per_row = np.sqrt(((phi_true - aligned) ** 2).mean(axis=1))
    return float((per_row / np.linalg.norm(phi_true, axis=1)).mean())


def run_pilot(master_seed):
    rng = np.random.default_rng(master_seed)
    medians = {}
    for n in N_GRID:
        errs = []
        for _ in range(REPLICATES):
            h = profile_matrix(rng)
            w, mu = simulate_ar1(n, rng)
            y = w @ h
            denom = mu @ h
            phi_true = (mu[:, None] * h) / denom
            errs.append(nrmse_aligned(phi_true, estimate_phi(y)))
        medians[n] = float(np.median(errs))
    return medians


def main(argv):
    seeds = [int(a) for a in argv[1:]] or [1]
    for seed in seeds:
        medians = run_pilot(seed)
        row = "  ".join(f"n={n}: {m:.4f}" for n, m in medians.items())
        print(f"seed {seed}: {row}")


if __name__ == "__main__":
    main(sys.argv)
